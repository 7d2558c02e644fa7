#include "scalesplit/error.hpp"

namespace scalesplit {

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Usage: return 2;
        case ErrorKind::Path: return 3;
        case ErrorKind::Format: return 4;
        case ErrorKind::MaskUnsupported: return 5;
        case ErrorKind::Degenerate: return 6;
        case ErrorKind::Extent: return 7;
        case ErrorKind::Divergence: return 8;
        case ErrorKind::SpreadUndefined: return 9;
        case ErrorKind::Internal: return 1;
    }
    return 1;
}

std::string_view kind_name(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Usage: return "usage";
        case ErrorKind::Path: return "path";
        case ErrorKind::Format: return "format";
        case ErrorKind::MaskUnsupported: return "mask-unsupported";
        case ErrorKind::Degenerate: return "degenerate";
        case ErrorKind::Extent: return "extent";
        case ErrorKind::Divergence: return "divergence";
        case ErrorKind::SpreadUndefined: return "spread-undefined";
        case ErrorKind::Internal: return "internal";
    }
    return "internal";
}

}  // namespace scalesplit
