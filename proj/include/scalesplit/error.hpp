#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scalesplit {

/// Error classes. Each maps to a stable process exit code (see exit_code()).
enum class ErrorKind {
    Usage,            // bad flags, bad config values
    Path,             // missing or unreadable file
    Format,           // malformed WFLD/WFMD/config content
    MaskUnsupported,  // Fourier operation on a masked domain
    Degenerate,       // too few samples, zero variance, empty mask
    Extent,           // grids do not line up
    Divergence,       // non-finite loss or ODE state
    SpreadUndefined,  // ensemble spread requested with one member
    Internal,
};

int exit_code(ErrorKind kind) noexcept;
std::string_view kind_name(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Format error carrying the byte offset where parsing failed.
class FormatError : public Error {
public:
    FormatError(std::size_t offset, const std::string& what)
        : Error(ErrorKind::Format, what + " (at byte " + std::to_string(offset) + ")"), offset_(offset), detail_(what) {}
    std::size_t offset() const noexcept { return offset_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::size_t offset_;
    std::string detail_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace scalesplit
