#include "scalesplit/separator.hpp"

#include "scalesplit/blur.hpp"
#include "scalesplit/spectral.hpp"

namespace scalesplit {

Decomposition decompose(const FieldStack& stack, const Separator& sep) {
    if (const auto* cut = std::get_if<SpectralCutoff>(&sep)) return lowpass(stack, *cut);
    return blur_split(stack, std::get<BlurSpec>(sep));
}

FieldStack shared_component(const FieldStack& stack, const Separator& sep) {
    if (const auto* cut = std::get_if<SpectralCutoff>(&sep)) return lowpass(stack, *cut).low;
    return gaussian_blur_masked(stack, std::get<BlurSpec>(sep));
}

FieldStack filtered_noise(const FieldStack& shape, const Separator& sep, std::uint64_t seed) {
    if (const auto* cut = std::get_if<SpectralCutoff>(&sep)) {
        require_unmasked(shape, "Fourier noise filtering");
        return lowpass(white_noise(shape, seed), *cut).high;
    }
    return highpass_noise(shape, std::get<BlurSpec>(sep), seed);
}

void validate_separator(const Separator& sep, const FieldStack& stack) {
    if (const auto* cut = std::get_if<SpectralCutoff>(&sep)) {
        require_unmasked(stack, "the Fourier separator");
        cut->validate(stack.grid());
    } else {
        std::get<BlurSpec>(sep).validate(stack.grid());
    }
}

}  // namespace scalesplit
