#pragma once

// Dispatch over the two scale separators (sharp Fourier cutoff, masked blur).

#include "scalesplit/decomposition.hpp"
#include "scalesplit/fields.hpp"

#include <cstdint>

namespace scalesplit {

Decomposition decompose(const FieldStack& stack, const Separator& sep);

/// Large-scale (shared) component under the separator.
FieldStack shared_component(const FieldStack& stack, const Separator& sep);

/// Standard normal noise with its shared component removed: the Fourier
/// high band of white noise, or eps - blur(eps).
FieldStack filtered_noise(const FieldStack& shape, const Separator& sep, std::uint64_t seed);

/// Throws unless the separator can run on the stack's grid and mask.
void validate_separator(const Separator& sep, const FieldStack& stack);

}  // namespace scalesplit
