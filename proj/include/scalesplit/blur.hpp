#pragma once

// Gaussian-blur scale separation that tolerates masked (irregular) domains.

#include "scalesplit/decomposition.hpp"
#include "scalesplit/fields.hpp"

#include <cstdint>
#include <vector>

namespace scalesplit {

/// Truncated, unit-sum 1-D Gaussian taps for a width in cells; radius is
/// floor(truncate * sigma + 0.5).
std::vector<double> gaussian_taps(double sigma_cells, double truncate);

/// Normalized masked convolution blur(x*m) / blur(m) on valid cells. Cells
/// outside the grid count as missing.
FieldStack gaussian_blur_masked(const FieldStack& stack, const BlurSpec& spec);

/// low = blurred field, high = input - low on valid cells.
Decomposition blur_split(const FieldStack& stack, const BlurSpec& spec);

/// Standard normal noise with the layout of `shape`, minus its own masked
/// blur. Deterministic in (seed, shape, spec).
FieldStack highpass_noise(const FieldStack& shape, const BlurSpec& spec, std::uint64_t seed);

/// Standard normal draws with the layout of `shape` (NaN on masked cells).
/// Frame (t, v) uses stream derive_seed(seed, t, v).
FieldStack white_noise(const FieldStack& shape, std::uint64_t seed);

}  // namespace scalesplit
