#pragma once

// Data-driven cutoff choice: the shortest wavelength at which a linear
// domain classifier can no longer tell source from target low bands.

#include "scalesplit/fields.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace scalesplit {

struct CutoffOptions {
    double threshold = 0.55;       // accuracy at or below which domains count as indistinguishable
    double ridge = 1e-2;           // L2 penalty on standardized features
    double validation_fraction = 0.5;
    std::size_t min_frames = 20;
    std::size_t n_bins = 0;        // spectrum bins to the corner wavenumber; 0 = one per fundamental
    std::uint64_t seed = 0;
};

struct CutoffScan {
    std::vector<double> wavelengths_km;  // descending
    std::vector<double> accuracies;
    std::vector<std::vector<std::uint8_t>> correct;  // per candidate, per held-out frame
    std::vector<std::size_t> n_features;
    double selected_km = 0.0;
    bool flagged = false;  // no candidate met the threshold
};

/// Both stacks on one unmasked grid with the same variables.
CutoffScan select_cutoff(const FieldStack& source, const FieldStack& target, std::vector<double> candidates_km,
                         const CutoffOptions& opts = {});

/// Per-frame features for one candidate: log power of the low-band spectrum
/// bins, variables concatenated. Rows are frames.
std::vector<std::vector<double>> cutoff_features(const FieldStack& stack, double wavelength_km, std::size_t n_bins);

/// Percentile bootstrap band (2.5%, 97.5%) of the mean of a 0/1 vector.
std::pair<double, double> bootstrap_band(const std::vector<std::uint8_t>& correct, std::size_t n_boot,
                                         std::uint64_t seed);

std::string scan_csv(const CutoffScan& scan);

}  // namespace scalesplit
