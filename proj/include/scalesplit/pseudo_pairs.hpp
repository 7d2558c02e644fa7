#pragma once

// Normalization and pseudo-pair construction: the training-data factory.

#include "scalesplit/decomposition.hpp"
#include "scalesplit/fields.hpp"
#include "scalesplit/kv.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace scalesplit {

struct VarStats {
    double mean = 0.0;
    double std = 1.0;
};

/// Spatial-temporal scalar statistics per variable name.
using DomainStats = std::map<std::string, VarStats>;

enum class NormScheme {
    spatial,   // one mean/std per variable for the whole domain
    per_cell,  // target fields use per-cell temporal mean/std
};

struct NormalizationParams {
    DomainStats source;
    DomainStats target;
    MomentMaps target_cells;  // per-cell target moments, variables in target order
    std::vector<std::string> target_variables;
    NormScheme scheme = NormScheme::spatial;

    KeyValues to_kv() const;  // scalars only
    static NormalizationParams from_kv(const KeyValues& kv);
};

/// Scalar statistics over all times and valid cells (population std).
DomainStats domain_stats(const FieldStack& stack);

/// Fit on the training period. Variables absent from either stack are
/// skipped; zero-variance variables are rejected.
NormalizationParams fit_normalization(const FieldStack& train_source, const FieldStack& train_target,
                                      NormScheme scheme = NormScheme::spatial);

FieldStack normalize(const FieldStack& stack, const DomainStats& stats);
FieldStack denormalize(const FieldStack& stack, const DomainStats& stats);
/// Per-cell standardization; cells with zero std map to 0.
FieldStack normalize_per_cell(const FieldStack& stack, const MomentMaps& maps);
FieldStack denormalize_per_cell(const FieldStack& stack, const MomentMaps& maps);

/// Target-domain transforms following params.scheme.
FieldStack normalize_target(const FieldStack& stack, const NormalizationParams& params);
FieldStack denormalize_target(const FieldStack& stack, const NormalizationParams& params);

/// One training sample: conditioning = shared + filtered noise, target = the
/// original field. `shared` is kept so the generator can be conditioned on
/// the noise-free large scales.
struct PseudoPair {
    FieldStack conditioning;
    FieldStack shared;
    FieldStack target;
    Separator separator;
    std::uint64_t seed = 0;
};

/// Source of training pairs, regenerated per epoch.
class PairSource {
public:
    virtual ~PairSource() = default;
    virtual std::vector<PseudoPair> epoch(std::size_t e) const = 0;
};

/// Builds single-frame pseudo-pairs from a normalized target stack. Noise for
/// (epoch, time, draw) uses derive_seed(seed, epoch, time, draw), so every
/// epoch sees fresh noise unless `fresh_noise` is off.
class PairFactory : public PairSource {
public:
    PairFactory(const FieldStack& target, Separator separator, std::size_t n_noise_draws, std::uint64_t seed,
                double noise_amplitude = 1.0, bool fresh_noise = true);

    std::vector<PseudoPair> epoch(std::size_t e) const override;
    std::size_t pairs_per_epoch() const { return target_.n_times() * n_draws_; }

private:
    FieldStack target_;
    FieldStack shared_;
    Separator separator_;
    std::size_t n_draws_;
    std::uint64_t seed_;
    double amplitude_;
    bool fresh_noise_;
};

/// A fixed list of pairs, identical every epoch.
class FixedPairs : public PairSource {
public:
    explicit FixedPairs(std::vector<PseudoPair> pairs) : pairs_(std::move(pairs)) {}
    std::vector<PseudoPair> epoch(std::size_t) const override { return pairs_; }

private:
    std::vector<PseudoPair> pairs_;
};

std::vector<PseudoPair> make_pairs(const FieldStack& target, const Separator& separator, std::size_t n_noise_draws,
                                   std::uint64_t seed, double noise_amplitude = 1.0);

/// Inference-time conditioning: regrid a normalized source onto the target
/// grid (spectral for the Fourier separator, bilinear for blur), extract the
/// shared component, add noise_scale * filtered noise. `target_mask`, when
/// given, is applied after regridding.
FieldStack project_source(const FieldStack& source, const Separator& separator, const GridSpec& target_grid,
                          double noise_scale, std::uint64_t seed,
                          const std::optional<std::vector<std::uint8_t>>& target_mask = std::nullopt);

}  // namespace scalesplit
