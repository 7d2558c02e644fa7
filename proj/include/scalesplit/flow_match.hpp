#pragma once

// Conditional flow matching: loss, SGD training, Euler sampler, ensembles,
// WFMD checkpoints.

#include "scalesplit/conv_model.hpp"
#include "scalesplit/decomposition.hpp"
#include "scalesplit/fields.hpp"
#include "scalesplit/kv.hpp"
#include "scalesplit/pseudo_pairs.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace scalesplit {

FrameGeometry frame_geometry(const FieldStack& stack);

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

/// Linear-interpolant flow-matching loss on one single-frame pair:
/// x_t = (1-t) x0 + t x1 with x0 = pair.conditioning, x1 = pair.target,
/// regression target x1 - x0; the model is conditioned on pair.shared.
LossGrad fm_loss(const ConvNet& model, const PseudoPair& pair, double t);

/// Central finite-difference check of fm_loss. Checks `n_check` parameters
/// picked by `seed` (all of them when n_check is 0) and returns the largest
/// |a - n| / max(|a|, |n|, 1e-8).
double gradient_check(const ConvNet& model, const PseudoPair& pair, double t, double step = 1e-4,
                      std::size_t n_check = 0, std::uint64_t seed = 0);

struct TrainConfig {
    double learning_rate = 1e-2;
    std::size_t batch_size = 8;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    double momentum = 0.9;  // 0 gives plain SGD
    bool gradient_check = false;
    bool resample_t = true;  // new t per pair each epoch
    double grad_clip = 0.0;  // global-norm clip, 0 disables

    void validate() const;
};

struct TrainResult {
    std::vector<double> loss_curve;  // mean loss per epoch
    double gradient_error = 0.0;     // set when cfg.gradient_check
};

/// Minibatch SGD (optionally with momentum). Deterministic given cfg.seed.
TrainResult train(ConvNet& model, const PairSource& pairs, const TrainConfig& cfg);

std::string loss_csv(const std::vector<double>& curve);

struct EnsembleSpec {
    std::size_t n_members = 10;
    double noise_scale = 1.1;
    std::size_t ode_steps = 50;
    std::uint64_t seed = 0;
    std::size_t threads = 1;  // members are sampled in parallel; output does not depend on it

    void validate() const;
};

using Ensemble = std::vector<FieldStack>;

/// Euler integration of dx/dt = v(x, t, condition) from x(0) = condition +
/// a * filtered noise. `condition` is normalized and on the target grid.
/// When `norm` is given, members are denormalized with the target scheme.
Ensemble sample(const VelocityField& model, const FieldStack& condition, const Separator& separator,
                const EnsembleSpec& spec, const NormalizationParams* norm = nullptr);

struct EnsembleStats {
    FieldStack mean;
    FieldStack spread;  // unbiased (n-1) standard deviation
};

/// Throws SpreadUndefined for a single member.
EnsembleStats ensemble_stats(const Ensemble& ens);

/// Model plus free-form metadata (separator, normalization, run info).
struct Checkpoint {
    ConvNet model;
    KeyValues meta;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void write_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace scalesplit
