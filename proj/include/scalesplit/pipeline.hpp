#pragma once

// Run configuration and the subcommands behind the scalesplit tool.

#include "scalesplit/cdft.hpp"
#include "scalesplit/conv_model.hpp"
#include "scalesplit/cutoff_select.hpp"
#include "scalesplit/decomposition.hpp"
#include "scalesplit/flow_match.hpp"
#include "scalesplit/kv.hpp"
#include "scalesplit/metrics.hpp"
#include "scalesplit/pseudo_pairs.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace scalesplit {

inline constexpr const char* kVersion = "0.1.0";

struct RunPaths {
    std::string source_train;
    std::string source_eval;
    std::string target_train;
    std::string target_eval;
    std::string altitude;  // optional WFLD, first variable of the first frame
};

/// Everything a run needs. Built from flat key=value text; every field has a
/// key (see to_kv()) so a manifest can be fed back as a config.
struct RunConfig {
    RunPaths paths;

    std::optional<double> wavelength_km;  // Fourier separator
    std::optional<double> blur_sigma_km;  // blur separator
    double blur_truncate = 4.0;

    std::vector<double> cutoff_candidates_km;
    bool auto_cutoff = false;  // train picks the wavelength with the classifier scan
    CutoffOptions cutoff;

    std::string decompose_input;     // default: paths.target_train
    std::vector<double> bands_km;    // band mode when non-empty

    NormScheme norm_scheme = NormScheme::spatial;

    std::vector<std::size_t> hidden{16, 16};
    Activation activation = Activation::tanh;
    double init_gain = 1.0;

    TrainConfig train;
    std::size_t noise_draws = 1;
    double pair_noise = 1.0;
    std::size_t max_frames = 0;  // 0 = all training frames

    EnsembleSpec ensemble;

    MetricConfig metrics;
    std::string ovm = "auto";  // auto | on | off
    std::optional<Region> ks_region;
    CdftOptions cdft;

    std::vector<double> a_grid{0.8, 1.0, 1.2};
    std::size_t calibrate_max_frames = 0;

    std::string scenario = "shared_largescale";
    std::size_t synth_n_times = 0;
    int synth_step_days = 0;
    std::string synth_dir;  // default: <out>/data

    std::string out = "out";
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string checkpoint;  // default: <out>/checkpoints/model.wfmd
    std::string method;      // evaluate input, default: <out>/members/mean.wfld

    /// Unknown keys are a usage error; manifest.* and seed.* are ignored.
    static RunConfig from_kv(const KeyValues& kv);
    KeyValues to_kv() const;

    /// Throws Usage unless exactly one separator is configured.
    Separator separator() const;

    std::string checkpoint_path() const;
    std::string method_path() const;
    std::string synth_path() const;
};

/// Config file (may be empty) with overrides applied on top; overrides win.
RunConfig load_run_config(const std::string& path, const KeyValues& overrides);

/// FNV-1a 64 of the resolved config, excluding run.out and run.threads.
std::string config_hash(const RunConfig& cfg);

/// Resolved config plus command, hash, derived seeds and format versions.
KeyValues manifest(const RunConfig& cfg, const std::string& command);

/// Regrid a raw stack onto `grid`: spectral interpolation for the Fourier
/// separator when possible, bilinear otherwise; then apply `mask`.
FieldStack regrid_to(const FieldStack& stack, const GridSpec& grid, const std::vector<std::uint8_t>& mask,
                     const Separator& sep);

void cmd_decompose(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_generate(const RunConfig& cfg);
void cmd_evaluate(const RunConfig& cfg);
void cmd_calibrate(const RunConfig& cfg);
void cmd_synth(const RunConfig& cfg);

/// Dispatch by subcommand name and write <out>/manifest.txt on success.
void run_command(const std::string& command, const RunConfig& cfg);

}  // namespace scalesplit
