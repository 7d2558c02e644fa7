#include "scalesplit/pipeline.hpp"

#include "scalesplit/calibration.hpp"
#include "scalesplit/error.hpp"
#include "scalesplit/rng.hpp"
#include "scalesplit/separator.hpp"
#include "scalesplit/spectral.hpp"
#include "scalesplit/synth.hpp"
#include "scalesplit/wfld.hpp"

#include <cstdio>
#include <filesystem>
#include <set>
#include <variant>

namespace scalesplit {

namespace fs = std::filesystem;

namespace {

// Sub-seeds of the global run seed.
enum SeedKey : std::uint64_t { kTrainSeed = 1, kInitSeed, kPairSeed, kEnsembleSeed, kCutoffSeed, kRankSeed, kMetricSeed };

class KeyReader {
public:
    explicit KeyReader(const KeyValues& kv) : kv_(kv) {}

    std::optional<std::string> take(const std::string& key) {
        used_.insert(key);
        return kv_.get(key);
    }
    void str(const std::string& key, std::string& out) {
        if (auto v = take(key)) out = *v;
    }
    void num(const std::string& key, double& out) {
        if (auto v = take(key)) out = parse_double(*v, key);
    }
    void num(const std::string& key, std::optional<double>& out) {
        if (auto v = take(key); v && !trim(*v).empty()) out = parse_double(*v, key);
    }
    void count(const std::string& key, std::size_t& out) {
        if (auto v = take(key)) {
            const auto i = parse_int(*v, key);
            if (i < 0) fail(ErrorKind::Usage, key + " must be non-negative");
            out = static_cast<std::size_t>(i);
        }
    }
    void integer(const std::string& key, int& out) {
        if (auto v = take(key)) out = static_cast<int>(parse_int(*v, key));
    }
    void flag(const std::string& key, bool& out) {
        if (auto v = take(key)) {
            if (*v == "true" || *v == "1" || *v == "on")
                out = true;
            else if (*v == "false" || *v == "0" || *v == "off")
                out = false;
            else
                fail(ErrorKind::Usage, key + " must be true or false, got '" + *v + "'");
        }
    }
    void list(const std::string& key, std::vector<double>& out) {
        if (auto v = take(key)) {
            out.clear();
            for (const auto& part : split(*v, ','))
                if (!trim(part).empty()) out.push_back(parse_double(part, key));
        }
    }
    void period(const std::string& key, std::optional<Period>& out) {
        if (auto v = take(key); v && !trim(*v).empty()) {
            const auto parts = split(*v, ',');
            if (parts.size() != 2) fail(ErrorKind::Usage, key + " must be START,END dates");
            out = Period{parse_date(std::string(trim(parts[0]))), parse_date(std::string(trim(parts[1])))};
        }
    }

    void reject_unknown() const {
        for (const auto& [key, value] : kv_.entries()) {
            if (used_.count(key) || key.rfind("manifest.", 0) == 0 || key.rfind("seed.", 0) == 0) continue;
            fail(ErrorKind::Usage, "unknown config key '" + key + "'");
        }
    }

private:
    const KeyValues& kv_;
    std::set<std::string> used_;
};

std::string join_numbers(const std::vector<double>& xs) {
    std::vector<std::string> parts;
    for (double x : xs) parts.push_back(format_double(x));
    return join(parts, ',');
}

std::string require_path(const std::string& path, const std::string& key) {
    if (path.empty()) fail(ErrorKind::Usage, key + " is not set");
    return path;
}

std::string out_path(const RunConfig& cfg, const std::string& sub, const std::string& name) {
    const fs::path dir = fs::path(cfg.out) / sub;
    fs::create_directories(dir);
    return (dir / name).string();
}

FieldStack first_frames(const FieldStack& stack, std::size_t max_frames) {
    if (max_frames == 0 || stack.n_times() <= max_frames) return stack;
    std::vector<std::size_t> idx(max_frames);
    for (std::size_t i = 0; i < max_frames; ++i) idx[i] = i * stack.n_times() / max_frames;
    return stack.select_times(idx);
}

KeyValues separator_kv(const Separator& sep) {
    KeyValues kv;
    if (const auto* f = std::get_if<SpectralCutoff>(&sep)) {
        kv.set("separator.kind", std::string("fourier"));
        kv.set("separator.wavelength_km", f->wavelength_km);
    } else {
        const auto& b = std::get<BlurSpec>(sep);
        kv.set("separator.kind", std::string("blur"));
        kv.set("separator.blur_sigma_km", b.sigma_km);
        kv.set("separator.truncate", b.truncate);
    }
    return kv;
}

Separator separator_from(const KeyValues& kv) {
    const auto kind = kv.require("separator.kind");
    if (kind == "fourier") return SpectralCutoff{kv.number("separator.wavelength_km")};
    if (kind == "blur") return BlurSpec{kv.number("separator.blur_sigma_km"), kv.number_or("separator.truncate", 4.0)};
    fail(ErrorKind::Format, "unknown separator kind '" + kind + "'");
}

KeyValues with_prefix(const KeyValues& kv, const std::string& prefix) {
    KeyValues out;
    for (const auto& [k, v] : kv.entries()) out.set(prefix + k, v);
    return out;
}

KeyValues strip_prefix(const KeyValues& kv, const std::string& prefix) {
    KeyValues out;
    for (const auto& [k, v] : kv.entries())
        if (k.rfind(prefix, 0) == 0) out.set(k.substr(prefix.size()), v);
    return out;
}

// Per-cell target moments as a two-frame stack: frame 0 mean, frame 1 std.
FieldStack moments_stack(const NormalizationParams& p, const FieldStack& like) {
    FieldStack s(like.grid(), p.target_variables, {0, 1});
    for (std::size_t v = 0; v < s.n_vars(); ++v) {
        auto m = s.slice(0, v), d = s.slice(1, v);
        for (std::size_t c = 0; c < s.n_cells(); ++c) {
            m[c] = p.target_cells.mean[v][c];
            d[c] = p.target_cells.std[v][c];
        }
    }
    return s;
}

MomentMaps moments_from(const FieldStack& s) {
    if (s.n_times() != 2) fail(ErrorKind::Format, "moment file must hold two frames");
    MomentMaps m;
    for (std::size_t v = 0; v < s.n_vars(); ++v) {
        const auto a = s.slice(0, v), b = s.slice(1, v);
        m.mean.emplace_back(a.begin(), a.end());
        m.std.emplace_back(b.begin(), b.end());
    }
    return m;
}

struct LoadedModel {
    Checkpoint ckpt;
    Separator separator;
    NormalizationParams norm;
};

LoadedModel load_model(const RunConfig& cfg) {
    LoadedModel lm{read_checkpoint(cfg.checkpoint_path()), SpectralCutoff{}, {}};
    lm.separator = separator_from(lm.ckpt.meta);
    lm.norm = NormalizationParams::from_kv(strip_prefix(lm.ckpt.meta, "norm."));
    if (lm.norm.scheme == NormScheme::per_cell)
        lm.norm.target_cells =
            moments_from(read_fieldstack((fs::path(cfg.checkpoint_path()).parent_path() / "target_moments.wfld").string()));
    return lm;
}

std::string member_name(std::size_t m) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "member_%02zu.wfld", m);
    return buf;
}

void write_spectra(const RunConfig& cfg, const FieldStack& stack, const std::string& name) {
    const auto spectra = isotropic_spectra(stack, cfg.metrics.spectrum_bins);
    for (std::size_t v = 0; v < spectra.size(); ++v)
        write_file(out_path(cfg, "decomposed", "spectrum_" + name + "_" + stack.variables()[v] + ".csv"),
                   spectrum_csv(spectra[v]));
}

}  // namespace

RunConfig RunConfig::from_kv(const KeyValues& kv) {
    RunConfig c;
    KeyReader r(kv);
    r.str("paths.source_train", c.paths.source_train);
    r.str("paths.source_eval", c.paths.source_eval);
    r.str("paths.target_train", c.paths.target_train);
    r.str("paths.target_eval", c.paths.target_eval);
    r.str("paths.altitude", c.paths.altitude);

    r.num("separator.wavelength_km", c.wavelength_km);
    r.num("separator.blur_sigma_km", c.blur_sigma_km);
    r.num("separator.truncate", c.blur_truncate);

    r.list("cutoff.candidates_km", c.cutoff_candidates_km);
    r.flag("cutoff.auto", c.auto_cutoff);
    r.num("cutoff.threshold", c.cutoff.threshold);
    r.num("cutoff.ridge", c.cutoff.ridge);
    r.num("cutoff.validation_fraction", c.cutoff.validation_fraction);
    r.count("cutoff.min_frames", c.cutoff.min_frames);
    r.count("cutoff.n_bins", c.cutoff.n_bins);

    r.str("decompose.input", c.decompose_input);
    r.list("decompose.bands_km", c.bands_km);

    std::string scheme = c.norm_scheme == NormScheme::spatial ? "spatial" : "per_cell";
    r.str("norm.scheme", scheme);
    if (scheme == "spatial")
        c.norm_scheme = NormScheme::spatial;
    else if (scheme == "per_cell")
        c.norm_scheme = NormScheme::per_cell;
    else
        fail(ErrorKind::Usage, "norm.scheme must be spatial or per_cell");

    if (auto h = r.take("model.hidden")) {
        c.hidden.clear();
        for (const auto& part : split(*h, ',')) {
            if (trim(part).empty()) continue;
            const auto w = parse_int(part, "model.hidden");
            if (w < 1) fail(ErrorKind::Usage, "model.hidden widths must be positive");
            c.hidden.push_back(static_cast<std::size_t>(w));
        }
    }
    std::string act = c.activation == Activation::tanh ? "tanh" : "identity";
    r.str("model.activation", act);
    if (act == "tanh")
        c.activation = Activation::tanh;
    else if (act == "identity")
        c.activation = Activation::identity;
    else
        fail(ErrorKind::Usage, "model.activation must be tanh or identity");
    r.num("model.init_gain", c.init_gain);

    r.count("train.epochs", c.train.epochs);
    r.num("train.learning_rate", c.train.learning_rate);
    r.count("train.batch_size", c.train.batch_size);
    r.num("train.momentum", c.train.momentum);
    r.num("train.grad_clip", c.train.grad_clip);
    r.flag("train.gradient_check", c.train.gradient_check);
    r.flag("train.resample_t", c.train.resample_t);
    r.count("train.noise_draws", c.noise_draws);
    r.num("train.noise_amplitude", c.pair_noise);
    r.count("train.max_frames", c.max_frames);

    r.count("ensemble.members", c.ensemble.n_members);
    r.num("ensemble.noise_scale", c.ensemble.noise_scale);
    r.count("ensemble.ode_steps", c.ensemble.ode_steps);

    r.num("metrics.k_max", c.metrics.k_max);
    r.num("metrics.h_max_km", c.metrics.h_max_km);
    r.num("metrics.h_bin_km", c.metrics.h_bin_km);
    r.num("metrics.theta_alt", c.metrics.theta_alt);
    r.num("metrics.q", c.metrics.q);
    r.period("metrics.hist", c.metrics.hist);
    r.period("metrics.fut", c.metrics.fut);
    r.count("metrics.spectrum_bins", c.metrics.spectrum_bins);
    r.count("metrics.spearman_max_cells", c.metrics.spearman_max_cells);
    r.count("metrics.spearman_subsample", c.metrics.spearman_subsample);
    r.count("metrics.min_extreme_times", c.metrics.min_extreme_times);
    r.str("metrics.ovm", c.ovm);
    if (c.ovm != "auto" && c.ovm != "on" && c.ovm != "off") fail(ErrorKind::Usage, "metrics.ovm must be auto, on or off");
    if (auto v = r.take("metrics.ks_region"); v && !trim(*v).empty()) {
        const auto parts = split(*v, ',');
        if (parts.size() != 4) fail(ErrorKind::Usage, "metrics.ks_region must be LAT_MIN,LAT_MAX,LON_MIN,LON_MAX");
        c.ks_region = Region{parse_double(parts[0], "metrics.ks_region"), parse_double(parts[1], "metrics.ks_region"),
                             parse_double(parts[2], "metrics.ks_region"), parse_double(parts[3], "metrics.ks_region")};
    }
    r.flag("cdft.monthly", c.cdft.monthly);
    r.count("cdft.min_samples", c.cdft.min_samples);

    r.list("calibrate.a_grid", c.a_grid);
    r.count("calibrate.max_frames", c.calibrate_max_frames);

    r.str("synth.scenario", c.scenario);
    r.count("synth.n_times", c.synth_n_times);
    r.integer("synth.step_days", c.synth_step_days);
    r.str("synth.dir", c.synth_dir);

    r.str("run.out", c.out);
    if (auto v = r.take("run.seed")) {
        const auto s = std::string(trim(*v));
        try {
            std::size_t used = 0;
            c.seed = std::stoull(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
        } catch (const std::exception&) {
            fail(ErrorKind::Usage, "run.seed must be an unsigned 64-bit integer, got '" + s + "'");
        }
    }
    r.count("run.threads", c.threads);
    if (c.threads == 0) fail(ErrorKind::Usage, "run.threads must be at least 1");
    r.str("run.checkpoint", c.checkpoint);
    r.str("run.method", c.method);
    r.reject_unknown();

    c.train.validate();
    c.ensemble.validate();
    c.metrics.validate();
    if (c.out.empty()) fail(ErrorKind::Usage, "run.out must not be empty");
    return c;
}

KeyValues RunConfig::to_kv() const {
    KeyValues kv;
    kv.set("paths.source_train", paths.source_train);
    kv.set("paths.source_eval", paths.source_eval);
    kv.set("paths.target_train", paths.target_train);
    kv.set("paths.target_eval", paths.target_eval);
    kv.set("paths.altitude", paths.altitude);
    if (wavelength_km) kv.set("separator.wavelength_km", *wavelength_km);
    if (blur_sigma_km) kv.set("separator.blur_sigma_km", *blur_sigma_km);
    kv.set("separator.truncate", blur_truncate);
    kv.set("cutoff.candidates_km", join_numbers(cutoff_candidates_km));
    kv.set("cutoff.auto", std::string(auto_cutoff ? "true" : "false"));
    kv.set("cutoff.threshold", cutoff.threshold);
    kv.set("cutoff.ridge", cutoff.ridge);
    kv.set("cutoff.validation_fraction", cutoff.validation_fraction);
    kv.set("cutoff.min_frames", static_cast<std::int64_t>(cutoff.min_frames));
    kv.set("cutoff.n_bins", static_cast<std::int64_t>(cutoff.n_bins));
    kv.set("decompose.input", decompose_input);
    kv.set("decompose.bands_km", join_numbers(bands_km));
    kv.set("norm.scheme", std::string(norm_scheme == NormScheme::spatial ? "spatial" : "per_cell"));
    std::vector<std::string> widths;
    for (auto h : hidden) widths.push_back(std::to_string(h));
    kv.set("model.hidden", join(widths, ','));
    kv.set("model.activation", std::string(activation == Activation::tanh ? "tanh" : "identity"));
    kv.set("model.init_gain", init_gain);
    kv.set("train.epochs", static_cast<std::int64_t>(train.epochs));
    kv.set("train.learning_rate", train.learning_rate);
    kv.set("train.batch_size", static_cast<std::int64_t>(train.batch_size));
    kv.set("train.momentum", train.momentum);
    kv.set("train.grad_clip", train.grad_clip);
    kv.set("train.gradient_check", std::string(train.gradient_check ? "true" : "false"));
    kv.set("train.resample_t", std::string(train.resample_t ? "true" : "false"));
    kv.set("train.noise_draws", static_cast<std::int64_t>(noise_draws));
    kv.set("train.noise_amplitude", pair_noise);
    kv.set("train.max_frames", static_cast<std::int64_t>(max_frames));
    kv.set("ensemble.members", static_cast<std::int64_t>(ensemble.n_members));
    kv.set("ensemble.noise_scale", ensemble.noise_scale);
    kv.set("ensemble.ode_steps", static_cast<std::int64_t>(ensemble.ode_steps));
    kv.merge(metrics.to_kv());
    kv.set("metrics.ovm", ovm);
    if (ks_region)
        kv.set("metrics.ks_region",
               join_numbers({ks_region->lat_min, ks_region->lat_max, ks_region->lon_min, ks_region->lon_max}));
    kv.set("cdft.monthly", std::string(cdft.monthly ? "true" : "false"));
    kv.set("cdft.min_samples", static_cast<std::int64_t>(cdft.min_samples));
    kv.set("calibrate.a_grid", join_numbers(a_grid));
    kv.set("calibrate.max_frames", static_cast<std::int64_t>(calibrate_max_frames));
    kv.set("synth.scenario", scenario);
    kv.set("synth.n_times", static_cast<std::int64_t>(synth_n_times));
    kv.set("synth.step_days", static_cast<std::int64_t>(synth_step_days));
    kv.set("synth.dir", synth_dir);
    kv.set("run.out", out);
    kv.set("run.seed", std::to_string(seed));
    kv.set("run.threads", static_cast<std::int64_t>(threads));
    kv.set("run.checkpoint", checkpoint);
    kv.set("run.method", method);
    return kv;
}

Separator RunConfig::separator() const {
    if (wavelength_km.has_value() == blur_sigma_km.has_value())
        fail(ErrorKind::Usage,
             "configure exactly one separator: separator.wavelength_km (Fourier) or separator.blur_sigma_km (blur)");
    if (wavelength_km) return SpectralCutoff{*wavelength_km};
    return BlurSpec{*blur_sigma_km, blur_truncate};
}

std::string RunConfig::checkpoint_path() const {
    return checkpoint.empty() ? (fs::path(out) / "checkpoints" / "model.wfmd").string() : checkpoint;
}

std::string RunConfig::method_path() const {
    return method.empty() ? (fs::path(out) / "members" / "mean.wfld").string() : method;
}

std::string RunConfig::synth_path() const { return synth_dir.empty() ? (fs::path(out) / "data").string() : synth_dir; }

RunConfig load_run_config(const std::string& path, const KeyValues& overrides) {
    KeyValues kv = path.empty() ? KeyValues{} : KeyValues::load(path);
    kv.merge(overrides);
    return RunConfig::from_kv(kv);
}

std::string config_hash(const RunConfig& cfg) {
    KeyValues kv = cfg.to_kv();
    kv.erase("run.out");
    kv.erase("run.threads");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : kv.to_string()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

KeyValues manifest(const RunConfig& cfg, const std::string& command) {
    KeyValues kv = cfg.to_kv();
    kv.set("manifest.command", command);
    kv.set("manifest.config_hash", config_hash(cfg));
    kv.set("manifest.version", std::string(kVersion));
    kv.set("manifest.wfld_version", std::int64_t{1});
    kv.set("manifest.wfmd_version", std::int64_t{1});
    const std::pair<const char*, SeedKey> seeds[] = {{"train", kTrainSeed},       {"init", kInitSeed},
                                                     {"pairs", kPairSeed},        {"ensemble", kEnsembleSeed},
                                                     {"cutoff", kCutoffSeed},     {"rank_ties", kRankSeed},
                                                     {"metrics", kMetricSeed}};
    for (const auto& [name, key] : seeds) kv.set(std::string("seed.") + name, std::to_string(derive_seed(cfg.seed, key)));
    return kv;
}

FieldStack regrid_to(const FieldStack& stack, const GridSpec& grid, const std::vector<std::uint8_t>& mask,
                     const Separator& sep) {
    FieldStack out;
    if (stack.grid().same_as(grid)) {
        out = stack;
    } else if (std::holds_alternative<SpectralCutoff>(sep) && stack.fully_valid() &&
               grid.n_rows() >= stack.n_rows() && grid.n_cols() >= stack.n_cols()) {
        try {
            out = spectral_regrid(stack, grid);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Extent) throw;
            out = bilinear_regrid(stack, grid);
        }
    } else {
        out = bilinear_regrid(stack, grid);
    }
    for (std::size_t c = 0; c < out.n_cells(); ++c)
        if (mask[c] && !out.valid(c)) fail(ErrorKind::Extent, "regridded source does not cover every valid target cell");
    out.set_mask(mask);
    return out;
}

void cmd_decompose(const RunConfig& cfg) {
    const auto input = cfg.decompose_input.empty() ? require_path(cfg.paths.target_train, "paths.target_train")
                                                   : cfg.decompose_input;
    const FieldStack stack = read_fieldstack(input);
    if (!cfg.bands_km.empty()) {
        std::vector<SpectralCutoff> cuts;
        for (double w : cfg.bands_km) cuts.push_back({w});
        const auto bands = band_decompose(stack, cuts);
        for (std::size_t b = 0; b < bands.size(); ++b) {
            const auto name = "band_" + std::to_string(b);
            write_fieldstack(bands[b], out_path(cfg, "decomposed", name + ".wfld"));
            write_spectra(cfg, bands[b], name);
        }
        write_spectra(cfg, stack, "input");
        return;
    }
    const auto d = decompose(stack, cfg.separator());
    write_fieldstack(d.low, out_path(cfg, "decomposed", "low.wfld"));
    write_fieldstack(d.high, out_path(cfg, "decomposed", "high.wfld"));
    if (stack.fully_valid()) {
        write_spectra(cfg, stack, "input");
        write_spectra(cfg, d.low, "low");
        write_spectra(cfg, d.high, "high");
    }
}

void cmd_train(const RunConfig& cfg) {
    Separator sep = cfg.separator();
    const FieldStack target = read_fieldstack(require_path(cfg.paths.target_train, "paths.target_train"));
    const FieldStack source = read_fieldstack(require_path(cfg.paths.source_train, "paths.source_train"));
    if (source.variables() != target.variables())
        fail(ErrorKind::Extent, "source and target training files carry different variables");
    auto norm = fit_normalization(source, target, cfg.norm_scheme);

    if (cfg.auto_cutoff) {
        if (!std::holds_alternative<SpectralCutoff>(sep))
            fail(ErrorKind::Usage, "cutoff.auto needs the Fourier separator (separator.wavelength_km)");
        if (cfg.cutoff_candidates_km.empty()) fail(ErrorKind::Usage, "cutoff.auto needs cutoff.candidates_km");
        const auto s = regrid_to(normalize(source, norm.source), target.grid(), target.mask(), sep);
        if (s.times() != target.times())
            fail(ErrorKind::Extent, "cutoff selection needs source and target training files on the same dates");
        CutoffOptions opts = cfg.cutoff;
        opts.seed = derive_seed(cfg.seed, kCutoffSeed);
        const auto scan = select_cutoff(s, normalize(target, norm.target), cfg.cutoff_candidates_km, opts);
        write_file(out_path(cfg, "reports", "cutoff_scan.csv"), scan_csv(scan));
        sep = SpectralCutoff{scan.selected_km};
    }
    validate_separator(sep, target);

    const FieldStack frames = normalize_target(first_frames(target, cfg.max_frames), norm);
    PairFactory pairs(frames, sep, cfg.noise_draws, derive_seed(cfg.seed, kPairSeed), cfg.pair_noise);
    ConvNet net(ConvArch{target.n_vars(), cfg.hidden, cfg.activation});
    net.init(derive_seed(cfg.seed, kInitSeed), cfg.init_gain);
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, kTrainSeed);
    const auto result = train(net, pairs, tc);

    Checkpoint ckpt{net, separator_kv(sep)};
    ckpt.meta.merge(with_prefix(norm.to_kv(), "norm."));
    ckpt.meta.set("run.config_hash", config_hash(cfg));
    ckpt.meta.set("run.version", std::string(kVersion));
    ckpt.meta.set("train.frames", static_cast<std::int64_t>(frames.n_times()));
    if (!result.loss_curve.empty()) ckpt.meta.set("train.final_loss", result.loss_curve.back());
    const auto path = cfg.checkpoint_path();
    fs::create_directories(fs::path(path).parent_path().empty() ? fs::path(".") : fs::path(path).parent_path());
    write_checkpoint(ckpt, path);
    write_file(out_path(cfg, "checkpoints", "loss.csv"), loss_csv(result.loss_curve));
    if (cfg.norm_scheme == NormScheme::per_cell)
        write_fieldstack(moments_stack(norm, target), (fs::path(path).parent_path() / "target_moments.wfld").string());
}

void cmd_generate(const RunConfig& cfg) {
    const auto lm = load_model(cfg);
    const FieldStack ref = read_fieldstack(require_path(cfg.paths.target_train, "paths.target_train"));
    const FieldStack source = read_fieldstack(require_path(cfg.paths.source_eval, "paths.source_eval"));
    if (lm.ckpt.model.arch().n_vars != source.n_vars())
        fail(ErrorKind::Extent, "model expects " + std::to_string(lm.ckpt.model.arch().n_vars) + " variables, source has " +
                                    std::to_string(source.n_vars()));
    const auto cond = project_source(normalize(source, lm.norm.source), lm.separator, ref.grid(), 0.0, 0, ref.mask());
    EnsembleSpec spec = cfg.ensemble;
    spec.seed = derive_seed(cfg.seed, kEnsembleSeed);
    spec.threads = cfg.threads;
    const auto members = sample(lm.ckpt.model, cond, lm.separator, spec, &lm.norm);
    for (std::size_t m = 0; m < members.size(); ++m)
        write_fieldstack(members[m], out_path(cfg, "members", member_name(m)));
    if (members.size() >= 2) {
        const auto stats = ensemble_stats(members);
        write_fieldstack(stats.mean, out_path(cfg, "members", "mean.wfld"));
        write_fieldstack(stats.spread, out_path(cfg, "members", "spread.wfld"));
    } else {
        write_fieldstack(members.front(), out_path(cfg, "members", "mean.wfld"));
    }
}

void cmd_evaluate(const RunConfig& cfg) {
    const Separator sep = cfg.separator();
    const FieldStack obs = read_fieldstack(require_path(cfg.paths.target_eval, "paths.target_eval"));
    const FieldStack gcm =
        regrid_to(read_fieldstack(require_path(cfg.paths.source_eval, "paths.source_eval")), obs.grid(), obs.mask(), sep);

    std::optional<std::vector<double>> altitude;
    if (cfg.ovm == "on" && cfg.paths.altitude.empty())
        fail(ErrorKind::Usage, "metrics.ovm=on needs an altitude map (paths.altitude)");
    if (cfg.ovm != "off" && !cfg.paths.altitude.empty()) {
        const auto alt = read_fieldstack(cfg.paths.altitude);
        if (!alt.grid().same_as(obs.grid()) || alt.n_times() < 1 || alt.n_vars() < 1)
            fail(ErrorKind::Extent, "altitude map must be one frame on the evaluation grid");
        const auto s = alt.slice(0, 0);
        altitude.emplace(s.begin(), s.end());
    }

    std::vector<std::pair<std::string, FieldStack>> methods;
    std::vector<std::string> notes;
    const auto mpath = cfg.method_path();
    if (!cfg.method.empty() || fs::exists(mpath))
        methods.emplace_back("flow_mean", read_fieldstack(mpath));
    else
        notes.push_back("flow_mean skipped: " + mpath + " not found");
    if (const auto p = fs::path(cfg.out) / "members" / member_name(0); cfg.method.empty() && fs::exists(p))
        methods.emplace_back("flow_member", read_fieldstack(p.string()));
    if (!cfg.paths.target_train.empty() && !cfg.paths.source_train.empty()) {
        const FieldStack obs_hist = read_fieldstack(cfg.paths.target_train);
        const FieldStack src_hist = regrid_to(read_fieldstack(cfg.paths.source_train), obs.grid(), obs.mask(), sep);
        auto res = cdft_correct(obs_hist, src_hist, gcm, cfg.cdft);
        if (res.fallback_blocks > 0)
            notes.push_back("cdft: " + std::to_string(res.fallback_blocks) + " blocks used the mean-shift fallback");
        methods.emplace_back("cdft", std::move(res.corrected));
    } else {
        notes.push_back("cdft skipped: paths.source_train or paths.target_train not set");
    }
    methods.emplace_back("source", gcm);

    MetricConfig mc = cfg.metrics;
    mc.seed = derive_seed(cfg.seed, kMetricSeed);
    std::vector<std::pair<std::string, MetricReport>> reports;
    std::string deltas = "method,variable,delta_method_pct,delta_source_pct\n";
    for (const auto& [name, m] : methods) {
        const bool same_times = m.times() == gcm.times();
        EvaluateInputs in{&m, &obs, same_times ? &gcm : nullptr, altitude ? &*altitude : nullptr, cfg.ks_region};
        auto rep = evaluate_metrics(in, mc);
        for (const auto& n : rep.notes) notes.push_back(name + ": " + n);
        write_file(out_path(cfg, "reports", "spectra_" + name + ".csv"), spectra_csv(rep.spectra));
        write_file(out_path(cfg, "reports", "variogram_" + name + ".csv"), variogram_csv(rep.variograms));
        write_file(out_path(cfg, "reports", "correlation_distance_" + name + ".csv"),
                   correlation_distance_csv(rep.correlation_distance));
        write_file(out_path(cfg, "reports", "anomalies_" + name + ".csv"), anomalies_csv(rep.anomalies));
        if (mc.hist && mc.fut)
            for (std::size_t v = 0; v < m.n_vars(); ++v)
                deltas += name + "," + m.variables()[v] + "," +
                          format_double(relative_change(m, v, *mc.hist, *mc.fut)) + "," +
                          format_double(relative_change(gcm, v, *mc.hist, *mc.fut)) + "\n";
        reports.emplace_back(name, std::move(rep));
    }
    write_file(out_path(cfg, "reports", "metrics_long.csv"), metrics_long_csv(reports));
    write_file(out_path(cfg, "reports", "metrics_table.csv"), metrics_table_csv(reports));
    write_file(out_path(cfg, "reports", "radar.csv"), radar_csv(reports));
    if (mc.hist && mc.fut) write_file(out_path(cfg, "reports", "delta_full.csv"), deltas);
    std::string text;
    for (const auto& n : notes) text += n + "\n";
    write_file(out_path(cfg, "reports", "notes.txt"), text);
}

void cmd_calibrate(const RunConfig& cfg) {
    if (cfg.ensemble.n_members < 2)
        fail(ErrorKind::SpreadUndefined, "calibration needs at least two ensemble members (ensemble.members)");
    if (cfg.a_grid.empty()) fail(ErrorKind::Usage, "calibrate.a_grid is empty");
    const auto lm = load_model(cfg);
    const FieldStack obs =
        first_frames(read_fieldstack(require_path(cfg.paths.target_eval, "paths.target_eval")), cfg.calibrate_max_frames);
    // Perfect-model setup: condition on the reference's own large scales.
    const FieldStack cond = shared_component(normalize_target(obs, lm.norm), lm.separator);
    EnsembleSpec spec = cfg.ensemble;
    spec.seed = derive_seed(cfg.seed, kEnsembleSeed);
    spec.threads = cfg.threads;
    const auto tuned = tune_noise_scale(
        [&](double a) {
            EnsembleSpec s = spec;
            s.noise_scale = a;
            return sample(lm.ckpt.model, cond, lm.separator, s, &lm.norm);
        },
        obs, cfg.a_grid, default_levels(), derive_seed(cfg.seed, kRankSeed));
    write_file(out_path(cfg, "reports", "calibration_summary.csv"), calibration_summary_csv(tuned.reports));
    for (const auto& rep : tuned.reports) {
        const auto a = format_double(rep.noise_scale);
        write_file(out_path(cfg, "reports", "rank_histogram_a" + a + ".csv"), rank_histogram_csv(rep));
        write_file(out_path(cfg, "reports", "reliability_a" + a + ".csv"), reliability_csv(rep));
    }
    KeyValues summary;
    summary.set("recommended_noise_scale", tuned.recommended);
    summary.set("spread_monotone", std::string(tuned.spread_monotone ? "true" : "false"));
    summary.set("warnings", join(tuned.warnings, ';'));
    write_file(out_path(cfg, "reports", "calibration.txt"), summary.to_string());
}

void cmd_synth(const RunConfig& cfg) {
    const auto sc = make_scenario(cfg.scenario, {cfg.seed, cfg.synth_n_times, cfg.synth_step_days});
    write_scenario(sc, cfg.synth_path());
}

void run_command(const std::string& command, const RunConfig& cfg) {
    if (command == "decompose")
        cmd_decompose(cfg);
    else if (command == "train")
        cmd_train(cfg);
    else if (command == "generate")
        cmd_generate(cfg);
    else if (command == "evaluate")
        cmd_evaluate(cfg);
    else if (command == "calibrate")
        cmd_calibrate(cfg);
    else if (command == "synth")
        cmd_synth(cfg);
    else
        fail(ErrorKind::Usage, "unknown command '" + command + "'");
    fs::create_directories(cfg.out);
    write_file((fs::path(cfg.out) / "manifest.txt").string(), manifest(cfg, command).to_string());
}

}  // namespace scalesplit
