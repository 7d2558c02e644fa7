#include "scalesplit/pseudo_pairs.hpp"

#include "scalesplit/error.hpp"
#include "scalesplit/rng.hpp"
#include "scalesplit/separator.hpp"
#include "scalesplit/spectral.hpp"

#include <cmath>

namespace scalesplit {

DomainStats domain_stats(const FieldStack& stack) {
    if (stack.n_times() == 0 || stack.n_valid() == 0) fail(ErrorKind::Degenerate, "empty stack");
    DomainStats out;
    for (std::size_t v = 0; v < stack.n_vars(); ++v) {
        double sum = 0.0, n = 0.0;
        for (std::size_t t = 0; t < stack.n_times(); ++t) {
            const auto s = stack.slice(t, v);
            for (std::size_t c = 0; c < s.size(); ++c)
                if (stack.valid(c)) sum += s[c], n += 1.0;
        }
        const double mean = sum / n;
        double ss = 0.0;
        for (std::size_t t = 0; t < stack.n_times(); ++t) {
            const auto s = stack.slice(t, v);
            for (std::size_t c = 0; c < s.size(); ++c)
                if (stack.valid(c)) ss += (s[c] - mean) * (s[c] - mean);
        }
        out[stack.variables()[v]] = {mean, std::sqrt(ss / n)};
    }
    return out;
}

NormalizationParams fit_normalization(const FieldStack& train_source, const FieldStack& train_target,
                                      NormScheme scheme) {
    const auto src = domain_stats(train_source);
    const auto tgt = domain_stats(train_target);
    NormalizationParams p;
    p.scheme = scheme;
    for (const auto& [name, stats] : tgt) {
        const auto it = src.find(name);
        if (it == src.end()) continue;
        if (!(stats.std > 0.0) || !(it->second.std > 0.0))
            fail(ErrorKind::Degenerate, "variable '" + name + "' has zero variance in the training period");
        p.target[name] = stats;
        p.source[name] = it->second;
    }
    if (p.target.empty()) fail(ErrorKind::Degenerate, "source and target share no variables");
    p.target_variables = train_target.variables();
    p.target_cells = temporal_moments(train_target);
    return p;
}

namespace {

FieldStack affine(const FieldStack& stack, const DomainStats& stats, bool forward) {
    FieldStack out = stack;
    for (std::size_t v = 0; v < stack.n_vars(); ++v) {
        const auto it = stats.find(stack.variables()[v]);
        if (it == stats.end()) fail(ErrorKind::Usage, "no normalization statistics for '" + stack.variables()[v] + "'");
        const auto [mean, sd] = it->second;
        for (std::size_t t = 0; t < stack.n_times(); ++t)
            for (auto& x : out.slice(t, v)) x = forward ? (x - mean) / sd : x * sd + mean;
    }
    return out;
}

FieldStack affine_cells(const FieldStack& stack, const MomentMaps& maps, bool forward) {
    if (maps.mean.size() != stack.n_vars() || (stack.n_vars() && maps.mean[0].size() != stack.n_cells()))
        fail(ErrorKind::Extent, "per-cell moments do not match the stack layout");
    FieldStack out = stack;
    for (std::size_t v = 0; v < stack.n_vars(); ++v)
        for (std::size_t t = 0; t < stack.n_times(); ++t) {
            auto s = out.slice(t, v);
            for (std::size_t c = 0; c < s.size(); ++c) {
                if (!stack.valid(c)) continue;
                const double mean = maps.mean[v][c], sd = maps.std[v][c];
                if (forward)
                    s[c] = sd > 0.0 ? (s[c] - mean) / sd : 0.0;
                else
                    s[c] = s[c] * sd + mean;
            }
        }
    return out;
}

}  // namespace

FieldStack normalize(const FieldStack& stack, const DomainStats& stats) { return affine(stack, stats, true); }
FieldStack denormalize(const FieldStack& stack, const DomainStats& stats) { return affine(stack, stats, false); }
FieldStack normalize_per_cell(const FieldStack& stack, const MomentMaps& maps) { return affine_cells(stack, maps, true); }
FieldStack denormalize_per_cell(const FieldStack& stack, const MomentMaps& maps) {
    return affine_cells(stack, maps, false);
}

FieldStack normalize_target(const FieldStack& stack, const NormalizationParams& params) {
    return params.scheme == NormScheme::per_cell ? normalize_per_cell(stack, params.target_cells)
                                                 : normalize(stack, params.target);
}

FieldStack denormalize_target(const FieldStack& stack, const NormalizationParams& params) {
    return params.scheme == NormScheme::per_cell ? denormalize_per_cell(stack, params.target_cells)
                                                 : denormalize(stack, params.target);
}

KeyValues NormalizationParams::to_kv() const {
    KeyValues kv;
    kv.set("scheme", scheme == NormScheme::per_cell ? std::string("per_cell") : std::string("spatial"));
    for (const auto& [name, s] : source) {
        kv.set("source." + name + ".mean", s.mean);
        kv.set("source." + name + ".std", s.std);
    }
    for (const auto& [name, s] : target) {
        kv.set("target." + name + ".mean", s.mean);
        kv.set("target." + name + ".std", s.std);
    }
    kv.set("target_variables", join(target_variables, ','));
    return kv;
}

NormalizationParams NormalizationParams::from_kv(const KeyValues& kv) {
    NormalizationParams p;
    const auto scheme = kv.get_or("scheme", "spatial");
    if (scheme == "per_cell")
        p.scheme = NormScheme::per_cell;
    else if (scheme != "spatial")
        fail(ErrorKind::Format, "unknown normalization scheme '" + scheme + "'");
    p.target_variables = split(kv.get_or("target_variables", ""), ',');
    for (const auto& [key, value] : kv.entries()) {
        const auto parts = split(key, '.');
        if (parts.size() != 3 || (parts[0] != "source" && parts[0] != "target")) continue;
        auto& dom = parts[0] == "source" ? p.source : p.target;
        if (parts[2] == "mean")
            dom[parts[1]].mean = parse_double(value, key);
        else if (parts[2] == "std")
            dom[parts[1]].std = parse_double(value, key);
    }
    return p;
}

PairFactory::PairFactory(const FieldStack& target, Separator separator, std::size_t n_noise_draws, std::uint64_t seed,
                         double noise_amplitude, bool fresh_noise)
    : target_(target),
      separator_(separator),
      n_draws_(n_noise_draws),
      seed_(seed),
      amplitude_(noise_amplitude),
      fresh_noise_(fresh_noise) {
    if (target.n_times() == 0) fail(ErrorKind::Degenerate, "pseudo-pairs need at least one target frame");
    if (n_noise_draws == 0) fail(ErrorKind::Usage, "n_noise_draws must be at least 1");
    validate_separator(separator_, target_);
    shared_ = shared_component(target_, separator_);
}

std::vector<PseudoPair> PairFactory::epoch(std::size_t e) const {
    std::vector<PseudoPair> pairs;
    pairs.reserve(pairs_per_epoch());
    const std::size_t epoch_key = fresh_noise_ ? e : 0;
    for (std::size_t t = 0; t < target_.n_times(); ++t) {
        const FieldStack x = target_.select_times({t});
        const FieldStack mu = shared_.select_times({t});
        for (std::size_t d = 0; d < n_draws_; ++d) {
            const std::uint64_t pair_seed = derive_seed(seed_, epoch_key, t, d);
            FieldStack cond = mu;
            if (amplitude_ != 0.0) cond += filtered_noise(mu, separator_, pair_seed) * amplitude_;
            pairs.push_back({std::move(cond), mu, x, separator_, pair_seed});
        }
    }
    return pairs;
}

std::vector<PseudoPair> make_pairs(const FieldStack& target, const Separator& separator, std::size_t n_noise_draws,
                                   std::uint64_t seed, double noise_amplitude) {
    return PairFactory(target, separator, n_noise_draws, seed, noise_amplitude).epoch(0);
}

FieldStack project_source(const FieldStack& source, const Separator& separator, const GridSpec& target_grid,
                          double noise_scale, std::uint64_t seed,
                          const std::optional<std::vector<std::uint8_t>>& target_mask) {
    FieldStack regridded;
    const bool fourier = std::holds_alternative<SpectralCutoff>(separator);
    if (source.grid().same_as(target_grid))
        regridded = source;
    else if (fourier)
        regridded = spectral_regrid(source, target_grid);
    else
        regridded = bilinear_regrid(source, target_grid);
    if (target_mask) {
        for (std::size_t c = 0; c < regridded.n_cells(); ++c)
            if ((*target_mask)[c] && !regridded.valid(c))
                fail(ErrorKind::Extent, "source does not cover every valid target cell");
        regridded.set_mask(*target_mask);
    }
    FieldStack shared = shared_component(regridded, separator);
    if (noise_scale != 0.0) shared += filtered_noise(shared, separator, seed) * noise_scale;
    return shared;
}

}  // namespace scalesplit
