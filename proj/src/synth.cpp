#include "scalesplit/synth.hpp"

#include "scalesplit/error.hpp"
#include "scalesplit/rng.hpp"
#include "scalesplit/spectral.hpp"
#include "scalesplit/wfld.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace scalesplit {

namespace {

double per_var(const std::vector<double>& v, std::size_t i, const char* what) {
    if (v.size() == 1) return v[0];
    if (i >= v.size()) fail(ErrorKind::Usage, std::string("synth: '") + what + "' needs one value or one per variable");
    return v[i];
}

}  // namespace

void SynthSpec::validate() const {
    const std::size_t V = variables.size();
    if (V == 0) fail(ErrorKind::Usage, "synth: no variables");
    if (grid.n_cells() == 0) fail(ErrorKind::Usage, "synth: empty grid");
    for (const auto* vec : {&beta, &amplitude, &mean})
        if (vec->size() != 1 && vec->size() != V)
            fail(ErrorKind::Usage, "synth: per-variable settings need one value or one per variable");
    for (double a : amplitude)
        if (!(a >= 0.0)) fail(ErrorKind::Usage, "synth: amplitude must be non-negative");
    const double min_lambda = 2.0 * std::max(grid.dx_km(), grid.dy_km());
    if (!(lambda_eff_km >= min_lambda))
        fail(ErrorKind::Usage, "synth: lambda_eff_km must be at least " + format_double(min_lambda) + " km");
    if (!(lambda_max_km > 0.0)) fail(ErrorKind::Usage, "synth: lambda_max_km must be positive");
    if (!(ar > -1.0 && ar < 1.0)) fail(ErrorKind::Usage, "synth: AR coefficient must lie in (-1, 1)");
    if (!correlation.empty()) {
        if (correlation.size() != V * V) fail(ErrorKind::Usage, "synth: correlation matrix must be V x V");
        for (std::size_t i = 0; i < V; ++i) {
            if (correlation[i * V + i] != 1.0) fail(ErrorKind::Usage, "synth: correlation diagonal must be 1");
            for (std::size_t j = 0; j < V; ++j)
                if (correlation[i * V + j] != correlation[j * V + i])
                    fail(ErrorKind::Usage, "synth: correlation matrix must be symmetric");
        }
        const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> C(
            correlation.data(), V, V);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
        if (es.eigenvalues().minCoeff() < -1e-12)
            fail(ErrorKind::Usage, "synth: correlation matrix is not positive semi-definite");
    }
}

FieldStack generate(const SynthSpec& spec) {
    spec.validate();
    const std::size_t V = spec.variables.size(), N = spec.grid.n_cells(), T = spec.times.size();
    FieldStack out(spec.grid, spec.variables, spec.times);

    // Mixing matrix M with M M^T = C.
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(V, V);
    if (!spec.correlation.empty()) {
        Eigen::MatrixXd C(V, V);
        for (std::size_t i = 0; i < V; ++i)
            for (std::size_t j = 0; j < V; ++j) C(i, j) = spec.correlation[i * V + j];
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
        const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        M = es.eigenvectors() * lam.asDiagonal();
    }

    const auto k = wavenumber_magnitudes(spec.grid);
    double k_fund = std::numeric_limits<double>::infinity();
    for (double x : k)
        if (x > 0.0) k_fund = std::min(k_fund, x);
    const double k_top = std::isinf(spec.lambda_eff_km) ? std::numeric_limits<double>::infinity()
                                                        : (1.0 / spec.lambda_eff_km) * (1.0 + 1e-9);
    const double k_bottom = std::isinf(spec.lambda_max_km) ? 0.0 : (1.0 / spec.lambda_max_km) * (1.0 + 1e-9);

    // Radial gains, normalized so filtered unit white noise has unit variance.
    std::vector<std::function<double(double)>> gains;
    for (std::size_t v = 0; v < V; ++v) {
        const double beta = per_var(spec.beta, v, "beta");
        auto raw = [=, &spec](double kk) {
            if (kk == 0.0) {
                if (!spec.include_mean_mode || k_bottom > 0.0) return 0.0;
                kk = k_fund;
            }
            if (kk > k_top || kk <= k_bottom) return 0.0;
            return std::pow(kk, -0.5 * beta);
        };
        double power = 0.0;
        for (double kk : k) power += raw(kk) * raw(kk);
        power /= static_cast<double>(N);
        const double scale = power > 0.0 ? per_var(spec.amplitude, v, "amplitude") / std::sqrt(power) : 0.0;
        gains.push_back([raw, scale](double kk) { return scale * raw(kk); });
    }

    const double innov = std::sqrt(1.0 - spec.ar * spec.ar);
    std::vector<std::vector<double>> state(V, std::vector<double>(N, 0.0));
    std::vector<double> mixed(N);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < V; ++j) {
            const CounterRng rng(derive_seed(spec.seed, t, j));
            for (std::size_t c = 0; c < N; ++c)
                state[j][c] = t == 0 ? rng.normal(c) : spec.ar * state[j][c] + innov * rng.normal(c);
        }
        for (std::size_t v = 0; v < V; ++v) {
            std::fill(mixed.begin(), mixed.end(), 0.0);
            for (std::size_t j = 0; j < V; ++j) {
                const double m = M(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(j));
                if (m == 0.0) continue;
                for (std::size_t c = 0; c < N; ++c) mixed[c] += m * state[j][c];
            }
            const auto field = filter_frame(mixed, spec.grid, gains[v]);
            const double mu = per_var(spec.mean, v, "mean");
            auto dst = out.slice(t, v);
            for (std::size_t c = 0; c < N; ++c) dst[c] = field[c] + mu;
        }
    }
    return out;
}

std::vector<Day> date_range(Day start, std::size_t n, int step_days) {
    if (step_days < 1) fail(ErrorKind::Usage, "date step must be at least one day");
    std::vector<Day> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = start + static_cast<Day>(i) * step_days;
    return out;
}

FieldStack subsample(const FieldStack& stack, std::size_t factor) {
    if (factor < 1) fail(ErrorKind::Usage, "subsample factor must be at least 1");
    const auto& g = stack.grid();
    std::vector<double> lat, lon;
    std::vector<std::size_t> rows, cols;
    for (std::size_t r = 0; r < g.n_rows(); r += factor) rows.push_back(r), lat.push_back(g.lat()[r]);
    for (std::size_t c = 0; c < g.n_cols(); c += factor) cols.push_back(c), lon.push_back(g.lon()[c]);
    FieldStack out(GridSpec(lat, lon), stack.variables(), stack.times());
    out.set_units(stack.units());
    std::vector<std::uint8_t> mask(rows.size() * cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) mask[i * cols.size() + j] = stack.valid(rows[i] * g.n_cols() + cols[j]);
    for (std::size_t t = 0; t < stack.n_times(); ++t)
        for (std::size_t v = 0; v < stack.n_vars(); ++v)
            for (std::size_t i = 0; i < rows.size(); ++i)
                for (std::size_t j = 0; j < cols.size(); ++j) out.at(t, v, i, j) = stack.at(t, v, rows[i], cols[j]);
    out.set_mask(mask);
    return out;
}

std::pair<FieldStack, FieldStack> split_at(const FieldStack& stack, Day split) {
    std::vector<std::size_t> before, after;
    for (std::size_t t = 0; t < stack.n_times(); ++t) (stack.times()[t] < split ? before : after).push_back(t);
    return {stack.select_times(before), stack.select_times(after)};
}

namespace {

Scenario shared_largescale(const ScenarioOptions& o) {
    const double cutoff_km = 500.0;
    SynthSpec spec;
    spec.grid = GridSpec::uniform_km(64, 64, 25.0, 25.0);
    spec.times = date_range(day_from_civil(2000, 1, 1), o.n_times ? o.n_times : 60, o.step_days ? o.step_days : 1);
    spec.beta = {3.0};
    spec.amplitude = {2.0};
    spec.mean = {5.0};
    spec.ar = 0.5;
    spec.seed = derive_seed(o.seed, 1);
    Scenario sc{"shared_largescale", {}, generate(spec), {}};
    // Same noise stream and scale factor, nothing above the cutoff wavenumber.
    const auto k = wavenumber_magnitudes(spec.grid);
    sc.source = sc.target;
    const double limit = (1.0 / cutoff_km) * (1.0 + 1e-9);
    for (std::size_t t = 0; t < sc.source.n_times(); ++t) {
        auto s = sc.source.slice(t, 0);
        std::vector<double> anomaly(s.begin(), s.end());
        for (auto& x : anomaly) x -= spec.mean[0];
        const auto low = filter_frame(anomaly, spec.grid, [limit](double kk) { return kk <= limit ? 1.0 : 0.0; });
        for (std::size_t c = 0; c < s.size(); ++c) s[c] = low[c] + spec.mean[0];
    }
    sc.truth.set("scenario", sc.name);
    sc.truth.set("cutoff_km", cutoff_km);
    sc.truth.set("seed", static_cast<std::int64_t>(o.seed));
    return sc;
}

Scenario biased_source(const ScenarioOptions& o) {
    const double gain = 2.0, offset = 3.0, mu = 5.0, sigma = 1.5;
    const std::size_t n = o.n_times ? o.n_times : 20000;
    SynthSpec spec;
    spec.grid = GridSpec::uniform_km(4, 4, 25.0, 25.0);
    spec.times = date_range(day_from_civil(1950, 1, 1), n, o.step_days ? o.step_days : 1);
    spec.beta = {2.0};
    spec.amplitude = {sigma};
    spec.mean = {mu};
    spec.include_mean_mode = true;
    spec.seed = derive_seed(o.seed, 2);
    Scenario sc{"biased_source", {}, generate(spec), {}};
    sc.source = sc.target;
    for (auto& x : sc.source.values()) x = gain * x + offset;
    sc.truth.set("scenario", sc.name);
    sc.truth.set("gain", gain);
    sc.truth.set("offset", offset);
    sc.truth.set("target_mean", mu);
    sc.truth.set("target_std", sigma);
    sc.truth.set("split_date", format_date(spec.times[n / 2]));
    sc.truth.set("seed", static_cast<std::int64_t>(o.seed));
    return sc;
}

Scenario future_shift(const ScenarioOptions& o) {
    const double mu = 10.0, drift_pct = 10.0, cutoff_km = 400.0;
    const double a_large = 2.0, a_small = 1.0;
    const int step = o.step_days ? o.step_days : 10;
    const Day start = day_from_civil(2000, 1, 1), split = day_from_civil(2010, 1, 1), stop = day_from_civil(2020, 1, 1);
    const std::size_t n = o.n_times ? o.n_times : static_cast<std::size_t>((stop - start + step - 1) / step);

    SynthSpec large;
    large.grid = GridSpec::uniform_km(32, 32, 50.0, 50.0);
    large.times = date_range(start, n, step);
    large.beta = {2.0};
    large.amplitude = {a_large};
    large.mean = {0.0};
    large.lambda_eff_km = cutoff_km;
    large.ar = 0.6;
    large.seed = derive_seed(o.seed, 3, 0);
    const FieldStack L = generate(large);

    SynthSpec fine = large;
    fine.amplitude = {a_small};
    fine.lambda_eff_km = 2.0 * 50.0;
    fine.lambda_max_km = cutoff_km;
    fine.ar = 0.3;
    fine.seed = derive_seed(o.seed, 3, 1);
    const FieldStack S = generate(fine);

    // Source texture stays below the coarse grid's Nyquist wavenumber.
    SynthSpec coarse_fine = fine;
    coarse_fine.lambda_eff_km = 220.0;
    coarse_fine.seed = derive_seed(o.seed, 3, 2);
    const FieldStack S2 = generate(coarse_fine);

    Scenario sc{"future_shift", {}, L + S, {}};
    FieldStack src_fine = L + S2;
    auto add_mean = [&](FieldStack& s) {
        for (std::size_t t = 0; t < s.n_times(); ++t) {
            const double m = s.times()[t] >= split ? mu * (1.0 + drift_pct / 100.0) : mu;
            for (auto& x : s.slice(t, 0)) x += m;
        }
    };
    add_mean(sc.target);
    add_mean(src_fine);
    sc.source = subsample(src_fine, 2);
    sc.truth.set("scenario", sc.name);
    sc.truth.set("delta_full_pct", drift_pct);
    sc.truth.set("cutoff_km", cutoff_km);
    sc.truth.set("hist", format_date(start) + "," + format_date(split - 1));
    sc.truth.set("fut", format_date(split) + "," + format_date(stop - 1));
    sc.truth.set("split_date", format_date(split));
    sc.truth.set("seed", static_cast<std::int64_t>(o.seed));
    return sc;
}

}  // namespace

Scenario make_scenario(const std::string& name, const ScenarioOptions& opts) {
    if (name == "shared_largescale") return shared_largescale(opts);
    if (name == "biased_source") return biased_source(opts);
    if (name == "future_shift") return future_shift(opts);
    fail(ErrorKind::Usage, "unknown scenario '" + name + "' (expected shared_largescale, biased_source or future_shift)");
}

void write_scenario(const Scenario& sc, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path d(dir);
    write_fieldstack(sc.source, (d / "source.wfld").string());
    write_fieldstack(sc.target, (d / "target.wfld").string());
    write_file((d / "truth.txt").string(), sc.truth.to_string());
    if (const auto split = sc.truth.get("split_date")) {
        const Day s = parse_date(*split);
        const auto [sh, sf] = split_at(sc.source, s);
        const auto [th, tf] = split_at(sc.target, s);
        write_fieldstack(sh, (d / "source_train.wfld").string());
        write_fieldstack(sf, (d / "source_eval.wfld").string());
        write_fieldstack(th, (d / "target_train.wfld").string());
        write_fieldstack(tf, (d / "target_eval.wfld").string());
    }
}

}  // namespace scalesplit
