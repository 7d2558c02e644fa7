#pragma once

// Random small instances for the metric suite, checked against the loop
// oracles. Shared by the metric unit tests and the acceptance run.

#include "oracles.hpp"
#include "test_util.hpp"

#include "scalesplit/metrics.hpp"
#include "scalesplit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace metric_cases {

using namespace scalesplit;

struct Instance {
    FieldStack obs, method, gcm;
    std::vector<double> altitude;
    MetricConfig cfg;
};

/// Ten mid-month dates: DJF 2000 and MAM 2000 complete, DJF 2001 complete,
/// March 2001 alone.
inline std::vector<Day> season_dates() {
    const int ym[10][2] = {{1999, 12}, {2000, 1}, {2000, 2}, {2000, 3}, {2000, 4},
                           {2000, 5},  {2000, 12}, {2001, 1}, {2001, 2}, {2001, 3}};
    std::vector<Day> d;
    for (auto& p : ym) d.push_back(day_from_civil(p[0], static_cast<unsigned>(p[1]), 15));
    return d;
}

inline Instance make(std::uint64_t seed) {
    RngStream pick(derive_seed(seed, 0xca5e));
    const std::size_t nr = 2 + pick.below(4), nc = 2 + pick.below(4), nv = 1 + pick.below(3);
    Instance in;
    FieldStack base(GridSpec::uniform_km(nr, nc, 25.0, 25.0), testutil::var_names(nv), season_dates());
    in.obs = testutil::random_like(base, derive_seed(seed, 1), 1.0, 5.0);
    in.method = in.obs + testutil::random_like(base, derive_seed(seed, 2), 0.7);
    in.gcm = testutil::random_like(base, derive_seed(seed, 3), 1.2, 6.0);
    if (pick.uniform() < 0.5 && nr * nc > 4) {
        auto mask = testutil::random_mask(nr * nc, 0.75, derive_seed(seed, 4));
        std::size_t n = 0;
        for (auto m : mask) n += m;
        if (n >= 3) {
            in.obs.set_mask(mask);
            in.method.set_mask(mask);
            in.gcm.set_mask(mask);
        }
    }
    in.altitude.resize(nr * nc);
    for (std::size_t c = 0; c < in.altitude.size(); ++c) in.altitude[c] = 1600.0 * pick.uniform();
    // at least two valid cells up high
    std::size_t high = 0;
    for (std::size_t c = 0; c < in.altitude.size(); ++c)
        if (in.obs.valid(c) && high < 2) in.altitude[c] = 1000.0 + c, ++high;

    in.cfg.k_max = 1.0;
    in.cfg.spectrum_bins = 8;
    in.cfg.h_max_km = 90.0;
    in.cfg.h_bin_km = 30.0;
    in.cfg.theta_alt = 800.0;
    in.cfg.q = 0.8;
    in.cfg.min_extreme_times = 5;
    in.cfg.hist = Period{day_from_civil(1999, 12, 1), day_from_civil(2000, 6, 30)};
    in.cfg.fut = Period{day_from_civil(2000, 12, 1), day_from_civil(2001, 12, 31)};
    return in;
}

struct Outcome {
    double max_err = 0.0;
    std::string worst;
    bool zero_at_identity = true;
    std::string zero_failure;
    std::size_t n_compared = 0;
};

inline void compare(Outcome& o, const std::string& what, const std::vector<double>& got,
                    const std::vector<double>& want) {
    if (got.size() != want.size()) {
        o.max_err = INFINITY;
        o.worst = what + " (length)";
        return;
    }
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double scale = std::max(1.0, std::abs(want[i]));
        const double e = std::abs(got[i] - want[i]) / scale;
        ++o.n_compared;
        if (!(e <= o.max_err)) {
            o.max_err = std::isnan(e) ? INFINITY : e;
            o.worst = what;
        }
    }
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / v.size();
}

/// Every metric against the oracles (relative to max(1, |value|)), plus the
/// exact zero-at-identity checks.
inline Outcome check(std::uint64_t seed) {
    const auto in = make(seed);
    const auto& m = in.method;
    const auto& o = in.obs;
    Outcome out;

    const auto [dmu, dsig] = delta_mean_std(m, o);
    compare(out, "delta_mu", dmu.per_var, oracle::delta_mu(m, o));
    compare(out, "delta_sigma", dsig.per_var, oracle::delta_sigma(m, o));
    if (o.n_vars() >= 2) compare(out, "delta_rho", {intervar_corr(m, o).value}, {oracle::delta_rho(m, o)});
    compare(out, "delta_R", spatial_spearman(m, o, in.cfg).score.per_var, oracle::delta_R(m, o));
    if (o.fully_valid())
        compare(out, "SSM", ssm(m, o, in.cfg).per_var, oracle::ssm(m, o, in.cfg.k_max, in.cfg.spectrum_bins));
    compare(out, "OVM", variogram_metric(m, o, in.altitude, in.cfg).score.per_var,
            oracle::ovm(m, o, in.altitude, in.cfg.theta_alt, in.cfg.h_max_km, in.cfg.h_bin_km));
    compare(out, "KS", ks_statistic(m, o).per_var, oracle::ks_stack(m, o));
    const auto [f, I] = extreme_metrics(m, o, in.cfg);
    const auto ex = oracle::extremes(m, o, in.cfg.q);
    compare(out, "f", f.per_var, ex.f);
    compare(out, "I", I.per_var, ex.I);

    const auto g = gcm_consistency(m, in.gcm, in.cfg);
    compare(out, "rho_GCM", g.rho.per_var, oracle::rho_gcm(m, in.gcm));
    compare(out, "A", g.anomalies.per_var, oracle::annual_anomaly(m, in.gcm));
    std::vector<double> dfull, dseason;
    const auto& h = *in.cfg.hist;
    const auto& fu = *in.cfg.fut;
    for (std::size_t v = 0; v < o.n_vars(); ++v) {
        dfull.push_back(std::abs(oracle::delta_full_pct(m, v, h.start, h.end, fu.start, fu.end) -
                                 oracle::delta_full_pct(in.gcm, v, h.start, h.end, fu.start, fu.end)));
        dseason.push_back(oracle::delta_season(m, in.gcm, v, h.start, h.end, fu.start, fu.end));
    }
    compare(out, "delta_full", g.delta_full.per_var, dfull);
    compare(out, "delta_season", g.delta_season.per_var, dseason);

    // identity: every error metric is exactly zero
    auto zero = [&](const std::string& what, double value) {
        if (value != 0.0 && out.zero_at_identity) {
            out.zero_at_identity = false;
            out.zero_failure = what + " = " + std::to_string(value);
        }
    };
    const auto [zmu, zsig] = delta_mean_std(o, o);
    zero("delta_mu", zmu.value);
    zero("delta_sigma", zsig.value);
    if (o.n_vars() >= 2) zero("delta_rho", intervar_corr(o, o).value);
    zero("delta_R", spatial_spearman(o, o, in.cfg).score.value);
    if (o.fully_valid()) zero("SSM", ssm(o, o, in.cfg).value);
    zero("OVM", variogram_metric(o, o, in.altitude, in.cfg).score.value);
    zero("KS", ks_statistic(o, o).value);
    const auto [zf, zI] = extreme_metrics(o, o, in.cfg);
    zero("f", zf.value);
    zero("I", zI.value);
    const auto zg = gcm_consistency(in.gcm, in.gcm, in.cfg);
    if (std::abs(zg.rho.value - 1.0) > 1e-12) zero("rho_GCM - 1", zg.rho.value - 1.0);
    zero("A", zg.anomalies.value);
    zero("delta_full", zg.delta_full.value);
    zero("delta_season", zg.delta_season.value);
    return out;
}

}  // namespace metric_cases
