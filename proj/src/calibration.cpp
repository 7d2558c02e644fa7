#include "scalesplit/calibration.hpp"

#include "scalesplit/error.hpp"
#include "scalesplit/kv.hpp"
#include "scalesplit/rng.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace scalesplit {

double crps(std::span<const double> members, double obs) {
    const std::size_t n = members.size();
    if (n == 0) fail(ErrorKind::Degenerate, "CRPS of an empty ensemble");
    double skill = 0.0;
    for (double x : members) skill += std::abs(x - obs);
    std::vector<double> s(members.begin(), members.end());
    std::sort(s.begin(), s.end());
    // sum_{i,j} |x_i - x_j| = 2 sum_i (2i - n + 1) x_(i), 0-based
    double pair = 0.0;
    for (std::size_t i = 0; i < n; ++i) pair += (2.0 * static_cast<double>(i) - static_cast<double>(n) + 1.0) * s[i];
    pair *= 2.0;
    const double nn = static_cast<double>(n);
    return skill / nn - 0.5 * pair / (nn * nn);
}

PointSet collect_points(const Ensemble& ens, const FieldStack& obs, std::optional<std::size_t> var) {
    if (ens.empty()) fail(ErrorKind::Degenerate, "empty ensemble");
    for (const auto& m : ens) obs.require_same_layout(m, "ensemble member");
    PointSet pts;
    pts.n_members = ens.size();
    const std::size_t v0 = var ? *var : 0, v1 = var ? *var + 1 : obs.n_vars();
    if (v1 > obs.n_vars()) fail(ErrorKind::Usage, "variable index out of range");
    for (std::size_t t = 0; t < obs.n_times(); ++t)
        for (std::size_t v = v0; v < v1; ++v) {
            const auto o = obs.slice(t, v);
            for (std::size_t c = 0; c < o.size(); ++c) {
                if (!obs.valid(c)) continue;
                pts.obs.push_back(o[c]);
                for (const auto& m : ens) pts.members.push_back(m.slice(t, v)[c]);
            }
        }
    return pts;
}

double mean_crps(const PointSet& pts) {
    if (pts.size() == 0) fail(ErrorKind::Degenerate, "no verification points");
    double sum = 0.0;
    for (std::size_t p = 0; p < pts.size(); ++p) sum += crps(pts.ensemble(p), pts.obs[p]);
    return sum / static_cast<double>(pts.size());
}

SpreadSkill spread_skill(const PointSet& pts) {
    if (pts.n_members < 2) fail(ErrorKind::SpreadUndefined, "spread-skill needs at least two members");
    if (pts.size() == 0) fail(ErrorKind::Degenerate, "no verification points");
    const double n = static_cast<double>(pts.n_members);
    double var_sum = 0.0, err_sum = 0.0;
    for (std::size_t p = 0; p < pts.size(); ++p) {
        const auto e = pts.ensemble(p);
        double mean = 0.0;
        for (double x : e) mean += x;
        mean /= n;
        double ss = 0.0;
        for (double x : e) ss += (x - mean) * (x - mean);
        var_sum += ss / (n - 1.0);
        err_sum += (mean - pts.obs[p]) * (mean - pts.obs[p]);
    }
    SpreadSkill s;
    const double np = static_cast<double>(pts.size());
    s.spread = std::sqrt(var_sum / np);
    s.rmse = std::sqrt(err_sum / np);
    if (s.rmse == 0.0) {
        s.ratio = std::numeric_limits<double>::infinity();
        s.degenerate = true;
    } else {
        s.ratio = s.spread / s.rmse;
    }
    return s;
}

std::vector<std::size_t> rank_histogram(const PointSet& pts, std::uint64_t seed) {
    if (pts.n_members < 2) fail(ErrorKind::SpreadUndefined, "rank histogram needs at least two members");
    std::vector<std::size_t> counts(pts.n_members + 1, 0);
    const CounterRng rng(seed);
    for (std::size_t p = 0; p < pts.size(); ++p) {
        std::size_t below = 0, ties = 0;
        for (double x : pts.ensemble(p)) {
            if (x < pts.obs[p])
                ++below;
            else if (x == pts.obs[p])
                ++ties;
        }
        const std::size_t rank = below + (ties ? static_cast<std::size_t>(rng.bits(p) % (ties + 1)) : 0);
        ++counts[rank];
    }
    return counts;
}

double ensemble_quantile(std::vector<double> sorted_members, double q) {
    const std::size_t n = sorted_members.size();
    if (n == 0) fail(ErrorKind::Degenerate, "quantile of an empty ensemble");
    const double h = std::clamp(q * static_cast<double>(n + 1), 1.0, static_cast<double>(n));
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo >= n) return sorted_members[n - 1];
    const double f = h - static_cast<double>(lo);
    return sorted_members[lo - 1] + f * (sorted_members[lo] - sorted_members[lo - 1]);
}

std::vector<ReliabilityPoint> reliability(const PointSet& pts, const std::vector<double>& levels) {
    if (pts.n_members < 2) fail(ErrorKind::SpreadUndefined, "reliability needs at least two members");
    if (pts.size() == 0) fail(ErrorKind::Degenerate, "no verification points");
    for (double p : levels)
        if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::Usage, "reliability levels must lie in (0, 1)");
    std::vector<std::size_t> inside(levels.size(), 0);
    std::vector<double> s(pts.n_members);
    for (std::size_t p = 0; p < pts.size(); ++p) {
        const auto e = pts.ensemble(p);
        std::copy(e.begin(), e.end(), s.begin());
        std::sort(s.begin(), s.end());
        for (std::size_t l = 0; l < levels.size(); ++l) {
            const double lo = ensemble_quantile(s, 0.5 * (1.0 - levels[l]));
            const double hi = ensemble_quantile(s, 0.5 * (1.0 + levels[l]));
            if (pts.obs[p] >= lo && pts.obs[p] <= hi) ++inside[l];
        }
    }
    std::vector<ReliabilityPoint> out;
    for (std::size_t l = 0; l < levels.size(); ++l)
        out.push_back({levels[l], static_cast<double>(inside[l]) / static_cast<double>(pts.size())});
    return out;
}

std::vector<double> default_levels() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}; }

ChiSquare chi_square_uniform(const std::vector<std::size_t>& counts) {
    if (counts.size() < 2) fail(ErrorKind::Degenerate, "chi-square needs at least two bins");
    double total = 0.0;
    for (auto c : counts) total += static_cast<double>(c);
    if (total == 0.0) fail(ErrorKind::Degenerate, "chi-square of an empty histogram");
    const double expected = total / static_cast<double>(counts.size());
    ChiSquare r;
    for (auto c : counts) r.statistic += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
    const double dof = static_cast<double>(counts.size() - 1);
    r.p_value = boost::math::gamma_q(0.5 * dof, 0.5 * r.statistic);
    return r;
}

namespace {

VariableCalibration diagnose(const PointSet& pts, const std::string& name, const std::vector<double>& levels,
                             std::uint64_t seed) {
    VariableCalibration vc;
    vc.variable = name;
    vc.crps = mean_crps(pts);
    vc.spread_skill = spread_skill(pts);
    vc.rank_histogram = rank_histogram(pts, seed);
    vc.reliability = reliability(pts, levels);
    vc.n_points = pts.size();
    return vc;
}

}  // namespace

CalibrationReport calibrate(const Ensemble& ens, const FieldStack& obs, double noise_scale,
                            const std::vector<double>& levels, std::uint64_t seed) {
    if (ens.size() < 2) fail(ErrorKind::SpreadUndefined, "calibration needs at least two members");
    CalibrationReport report;
    report.noise_scale = noise_scale;
    for (std::size_t v = 0; v < obs.n_vars(); ++v)
        report.variables.push_back(diagnose(collect_points(ens, obs, v), obs.variables()[v], levels, seed));
    report.variables.push_back(diagnose(collect_points(ens, obs), "all", levels, seed));
    return report;
}

TuneResult tune_noise_scale(const std::function<Ensemble(double)>& generate, const FieldStack& obs,
                            const std::vector<double>& a_grid, const std::vector<double>& levels,
                            std::uint64_t seed) {
    if (a_grid.empty()) fail(ErrorKind::Usage, "noise-scale grid is empty");
    TuneResult res;
    double best = std::numeric_limits<double>::infinity();
    for (double a : a_grid) {
        res.reports.push_back(calibrate(generate(a), obs, a, levels, seed));
        const double dist = std::abs(res.reports.back().pooled().spread_skill.ratio - 1.0);
        if (dist < best) {
            best = dist;
            res.recommended = a;
        }
    }
    // Spread should grow with a; check in order of increasing a.
    std::vector<std::size_t> order(a_grid.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a_grid[x] < a_grid[y]; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        const double prev = res.reports[order[i - 1]].pooled().spread_skill.spread;
        const double cur = res.reports[order[i]].pooled().spread_skill.spread;
        if (a_grid[order[i]] > a_grid[order[i - 1]] && !(cur > prev)) {
            res.spread_monotone = false;
            res.warnings.push_back("spread does not increase from a=" + format_double(a_grid[order[i - 1]]) +
                                   " to a=" + format_double(a_grid[order[i]]) + "; check member seeding");
        }
    }
    return res;
}

std::string calibration_summary_csv(const std::vector<CalibrationReport>& reports) {
    std::string out = "noise_scale,variable,n_points,crps,spread,rmse,spread_skill,degenerate\n";
    for (const auto& r : reports)
        for (const auto& v : r.variables)
            out += format_double(r.noise_scale) + "," + v.variable + "," + std::to_string(v.n_points) + "," +
                   format_double(v.crps) + "," + format_double(v.spread_skill.spread) + "," +
                   format_double(v.spread_skill.rmse) + "," + format_double(v.spread_skill.ratio) + "," +
                   (v.spread_skill.degenerate ? "1" : "0") + "\n";
    return out;
}

std::string rank_histogram_csv(const CalibrationReport& report) {
    std::string out = "variable,bin,count\n";
    for (const auto& v : report.variables)
        for (std::size_t b = 0; b < v.rank_histogram.size(); ++b)
            out += v.variable + "," + std::to_string(b) + "," + std::to_string(v.rank_histogram[b]) + "\n";
    return out;
}

std::string reliability_csv(const CalibrationReport& report) {
    std::string out = "variable,nominal,empirical\n";
    for (const auto& v : report.variables)
        for (const auto& p : v.reliability)
            out += v.variable + "," + format_double(p.nominal) + "," + format_double(p.empirical) + "\n";
    return out;
}

}  // namespace scalesplit
