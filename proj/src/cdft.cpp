#include "scalesplit/cdft.hpp"

#include "scalesplit/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scalesplit {

EmpiricalCDF::EmpiricalCDF(std::vector<double> samples) {
    samples.erase(std::remove_if(samples.begin(), samples.end(), [](double v) { return std::isnan(v); }),
                  samples.end());
    if (samples.empty()) fail(ErrorKind::Degenerate, "empirical CDF of an empty sample");
    std::sort(samples.begin(), samples.end());
    sorted_ = std::move(samples);
}

double EmpiricalCDF::operator()(double x) const {
    const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
    return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

double EmpiricalCDF::quantile(double p) const {
    p = std::clamp(p, 0.0, 1.0);
    const double pos = p * static_cast<double>(sorted_.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= sorted_.size()) return sorted_.back();
    const double f = pos - static_cast<double>(i);
    return sorted_[i] + f * (sorted_[i + 1] - sorted_[i]);
}

double EmpiricalCDF::interpolated(double x) const {
    const std::size_t n = sorted_.size();
    if (n == 1) return x < sorted_[0] ? 0.0 : (x > sorted_[0] ? 1.0 : 0.5);
    if (x < sorted_.front()) return 0.0;
    if (x > sorted_.back()) return 1.0;
    const double denom = static_cast<double>(n - 1);
    const auto lo = std::lower_bound(sorted_.begin(), sorted_.end(), x);
    const auto hi = std::upper_bound(sorted_.begin(), sorted_.end(), x);
    if (lo != hi) {
        const double first = static_cast<double>(lo - sorted_.begin());
        const double last = static_cast<double>(hi - sorted_.begin()) - 1.0;
        return 0.5 * (first + last) / denom;
    }
    const std::size_t j = static_cast<std::size_t>(lo - sorted_.begin());  // sorted_[j-1] < x < sorted_[j]
    const double a = sorted_[j - 1], b = sorted_[j];
    return (static_cast<double>(j - 1) + (x - a) / (b - a)) / denom;
}

double EmpiricalCDF::mean() const {
    return std::accumulate(sorted_.begin(), sorted_.end(), 0.0) / static_cast<double>(sorted_.size());
}

double transfer(double x, const EmpiricalCDF& from, const EmpiricalCDF& to) {
    if (x < from.min()) return to.quantile(0.0) + (x - from.min());
    if (x > from.max()) return to.quantile(1.0) + (x - from.max());
    return to.quantile(from.interpolated(x));
}

std::vector<double> quantile_map(std::span<const double> x, const EmpiricalCDF& src_hist,
                                 const EmpiricalCDF& obs_hist) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = transfer(x[i], src_hist, obs_hist);
    return out;
}

std::vector<double> cdft_block(std::span<const double> obs_hist, std::span<const double> src_hist,
                               std::span<const double> src_fut, bool* fallback) {
    const EmpiricalCDF oh({obs_hist.begin(), obs_hist.end()});
    const EmpiricalCDF sh_raw({src_hist.begin(), src_hist.end()});
    const double shift = oh.mean() - sh_raw.mean();
    std::vector<double> out(src_fut.size());
    const bool degenerate = sh_raw.constant() || EmpiricalCDF({src_fut.begin(), src_fut.end()}).constant();
    if (fallback) *fallback = degenerate;
    if (degenerate) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = src_fut[i] + shift;
        return out;
    }
    // Both source periods get the historical mean offset first so that the
    // three CDFs overlap; otherwise F_src(x) saturates on the obs range.
    std::vector<double> h(src_hist.begin(), src_hist.end()), f(src_fut.begin(), src_fut.end());
    for (auto& x : h) x += shift;
    for (auto& x : f) x += shift;
    const EmpiricalCDF sh(h), sf(f);
    // Solve F_obs_fut(y) = F_src_fut(x) for y: y = M_{sh->sf}(M_{sf->oh}(x)).
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = transfer(transfer(f[i], sf, oh), sh, sf);
    return out;
}

CdftResult cdft_correct(const FieldStack& obs_hist, const FieldStack& src_hist, const FieldStack& src_fut,
                        const CdftOptions& opts) {
    if (!obs_hist.grid().same_as(src_hist.grid()) || !obs_hist.grid().same_as(src_fut.grid()))
        fail(ErrorKind::Extent, "CDF-t inputs must share one grid");
    if (obs_hist.variables() != src_hist.variables() || obs_hist.variables() != src_fut.variables())
        fail(ErrorKind::Extent, "CDF-t inputs must share variables");

    auto month_of = [](Day d) { return civil_from_day(d).month; };
    auto groups = [&](const FieldStack& s) {
        std::vector<std::vector<std::size_t>> g(opts.monthly ? 12 : 1);
        for (std::size_t t = 0; t < s.n_times(); ++t) g[opts.monthly ? month_of(s.times()[t]) - 1 : 0].push_back(t);
        return g;
    };
    const auto g_oh = groups(obs_hist), g_sh = groups(src_hist), g_sf = groups(src_fut);

    CdftResult res{src_fut, 0};
    std::vector<std::uint8_t> mask(src_fut.n_cells());
    for (std::size_t cell = 0; cell < mask.size(); ++cell)
        mask[cell] = obs_hist.valid(cell) && src_hist.valid(cell) && src_fut.valid(cell);
    res.corrected.set_mask(mask);
    std::vector<double> a, b, c;
    for (std::size_t v = 0; v < src_fut.n_vars(); ++v)
        for (std::size_t cell = 0; cell < src_fut.n_cells(); ++cell) {
            if (!mask[cell]) continue;
            for (std::size_t k = 0; k < g_sf.size(); ++k) {
                if (g_sf[k].empty()) continue;
                a.clear(), b.clear(), c.clear();
                for (auto t : g_oh[k]) a.push_back(obs_hist.slice(t, v)[cell]);
                for (auto t : g_sh[k]) b.push_back(src_hist.slice(t, v)[cell]);
                for (auto t : g_sf[k]) c.push_back(src_fut.slice(t, v)[cell]);
                if (a.size() < opts.min_samples || b.size() < opts.min_samples || c.size() < opts.min_samples)
                    fail(ErrorKind::Degenerate, "CDF-t needs at least " + std::to_string(opts.min_samples) +
                                                    " samples per block");
                bool fb = false;
                const auto out = cdft_block(a, b, c, &fb);
                res.fallback_blocks += fb ? 1 : 0;
                for (std::size_t i = 0; i < out.size(); ++i) res.corrected.slice(g_sf[k][i], v)[cell] = out[i];
            }
        }
    return res;
}

}  // namespace scalesplit
