#include "scalesplit/metrics.hpp"

#include "scalesplit/cdft.hpp"
#include "scalesplit/error.hpp"
#include "scalesplit/rng.hpp"
#include "scalesplit/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace scalesplit {

void MetricConfig::validate() const {
    if (!(q > 0.0 && q < 1.0)) fail(ErrorKind::Usage, "extreme quantile q must lie in (0, 1)");
    if (!(theta_alt >= 0.0)) fail(ErrorKind::Usage, "theta_alt must be non-negative");
    if (!(h_bin_km > 0.0 && h_max_km > h_bin_km)) fail(ErrorKind::Usage, "need h_max_km > h_bin_km > 0");
    if (!(k_max > 0.0)) fail(ErrorKind::Usage, "k_max must be positive");
    if (hist && hist->end < hist->start) fail(ErrorKind::Usage, "historical period ends before it starts");
    if (fut && fut->end < fut->start) fail(ErrorKind::Usage, "future period ends before it starts");
}

KeyValues MetricConfig::to_kv() const {
    KeyValues kv;
    kv.set("metrics.k_max", k_max);
    kv.set("metrics.h_max_km", h_max_km);
    kv.set("metrics.h_bin_km", h_bin_km);
    kv.set("metrics.theta_alt", theta_alt);
    kv.set("metrics.q", q);
    kv.set("metrics.spectrum_bins", static_cast<std::int64_t>(spectrum_bins));
    kv.set("metrics.spearman_max_cells", static_cast<std::int64_t>(spearman_max_cells));
    kv.set("metrics.spearman_subsample", static_cast<std::int64_t>(spearman_subsample));
    kv.set("metrics.min_extreme_times", static_cast<std::int64_t>(min_extreme_times));
    if (hist) kv.set("metrics.hist", format_date(hist->start) + "," + format_date(hist->end));
    if (fut) kv.set("metrics.fut", format_date(fut->start) + "," + format_date(fut->end));
    return kv;
}

void require_aligned(const FieldStack& a, const FieldStack& b, const std::string& what) {
    if (!a.grid().same_as(b.grid())) fail(ErrorKind::Extent, what + ": grids differ");
    if (a.mask() != b.mask()) fail(ErrorKind::Extent, what + ": masks differ");
    if (a.variables() != b.variables()) fail(ErrorKind::Extent, what + ": variables differ");
}

namespace {

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void finish(Score& s) { s.value = mean_of(s.per_var); }

std::vector<std::size_t> valid_cells(const FieldStack& s) {
    std::vector<std::size_t> cells;
    for (std::size_t c = 0; c < s.n_cells(); ++c)
        if (s.valid(c)) cells.push_back(c);
    return cells;
}

std::vector<double> series(const FieldStack& s, std::size_t v, std::size_t cell) {
    std::vector<double> out(s.n_times());
    for (std::size_t t = 0; t < s.n_times(); ++t) out[t] = s.slice(t, v)[cell];
    return out;
}

void require_times(const FieldStack& s, std::size_t n, const std::string& what) {
    if (s.n_times() < n) fail(ErrorKind::Degenerate, what + " needs at least " + std::to_string(n) + " time steps");
}

// Relative RMS difference of two curves: sqrt(mean (m - o)^2) / mean o.
double relative_rms(const std::vector<double>& m, const std::vector<double>& o, Score& score,
                    const std::string& label) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) {
        num += (m[i] - o[i]) * (m[i] - o[i]);
        den += o[i];
    }
    const double n = static_cast<double>(o.size());
    num = std::sqrt(num / n);
    den /= n;
    if (den == 0.0) {
        score.flags.push_back(label + ": reference curve is zero");
        return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return num / den;
}

}  // namespace

std::pair<Score, Score> delta_mean_std(const FieldStack& method, const FieldStack& obs) {
    require_aligned(method, obs, "delta_mean_std");
    require_times(method, 1, "delta_mean_std");
    require_times(obs, 1, "delta_mean_std");
    Score dm{"delta_mu", method.variables(), {}, 0.0, 0, {}};
    Score ds{"delta_sigma", method.variables(), {}, 0.0, 0, {}};
    const auto cells = valid_cells(obs);
    if (cells.empty()) fail(ErrorKind::Degenerate, "no valid cells");
    for (std::size_t v = 0; v < obs.n_vars(); ++v) {
        double sm = 0.0, ss = 0.0;
        for (auto c : cells) {
            auto moments = [&](const FieldStack& s) {
                const auto x = series(s, v, c);
                const double mu = mean_of(x);
                double var = 0.0;
                for (double e : x) var += (e - mu) * (e - mu);
                return std::pair{mu, std::sqrt(var / static_cast<double>(x.size()))};
            };
            const auto [mm, sdm] = moments(method);
            const auto [mo, sdo] = moments(obs);
            sm += std::abs(mm - mo);
            ss += std::abs(sdm - sdo);
        }
        dm.per_var.push_back(sm / static_cast<double>(cells.size()));
        ds.per_var.push_back(ss / static_cast<double>(cells.size()));
    }
    finish(dm);
    finish(ds);
    return {dm, ds};
}

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) fail(ErrorKind::Extent, "pearson: series lengths differ");
    const double ma = mean_of(a), mb = mean_of(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return std::nullopt;
    return sab / std::sqrt(saa * sbb);
}

Score intervar_corr(const FieldStack& method, const FieldStack& obs) {
    require_aligned(method, obs, "intervar_corr");
    if (obs.n_vars() < 2) fail(ErrorKind::Degenerate, "inter-variable correlation needs at least two variables");
    require_times(method, 3, "inter-variable correlation");
    require_times(obs, 3, "inter-variable correlation");
    Score s{"delta_rho", {}, {}, 0.0, 0, {}};
    const auto cells = valid_cells(obs);
    for (std::size_t v1 = 0; v1 < obs.n_vars(); ++v1)
        for (std::size_t v2 = v1 + 1; v2 < obs.n_vars(); ++v2) {
            double sum = 0.0;
            std::size_t used = 0;
            for (auto c : cells) {
                const auto rm = pearson(series(method, v1, c), series(method, v2, c));
                const auto ro = pearson(series(obs, v1, c), series(obs, v2, c));
                if (!rm || !ro) {
                    ++s.excluded;
                    continue;
                }
                sum += std::abs(*rm - *ro);
                ++used;
            }
            s.labels.push_back(obs.variables()[v1] + "|" + obs.variables()[v2]);
            if (used == 0) {
                s.flags.push_back(s.labels.back() + ": every cell has zero temporal variance");
                s.per_var.push_back(0.0);
            } else {
                s.per_var.push_back(sum / static_cast<double>(used));
            }
        }
    if (s.excluded) s.flags.push_back(std::to_string(s.excluded) + " cell/pair entries excluded for zero variance");
    finish(s);
    return s;
}

std::vector<double> average_ranks(const std::vector<double>& values) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

std::vector<double> spearman_matrix(const FieldStack& stack, std::size_t var, const std::vector<std::size_t>& cells) {
    const std::size_t n = cells.size(), T = stack.n_times();
    std::vector<double> z(n * T);  // [cell][t], centred and unit-norm rank series
    std::vector<std::uint8_t> constant(n, 0);
    std::vector<double> frame(n);
    for (std::size_t t = 0; t < T; ++t) {
        const auto s = stack.slice(t, var);
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += s[cells[i]];
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) frame[i] = s[cells[i]] - mean;
        const auto r = average_ranks(frame);
        for (std::size_t i = 0; i < n; ++i) z[i * T + t] = r[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        double* zi = z.data() + i * T;
        const double m = std::accumulate(zi, zi + T, 0.0) / static_cast<double>(T);
        double ss = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            zi[t] -= m;
            ss += zi[t] * zi[t];
        }
        if (ss == 0.0) {
            constant[i] = 1;
            continue;
        }
        const double inv = 1.0 / std::sqrt(ss);
        for (std::size_t t = 0; t < T; ++t) zi[t] *= inv;
    }
    std::vector<double> R(n * n, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
        R[p * n + p] = 1.0;
        if (constant[p]) continue;
        for (std::size_t q = p + 1; q < n; ++q) {
            if (constant[q]) continue;
            double acc = 0.0;
            for (std::size_t t = 0; t < T; ++t) acc += z[p * T + t] * z[q * T + t];
            R[p * n + q] = R[q * n + p] = acc;
        }
    }
    return R;
}

SpearmanResult spatial_spearman(const FieldStack& method, const FieldStack& obs, const MetricConfig& cfg,
                                const std::vector<double>* altitude) {
    require_aligned(method, obs, "spatial_spearman");
    require_times(method, 3, "spatial Spearman");
    require_times(obs, 3, "spatial Spearman");
    SpearmanResult res;
    res.score = {altitude ? "delta_R_mountain" : "delta_R", method.variables(), {}, 0.0, 0, {}};
    std::vector<std::size_t> cells;
    for (auto c : valid_cells(obs))
        if (!altitude || (*altitude)[c] > cfg.theta_alt) cells.push_back(c);
    if (cells.size() < 2) fail(ErrorKind::Degenerate, "spatial Spearman needs at least two cells in the region");
    if (cells.size() > cfg.spearman_max_cells) {
        if (cfg.spearman_subsample == 0)
            fail(ErrorKind::Usage, "spatial Spearman on " + std::to_string(cells.size()) +
                                       " cells exceeds the guard of " + std::to_string(cfg.spearman_max_cells) +
                                       "; set metrics.spearman_subsample");
        RngStream rng(derive_seed(cfg.seed, 0x5e));
        const std::size_t k = std::min(cfg.spearman_subsample, cfg.spearman_max_cells);
        for (std::size_t i = 0; i < k; ++i) std::swap(cells[i], cells[i + rng.below(cells.size() - i)]);
        cells.resize(k);
        std::sort(cells.begin(), cells.end());
        res.score.flags.push_back("subsampled to " + std::to_string(k) + " cells");
    }
    const std::size_t n = cells.size();
    const auto& grid = obs.grid();
    for (std::size_t v = 0; v < obs.n_vars(); ++v) {
        const auto Rm = spearman_matrix(method, v, cells);
        const auto Ro = spearman_matrix(obs, v, cells);
        double sum = 0.0;
        DistanceCurve curve;
        curve.variable = obs.variables()[v];
        std::map<std::size_t, std::array<double, 3>> bins;  // sum|Rm|, sum|Ro|, count
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                sum += 2.0 * std::abs(Rm[p * n + q] - Ro[p * n + q]);
                const double d = grid.distance_km(cells[p], cells[q]);
                const auto b = static_cast<std::size_t>(std::max(0.0, std::ceil(d / cfg.h_bin_km) - 1.0));
                auto& acc = bins[b];
                acc[0] += std::abs(Rm[p * n + q]);
                acc[1] += std::abs(Ro[p * n + q]);
                acc[2] += 1.0;
            }
        for (const auto& [b, acc] : bins) {
            curve.h_km.push_back(cfg.h_bin_km * (static_cast<double>(b) + 0.5));
            curve.method.push_back(acc[0] / acc[2]);
            curve.obs.push_back(acc[1] / acc[2]);
            curve.n_pairs.push_back(static_cast<std::size_t>(acc[2]));
        }
        res.score.per_var.push_back(sum / static_cast<double>(n * n));
        res.curves.push_back(std::move(curve));
    }
    finish(res.score);
    return res;
}

Score ssm(const FieldStack& method, const FieldStack& obs, const MetricConfig& cfg, std::vector<SpectrumCurve>* curves) {
    require_aligned(method, obs, "ssm");
    Score s{"SSM", obs.variables(), {}, 0.0, 0, {}};
    for (std::size_t v = 0; v < obs.n_vars(); ++v) {
        const auto pm = isotropic_spectrum(method, v, cfg.spectrum_bins);
        const auto po = isotropic_spectrum(obs, v, cfg.spectrum_bins);
        std::vector<double> m, o, k;
        for (std::size_t b = 0; b < po.size(); ++b)
            if (po.k_bins[b] <= cfg.k_max) {
                m.push_back(pm.power[b]);
                o.push_back(po.power[b]);
                k.push_back(po.k_bins[b]);
            }
        if (o.empty()) fail(ErrorKind::Usage, "k_max lies below the first spectrum bin");
        s.per_var.push_back(relative_rms(m, o, s, obs.variables()[v]));
        if (curves) curves->push_back({obs.variables()[v], po.k_bins, pm.power, po.power});
    }
    finish(s);
    return s;
}

Score ssm_band(const FieldStack& method, const FieldStack& obs, double k_lo, double k_hi, std::size_t n_bins) {
    require_aligned(method, obs, "ssm_band");
    Score s{"SSM_band", obs.variables(), {}, 0.0, 0, {}};
    for (std::size_t v = 0; v < obs.n_vars(); ++v) {
        const auto pm = isotropic_spectrum(method, v, n_bins);
        const auto po = isotropic_spectrum(obs, v, n_bins);
        std::vector<double> m, o;
        for (std::size_t b = 0; b < po.size(); ++b)
            if (po.k_bins[b] >= k_lo && po.k_bins[b] <= k_hi) {
                m.push_back(pm.power[b]);
                o.push_back(po.power[b]);
            }
        if (o.empty()) fail(ErrorKind::Usage, "no spectrum bins inside the requested band");
        s.per_var.push_back(relative_rms(m, o, s, obs.variables()[v]));
    }
    finish(s);
    return s;
}

VariogramCurve semivariogram(const FieldStack& stack, std::size_t var, const std::vector<std::size_t>& cells,
                             const MetricConfig& cfg) {
    const auto& grid = stack.grid();
    const auto n_bins = static_cast<std::size_t>(std::ceil(cfg.h_max_km / cfg.h_bin_km - 1e-12));
    struct Pair {
        std::size_t a, b, bin;
    };
    std::vector<Pair> pairs;
    std::vector<std::size_t> count(n_bins, 0);
    for (std::size_t i = 0; i < cells.size(); ++i)
        for (std::size_t j = i + 1; j < cells.size(); ++j) {
            const double d = grid.distance_km(cells[i], cells[j]);
            if (!(d > 0.0) || d > cfg.h_max_km) continue;
            const auto b = std::min(n_bins - 1, static_cast<std::size_t>(std::ceil(d / cfg.h_bin_km)) - 1);
            pairs.push_back({cells[i], cells[j], b});
            ++count[b];
        }
    std::vector<double> gamma(n_bins, 0.0);
    for (std::size_t t = 0; t < stack.n_times(); ++t) {
        const auto s = stack.slice(t, var);
        std::vector<double> acc(n_bins, 0.0);
        for (const auto& p : pairs) acc[p.bin] += (s[p.a] - s[p.b]) * (s[p.a] - s[p.b]);
        for (std::size_t b = 0; b < n_bins; ++b)
            if (count[b]) gamma[b] += acc[b] / (2.0 * static_cast<double>(count[b]));
    }
    VariogramCurve curve;
    curve.variable = stack.variables()[var];
    for (std::size_t b = 0; b < n_bins; ++b) {
        if (!count[b]) continue;
        curve.h_km.push_back(cfg.h_bin_km * (static_cast<double>(b) + 0.5));
        curve.method.push_back(gamma[b] / static_cast<double>(stack.n_times()));
        curve.n_pairs.push_back(count[b]);
    }
    return curve;
}

VariogramResult variogram_metric(const FieldStack& method, const FieldStack& obs, const std::vector<double>& altitude,
                                 const MetricConfig& cfg) {
    require_aligned(method, obs, "variogram_metric");
    if (altitude.size() != obs.n_cells()) fail(ErrorKind::Extent, "altitude map does not match the grid");
    require_times(method, 1, "variogram");
    require_times(obs, 1, "variogram");
    std::vector<std::size_t> cells;
    for (auto c : valid_cells(obs))
        if (altitude[c] > cfg.theta_alt) cells.push_back(c);
    if (cells.empty())
        fail(ErrorKind::Degenerate, "no cells above theta_alt = " + format_double(cfg.theta_alt) + " m");
    VariogramResult res;
    res.score = {"OVM", obs.variables(), {}, 0.0, 0, {}};
    for (std::size_t v = 0; v < obs.n_vars(); ++v) {
        auto cm = semivariogram(method, v, cells, cfg);
        const auto co = semivariogram(obs, v, cells, cfg);
        if (co.h_km.empty()) fail(ErrorKind::Degenerate, "no cell pairs within h_max in the mountain region");
        cm.obs = co.method;
        res.score.per_var.push_back(relative_rms(cm.method, cm.obs, res.score, obs.variables()[v]));
        res.curves.push_back(std::move(cm));
    }
    finish(res.score);
    return res;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) fail(ErrorKind::Degenerate, "KS needs samples on both sides");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() || j < b.size()) {
        const double x = j == b.size() || (i < a.size() && a[i] <= b[j]) ? a[i] : b[j];
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

Score ks_statistic(const FieldStack& method, const FieldStack& obs, const std::optional<Region>& region) {
    require_aligned(method, obs, "ks_statistic");
    std::vector<std::size_t> cells;
    const auto& grid = obs.grid();
    for (auto c : valid_cells(obs))
        if (!region || region->contains(grid.lat()[c / grid.n_cols()], grid.lon()[c % grid.n_cols()]))
            cells.push_back(c);
    if (cells.empty()) fail(ErrorKind::Degenerate, "KS region contains no valid cells");
    Score s{"KS", obs.variables(), {}, 0.0, 0, {}};
    for (std::size_t v = 0; v < obs.n_vars(); ++v) {
        auto pool = [&](const FieldStack& st) {
            std::vector<double> out;
            for (std::size_t t = 0; t < st.n_times(); ++t)
                for (auto c : cells) out.push_back(st.slice(t, v)[c]);
            return out;
        };
        s.per_var.push_back(ks_two_sample(pool(method), pool(obs)));
    }
    finish(s);
    return s;
}

std::vector<std::vector<double>> extreme_thresholds(const FieldStack& obs, const MetricConfig& cfg) {
    require_times(obs, cfg.min_extreme_times, "extreme thresholds");
    std::vector<std::vector<double>> th(obs.n_vars(), std::vector<double>(obs.n_cells(), kMissing));
    for (std::size_t v = 0; v < obs.n_vars(); ++v)
        for (std::size_t c = 0; c < obs.n_cells(); ++c)
            if (obs.valid(c)) th[v][c] = EmpiricalCDF(series(obs, v, c)).quantile(cfg.q);
    return th;
}

std::pair<Score, Score> extreme_metrics(const FieldStack& method, const FieldStack& obs, const MetricConfig& cfg) {
    require_aligned(method, obs, "extreme_metrics");
    require_times(method, 1, "extreme metrics");
    const auto th = extreme_thresholds(obs, cfg);
    Score f{"f", obs.variables(), {}, 0.0, 0, {}};
    Score I{"I", obs.variables(), {}, 0.0, 0, {}};
    const auto cells = valid_cells(obs);
    for (std::size_t v = 0; v < obs.n_vars(); ++v) {
        double fsum = 0.0, isum = 0.0;
        std::size_t iused = 0;
        for (auto c : cells) {
            auto stats = [&](const FieldStack& s) {
                std::size_t n = 0;
                double sum = 0.0;
                for (std::size_t t = 0; t < s.n_times(); ++t) {
                    const double x = s.slice(t, v)[c];
                    if (x > th[v][c]) ++n, sum += x;
                }
                return std::pair{static_cast<double>(n) / static_cast<double>(s.n_times()),
                                 n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt};
            };
            const auto [fm, im] = stats(method);
            const auto [fo, io] = stats(obs);
            fsum += std::abs(fm - fo);
            if (im && io) {
                isum += std::abs(*im - *io);
                ++iused;
            } else {
                ++I.excluded;
            }
        }
        f.per_var.push_back(fsum / static_cast<double>(cells.size()));
        if (iused == 0) I.flags.push_back(obs.variables()[v] + ": no cell with exceedances on both sides");
        I.per_var.push_back(iused ? isum / static_cast<double>(iused) : 0.0);
    }
    if (I.excluded) I.flags.push_back(std::to_string(I.excluded) + " cells without exceedances excluded");
    finish(f);
    finish(I);
    return {f, I};
}

std::pair<Season, int> season_of(Day day) {
    const auto d = civil_from_day(day);
    switch (d.month) {
        case 12: return {Season::DJF, d.year + 1};
        case 1:
        case 2: return {Season::DJF, d.year};
        case 3:
        case 4:
        case 5: return {Season::MAM, d.year};
        case 6:
        case 7:
        case 8: return {Season::JJA, d.year};
        default: return {Season::SON, d.year};
    }
}

std::vector<std::uint8_t> complete_seasons(const std::vector<Day>& times, std::size_t* dropped) {
    std::map<std::pair<int, int>, std::set<unsigned>> months;  // (season, year) -> months seen
    for (Day d : times) {
        const auto [s, y] = season_of(d);
        months[{static_cast<int>(s), y}].insert(civil_from_day(d).month);
    }
    std::size_t n_drop = 0;
    for (const auto& [key, m] : months) n_drop += m.size() < 3 ? 1 : 0;
    if (dropped) *dropped = n_drop;
    std::vector<std::uint8_t> keep(times.size());
    for (std::size_t t = 0; t < times.size(); ++t) {
        const auto [s, y] = season_of(times[t]);
        keep[t] = months[{static_cast<int>(s), y}].size() == 3;
    }
    return keep;
}

double relative_change(const FieldStack& stack, std::size_t var, const Period& hist, const Period& fut) {
    double sh = 0.0, sf = 0.0;
    std::size_t nh = 0, nf = 0;
    for (std::size_t t = 0; t < stack.n_times(); ++t) {
        const bool in_h = hist.contains(stack.times()[t]), in_f = fut.contains(stack.times()[t]);
        if (!in_h && !in_f) continue;
        const auto s = stack.slice(t, var);
        for (std::size_t c = 0; c < s.size(); ++c) {
            if (!stack.valid(c)) continue;
            if (in_h) sh += s[c], ++nh;
            if (in_f) sf += s[c], ++nf;
        }
    }
    if (nh == 0 || nf == 0) fail(ErrorKind::Usage, "historical or future period holds no time steps");
    sh /= static_cast<double>(nh);
    sf /= static_cast<double>(nf);
    if (sh == 0.0) fail(ErrorKind::Degenerate, "historical mean is zero; relative change undefined");
    return (sf - sh) / sh * 100.0;
}

GcmResult gcm_consistency(const FieldStack& method, const FieldStack& gcm, const MetricConfig& cfg) {
    require_aligned(method, gcm, "gcm_consistency");
    if (method.times() != gcm.times()) fail(ErrorKind::Extent, "gcm_consistency: time axes differ");
    require_times(method, 2, "GCM consistency");
    GcmResult r;
    const auto cells = valid_cells(gcm);
    const auto& vars = gcm.variables();
    r.rho = {"rho_GCM", vars, {}, 0.0, 0, {}};
    r.anomalies = {"A", vars, {}, 0.0, 0, {}};
    r.delta_full = {"delta_full", vars, {}, 0.0, 0, {}};
    r.delta_season = {"delta_season", vars, {}, 0.0, 0, {}};

    for (std::size_t v = 0; v < gcm.n_vars(); ++v) {
        double sum = 0.0;
        std::size_t used = 0;
        for (auto c : cells) {
            const auto rho = pearson(series(method, v, c), series(gcm, v, c));
            if (!rho) {
                ++r.rho.excluded;
                continue;
            }
            sum += *rho;
            ++used;
        }
        r.rho.per_var.push_back(used ? sum / static_cast<double>(used) : 0.0);
        if (!used) r.rho.flags.push_back(vars[v] + ": every cell has zero temporal variance");
    }
    if (r.rho.excluded) r.rho.flags.push_back(std::to_string(r.rho.excluded) + " cells excluded for zero variance");
    finish(r.rho);

    // Annual spatial-mean anomalies.
    std::map<int, std::vector<std::size_t>> by_year;
    for (std::size_t t = 0; t < gcm.n_times(); ++t) by_year[civil_from_day(gcm.times()[t]).year].push_back(t);
    for (std::size_t v = 0; v < gcm.n_vars(); ++v) {
        AnomalySeries as;
        as.variable = vars[v];
        for (const auto& [year, ts] : by_year) {
            auto year_mean = [&](const FieldStack& s) {
                double acc = 0.0;
                for (auto t : ts)
                    for (auto c : cells) acc += s.slice(t, v)[c];
                return acc / static_cast<double>(ts.size() * cells.size());
            };
            as.years.push_back(year);
            as.method.push_back(year_mean(method));
            as.gcm.push_back(year_mean(gcm));
        }
        const double mm = mean_of(as.method), mg = mean_of(as.gcm);
        double dev = 0.0;
        for (std::size_t y = 0; y < as.years.size(); ++y) {
            as.method[y] -= mm;
            as.gcm[y] -= mg;
            dev += std::abs(as.method[y] - as.gcm[y]);
        }
        r.anomalies.per_var.push_back(dev / static_cast<double>(as.years.size()));
        r.series.push_back(std::move(as));
    }
    finish(r.anomalies);

    if (!cfg.hist || !cfg.fut) {
        r.delta_full.flags.push_back("historical/future periods not configured");
        r.delta_season.flags.push_back("historical/future periods not configured");
        return r;
    }
    for (std::size_t v = 0; v < gcm.n_vars(); ++v) {
        r.delta_full_method.push_back(relative_change(method, v, *cfg.hist, *cfg.fut));
        r.delta_full_gcm.push_back(relative_change(gcm, v, *cfg.hist, *cfg.fut));
        r.delta_full.per_var.push_back(std::abs(r.delta_full_method.back() - r.delta_full_gcm.back()));
    }
    finish(r.delta_full);

    std::size_t dropped = 0;
    const auto keep = complete_seasons(gcm.times(), &dropped);
    if (dropped) r.delta_season.flags.push_back(std::to_string(dropped) + " incomplete season instances dropped");
    std::array<std::vector<std::size_t>, 4> hist_t, fut_t;
    for (std::size_t t = 0; t < gcm.n_times(); ++t) {
        if (!keep[t]) continue;
        const auto s = static_cast<std::size_t>(season_of(gcm.times()[t]).first);
        if (cfg.hist->contains(gcm.times()[t])) hist_t[s].push_back(t);
        if (cfg.fut->contains(gcm.times()[t])) fut_t[s].push_back(t);
    }
    std::vector<std::size_t> seasons;
    for (std::size_t s = 0; s < 4; ++s) {
        if (hist_t[s].empty() || fut_t[s].empty())
            r.delta_season.flags.push_back(std::string(kSeasonNames[s]) + " missing from a period; skipped");
        else
            seasons.push_back(s);
    }
    r.season_method.resize(gcm.n_vars());
    r.season_gcm.resize(gcm.n_vars());
    for (std::size_t v = 0; v < gcm.n_vars(); ++v) {
        for (std::size_t s = 0; s < 4; ++s) {
            r.season_method[v][s].assign(gcm.n_cells(), kMissing);
            r.season_gcm[v][s].assign(gcm.n_cells(), kMissing);
        }
        double total = 0.0;
        std::size_t used = 0;
        for (auto c : cells) {
            double cell_sum = 0.0;
            bool ok = !seasons.empty();
            for (auto s : seasons) {
                auto change = [&](const FieldStack& st) {
                    double h = 0.0, f = 0.0;
                    for (auto t : hist_t[s]) h += st.slice(t, v)[c];
                    for (auto t : fut_t[s]) f += st.slice(t, v)[c];
                    h /= static_cast<double>(hist_t[s].size());
                    f /= static_cast<double>(fut_t[s].size());
                    return h == 0.0 ? kMissing : (f - h) / h * 100.0;
                };
                const double dm = change(method), dg = change(gcm);
                r.season_method[v][s][c] = dm;
                r.season_gcm[v][s][c] = dg;
                if (std::isnan(dm) || std::isnan(dg)) ok = false;
                cell_sum += std::abs(dm - dg);
            }
            if (!ok) {
                ++r.delta_season.excluded;
                continue;
            }
            total += cell_sum / static_cast<double>(seasons.size());
            ++used;
        }
        r.delta_season.per_var.push_back(used ? total / static_cast<double>(used) : 0.0);
    }
    if (r.delta_season.excluded)
        r.delta_season.flags.push_back(std::to_string(r.delta_season.excluded) + " cells with zero historical mean excluded");
    finish(r.delta_season);
    return r;
}

const Score* MetricReport::find(const std::string& name) const {
    for (const auto& s : scores)
        if (s.name == name) return &s;
    return nullptr;
}

MetricReport evaluate_metrics(const EvaluateInputs& in, const MetricConfig& cfg) {
    cfg.validate();
    if (!in.method || !in.obs) fail(ErrorKind::Usage, "evaluate_metrics needs method and obs stacks");
    const FieldStack& m = *in.method;
    const FieldStack& o = *in.obs;
    MetricReport rep;
    auto [dmu, dsig] = delta_mean_std(m, o);
    rep.scores.push_back(dmu);
    rep.scores.push_back(dsig);
    if (o.n_vars() >= 2)
        rep.scores.push_back(intervar_corr(m, o));
    else
        rep.notes.push_back("delta_rho skipped: single variable");
    auto sp = spatial_spearman(m, o, cfg);
    rep.scores.push_back(sp.score);
    rep.correlation_distance = sp.curves;
    if (o.fully_valid())
        rep.scores.push_back(ssm(m, o, cfg, &rep.spectra));
    else
        rep.notes.push_back("SSM skipped: masked domain");
    if (in.altitude) {
        auto vg = variogram_metric(m, o, *in.altitude, cfg);
        rep.scores.push_back(vg.score);
        rep.variograms = vg.curves;
    } else {
        rep.notes.push_back("OVM skipped: no altitude map");
    }
    rep.scores.push_back(ks_statistic(m, o, in.ks_region));
    if (o.n_times() >= cfg.min_extreme_times) {
        auto [f, I] = extreme_metrics(m, o, cfg);
        rep.scores.push_back(f);
        rep.scores.push_back(I);
    } else {
        rep.notes.push_back("f/I skipped: fewer than " + std::to_string(cfg.min_extreme_times) + " obs time steps");
    }
    if (in.gcm) {
        auto g = gcm_consistency(m, *in.gcm, cfg);
        rep.scores.push_back(g.rho);
        rep.scores.push_back(g.anomalies);
        if (cfg.hist && cfg.fut) {
            rep.scores.push_back(g.delta_full);
            rep.scores.push_back(g.delta_season);
        } else {
            rep.notes.push_back("delta_full/delta_season skipped: periods not configured");
        }
        rep.anomalies = g.series;
    } else {
        rep.notes.push_back("GCM-relative metrics skipped: no source stack");
    }
    return rep;
}

bool higher_is_better(const std::string& metric) { return metric == "rho_GCM"; }

std::string metrics_long_csv(const std::vector<std::pair<std::string, MetricReport>>& reports) {
    std::string out = "method,metric,variable,value\n";
    for (const auto& [method, rep] : reports)
        for (const auto& s : rep.scores) {
            for (std::size_t i = 0; i < s.per_var.size(); ++i)
                out += method + "," + s.name + "," + s.labels[i] + "," + format_double(s.per_var[i]) + "\n";
            out += method + "," + s.name + ",mean," + format_double(s.value) + "\n";
        }
    return out;
}

namespace {

std::vector<std::string> metric_names(const std::vector<std::pair<std::string, MetricReport>>& reports) {
    std::vector<std::string> names;
    for (const auto& [method, rep] : reports)
        for (const auto& s : rep.scores)
            if (std::find(names.begin(), names.end(), s.name) == names.end()) names.push_back(s.name);
    return names;
}

}  // namespace

std::string metrics_table_csv(const std::vector<std::pair<std::string, MetricReport>>& reports) {
    std::string out = "metric";
    for (const auto& [method, rep] : reports) out += "," + method;
    out += "\n";
    for (const auto& name : metric_names(reports)) {
        out += name;
        for (const auto& [method, rep] : reports) {
            const auto* s = rep.find(name);
            out += "," + (s ? format_double(s->value) : std::string("NA"));
        }
        out += "\n";
    }
    return out;
}

std::string radar_csv(const std::vector<std::pair<std::string, MetricReport>>& reports) {
    std::string out = "metric";
    for (const auto& [method, rep] : reports) out += "," + method;
    out += "\n";
    for (const auto& name : metric_names(reports)) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& [method, rep] : reports)
            if (const auto* s = rep.find(name); s && std::isfinite(s->value)) {
                lo = std::min(lo, s->value);
                hi = std::max(hi, s->value);
            }
        out += name;
        for (const auto& [method, rep] : reports) {
            const auto* s = rep.find(name);
            if (!s || !std::isfinite(s->value)) {
                out += ",NA";
                continue;
            }
            double x = hi > lo ? (s->value - lo) / (hi - lo) : 1.0;
            if (hi > lo && !higher_is_better(name)) x = 1.0 - x;
            out += "," + format_double(x);
        }
        out += "\n";
    }
    return out;
}

std::string spectra_csv(const std::vector<SpectrumCurve>& curves) {
    std::string out = "variable,k_per_km,power_method,power_obs\n";
    for (const auto& c : curves)
        for (std::size_t i = 0; i < c.k.size(); ++i)
            out += c.variable + "," + format_double(c.k[i]) + "," + format_double(c.method[i]) + "," +
                   format_double(c.obs[i]) + "\n";
    return out;
}

std::string variogram_csv(const std::vector<VariogramCurve>& curves) {
    std::string out = "variable,h_km,gamma_method,gamma_obs,n_pairs\n";
    for (const auto& c : curves)
        for (std::size_t i = 0; i < c.h_km.size(); ++i)
            out += c.variable + "," + format_double(c.h_km[i]) + "," + format_double(c.method[i]) + "," +
                   format_double(c.obs[i]) + "," + std::to_string(c.n_pairs[i]) + "\n";
    return out;
}

std::string correlation_distance_csv(const std::vector<DistanceCurve>& curves) {
    std::string out = "variable,h_km,abs_R_method,abs_R_obs,n_pairs\n";
    for (const auto& c : curves)
        for (std::size_t i = 0; i < c.h_km.size(); ++i)
            out += c.variable + "," + format_double(c.h_km[i]) + "," + format_double(c.method[i]) + "," +
                   format_double(c.obs[i]) + "," + std::to_string(c.n_pairs[i]) + "\n";
    return out;
}

std::string anomalies_csv(const std::vector<AnomalySeries>& series) {
    std::string out = "variable,year,anomaly_method,anomaly_gcm\n";
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.years.size(); ++i)
            out += s.variable + "," + std::to_string(s.years[i]) + "," + format_double(s.method[i]) + "," +
                   format_double(s.gcm[i]) + "\n";
    return out;
}

}  // namespace scalesplit
