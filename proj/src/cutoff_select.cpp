#include "scalesplit/cutoff_select.hpp"

#include "scalesplit/error.hpp"
#include "scalesplit/kv.hpp"
#include "scalesplit/rng.hpp"
#include "scalesplit/spectral.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scalesplit {

namespace {

std::size_t auto_bins(const GridSpec& g) {
    const double fundamental =
        std::min(1.0 / (static_cast<double>(g.n_cols()) * g.dx_km()), 1.0 / (static_cast<double>(g.n_rows()) * g.dy_km()));
    const auto k = wavenumber_magnitudes(g);
    const double k_top = *std::max_element(k.begin(), k.end());
    return std::max<std::size_t>(4, static_cast<std::size_t>(std::ceil(k_top / fundamental)));
}

}  // namespace

std::vector<std::vector<double>> cutoff_features(const FieldStack& stack, double wavelength_km, std::size_t n_bins) {
    const SpectralCutoff cut{wavelength_km};
    const FieldStack low = lowpass(stack, cut).low;
    const double k_cut = cut.wavenumber() * (1.0 + 1e-9);
    std::vector<std::vector<double>> rows(stack.n_times());
    for (std::size_t t = 0; t < stack.n_times(); ++t) {
        const FieldStack frame = low.select_times({t});
        for (std::size_t v = 0; v < stack.n_vars(); ++v) {
            const auto ps = isotropic_spectrum(frame, v, n_bins);
            for (std::size_t b = 0; b < ps.size(); ++b)
                if (ps.k_lo[b] < k_cut) rows[t].push_back(std::log(ps.power[b] + 1e-300));
        }
    }
    return rows;
}

CutoffScan select_cutoff(const FieldStack& source, const FieldStack& target, std::vector<double> candidates_km,
                         const CutoffOptions& opts) {
    if (candidates_km.empty()) fail(ErrorKind::Usage, "no cutoff candidates");
    if (!source.grid().same_as(target.grid())) fail(ErrorKind::Extent, "cutoff selection needs a common grid");
    if (source.variables() != target.variables()) fail(ErrorKind::Extent, "source and target variables differ");
    if (source.n_times() < opts.min_frames || target.n_times() < opts.min_frames)
        fail(ErrorKind::Degenerate, "cutoff selection needs at least " + std::to_string(opts.min_frames) +
                                        " frames per domain");
    if (!(opts.validation_fraction > 0.0 && opts.validation_fraction < 1.0))
        fail(ErrorKind::Usage, "validation_fraction must lie in (0, 1)");
    for (double c : candidates_km) SpectralCutoff{c}.validate(target.grid());
    std::sort(candidates_km.begin(), candidates_km.end(), std::greater<>());
    candidates_km.erase(std::unique(candidates_km.begin(), candidates_km.end()), candidates_km.end());
    const std::size_t n_bins = opts.n_bins ? opts.n_bins : auto_bins(target.grid());

    // Paired split: frame index i goes to the same side for both domains.
    const std::size_t n_pair = std::min(source.n_times(), target.n_times());
    std::vector<std::size_t> perm(n_pair);
    std::iota(perm.begin(), perm.end(), 0);
    RngStream rng(derive_seed(opts.seed, 0x5ca9));
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    const auto n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::round(opts.validation_fraction * static_cast<double>(n_pair))));
    std::vector<std::uint8_t> is_val(std::max(source.n_times(), target.n_times()), 0);
    for (std::size_t i = 0; i < n_val; ++i) is_val[perm[i]] = 1;

    CutoffScan scan;
    scan.wavelengths_km = candidates_km;
    for (double lambda : candidates_km) {
        const auto fs = cutoff_features(source, lambda, n_bins);
        const auto ft = cutoff_features(target, lambda, n_bins);
        const std::size_t n_feat = fs.front().size();
        std::vector<const std::vector<double>*> train_x, val_x;
        std::vector<double> train_y, val_y;
        auto add = [&](const std::vector<std::vector<double>>& rows, double label) {
            for (std::size_t t = 0; t < rows.size(); ++t) {
                (is_val[t] ? val_x : train_x).push_back(&rows[t]);
                (is_val[t] ? val_y : train_y).push_back(label);
            }
        };
        add(fs, 1.0);
        add(ft, -1.0);

        // Standardize on the training set and drop constant features.
        std::vector<std::size_t> keep;
        std::vector<double> mu, sd;
        for (std::size_t j = 0; j < n_feat; ++j) {
            double m = 0.0;
            for (auto* r : train_x) m += (*r)[j];
            m /= static_cast<double>(train_x.size());
            double ss = 0.0;
            for (auto* r : train_x) ss += ((*r)[j] - m) * ((*r)[j] - m);
            const double s = std::sqrt(ss / static_cast<double>(train_x.size()));
            if (s > 1e-12 * std::max(1.0, std::abs(m))) {
                keep.push_back(j);
                mu.push_back(m);
                sd.push_back(s);
            }
        }
        auto design = [&](const std::vector<const std::vector<double>*>& rows) {
            Eigen::MatrixXd X(rows.size(), keep.size() + 1);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                for (std::size_t j = 0; j < keep.size(); ++j) X(i, j) = ((*rows[i])[keep[j]] - mu[j]) / sd[j];
                X(i, keep.size()) = 1.0;
            }
            return X;
        };
        const Eigen::MatrixXd Xtr = design(train_x);
        const Eigen::VectorXd ytr = Eigen::Map<const Eigen::VectorXd>(train_y.data(), train_y.size());
        Eigen::MatrixXd A = Xtr.transpose() * Xtr;
        for (std::size_t j = 0; j < keep.size(); ++j) A(j, j) += opts.ridge * static_cast<double>(train_x.size());
        const Eigen::VectorXd w = A.ldlt().solve(Xtr.transpose() * ytr);
        const Eigen::VectorXd score = design(val_x) * w;

        std::vector<std::uint8_t> correct(val_x.size());
        for (std::size_t i = 0; i < val_x.size(); ++i) {
            const double pred = score(static_cast<Eigen::Index>(i)) >= 0.0 ? 1.0 : -1.0;
            correct[i] = pred == val_y[i];
        }
        const double acc = static_cast<double>(std::accumulate(correct.begin(), correct.end(), std::size_t{0})) /
                           static_cast<double>(correct.size());
        scan.accuracies.push_back(acc);
        scan.correct.push_back(std::move(correct));
        scan.n_features.push_back(keep.size());
    }

    scan.selected_km = candidates_km.front();
    scan.flagged = true;
    for (std::size_t i = 0; i < candidates_km.size(); ++i)
        if (scan.accuracies[i] <= opts.threshold) {
            scan.selected_km = candidates_km[i];  // descending: the last qualifying one is the smallest
            scan.flagged = false;
        }
    return scan;
}

std::pair<double, double> bootstrap_band(const std::vector<std::uint8_t>& correct, std::size_t n_boot,
                                         std::uint64_t seed) {
    if (correct.empty() || n_boot == 0) fail(ErrorKind::Degenerate, "bootstrap of an empty sample");
    RngStream rng(seed);
    std::vector<double> means(n_boot);
    for (auto& m : means) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < correct.size(); ++i) hits += correct[rng.below(correct.size())];
        m = static_cast<double>(hits) / static_cast<double>(correct.size());
    }
    std::sort(means.begin(), means.end());
    auto at = [&](double q) { return means[std::min(n_boot - 1, static_cast<std::size_t>(q * static_cast<double>(n_boot)))]; };
    return {at(0.025), at(0.975)};
}

std::string scan_csv(const CutoffScan& scan) {
    std::string out = "wavelength_km,accuracy,selected\n";
    for (std::size_t i = 0; i < scan.wavelengths_km.size(); ++i)
        out += format_double(scan.wavelengths_km[i]) + "," + format_double(scan.accuracies[i]) + "," +
               (scan.wavelengths_km[i] == scan.selected_km ? "1" : "0") + "\n";
    return out;
}

}  // namespace scalesplit
