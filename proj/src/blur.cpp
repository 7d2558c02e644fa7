#include "scalesplit/blur.hpp"

#include "scalesplit/error.hpp"
#include "scalesplit/rng.hpp"

#include <cmath>

namespace scalesplit {

namespace {

// Separable convolution with zero extension beyond the grid edges.
std::vector<double> convolve_separable(const std::vector<double>& in, std::size_t nr, std::size_t nc,
                                       const std::vector<double>& taps_x, const std::vector<double>& taps_y) {
    const long rx = static_cast<long>(taps_x.size() / 2);
    const long ry = static_cast<long>(taps_y.size() / 2);
    std::vector<double> tmp(nr * nc, 0.0), out(nr * nc, 0.0);
    for (std::size_t r = 0; r < nr; ++r) {
        const double* row = in.data() + r * nc;
        double* dst = tmp.data() + r * nc;
        for (long c = 0; c < static_cast<long>(nc); ++c) {
            double acc = 0.0;
            const long lo = std::max(-rx, -c), hi = std::min(rx, static_cast<long>(nc) - 1 - c);
            for (long d = lo; d <= hi; ++d) acc += taps_x[static_cast<std::size_t>(d + rx)] * row[c + d];
            dst[c] = acc;
        }
    }
    for (long r = 0; r < static_cast<long>(nr); ++r) {
        const long lo = std::max(-ry, -r), hi = std::min(ry, static_cast<long>(nr) - 1 - r);
        double* dst = out.data() + static_cast<std::size_t>(r) * nc;
        for (long d = lo; d <= hi; ++d) {
            const double w = taps_y[static_cast<std::size_t>(d + ry)];
            const double* src = tmp.data() + static_cast<std::size_t>(r + d) * nc;
            for (std::size_t c = 0; c < nc; ++c) dst[c] += w * src[c];
        }
    }
    return out;
}

void require_nonempty(const FieldStack& stack) {
    if (stack.n_valid() == 0) fail(ErrorKind::Degenerate, "mask has no valid cells");
}

}  // namespace

std::vector<double> gaussian_taps(double sigma_cells, double truncate) {
    const auto radius = static_cast<std::size_t>(std::floor(truncate * sigma_cells + 0.5));
    std::vector<double> taps(2 * radius + 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < taps.size(); ++i) {
        const double d = static_cast<double>(i) - static_cast<double>(radius);
        taps[i] = std::exp(-0.5 * d * d / (sigma_cells * sigma_cells));
        sum += taps[i];
    }
    for (auto& w : taps) w /= sum;
    return taps;
}

FieldStack gaussian_blur_masked(const FieldStack& stack, const BlurSpec& spec) {
    require_nonempty(stack);
    spec.validate(stack.grid());
    const auto& grid = stack.grid();
    const std::size_t nr = grid.n_rows(), nc = grid.n_cols(), cells = grid.n_cells();
    const auto taps_x = gaussian_taps(spec.sigma_cells_x(grid), spec.truncate);
    const auto taps_y = gaussian_taps(spec.sigma_cells_y(grid), spec.truncate);

    std::vector<double> m(cells);
    for (std::size_t c = 0; c < cells; ++c) m[c] = stack.valid(c) ? 1.0 : 0.0;
    const auto weight = convolve_separable(m, nr, nc, taps_x, taps_y);

    FieldStack out = stack.zeros_like();
    std::vector<double> xm(cells);
    for (std::size_t t = 0; t < stack.n_times(); ++t)
        for (std::size_t v = 0; v < stack.n_vars(); ++v) {
            const auto x = stack.slice(t, v);
            for (std::size_t c = 0; c < cells; ++c) xm[c] = stack.valid(c) ? x[c] : 0.0;
            const auto num = convolve_separable(xm, nr, nc, taps_x, taps_y);
            auto o = out.slice(t, v);
            for (std::size_t c = 0; c < cells; ++c)
                if (stack.valid(c)) o[c] = num[c] / weight[c];
        }
    return out;
}

Decomposition blur_split(const FieldStack& stack, const BlurSpec& spec) {
    FieldStack low = gaussian_blur_masked(stack, spec);
    FieldStack high = stack - low;
    return {std::move(low), std::move(high), spec};
}

FieldStack white_noise(const FieldStack& shape, std::uint64_t seed) {
    FieldStack out = shape.zeros_like();
    for (std::size_t t = 0; t < out.n_times(); ++t)
        for (std::size_t v = 0; v < out.n_vars(); ++v) {
            const CounterRng rng(derive_seed(seed, t, v));
            auto s = out.slice(t, v);
            for (std::size_t c = 0; c < s.size(); ++c)
                if (out.valid(c)) s[c] = rng.normal(c);
        }
    return out;
}

FieldStack highpass_noise(const FieldStack& shape, const BlurSpec& spec, std::uint64_t seed) {
    require_nonempty(shape);
    FieldStack eps = white_noise(shape, seed);
    FieldStack blurred = gaussian_blur_masked(eps, spec);
    return eps - blurred;
}

}  // namespace scalesplit
