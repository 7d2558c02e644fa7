#include <doctest.h>

#include "test_util.hpp"

#include "scalesplit/blur.hpp"
#include "scalesplit/error.hpp"

#include <cmath>

using namespace scalesplit;
using testutil::max_diff;
using testutil::random_stack;

namespace {

/// sum K(p-q) m(q) x(q) / sum K(p-q) m(q) with a 2-D Gaussian kernel built
/// directly from exp(-(dx^2/sx^2 + dy^2/sy^2)/2), zero outside the grid.
std::vector<double> oracle_blur(const FieldStack& s, std::size_t t, double sigma_km, double truncate) {
    const auto& g = s.grid();
    const double sx = sigma_km / g.dx_km(), sy = sigma_km / g.dy_km();
    const long rx = static_cast<long>(std::floor(truncate * sx + 0.5));
    const long ry = static_cast<long>(std::floor(truncate * sy + 0.5));
    const long nr = static_cast<long>(s.n_rows()), nc = static_cast<long>(s.n_cols());
    std::vector<double> out(s.n_cells(), kMissing);
    for (long r = 0; r < nr; ++r)
        for (long c = 0; c < nc; ++c) {
            if (!s.valid(r * nc + c)) continue;
            double num = 0, den = 0;
            for (long dr = -ry; dr <= ry; ++dr)
                for (long dc = -rx; dc <= rx; ++dc) {
                    const long rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= nr || cc < 0 || cc >= nc || !s.valid(rr * nc + cc)) continue;
                    const double w = std::exp(-0.5 * (dc * dc / (sx * sx) + dr * dr / (sy * sy)));
                    num += w * s.at(t, 0, rr, cc);
                    den += w;
                }
            out[r * nc + c] = num / den;
        }
    return out;
}

double variance(const FieldStack& s) {
    double m = 0, q = 0, n = 0;
    for (double x : s.values())
        if (!std::isnan(x)) m += x, n += 1;
    m /= n;
    for (double x : s.values())
        if (!std::isnan(x)) q += (x - m) * (x - m);
    return q / n;
}

}  // namespace

TEST_CASE("taps are normalized with the documented radius") {
    const auto t = gaussian_taps(2.0, 4.0);
    CHECK(t.size() == 17);
    double s = 0;
    for (double w : t) s += w;
    CHECK(std::abs(s - 1.0) < 1e-15);
    CHECK(t[8] > t[7]);
}

TEST_CASE("constant field is a fixed point on masked grids") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto s = random_stack(20, 24, 1, 1, seed);
        for (auto& x : s.values()) x = 4.0;
        s.set_mask(testutil::random_mask(s.n_cells(), 0.6, seed));
        const auto b = gaussian_blur_masked(s, BlurSpec{60, 4});
        CHECK(max_diff(b, s) <= 1e-10);
    }
}

TEST_CASE("masked blur matches a direct 2-D convolution") {
    auto s = random_stack(15, 17, 1, 2, 3, 25.0);
    s.set_mask(testutil::coastline_mask(15, 17, 0.3));
    const auto b = gaussian_blur_masked(s, BlurSpec{40, 3});
    for (std::size_t t = 0; t < 2; ++t) {
        const auto want = oracle_blur(s, t, 40, 3);
        for (std::size_t c = 0; c < s.n_cells(); ++c)
            if (s.valid(c)) CHECK(std::abs(b.slice(t, 0)[c] - want[c]) <= 1e-12);
    }
}

TEST_CASE("impulse response matches the direct convolution") {
    auto s = random_stack(21, 21, 1, 1, 1);
    for (auto& x : s.values()) x = 0.0;
    s.at(0, 0, 10, 10) = 1.0;
    const auto b = gaussian_blur_masked(s, BlurSpec{50, 4});
    const auto want = oracle_blur(s, 0, 50, 4);
    for (std::size_t c = 0; c < s.n_cells(); ++c) CHECK(std::abs(b.slice(0, 0)[c] - want[c]) <= 1e-12);
}

TEST_CASE("single valid cell keeps its value") {
    auto s = random_stack(8, 8, 1, 3, 2);
    std::vector<std::uint8_t> mask(64, 0);
    mask[27] = 1;
    s.set_mask(mask);
    const auto d = blur_split(s, BlurSpec{50, 4});
    for (std::size_t t = 0; t < 3; ++t) {
        CHECK(std::abs(d.low.slice(t, 0)[27] - s.slice(t, 0)[27]) < 1e-15);
        CHECK(std::abs(d.high.slice(t, 0)[27]) < 1e-15);
    }
}

TEST_CASE("split identity and mask preservation") {
    auto s = random_stack(16, 16, 2, 3, 4);
    s.set_mask(testutil::coastline_mask(16, 16, 1.0));
    const auto d = blur_split(s, BlurSpec{50, 4});
    CHECK(max_diff(d.low + d.high, s) <= 1e-12);
    CHECK(d.low.mask() == s.mask());
    CHECK(d.high.mask() == s.mask());
    for (std::size_t c = 0; c < s.n_cells(); ++c)
        if (!s.valid(c)) CHECK(std::isnan(d.low.slice(0, 1)[c]));
}

TEST_CASE("sinusoid at ten sigma keeps little high-band amplitude") {
    const auto g = GridSpec::uniform_km(64, 64, 25, 25);
    const double sigma = 50;
    const auto s = testutil::sinusoid(g, 10 * sigma, 0);
    const auto d = blur_split(s, BlurSpec{sigma, 4});
    double hi = 0;
    for (std::size_t r = 8; r < 56; ++r)
        for (std::size_t c = 8; c < 56; ++c) hi = std::max(hi, std::abs(d.high.at(0, 0, r, c)));
    CHECK(hi < 0.2);
}

TEST_CASE("blurring white noise lowers the variance, more so for wider kernels") {
    const auto s = random_stack(32, 32, 1, 4, 9);
    double prev = variance(s);
    for (double sigma : {25.0, 50.0, 100.0}) {
        const double v = variance(gaussian_blur_masked(s, BlurSpec{sigma, 4}));
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("blur commutes with adding a constant") {
    auto s = random_stack(12, 14, 1, 2, 6);
    s.set_mask(testutil::random_mask(s.n_cells(), 0.7, 6));
    auto shifted = s;
    for (auto& x : shifted.values()) x += 3.0;
    auto b = gaussian_blur_masked(s, BlurSpec{40, 4});
    for (auto& x : b.values()) x += 3.0;
    CHECK(max_diff(gaussian_blur_masked(shifted, BlurSpec{40, 4}), b) < 1e-12);
}

TEST_CASE("empty mask is degenerate") {
    auto s = random_stack(4, 4, 1, 1, 1);
    s.set_mask(std::vector<std::uint8_t>(16, 0));
    try {
        gaussian_blur_masked(s, BlurSpec{50, 4});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Degenerate);
    }
    CHECK_THROWS_AS(highpass_noise(s, BlurSpec{50, 4}, 1), Error);
}

TEST_CASE("high-pass noise is deterministic and has little large-scale content") {
    auto shape = random_stack(32, 32, 1, 2, 0);
    shape.set_mask(testutil::coastline_mask(32, 32, 0.5));
    const BlurSpec spec{100, 4};  // 4 cells
    const auto a = highpass_noise(shape, spec, 17);
    const auto b = highpass_noise(shape, spec, 17);
    CHECK(a.values().size() == b.values().size());
    CHECK(max_diff(a, b) == 0.0);
    CHECK(max_diff(a, highpass_noise(shape, spec, 18)) > 0.1);
    const auto again = gaussian_blur_masked(a, spec);
    CHECK(max_abs(again) < 0.2 * max_abs(a));
}

TEST_CASE("high-pass noise averages to zero over seeds") {
    auto shape = random_stack(12, 12, 1, 1, 0);
    shape.set_mask(testutil::coastline_mask(12, 12, 0.1));
    std::vector<double> mean(shape.n_cells(), 0.0);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto e = highpass_noise(shape, BlurSpec{50, 4}, seed);
        for (std::size_t c = 0; c < mean.size(); ++c)
            if (shape.valid(c)) mean[c] += e.slice(0, 0)[c] / 1000.0;
    }
    double rms = 0;
    for (std::size_t c = 0; c < mean.size(); ++c) rms += mean[c] * mean[c];
    CHECK(std::sqrt(rms / shape.n_valid()) < 0.1);
}
