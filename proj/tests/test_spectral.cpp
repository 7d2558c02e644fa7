#include <doctest.h>

#include "oracles.hpp"
#include "test_util.hpp"

#include "scalesplit/error.hpp"
#include "scalesplit/spectral.hpp"

#include <cmath>
#include <functional>
#include <numeric>

using namespace scalesplit;
using testutil::max_diff;
using testutil::random_stack;

namespace {

/// Naive DFT, zero every mode above 1/wavelength, naive inverse.
std::vector<double> oracle_lowpass(const FieldStack& s, double wavelength_km) {
    const auto F = oracle::dft(s, 0, 0);
    const auto k = oracle::kmag(s.grid());
    const std::size_t nr = s.n_rows(), nc = s.n_cols();
    std::vector<double> out(nr * nc);
    for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t c = 0; c < nc; ++c) {
            std::complex<double> acc = 0;
            for (std::size_t ky = 0; ky < nr; ++ky)
                for (std::size_t kx = 0; kx < nc; ++kx) {
                    if (k[ky * nc + kx] > 1.0 / wavelength_km) continue;
                    const double ph = 2 * std::numbers::pi * (double(ky * r) / nr + double(kx * c) / nc);
                    acc += F[ky * nc + kx] * std::complex<double>(std::cos(ph), std::sin(ph));
                }
            out[r * nc + c] = acc.real() / (nr * nc);
        }
    return out;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::Internal;
}

}  // namespace

TEST_CASE("constant field is all low band") {
    auto s = random_stack(16, 16, 1, 2, 1);
    for (auto& x : s.values()) x = 3.25;
    const auto d = lowpass(s, SpectralCutoff{1200});
    CHECK(max_diff(d.low, s) < 1e-12);
    CHECK(max_abs(d.high) < 1e-12);
}

TEST_CASE("600 km sinusoid is all high band at a 1200 km cutoff") {
    const auto g = GridSpec::uniform_km(48, 48, 25, 25);
    const auto s = testutil::sinusoid(g, 600, 0);
    const auto d = lowpass(s, SpectralCutoff{1200});
    CHECK(max_abs(d.low) < 1e-12);
    CHECK(max_diff(d.high, s) < 1e-12);
}

TEST_CASE("lowpass matches a direct DFT oracle") {
    const auto s = random_stack(32, 32, 1, 1, 5);
    const auto d = lowpass(s, SpectralCutoff{1200});
    const auto want = oracle_lowpass(s, 1200);
    double err = 0;
    for (std::size_t c = 0; c < want.size(); ++c) err = std::max(err, std::abs(d.low.slice(0, 0)[c] - want[c]));
    CHECK(err <= 1e-9);
}

TEST_CASE("decomposition reconstructs, is idempotent and leaves no low power in the high band") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto s = random_stack(32, 32, 2, 2, seed, 25.0, 2.0, 1.0);
        const auto d = lowpass(s, SpectralCutoff{300});
        CHECK(max_diff(d.low + d.high, s) < 1e-12);
        CHECK(max_diff(lowpass(d.low, SpectralCutoff{300}).low, d.low) < 1e-12);

        FieldStack h = d.high.select_variable(0).select_times({0});
        const auto F = oracle::dft(h, 0, 0);
        const auto k = oracle::kmag(h.grid());
        double below = 0, total = 0;
        for (std::size_t i = 0; i < F.size(); ++i) {
            total += std::norm(F[i]);
            if (k[i] <= 1.0 / 300) below += std::norm(F[i]);
        }
        CHECK(below < 1e-8 * total);
    }
}

TEST_CASE("band mode with a single cut equals lowpass") {
    const auto s = random_stack(32, 32, 1, 2, 3);
    const auto bands = band_decompose(s, {SpectralCutoff{500}});
    const auto d = lowpass(s, SpectralCutoff{500});
    REQUIRE(bands.size() == 2);
    CHECK(max_diff(bands[0], d.low) < 1e-12);
    CHECK(max_diff(bands[1], d.high) < 1e-12);
}

TEST_CASE("three cuts give four bands summing to the input") {
    const auto s = random_stack(64, 64, 1, 2, 4);
    const auto bands = band_decompose(s, {SpectralCutoff{1200}, SpectralCutoff{750}, SpectralCutoff{300}});
    REQUIRE(bands.size() == 4);
    auto sum = bands[0];
    for (std::size_t i = 1; i < 4; ++i) sum += bands[i];
    CHECK(max_diff(sum, s) <= 1e-9);
}

TEST_CASE("900 km sinusoid lands in the 1200-750 band") {
    const auto g = GridSpec::uniform_km(36, 36, 25, 25);
    const auto s = testutil::sinusoid(g, 900, 0);
    const auto bands = band_decompose(s, {SpectralCutoff{1200}, SpectralCutoff{750}, SpectralCutoff{300}});
    CHECK(max_diff(bands[1], s) < 1e-12);
    CHECK(max_abs(bands[0]) < 1e-12);
    CHECK(max_abs(bands[2]) < 1e-12);
    CHECK(max_abs(bands[3]) < 1e-12);
}

TEST_CASE("band cuts must be strictly descending") {
    const auto s = random_stack(32, 32, 1, 1, 1);
    CHECK(kind_of([&] { band_decompose(s, {SpectralCutoff{300}, SpectralCutoff{750}}); }) == ErrorKind::Usage);
    CHECK(kind_of([&] { band_decompose(s, {SpectralCutoff{500}, SpectralCutoff{500}}); }) == ErrorKind::Usage);
}

TEST_CASE("unresolvable cutoff and masked input are rejected") {
    auto s = random_stack(16, 16, 1, 1, 1);
    CHECK(kind_of([&] { lowpass(s, SpectralCutoff{40}); }) == ErrorKind::Usage);
    auto mask = std::vector<std::uint8_t>(256, 1);
    mask[17] = 0;
    s.set_mask(mask);
    CHECK(kind_of([&] { lowpass(s, SpectralCutoff{1200}); }) == ErrorKind::MaskUnsupported);
    CHECK(kind_of([&] { isotropic_spectrum(s, 0); }) == ErrorKind::MaskUnsupported);
}

TEST_CASE("spectral regrid of a constant stays constant") {
    const auto src = GridSpec::regular(40, 0, 0.2, 0.2, 16, 16);
    const auto dst = GridSpec::regular(40, 0, 0.1, 0.1, 32, 32);
    FieldStack s(src, {"u"}, {0});
    for (auto& x : s.values()) x = -2.5;
    const auto out = spectral_regrid(s, dst);
    for (double x : out.values()) CHECK(std::abs(x + 2.5) < 1e-12);
}

TEST_CASE("spectral regrid refines a sinusoid exactly") {
    const auto src = GridSpec::regular(40, 0, 0.2, 0.2, 16, 16);
    const auto dst = GridSpec::regular(40, 0, 0.1, 0.1, 32, 32);
    FieldStack s(src, {"u"}, {0});
    for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < 16; ++c)
            s.at(0, 0, r, c) = std::sin(2 * std::numbers::pi * (2.0 * c / 16 + 3.0 * r / 16));
    const auto out = spectral_regrid(s, dst);
    double err = 0;
    for (std::size_t r = 0; r < 32; ++r)
        for (std::size_t c = 0; c < 32; ++c)
            err = std::max(err, std::abs(out.at(0, 0, r, c) - std::sin(2 * std::numbers::pi * (2.0 * c / 32 + 3.0 * r / 32))));
    CHECK(err <= 1e-6);
}

TEST_CASE("spectral regrid identity and errors") {
    const auto s = random_stack(16, 16, 1, 2, 7);
    CHECK(max_diff(spectral_regrid(s, s.grid()), s) < 1e-12);
    const auto coarse = GridSpec::uniform_km(8, 8, 50, 50);
    CHECK(kind_of([&] { spectral_regrid(s, coarse); }) == ErrorKind::Usage);
    const auto shifted = GridSpec::uniform_km(32, 32, 25, 25);
    CHECK(kind_of([&] { spectral_regrid(s, shifted); }) == ErrorKind::Extent);
}

TEST_CASE("white noise spectrum is flat") {
    const auto s = random_stack(64, 64, 1, 100, 21);
    const auto p = isotropic_spectrum(s, 0);
    const auto [lo, hi] = std::minmax_element(p.power.begin(), p.power.end());
    CHECK(*hi / *lo < 2.0);
}

TEST_CASE("sinusoid puts its power in one bin") {
    const auto g = GridSpec::uniform_km(64, 64, 25, 25);
    const auto s = testutil::sinusoid(g, 200, 0);
    const auto p = isotropic_spectrum(s, 0);
    const double total = p.total();
    std::size_t hit = 0;
    for (std::size_t b = 0; b < p.size(); ++b)
        if (p.k_lo[b] < 1.0 / 200 && 1.0 / 200 <= p.k_hi[b]) hit = b;
    CHECK(p.power[hit] * p.n_modes[hit] >= 0.99 * total);
}

TEST_CASE("spectrum obeys Parseval and matches the oracle") {
    const auto s = random_stack(16, 20, 1, 3, 8, 25.0, 1.5, 0.7);
    const auto p = isotropic_spectrum(s, 0, 12);
    double want = 0;
    for (std::size_t t = 0; t < 3; ++t) {
        double m = 0, ss = 0;
        for (double x : s.slice(t, 0)) m += x;
        m /= s.n_cells();
        for (double x : s.slice(t, 0)) ss += (x - m) * (x - m);
        want += ss / 3;
    }
    CHECK(std::abs(p.total() - want) <= 1e-6 * want);

    const auto o = oracle::spectrum(s, 0, 12);
    REQUIRE(o.k.size() == p.size());
    for (std::size_t b = 0; b < p.size(); ++b) {
        CHECK(std::abs(p.k_bins[b] - o.k[b]) < 1e-15);
        CHECK(std::abs(p.power[b] - o.power[b]) < 1e-10 * o.power[b]);
    }
}
