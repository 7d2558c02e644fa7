#include <doctest.h>

#include "test_util.hpp"

#include "scalesplit/blur.hpp"
#include "scalesplit/error.hpp"
#include "scalesplit/pseudo_pairs.hpp"
#include "scalesplit/separator.hpp"
#include "scalesplit/spectral.hpp"
#include "scalesplit/synth.hpp"

#include <cmath>

using namespace scalesplit;
using testutil::max_diff;
using testutil::random_stack;

namespace {

double rms(const FieldStack& s) {
    double q = 0, n = 0;
    for (double x : s.values())
        if (!std::isnan(x)) q += x * x, n += 1;
    return std::sqrt(q / n);
}

FieldStack demean(FieldStack s) {
    double m = 0, n = 0;
    for (double x : s.values())
        if (!std::isnan(x)) m += x, n += 1;
    for (auto& x : s.values()) x -= m / n;
    return s;
}

}  // namespace

TEST_CASE("identical source and target give identical statistics") {
    const auto s = random_stack(6, 6, 2, 10, 1, 25.0, 2.0, 5.0);
    const auto p = fit_normalization(s, s);
    for (const auto& name : s.variables()) {
        CHECK(p.source.at(name).mean == p.target.at(name).mean);
        CHECK(p.source.at(name).std == p.target.at(name).std);
    }
}

TEST_CASE("affine target shifts the statistics accordingly") {
    const auto s = random_stack(6, 6, 1, 10, 2, 25.0, 1.0, 0.0);
    auto t = s;
    for (auto& x : t.values()) x = 2.0 * x + 3.0;
    const auto p = fit_normalization(s, t);
    const auto a = p.source.at("sfcWind"), b = p.target.at("sfcWind");
    CHECK(std::abs(b.mean - (2.0 * a.mean + 3.0)) < 1e-12);
    CHECK(std::abs(b.std - 2.0 * a.std) < 1e-12);
}

TEST_CASE("domain statistics match a loop over valid cells") {
    auto s = random_stack(5, 7, 2, 9, 3, 25.0, 1.7, -0.4);
    s.set_mask(testutil::random_mask(35, 0.6, 3));
    const auto st = domain_stats(s);
    for (std::size_t v = 0; v < 2; ++v) {
        std::vector<double> xs;
        for (std::size_t t = 0; t < s.n_times(); ++t)
            for (std::size_t c = 0; c < s.n_cells(); ++c)
                if (s.valid(c)) xs.push_back(s.slice(t, v)[c]);
        double m = 0;
        for (double x : xs) m += x;
        m /= xs.size();
        double q = 0;
        for (double x : xs) q += (x - m) * (x - m);
        CHECK(std::abs(st.at(s.variables()[v]).mean - m) < 1e-12);
        CHECK(std::abs(st.at(s.variables()[v]).std - std::sqrt(q / xs.size())) < 1e-12);
    }
}

TEST_CASE("zero variance is rejected") {
    auto s = random_stack(3, 3, 1, 4, 1);
    for (auto& x : s.values()) x = 1.0;
    try {
        fit_normalization(random_stack(3, 3, 1, 4, 2), s);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Degenerate);
    }
}

TEST_CASE("normalization round trips, scalar and per cell") {
    const auto s = random_stack(6, 5, 2, 12, 4, 25.0, 3.0, 7.0);
    for (auto scheme : {NormScheme::spatial, NormScheme::per_cell}) {
        const auto p = fit_normalization(s, s, scheme);
        CHECK(max_diff(denormalize_target(normalize_target(s, p), p), s) < 1e-12);
        CHECK(max_diff(denormalize(normalize(s, p.source), p.source), s) < 1e-12);
    }
    const auto p = fit_normalization(s, s);
    const auto back = NormalizationParams::from_kv(KeyValues::parse(p.to_kv().to_string()));
    CHECK(back.target_variables == p.target_variables);
    for (const auto& [name, st] : p.target) {
        CHECK(back.target.at(name).mean == st.mean);
        CHECK(back.target.at(name).std == st.std);
    }
}

TEST_CASE("pair draws share the large scales and differ only above the cutoff") {
    const auto t = random_stack(32, 32, 1, 3, 5);
    const SpectralCutoff cut{400};
    const auto pairs = make_pairs(t, cut, 2, 11);
    REQUIRE(pairs.size() == 6);
    const auto& a = pairs[0];
    const auto& b = pairs[1];
    CHECK(max_diff(a.shared, b.shared) == 0.0);
    CHECK(max_diff(a.target, b.target) == 0.0);
    CHECK(max_diff(a.conditioning, b.conditioning) > 0.1);
    const auto diff = a.conditioning - b.conditioning;
    CHECK(max_abs(lowpass(diff, cut).low) <= 1e-6);
    CHECK(max_diff(lowpass(a.conditioning, cut).low, lowpass(a.target, cut).low) <= 1e-6);
    CHECK(max_diff(a.shared, lowpass(a.target, cut).low) <= 1e-12);
}

TEST_CASE("zero noise amplitude makes the conditioning equal the shared part") {
    const auto t = random_stack(16, 16, 2, 2, 6);
    for (const Separator sep : {Separator{SpectralCutoff{200}}, Separator{BlurSpec{50, 4}}}) {
        const auto pairs = make_pairs(t, sep, 1, 3, 0.0);
        for (const auto& p : pairs) CHECK(max_diff(p.conditioning, p.shared) == 0.0);
    }
}

TEST_CASE("pairs are deterministic in the seed") {
    const auto t = random_stack(16, 16, 1, 4, 7);
    const auto a = make_pairs(t, SpectralCutoff{200}, 2, 99);
    const auto b = make_pairs(t, SpectralCutoff{200}, 2, 99);
    const auto c = make_pairs(t, SpectralCutoff{200}, 2, 100);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].conditioning.values() == b[i].conditioning.values());
        CHECK(a[i].seed == b[i].seed);
    }
    CHECK(max_diff(a[0].conditioning, c[0].conditioning) > 0.0);
    const PairFactory f(t, SpectralCutoff{200}, 1, 99);
    CHECK(max_diff(f.epoch(0)[0].conditioning, f.epoch(1)[0].conditioning) > 0.0);
}

TEST_CASE("Fourier pairs on a masked grid are refused") {
    auto t = random_stack(16, 16, 1, 2, 8);
    auto mask = std::vector<std::uint8_t>(256, 1);
    mask[0] = 0;
    t.set_mask(mask);
    try {
        make_pairs(t, SpectralCutoff{200}, 1, 1);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MaskUnsupported);
        CHECK(std::string(e.what()).find("blur_sigma_km") != std::string::npos);
    }
    CHECK_NOTHROW(make_pairs(t, BlurSpec{50, 4}, 1, 1));
}

TEST_CASE("projected source: a = 0 is the regridded shared part") {
    const auto src = GridSpec::regular(40, 0, 0.4, 0.4, 16, 16);
    const auto dst = GridSpec::regular(40, 0, 0.2, 0.2, 32, 32);
    const auto s = testutil::random_like(FieldStack(src, {"u"}, testutil::daily(2)), 3);
    const SpectralCutoff cut{300};
    const auto p0 = project_source(s, cut, dst, 0.0, 1);
    CHECK(max_diff(p0, lowpass(spectral_regrid(s, dst), cut).low) < 1e-12);

    const auto p1 = project_source(s, cut, dst, 1.0, 1);
    const auto p2 = project_source(s, cut, dst, 1.0, 2);
    CHECK(max_abs(lowpass(p1 - p2, cut).low) <= 1e-6);
    CHECK(max_diff(p1, p2) > 0.1);

    const auto pa2 = project_source(s, cut, dst, 2.0, 1);
    const double ratio = std::pow(rms(pa2 - p0) / rms(p1 - p0), 2);
    CHECK(ratio == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("blur separator: source and target shared parts agree") {
    const auto sc = make_scenario("shared_largescale", {.seed = 4, .n_times = 6});
    const BlurSpec spec{150, 4};
    const auto ls = demean(shared_component(sc.source, spec));
    const auto lt = demean(shared_component(sc.target, spec));
    CHECK(rms(ls - lt) < 0.25 * rms(lt));
}
