#include <doctest.h>

#include "test_util.hpp"

#include "scalesplit/error.hpp"
#include "scalesplit/metrics.hpp"
#include "scalesplit/spectral.hpp"
#include "scalesplit/synth.hpp"
#include "scalesplit/wfld.hpp"

#include <cmath>
#include <filesystem>

using namespace scalesplit;

namespace {

SynthSpec base_spec(std::size_t n, std::size_t nt, std::uint64_t seed) {
    SynthSpec s;
    s.grid = GridSpec::uniform_km(n, n, 25.0, 25.0);
    s.times = date_range(day_from_civil(2001, 3, 1), nt, 1);
    s.seed = seed;
    return s;
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

TEST_CASE("zero amplitude and determinism") {
    auto spec = base_spec(16, 3, 1);
    spec.amplitude = {0.0};
    spec.mean = {2.5};
    const auto flat = generate(spec);
    for (double x : flat.values()) CHECK(x == 2.5);
    spec.amplitude = {1.0};
    spec.ar = 0.7;
    const auto a = generate(spec), b = generate(spec);
    CHECK(a.values() == b.values());
    spec.seed = 2;
    CHECK(generate(spec).values() != a.values());
}

TEST_CASE("dates advance by the step") {
    const auto d = date_range(day_from_civil(2000, 2, 27), 4, 2);
    CHECK(format_date(d[0]) == "2000-02-27");
    CHECK(format_date(d[1]) == "2000-02-29");
    CHECK(format_date(d[3]) == "2000-03-04");
}

TEST_CASE("fitted spectral slope matches beta") {
    auto spec = base_spec(128, 8, 3);
    spec.beta = {3.0};
    const auto s = generate(spec);
    const auto ps = isotropic_spectrum(s, 0, 48);
    // least squares in log-log away from the lowest bins and the corners
    const double k_nyq = 0.5 / 25.0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t b = 0; b < ps.size(); ++b) {
        if (ps.k_bins[b] < 4.0 / (128 * 25.0) || ps.k_bins[b] > 0.8 * k_nyq) continue;
        const double x = std::log(ps.k_bins[b]), y = std::log(ps.power[b]);
        sx += x, sy += y, sxx += x * x, sxy += x * y, ++n;
    }
    REQUIRE(n > 10);
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(std::abs(slope + 3.0) <= 0.3);
}

TEST_CASE("no power above the effective-resolution wavenumber") {
    auto spec = base_spec(64, 4, 4);
    spec.lambda_eff_km = 200.0;
    const auto s = generate(spec);
    const auto ps = isotropic_spectrum(s, 0, 64);
    double above = 0, total = 0;
    for (std::size_t b = 0; b < ps.size(); ++b) {
        total += ps.power[b] * ps.n_modes[b];
        if (ps.k_lo[b] >= 1.0 / 200.0 * (1 + 1e-9)) above += ps.power[b] * ps.n_modes[b];
    }
    CHECK(above / total < 1e-10);
    const auto split = lowpass(s, SpectralCutoff{200.0});
    CHECK(max_abs(split.high) < 1e-10 * max_abs(s));
}

TEST_CASE("per-cell amplitude and mean") {
    auto spec = base_spec(16, 2000, 5);
    spec.amplitude = {1.7};
    spec.mean = {4.0};
    const auto s = generate(spec);
    const auto [mean, sd] = temporal_moments(s);
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 256; ++c) m += mean[0][c], v += sd[0][c] * sd[0][c];
    CHECK(m / 256 == doctest::Approx(4.0).epsilon(0.02));
    CHECK(std::sqrt(v / 256) == doctest::Approx(1.7).epsilon(0.05));
}

TEST_CASE("realized inter-variable correlation") {
    auto spec = base_spec(10, 100, 6);
    spec.variables = {"a", "b", "c"};
    spec.correlation = {1.0, 0.6, -0.3, 0.6, 1.0, 0.2, -0.3, 0.2, 1.0};
    const auto s = generate(spec);
    auto pooled = [&](std::size_t v) {
        std::vector<double> x;
        for (std::size_t t = 0; t < s.n_times(); ++t)
            for (double y : s.slice(t, v)) x.push_back(y);
        return x;
    };
    const auto a = pooled(0), b = pooled(1), c = pooled(2);
    REQUIRE(a.size() == 10000);
    CHECK(std::abs(*pearson(a, b) - 0.6) <= 0.05);
    CHECK(std::abs(*pearson(a, c) + 0.3) <= 0.05);
    CHECK(std::abs(*pearson(b, c) - 0.2) <= 0.05);
}

TEST_CASE("invalid specs are rejected") {
    auto spec = base_spec(8, 2, 1);
    spec.variables = {"a", "b"};
    spec.correlation = {1.0, 2.0, 2.0, 1.0};
    CHECK(kind_of([&] { generate(spec); }) == ErrorKind::Usage);
    spec.correlation = {1.0, 0.5, 0.4, 1.0};
    CHECK(kind_of([&] { generate(spec); }) == ErrorKind::Usage);
    spec.correlation.clear();
    spec.amplitude = {-1.0};
    CHECK(kind_of([&] { generate(spec); }) == ErrorKind::Usage);
    spec.amplitude = {1.0};
    spec.lambda_eff_km = 30.0;
    CHECK(kind_of([&] { generate(spec); }) == ErrorKind::Usage);
    CHECK(kind_of([] { make_scenario("nope"); }) == ErrorKind::Usage);
}

TEST_CASE("shared_largescale agrees below its cutoff") {
    const auto sc = make_scenario("shared_largescale", {.seed = 1, .n_times = 8});
    const double cut = sc.truth.number("cutoff_km");
    const auto ls = lowpass(sc.source, SpectralCutoff{cut}).low;
    const auto lt = lowpass(sc.target, SpectralCutoff{cut}).low;
    CHECK(testutil::max_diff(ls, lt) <= 1e-6);
    CHECK(max_abs(lowpass(sc.source, SpectralCutoff{cut}).high) <= 1e-6);
    CHECK(max_abs(lowpass(sc.target, SpectralCutoff{cut}).high) > 0.1);
}

TEST_CASE("biased_source has affine moments") {
    const auto sc = make_scenario("biased_source", {.seed = 1, .n_times = 500});
    const double gain = sc.truth.number("gain"), offset = sc.truth.number("offset");
    const auto [ms, ss] = temporal_moments(sc.source);
    const auto [mt, st] = temporal_moments(sc.target);
    for (std::size_t c = 0; c < sc.target.n_cells(); ++c) {
        CHECK(ms[0][c] == doctest::Approx(gain * mt[0][c] + offset).epsilon(1e-10));
        CHECK(ss[0][c] == doctest::Approx(gain * st[0][c]).epsilon(1e-10));
    }
}

TEST_CASE("future_shift carries the recorded mean change") {
    const auto sc = make_scenario("future_shift", {.seed = 1});
    const auto hist = sc.truth.require("hist"), fut = sc.truth.require("fut");
    auto period = [](const std::string& s) {
        const auto comma = s.find(',');
        return Period{parse_date(s.substr(0, comma)), parse_date(s.substr(comma + 1))};
    };
    const double want = sc.truth.number("delta_full_pct");
    CHECK(std::abs(relative_change(sc.target, 0, period(hist), period(fut)) - want) <= 0.5);
    CHECK(std::abs(relative_change(sc.source, 0, period(hist), period(fut)) - want) <= 0.5);
    CHECK(sc.source.grid().n_rows() * 2 == sc.target.grid().n_rows());
}

TEST_CASE("write_scenario emits the stacks, splits and truth") {
    const auto dir = std::filesystem::temp_directory_path() / "scalesplit_synth_test";
    std::filesystem::remove_all(dir);
    const auto sc = make_scenario("biased_source", {.seed = 2, .n_times = 40});
    write_scenario(sc, dir.string());
    for (const char* f : {"source.wfld", "target.wfld", "truth.txt", "source_train.wfld", "source_eval.wfld",
                          "target_train.wfld", "target_eval.wfld"})
        CHECK(std::filesystem::exists(dir / f));
    const auto truth = KeyValues::load((dir / "truth.txt").string());
    CHECK(truth.number("gain") == 2.0);
    const auto train = read_fieldstack((dir / "target_train.wfld").string());
    const auto eval = read_fieldstack((dir / "target_eval.wfld").string());
    CHECK(train.n_times() + eval.n_times() == 40);
    CHECK(format_date(eval.times().front()) == truth.require("split_date"));
    std::filesystem::remove_all(dir);
}
