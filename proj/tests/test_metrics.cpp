#include <doctest.h>

#include "metric_cases.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include "scalesplit/error.hpp"
#include "scalesplit/metrics.hpp"

#include <cmath>

using namespace scalesplit;
using testutil::random_stack;

namespace {

FieldStack from_frames(std::size_t nr, std::size_t nc, const std::vector<std::vector<double>>& frames) {
    FieldStack s(GridSpec::uniform_km(nr, nc, 25, 25), {"u"}, testutil::daily(frames.size()));
    for (std::size_t t = 0; t < frames.size(); ++t)
        for (std::size_t c = 0; c < nr * nc; ++c) s.slice(t, 0)[c] = frames[t][c];
    return s;
}

/// One cell, one variable, a plain series.
FieldStack series(const std::vector<double>& x) {
    std::vector<std::vector<double>> frames;
    for (double v : x) frames.push_back({v, v, v, v});
    return from_frames(2, 2, frames);
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

TEST_CASE("random instances agree with the loop oracles") {
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        const auto r = metric_cases::check(seed);
        INFO("seed " << seed << " worst " << r.worst << " zero " << r.zero_failure);
        CHECK(r.max_err <= 1e-10);
        CHECK(r.zero_at_identity);
    }
}

TEST_CASE("mean and std differences") {
    const auto o = random_stack(3, 3, 2, 8, 1);
    auto m = o;
    for (auto& x : m.values()) x += 1.5;
    const auto [mu, sd] = delta_mean_std(m, o);
    CHECK(mu.value == doctest::Approx(1.5));
    CHECK(sd.value < 1e-12);
    auto scaled = o * 3.0;
    const auto [mu2, sd2] = delta_mean_std(scaled, o);
    const auto want = oracle::delta_sigma(scaled, o);
    for (std::size_t v = 0; v < 2; ++v) CHECK(sd2.per_var[v] == doctest::Approx(want[v]).epsilon(1e-12));
    CHECK(mu2.value >= 0.0);
}

TEST_CASE("inter-variable correlation: a sign flip costs two") {
    auto o = random_stack(3, 3, 2, 10, 2);
    for (std::size_t t = 0; t < 10; ++t)
        for (std::size_t c = 0; c < 9; ++c) o.slice(t, 1)[c] = o.slice(t, 0)[c];
    auto m = o;
    for (std::size_t t = 0; t < 10; ++t)
        for (auto& x : m.slice(t, 1)) x = -x;
    const auto s = intervar_corr(m, o);
    CHECK(s.value == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(s.labels.front() == "sfcWind|uas");
    CHECK(kind_of([&] { intervar_corr(o.select_variable(0), o.select_variable(0)); }) == ErrorKind::Degenerate);
}

TEST_CASE("constant cells are left out of the correlation") {
    auto o = random_stack(2, 2, 2, 6, 3);
    for (std::size_t t = 0; t < 6; ++t) o.slice(t, 0)[0] = 1.0;
    const auto s = intervar_corr(o, o);
    CHECK(s.excluded == 1);
    CHECK_FALSE(s.flags.empty());
}

TEST_CASE("average ranks share ties") {
    CHECK(average_ranks({3.0, 1.0, 2.0}) == std::vector<double>{3, 1, 2});
    CHECK(average_ranks({1.0, 2.0, 2.0, 5.0}) == std::vector<double>{1, 2.5, 2.5, 4});
    const std::vector<double> x{0.3, -1, 0.3, 7, 0.3};
    CHECK(average_ranks(x) == oracle::ranks(x));
}

TEST_CASE("2x2 Spearman worked by hand") {
    // ranks per frame: 1234, 4321, 1234; cells 0,1 move together against 2,3
    const auto o = from_frames(2, 2, {{1, 2, 3, 4}, {4, 3, 2, 1}, {1, 2, 3, 4}});
    const std::vector<std::size_t> cells{0, 1, 2, 3};
    const auto R = spearman_matrix(o, 0, cells);
    const double want[16] = {1, 1, -1, -1, 1, 1, -1, -1, -1, -1, 1, 1, -1, -1, 1, 1};
    for (std::size_t i = 0; i < 16; ++i) CHECK(R[i] == doctest::Approx(want[i]).epsilon(1e-12));
    // a method whose ranks never change has zero off-diagonal correlation
    const auto m = from_frames(2, 2, {{1, 2, 3, 4}, {2, 3, 4, 5}, {0, 1, 2, 3}});
    MetricConfig cfg;
    CHECK(spatial_spearman(m, o, cfg).score.value == doctest::Approx(12.0 / 16.0));
}

TEST_CASE("monotone transforms leave Delta R at zero") {
    const auto o = random_stack(4, 4, 1, 9, 4);
    auto m = o;
    for (auto& x : m.values()) x = std::exp(x) + 3.0;
    MetricConfig cfg;
    CHECK(spatial_spearman(m, o, cfg).score.value == 0.0);
}

TEST_CASE("altitude restricts the Spearman metric to mountain cells") {
    const auto o = random_stack(3, 3, 1, 9, 5);
    const auto m = random_stack(3, 3, 1, 9, 6);
    std::vector<double> alt(9, 0.0);
    alt[0] = alt[4] = alt[8] = 2000;
    MetricConfig cfg;
    const auto r = spatial_spearman(m, o, cfg, &alt);
    CHECK(r.score.name == "delta_R_mountain");
    const std::vector<std::size_t> cells{0, 4, 8};
    const auto Rm = oracle::spearman(m, 0, cells), Ro = oracle::spearman(o, 0, cells);
    double want = 0;
    for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) want += std::abs(Rm[p][q] - Ro[p][q]);
    CHECK(r.score.value == doctest::Approx(want / 9).epsilon(1e-12));
}

TEST_CASE("Spearman guard refuses large grids unless subsampling") {
    const auto o = random_stack(71, 71, 1, 3, 1);
    MetricConfig cfg;
    CHECK(kind_of([&] { spatial_spearman(o, o, cfg); }) == ErrorKind::Usage);
    cfg.spearman_subsample = 200;
    const auto r = spatial_spearman(o, o, cfg);
    CHECK(r.score.value == 0.0);
    CHECK_FALSE(r.score.flags.empty());
}

TEST_CASE("SSM: doubling the field costs three on a flat spectrum") {
    const auto o = random_stack(32, 32, 1, 200, 7);
    MetricConfig cfg;
    cfg.k_max = 1.0;
    // rms over mean of a sample spectrum: 3 at least, equality only when flat
    const double doubled = ssm(o * 2.0, o, cfg).value;
    CHECK(doubled >= 3.0);
    CHECK(doubled < 3.01);
    CHECK(doubled == doctest::Approx(oracle::ssm(o * 2.0, o, 1.0, cfg.spectrum_bins)[0]).epsilon(1e-10));
    const auto other = random_stack(32, 32, 1, 200, 8);
    CHECK(ssm(other, o, cfg).value < 0.1);
    CHECK(ssm(o, o, cfg).value == 0.0);
}

TEST_CASE("SSM needs an unmasked grid and bins below k_max") {
    auto o = random_stack(8, 8, 1, 3, 1);
    MetricConfig cfg;
    cfg.k_max = 1e-6;
    CHECK(kind_of([&] { ssm(o, o, cfg); }) == ErrorKind::Usage);
    cfg.k_max = 1.0;
    auto mask = std::vector<std::uint8_t>(64, 1);
    mask[3] = 0;
    o.set_mask(mask);
    CHECK(kind_of([&] { ssm(o, o, cfg); }) == ErrorKind::MaskUnsupported);
}

TEST_CASE("semivariogram of three cells by hand") {
    FieldStack s(GridSpec::uniform_km(2, 3, 25, 25), {"u"}, testutil::daily(1));
    const double row0[3] = {0, 1, 3};
    for (std::size_t c = 0; c < 3; ++c) s.at(0, 0, 0, c) = row0[c];
    s.set_mask({1, 1, 1, 0, 0, 0});
    MetricConfig cfg;
    cfg.h_bin_km = 30;
    cfg.h_max_km = 60;
    const auto v = semivariogram(s, 0, {0, 1, 2}, cfg);
    REQUIRE(v.method.size() == 2);
    CHECK(v.method[0] == doctest::Approx(1.25));
    CHECK(v.method[1] == doctest::Approx(4.5));
    CHECK(v.n_pairs == std::vector<std::size_t>{2, 1});
}

TEST_CASE("OVM of a constant field is zero and flagged") {
    auto o = random_stack(3, 3, 1, 4, 1);
    for (auto& x : o.values()) x = 2.0;
    std::vector<double> alt(9, 1000.0);
    MetricConfig cfg;
    cfg.h_max_km = 60;
    cfg.h_bin_km = 30;
    const auto r = variogram_metric(o, o, alt, cfg);
    CHECK(r.score.value == 0.0);
    CHECK_FALSE(r.score.flags.empty());
    const auto m = random_stack(3, 3, 1, 4, 2);
    CHECK(std::isinf(variogram_metric(m, o, alt, cfg).score.value));
    std::vector<double> low(9, 10.0);
    CHECK(kind_of([&] { variogram_metric(o, o, low, cfg); }) == ErrorKind::Degenerate);
}

TEST_CASE("KS statistic cases") {
    CHECK(ks_two_sample({1, 2, 3}, {2, 3, 4}) == doctest::Approx(1.0 / 3.0));
    CHECK(ks_two_sample({1, 2}, {5, 6, 7}) == 1.0);
    CHECK(ks_two_sample({2, 3, 4}, {1, 2, 3}) == ks_two_sample({1, 2, 3}, {2, 3, 4}));
    const auto a = random_stack(3, 3, 1, 7, 1), b = random_stack(3, 3, 1, 7, 2);
    CHECK(ks_statistic(a, b).value == ks_statistic(b, a).value);
    const Region west{-90, 90, -180, a.grid().lon()[0] + 1e-9};
    CHECK(ks_statistic(a, a, west).value == 0.0);
}

TEST_CASE("extremes: a large offset gives f = q") {
    const auto o = random_stack(2, 2, 1, 201, 3);
    auto m = o;
    for (auto& x : m.values()) x += 1000.0;
    MetricConfig cfg;
    const auto [f, I] = extreme_metrics(m, o, cfg);
    CHECK(f.value == doctest::Approx(191.0 / 201.0));
    CHECK(f.value == doctest::Approx(cfg.q).epsilon(1e-3));
    CHECK(I.value == doctest::Approx(oracle::extremes(m, o, cfg.q).I[0]).epsilon(1e-12));
    CHECK(I.value < 1000.0);
}

TEST_CASE("extremes on a five-step series by hand") {
    const auto o = series({1, 2, 3, 4, 5});
    const auto m = series({1, 1, 1, 10, 10});
    MetricConfig cfg;
    cfg.q = 0.6;  // threshold 3.4
    cfg.min_extreme_times = 5;
    const auto th = extreme_thresholds(o, cfg);
    CHECK(th[0][0] == doctest::Approx(3.4));
    const auto [f, I] = extreme_metrics(m, o, cfg);
    CHECK(f.value == 0.0);
    CHECK(I.value == doctest::Approx(5.5));
    cfg.min_extreme_times = 20;
    CHECK(kind_of([&] { extreme_metrics(m, o, cfg); }) == ErrorKind::Degenerate);
}

TEST_CASE("seasons and complete instances") {
    CHECK(season_of(day_from_civil(2000, 12, 5)) == std::pair{Season::DJF, 2001});
    CHECK(season_of(day_from_civil(2001, 2, 28)) == std::pair{Season::DJF, 2001});
    CHECK(season_of(day_from_civil(2001, 4, 1)).first == Season::MAM);
    CHECK(season_of(day_from_civil(2001, 8, 1)).first == Season::JJA);
    CHECK(season_of(day_from_civil(2001, 11, 30)).first == Season::SON);
    std::size_t dropped = 0;
    const auto keep = complete_seasons(metric_cases::season_dates(), &dropped);
    CHECK(keep == std::vector<std::uint8_t>{1, 1, 1, 1, 1, 1, 1, 1, 1, 0});
    CHECK(dropped == 1);
    // every day of a year falls in exactly one season
    std::array<int, 4> counts{};
    for (Day d = day_from_civil(2001, 1, 1); d < day_from_civil(2002, 1, 1); ++d)
        ++counts[static_cast<std::size_t>(season_of(d).first)];
    CHECK(counts[0] + counts[1] + counts[2] + counts[3] == 365);
    CHECK(counts[1] == 92);
}

TEST_CASE("source consistency: identical fields and a ten percent change") {
    auto g = random_stack(3, 3, 1, 20, 1, 25.0, 1.0, 10.0);
    MetricConfig cfg;
    const auto r = gcm_consistency(g, g, cfg);
    CHECK(r.rho.value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.anomalies.value == 0.0);
    CHECK_FALSE(r.delta_full.flags.empty());

    for (std::size_t t = 0; t < 20; ++t)
        for (auto& x : g.slice(t, 0)) x = t < 10 ? 10.0 : 11.0;
    const Period hist{g.times()[0], g.times()[9]}, fut{g.times()[10], g.times()[19]};
    CHECK(relative_change(g, 0, hist, fut) == doctest::Approx(10.0).epsilon(1e-12));
    auto zero = g;
    for (auto& x : zero.values()) x = 0.0;
    CHECK(kind_of([&] { relative_change(zero, 0, hist, fut); }) == ErrorKind::Degenerate);
}

TEST_CASE("evaluate_metrics collects what its inputs allow") {
    const auto o = random_stack(4, 4, 2, 25, 1);
    const auto m = random_stack(4, 4, 2, 25, 2);
    MetricConfig cfg;
    cfg.k_max = 1.0;
    cfg.h_max_km = 60;
    cfg.h_bin_km = 30;
    const auto rep = evaluate_metrics({&m, &o, nullptr, nullptr, std::nullopt}, cfg);
    for (const char* name : {"delta_mu", "delta_sigma", "delta_rho", "delta_R", "SSM", "KS", "f", "I"})
        CHECK(rep.find(name) != nullptr);
    CHECK(rep.find("OVM") == nullptr);
    CHECK(rep.find("rho_GCM") == nullptr);
    CHECK_FALSE(rep.notes.empty());
    const auto self = evaluate_metrics({&o, &o, &o, nullptr, std::nullopt}, cfg);
    for (const auto& s : self.scores)
        if (!higher_is_better(s.name)) CHECK_MESSAGE(s.value == 0.0, s.name);
    const auto table = metrics_table_csv({{"a", rep}, {"b", self}});
    CHECK(table.rfind("metric,a,b\n", 0) == 0);
}
