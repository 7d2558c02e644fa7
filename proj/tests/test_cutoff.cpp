#include <doctest.h>

#include "test_util.hpp"

#include "scalesplit/cutoff_select.hpp"
#include "scalesplit/error.hpp"
#include "scalesplit/synth.hpp"

#include <algorithm>

using namespace scalesplit;

namespace {

const std::vector<double> kCandidates{300, 400, 500, 600, 750, 1200};

std::size_t index_of(double km) {
    return static_cast<std::size_t>(std::find(kCandidates.begin(), kCandidates.end(), km) - kCandidates.begin());
}

}  // namespace

TEST_CASE("identical domains are indistinguishable at every candidate") {
    const auto s = make_scenario("shared_largescale", {.seed = 1, .n_times = 30}).target;
    const auto scan = select_cutoff(s, s, kCandidates);
    for (double a : scan.accuracies) CHECK(a == doctest::Approx(0.5).epsilon(0.1));
    CHECK(scan.selected_km == 300);
    CHECK_FALSE(scan.flagged);
}

TEST_CASE("constructed scenario: selection lands within one step of the truth") {
    for (std::uint64_t seed : {3u, 4u}) {
        const auto sc = make_scenario("shared_largescale", {.seed = seed});
        const double truth = sc.truth.number("cutoff_km");
        CutoffOptions opts;
        opts.seed = seed;
        const auto scan = select_cutoff(sc.source, sc.target, kCandidates, opts);
        const long step = static_cast<long>(index_of(scan.selected_km)) - static_cast<long>(index_of(truth));
        CHECK(std::abs(step) <= 1);
        REQUIRE(scan.wavelengths_km.front() == 1200);
        CHECK(scan.accuracies.back() > 0.9);  // 300 km separates the domains
    }
}

TEST_CASE("accuracy falls with wavelength within the bootstrap bands") {
    const auto sc = make_scenario("shared_largescale", {.seed = 7});
    const auto scan = select_cutoff(sc.source, sc.target, kCandidates);
    std::vector<std::pair<double, double>> bands;
    for (std::size_t i = 0; i < scan.correct.size(); ++i) {
        bands.push_back(bootstrap_band(scan.correct[i], 500, 1));
        CHECK(bands[i].first <= scan.accuracies[i]);
        CHECK(scan.accuracies[i] <= bands[i].second);
    }
    // descending wavelengths: each shorter cutoff is at least as separable, up to the band
    for (std::size_t i = 1; i < scan.accuracies.size(); ++i) CHECK(scan.accuracies[i] >= bands[i - 1].first);
    CHECK(bands.back().first > 0.5);
}

TEST_CASE("single candidate and determinism") {
    const auto sc = make_scenario("shared_largescale", {.seed = 2, .n_times = 40});
    const auto a = select_cutoff(sc.source, sc.target, {750});
    CHECK(a.wavelengths_km.size() == 1);
    CHECK(a.selected_km == 750);
    const auto b = select_cutoff(sc.source, sc.target, {750});
    CHECK(a.accuracies == b.accuracies);
    CHECK(a.correct == b.correct);
    CHECK(scan_csv(a) == scan_csv(b));
}

TEST_CASE("too few frames is degenerate") {
    const auto sc = make_scenario("shared_largescale", {.seed = 2, .n_times = 10});
    try {
        select_cutoff(sc.source, sc.target, kCandidates);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Degenerate);
    }
}

TEST_CASE("features are log powers of the low band only") {
    const auto s = make_scenario("shared_largescale", {.seed = 2, .n_times = 3}).target;
    const auto f500 = cutoff_features(s, 500, 32);
    const auto f1200 = cutoff_features(s, 1200, 32);
    REQUIRE(f500.size() == 3);
    CHECK(f1200.front().size() < f500.front().size());
}
