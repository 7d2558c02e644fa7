#pragma once

// Seeded synthetic fields (power-law spectra, correlated variables, AR(1)
// in time) and the canned source/target scenarios.

#include "scalesplit/fields.hpp"
#include "scalesplit/kv.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace scalesplit {

inline constexpr double kInfiniteWavelength = std::numeric_limits<double>::infinity();

struct SynthSpec {
    GridSpec grid;
    std::vector<Day> times;
    std::vector<std::string> variables{"u"};
    std::vector<double> beta{3.0};       // P(k) ~ k^-beta, per variable or one for all
    std::vector<double> amplitude{1.0};  // per-cell standard deviation
    std::vector<double> mean{0.0};
    double lambda_eff_km = kInfiniteWavelength;  // no power at |k| > 1 / lambda_eff
    double lambda_max_km = kInfiniteWavelength;  // no power at |k| <= 1 / lambda_max
    std::vector<double> correlation;             // V x V row-major; empty = identity
    double ar = 0.0;
    bool include_mean_mode = false;  // give the zero mode the fundamental's power
    std::uint64_t seed = 0;

    void validate() const;
};

/// Spectral synthesis: white noise per (time, component) with AR(1) memory,
/// mixed across variables by the correlation factor, filtered by
/// sqrt(P(k)) and scaled to the requested per-cell variance. Realized
/// inter-variable correlation equals the matrix when slopes agree.
FieldStack generate(const SynthSpec& spec);

/// `n` dates starting at `start`, `step_days` apart.
std::vector<Day> date_range(Day start, std::size_t n, int step_days);

/// Keep every `factor`-th row and column, starting at index 0.
FieldStack subsample(const FieldStack& stack, std::size_t factor);

struct Scenario {
    std::string name;
    FieldStack source;
    FieldStack target;
    KeyValues truth;
};

struct ScenarioOptions {
    std::uint64_t seed = 0;
    std::size_t n_times = 0;  // 0 = scenario default
    int step_days = 0;        // 0 = scenario default
};

/// shared_largescale | biased_source | future_shift. Ground truth goes to
/// `truth` (also written by write_scenario).
Scenario make_scenario(const std::string& name, const ScenarioOptions& opts = {});

/// Writes source.wfld, target.wfld, truth.txt and, when the truth carries a
/// split date, {source,target}_{train,eval}.wfld.
void write_scenario(const Scenario& sc, const std::string& dir);

/// Times before `split` and times on or after it.
std::pair<FieldStack, FieldStack> split_at(const FieldStack& stack, Day split);

}  // namespace scalesplit
