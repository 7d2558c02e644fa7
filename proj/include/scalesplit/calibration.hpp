#pragma once

// Ensemble calibration diagnostics and noise-scale tuning.

#include "scalesplit/fields.hpp"
#include "scalesplit/flow_match.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scalesplit {

/// Fair empirical CRPS: mean|x_i - y| - 0.5 * mean over all ordered pairs |x_i - x_j|.
double crps(std::span<const double> members, double obs);

/// Verification points: members stored point-major (point * n_members + i).
struct PointSet {
    std::size_t n_members = 0;
    std::vector<double> members;
    std::vector<double> obs;

    std::size_t size() const { return obs.size(); }
    std::span<const double> ensemble(std::size_t p) const { return {members.data() + p * n_members, n_members}; }
};

/// Points over all times and valid cells of variable `var`, or of every
/// variable when var is empty.
PointSet collect_points(const Ensemble& ens, const FieldStack& obs, std::optional<std::size_t> var = std::nullopt);

struct SpreadSkill {
    double spread = 0.0;  // sqrt of mean unbiased member variance
    double rmse = 0.0;    // RMSE of the ensemble mean
    double ratio = 0.0;   // +inf when rmse is 0
    bool degenerate = false;
};

double mean_crps(const PointSet& pts);
SpreadSkill spread_skill(const PointSet& pts);
/// n_members + 1 bins; ties are broken uniformly with a seeded draw per point.
std::vector<std::size_t> rank_histogram(const PointSet& pts, std::uint64_t seed = 0);

struct ReliabilityPoint {
    double nominal = 0.0;
    double empirical = 0.0;
};

/// Ensemble quantile with Weibull plotting positions: h = q (n + 1) on the
/// 1-based order statistics, linearly interpolated and clamped to [1, n].
double ensemble_quantile(std::vector<double> sorted_members, double q);

/// Coverage of the central interval [Q((1-p)/2), Q((1+p)/2)] for each level p.
std::vector<ReliabilityPoint> reliability(const PointSet& pts, const std::vector<double>& levels);

std::vector<double> default_levels();

/// Pearson chi-square statistic against a uniform histogram and its p-value.
struct ChiSquare {
    double statistic = 0.0;
    double p_value = 0.0;
};
ChiSquare chi_square_uniform(const std::vector<std::size_t>& counts);

struct VariableCalibration {
    std::string variable;  // "all" for the pooled entry
    double crps = 0.0;
    SpreadSkill spread_skill;
    std::vector<std::size_t> rank_histogram;
    std::vector<ReliabilityPoint> reliability;
    std::size_t n_points = 0;
};

struct CalibrationReport {
    double noise_scale = 0.0;
    std::vector<VariableCalibration> variables;  // per variable, then pooled
    const VariableCalibration& pooled() const { return variables.back(); }
};

CalibrationReport calibrate(const Ensemble& ens, const FieldStack& obs, double noise_scale,
                            const std::vector<double>& levels = default_levels(), std::uint64_t seed = 0);

struct TuneResult {
    std::vector<CalibrationReport> reports;
    double recommended = 0.0;
    bool spread_monotone = true;
    std::vector<std::string> warnings;
};

/// Regenerates the ensemble for every a (the generator is expected to reuse
/// its seeds) and recommends the a whose pooled spread-skill ratio is
/// nearest 1.
TuneResult tune_noise_scale(const std::function<Ensemble(double)>& generate, const FieldStack& obs,
                            const std::vector<double>& a_grid, const std::vector<double>& levels = default_levels(),
                            std::uint64_t seed = 0);

/// CSV tables: summary, rank histogram (variable,bin,count), reliability.
std::string calibration_summary_csv(const std::vector<CalibrationReport>& reports);
std::string rank_histogram_csv(const CalibrationReport& report);
std::string reliability_csv(const CalibrationReport& report);

}  // namespace scalesplit
