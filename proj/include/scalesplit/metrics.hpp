#pragma once

// Evaluation metrics against observations and against the driving source
// model, with per-variable values, variable averages and plot-ready curves.

#include "scalesplit/fields.hpp"
#include "scalesplit/kv.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace scalesplit {

/// Inclusive day range.
struct Period {
    Day start = 0;
    Day end = 0;
    bool contains(Day d) const { return d >= start && d <= end; }
};

struct Region {
    double lat_min, lat_max, lon_min, lon_max;
    bool contains(double lat, double lon) const {
        return lat >= lat_min && lat <= lat_max && lon >= lon_min && lon <= lon_max;
    }
};

struct MetricConfig {
    double k_max = 1.0 / 200.0;  // cycles per km
    double h_max_km = 300.0;
    double h_bin_km = 25.0;
    double theta_alt = 800.0;  // m
    double q = 0.95;
    std::optional<Period> hist;
    std::optional<Period> fut;
    std::size_t spectrum_bins = 32;
    std::size_t spearman_max_cells = 5000;
    std::size_t spearman_subsample = 0;  // 0: refuse grids above the guard
    std::size_t min_extreme_times = 20;
    std::uint64_t seed = 0;

    void validate() const;
    KeyValues to_kv() const;
};

/// One metric: per-variable (or per-pair) values and their average.
struct Score {
    std::string name;
    std::vector<std::string> labels;
    std::vector<double> per_var;
    double value = 0.0;
    std::size_t excluded = 0;  // cells or instances left out, see flags
    std::vector<std::string> flags;
};

/// Throws Extent unless grids, masks and variables agree.
void require_aligned(const FieldStack& a, const FieldStack& b, const std::string& what);

std::pair<Score, Score> delta_mean_std(const FieldStack& method, const FieldStack& obs);

/// Temporal Pearson correlation; nullopt when either series is constant.
std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b);

Score intervar_corr(const FieldStack& method, const FieldStack& obs);

struct DistanceCurve {
    std::string variable;
    std::vector<double> h_km;  // bin centres
    std::vector<double> method;
    std::vector<double> obs;
    std::vector<std::size_t> n_pairs;
};

struct SpearmanResult {
    Score score;
    std::vector<DistanceCurve> curves;  // mean |R| by distance
};

/// Average ranks (1-based) with ties sharing the mean rank.
std::vector<double> average_ranks(const std::vector<double>& values);

/// Spearman correlation matrix (row-major, |cells|^2) of one variable over
/// the given cells.
std::vector<double> spearman_matrix(const FieldStack& stack, std::size_t var, const std::vector<std::size_t>& cells);

/// `altitude`, when given, restricts to cells above cfg.theta_alt.
SpearmanResult spatial_spearman(const FieldStack& method, const FieldStack& obs, const MetricConfig& cfg,
                                const std::vector<double>* altitude = nullptr);

struct SpectrumCurve {
    std::string variable;
    std::vector<double> k;
    std::vector<double> method;
    std::vector<double> obs;
};

/// Bins whose centre is <= cfg.k_max.
Score ssm(const FieldStack& method, const FieldStack& obs, const MetricConfig& cfg,
          std::vector<SpectrumCurve>* curves = nullptr);
/// Same formula over bins with centre in [k_lo, k_hi].
Score ssm_band(const FieldStack& method, const FieldStack& obs, double k_lo, double k_hi, std::size_t n_bins);

struct VariogramCurve {
    std::string variable;
    std::vector<double> h_km;
    std::vector<double> method;
    std::vector<double> obs;
    std::vector<std::size_t> n_pairs;
};

/// Time-averaged semi-variogram over cell pairs of `cells`, distance bins
/// (b w, (b+1) w] up to h_max. Empty bins are dropped.
VariogramCurve semivariogram(const FieldStack& stack, std::size_t var, const std::vector<std::size_t>& cells,
                             const MetricConfig& cfg);

struct VariogramResult {
    Score score;
    std::vector<VariogramCurve> curves;
};

VariogramResult variogram_metric(const FieldStack& method, const FieldStack& obs, const std::vector<double>& altitude,
                                 const MetricConfig& cfg);

/// sup |F_a - F_b| of two samples.
double ks_two_sample(std::vector<double> a, std::vector<double> b);
Score ks_statistic(const FieldStack& method, const FieldStack& obs, const std::optional<Region>& region = std::nullopt);

/// Per-cell thresholds: cfg.q quantile of the obs series (linear interpolation).
std::vector<std::vector<double>> extreme_thresholds(const FieldStack& obs, const MetricConfig& cfg);
/// Frequency f and intensity I.
std::pair<Score, Score> extreme_metrics(const FieldStack& method, const FieldStack& obs, const MetricConfig& cfg);

enum class Season { DJF = 0, MAM = 1, JJA = 2, SON = 3 };
inline constexpr std::array<const char*, 4> kSeasonNames{"DJF", "MAM", "JJA", "SON"};

/// Season of a day and its season-year (December counts toward the next year).
std::pair<Season, int> season_of(Day day);

/// Per-time flag: belongs to a season instance that has data in all three
/// of its months. `dropped` receives the number of incomplete instances.
std::vector<std::uint8_t> complete_seasons(const std::vector<Day>& times, std::size_t* dropped = nullptr);

struct AnomalySeries {
    std::string variable;
    std::vector<int> years;
    std::vector<double> method;
    std::vector<double> gcm;
};

struct GcmResult {
    Score rho;
    Score anomalies;
    Score delta_full;
    Score delta_season;
    std::vector<AnomalySeries> series;
    std::vector<double> delta_full_method;  // per variable, percent
    std::vector<double> delta_full_gcm;
    // [var][season][cell], NaN where undefined
    std::vector<std::array<std::vector<double>, 4>> season_method;
    std::vector<std::array<std::vector<double>, 4>> season_gcm;
};

/// Relative change of the spatial-temporal mean between two periods, percent.
double relative_change(const FieldStack& stack, std::size_t var, const Period& hist, const Period& fut);

/// Needs identical layouts and times. Delta metrics need cfg.hist and cfg.fut.
GcmResult gcm_consistency(const FieldStack& method, const FieldStack& gcm, const MetricConfig& cfg);

struct MetricReport {
    std::vector<Score> scores;
    std::vector<SpectrumCurve> spectra;
    std::vector<VariogramCurve> variograms;
    std::vector<DistanceCurve> correlation_distance;
    std::vector<AnomalySeries> anomalies;
    std::vector<std::string> notes;

    const Score* find(const std::string& name) const;
};

struct EvaluateInputs {
    const FieldStack* method = nullptr;
    const FieldStack* obs = nullptr;
    const FieldStack* gcm = nullptr;               // optional, on the method grid
    const std::vector<double>* altitude = nullptr;  // optional, per cell
    std::optional<Region> ks_region;
};

/// Every metric whose inputs are available; skipped ones are listed in notes.
MetricReport evaluate_metrics(const EvaluateInputs& in, const MetricConfig& cfg);

/// Metric names whose larger values are better (the rest are errors).
bool higher_is_better(const std::string& metric);

/// Long table: method,metric,variable,value.
std::string metrics_long_csv(const std::vector<std::pair<std::string, MetricReport>>& reports);
/// Wide table: metric,<method>... of variable averages.
std::string metrics_table_csv(const std::vector<std::pair<std::string, MetricReport>>& reports);
/// Min-max rescaling across methods per metric, 1 = best.
std::string radar_csv(const std::vector<std::pair<std::string, MetricReport>>& reports);

std::string spectra_csv(const std::vector<SpectrumCurve>& curves);
std::string variogram_csv(const std::vector<VariogramCurve>& curves);
std::string correlation_distance_csv(const std::vector<DistanceCurve>& curves);
std::string anomalies_csv(const std::vector<AnomalySeries>& series);

}  // namespace scalesplit
