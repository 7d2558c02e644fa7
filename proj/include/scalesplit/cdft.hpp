#pragma once

// Empirical CDFs, quantile mapping and the CDF-t bias correction.

#include "scalesplit/fields.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace scalesplit {

class EmpiricalCDF {
public:
    /// Throws Degenerate on an empty sample. NaNs are dropped.
    explicit EmpiricalCDF(std::vector<double> samples);

    /// Right-continuous step function: #{x_i <= x} / n.
    double operator()(double x) const;
    /// Linear interpolation between order statistics at position (n-1) p.
    double quantile(double p) const;
    /// Piecewise-linear CDF, the exact inverse of quantile() on [min, max];
    /// clamps to 0 / 1 outside. Tied order statistics map to the middle of
    /// their run.
    double interpolated(double x) const;

    const std::vector<double>& sorted() const { return sorted_; }
    std::size_t size() const { return sorted_.size(); }
    double min() const { return sorted_.front(); }
    double max() const { return sorted_.back(); }
    bool constant() const { return sorted_.front() == sorted_.back(); }
    double mean() const;

private:
    std::vector<double> sorted_;
};

/// Transfer x -> Q_to(F_from(x)). Beyond the range of `from`, the correction
/// at the nearest boundary is held constant.
double transfer(double x, const EmpiricalCDF& from, const EmpiricalCDF& to);

/// Plain quantile mapping: F_obs_hist^-1(F_src_hist(x)).
std::vector<double> quantile_map(std::span<const double> x, const EmpiricalCDF& src_hist, const EmpiricalCDF& obs_hist);

/// CDF-t on one block of samples. Both source samples are first shifted by
/// mean(obs_hist) - mean(src_hist); then src_fut is mapped through
/// F_src_fut -> F_obs_fut^-1 with F_obs_fut = F_obs_hist o F_src_hist^-1 o F_src_fut.
/// `fallback` is set when a source distribution is constant and a mean shift
/// is applied instead.
std::vector<double> cdft_block(std::span<const double> obs_hist, std::span<const double> src_hist,
                               std::span<const double> src_fut, bool* fallback = nullptr);

struct CdftOptions {
    std::size_t min_samples = 30;
    bool monthly = false;  // stratify by calendar month
};

struct CdftResult {
    FieldStack corrected;
    std::size_t fallback_blocks = 0;
};

/// Per cell and variable. All three stacks share grid and variables.
CdftResult cdft_correct(const FieldStack& obs_hist, const FieldStack& src_hist, const FieldStack& src_fut,
                        const CdftOptions& opts = {});

}  // namespace scalesplit
