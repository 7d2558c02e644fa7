#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace scalesplit {

inline constexpr double kKmPerDegree = 111.32;
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// Calendar day index: days since 1970-01-01.
using Day = std::int32_t;

struct CivilDate {
    int year;
    unsigned month;  // 1..12
    unsigned day;    // 1..31
};

CivilDate civil_from_day(Day day);
Day day_from_civil(int year, unsigned month, unsigned day);
/// Parse "YYYY-MM-DD".
Day parse_date(const std::string& text);
std::string format_date(Day day);

/// Regular latitude/longitude grid.
class GridSpec {
public:
    GridSpec() = default;

    /// Build from coordinate lists; both must be strictly monotone with at
    /// least two entries.
    GridSpec(std::vector<double> lat, std::vector<double> lon);

    /// Grid starting at (lat0, lon0) with constant degree steps.
    static GridSpec regular(double lat0, double lon0, double dlat, double dlon, std::size_t n_rows,
                            std::size_t n_cols);

    /// Grid centred on (center_lat, center_lon) whose mean spacings are
    /// exactly dx_km and dy_km.
    static GridSpec uniform_km(std::size_t n_rows, std::size_t n_cols, double dx_km, double dy_km,
                               double center_lat = 46.0, double center_lon = 2.0);

    std::size_t n_rows() const { return lat_.size(); }
    std::size_t n_cols() const { return lon_.size(); }
    std::size_t n_cells() const { return lat_.size() * lon_.size(); }
    const std::vector<double>& lat() const { return lat_; }
    const std::vector<double>& lon() const { return lon_; }
    double dx_km() const { return dx_km_; }
    double dy_km() const { return dy_km_; }
    double mean_lat() const;

    /// Planar distance between two cells in km (mean-latitude projection).
    double distance_km(std::size_t cell_a, std::size_t cell_b) const;

    bool same_as(const GridSpec& other, double tol = 1e-9) const;

private:
    std::vector<double> lat_;
    std::vector<double> lon_;
    double dx_km_ = 0.0;
    double dy_km_ = 0.0;
};

/// (time x variable x row x col) gridded values with a validity mask.
/// Masked-out cells hold NaN in every slice; the mask is authoritative.
class FieldStack {
public:
    FieldStack() = default;

    /// Zero-filled stack with all cells valid. Units default to "m s-1".
    FieldStack(GridSpec grid, std::vector<std::string> variables, std::vector<Day> times);

    const GridSpec& grid() const { return grid_; }
    const std::vector<std::string>& variables() const { return variables_; }
    const std::vector<std::string>& units() const { return units_; }
    const std::vector<Day>& times() const { return times_; }
    const std::vector<std::uint8_t>& mask() const { return mask_; }

    std::size_t n_times() const { return times_.size(); }
    std::size_t n_vars() const { return variables_.size(); }
    std::size_t n_rows() const { return grid_.n_rows(); }
    std::size_t n_cols() const { return grid_.n_cols(); }
    std::size_t n_cells() const { return grid_.n_cells(); }
    std::size_t n_valid() const;
    bool fully_valid() const;
    bool valid(std::size_t cell) const { return mask_[cell] != 0; }

    void set_units(std::vector<std::string> units);
    /// Replace the mask and write NaN into every newly masked cell.
    void set_mask(std::vector<std::uint8_t> mask);

    std::size_t index(std::size_t t, std::size_t v, std::size_t row, std::size_t col) const {
        return ((t * n_vars() + v) * n_rows() + row) * n_cols() + col;
    }
    double& at(std::size_t t, std::size_t v, std::size_t row, std::size_t col) {
        return values_[index(t, v, row, col)];
    }
    double at(std::size_t t, std::size_t v, std::size_t row, std::size_t col) const {
        return values_[index(t, v, row, col)];
    }

    /// One (time, variable) frame, row-major.
    std::span<double> slice(std::size_t t, std::size_t v) {
        return {values_.data() + (t * n_vars() + v) * n_cells(), n_cells()};
    }
    std::span<const double> slice(std::size_t t, std::size_t v) const {
        return {values_.data() + (t * n_vars() + v) * n_cells(), n_cells()};
    }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    /// Same grid, variables, mask; only the listed time indices.
    FieldStack select_times(const std::vector<std::size_t>& indices) const;
    /// Same grid, times, mask; only variable `v`.
    FieldStack select_variable(std::size_t v) const;
    /// Same layout as *this, zero on valid cells.
    FieldStack zeros_like() const;
    bool same_layout(const FieldStack& other) const;
    /// Throws ErrorKind::Extent when layouts differ.
    void require_same_layout(const FieldStack& other, const std::string& what) const;

    /// Re-apply NaN to masked cells (after arithmetic on the whole buffer).
    void enforce_mask();

    FieldStack& operator+=(const FieldStack& other);
    FieldStack& operator-=(const FieldStack& other);
    FieldStack& operator*=(double s);
    friend FieldStack operator+(FieldStack a, const FieldStack& b) { return a += b; }
    friend FieldStack operator-(FieldStack a, const FieldStack& b) { return a -= b; }
    friend FieldStack operator*(FieldStack a, double s) { return a *= s; }

private:
    GridSpec grid_;
    std::vector<std::string> variables_;
    std::vector<std::string> units_;
    std::vector<Day> times_;
    std::vector<double> values_;
    std::vector<std::uint8_t> mask_;
};

/// Temporal mean and population standard deviation per variable per cell.
struct MomentMaps {
    std::vector<std::vector<double>> mean;  // [var][cell]
    std::vector<std::vector<double>> std;   // [var][cell]
};

MomentMaps temporal_moments(const FieldStack& stack);

/// Bilinear interpolation onto `target`. A target cell is missing when any
/// source cell with non-zero weight is missing.
FieldStack bilinear_regrid(const FieldStack& stack, const GridSpec& target);

/// Max-norm of (a - b) over valid cells, divided by the max-norm of b
/// (or the raw max-norm when b is zero).
double relative_max_error(const FieldStack& a, const FieldStack& b);
double max_abs(const FieldStack& stack);

}  // namespace scalesplit
