#include "scalesplit/fields.hpp"

#include "scalesplit/error.hpp"
#include "scalesplit/kv.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace scalesplit {

CivilDate civil_from_day(Day day) {
    using namespace std::chrono;
    const year_month_day ymd{sys_days{days{day}}};
    return {int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day())};
}

Day day_from_civil(int y, unsigned m, unsigned d) {
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{m}, std::chrono::day{d}};
    if (!ymd.ok()) fail(ErrorKind::Usage, "invalid calendar date");
    return static_cast<Day>(sys_days{ymd}.time_since_epoch().count());
}

Day parse_date(const std::string& text) {
    const auto parts = split(text, '-');
    if (parts.size() != 3) fail(ErrorKind::Usage, "expected YYYY-MM-DD, got '" + text + "'");
    return day_from_civil(static_cast<int>(parse_int(parts[0], "year")),
                          static_cast<unsigned>(parse_int(parts[1], "month")),
                          static_cast<unsigned>(parse_int(parts[2], "day")));
}

std::string format_date(Day day) {
    const auto c = civil_from_day(day);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", c.year, c.month, c.day);
    return buf;
}

namespace {

double mean_abs_step(const std::vector<double>& coords) {
    double sum = 0.0;
    for (std::size_t i = 1; i < coords.size(); ++i) sum += std::abs(coords[i] - coords[i - 1]);
    return sum / static_cast<double>(coords.size() - 1);
}

void check_monotone(const std::vector<double>& coords, const char* name) {
    if (coords.size() < 2) fail(ErrorKind::Usage, std::string(name) + " needs at least 2 coordinates");
    const bool up = coords[1] > coords[0];
    for (std::size_t i = 1; i < coords.size(); ++i) {
        const double d = coords[i] - coords[i - 1];
        if (!(up ? d > 0 : d < 0) || !std::isfinite(coords[i]))
            fail(ErrorKind::Usage, std::string(name) + " coordinates must be strictly monotone");
    }
}

}  // namespace

GridSpec::GridSpec(std::vector<double> lat, std::vector<double> lon) : lat_(std::move(lat)), lon_(std::move(lon)) {
    check_monotone(lat_, "lat");
    check_monotone(lon_, "lon");
    dy_km_ = mean_abs_step(lat_) * kKmPerDegree;
    dx_km_ = mean_abs_step(lon_) * kKmPerDegree * std::cos(mean_lat() * std::numbers::pi / 180.0);
    if (!(dx_km_ > 0.0) || !(dy_km_ > 0.0)) fail(ErrorKind::Usage, "grid spacing must be positive");
}

GridSpec GridSpec::regular(double lat0, double lon0, double dlat, double dlon, std::size_t n_rows,
                           std::size_t n_cols) {
    std::vector<double> lat(n_rows), lon(n_cols);
    for (std::size_t i = 0; i < n_rows; ++i) lat[i] = lat0 + dlat * static_cast<double>(i);
    for (std::size_t j = 0; j < n_cols; ++j) lon[j] = lon0 + dlon * static_cast<double>(j);
    return GridSpec(std::move(lat), std::move(lon));
}

GridSpec GridSpec::uniform_km(std::size_t n_rows, std::size_t n_cols, double dx_km, double dy_km,
                              double center_lat, double center_lon) {
    const double dlat = dy_km / kKmPerDegree;
    const double dlon = dx_km / (kKmPerDegree * std::cos(center_lat * std::numbers::pi / 180.0));
    const double lat0 = center_lat - dlat * (static_cast<double>(n_rows) - 1.0) / 2.0;
    const double lon0 = center_lon - dlon * (static_cast<double>(n_cols) - 1.0) / 2.0;
    return regular(lat0, lon0, dlat, dlon, n_rows, n_cols);
}

double GridSpec::mean_lat() const {
    double s = 0.0;
    for (double v : lat_) s += v;
    return s / static_cast<double>(lat_.size());
}

double GridSpec::distance_km(std::size_t a, std::size_t b) const {
    const double cos_lat = std::cos(mean_lat() * std::numbers::pi / 180.0);
    const double dy = (lat_[a / n_cols()] - lat_[b / n_cols()]) * kKmPerDegree;
    const double dx = (lon_[a % n_cols()] - lon_[b % n_cols()]) * kKmPerDegree * cos_lat;
    return std::sqrt(dx * dx + dy * dy);
}

bool GridSpec::same_as(const GridSpec& other, double tol) const {
    if (lat_.size() != other.lat_.size() || lon_.size() != other.lon_.size()) return false;
    for (std::size_t i = 0; i < lat_.size(); ++i)
        if (std::abs(lat_[i] - other.lat_[i]) > tol) return false;
    for (std::size_t j = 0; j < lon_.size(); ++j)
        if (std::abs(lon_[j] - other.lon_[j]) > tol) return false;
    return true;
}

FieldStack::FieldStack(GridSpec grid, std::vector<std::string> variables, std::vector<Day> times)
    : grid_(std::move(grid)),
      variables_(std::move(variables)),
      units_(variables_.size(), "m s-1"),
      times_(std::move(times)),
      values_(times_.size() * variables_.size() * grid_.n_cells(), 0.0),
      mask_(grid_.n_cells(), 1) {}

std::size_t FieldStack::n_valid() const { return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), 1)); }

bool FieldStack::fully_valid() const { return n_valid() == n_cells(); }

void FieldStack::set_units(std::vector<std::string> units) {
    if (units.size() != variables_.size()) fail(ErrorKind::Usage, "units list must match variables");
    units_ = std::move(units);
}

void FieldStack::set_mask(std::vector<std::uint8_t> mask) {
    if (mask.size() != n_cells()) fail(ErrorKind::Usage, "mask size does not match grid");
    for (auto& m : mask) m = m ? 1 : 0;
    mask_ = std::move(mask);
    enforce_mask();
}

void FieldStack::enforce_mask() {
    const std::size_t cells = n_cells();
    for (std::size_t s = 0; s < n_times() * n_vars(); ++s)
        for (std::size_t c = 0; c < cells; ++c)
            if (!mask_[c]) values_[s * cells + c] = kMissing;
}

FieldStack FieldStack::select_times(const std::vector<std::size_t>& indices) const {
    std::vector<Day> times;
    times.reserve(indices.size());
    for (auto i : indices) times.push_back(times_.at(i));
    FieldStack out(grid_, variables_, std::move(times));
    out.units_ = units_;
    out.mask_ = mask_;
    const std::size_t frame = n_vars() * n_cells();
    for (std::size_t k = 0; k < indices.size(); ++k)
        std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(indices[k] * frame), frame,
                    out.values_.begin() + static_cast<std::ptrdiff_t>(k * frame));
    return out;
}

FieldStack FieldStack::select_variable(std::size_t v) const {
    FieldStack out(grid_, {variables_.at(v)}, times_);
    out.units_ = {units_[v]};
    out.mask_ = mask_;
    for (std::size_t t = 0; t < n_times(); ++t) {
        const auto src = slice(t, v);
        std::copy(src.begin(), src.end(), out.slice(t, 0).begin());
    }
    return out;
}

FieldStack FieldStack::zeros_like() const {
    FieldStack out(grid_, variables_, times_);
    out.units_ = units_;
    out.mask_ = mask_;
    out.enforce_mask();
    return out;
}

bool FieldStack::same_layout(const FieldStack& other) const {
    return n_times() == other.n_times() && n_vars() == other.n_vars() && grid_.same_as(other.grid_) &&
           mask_ == other.mask_;
}

void FieldStack::require_same_layout(const FieldStack& other, const std::string& what) const {
    if (n_vars() != other.n_vars() || n_times() != other.n_times())
        fail(ErrorKind::Extent, what + ": time/variable dimensions differ");
    if (!grid_.same_as(other.grid_)) fail(ErrorKind::Extent, what + ": grids differ");
    if (mask_ != other.mask_) fail(ErrorKind::Extent, what + ": masks differ");
}

FieldStack& FieldStack::operator+=(const FieldStack& other) {
    require_same_layout(other, "add");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

FieldStack& FieldStack::operator-=(const FieldStack& other) {
    require_same_layout(other, "subtract");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
}

FieldStack& FieldStack::operator*=(double s) {
    for (auto& v : values_) v *= s;
    return *this;
}

MomentMaps temporal_moments(const FieldStack& stack) {
    if (stack.n_times() < 2) fail(ErrorKind::Degenerate, "temporal moments need at least 2 time steps");
    const std::size_t cells = stack.n_cells();
    const double inv_t = 1.0 / static_cast<double>(stack.n_times());
    MomentMaps m;
    m.mean.assign(stack.n_vars(), std::vector<double>(cells, 0.0));
    m.std.assign(stack.n_vars(), std::vector<double>(cells, 0.0));
    for (std::size_t v = 0; v < stack.n_vars(); ++v) {
        auto& mean = m.mean[v];
        auto& sd = m.std[v];
        for (std::size_t t = 0; t < stack.n_times(); ++t) {
            const auto s = stack.slice(t, v);
            for (std::size_t c = 0; c < cells; ++c) mean[c] += s[c];
        }
        for (auto& x : mean) x *= inv_t;
        for (std::size_t t = 0; t < stack.n_times(); ++t) {
            const auto s = stack.slice(t, v);
            for (std::size_t c = 0; c < cells; ++c) sd[c] += (s[c] - mean[c]) * (s[c] - mean[c]);
        }
        for (std::size_t c = 0; c < cells; ++c) {
            if (!stack.valid(c)) {
                mean[c] = kMissing;
                sd[c] = kMissing;
            } else {
                sd[c] = std::sqrt(sd[c] * inv_t);
            }
        }
    }
    return m;
}

namespace {

struct Bracket {
    std::size_t lo;
    std::size_t hi;
    double w_hi;  // weight of coords[hi]
};

Bracket bracket(const std::vector<double>& coords, double x) {
    const double tol = 1e-9 * std::abs(coords.back() - coords.front());
    const bool up = coords.back() > coords.front();
    const double first = coords.front(), last = coords.back();
    const double lo_bound = up ? first : last, hi_bound = up ? last : first;
    if (x < lo_bound - tol || x > hi_bound + tol)
        fail(ErrorKind::Extent, "target coordinate " + format_double(x) + " outside source extent");
    std::size_t i = 0;
    const std::size_t n = coords.size();
    // first interval [i, i+1] containing x
    while (i + 2 < n && (up ? coords[i + 1] < x : coords[i + 1] > x)) ++i;
    double w = (x - coords[i]) / (coords[i + 1] - coords[i]);
    w = std::clamp(w, 0.0, 1.0);
    return {i, i + 1, w};
}

}  // namespace

FieldStack bilinear_regrid(const FieldStack& stack, const GridSpec& target) {
    const auto& src = stack.grid();
    std::vector<Bracket> rows, cols;
    for (double la : target.lat()) rows.push_back(bracket(src.lat(), la));
    for (double lo : target.lon()) cols.push_back(bracket(src.lon(), lo));

    FieldStack out(target, stack.variables(), stack.times());
    out.set_units(stack.units());
    const std::size_t nc_src = src.n_cols();
    std::vector<std::uint8_t> mask(target.n_cells(), 1);

    struct Tap {
        std::size_t cell;
        double w;
    };
    std::vector<std::array<Tap, 4>> taps(target.n_cells());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const auto& br = rows[r];
            const auto& bc = cols[c];
            auto& t = taps[r * cols.size() + c];
            t[0] = {br.lo * nc_src + bc.lo, (1 - br.w_hi) * (1 - bc.w_hi)};
            t[1] = {br.lo * nc_src + bc.hi, (1 - br.w_hi) * bc.w_hi};
            t[2] = {br.hi * nc_src + bc.lo, br.w_hi * (1 - bc.w_hi)};
            t[3] = {br.hi * nc_src + bc.hi, br.w_hi * bc.w_hi};
            for (const auto& tap : t)
                if (tap.w > 0.0 && !stack.valid(tap.cell)) mask[r * cols.size() + c] = 0;
        }
    }
    for (std::size_t t = 0; t < stack.n_times(); ++t) {
        for (std::size_t v = 0; v < stack.n_vars(); ++v) {
            const auto s = stack.slice(t, v);
            auto o = out.slice(t, v);
            for (std::size_t k = 0; k < taps.size(); ++k) {
                if (!mask[k]) continue;
                double acc = 0.0;
                for (const auto& tap : taps[k])
                    if (tap.w > 0.0) acc += tap.w * s[tap.cell];
                o[k] = acc;
            }
        }
    }
    out.set_mask(std::move(mask));
    return out;
}

double max_abs(const FieldStack& stack) {
    double m = 0.0;
    for (double v : stack.values())
        if (std::isfinite(v)) m = std::max(m, std::abs(v));
    return m;
}

double relative_max_error(const FieldStack& a, const FieldStack& b) {
    a.require_same_layout(b, "relative_max_error");
    double err = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i) {
        const double x = a.values()[i], y = b.values()[i];
        if (std::isnan(x) && std::isnan(y)) continue;
        err = std::max(err, std::abs(x - y));
    }
    const double scale = max_abs(b);
    return scale > 0.0 ? err / scale : err;
}

}  // namespace scalesplit
