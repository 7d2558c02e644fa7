#include "scalesplit/spectral.hpp"

#include "fft.hpp"
#include "scalesplit/error.hpp"
#include "scalesplit/kv.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace scalesplit {

using detail::Complex;
using detail::Fft2d;
using detail::signed_index;

namespace {

// Relative slack when comparing |k| against a cutoff, so a mode sitting
// exactly on the cutoff is kept despite rounding in the grid spacing.
constexpr double kCutoffSlack = 1e-9;

class RadialFilter {
public:
    explicit RadialFilter(const GridSpec& grid) : fft_(grid.n_rows(), grid.n_cols()), k_(wavenumber_magnitudes(grid)) {}

    std::vector<double> apply(std::span<const double> frame, const std::function<double(double)>& gain) {
        auto spec = fft_.forward(frame);
        for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= gain(k_[i]);
        return fft_.inverse_real(spec);
    }

    std::vector<double> keep_below(std::span<const double> frame, double k_cut) {
        auto spec = fft_.forward(frame);
        const double limit = k_cut * (1.0 + kCutoffSlack);
        for (std::size_t i = 0; i < spec.size(); ++i)
            if (k_[i] > limit) spec[i] = 0.0;
        return fft_.inverse_real(spec);
    }

private:
    Fft2d fft_;
    std::vector<double> k_;
};

FieldStack lowpass_only(const FieldStack& stack, const SpectralCutoff& cut) {
    RadialFilter filter(stack.grid());
    FieldStack low = stack.zeros_like();
    for (std::size_t t = 0; t < stack.n_times(); ++t)
        for (std::size_t v = 0; v < stack.n_vars(); ++v) {
            const auto out = filter.keep_below(stack.slice(t, v), cut.wavenumber());
            std::copy(out.begin(), out.end(), low.slice(t, v).begin());
        }
    return low;
}

}  // namespace

void require_unmasked(const FieldStack& stack, const std::string& what) {
    if (!stack.fully_valid())
        fail(ErrorKind::MaskUnsupported,
             what + " needs a fully valid grid; use the Gaussian blur separator (blur_sigma_km) for masked domains");
}

void SpectralCutoff::validate(const GridSpec& grid) const {
    const double min_len = 2.0 * std::max(grid.dx_km(), grid.dy_km());
    if (!(wavelength_km > min_len))
        fail(ErrorKind::Usage, "cutoff wavelength " + format_double(wavelength_km) +
                                   " km is not resolvable; must exceed " + format_double(min_len) + " km");
}

void BlurSpec::validate(const GridSpec& grid) const {
    if (!(sigma_km > 0.0) || !(truncate > 0.0)) fail(ErrorKind::Usage, "blur sigma and truncate must be positive");
    if (sigma_cells_x(grid) < 0.5 || sigma_cells_y(grid) < 0.5)
        fail(ErrorKind::Usage, "blur sigma " + format_double(sigma_km) + " km is below half a grid cell");
}

std::string describe(const Separator& sep) {
    if (const auto* c = std::get_if<SpectralCutoff>(&sep)) return "fourier:" + format_double(c->wavelength_km);
    const auto& b = std::get<BlurSpec>(sep);
    return "blur:" + format_double(b.sigma_km);
}

double PowerSpectrum::total() const {
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) s += power[i] * static_cast<double>(n_modes[i]);
    return s;
}

std::vector<double> wavenumber_magnitudes(const GridSpec& grid) {
    const std::size_t nr = grid.n_rows(), nc = grid.n_cols();
    const double len_y = static_cast<double>(nr) * grid.dy_km();
    const double len_x = static_cast<double>(nc) * grid.dx_km();
    std::vector<double> k(nr * nc);
    for (std::size_t r = 0; r < nr; ++r) {
        const double ky = static_cast<double>(signed_index(r, nr)) / len_y;
        for (std::size_t c = 0; c < nc; ++c) {
            const double kx = static_cast<double>(signed_index(c, nc)) / len_x;
            k[r * nc + c] = std::sqrt(kx * kx + ky * ky);
        }
    }
    return k;
}

std::vector<double> filter_frame(std::span<const double> frame, const GridSpec& grid,
                                 const std::function<double(double)>& gain) {
    RadialFilter filter(grid);
    return filter.apply(frame, gain);
}

Decomposition lowpass(const FieldStack& stack, const SpectralCutoff& cut) {
    require_unmasked(stack, "lowpass");
    cut.validate(stack.grid());
    FieldStack low = lowpass_only(stack, cut);
    FieldStack high = stack - low;
    return {std::move(low), std::move(high), cut};
}

std::vector<FieldStack> band_decompose(const FieldStack& stack, const std::vector<SpectralCutoff>& cuts) {
    require_unmasked(stack, "band_decompose");
    if (cuts.empty()) fail(ErrorKind::Usage, "band_decompose needs at least one cutoff");
    for (std::size_t i = 1; i < cuts.size(); ++i)
        if (!(cuts[i].wavelength_km < cuts[i - 1].wavelength_km))
            fail(ErrorKind::Usage, "band cutoffs must be strictly descending in wavelength");
    for (const auto& c : cuts) c.validate(stack.grid());

    std::vector<FieldStack> bands;
    FieldStack previous;
    for (std::size_t i = 0; i < cuts.size(); ++i) {
        FieldStack low = lowpass_only(stack, cuts[i]);
        if (i == 0)
            bands.push_back(low);
        else
            bands.push_back(low - previous);
        previous = std::move(low);
    }
    bands.push_back(stack - previous);
    return bands;
}

FieldStack spectral_regrid(const FieldStack& stack, const GridSpec& target) {
    require_unmasked(stack, "spectral_regrid");
    const auto& src = stack.grid();
    const std::size_t nr = src.n_rows(), nc = src.n_cols();
    const std::size_t mr = target.n_rows(), mc = target.n_cols();
    if (mr < nr || mc < nc)
        fail(ErrorKind::Usage, "spectral_regrid only refines; the target is coarser than the source, use bilinear_regrid");

    auto period = [](const std::vector<double>& x) {
        return (x.back() - x.front()) / static_cast<double>(x.size() - 1) * static_cast<double>(x.size());
    };
    auto close = [](double a, double b, double scale) { return std::abs(a - b) <= 1e-6 * std::max(1.0, scale); };
    const double py = period(src.lat()), px = period(src.lon());
    if (!close(py, period(target.lat()), std::abs(py)) || !close(px, period(target.lon()), std::abs(px)) ||
        !close(src.lat().front(), target.lat().front(), std::abs(py)) ||
        !close(src.lon().front(), target.lon().front(), std::abs(px)))
        fail(ErrorKind::Extent, "spectral_regrid target must share the source origin and periodic extent");

    Fft2d fwd(nr, nc), inv(mr, mc);
    FieldStack out(target, stack.variables(), stack.times());
    out.set_units(stack.units());
    const double scale = static_cast<double>(mr * mc) / static_cast<double>(nr * nc);

    // Each source bin maps to one or two target bins per axis; a Nyquist bin of
    // an even-length source is split evenly between +n/2 and -n/2.
    auto targets = [](std::size_t m, std::size_t n, std::size_t big) {
        std::vector<std::pair<std::size_t, double>> out;
        const long s = signed_index(m, n);
        auto wrap = [big](long f) { return static_cast<std::size_t>((f % long(big) + long(big)) % long(big)); };
        if (n % 2 == 0 && static_cast<std::size_t>(std::abs(s)) == n / 2) {
            out.emplace_back(wrap(s), 0.5);
            out.emplace_back(wrap(-s), 0.5);
        } else {
            out.emplace_back(wrap(s), 1.0);
        }
        return out;
    };
    std::vector<std::vector<std::pair<std::size_t, double>>> row_map(nr), col_map(nc);
    for (std::size_t r = 0; r < nr; ++r) row_map[r] = targets(r, nr, mr);
    for (std::size_t c = 0; c < nc; ++c) col_map[c] = targets(c, nc, mc);

    for (std::size_t t = 0; t < stack.n_times(); ++t)
        for (std::size_t v = 0; v < stack.n_vars(); ++v) {
            const auto spec = fwd.forward(stack.slice(t, v));
            std::vector<Complex> padded(mr * mc, Complex(0.0, 0.0));
            for (std::size_t r = 0; r < nr; ++r)
                for (std::size_t c = 0; c < nc; ++c)
                    for (const auto& [tr, wr] : row_map[r])
                        for (const auto& [tc, wc] : col_map[c]) padded[tr * mc + tc] += spec[r * nc + c] * (wr * wc);
            for (auto& z : padded) z *= scale;
            const auto frame = inv.inverse_real(padded);
            std::copy(frame.begin(), frame.end(), out.slice(t, v).begin());
        }
    return out;
}

PowerSpectrum isotropic_spectrum(const FieldStack& stack, std::size_t var, std::size_t n_bins) {
    require_unmasked(stack, "isotropic_spectrum");
    if (n_bins < 4) fail(ErrorKind::Usage, "isotropic_spectrum needs at least 4 bins");
    if (stack.n_times() == 0) fail(ErrorKind::Degenerate, "isotropic_spectrum needs at least one time step");
    const auto& grid = stack.grid();
    const auto k = wavenumber_magnitudes(grid);
    const double k_top = *std::max_element(k.begin(), k.end());
    const double width = k_top / static_cast<double>(n_bins);
    const double n_cells = static_cast<double>(grid.n_cells());

    std::vector<std::size_t> bin_of(k.size(), n_bins);  // n_bins marks the zero mode
    std::vector<std::size_t> modes(n_bins, 0);
    for (std::size_t i = 0; i < k.size(); ++i) {
        if (k[i] == 0.0) continue;
        const auto b = std::min(n_bins - 1, static_cast<std::size_t>(std::ceil(k[i] / width)) - 1);
        bin_of[i] = b;
        ++modes[b];
    }

    std::vector<double> acc(n_bins, 0.0);
    Fft2d fft(grid.n_rows(), grid.n_cols());
    for (std::size_t t = 0; t < stack.n_times(); ++t) {
        const auto spec = fft.forward(stack.slice(t, var));
        for (std::size_t i = 0; i < spec.size(); ++i)
            if (bin_of[i] < n_bins) acc[bin_of[i]] += std::norm(spec[i]) / n_cells;
    }

    PowerSpectrum ps;
    const double inv_t = 1.0 / static_cast<double>(stack.n_times());
    for (std::size_t b = 0; b < n_bins; ++b) {
        if (modes[b] == 0) continue;
        ps.k_lo.push_back(width * static_cast<double>(b));
        ps.k_hi.push_back(width * static_cast<double>(b + 1));
        ps.k_bins.push_back(width * (static_cast<double>(b) + 0.5));
        ps.power.push_back(acc[b] / static_cast<double>(modes[b]) * inv_t);
        ps.n_modes.push_back(modes[b]);
    }
    return ps;
}

std::vector<PowerSpectrum> isotropic_spectra(const FieldStack& stack, std::size_t n_bins) {
    std::vector<PowerSpectrum> out;
    for (std::size_t v = 0; v < stack.n_vars(); ++v) out.push_back(isotropic_spectrum(stack, v, n_bins));
    return out;
}

std::string spectrum_csv(const PowerSpectrum& ps) {
    std::ostringstream os;
    os << "k_per_km,wavelength_km,power,n_modes\n";
    for (std::size_t i = 0; i < ps.size(); ++i)
        os << format_double(ps.k_bins[i]) << ',' << format_double(1.0 / ps.k_bins[i]) << ','
           << format_double(ps.power[i]) << ',' << ps.n_modes[i] << '\n';
    return os.str();
}

}  // namespace scalesplit
