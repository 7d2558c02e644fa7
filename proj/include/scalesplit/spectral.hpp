#pragma once

// Fourier-domain scale separation, spectral regridding and isotropic power
// spectra. Fields are treated as periodic; no window is applied.

#include "scalesplit/decomposition.hpp"
#include "scalesplit/fields.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace scalesplit {

struct PowerSpectrum {
    std::vector<double> k_bins;   // bin centres, cycles per km, ascending
    std::vector<double> k_lo;     // lower bin edge
    std::vector<double> k_hi;     // upper bin edge
    std::vector<double> power;    // mean |F|^2 / N per mode, time-averaged
    std::vector<std::size_t> n_modes;

    std::size_t size() const { return k_bins.size(); }
    double total() const;  // sum of power * n_modes
};

/// Isotropic wavenumber magnitude (cycles per km) of every FFT bin, row-major.
std::vector<double> wavenumber_magnitudes(const GridSpec& grid);

/// Multiply the spectrum of one real frame by a radial gain g(|k|).
std::vector<double> filter_frame(std::span<const double> frame, const GridSpec& grid,
                                 const std::function<double(double)>& gain);

/// Sharp isotropic low-pass split. Requires a fully valid mask.
Decomposition lowpass(const FieldStack& stack, const SpectralCutoff& cut);

/// len(cuts)+1 bands; cuts strictly descending in wavelength. Band 0 is the
/// low band at cuts[0], the last band is the residual above cuts.back().
std::vector<FieldStack> band_decompose(const FieldStack& stack, const std::vector<SpectralCutoff>& cuts);

/// Zero-padding interpolation onto a finer grid with the same periodic extent
/// and origin.
FieldStack spectral_regrid(const FieldStack& stack, const GridSpec& target);

inline constexpr std::size_t kDefaultSpectrumBins = 32;

/// Linear |k| bins from 0 to the corner wavenumber; the zero mode is excluded
/// and empty bins are dropped.
PowerSpectrum isotropic_spectrum(const FieldStack& stack, std::size_t var, std::size_t n_bins = kDefaultSpectrumBins);
std::vector<PowerSpectrum> isotropic_spectra(const FieldStack& stack, std::size_t n_bins = kDefaultSpectrumBins);

/// CSV with header k_per_km,wavelength_km,power,n_modes.
std::string spectrum_csv(const PowerSpectrum& spectrum);

/// Throws ErrorKind::MaskUnsupported when any cell is masked.
void require_unmasked(const FieldStack& stack, const std::string& what);

}  // namespace scalesplit
