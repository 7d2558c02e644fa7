#pragma once

#include "scalesplit/fields.hpp"

#include <string>
#include <variant>

namespace scalesplit {

/// Isotropic Fourier cutoff. Modes with wavelength >= wavelength_km (that is
/// |k| <= 1 / wavelength_km, in cycles per km) belong to the low band.
struct SpectralCutoff {
    double wavelength_km = 1200.0;

    double wavenumber() const { return 1.0 / wavelength_km; }
    /// Throws unless the wavelength is longer than twice the coarsest spacing.
    void validate(const GridSpec& grid) const;
};

/// Gaussian blur width for the mask-tolerant separator.
struct BlurSpec {
    double sigma_km = 50.0;
    double truncate = 4.0;  // kernel half-width in sigmas

    double sigma_cells_x(const GridSpec& g) const { return sigma_km / g.dx_km(); }
    double sigma_cells_y(const GridSpec& g) const { return sigma_km / g.dy_km(); }
    /// Throws unless sigma spans at least half a cell on both axes.
    void validate(const GridSpec& grid) const;
};

using Separator = std::variant<SpectralCutoff, BlurSpec>;

std::string describe(const Separator& sep);

/// Shared large-scale part plus the residual; low + high reproduces the input.
struct Decomposition {
    FieldStack low;
    FieldStack high;
    Separator separator;
};

}  // namespace scalesplit
