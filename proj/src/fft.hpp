#pragma once

// Thin RAII wrapper over FFTW for unnormalized 2-D complex transforms.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace scalesplit::detail {

using Complex = std::complex<double>;

class Fft2d {
public:
    Fft2d(std::size_t n_rows, std::size_t n_cols);
    ~Fft2d();
    Fft2d(const Fft2d&) = delete;
    Fft2d& operator=(const Fft2d&) = delete;

    std::size_t n_rows() const { return n_rows_; }
    std::size_t n_cols() const { return n_cols_; }

    /// Forward transform of a real frame (row-major).
    std::vector<Complex> forward(std::span<const double> frame);
    /// Inverse transform divided by n_rows*n_cols; returns the real part.
    std::vector<double> inverse_real(std::span<const Complex> spectrum);

private:
    std::size_t n_rows_;
    std::size_t n_cols_;
    fftw_complex* buffer_;
    fftw_plan forward_;
    fftw_plan backward_;
};

/// Signed frequency index of FFT bin m for length n.
inline long signed_index(std::size_t m, std::size_t n) {
    return m <= n / 2 ? static_cast<long>(m) : static_cast<long>(m) - static_cast<long>(n);
}

}  // namespace scalesplit::detail
