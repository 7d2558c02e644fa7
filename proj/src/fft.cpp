#include "fft.hpp"

#include <cstring>
#include <mutex>

namespace scalesplit::detail {

namespace {
// FFTW planner calls are not thread-safe; execution is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace

Fft2d::Fft2d(std::size_t n_rows, std::size_t n_cols) : n_rows_(n_rows), n_cols_(n_cols) {
    std::lock_guard lock(planner_mutex());
    buffer_ = fftw_alloc_complex(n_rows * n_cols);
    forward_ = fftw_plan_dft_2d(static_cast<int>(n_rows), static_cast<int>(n_cols), buffer_, buffer_, FFTW_FORWARD,
                                FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_2d(static_cast<int>(n_rows), static_cast<int>(n_cols), buffer_, buffer_,
                                 FFTW_BACKWARD, FFTW_ESTIMATE);
}

Fft2d::~Fft2d() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
    fftw_free(buffer_);
}

std::vector<Complex> Fft2d::forward(std::span<const double> frame) {
    const std::size_t n = n_rows_ * n_cols_;
    for (std::size_t i = 0; i < n; ++i) {
        buffer_[i][0] = frame[i];
        buffer_[i][1] = 0.0;
    }
    fftw_execute(forward_);
    std::vector<Complex> out(n);
    std::memcpy(static_cast<void*>(out.data()), buffer_, n * sizeof(fftw_complex));
    return out;
}

std::vector<double> Fft2d::inverse_real(std::span<const Complex> spectrum) {
    const std::size_t n = n_rows_ * n_cols_;
    std::memcpy(buffer_, static_cast<const void*>(spectrum.data()), n * sizeof(fftw_complex));
    fftw_execute(backward_);
    std::vector<double> out(n);
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = buffer_[i][0] * scale;
    return out;
}

}  // namespace scalesplit::detail
