#pragma once

// Small convolutional velocity model with hand-written backprop.

#include "scalesplit/kv.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace scalesplit {

/// Shape of one frame plus its validity mask (nullptr = all valid).
struct FrameGeometry {
    std::size_t n_vars = 1;
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    const std::vector<std::uint8_t>* mask = nullptr;

    std::size_t n_cells() const { return n_rows * n_cols; }
    bool valid(std::size_t cell) const { return mask == nullptr || (*mask)[cell] != 0; }
    bool fully_valid() const;
};

/// v(x, t, condition). Arrays are [var][row][col] for a single frame.
class VelocityField {
public:
    virtual ~VelocityField() = default;
    virtual void velocity(std::span<const double> x, std::span<const double> cond, double t,
                          const FrameGeometry& geom, std::span<double> out) const = 0;
};

enum class Activation { tanh, identity };

struct ConvArch {
    std::size_t n_vars = 1;
    std::vector<std::size_t> hidden{16, 16};  // empty: a single linear 3x3 layer
    Activation activation = Activation::tanh;

    std::size_t in_channels() const { return 2 * n_vars + 1; }
    KeyValues to_kv() const;
    static ConvArch from_kv(const KeyValues& kv);
};

/// 3x3 convolutions, input channels (x, condition, t). Periodic padding on
/// fully valid frames, zero padding (and zeroed masked cells) otherwise.
class ConvNet : public VelocityField {
public:
    explicit ConvNet(ConvArch arch = {});

    const ConvArch& arch() const { return arch_; }
    std::size_t n_params() const { return params_.size(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    /// Gaussian init scaled by 1/sqrt(fan_in); biases zero.
    void init(std::uint64_t seed, double gain = 1.0);

    void velocity(std::span<const double> x, std::span<const double> cond, double t, const FrameGeometry& geom,
                  std::span<double> out) const override;

    /// Mean squared error against `target` over valid cells and variables;
    /// the gradient is added into `grad` (size n_params()).
    double loss_and_grad(std::span<const double> x, std::span<const double> cond, double t,
                         const FrameGeometry& geom, std::span<const double> target, std::span<double> grad) const;

private:
    struct Layer {
        std::size_t in = 0, out = 0;
        std::size_t w_offset = 0, b_offset = 0;
    };
    struct Trace;

    void forward(std::span<const double> x, std::span<const double> cond, double t, const FrameGeometry& geom,
                 Trace& trace) const;

    ConvArch arch_;
    std::vector<Layer> layers_;
    std::vector<double> params_;
};

}  // namespace scalesplit
