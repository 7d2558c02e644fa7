#include "scalesplit/conv_model.hpp"

#include "scalesplit/error.hpp"
#include "scalesplit/fields.hpp"
#include "scalesplit/rng.hpp"

#include <algorithm>
#include <cmath>

namespace scalesplit {

bool FrameGeometry::fully_valid() const {
    return mask == nullptr || std::all_of(mask->begin(), mask->end(), [](std::uint8_t m) { return m != 0; });
}

KeyValues ConvArch::to_kv() const {
    KeyValues kv;
    kv.set("arch.n_vars", static_cast<std::int64_t>(n_vars));
    std::vector<std::string> widths;
    for (auto h : hidden) widths.push_back(std::to_string(h));
    kv.set("arch.hidden", join(widths, ','));
    kv.set("arch.activation", activation == Activation::tanh ? std::string("tanh") : std::string("identity"));
    kv.set("arch.kernel", std::int64_t{3});
    return kv;
}

ConvArch ConvArch::from_kv(const KeyValues& kv) {
    ConvArch a;
    const auto nv = kv.integer("arch.n_vars");
    if (nv < 1) fail(ErrorKind::Format, "arch.n_vars must be positive");
    a.n_vars = static_cast<std::size_t>(nv);
    a.hidden.clear();
    for (const auto& s : split(kv.get_or("arch.hidden", ""), ',')) {
        if (trim(s).empty()) continue;
        const auto h = parse_int(s, "arch.hidden");
        if (h < 1) fail(ErrorKind::Format, "hidden widths must be positive");
        a.hidden.push_back(static_cast<std::size_t>(h));
    }
    const auto act = kv.get_or("arch.activation", "tanh");
    if (act == "tanh")
        a.activation = Activation::tanh;
    else if (act == "identity")
        a.activation = Activation::identity;
    else
        fail(ErrorKind::Format, "unknown activation '" + act + "'");
    if (kv.integer_or("arch.kernel", 3) != 3) fail(ErrorKind::Format, "only 3x3 kernels are supported");
    return a;
}

ConvNet::ConvNet(ConvArch arch) : arch_(std::move(arch)) {
    if (arch_.n_vars == 0) fail(ErrorKind::Usage, "model needs at least one variable");
    std::vector<std::size_t> widths{arch_.in_channels()};
    widths.insert(widths.end(), arch_.hidden.begin(), arch_.hidden.end());
    widths.push_back(arch_.n_vars);
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        Layer layer{widths[l], widths[l + 1], offset, 0};
        offset += layer.in * layer.out * 9;
        layer.b_offset = offset;
        offset += layer.out;
        layers_.push_back(layer);
    }
    params_.assign(offset, 0.0);
}

void ConvNet::init(std::uint64_t seed, double gain) {
    CounterRng rng(seed);
    std::uint64_t k = 0;
    std::fill(params_.begin(), params_.end(), 0.0);
    for (const auto& layer : layers_) {
        const double scale = gain / std::sqrt(static_cast<double>(layer.in * 9));
        for (std::size_t i = 0; i < layer.in * layer.out * 9; ++i) params_[layer.w_offset + i] = scale * rng.normal(k++);
    }
}

namespace {

// Copy channels into a (rows+2) x (cols+2) padded buffer.
void pad_channels(const std::vector<double>& src, std::size_t channels, std::size_t rows, std::size_t cols,
                  bool periodic, std::vector<double>& dst) {
    const std::size_t pr = rows + 2, pc = cols + 2;
    dst.assign(channels * pr * pc, 0.0);
    for (std::size_t ch = 0; ch < channels; ++ch) {
        const double* s = src.data() + ch * rows * cols;
        double* d = dst.data() + ch * pr * pc;
        for (std::size_t r = 0; r < rows; ++r)
            std::copy(s + r * cols, s + (r + 1) * cols, d + (r + 1) * pc + 1);
        if (!periodic) continue;
        for (std::size_t r = 1; r <= rows; ++r) {
            d[r * pc] = d[r * pc + cols];
            d[r * pc + cols + 1] = d[r * pc + 1];
        }
        std::copy(d + rows * pc, d + (rows + 1) * pc, d);
        std::copy(d + pc, d + 2 * pc, d + (rows + 1) * pc);
    }
}

// Fold a padded gradient back onto the interior.
void unpad_grad(const std::vector<double>& gpad, std::size_t channels, std::size_t rows, std::size_t cols,
                bool periodic, std::vector<double>& g) {
    const std::size_t pr = rows + 2, pc = cols + 2;
    g.assign(channels * rows * cols, 0.0);
    for (std::size_t ch = 0; ch < channels; ++ch) {
        const double* s = gpad.data() + ch * pr * pc;
        double* d = g.data() + ch * rows * cols;
        for (std::size_t pr_i = 0; pr_i < pr; ++pr_i) {
            for (std::size_t pc_i = 0; pc_i < pc; ++pc_i) {
                const double v = s[pr_i * pc + pc_i];
                if (v == 0.0) continue;
                const bool border = pr_i == 0 || pr_i == rows + 1 || pc_i == 0 || pc_i == cols + 1;
                if (border && !periodic) continue;
                const std::size_t r = (pr_i + rows - 1) % rows;
                const std::size_t c = (pc_i + cols - 1) % cols;
                d[r * cols + c] += v;
            }
        }
    }
}

}  // namespace

struct ConvNet::Trace {
    bool periodic = true;
    std::vector<std::vector<double>> padded;  // padded input of each layer
    std::vector<std::vector<double>> pre;     // pre-activation of hidden layers
    std::vector<double> out;
};

void ConvNet::forward(std::span<const double> x, std::span<const double> cond, double t, const FrameGeometry& geom,
                      Trace& trace) const {
    const std::size_t V = arch_.n_vars, R = geom.n_rows, C = geom.n_cols, N = R * C;
    if (geom.n_vars != V) fail(ErrorKind::Extent, "model expects " + std::to_string(V) + " variables");
    if (x.size() != V * N || cond.size() != V * N) fail(ErrorKind::Extent, "input size does not match frame shape");
    if (R < 1 || C < 1) fail(ErrorKind::Extent, "empty frame");
    trace.periodic = geom.fully_valid();
    trace.padded.resize(layers_.size());
    trace.pre.resize(layers_.size());

    std::vector<double> act(arch_.in_channels() * N, 0.0);
    for (std::size_t v = 0; v < V; ++v)
        for (std::size_t c = 0; c < N; ++c) {
            if (!geom.valid(c)) continue;
            act[v * N + c] = x[v * N + c];
            act[(V + v) * N + c] = cond[v * N + c];
            act[2 * V * N + c] = t;
        }

    const std::size_t pc = C + 2;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& L = layers_[l];
        pad_channels(act, L.in, R, C, trace.periodic, trace.padded[l]);
        const auto& P = trace.padded[l];
        std::vector<double> z(L.out * N);
        for (std::size_t o = 0; o < L.out; ++o) {
            double* zo = z.data() + o * N;
            std::fill(zo, zo + N, params_[L.b_offset + o]);
            for (std::size_t i = 0; i < L.in; ++i) {
                const double* pi = P.data() + i * (R + 2) * pc;
                const double* w = params_.data() + L.w_offset + (o * L.in + i) * 9;
                for (std::size_t ky = 0; ky < 3; ++ky)
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const double wk = w[ky * 3 + kx];
                        for (std::size_t r = 0; r < R; ++r) {
                            const double* src = pi + (r + ky) * pc + kx;
                            double* dst = zo + r * C;
                            for (std::size_t c = 0; c < C; ++c) dst[c] += wk * src[c];
                        }
                    }
            }
        }
        const bool last = l + 1 == layers_.size();
        if (last) {
            trace.out = std::move(z);
            break;
        }
        act = z;
        if (arch_.activation == Activation::tanh)
            for (auto& a : act) a = std::tanh(a);
        if (!trace.periodic)
            for (std::size_t o = 0; o < L.out; ++o)
                for (std::size_t c = 0; c < N; ++c)
                    if (!geom.valid(c)) act[o * N + c] = 0.0;
        trace.pre[l] = std::move(z);
    }
}

void ConvNet::velocity(std::span<const double> x, std::span<const double> cond, double t, const FrameGeometry& geom,
                       std::span<double> out) const {
    Trace trace;
    forward(x, cond, t, geom, trace);
    const std::size_t N = geom.n_cells();
    for (std::size_t v = 0; v < arch_.n_vars; ++v)
        for (std::size_t c = 0; c < N; ++c) out[v * N + c] = geom.valid(c) ? trace.out[v * N + c] : kMissing;
}

double ConvNet::loss_and_grad(std::span<const double> x, std::span<const double> cond, double t,
                              const FrameGeometry& geom, std::span<const double> target,
                              std::span<double> grad) const {
    if (grad.size() != params_.size()) fail(ErrorKind::Internal, "gradient buffer has the wrong size");
    Trace trace;
    forward(x, cond, t, geom, trace);
    const std::size_t V = arch_.n_vars, R = geom.n_rows, C = geom.n_cols, N = R * C;
    if (target.size() != V * N) fail(ErrorKind::Extent, "target size does not match frame shape");

    std::size_t n_valid = 0;
    for (std::size_t c = 0; c < N; ++c) n_valid += geom.valid(c) ? 1 : 0;
    if (n_valid == 0) fail(ErrorKind::Degenerate, "frame has no valid cells");
    const double norm = 1.0 / static_cast<double>(V * n_valid);

    double loss = 0.0;
    std::vector<double> delta(V * N, 0.0);
    for (std::size_t v = 0; v < V; ++v)
        for (std::size_t c = 0; c < N; ++c) {
            if (!geom.valid(c)) continue;
            const double e = trace.out[v * N + c] - target[v * N + c];
            loss += e * e;
            delta[v * N + c] = 2.0 * e * norm;
        }
    loss *= norm;

    const std::size_t pc = C + 2, pn = (R + 2) * pc;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const Layer& L = layers_[l];
        const auto& P = trace.padded[l];
        std::vector<double> gpad(L.in * pn, 0.0);
        for (std::size_t o = 0; o < L.out; ++o) {
            const double* d = delta.data() + o * N;
            double gb = 0.0;
            for (std::size_t c = 0; c < N; ++c) gb += d[c];
            grad[L.b_offset + o] += gb;
            for (std::size_t i = 0; i < L.in; ++i) {
                const double* pi = P.data() + i * pn;
                double* gi = gpad.data() + i * pn;
                const std::size_t widx = L.w_offset + (o * L.in + i) * 9;
                for (std::size_t ky = 0; ky < 3; ++ky)
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const double wk = params_[widx + ky * 3 + kx];
                        double gw = 0.0;
                        for (std::size_t r = 0; r < R; ++r) {
                            const double* src = pi + (r + ky) * pc + kx;
                            double* gsrc = gi + (r + ky) * pc + kx;
                            const double* dr = d + r * C;
                            for (std::size_t c = 0; c < C; ++c) {
                                gw += dr[c] * src[c];
                                gsrc[c] += wk * dr[c];
                            }
                        }
                        grad[widx + ky * 3 + kx] += gw;
                    }
            }
        }
        if (l == 0) break;
        std::vector<double> gin;
        unpad_grad(gpad, L.in, R, C, trace.periodic, gin);
        const auto& z = trace.pre[l - 1];
        for (std::size_t k = 0; k < gin.size(); ++k) {
            const std::size_t c = k % N;
            if (!trace.periodic && !geom.valid(c)) {
                gin[k] = 0.0;
                continue;
            }
            if (arch_.activation == Activation::tanh) {
                const double th = std::tanh(z[k]);
                gin[k] *= 1.0 - th * th;
            }
        }
        delta = std::move(gin);
    }
    return loss;
}

}  // namespace scalesplit
