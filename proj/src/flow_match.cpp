#include "scalesplit/flow_match.hpp"

#include "scalesplit/error.hpp"
#include "scalesplit/rng.hpp"
#include "scalesplit/separator.hpp"
#include "scalesplit/wfld.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

namespace scalesplit {

FrameGeometry frame_geometry(const FieldStack& stack) {
    return {stack.n_vars(), stack.n_rows(), stack.n_cols(), &stack.mask()};
}

namespace {

// Variables of time t, concatenated, NaN replaced by 0.
std::vector<double> frame(const FieldStack& s, std::size_t t) {
    std::vector<double> out(s.n_vars() * s.n_cells(), 0.0);
    for (std::size_t v = 0; v < s.n_vars(); ++v) {
        const auto sl = s.slice(t, v);
        for (std::size_t c = 0; c < sl.size(); ++c)
            if (s.valid(c)) out[v * s.n_cells() + c] = sl[c];
    }
    return out;
}

void check_pair(const PseudoPair& pair) {
    if (pair.conditioning.n_times() != 1) fail(ErrorKind::Extent, "pseudo-pairs must hold a single frame");
    pair.conditioning.require_same_layout(pair.target, "pair target");
    pair.conditioning.require_same_layout(pair.shared, "pair condition");
}

struct PairInputs {
    std::vector<double> xt, cond, vstar;
};

PairInputs interpolate(const PseudoPair& pair, double t) {
    const auto x0 = frame(pair.conditioning, 0);
    const auto x1 = frame(pair.target, 0);
    PairInputs in{std::vector<double>(x0.size()), frame(pair.shared, 0), std::vector<double>(x0.size())};
    for (std::size_t i = 0; i < x0.size(); ++i) {
        in.xt[i] = (1.0 - t) * x0[i] + t * x1[i];
        in.vstar[i] = x1[i] - x0[i];
    }
    return in;
}

double loss_only(const ConvNet& model, const PairInputs& in, double t, const FrameGeometry& geom) {
    std::vector<double> out(in.xt.size());
    model.velocity(in.xt, in.cond, t, geom, out);
    std::size_t n = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!geom.valid(i % geom.n_cells())) continue;
        const double e = out[i] - in.vstar[i];
        sum += e * e;
        ++n;
    }
    return sum / static_cast<double>(n);
}

}  // namespace

LossGrad fm_loss(const ConvNet& model, const PseudoPair& pair, double t) {
    check_pair(pair);
    const auto geom = frame_geometry(pair.conditioning);
    const auto in = interpolate(pair, t);
    LossGrad lg;
    lg.grad.assign(model.n_params(), 0.0);
    lg.loss = model.loss_and_grad(in.xt, in.cond, t, geom, in.vstar, lg.grad);
    return lg;
}

double gradient_check(const ConvNet& model, const PseudoPair& pair, double t, double step, std::size_t n_check,
                      std::uint64_t seed) {
    const auto analytic = fm_loss(model, pair, t).grad;
    const auto geom = frame_geometry(pair.conditioning);
    const auto in = interpolate(pair, t);
    std::vector<std::size_t> idx(model.n_params());
    std::iota(idx.begin(), idx.end(), 0);
    if (n_check > 0 && n_check < idx.size()) {
        RngStream rng(seed);
        for (std::size_t i = 0; i < n_check; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
        idx.resize(n_check);
    }
    ConvNet probe = model;
    double worst = 0.0;
    for (auto i : idx) {
        const double keep = probe.params()[i];
        probe.params()[i] = keep + step;
        const double up = loss_only(probe, in, t, geom);
        probe.params()[i] = keep - step;
        const double down = loss_only(probe, in, t, geom);
        probe.params()[i] = keep;
        const double numeric = (up - down) / (2.0 * step);
        const double a = analytic[i];
        worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8}));
    }
    return worst;
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        fail(ErrorKind::Usage, "learning rate must be finite and non-negative");
    if (batch_size < 1) fail(ErrorKind::Usage, "batch size must be at least 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail(ErrorKind::Usage, "momentum must be in [0, 1)");
    if (grad_clip < 0.0) fail(ErrorKind::Usage, "grad_clip must be non-negative");
}

TrainResult train(ConvNet& model, const PairSource& source, const TrainConfig& cfg) {
    cfg.validate();
    TrainResult result;
    std::vector<double> velocity(model.n_params(), 0.0);
    std::vector<double> grad(model.n_params());
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const auto pairs = source.epoch(e);
        if (pairs.empty()) fail(ErrorKind::Degenerate, "no training pairs");
        std::vector<std::size_t> order(pairs.size());
        std::iota(order.begin(), order.end(), 0);
        RngStream shuffle(derive_seed(cfg.seed, 1, e));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
        const CounterRng t_rng(derive_seed(cfg.seed, 2, cfg.resample_t ? e : 0));

        if (cfg.gradient_check && e == 0) {
            result.gradient_error = gradient_check(model, pairs[order[0]], t_rng.uniform(order[0]), 1e-4, 64, cfg.seed);
            if (result.gradient_error > 1e-3)
                fail(ErrorKind::Internal, "gradient check failed: relative error " + format_double(result.gradient_error));
        }

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t b = start; b < stop; ++b) {
                const auto& pair = pairs[order[b]];
                check_pair(pair);
                const double t = t_rng.uniform(order[b]);
                const auto geom = frame_geometry(pair.conditioning);
                const auto in = interpolate(pair, t);
                const double loss = model.loss_and_grad(in.xt, in.cond, t, geom, in.vstar, grad);
                if (!std::isfinite(loss))
                    fail(ErrorKind::Divergence, "non-finite loss at epoch " + std::to_string(e) +
                                                    " (learning rate " + format_double(cfg.learning_rate) + ")");
                epoch_loss += loss;
            }
            const double inv = 1.0 / static_cast<double>(stop - start);
            double norm2 = 0.0;
            for (auto& g : grad) {
                g *= inv;
                norm2 += g * g;
            }
            if (!std::isfinite(norm2))
                fail(ErrorKind::Divergence, "non-finite gradient at epoch " + std::to_string(e) +
                                                " (learning rate " + format_double(cfg.learning_rate) + ")");
            const double clip =
                cfg.grad_clip > 0.0 && std::sqrt(norm2) > cfg.grad_clip ? cfg.grad_clip / std::sqrt(norm2) : 1.0;
            auto& theta = model.params();
            for (std::size_t i = 0; i < theta.size(); ++i) {
                velocity[i] = cfg.momentum * velocity[i] - cfg.learning_rate * clip * grad[i];
                theta[i] += velocity[i];
            }
        }
        epoch_loss /= static_cast<double>(pairs.size());
        if (!std::isfinite(epoch_loss) ||
            !std::all_of(model.params().begin(), model.params().end(), [](double p) { return std::isfinite(p); }))
            fail(ErrorKind::Divergence, "training diverged at epoch " + std::to_string(e) + " (learning rate " +
                                            format_double(cfg.learning_rate) + ")");
        result.loss_curve.push_back(epoch_loss);
    }
    return result;
}

std::string loss_csv(const std::vector<double>& curve) {
    std::string out = "epoch,loss\n";
    for (std::size_t e = 0; e < curve.size(); ++e) out += std::to_string(e) + "," + format_double(curve[e]) + "\n";
    return out;
}

void EnsembleSpec::validate() const {
    if (n_members < 1) fail(ErrorKind::Usage, "n_members must be at least 1");
    if (ode_steps < 1) fail(ErrorKind::Usage, "ode_steps must be at least 1");
    if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) fail(ErrorKind::Usage, "noise_scale must be >= 0");
}

namespace {

FieldStack sample_member(const VelocityField& model, const FieldStack& condition, const Separator& separator,
                         const EnsembleSpec& spec, std::size_t m) {
    const auto geom = frame_geometry(condition);
    const std::size_t N = condition.n_cells(), V = condition.n_vars();
    const double dt = 1.0 / static_cast<double>(spec.ode_steps);
    FieldStack member = condition;
    if (spec.noise_scale != 0.0)
        member += filtered_noise(condition, separator, derive_seed(spec.seed, m)) * spec.noise_scale;
    std::vector<double> v(V * N);
    for (std::size_t t = 0; t < condition.n_times(); ++t) {
        const auto cond = frame(condition, t);
        auto x = frame(member, t);
        for (std::size_t k = 0; k < spec.ode_steps; ++k) {
            model.velocity(x, cond, static_cast<double>(k) * dt, geom, v);
            bool finite = true;
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (!geom.valid(i % N)) continue;
                x[i] += dt * v[i];
                finite = finite && std::isfinite(x[i]);
            }
            if (!finite)
                fail(ErrorKind::Divergence, "non-finite state at ODE step " + std::to_string(k) + " (member " +
                                                std::to_string(m) + ", frame " + std::to_string(t) + ")");
        }
        for (std::size_t vv = 0; vv < V; ++vv) {
            auto out = member.slice(t, vv);
            for (std::size_t c = 0; c < N; ++c)
                if (condition.valid(c)) out[c] = x[vv * N + c];
        }
    }
    return member;
}

}  // namespace

Ensemble sample(const VelocityField& model, const FieldStack& condition, const Separator& separator,
                const EnsembleSpec& spec, const NormalizationParams* norm) {
    spec.validate();
    if (condition.n_times() == 0) fail(ErrorKind::Degenerate, "empty condition stack");
    Ensemble members(spec.n_members);
    std::vector<std::exception_ptr> errors(spec.n_members);
    auto work = [&](std::size_t m) {
        try {
            FieldStack member = sample_member(model, condition, separator, spec, m);
            members[m] = norm ? denormalize_target(member, *norm) : std::move(member);
        } catch (...) {
            errors[m] = std::current_exception();
        }
    };
    const std::size_t n_threads = std::min(std::max<std::size_t>(1, spec.threads), spec.n_members);
    if (n_threads == 1) {
        for (std::size_t m = 0; m < spec.n_members; ++m) work(m);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < n_threads; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t m = w; m < spec.n_members; m += n_threads) work(m);
            });
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return members;
}

EnsembleStats ensemble_stats(const Ensemble& ens) {
    if (ens.size() < 2) fail(ErrorKind::SpreadUndefined, "ensemble spread needs at least two members");
    for (const auto& m : ens) ens.front().require_same_layout(m, "ensemble member");
    EnsembleStats s{ens.front().zeros_like(), ens.front().zeros_like()};
    const double n = static_cast<double>(ens.size());
    auto& mean = s.mean.values();
    auto& spread = s.spread.values();
    const std::size_t cells = ens.front().n_cells();
    for (std::size_t i = 0; i < mean.size(); ++i) {
        if (!ens.front().valid(i % cells)) continue;
        double sum = 0.0;
        for (const auto& m : ens) sum += m.values()[i];
        const double mu = sum / n;
        double ss = 0.0;
        for (const auto& m : ens) ss += (m.values()[i] - mu) * (m.values()[i] - mu);
        mean[i] = mu;
        spread[i] = std::sqrt(ss / (n - 1.0));
    }
    return s;
}

namespace {

constexpr char kCkptMagic[4] = {'W', 'F', 'M', 'D'};
constexpr unsigned char kCkptVersion = 0x01;

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    KeyValues kv = ckpt.meta;
    kv.merge(ckpt.model.arch().to_kv());
    kv.set("n_params", static_cast<std::int64_t>(ckpt.model.n_params()));
    const std::string header = kv.to_string();
    std::string out(kCkptMagic, 4);
    out.push_back(static_cast<char>(kCkptVersion));
    const auto len = static_cast<std::uint32_t>(header.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
    out += header;
    for (double p : ckpt.model.params()) {
        const auto bits = std::bit_cast<std::uint64_t>(p);
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
    return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kCkptMagic, 4))
        throw FormatError(0, "not a WFMD checkpoint (bad magic)");
    if (bytes.size() < 5) throw FormatError(4, "truncated checkpoint: missing version");
    if (p[4] != kCkptVersion) throw FormatError(4, "unsupported checkpoint version " + std::to_string(p[4]));
    if (bytes.size() < 9) throw FormatError(5, "truncated checkpoint: missing header length");
    const std::uint32_t len =
        std::uint32_t(p[5]) | (std::uint32_t(p[6]) << 8) | (std::uint32_t(p[7]) << 16) | (std::uint32_t(p[8]) << 24);
    if (bytes.size() < 9 + std::size_t{len}) throw FormatError(9, "truncated checkpoint header");
    KeyValues kv;
    ConvArch arch;
    std::int64_t n_params = 0;
    try {
        kv = KeyValues::parse(bytes.substr(9, len));
        arch = ConvArch::from_kv(kv);
        n_params = kv.integer("n_params");
    } catch (const FormatError& e) {
        throw FormatError(9 + e.offset(), e.detail());
    } catch (const Error& e) {
        throw FormatError(9, std::string("bad checkpoint header: ") + e.what());
    }
    Checkpoint ckpt{ConvNet(arch), {}};
    if (n_params < 0 || static_cast<std::size_t>(n_params) != ckpt.model.n_params())
        throw FormatError(9, "n_params does not match the architecture");
    const std::size_t payload = 9 + std::size_t{len};
    const std::size_t need = payload + 8 * ckpt.model.n_params();
    if (bytes.size() < need) throw FormatError(bytes.size(), "truncated checkpoint payload");
    if (bytes.size() > need) throw FormatError(need, "trailing bytes after checkpoint payload");
    for (std::size_t i = 0; i < ckpt.model.n_params(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= std::uint64_t(p[payload + 8 * i + b]) << (8 * b);
        ckpt.model.params()[i] = std::bit_cast<double>(bits);
    }
    for (const auto& [key, value] : kv.entries())
        if (key.rfind("arch.", 0) != 0 && key != "n_params") ckpt.meta.set(key, value);
    return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::string& path) { write_file(path, encode_checkpoint(ckpt)); }

Checkpoint read_checkpoint(const std::string& path) {
    const auto bytes = read_file(path);
    try {
        return decode_checkpoint(bytes);
    } catch (const FormatError& e) {
        throw FormatError(e.offset(), path + ": " + e.detail());
    }
}

}  // namespace scalesplit
