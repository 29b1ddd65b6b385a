// The data-driven gain network: FC -> GRU cell -> FC, mapping the
// Re/Im-stacked innovation features to a vectorized complex gain matrix.
// Forward and reverse passes are written out analytically; reverse-mode
// gradients are exact and finite-difference checked in the test suite.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "kpin/numerics.hpp"
#include "kpin/rng.hpp"

namespace kpin {

struct GainFeatures {
    ComplexVector delta_y;  // y_t - ŷ_{t|t-1}, length tau*N
    ComplexVector delta_x;  // x̂_{t-1|t-1} - x̂_{t-1|t-2}, length p*MN
};

// GRU hidden state plus the update toggle for the MLP-degenerate ablation.
// With update_enabled == false the state is never written after
// initialization and every step sees the same (initial) hidden vector.
struct RecurrentState {
    RealVector h;
    bool update_enabled = true;
};

struct KpinNetwork {
    int obs_dim = 0;    // tau*N
    int state_dim = 0;  // p*MN
    int hidden_dim = 0;

    // fc_in
    RealMatrix w_in;
    RealVector b_in;
    // GRU gates: update (z), reset (r), candidate (n)
    RealMatrix w_z, u_z;
    RealVector b_z;
    RealMatrix w_r, u_r;
    RealVector b_r;
    RealMatrix w_n, u_n;
    RealVector b_n;
    // fc_out
    RealMatrix w_out;
    RealVector b_out;

    int in_dim() const { return 2 * (obs_dim + state_dim); }
    int out_dim() const { return 2 * state_dim * obs_dim; }

    int param_count() const {
        return static_cast<int>(w_in.size() + b_in.size() +
                                3 * (w_z.size() + u_z.size() + b_z.size()) +
                                w_out.size() + b_out.size());
    }

    RecurrentState initial_state(bool update_enabled = true) const {
        return RecurrentState{RealVector::Zero(hidden_dim), update_enabled};
    }

    // Flattened parameter vector in declared tensor order (column-major
    // per matrix). Shared by the optimizer, checkpoints and tests.
    RealVector to_vector() const {
        RealVector v(param_count());
        Eigen::Index at = 0;
        auto put = [&](const auto& tensor) {
            v.segment(at, tensor.size()) =
                Eigen::Map<const RealVector>(tensor.data(), tensor.size());
            at += tensor.size();
        };
        put(w_in); put(b_in);
        put(w_z); put(u_z); put(b_z);
        put(w_r); put(u_r); put(b_r);
        put(w_n); put(u_n); put(b_n);
        put(w_out); put(b_out);
        return v;
    }

    void from_vector(const RealVector& v) {
        if (v.size() != param_count())
            throw std::invalid_argument("KpinNetwork::from_vector: size mismatch");
        Eigen::Index at = 0;
        auto take = [&](auto& tensor) {
            Eigen::Map<RealVector>(tensor.data(), tensor.size()) = v.segment(at, tensor.size());
            at += tensor.size();
        };
        take(w_in); take(b_in);
        take(w_z); take(u_z); take(b_z);
        take(w_r); take(u_r); take(b_r);
        take(w_n); take(u_n); take(b_n);
        take(w_out); take(b_out);
    }
};

// Extra shrink on the output layer so an untrained network emits gains
// close to zero. A gain of typical Kalman magnitude closes the filter
// loop; a random O(1) gain makes that loop strongly unstable and the
// first training rollouts overflow, so the untrained network must start
// near the open-loop regime.
inline constexpr double kOutputInitScale = 0.02;

// Uniform +-1/sqrt(fan_in) init per tensor (output layer additionally
// scaled by kOutputInitScale), deterministic in the seed.
inline KpinNetwork make_gain_network(int obs_dim, int state_dim, int hidden_dim,
                                     std::uint64_t seed) {
    if (obs_dim < 1 || state_dim < 1 || hidden_dim < 1)
        throw std::invalid_argument("make_gain_network: dimensions must be positive");
    KpinNetwork net;
    net.obs_dim = obs_dim;
    net.state_dim = state_dim;
    net.hidden_dim = hidden_dim;
    Rng rng(seed);
    auto fill = [&](auto& tensor, int fan_in, double scale = 1.0) {
        const double bound = scale / std::sqrt(static_cast<double>(fan_in));
        for (Eigen::Index i = 0; i < tensor.size(); ++i)
            tensor.data()[i] = rng.uniform(-bound, bound);
    };
    const int in = net.in_dim();
    const int h = hidden_dim;
    net.w_in = RealMatrix(h, in);
    net.b_in = RealVector(h);
    fill(net.w_in, in); fill(net.b_in, in);
    for (auto* w : {&net.w_z, &net.w_r, &net.w_n}) { *w = RealMatrix(h, h); fill(*w, h); }
    for (auto* u : {&net.u_z, &net.u_r, &net.u_n}) { *u = RealMatrix(h, h); fill(*u, h); }
    for (auto* b : {&net.b_z, &net.b_r, &net.b_n}) { *b = RealVector(h); fill(*b, h); }
    net.w_out = RealMatrix(net.out_dim(), h);
    net.b_out = RealVector(net.out_dim());
    fill(net.w_out, h, kOutputInitScale);
    fill(net.b_out, h, kOutputInitScale);
    return net;
}

// Cached intermediates from one forward call, consumed by backward().
struct ForwardTape {
    RealVector input;
    RealVector a1;      // tanh(fc_in)
    RealVector z, r, n_gate;
    RealVector h_prev, h_new;
    RealVector out;
};

struct ParamGradients {
    RealMatrix w_in; RealVector b_in;
    RealMatrix w_z, u_z; RealVector b_z;
    RealMatrix w_r, u_r; RealVector b_r;
    RealMatrix w_n, u_n; RealVector b_n;
    RealMatrix w_out; RealVector b_out;

    static ParamGradients zeros_like(const KpinNetwork& net) {
        ParamGradients g;
        g.w_in = RealMatrix::Zero(net.w_in.rows(), net.w_in.cols());
        g.b_in = RealVector::Zero(net.b_in.size());
        auto zm = [](const RealMatrix& m) { return RealMatrix::Zero(m.rows(), m.cols()).eval(); };
        auto zv = [](const RealVector& v) { return RealVector::Zero(v.size()).eval(); };
        g.w_z = zm(net.w_z); g.u_z = zm(net.u_z); g.b_z = zv(net.b_z);
        g.w_r = zm(net.w_r); g.u_r = zm(net.u_r); g.b_r = zv(net.b_r);
        g.w_n = zm(net.w_n); g.u_n = zm(net.u_n); g.b_n = zv(net.b_n);
        g.w_out = zm(net.w_out); g.b_out = zv(net.b_out);
        return g;
    }

    RealVector to_vector() const {
        Eigen::Index total = w_in.size() + b_in.size() +
                             3 * (w_z.size() + u_z.size() + b_z.size()) +
                             w_out.size() + b_out.size();
        RealVector v(total);
        Eigen::Index at = 0;
        auto put = [&](const auto& tensor) {
            v.segment(at, tensor.size()) =
                Eigen::Map<const RealVector>(tensor.data(), tensor.size());
            at += tensor.size();
        };
        put(w_in); put(b_in);
        put(w_z); put(u_z); put(b_z);
        put(w_r); put(u_r); put(b_r);
        put(w_n); put(u_n); put(b_n);
        put(w_out); put(b_out);
        return v;
    }

    void add(const ParamGradients& o) {
        w_in += o.w_in; b_in += o.b_in;
        w_z += o.w_z; u_z += o.u_z; b_z += o.b_z;
        w_r += o.w_r; u_r += o.u_r; b_r += o.b_r;
        w_n += o.w_n; u_n += o.u_n; b_n += o.b_n;
        w_out += o.w_out; b_out += o.b_out;
    }
};

namespace detail {
inline RealVector sigmoid(const RealVector& x) {
    return 1.0 / (1.0 + (-x.array()).exp());
}
}  // namespace detail

struct ForwardResult {
    ComplexMatrix gain;  // p*MN x tau*N
    RecurrentState state;
    ForwardTape tape;
};

// One network evaluation. Input is the Re/Im stack of the features; the
// output vector is split into Re/Im halves and reassembled column-major
// into the complex gain matrix. The hidden state advances only when
// update_enabled; the freshly computed candidate still drives the output
// either way.
inline ForwardResult gain_forward(const KpinNetwork& net, const GainFeatures& feats,
                                  const RecurrentState& state) {
    if (feats.delta_y.size() != net.obs_dim || feats.delta_x.size() != net.state_dim)
        throw std::invalid_argument("gain_forward: feature dimension mismatch");
    if (state.h.size() != net.hidden_dim)
        throw std::invalid_argument("gain_forward: hidden state dimension mismatch");

    ForwardTape tape;
    tape.input.resize(net.in_dim());
    tape.input << feats.delta_y.real(), feats.delta_y.imag(),
                  feats.delta_x.real(), feats.delta_x.imag();
    tape.h_prev = state.h;

    tape.a1 = (net.w_in * tape.input + net.b_in).array().tanh();
    tape.z = detail::sigmoid(net.w_z * tape.a1 + net.u_z * state.h + net.b_z);
    tape.r = detail::sigmoid(net.w_r * tape.a1 + net.u_r * state.h + net.b_r);
    tape.n_gate = (net.w_n * tape.a1 +
                   net.u_n * (tape.r.array() * state.h.array()).matrix() + net.b_n)
                      .array().tanh();
    tape.h_new = ((1.0 - tape.z.array()) * tape.n_gate.array() +
                  tape.z.array() * state.h.array()).matrix();
    tape.out = net.w_out * tape.h_new + net.b_out;

    const int half = net.state_dim * net.obs_dim;
    ComplexVector k(half);
    k.real() = tape.out.head(half);
    k.imag() = tape.out.tail(half);

    ForwardResult res;
    res.gain = unvec(k, net.state_dim, net.obs_dim);
    res.state = RecurrentState{state.update_enabled ? tape.h_new : state.h,
                               state.update_enabled};
    res.tape = std::move(tape);
    return res;
}

struct BackwardResult {
    ParamGradients params;
    GainFeatures feature_grads;  // d(loss)/dRe + j d(loss)/dIm per feature
    RealVector hidden_grad;      // d(loss)/d h_prev
};

// Reverse pass through one forward call. gain_grad packs the loss
// gradient w.r.t. the complex gain as dL/dRe + j dL/dIm entrywise;
// hidden_out_grad is the gradient flowing into h_new from later steps.
inline BackwardResult gain_backward(const KpinNetwork& net, const ForwardTape& tape,
                                    const ComplexMatrix& gain_grad,
                                    const RealVector& hidden_out_grad) {
    if (gain_grad.rows() != net.state_dim || gain_grad.cols() != net.obs_dim)
        throw std::invalid_argument("gain_backward: gain gradient shape mismatch");
    if (tape.input.size() != net.in_dim())
        throw std::invalid_argument("gain_backward: tape does not match network");

    const int half = net.state_dim * net.obs_dim;
    RealVector g_out(2 * half);
    const ComplexVector k_grad = vec(gain_grad);
    g_out.head(half) = k_grad.real();
    g_out.tail(half) = k_grad.imag();

    BackwardResult res;
    res.params = ParamGradients::zeros_like(net);

    res.params.w_out = g_out * tape.h_new.transpose();
    res.params.b_out = g_out;

    RealVector g_hnew = net.w_out.transpose() * g_out;
    if (hidden_out_grad.size() != 0) g_hnew += hidden_out_grad;

    // h_new = (1-z) n + z h_prev
    const RealVector g_z =
        (g_hnew.array() * (tape.h_prev.array() - tape.n_gate.array())).matrix();
    const RealVector g_n = (g_hnew.array() * (1.0 - tape.z.array())).matrix();
    RealVector g_hprev = (g_hnew.array() * tape.z.array()).matrix();

    // candidate: n = tanh(w_n a1 + u_n (r .* h_prev) + b_n)
    const RealVector g_npre =
        (g_n.array() * (1.0 - tape.n_gate.array().square())).matrix();
    res.params.w_n = g_npre * tape.a1.transpose();
    res.params.u_n = g_npre * (tape.r.array() * tape.h_prev.array()).matrix().transpose();
    res.params.b_n = g_npre;
    RealVector g_a1 = net.w_n.transpose() * g_npre;
    const RealVector g_rh = net.u_n.transpose() * g_npre;
    const RealVector g_r = (g_rh.array() * tape.h_prev.array()).matrix();
    g_hprev += (g_rh.array() * tape.r.array()).matrix();

    // reset gate
    const RealVector g_rpre = (g_r.array() * tape.r.array() * (1.0 - tape.r.array())).matrix();
    res.params.w_r = g_rpre * tape.a1.transpose();
    res.params.u_r = g_rpre * tape.h_prev.transpose();
    res.params.b_r = g_rpre;
    g_a1 += net.w_r.transpose() * g_rpre;
    g_hprev += net.u_r.transpose() * g_rpre;

    // update gate
    const RealVector g_zpre = (g_z.array() * tape.z.array() * (1.0 - tape.z.array())).matrix();
    res.params.w_z = g_zpre * tape.a1.transpose();
    res.params.u_z = g_zpre * tape.h_prev.transpose();
    res.params.b_z = g_zpre;
    g_a1 += net.w_z.transpose() * g_zpre;
    g_hprev += net.u_z.transpose() * g_zpre;

    // fc_in
    const RealVector g_a1pre = (g_a1.array() * (1.0 - tape.a1.array().square())).matrix();
    res.params.w_in = g_a1pre * tape.input.transpose();
    res.params.b_in = g_a1pre;
    const RealVector g_input = net.w_in.transpose() * g_a1pre;

    const int ny = net.obs_dim;
    const int nx = net.state_dim;
    res.feature_grads.delta_y.resize(ny);
    res.feature_grads.delta_y.real() = g_input.segment(0, ny);
    res.feature_grads.delta_y.imag() = g_input.segment(ny, ny);
    res.feature_grads.delta_x.resize(nx);
    res.feature_grads.delta_x.real() = g_input.segment(2 * ny, nx);
    res.feature_grads.delta_x.imag() = g_input.segment(2 * ny + nx, nx);
    res.hidden_grad = std::move(g_hprev);
    return res;
}

// One step of a BPTT accumulation: the tape plus this step's direct loss
// gradient on the emitted gain.
struct BpttStep {
    const ForwardTape* tape;
    ComplexMatrix gain_grad;
};

// Accumulates parameter gradients over a subsequence of steps (given in
// time order), chaining the hidden-state gradient backwards when the
// recurrent update is enabled. Truncation is the span boundary.
inline ParamGradients bptt_accumulate(const KpinNetwork& net, std::span<const BpttStep> steps,
                                      bool update_enabled) {
    ParamGradients total = ParamGradients::zeros_like(net);
    RealVector g_hidden = RealVector::Zero(net.hidden_dim);
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
        BackwardResult back = gain_backward(net, *it->tape, it->gain_grad,
                                            update_enabled ? g_hidden : RealVector());
        total.add(back.params);
        g_hidden = update_enabled ? back.hidden_grad : RealVector::Zero(net.hidden_dim);
    }
    return total;
}

}  // namespace kpin
