// The hybrid filter-then-predict workflow with a learned gain, its
// unsupervised training loop (segmented signals, mini-batch BPTT, one
// Adam update per epoch), the supervised strategy variants used by the
// ablations, and the frozen-parameter test rollout.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "kpin/ar_ssm.hpp"
#include "kpin/ftp.hpp"
#include "kpin/gain_net.hpp"
#include "kpin/numerics.hpp"
#include "kpin/rng.hpp"
#include "kpin/signal.hpp"

namespace kpin {

enum class Strategy {
    S1FilterSupervised,      // || h_t - ĥ_{t|t} ||^2, labels required
    S2PredictionSupervised,  // || h_{t+1} - ĥ_{t+1|t} ||^2, labels required
    S3Unsupervised,          // || y_{t+1} - ŷ_{t+1|t} ||^2, signals only
};

struct TrainConfig {
    int t_s = 10;        // subsequence length
    int n_b = 10;        // subsequences per epoch
    int n_e = 50;        // epochs
    double lr = 1e-3;
    double beta = 1e-5;  // weight on ||psi|| (L2 norm, not squared)
    Strategy strategy = Strategy::S3Unsupervised;
    std::optional<double> label_noise;  // gamma (S1) or sigma (S2) scale
    std::uint64_t seed = 0;
    bool update_enabled = true;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

// Rolling state of the hybrid workflow between steps: the prior
// x̂_{t|t-1}, its predicted signal, the posterior-minus-prior feature
// from the previous step, and the network's recurrent state.
struct HybridState {
    ComplexVector x_prior;
    ComplexVector y_pred;
    ComplexVector delta_x;
    RecurrentState rec;
};

inline HybridState initial_hybrid_state(const Ssm& ssm, const KpinNetwork& net,
                                        bool update_enabled = true) {
    HybridState st;
    st.x_prior = ComplexVector::Zero(ssm.state_dim());
    st.y_pred = ComplexVector::Zero(ssm.obs_dim());
    st.delta_x = ComplexVector::Zero(ssm.state_dim());
    st.rec = net.initial_state(update_enabled);
    return st;
}

struct HybridStepResult {
    HybridState state;
    ComplexVector h_pred;  // ĥ_{t+1|t}
    ComplexVector y_pred;  // ŷ_{t+1|t}
    ComplexVector x_post;  // x̂_{t|t}
};

// One filter-then-predict step with the learned gain: consumes y_t,
// forms the innovation features, applies the network gain to get the
// posterior, then pushes it through the transition model.
inline HybridStepResult hybrid_ftp_step(const Ssm& ssm, const KpinNetwork& net,
                                        const HybridState& state, const ComplexVector& y_t) {
    if (y_t.size() != ssm.obs_dim())
        throw std::invalid_argument("hybrid_ftp_step: observation dimension mismatch");
    const ComplexVector innovation = y_t - state.y_pred;
    ForwardResult fwd =
        gain_forward(net, GainFeatures{innovation, state.delta_x}, state.rec);
    const ComplexVector x_post = state.x_prior + fwd.gain * innovation;

    HybridStepResult out;
    out.state.delta_x = x_post - state.x_prior;
    out.state.x_prior = ssm.a * x_post;
    out.state.y_pred = ssm.d * out.state.x_prior;
    out.state.rec = std::move(fwd.state);
    out.h_pred = ssm.extract_h(out.state.x_prior);
    out.y_pred = out.state.y_pred;
    out.x_post = x_post;
    return out;
}

// Single-step training loss || y_next - Q Phi (x_prior + K delta_y) ||^2;
// equal to || y_next - D A x_post ||^2 via the companion structure.
inline double single_step_loss(const Ssm& ssm, const ComplexVector& x_prior,
                               const ComplexMatrix& gain, const ComplexVector& delta_y,
                               const ComplexVector& y_next) {
    const ComplexVector x_post = x_prior + gain * delta_y;
    return (y_next - ssm.q.q * (ssm.phi * x_post)).squaredNorm();
}

// Epoch objective: mean of the collected single-step losses over
// n_b * T_s plus beta * ||psi||.
inline double epoch_objective(const std::vector<std::vector<double>>& losses_per_subsequence,
                              int t_s, const KpinNetwork& net, double beta) {
    if (losses_per_subsequence.empty() || t_s < 1)
        throw std::invalid_argument("epoch_objective: empty batch");
    double total = 0.0;
    for (const auto& sub : losses_per_subsequence)
        for (double l : sub) total += l;
    const double denom = static_cast<double>(losses_per_subsequence.size()) * t_s;
    return total / denom + beta * net.to_vector().norm();
}

namespace detail {

// Per-step quantities cached during a taped subsequence rollout.
struct RolloutStep {
    ComplexVector x_prior;
    ComplexVector innovation;  // y_t - D x_prior
    ComplexVector x_post;      // only when has_filter
    ComplexMatrix gain;
    ForwardTape tape;
    bool has_filter = false;
};

struct TapedRollout {
    std::vector<RolloutStep> steps;
};

// Forward rollout over one subsequence. Losses target all slots; the
// gain network runs on every step except the last (whose posterior
// would only influence slots beyond the truncation boundary).
inline TapedRollout rollout_subsequence(const ComplexVector* signals, int count,
                                        const Ssm& ssm, const KpinNetwork& net,
                                        bool update_enabled) {
    TapedRollout roll;
    roll.steps.resize(count);
    ComplexVector x_post_prev = ComplexVector::Zero(ssm.state_dim());
    ComplexVector x_prior_prev = ComplexVector::Zero(ssm.state_dim());
    RecurrentState rec = net.initial_state(update_enabled);
    for (int idx = 0; idx < count; ++idx) {
        RolloutStep& step = roll.steps[idx];
        step.x_prior = ssm.a * x_post_prev;
        step.innovation = signals[idx] - ssm.d * step.x_prior;
        step.has_filter = (idx + 1 < count);
        if (step.has_filter) {
            const ComplexVector delta_x = x_post_prev - x_prior_prev;
            ForwardResult fwd =
                gain_forward(net, GainFeatures{step.innovation, delta_x}, rec);
            rec = std::move(fwd.state);
            step.gain = std::move(fwd.gain);
            step.tape = std::move(fwd.tape);
            step.x_post = step.x_prior + step.gain * step.innovation;
            x_post_prev = step.x_post;
        }
        x_prior_prev = step.x_prior;
    }
    return roll;
}

// Per-step losses for the strategy head. Labels are vectorized true
// channels aligned with the subsequence slots (S1/S2 only).
inline std::vector<double> strategy_losses(const TapedRollout& roll, const Ssm& ssm,
                                           Strategy strategy,
                                           const std::vector<ComplexVector>* labels) {
    std::vector<double> out;
    out.reserve(roll.steps.size());
    const int mn = ssm.mn();
    for (size_t i = 0; i < roll.steps.size(); ++i) {
        const auto& step = roll.steps[i];
        switch (strategy) {
            case Strategy::S3Unsupervised:
                out.push_back(step.innovation.squaredNorm());
                break;
            case Strategy::S2PredictionSupervised:
                out.push_back(((*labels)[i] - step.x_prior.head(mn)).squaredNorm());
                break;
            case Strategy::S1FilterSupervised:
                if (step.has_filter)
                    out.push_back(((*labels)[i] - step.x_post.head(mn)).squaredNorm());
                break;
        }
    }
    return out;
}

// Reverse pass over one subsequence: BPTT through the filter recursion
// and the gain network, for the sum of the strategy's per-step losses.
// Complex adjoints use the dL/dRe + j dL/dIm packing, under which a
// complex-linear map w = M v pulls back as g_v = M^H g_w.
inline ParamGradients backward_subsequence(const TapedRollout& roll, const Ssm& ssm,
                                           const KpinNetwork& net, Strategy strategy,
                                           const std::vector<ComplexVector>* labels,
                                           bool update_enabled) {
    const int n = static_cast<int>(roll.steps.size());
    const int mn = ssm.mn();
    std::vector<ComplexVector> g_prior(n, ComplexVector::Zero(ssm.state_dim()));
    std::vector<ComplexVector> g_post(n, ComplexVector::Zero(ssm.state_dim()));
    RealVector g_hidden = RealVector::Zero(net.hidden_dim);
    ParamGradients grads = ParamGradients::zeros_like(net);

    for (int idx = n - 1; idx >= 0; --idx) {
        const auto& step = roll.steps[idx];
        ComplexVector g_innov = ComplexVector::Zero(ssm.obs_dim());

        if (strategy == Strategy::S3Unsupervised)
            g_innov += 2.0 * step.innovation;
        if (strategy == Strategy::S2PredictionSupervised)
            g_prior[idx].head(mn) -= 2.0 * ((*labels)[idx] - step.x_prior.head(mn));

        if (step.has_filter) {
            if (strategy == Strategy::S1FilterSupervised)
                g_post[idx].head(mn) -= 2.0 * ((*labels)[idx] - step.x_post.head(mn));

            // x_post = x_prior + K * innovation
            g_prior[idx] += g_post[idx];
            const ComplexMatrix g_gain = g_post[idx] * step.innovation.adjoint();
            g_innov += step.gain.adjoint() * g_post[idx];

            BackwardResult back = gain_backward(net, step.tape, g_gain,
                                                update_enabled ? g_hidden : RealVector());
            grads.add(back.params);
            g_innov += back.feature_grads.delta_y;
            g_hidden = update_enabled ? back.hidden_grad
                                      : RealVector::Zero(net.hidden_dim);
            if (idx >= 1) {
                // delta_x feature = x_post[idx-1] - x_prior[idx-1]
                g_post[idx - 1] += back.feature_grads.delta_x;
                g_prior[idx - 1] -= back.feature_grads.delta_x;
            }
        }

        // innovation = y - D x_prior
        g_prior[idx] -= ssm.d.adjoint() * g_innov;
        // x_prior = A x_post_prev
        if (idx >= 1) g_post[idx - 1] += ssm.a.adjoint() * g_prior[idx];
    }
    return grads;
}

struct Adam {
    RealVector m, v;
    int t = 0;

    explicit Adam(Eigen::Index n) : m(RealVector::Zero(n)), v(RealVector::Zero(n)) {}

    void step(RealVector& params, const RealVector& grad, const TrainConfig& cfg) {
        ++t;
        m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
        v = cfg.adam_beta2 * v.array().matrix() +
            (1.0 - cfg.adam_beta2) * grad.array().square().matrix();
        const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
        const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
        params -= (cfg.lr * (m / bc1).array() / ((v / bc2).array().sqrt() + cfg.adam_eps))
                      .matrix();
    }
};

}  // namespace detail

struct TrainResult {
    KpinNetwork net;
    std::vector<double> loss_curve;  // epoch objective, pre-update parameters
    std::vector<double> epoch_ms;
};

// Labels aligned with the training signals (S1/S2), possibly corrupted;
// null for the unsupervised strategy.
using LabelVectors = std::vector<ComplexVector>;

struct BatchEval {
    double objective = 0.0;   // epoch objective over the given subsequences
    RealVector gradient;      // exact gradient of the objective w.r.t. psi
};

// Objective and exact BPTT gradient of the epoch objective over an
// explicit batch of subsequence indices. train() samples indices and
// feeds them here; tests difference this against finite differences.
inline BatchEval evaluate_batch(const SignalSequence& signals, const Ssm& ssm,
                                const KpinNetwork& net, const TrainConfig& cfg,
                                const LabelVectors* labels,
                                const std::vector<int>& subsequence_indices) {
    ParamGradients total = ParamGradients::zeros_like(net);
    std::vector<std::vector<double>> losses;
    losses.reserve(subsequence_indices.size());
    for (int j : subsequence_indices) {
        const int offset = j * cfg.t_s;
        if (offset < 0 || offset + cfg.t_s > signals.length())
            throw std::out_of_range("evaluate_batch: subsequence index out of range");
        detail::TapedRollout roll = detail::rollout_subsequence(
            signals.observations.data() + offset, cfg.t_s, ssm, net, cfg.update_enabled);
        std::vector<ComplexVector> sub_labels;
        const std::vector<ComplexVector>* label_ptr = nullptr;
        if (labels) {
            sub_labels.assign(labels->begin() + offset, labels->begin() + offset + cfg.t_s);
            label_ptr = &sub_labels;
        }
        losses.push_back(detail::strategy_losses(roll, ssm, cfg.strategy, label_ptr));
        total.add(detail::backward_subsequence(roll, ssm, net, cfg.strategy, label_ptr,
                                               cfg.update_enabled));
    }
    BatchEval out;
    out.objective = epoch_objective(losses, cfg.t_s, net, cfg.beta);
    out.gradient = total.to_vector() /
                   (static_cast<double>(subsequence_indices.size()) * cfg.t_s);
    const RealVector params = net.to_vector();
    const double pnorm = params.norm();
    if (pnorm > 0.0) out.gradient += (cfg.beta / pnorm) * params;
    return out;
}

// Training labels with the configured pre-processing error applied once
// up front: circular Gaussian noise at the labels' RMS entry magnitude,
// scaled by the noise level.
inline LabelVectors prepare_labels(const ChannelSequence& labels, int used, int mn,
                                   std::optional<double> noise_level, std::uint64_t seed) {
    LabelVectors out;
    out.reserve(used);
    for (int t = 0; t < used; ++t) out.push_back(vec(labels.frames[t]));
    if (noise_level && *noise_level > 0.0) {
        double power = 0.0;
        for (const auto& l : out) power += l.squaredNorm();
        const double rms = std::sqrt(power / (static_cast<double>(used) * mn));
        Rng noise_rng(seed);
        for (auto& l : out)
            l += *noise_level * noise_rng.circular_gaussian_vector(l.size(), rms);
    }
    return out;
}

// Unsupervised (or strategy-supervised) training: segments the signals
// into floor(T/T_s) disjoint consecutive subsequences, draws n_b of them
// per epoch uniformly with replacement, accumulates BPTT gradients of
// the epoch objective and applies a single Adam update per epoch.
inline TrainResult train(const SignalSequence& signals, const Ssm& ssm, KpinNetwork net,
                         const TrainConfig& cfg, const ChannelSequence* labels = nullptr) {
    if (cfg.t_s < 1 || cfg.n_b < 1 || cfg.n_e < 0 || cfg.lr < 0.0 || cfg.beta < 0.0)
        throw std::invalid_argument("train: invalid configuration");
    const bool needs_labels = cfg.strategy != Strategy::S3Unsupervised;
    if (needs_labels && labels == nullptr)
        throw std::invalid_argument("train: strategy S1/S2 requires labels");
    if (!needs_labels && labels != nullptr)
        throw std::invalid_argument("train: unsupervised strategy forbids labels");

    const int n_s = signals.length() / cfg.t_s;
    if (n_s < 1) throw std::invalid_argument("train: signal sequence shorter than T_s");
    if (cfg.n_b > n_s)
        throw std::invalid_argument("train: batch size exceeds subsequence count");
    const int used = n_s * cfg.t_s;
    if (needs_labels && labels->length() < used)
        throw std::invalid_argument("train: labels shorter than training prefix");

    LabelVectors label_vecs;
    if (needs_labels)
        label_vecs = prepare_labels(*labels, used, ssm.mn(), cfg.label_noise,
                                    mix_seed(cfg.seed, 1));

    Rng sample_rng(mix_seed(cfg.seed, 0));
    RealVector params = net.to_vector();
    detail::Adam adam(params.size());

    TrainResult result;
    result.loss_curve.reserve(cfg.n_e);
    result.epoch_ms.reserve(cfg.n_e);

    std::vector<int> batch(cfg.n_b);
    for (int epoch = 0; epoch < cfg.n_e; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        for (int& j : batch) j = static_cast<int>(sample_rng.uniform_index(n_s));
        const BatchEval eval = evaluate_batch(signals, ssm, net, cfg,
                                              needs_labels ? &label_vecs : nullptr, batch);
        result.loss_curve.push_back(eval.objective);
        adam.step(params, eval.gradient, cfg);
        net.from_vector(params);
        const auto t1 = std::chrono::steady_clock::now();
        result.epoch_ms.push_back(
            std::chrono::duration<double, std::milli>(t1 - t0).count());
    }

    result.net = std::move(net);
    return result;
}

// Frozen-parameter rollout over future signals: one continuous pass
// emitting ĥ_{t+1|t} for t = 0..horizon-1 from a fresh zero state.
inline PredictionTrace test_rollout(const SignalSequence& signals_future, const Ssm& ssm,
                                    const KpinNetwork& net, int horizon,
                                    bool update_enabled = true) {
    if (horizon < 0 || horizon > signals_future.length())
        throw std::invalid_argument("test_rollout: horizon exceeds signal length");
    PredictionTrace trace;
    trace.records.reserve(horizon);
    HybridState state = initial_hybrid_state(ssm, net, update_enabled);
    ComplexVector x_post = ComplexVector::Zero(ssm.state_dim());
    for (int t = 0; t < horizon; ++t) {
        TraceRecord rec;
        rec.h_pred = ssm.extract_h(state.x_prior);
        rec.y_pred = state.y_pred;
        rec.x_post = x_post;
        trace.records.push_back(std::move(rec));
        if (t + 1 < horizon) {
            HybridStepResult step =
                hybrid_ftp_step(ssm, net, state, signals_future.observations[t]);
            x_post = std::move(step.x_post);
            state = std::move(step.state);
        }
    }
    return trace;
}

// Diagnostic rollout with externally supplied gains (bypassing the
// network): gains[t] is applied when filtering the t-th future signal.
// With the conventional Kalman gains injected this reproduces the ARKF
// trace exactly.
inline PredictionTrace hybrid_predict_injected(const SignalSequence& signals_future,
                                               const Ssm& ssm,
                                               const std::vector<ComplexMatrix>& gains,
                                               int horizon) {
    if (horizon < 0 || horizon > signals_future.length())
        throw std::invalid_argument("hybrid_predict_injected: horizon exceeds signal length");
    if (horizon > 0 && static_cast<int>(gains.size()) < horizon - 1)
        throw std::invalid_argument("hybrid_predict_injected: not enough gains");
    PredictionTrace trace;
    trace.records.reserve(horizon);
    ComplexVector x_post = ComplexVector::Zero(ssm.state_dim());
    for (int t = 0; t < horizon; ++t) {
        const ComplexVector x_prior = ssm.a * x_post;
        const ComplexVector y_pred = ssm.d * x_prior;
        TraceRecord rec;
        rec.h_pred = ssm.extract_h(x_prior);
        rec.y_pred = y_pred;
        rec.x_post = x_post;
        trace.records.push_back(std::move(rec));
        if (t + 1 < horizon)
            x_post = x_prior + gains[t] * (signals_future.observations[t] - y_pred);
    }
    return trace;
}

}  // namespace kpin
