// Model-based filter-then-predict baselines: the conventional Kalman
// recursion over the identified SSM (ARKF) and pure AR extrapolation
// from ground-truth context.

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "kpin/ar_ssm.hpp"
#include "kpin/numerics.hpp"

namespace kpin {

struct KalmanState {
    ComplexVector x_prior;  // x̂_{t|t-1}
    ComplexMatrix p_prior;
    ComplexVector x_post;   // x̂_{t|t}
    ComplexMatrix p_post;
    ComplexVector y_pred;   // ŷ_{t|t-1}
    ComplexMatrix s_pred;   // innovation covariance
};

// Zero-mean start with the stationary covariance block-diagonal
// (lag-zero channel autocovariance repeated p times).
inline KalmanState kf_initial_state(const Ssm& ssm, const ComplexMatrix& c0) {
    const int mn = ssm.mn();
    if (c0.rows() != mn || c0.cols() != mn)
        throw std::invalid_argument("kf_initial_state: c0 must be MN x MN");
    KalmanState st;
    st.x_post = ComplexVector::Zero(ssm.state_dim());
    st.p_post = ComplexMatrix::Zero(ssm.state_dim(), ssm.state_dim());
    for (int i = 0; i < ssm.p; ++i) st.p_post.block(i * mn, i * mn, mn, mn) = c0;
    st.x_prior = st.x_post;
    st.p_prior = st.p_post;
    st.y_pred = ComplexVector::Zero(ssm.obs_dim());
    st.s_pred = ComplexMatrix::Zero(ssm.obs_dim(), ssm.obs_dim());
    return st;
}

// Time update: push the posterior through the transition model.
inline KalmanState kf_predict_step(const KalmanState& state, const Ssm& ssm) {
    KalmanState next = state;
    next.x_prior = ssm.a * state.x_post;
    ComplexMatrix p = ssm.a * state.p_post * ssm.a.adjoint() +
                      ssm.b * ssm.sigma_u * ssm.b.adjoint();
    next.p_prior = 0.5 * (p + p.adjoint());
    next.y_pred = ssm.d * next.x_prior;
    ComplexMatrix s = ssm.d * next.p_prior * ssm.d.adjoint();
    s.diagonal().array() += ssm.sigma_v * ssm.sigma_v;
    next.s_pred = 0.5 * (s + s.adjoint());
    return next;
}

// Kalman gain for the current prior: K = P D^H S^{-1}, via Hermitian solve.
inline ComplexMatrix kf_gain(const KalmanState& state, const Ssm& ssm) {
    // K^H = S^{-1} (D P^H); errors out on singular S.
    return solve_hermitian(state.s_pred, ssm.d * state.p_prior.adjoint()).adjoint();
}

// Measurement update with the received signal y_t.
inline KalmanState kf_filter_step(const KalmanState& state, const ComplexVector& y_t,
                                  const Ssm& ssm) {
    if (y_t.size() != ssm.obs_dim())
        throw std::invalid_argument("kf_filter_step: observation dimension mismatch");
    const ComplexMatrix gain = kf_gain(state, ssm);
    KalmanState next = state;
    next.x_post = state.x_prior + gain * (y_t - state.y_pred);
    ComplexMatrix p = state.p_prior - gain * state.s_pred * gain.adjoint();
    next.p_post = 0.5 * (p + p.adjoint());
    return next;
}

struct TraceRecord {
    ComplexVector h_pred;                 // ĥ_{t+1|t}
    ComplexVector y_pred;                 // ŷ_{t+1|t}
    std::optional<ComplexVector> x_post;  // posterior the prediction was made from
    double nse = std::numeric_limits<double>::quiet_NaN();
};

struct PredictionTrace {
    std::vector<TraceRecord> records;

    int length() const { return static_cast<int>(records.size()); }
};

// Conventional filter-then-predict over `horizon` slots. Record t holds
// the prediction of slot t+1; the first record is the open-loop
// prediction from the initial state, after which each received signal is
// filtered in before the next prediction. Optionally reports the gain
// sequence it used (for gain-injection diagnostics).
inline PredictionTrace arkf_predict(const SignalSequence& signals, const Ssm& ssm,
                                    const KalmanState& init, int horizon,
                                    std::vector<ComplexMatrix>* gains_out = nullptr) {
    if (horizon < 0 || horizon > signals.length())
        throw std::invalid_argument("arkf_predict: horizon exceeds signal length");
    PredictionTrace trace;
    trace.records.reserve(horizon);
    KalmanState state = init;
    for (int t = 0; t < horizon; ++t) {
        const ComplexVector posterior = state.x_post;
        state = kf_predict_step(state, ssm);
        TraceRecord rec;
        rec.h_pred = ssm.extract_h(state.x_prior);
        rec.y_pred = state.y_pred;
        rec.x_post = posterior;
        trace.records.push_back(std::move(rec));
        if (t + 1 < horizon) {
            if (gains_out) gains_out->push_back(kf_gain(state, ssm));
            state = kf_filter_step(state, signals.observations[t], ssm);
        }
    }
    return trace;
}

// AR extrapolation from ground-truth context: predicts frame p+i of the
// given sequence from the p frames before it, for i = 0..horizon-1.
inline PredictionTrace ar_predict(const ChannelSequence& true_channels, const ArModel& ar,
                                  int horizon) {
    const int p = ar.p;
    const int mn = ar.mn();
    if (true_channels.mn() != mn)
        throw std::invalid_argument("ar_predict: channel/model dimension mismatch");
    if (true_channels.length() < p + horizon)
        throw std::invalid_argument("ar_predict: insufficient context frames");
    PredictionTrace trace;
    trace.records.reserve(horizon);
    for (int i = 0; i < horizon; ++i) {
        ComplexVector pred = ComplexVector::Zero(mn);
        for (int j = 1; j <= p; ++j)
            pred += ar.phi.middleCols((j - 1) * mn, mn) * vec(true_channels.frames[p + i - j]);
        TraceRecord rec;
        rec.h_pred = std::move(pred);
        trace.records.push_back(std::move(rec));
    }
    return trace;
}

}  // namespace kpin
