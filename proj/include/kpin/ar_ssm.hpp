// AR(p) identification from noisy pilot signals (block Yule-Walker on
// autocovariances recovered through the pilot pseudo-inverse) and
// assembly of the augmented linear-Gaussian state-space model.

#pragma once

#include <stdexcept>
#include <vector>

#include "kpin/channel.hpp"
#include "kpin/numerics.hpp"
#include "kpin/signal.hpp"

namespace kpin {

struct AutocovarianceSet {
    std::vector<ComplexMatrix> c_hat;  // lags 0..p, each MN x MN

    int order() const { return static_cast<int>(c_hat.size()) - 1; }
    int mn() const { return c_hat.empty() ? 0 : static_cast<int>(c_hat[0].rows()); }
};

// Empirical signal autocovariance at lag k:
//   (1/(T-1)) * sum_{t=k+1..T} y_{t-k} y_t^H   for k > 0,
//   (1/(T-1)) * sum_{t=1..T}   y_t     y_t^H   for k = 0.
// Both lags share the 1/(T-1) normalization.
inline ComplexMatrix empirical_signal_autocov(const SignalSequence& signals, int k) {
    const int t_len = signals.length();
    if (k < 0 || k >= t_len)
        throw std::invalid_argument("empirical_signal_autocov: lag out of range");
    if (t_len < 2)
        throw std::invalid_argument("empirical_signal_autocov: need at least two observations");
    const Eigen::Index dim = signals.observations[0].size();
    ComplexMatrix acc = ComplexMatrix::Zero(dim, dim);
    for (int t = k; t < t_len; ++t)
        acc.noalias() += signals.observations[t - k] * signals.observations[t].adjoint();
    return acc / static_cast<double>(t_len - 1);
}

// Channel autocovariance recovered from signals: the noise covariance
// sigma_v^2 I is subtracted at lag 0 only, then the empirical signal
// autocovariance is sandwiched between pilot pseudo-inverses.
inline ComplexMatrix channel_autocov_from_signals(const SignalSequence& signals,
                                                  const TransformedPilot& q,
                                                  double sigma_v, int k) {
    ComplexMatrix emp = empirical_signal_autocov(signals, k);
    if (k == 0) {
        emp.diagonal().array() -= sigma_v * sigma_v;
        emp = 0.5 * (emp + emp.adjoint());  // exact Hermiticity at lag 0
    }
    const ComplexMatrix q_pinv = pinv(q.q);
    return q_pinv * emp * q_pinv.adjoint();
}

inline AutocovarianceSet channel_autocov_set(const SignalSequence& signals,
                                             const TransformedPilot& q,
                                             double sigma_v, int p) {
    AutocovarianceSet set;
    set.c_hat.reserve(p + 1);
    for (int k = 0; k <= p; ++k)
        set.c_hat.push_back(channel_autocov_from_signals(signals, q, sigma_v, k));
    return set;
}

struct ArModel {
    int p = 0;
    ComplexMatrix phi;      // MN x p*MN, horizontal stack [phi_1 ... phi_p]
    ComplexMatrix sigma_u;  // MN x MN, Hermitian PSD
    double epsilon = 0.0;   // diagonal shift used in the Yule-Walker solve

    int mn() const { return static_cast<int>(phi.rows()); }
};

// Block-Toeplitz coefficient matrix [C_{i-j}] with C_{-k} = C_k^H.
inline ComplexMatrix block_toeplitz_autocov(const AutocovarianceSet& autocov) {
    const int p = autocov.order();
    const int mn = autocov.mn();
    ComplexMatrix c_all(p * mn, p * mn);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            const int lag = i - j;
            c_all.block(i * mn, j * mn, mn, mn) =
                lag >= 0 ? autocov.c_hat[lag] : ComplexMatrix(autocov.c_hat[-lag].adjoint());
        }
    return c_all;
}

// Default diagonal shift: 1e-6 * trace(C_all) / (p*MN) = 1e-6 * trace(C_0) / MN.
inline double default_fit_epsilon(const AutocovarianceSet& autocov) {
    if (autocov.order() < 1) throw std::invalid_argument("default_fit_epsilon: need lags 0..p");
    return 1e-6 * autocov.c_hat[0].trace().real() / autocov.mn();
}

// Yule-Walker solve: phi^H = (C_all + eps I)^{-1} C, sigma_u = C_0 - C^H phi^H.
// sigma_u is symmetrized and eigenvalue-clipped to PSD.
inline ArModel fit_ar(const AutocovarianceSet& autocov, double epsilon) {
    const int p = autocov.order();
    if (p < 1) throw std::invalid_argument("fit_ar: need lags 0..p with p >= 1");
    const int mn = autocov.mn();

    ComplexMatrix c_all = block_toeplitz_autocov(autocov);
    c_all.diagonal().array() += epsilon;

    ComplexMatrix c_stack(p * mn, mn);
    for (int k = 1; k <= p; ++k)
        c_stack.middleRows((k - 1) * mn, mn) = autocov.c_hat[k];

    const ComplexMatrix phi_h = solve_hermitian(c_all, c_stack);

    ComplexMatrix sigma_u = autocov.c_hat[0] - c_stack.adjoint() * phi_h;
    sigma_u = 0.5 * (sigma_u + sigma_u.adjoint());
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(sigma_u);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("fit_ar: sigma_u eigendecomposition failed");
    const RealVector lam = es.eigenvalues().cwiseMax(0.0);
    sigma_u = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().adjoint();

    ArModel model;
    model.p = p;
    model.phi = phi_h.adjoint();
    model.sigma_u = std::move(sigma_u);
    model.epsilon = epsilon;
    return model;
}

// Identified linear-Gaussian SSM with the augmented latent state
// x_t = [h_t; ...; h_{t-p+1}].
struct Ssm {
    ComplexMatrix a;        // p*MN x p*MN, companion transition
    ComplexMatrix b;        // p*MN x MN, selector [I; 0]
    ComplexMatrix d;        // tau*N x p*MN, observation q * b^T
    TransformedPilot q;
    ComplexMatrix sigma_u;  // MN x MN
    double sigma_v = 1.0;
    ComplexMatrix phi;      // MN x p*MN
    int p = 0;

    int mn() const { return static_cast<int>(phi.rows()); }
    int state_dim() const { return static_cast<int>(a.rows()); }
    int obs_dim() const { return static_cast<int>(d.rows()); }

    // h extraction: first MN entries of the augmented state.
    ComplexVector extract_h(const ComplexVector& x) const { return x.head(mn()); }
};

inline Ssm build_ssm(const ArModel& ar, const TransformedPilot& q, double sigma_v) {
    const int mn = ar.mn();
    if (q.q.cols() != mn)
        throw std::invalid_argument("build_ssm: pilot/model dimension mismatch");
    Ssm ssm;
    ssm.p = ar.p;
    ssm.phi = ar.phi;
    ssm.sigma_u = ar.sigma_u;
    ssm.sigma_v = sigma_v;
    ssm.q = q;
    ssm.a = companion_matrix(ar.phi, ar.p);
    ssm.b = ComplexMatrix::Zero(ar.p * mn, mn);
    ssm.b.topRows(mn) = ComplexMatrix::Identity(mn, mn);
    ssm.d = q.q * ssm.b.transpose();
    return ssm;
}

}  // namespace kpin
