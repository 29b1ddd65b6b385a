// Pilot construction and the noisy observation model: maps ground-truth
// channel frames to received pilot signals at a configured SNR.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "kpin/channel.hpp"
#include "kpin/numerics.hpp"
#include "kpin/rng.hpp"

namespace kpin {

struct PilotConfig {
    int n_tx = 2;          // M
    int tau = 2;           // pilot length, tau == M for the default pilot
    double rho = 1.0;      // transmit power scale
    double sigma_v = 1.0;  // observation noise std
};

// Default semi-unitary pilot sqrt(tau) * I_M (requires tau == M).
inline ComplexMatrix make_pilot(const PilotConfig& cfg) {
    if (cfg.tau < cfg.n_tx)
        throw std::invalid_argument("make_pilot: tau must be >= M");
    if (cfg.tau != cfg.n_tx)
        throw std::invalid_argument("make_pilot: default pilot requires tau == M");
    return std::sqrt(static_cast<double>(cfg.tau)) *
           ComplexMatrix::Identity(cfg.n_tx, cfg.tau);
}

// Pilot lifted to the vectorized signal model: q = sqrt(rho) * (pilot^T kron I_N).
struct TransformedPilot {
    ComplexMatrix q;  // tau*N x M*N
    int n_rx = 0;
    int n_tx = 0;
    int tau = 0;
    double rho = 1.0;
};

inline TransformedPilot transform_pilot(const ComplexMatrix& pilot, double rho, int n_rx) {
    if (rho <= 0.0) throw std::invalid_argument("transform_pilot: rho must be positive");
    TransformedPilot out;
    out.n_tx = static_cast<int>(pilot.rows());
    out.tau = static_cast<int>(pilot.cols());
    out.n_rx = n_rx;
    out.rho = rho;
    out.q = std::sqrt(rho) *
            kron(pilot.transpose(), ComplexMatrix::Identity(n_rx, n_rx));
    return out;
}

// Transmit power for a target SNR, with SNR defined as
// rho * tau * E|h|^2 / sigma_v^2 under the default pilot.
inline double rho_for_snr(double snr_db, double sigma_v, const ComplexMatrix& pilot,
                          double reference_channel_power) {
    if (sigma_v <= 0.0) throw std::invalid_argument("rho_for_snr: sigma_v must be positive");
    if (reference_channel_power <= 0.0)
        throw std::invalid_argument("rho_for_snr: reference channel power must be positive");
    const double tau = static_cast<double>(pilot.cols());
    return std::pow(10.0, snr_db / 10.0) * sigma_v * sigma_v /
           (tau * reference_channel_power);
}

struct SignalSequence {
    std::vector<ComplexVector> observations;  // each tau*N
    double sigma_v = 1.0;
    double rho = 1.0;

    int length() const { return static_cast<int>(observations.size()); }

    SignalSequence slice(int from, int count) const {
        if (from < 0 || count < 0 || from + count > length())
            throw std::out_of_range("SignalSequence::slice: range out of bounds");
        SignalSequence out{{}, sigma_v, rho};
        out.observations.assign(observations.begin() + from, observations.begin() + from + count);
        return out;
    }
};

// y_t = q * vec(H_t) + v_t with v_t ~ CN(0, sigma_v^2 I). Deterministic per seed.
inline SignalSequence observe(const ChannelSequence& channels, const TransformedPilot& q,
                              double sigma_v, std::uint64_t seed) {
    if (channels.n_rx != q.n_rx || channels.n_tx != q.n_tx)
        throw std::invalid_argument("observe: channel/pilot dimension mismatch");
    if (sigma_v < 0.0) throw std::invalid_argument("observe: sigma_v must be non-negative");
    Rng rng(seed);
    SignalSequence out{{}, sigma_v, q.rho};
    out.observations.reserve(channels.frames.size());
    const Eigen::Index obs_dim = q.q.rows();
    for (const ComplexMatrix& frame : channels.frames) {
        ComplexVector y = q.q * vec(frame);
        if (sigma_v > 0.0) y += rng.circular_gaussian_vector(obs_dim, sigma_v);
        out.observations.push_back(std::move(y));
    }
    return out;
}

}  // namespace kpin
