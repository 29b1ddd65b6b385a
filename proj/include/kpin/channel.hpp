// Ground-truth time-varying channel generators: a sum-of-sinusoids
// surrogate with per-path Doppler and array phase progression, and an
// exact vector-AR oracle for matched-model tests.

#pragma once

#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "kpin/numerics.hpp"
#include "kpin/rng.hpp"

namespace kpin {

inline constexpr double kSpeedOfLightMps = 2.998e8;

// Mobility/carrier/aging triple controlling slot duration.
struct DynamicCondition {
    double speed_kmh = 60.0;    // v
    double carrier_ghz = 28.0;  // f
    double aging_k = 1.0;       // slot duration in coherence times
};

// T_c = 540 / (v * f), in milliseconds.
inline double coherence_time_ms(const DynamicCondition& cond) {
    if (cond.speed_kmh <= 0.0 || cond.carrier_ghz <= 0.0)
        throw std::invalid_argument("coherence_time_ms: v and f must be positive");
    return 540.0 / (cond.speed_kmh * cond.carrier_ghz);
}

inline double slot_duration_ms(const DynamicCondition& cond) {
    if (cond.aging_k <= 0.0)
        throw std::invalid_argument("slot_duration_ms: k must be positive");
    return cond.aging_k * coherence_time_ms(cond);
}

// Maximum Doppler shift in Hz.
inline double doppler_hz(const DynamicCondition& cond) {
    return (cond.speed_kmh / 3.6) * (cond.carrier_ghz * 1e9) / kSpeedOfLightMps;
}

struct SurrogateChannelParams {
    int n_paths = 12;
    double power_decay = 0.3;       // exponential per-path power profile exponent
    std::uint64_t angle_seed = 1;
    std::uint64_t phase_seed = 2;
    double rician_k_db = 0.0;       // power boost on the first path; 0 dB = none
};

struct ChannelSequence {
    int n_rx = 0;
    int n_tx = 0;
    double slot_ms = 0.0;
    std::uint64_t seed = 0;
    std::vector<ComplexMatrix> frames;  // each N x M

    int length() const { return static_cast<int>(frames.size()); }
    int mn() const { return n_rx * n_tx; }

    ChannelSequence slice(int from, int count) const {
        if (from < 0 || count < 0 || from + count > length())
            throw std::out_of_range("ChannelSequence::slice: range out of bounds");
        ChannelSequence out{n_rx, n_tx, slot_ms, seed, {}};
        out.frames.assign(frames.begin() + from, frames.begin() + from + count);
        return out;
    }

    // Mean per-entry power E|h|^2 over the first `count` frames.
    double mean_entry_power(int count) const {
        count = std::min(count, length());
        if (count <= 0) throw std::invalid_argument("mean_entry_power: no frames");
        double acc = 0.0;
        for (int t = 0; t < count; ++t) acc += frames[t].squaredNorm();
        return acc / (static_cast<double>(count) * n_rx * n_tx);
    }
};

// Sum-of-sinusoids surrogate. Entry (n, m) of frame t is
//   sum_l a_l * exp(j * (2*pi*f_D*cos(theta_l)*t*dt + phi_{n,m,l}))
// with phi_{n,m,l} = phi0_l + pi*sin(aoa_l)*n + pi*sin(aod_l)*m
// (half-wavelength uniform arrays at both ends). Per-path Doppler angles
// theta_l are drawn around a few cluster centers with tight intra-cluster
// spread, mirroring the specular cluster geometry of mmWave macro-cell
// channels. Deterministic given seeds.
inline constexpr int kSurrogateDopplerClusters = 6;
inline constexpr double kSurrogateClusterSpreadRad = 0.10;

inline ChannelSequence generate_surrogate(const DynamicCondition& cond,
                                          const SurrogateChannelParams& params,
                                          int n_rx, int n_tx, int length) {
    if (length < 1) throw std::invalid_argument("generate_surrogate: length must be >= 1");
    if (params.n_paths < 1) throw std::invalid_argument("generate_surrogate: n_paths must be >= 1");

    const double dt_s = slot_duration_ms(cond) * 1e-3;
    const double fd = doppler_hz(cond);
    const int n_paths = params.n_paths;

    Rng angle_rng(params.angle_seed);
    Rng phase_rng(params.phase_seed);

    std::vector<double> power(n_paths);
    double power_sum = 0.0;
    for (int l = 0; l < n_paths; ++l) {
        power[l] = std::exp(-params.power_decay * l);
        if (l == 0) power[l] *= std::pow(10.0, params.rician_k_db / 10.0);
        power_sum += power[l];
    }

    constexpr double two_pi = 2.0 * std::numbers::pi;
    std::vector<double> centers(kSurrogateDopplerClusters);
    for (double& c : centers) c = angle_rng.uniform(0.0, two_pi);

    std::vector<double> amp(n_paths), omega(n_paths);
    std::vector<double> rx_rate(n_paths), tx_rate(n_paths), phi0(n_paths);
    for (int l = 0; l < n_paths; ++l) {
        amp[l] = std::sqrt(power[l] / power_sum);
        const double theta = centers[l % kSurrogateDopplerClusters] +
                             kSurrogateClusterSpreadRad * angle_rng.uniform(-1.0, 1.0);
        const double aoa = angle_rng.uniform(0.0, two_pi);
        const double aod = angle_rng.uniform(0.0, two_pi);
        omega[l] = two_pi * fd * std::cos(theta) * dt_s;       // phase advance per slot
        rx_rate[l] = std::numbers::pi * std::sin(aoa);
        tx_rate[l] = std::numbers::pi * std::sin(aod);
        phi0[l] = phase_rng.uniform(0.0, two_pi);
    }

    ChannelSequence seq{n_rx, n_tx, slot_duration_ms(cond), params.angle_seed, {}};
    seq.frames.reserve(length);
    for (int t = 0; t < length; ++t) {
        ComplexMatrix frame = ComplexMatrix::Zero(n_rx, n_tx);
        for (int l = 0; l < n_paths; ++l) {
            const double base = omega[l] * t + phi0[l];
            for (int n = 0; n < n_rx; ++n)
                for (int m = 0; m < n_tx; ++m)
                    frame(n, m) += amp[l] * std::polar(1.0, base + rx_rate[l] * n + tx_rate[l] * m);
        }
        seq.frames.push_back(std::move(frame));
    }
    return seq;
}

struct ArOracleOptions {
    int burn_in = 500;
    std::optional<ComplexVector> initial_state;  // stacked [h_0; ...; h_{1-p}], length p*MN
};

// Builds the companion transition matrix [phi; I, 0] from the horizontal
// stack phi = [phi_1 ... phi_p].
inline ComplexMatrix companion_matrix(const ComplexMatrix& phi, int p) {
    const Eigen::Index mn = phi.rows();
    if (phi.cols() != p * mn)
        throw std::invalid_argument("companion_matrix: phi must be MN x p*MN");
    ComplexMatrix a = ComplexMatrix::Zero(p * mn, p * mn);
    a.topRows(mn) = phi;
    if (p > 1)
        a.block(mn, 0, (p - 1) * mn, (p - 1) * mn) =
            ComplexMatrix::Identity((p - 1) * mn, (p - 1) * mn);
    return a;
}

// Exact AR(p) channel generator: h_t = sum_j phi_j h_{t-j} + u_t with
// u_t ~ CN(0, sigma_u). Requires a Schur-stable companion matrix.
inline ChannelSequence generate_ar_oracle(const ComplexMatrix& phi, const ComplexMatrix& sigma_u,
                                          int n_rx, int n_tx, int p, int length,
                                          std::uint64_t seed, const ArOracleOptions& opts = {}) {
    const Eigen::Index mn = static_cast<Eigen::Index>(n_rx) * n_tx;
    if (phi.rows() != mn || phi.cols() != p * mn)
        throw std::invalid_argument("generate_ar_oracle: phi must be MN x p*MN");
    if (sigma_u.rows() != mn || sigma_u.cols() != mn)
        throw std::invalid_argument("generate_ar_oracle: sigma_u must be MN x MN");
    if (length < 1) throw std::invalid_argument("generate_ar_oracle: length must be >= 1");

    const ComplexMatrix a = companion_matrix(phi, p);
    const double radius = spectral_radius(a);
    if (radius >= 1.0)
        throw std::invalid_argument("generate_ar_oracle: unstable AR model (spectral radius " +
                                    std::to_string(radius) + ")");

    const bool noiseless = sigma_u.cwiseAbs().maxCoeff() == 0.0;
    const ComplexMatrix noise_sqrt = noiseless ? ComplexMatrix() : hermitian_sqrt(sigma_u);

    ComplexVector state = ComplexVector::Zero(p * mn);
    if (opts.initial_state) {
        if (opts.initial_state->size() != p * mn)
            throw std::invalid_argument("generate_ar_oracle: initial_state must have length p*MN");
        state = *opts.initial_state;
    }

    Rng rng(seed);
    ChannelSequence seq{n_rx, n_tx, 0.0, seed, {}};
    seq.frames.reserve(length);
    const int total = opts.burn_in + length;
    for (int t = 0; t < total; ++t) {
        ComplexVector next = ComplexVector::Zero(p * mn);
        next.head(mn) = phi * state;
        if (p > 1) next.tail((p - 1) * mn) = state.head((p - 1) * mn);
        if (!noiseless)
            next.head(mn) += noise_sqrt * rng.circular_gaussian_vector(mn);
        state = std::move(next);
        if (t >= opts.burn_in)
            seq.frames.push_back(unvec(state.head(mn), n_rx, n_tx));
    }
    return seq;
}

}  // namespace kpin
