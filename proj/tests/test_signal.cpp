#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "kpin/ar_ssm.hpp"
#include "kpin/channel.hpp"
#include "kpin/signal.hpp"

using namespace kpin;

TEST_CASE("default pilot is sqrt(tau) I and semi-unitary") {
    const ComplexMatrix p2 = make_pilot({2, 2, 1.0, 1.0});
    REQUIRE((p2 - std::sqrt(2.0) * ComplexMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() <
            1e-15);
    REQUIRE((p2 * p2.adjoint() - 2.0 * ComplexMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() <
            1e-12);

    const ComplexMatrix p1 = make_pilot({1, 1, 1.0, 1.0});
    REQUIRE(p1(0, 0) == Complex(1.0));

    const ComplexMatrix p4 = make_pilot({4, 4, 1.0, 1.0});
    REQUIRE((p4 - 2.0 * ComplexMatrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-15);
    REQUIRE((p4 * p4.adjoint() - 4.0 * ComplexMatrix::Identity(4, 4)).cwiseAbs().maxCoeff() <
            1e-12);

    REQUIRE_THROWS_AS(make_pilot({4, 2, 1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("transform_pilot shapes and scaling") {
    SECTION("N=1 collapses the Kronecker factor") {
        const auto q = transform_pilot(make_pilot({2, 2, 1.0, 1.0}), 1.0, 1);
        REQUIRE((q.q - std::sqrt(2.0) * ComplexMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() <
                1e-12);
    }
    SECTION("sqrt(rho tau) scaling of the identity Kronecker") {
        const auto q = transform_pilot(make_pilot({2, 2, 1.0, 1.0}), 4.0, 2);
        REQUIRE((q.q - 2.0 * std::sqrt(2.0) * ComplexMatrix::Identity(4, 4))
                    .cwiseAbs()
                    .maxCoeff() < 1e-12);
    }
    SECTION("shape contract") {
        const auto q = transform_pilot(make_pilot({2, 2, 1.0, 1.0}), 1.0, 3);
        REQUIRE(q.q.rows() == 3 * 2);
        REQUIRE(q.q.cols() == 3 * 2);
    }
    SECTION("semi-unitary column normalization") {
        const auto q = transform_pilot(make_pilot({2, 2, 1.0, 1.0}), 2.5, 3);
        const ComplexMatrix gram = q.q.adjoint() * q.q;
        REQUIRE((gram - 2.5 * 2.0 * ComplexMatrix::Identity(6, 6)).cwiseAbs().maxCoeff() <
                1e-10);
    }
}

TEST_CASE("rho_for_snr pins the SNR convention") {
    REQUIRE(rho_for_snr(0.0, 1.0, make_pilot({1, 1, 1.0, 1.0}), 1.0) == Catch::Approx(1.0));
    REQUIRE(rho_for_snr(20.0, 1.0, make_pilot({2, 2, 1.0, 1.0}), 1.0) == Catch::Approx(50.0));
    REQUIRE(rho_for_snr(10.0, std::sqrt(2.0), make_pilot({1, 1, 1.0, 1.0}), 1.0) ==
            Catch::Approx(20.0));
    REQUIRE_THROWS_AS(rho_for_snr(0.0, 0.0, make_pilot({1, 1, 1.0, 1.0}), 1.0),
                      std::invalid_argument);
}

namespace {

ChannelSequence constant_channel(int n_rx, int n_tx, int length, Complex value) {
    ChannelSequence seq{n_rx, n_tx, 1.0, 0, {}};
    seq.frames.assign(length, ComplexMatrix::Constant(n_rx, n_tx, value));
    return seq;
}

}  // namespace

TEST_CASE("observe is exact without noise and deterministic with it") {
    const auto channels = constant_channel(2, 2, 8, Complex(0.5, -0.25));
    const auto q = transform_pilot(make_pilot({2, 2, 1.0, 1.0}), 2.0, 2);

    const auto clean = observe(channels, q, 0.0, 3);
    for (int t = 0; t < clean.length(); ++t)
        REQUIRE((clean.observations[t] - q.q * vec(channels.frames[t])).cwiseAbs().maxCoeff() ==
                0.0);

    const auto a = observe(channels, q, 1.0, 3);
    const auto b = observe(channels, q, 1.0, 3);
    for (int t = 0; t < a.length(); ++t)
        REQUIRE((a.observations[t] - b.observations[t]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("noise-only observation variance matches sigma_v^2") {
    const auto channels = constant_channel(1, 1, 10000, Complex(0.0, 0.0));
    const auto q = transform_pilot(make_pilot({1, 1, 1.0, 1.0}), 1.0, 1);
    const auto noisy = observe(channels, q, 1.0, 9);
    double acc = 0.0;
    for (const auto& y : noisy.observations) acc += y.squaredNorm();
    REQUIRE(acc / noisy.length() == Catch::Approx(1.0).epsilon(0.05));
}

TEST_CASE("channel and noise are empirically uncorrelated") {
    ComplexMatrix phi(1, 1);
    phi << 0.9;
    ComplexMatrix sigma_u(1, 1);
    sigma_u << 0.19;
    const auto channels = generate_ar_oracle(phi, sigma_u, 1, 1, 1, 20000, 21);
    const auto q = transform_pilot(make_pilot({1, 1, 1.0, 1.0}), 1.0, 1);
    const double sigma_v = 0.5;
    const auto signals = observe(channels, q, sigma_v, 22);
    // Recover the noise realization and cross-correlate with the channel.
    const double t_len = channels.length();
    Complex acc = 0.0;
    double hnorm = 0.0;
    for (int t = 0; t < channels.length(); ++t) {
        const Complex h = channels.frames[t](0, 0);
        const Complex v = signals.observations[t](0) - q.q(0, 0) * h;
        acc += h * std::conj(v);
        hnorm += std::norm(h);
    }
    const double rms_h = std::sqrt(hnorm / t_len);
    REQUIRE(std::abs(acc) / t_len < 5.0 * sigma_v * rms_h / std::sqrt(t_len));
}

TEST_CASE("pilot identifiability: pinv(q) q is the identity") {
    const auto q = transform_pilot(make_pilot({2, 2, 1.0, 1.0}), 3.0, 4);
    const ComplexMatrix eye = pinv(q.q) * q.q;
    REQUIRE((eye - ComplexMatrix::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("measured SNR tracks the requested value") {
    SurrogateChannelParams params;
    const auto channels = generate_surrogate({60.0, 28.0, 1.0}, params, 2, 2, 6000);
    const double sigma_v = 1.0;
    for (double target : {10.0, 20.0}) {
        const ComplexMatrix pilot = make_pilot({2, 2, 1.0, sigma_v});
        const double rho =
            rho_for_snr(target, sigma_v, pilot, channels.mean_entry_power(channels.length()));
        const auto q = transform_pilot(pilot, rho, 2);
        const auto signals = observe(channels, q, sigma_v, 31);
        double sig_power = 0.0;
        for (int t = 0; t < channels.length(); ++t)
            sig_power += (q.q * vec(channels.frames[t])).squaredNorm();
        sig_power /= static_cast<double>(channels.length()) * q.q.rows();
        const double measured_db = 10.0 * std::log10(sig_power / (sigma_v * sigma_v));
        REQUIRE(std::abs(measured_db - target) < 0.5);
    }
}
