#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "kpin/gain_net.hpp"
#include "kpin/rng.hpp"

using namespace kpin;

namespace {

GainFeatures random_features(int obs_dim, int state_dim, std::uint64_t seed) {
    Rng rng(seed);
    return {rng.circular_gaussian_vector(obs_dim), rng.circular_gaussian_vector(state_dim)};
}

// Straight-line scalar-loop re-implementation of the forward pass,
// kept independent of the library path.
ComplexMatrix straight_forward(const KpinNetwork& net, const GainFeatures& f,
                               const RealVector& h_prev) {
    const int ny = net.obs_dim, nx = net.state_dim, nh = net.hidden_dim;
    std::vector<double> in(2 * (ny + nx));
    for (int i = 0; i < ny; ++i) {
        in[i] = f.delta_y(i).real();
        in[ny + i] = f.delta_y(i).imag();
    }
    for (int i = 0; i < nx; ++i) {
        in[2 * ny + i] = f.delta_x(i).real();
        in[2 * ny + nx + i] = f.delta_x(i).imag();
    }
    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    std::vector<double> a1(nh), z(nh), r(nh), n(nh), hn(nh);
    for (int i = 0; i < nh; ++i) {
        double acc = net.b_in(i);
        for (size_t j = 0; j < in.size(); ++j) acc += net.w_in(i, j) * in[j];
        a1[i] = std::tanh(acc);
    }
    for (int i = 0; i < nh; ++i) {
        double az = net.b_z(i), ar = net.b_r(i);
        for (int j = 0; j < nh; ++j) {
            az += net.w_z(i, j) * a1[j] + net.u_z(i, j) * h_prev(j);
            ar += net.w_r(i, j) * a1[j] + net.u_r(i, j) * h_prev(j);
        }
        z[i] = sig(az);
        r[i] = sig(ar);
    }
    for (int i = 0; i < nh; ++i) {
        double an = net.b_n(i);
        for (int j = 0; j < nh; ++j)
            an += net.w_n(i, j) * a1[j] + net.u_n(i, j) * (r[j] * h_prev(j));
        n[i] = std::tanh(an);
        hn[i] = (1.0 - z[i]) * n[i] + z[i] * h_prev(i);
    }
    const int half = nx * ny;
    ComplexMatrix gain(nx, ny);
    for (int c = 0; c < ny; ++c)
        for (int rr = 0; rr < nx; ++rr) {
            double re = net.b_out(c * nx + rr), im = net.b_out(half + c * nx + rr);
            for (int j = 0; j < nh; ++j) {
                re += net.w_out(c * nx + rr, j) * hn[j];
                im += net.w_out(half + c * nx + rr, j) * hn[j];
            }
            gain(rr, c) = Complex(re, im);
        }
    return gain;
}

// Real scalar loss over the complex gain with fixed random coefficients:
// L = sum_ij (alpha_ij Re K_ij + beta_ij Im K_ij) + sum_ij |K_ij|^2.
struct GainLoss {
    RealMatrix alpha, beta;

    static GainLoss random(int rows, int cols, std::uint64_t seed) {
        Rng rng(seed);
        GainLoss l;
        l.alpha = RealMatrix(rows, cols);
        l.beta = RealMatrix(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) {
                l.alpha(i, j) = rng.gaussian();
                l.beta(i, j) = rng.gaussian();
            }
        return l;
    }

    double value(const ComplexMatrix& k) const {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < k.rows(); ++i)
            for (Eigen::Index j = 0; j < k.cols(); ++j)
                acc += alpha(i, j) * k(i, j).real() + beta(i, j) * k(i, j).imag() +
                       std::norm(k(i, j));
        return acc;
    }

    // dL/dRe + j dL/dIm
    ComplexMatrix gradient(const ComplexMatrix& k) const {
        ComplexMatrix g(k.rows(), k.cols());
        for (Eigen::Index i = 0; i < k.rows(); ++i)
            for (Eigen::Index j = 0; j < k.cols(); ++j)
                g(i, j) = Complex(alpha(i, j), beta(i, j)) + 2.0 * k(i, j);
        return g;
    }
};

// Per-entry relative error with the scale floored at 1e-6 of the
// gradient's largest magnitude, so finite-difference roundoff on
// near-zero entries does not register as disagreement.
double max_rel_err(const RealVector& a, const RealVector& b) {
    const double floor = 1e-6 * std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a(i)), std::abs(b(i)), floor, 1e-12});
        worst = std::max(worst, std::abs(a(i) - b(i)) / scale);
    }
    return worst;
}

}  // namespace

TEST_CASE("zero parameters produce a zero gain") {
    KpinNetwork net = make_gain_network(2, 3, 4, 1);
    net.from_vector(RealVector::Zero(net.param_count()));
    const auto feats = random_features(2, 3, 2);
    const auto res = gain_forward(net, feats, net.initial_state());
    REQUIRE(res.gain.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("parameter count matches the declared tensors") {
    const KpinNetwork net = make_gain_network(3, 4, 5, 7);
    const int in = net.in_dim();
    const int h = 5, out = net.out_dim();
    REQUIRE(net.param_count() ==
            h * in + h + 3 * (h * h + h * h + h) + out * h + out);
    REQUIRE(net.to_vector().size() == net.param_count());
}

TEST_CASE("forward matches an independent straight-line implementation") {
    const KpinNetwork net = make_gain_network(2, 3, 4, 11);
    RecurrentState state = net.initial_state();
    Rng rng(13);
    for (int i = 0; i < state.h.size(); ++i) state.h(i) = rng.gaussian();
    const auto feats = random_features(2, 3, 17);
    const auto res = gain_forward(net, feats, state);
    const ComplexMatrix expected = straight_forward(net, feats, state.h);
    REQUIRE((res.gain - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forward is deterministic and shape-correct") {
    const KpinNetwork net = make_gain_network(3, 4, 6, 19);
    const auto feats = random_features(3, 4, 23);
    const auto a = gain_forward(net, feats, net.initial_state());
    const auto b = gain_forward(net, feats, net.initial_state());
    REQUIRE((a.gain - b.gain).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(a.gain.rows() == 4);
    REQUIRE(a.gain.cols() == 3);
    REQUIRE((unvec(vec(a.gain), 4, 3) - a.gain).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("disabled hidden update behaves like a stateless network") {
    const KpinNetwork net = make_gain_network(2, 2, 5, 29);
    RecurrentState state = net.initial_state(false);
    const auto feats_a = random_features(2, 2, 31);
    const auto feats_b = random_features(2, 2, 37);

    const auto first = gain_forward(net, feats_a, state);
    state = first.state;
    const auto intervening = gain_forward(net, feats_b, state);
    state = intervening.state;
    const auto again = gain_forward(net, feats_a, state);
    REQUIRE((first.gain - again.gain).cwiseAbs().maxCoeff() == 0.0);

    // And it matches a pointwise application with a fresh state.
    const auto fresh = gain_forward(net, feats_a, net.initial_state(false));
    REQUIRE((fresh.gain - first.gain).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("enabled hidden update carries state forward") {
    const KpinNetwork net = make_gain_network(2, 2, 5, 41);
    RecurrentState state = net.initial_state(true);
    const auto feats = random_features(2, 2, 43);
    const auto first = gain_forward(net, feats, state);
    const auto second = gain_forward(net, feats, first.state);
    REQUIRE((first.gain - second.gain).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
    const KpinNetwork net = make_gain_network(2, 3, 4, 47);
    const auto feats = random_features(2, 3, 53);
    const auto res = gain_forward(net, feats, net.initial_state());
    const auto back = gain_backward(net, res.tape, ComplexMatrix::Zero(3, 2), RealVector());
    REQUIRE(back.params.to_vector().cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(back.feature_grads.delta_y.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(back.feature_grads.delta_x.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("parameter gradients match central finite differences") {
    KpinNetwork net = make_gain_network(2, 2, 3, 59);
    RecurrentState state = net.initial_state();
    Rng rng(61);
    for (int i = 0; i < state.h.size(); ++i) state.h(i) = 0.3 * rng.gaussian();
    const auto feats = random_features(2, 2, 67);
    const GainLoss loss = GainLoss::random(2, 2, 71);

    const auto res = gain_forward(net, feats, state);
    const auto back = gain_backward(net, res.tape, loss.gradient(res.gain), RealVector());
    const RealVector analytic = back.params.to_vector();

    RealVector params = net.to_vector();
    RealVector numeric(params.size());
    const double step = 1e-5;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        RealVector p = params;
        p(i) += step;
        net.from_vector(p);
        const double up = loss.value(gain_forward(net, feats, state).gain);
        p(i) -= 2 * step;
        net.from_vector(p);
        const double down = loss.value(gain_forward(net, feats, state).gain);
        numeric(i) = (up - down) / (2 * step);
    }
    net.from_vector(params);
    REQUIRE(max_rel_err(analytic, numeric) < 1e-5);
}

TEST_CASE("feature gradients match central finite differences") {
    const KpinNetwork net = make_gain_network(2, 2, 3, 73);
    RecurrentState state = net.initial_state();
    const auto feats = random_features(2, 2, 79);
    const GainLoss loss = GainLoss::random(2, 2, 83);

    const auto res = gain_forward(net, feats, state);
    const auto back = gain_backward(net, res.tape, loss.gradient(res.gain), RealVector());

    const double step = 1e-6;
    auto fd_feature = [&](bool on_delta_y, int idx, bool imag_part) {
        GainFeatures up = feats, down = feats;
        const Complex delta = imag_part ? Complex(0, step) : Complex(step, 0);
        (on_delta_y ? up.delta_y(idx) : up.delta_x(idx)) += delta;
        (on_delta_y ? down.delta_y(idx) : down.delta_x(idx)) -= delta;
        return (loss.value(gain_forward(net, up, state).gain) -
                loss.value(gain_forward(net, down, state).gain)) /
               (2 * step);
    };
    for (int i = 0; i < 2; ++i) {
        REQUIRE(back.feature_grads.delta_y(i).real() ==
                Catch::Approx(fd_feature(true, i, false)).margin(1e-6));
        REQUIRE(back.feature_grads.delta_y(i).imag() ==
                Catch::Approx(fd_feature(true, i, true)).margin(1e-6));
        REQUIRE(back.feature_grads.delta_x(i).real() ==
                Catch::Approx(fd_feature(false, i, false)).margin(1e-6));
        REQUIRE(back.feature_grads.delta_x(i).imag() ==
                Catch::Approx(fd_feature(false, i, true)).margin(1e-6));
    }
}

TEST_CASE("single-step BPTT equals a plain backward call") {
    const KpinNetwork net = make_gain_network(2, 2, 3, 89);
    const auto feats = random_features(2, 2, 97);
    const GainLoss loss = GainLoss::random(2, 2, 101);
    const auto res = gain_forward(net, feats, net.initial_state());
    const auto back = gain_backward(net, res.tape, loss.gradient(res.gain), RealVector());

    std::vector<BpttStep> steps{{&res.tape, loss.gradient(res.gain)}};
    const ParamGradients total = bptt_accumulate(net, steps, true);
    REQUIRE((total.to_vector() - back.params.to_vector()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("two-step BPTT matches finite differences through the hidden chain") {
    KpinNetwork net = make_gain_network(2, 2, 3, 103);
    const auto feats1 = random_features(2, 2, 107);
    const auto feats2 = random_features(2, 2, 109);
    const GainLoss loss1 = GainLoss::random(2, 2, 113);
    const GainLoss loss2 = GainLoss::random(2, 2, 127);

    auto rollout_loss = [&](const KpinNetwork& n) {
        RecurrentState state = n.initial_state(true);
        const auto r1 = gain_forward(n, feats1, state);
        const auto r2 = gain_forward(n, feats2, r1.state);
        return loss1.value(r1.gain) + loss2.value(r2.gain);
    };

    RecurrentState state = net.initial_state(true);
    const auto r1 = gain_forward(net, feats1, state);
    const auto r2 = gain_forward(net, feats2, r1.state);
    std::vector<BpttStep> steps{{&r1.tape, loss1.gradient(r1.gain)},
                                {&r2.tape, loss2.gradient(r2.gain)}};
    const RealVector analytic = bptt_accumulate(net, steps, true).to_vector();

    RealVector params = net.to_vector();
    RealVector numeric(params.size());
    const double step = 1e-5;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        RealVector p = params;
        p(i) += step;
        net.from_vector(p);
        const double up = rollout_loss(net);
        p(i) -= 2 * step;
        net.from_vector(p);
        const double down = rollout_loss(net);
        numeric(i) = (up - down) / (2 * step);
    }
    net.from_vector(params);
    REQUIRE(max_rel_err(analytic, numeric) < 1e-5);
}

TEST_CASE("disabled update decouples the per-step gradients") {
    const KpinNetwork net = make_gain_network(2, 2, 3, 131);
    const auto feats1 = random_features(2, 2, 137);
    const auto feats2 = random_features(2, 2, 139);
    const GainLoss loss1 = GainLoss::random(2, 2, 149);
    const GainLoss loss2 = GainLoss::random(2, 2, 151);

    RecurrentState state = net.initial_state(false);
    const auto r1 = gain_forward(net, feats1, state);
    const auto r2 = gain_forward(net, feats2, r1.state);
    std::vector<BpttStep> steps{{&r1.tape, loss1.gradient(r1.gain)},
                                {&r2.tape, loss2.gradient(r2.gain)}};
    const RealVector coupled = bptt_accumulate(net, steps, false).to_vector();

    const auto b1 = gain_backward(net, r1.tape, loss1.gradient(r1.gain), RealVector());
    const auto b2 = gain_backward(net, r2.tape, loss2.gradient(r2.gain), RealVector());
    const RealVector summed = b1.params.to_vector() + b2.params.to_vector();
    REQUIRE((coupled - summed).cwiseAbs().maxCoeff() < 1e-14);
}
