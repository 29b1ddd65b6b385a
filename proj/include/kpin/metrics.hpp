// Evaluation metrics: per-step normalized squared error, horizon NMSE
// (linear mean, dB conversion at the end), zero-forcing precoder and
// the achievable downlink rate.

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "kpin/channel.hpp"
#include "kpin/ftp.hpp"
#include "kpin/numerics.hpp"

namespace kpin {

inline double to_db(double linear) { return 10.0 * std::log10(linear); }

// ||h_true - h_pred||^2 / ||h_true||^2
inline double nse(const ComplexVector& h_true, const ComplexVector& h_pred) {
    const double denom = h_true.squaredNorm();
    if (denom <= 0.0) throw std::invalid_argument("nse: zero true channel");
    if (h_pred.size() != h_true.size())
        throw std::invalid_argument("nse: dimension mismatch");
    return (h_true - h_pred).squaredNorm() / denom;
}

// Arithmetic mean of linear NSEs; never a mean of dB values.
inline double nmse(const std::vector<double>& nses) {
    if (nses.empty()) throw std::invalid_argument("nmse: empty list");
    double acc = 0.0;
    for (double v : nses) acc += v;
    return acc / static_cast<double>(nses.size());
}

// P = (H^H H)^{-1} H^H; requires full column rank (N >= M).
inline ComplexMatrix zf_precoder(const ComplexMatrix& h_pred) {
    if (h_pred.rows() < h_pred.cols())
        throw std::invalid_argument("zf_precoder: need N >= M");
    const ComplexMatrix gram = h_pred.adjoint() * h_pred;
    // solve_hermitian rejects singular/ill-conditioned grams (cond > 1e14),
    // which also covers the rank-deficiency error path.
    return solve_hermitian(gram, ComplexMatrix(h_pred.adjoint()));
}

// log2 det(I_M + rho/(M sigma_v^2) * P H H^H P^H) with the ZF precoder
// computed from the same predicted channel matrix.
inline double achievable_rate(const ComplexMatrix& h_pred, double rho, double sigma_v,
                              int n_tx) {
    if (n_tx != h_pred.cols())
        throw std::invalid_argument("achievable_rate: M mismatch");
    if (sigma_v <= 0.0) throw std::invalid_argument("achievable_rate: sigma_v must be positive");
    const ComplexMatrix p = zf_precoder(h_pred);
    const ComplexMatrix ph = p * h_pred;
    const double scale = rho / (n_tx * sigma_v * sigma_v);
    const ComplexMatrix inside =
        ComplexMatrix::Identity(n_tx, n_tx) + scale * ph * ph.adjoint();
    const Complex det = Eigen::PartialPivLU<ComplexMatrix>(inside).determinant();
    return std::log2(std::abs(det));
}

// Fills per-record NSEs of a prediction trace against aligned truth
// frames (truth[i] is the frame record i predicts) and returns them.
inline std::vector<double> trace_nse(PredictionTrace& trace,
                                     const std::vector<ComplexMatrix>& truth) {
    if (truth.size() < trace.records.size())
        throw std::invalid_argument("trace_nse: not enough truth frames");
    std::vector<double> out;
    out.reserve(trace.records.size());
    for (size_t i = 0; i < trace.records.size(); ++i) {
        const double v = nse(vec(truth[i]), trace.records[i].h_pred);
        trace.records[i].nse = v;
        out.push_back(v);
    }
    return out;
}

struct EvalReport {
    std::string method;
    std::uint64_t seed = 0;
    std::vector<double> nse_per_step_db;
    double nmse_linear = 0.0;
    double nmse_db = 0.0;
    double rate_bits_per_s_per_hz = 0.0;
    std::string config_hash;
};

inline EvalReport make_eval_report(std::string method, std::uint64_t seed,
                                   const std::vector<double>& nses_linear, double rate,
                                   std::string config_hash) {
    EvalReport rep;
    rep.method = std::move(method);
    rep.seed = seed;
    rep.nse_per_step_db.reserve(nses_linear.size());
    for (double v : nses_linear) rep.nse_per_step_db.push_back(to_db(v));
    rep.nmse_linear = nmse(nses_linear);
    rep.nmse_db = to_db(rep.nmse_linear);
    rep.rate_bits_per_s_per_hz = rate;
    rep.config_hash = std::move(config_hash);
    return rep;
}

}  // namespace kpin
