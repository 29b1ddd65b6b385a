// File formats: binary replay files for channel/signal sequences,
// structured-text model files for the identified AR model, versioned
// binary checkpoints for network parameters, and CSV writers for traces
// and training logs. All binary payloads are little-endian doubles.

#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kpin/ar_ssm.hpp"
#include "kpin/channel.hpp"
#include "kpin/ftp.hpp"
#include "kpin/gain_net.hpp"
#include "kpin/harness.hpp"
#include "kpin/metrics.hpp"
#include "kpin/signal.hpp"

#include <json.hpp>

namespace kpin::io {

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

inline void write_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline double read_f64(std::istream& is) {
    double v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

inline void write_complex_block(std::ostream& os, const ComplexMatrix& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            write_f64(os, m(i, j).real());
            write_f64(os, m(i, j).imag());
        }
}

inline ComplexMatrix read_complex_block(std::istream& is, Eigen::Index rows,
                                        Eigen::Index cols) {
    ComplexMatrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) {
            const double re = read_f64(is);
            const double im = read_f64(is);
            m(i, j) = Complex(re, im);
        }
    return m;
}

inline std::ofstream open_out(const std::string& path, std::ios::openmode mode) {
    std::ofstream os(path, mode);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    return os;
}

inline std::ifstream open_in(const std::string& path, std::ios::openmode mode) {
    std::ifstream is(path, mode);
    if (!is) throw std::runtime_error("cannot open for reading: " + path);
    return is;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Replay file: channel frames plus (optionally) the observed signals.
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kReplayMagic = 0x4b50494e53455131ULL;  // "KPINSEQ1"

struct Replay {
    ChannelSequence channels;
    SignalSequence signals;  // empty observations if none stored
    int tau = 0;

    bool has_signals() const { return !signals.observations.empty(); }
};

inline void save_replay(const std::string& path, const Replay& replay) {
    auto os = detail::open_out(path, std::ios::binary);
    detail::write_u64(os, kReplayMagic);
    const auto& ch = replay.channels;
    detail::write_u64(os, static_cast<std::uint64_t>(ch.n_rx));
    detail::write_u64(os, static_cast<std::uint64_t>(ch.n_tx));
    detail::write_u64(os, static_cast<std::uint64_t>(ch.length()));
    detail::write_f64(os, ch.slot_ms);
    detail::write_u64(os, ch.seed);
    detail::write_u64(os, replay.has_signals() ? 1 : 0);
    detail::write_u64(os, static_cast<std::uint64_t>(replay.tau));
    detail::write_f64(os, replay.signals.sigma_v);
    detail::write_f64(os, replay.signals.rho);
    for (const auto& frame : ch.frames) detail::write_complex_block(os, frame);
    if (replay.has_signals()) {
        if (replay.signals.length() != ch.length())
            throw std::invalid_argument("save_replay: signal/channel length mismatch");
        for (const auto& y : replay.signals.observations)
            detail::write_complex_block(os, y);
    }
    if (!os) throw std::runtime_error("save_replay: write failed: " + path);
}

inline Replay load_replay(const std::string& path) {
    auto is = detail::open_in(path, std::ios::binary);
    if (detail::read_u64(is) != kReplayMagic)
        throw std::runtime_error("load_replay: bad magic in " + path);
    Replay rep;
    rep.channels.n_rx = static_cast<int>(detail::read_u64(is));
    rep.channels.n_tx = static_cast<int>(detail::read_u64(is));
    const auto length = detail::read_u64(is);
    rep.channels.slot_ms = detail::read_f64(is);
    rep.channels.seed = detail::read_u64(is);
    const bool with_signals = detail::read_u64(is) != 0;
    rep.tau = static_cast<int>(detail::read_u64(is));
    rep.signals.sigma_v = detail::read_f64(is);
    rep.signals.rho = detail::read_f64(is);
    rep.channels.frames.reserve(length);
    for (std::uint64_t t = 0; t < length; ++t)
        rep.channels.frames.push_back(
            detail::read_complex_block(is, rep.channels.n_rx, rep.channels.n_tx));
    if (with_signals) {
        const Eigen::Index obs_dim =
            static_cast<Eigen::Index>(rep.tau) * rep.channels.n_rx;
        rep.signals.observations.reserve(length);
        for (std::uint64_t t = 0; t < length; ++t)
            rep.signals.observations.push_back(
                detail::read_complex_block(is, obs_dim, 1).col(0));
    }
    if (!is) throw std::runtime_error("load_replay: truncated file: " + path);
    return rep;
}

// ---------------------------------------------------------------------------
// Model file: the fitted AR model plus the pilot parameters needed to
// rebuild the SSM. Structured text, full double precision.
// ---------------------------------------------------------------------------

struct ModelFile {
    ArModel ar;
    int n_rx = 0;
    int n_tx = 0;
    int tau = 0;
    double rho = 1.0;
    double sigma_v = 1.0;

    Ssm to_ssm() const {
        const TransformedPilot q =
            transform_pilot(make_pilot(PilotConfig{n_tx, tau, rho, sigma_v}), rho, n_rx);
        return build_ssm(ar, q, sigma_v);
    }
};

namespace detail {

inline void write_text_matrix(std::ostream& os, const std::string& name,
                              const ComplexMatrix& m) {
    os << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    os << std::setprecision(17);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) os << ' ';
            os << m(i, j).real() << ' ' << m(i, j).imag();
        }
        os << '\n';
    }
}

inline ComplexMatrix read_text_matrix(std::istream& is, const std::string& expect_name) {
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    if (!(is >> name >> rows >> cols) || name != expect_name)
        throw std::runtime_error("model file: expected matrix '" + expect_name + "'");
    ComplexMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) {
            double re = 0, im = 0;
            if (!(is >> re >> im))
                throw std::runtime_error("model file: truncated matrix " + expect_name);
            m(i, j) = Complex(re, im);
        }
    return m;
}

}  // namespace detail

inline void save_model(const std::string& path, const ModelFile& model) {
    auto os = detail::open_out(path, std::ios::out);
    os << "kpin-model v1\n" << std::setprecision(17);
    os << "p " << model.ar.p << '\n';
    os << "n_rx " << model.n_rx << '\n';
    os << "n_tx " << model.n_tx << '\n';
    os << "tau " << model.tau << '\n';
    os << "rho " << model.rho << '\n';
    os << "sigma_v " << model.sigma_v << '\n';
    os << "epsilon " << model.ar.epsilon << '\n';
    detail::write_text_matrix(os, "phi", model.ar.phi);
    detail::write_text_matrix(os, "sigma_u", model.ar.sigma_u);
    if (!os) throw std::runtime_error("save_model: write failed: " + path);
}

inline ModelFile load_model(const std::string& path) {
    auto is = detail::open_in(path, std::ios::in);
    std::string tag, version;
    is >> tag >> version;
    if (tag != "kpin-model" || version != "v1")
        throw std::runtime_error("load_model: unsupported header in " + path);
    ModelFile model;
    auto read_kv = [&](const std::string& key, auto& value) {
        std::string k;
        if (!(is >> k >> value) || k != key)
            throw std::runtime_error("load_model: expected key '" + key + "'");
    };
    read_kv("p", model.ar.p);
    read_kv("n_rx", model.n_rx);
    read_kv("n_tx", model.n_tx);
    read_kv("tau", model.tau);
    read_kv("rho", model.rho);
    read_kv("sigma_v", model.sigma_v);
    read_kv("epsilon", model.ar.epsilon);
    model.ar.phi = detail::read_text_matrix(is, "phi");
    model.ar.sigma_u = detail::read_text_matrix(is, "sigma_u");
    return model;
}

// ---------------------------------------------------------------------------
// Network checkpoint: versioned binary, header then tensors in declared
// order (the same order as KpinNetwork::to_vector).
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kCheckpointMagic = 0x4b50494e434b5031ULL;  // "KPINCKP1"

struct Checkpoint {
    KpinNetwork net;
    std::uint64_t seed = 0;
    std::uint32_t epoch = 0;
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    auto os = detail::open_out(path, std::ios::binary);
    detail::write_u64(os, kCheckpointMagic);
    detail::write_u64(os, 1);  // version
    detail::write_u64(os, static_cast<std::uint64_t>(ckpt.net.obs_dim));
    detail::write_u64(os, static_cast<std::uint64_t>(ckpt.net.state_dim));
    detail::write_u64(os, static_cast<std::uint64_t>(ckpt.net.hidden_dim));
    detail::write_u64(os, ckpt.seed);
    detail::write_u64(os, ckpt.epoch);
    const RealVector v = ckpt.net.to_vector();
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!os) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    auto is = detail::open_in(path, std::ios::binary);
    if (detail::read_u64(is) != kCheckpointMagic)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    if (detail::read_u64(is) != 1)
        throw std::runtime_error("load_checkpoint: unsupported version in " + path);
    const int obs_dim = static_cast<int>(detail::read_u64(is));
    const int state_dim = static_cast<int>(detail::read_u64(is));
    const int hidden_dim = static_cast<int>(detail::read_u64(is));
    Checkpoint ckpt;
    ckpt.seed = detail::read_u64(is);
    ckpt.epoch = static_cast<std::uint32_t>(detail::read_u64(is));
    ckpt.net = make_gain_network(obs_dim, state_dim, hidden_dim, 0);
    RealVector v(ckpt.net.param_count());
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!is) throw std::runtime_error("load_checkpoint: truncated file: " + path);
    ckpt.net.from_vector(v);
    return ckpt;
}

// ---------------------------------------------------------------------------
// CSV writers.
// ---------------------------------------------------------------------------

inline void save_trace_csv(const std::string& path, const PredictionTrace& trace,
                           bool include_predictions = false) {
    auto os = detail::open_out(path, std::ios::out);
    os << std::setprecision(17);
    os << "t,nse_db";
    if (include_predictions && !trace.records.empty()) {
        for (Eigen::Index i = 0; i < trace.records[0].h_pred.size(); ++i)
            os << ",h" << i << "_re,h" << i << "_im";
    }
    os << '\n';
    for (size_t t = 0; t < trace.records.size(); ++t) {
        const auto& rec = trace.records[t];
        os << t << ',';
        if (std::isnan(rec.nse)) os << "nan";
        else os << to_db(rec.nse);
        if (include_predictions)
            for (Eigen::Index i = 0; i < rec.h_pred.size(); ++i)
                os << ',' << rec.h_pred(i).real() << ',' << rec.h_pred(i).imag();
        os << '\n';
    }
    if (!os) throw std::runtime_error("save_trace_csv: write failed: " + path);
}

inline void save_training_log_csv(const std::string& path,
                                  const std::vector<double>& loss_curve,
                                  const std::vector<double>& epoch_ms) {
    auto os = detail::open_out(path, std::ios::out);
    os << std::setprecision(17);
    os << "epoch,objective,wall_ms\n";
    for (size_t i = 0; i < loss_curve.size(); ++i)
        os << i + 1 << ',' << loss_curve[i] << ','
           << (i < epoch_ms.size() ? epoch_ms[i] : 0.0) << '\n';
    if (!os) throw std::runtime_error("save_training_log_csv: write failed: " + path);
}

// One CSV row per EvalReport; deterministic given config + seeds.
inline void save_eval_reports_csv(const std::string& path,
                                  const std::vector<EvalReport>& reports) {
    auto os = detail::open_out(path, std::ios::out);
    os << std::setprecision(17);
    os << "method,seed,nmse_db,nmse_linear,rate_bits_per_s_per_hz,config_hash\n";
    for (const auto& r : reports)
        os << r.method << ',' << r.seed << ',' << r.nmse_db << ',' << r.nmse_linear << ','
           << r.rate_bits_per_s_per_hz << ',' << r.config_hash << '\n';
    if (!os) throw std::runtime_error("save_eval_reports_csv: write failed: " + path);
}

// JSON sidecar with the fully resolved configuration and per-report
// step-level NSEs.
inline void save_scenario_json(const std::string& path, const ScenarioResult& result) {
    const ScenarioConfig& cfg = result.config;
    nlohmann::json j;
    j["config"] = {
        {"n_rx", cfg.n_rx}, {"n_tx", cfg.n_tx}, {"tau", cfg.tau},
        {"v", cfg.speed_kmh}, {"f", cfg.carrier_ghz}, {"k", cfg.aging_k},
        {"snr_db", cfg.snr_db}, {"p", cfg.p},
        {"T", cfg.t_train}, {"L", cfg.horizon}, {"T_s", cfg.t_s},
        {"n_b", cfg.n_b}, {"n_e", cfg.n_e}, {"lr", cfg.lr}, {"beta", cfg.beta},
        {"epsilon", cfg.epsilon_rel}, {"hidden_dim", cfg.resolved_hidden()},
        {"gru_update", cfg.update_enabled},
        {"channel_kind",
         cfg.channel_kind == ChannelKind::Surrogate ? "surrogate" : "ar_oracle"},
        {"n_paths", cfg.n_paths}, {"power_decay", cfg.power_decay},
        {"rician_k_db", cfg.rician_k_db}, {"seeds", cfg.seeds},
    };
    if (cfg.label_noise) j["config"]["label_noise"] = *cfg.label_noise;
    j["config_text"] = serialize_config(result.config);
    j["config_hash"] = config_hash(result.config);
    j["errors"] = result.errors;
    auto& reports = j["reports"];
    reports = nlohmann::json::array();
    for (const auto& r : result.reports) {
        nlohmann::json jr;
        jr["method"] = r.method;
        jr["seed"] = r.seed;
        jr["nmse_db"] = r.nmse_db;
        jr["nmse_linear"] = r.nmse_linear;
        jr["rate_bits_per_s_per_hz"] = r.rate_bits_per_s_per_hz;
        jr["nse_per_step_db"] = r.nse_per_step_db;
        reports.push_back(std::move(jr));
    }
    auto os = detail::open_out(path, std::ios::out);
    os << j.dump(2) << '\n';
    if (!os) throw std::runtime_error("save_scenario_json: write failed: " + path);
}

inline void save_ablation_csv(const std::string& path, const AblationTable& table) {
    auto os = detail::open_out(path, std::ios::out);
    os << std::setprecision(17);
    os << "axis,value,method,seed,nmse_db,rate_bits_per_s_per_hz,epoch_ms\n";
    for (const auto& row : table.rows)
        os << row.axis << ',' << row.value << ',' << row.method << ',' << row.seed << ','
           << row.nmse_db << ',' << row.rate << ',' << row.epoch_ms << '\n';
    if (!os) throw std::runtime_error("save_ablation_csv: write failed: " + path);
}

}  // namespace kpin::io
