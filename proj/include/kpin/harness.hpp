// Experiment orchestration: scenario configuration (file + programmatic),
// per-seed end-to-end pipelines, Monte Carlo scenario runs over a worker
// pool, and the named ablation sweeps.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "kpin/ar_ssm.hpp"
#include "kpin/channel.hpp"
#include "kpin/ftp.hpp"
#include "kpin/gain_net.hpp"
#include "kpin/metrics.hpp"
#include "kpin/signal.hpp"
#include "kpin/training.hpp"

namespace kpin {

enum class Method { AR, ARKF, KPIN, S1, S2 };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::AR: return "AR";
        case Method::ARKF: return "ARKF";
        case Method::KPIN: return "KPIN";
        case Method::S1: return "S1";
        case Method::S2: return "S2";
    }
    throw std::logic_error("method_name: unknown method");
}

inline Method parse_method(const std::string& name) {
    if (name == "AR" || name == "ar") return Method::AR;
    if (name == "ARKF" || name == "arkf") return Method::ARKF;
    if (name == "KPIN" || name == "kpin" || name == "S3" || name == "s3") return Method::KPIN;
    if (name == "S1" || name == "s1") return Method::S1;
    if (name == "S2" || name == "s2") return Method::S2;
    throw std::invalid_argument("unknown method: " + name);
}

enum class ChannelKind { Surrogate, ArOracle };

// Every physical and training knob of one experiment. Defaults are the
// desk-scale baseline; the full-scale configuration remains reachable
// through the same fields.
struct ScenarioConfig {
    int n_rx = 4;
    int n_tx = 2;
    int tau = 2;
    double speed_kmh = 60.0;
    double carrier_ghz = 28.0;
    double aging_k = 1.0;
    double snr_db = 20.0;
    int p = 2;
    int t_train = 400;  // T
    int horizon = 50;   // L
    // Truncated-BPTT window and batch. 20-slot subsequences are the
    // shortest that reliably teach a gain that stays stable over long
    // continuous test rollouts; n_b keeps the per-epoch signal volume at
    // about a quarter of the training prefix.
    int t_s = 20;
    int n_b = 5;
    int n_e = 300;
    double lr = 5e-4;
    double beta = 1e-5;
    // Diagonal Yule-Walker shift relative to trace(C_all)/(p*MN). The
    // desk-scale default is far above the library default: the surrogate
    // channel has a line spectrum, so the short-sample block-Toeplitz
    // system is near-singular and the fitted model lands on the unit
    // circle without a stronger ridge.
    double epsilon_rel = 1e-2;
    int hidden_dim = 0;         // 0 = default 4 * in_dim
    bool update_enabled = true;
    ChannelKind channel_kind = ChannelKind::Surrogate;
    std::optional<double> label_noise;
    // surrogate channel knobs
    int n_paths = 12;
    double power_decay = 0.6;
    double rician_k_db = 0.0;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

    int mn() const { return n_rx * n_tx; }
    int obs_dim() const { return tau * n_rx; }
    int state_dim() const { return p * mn(); }
    int resolved_hidden() const {
        return hidden_dim > 0 ? hidden_dim : 4 * 2 * (obs_dim() + state_dim());
    }
    DynamicCondition condition() const { return {speed_kmh, carrier_ghz, aging_k}; }
};

// ---------------------------------------------------------------------------
// Config file (flat key = value with [sections]; sections are cosmetic).
// ---------------------------------------------------------------------------

inline std::string serialize_config(const ScenarioConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "[scenario]\n";
    os << "n_rx = " << cfg.n_rx << "\n";
    os << "n_tx = " << cfg.n_tx << "\n";
    os << "tau = " << cfg.tau << "\n";
    os << "v = " << cfg.speed_kmh << "\n";
    os << "f = " << cfg.carrier_ghz << "\n";
    os << "k = " << cfg.aging_k << "\n";
    os << "snr_db = " << cfg.snr_db << "\n";
    os << "p = " << cfg.p << "\n";
    os << "T = " << cfg.t_train << "\n";
    os << "L = " << cfg.horizon << "\n";
    os << "channel_kind = "
       << (cfg.channel_kind == ChannelKind::Surrogate ? "surrogate" : "ar_oracle") << "\n";
    os << "n_paths = " << cfg.n_paths << "\n";
    os << "power_decay = " << cfg.power_decay << "\n";
    os << "rician_k_db = " << cfg.rician_k_db << "\n";
    os << "[training]\n";
    os << "T_s = " << cfg.t_s << "\n";
    os << "n_b = " << cfg.n_b << "\n";
    os << "n_e = " << cfg.n_e << "\n";
    os << "lr = " << cfg.lr << "\n";
    os << "beta = " << cfg.beta << "\n";
    os << "epsilon = " << cfg.epsilon_rel << "\n";
    os << "hidden_dim = " << cfg.hidden_dim << "\n";
    os << "gru_update = " << (cfg.update_enabled ? 1 : 0) << "\n";
    if (cfg.label_noise) os << "label_noise = " << *cfg.label_noise << "\n";
    os << "seeds =";
    for (auto s : cfg.seeds) os << ' ' << s;
    os << "\n";
    return os.str();
}

inline void apply_config_entry(ScenarioConfig& cfg, const std::string& key,
                               const std::string& value) {
    std::istringstream vs(value);
    auto num = [&](auto& field) {
        if (!(vs >> field)) throw std::invalid_argument("bad value for " + key);
    };
    if (key == "n_rx") num(cfg.n_rx);
    else if (key == "n_tx") num(cfg.n_tx);
    else if (key == "tau") num(cfg.tau);
    else if (key == "v") num(cfg.speed_kmh);
    else if (key == "f") num(cfg.carrier_ghz);
    else if (key == "k") num(cfg.aging_k);
    else if (key == "snr_db") num(cfg.snr_db);
    else if (key == "p") num(cfg.p);
    else if (key == "T") num(cfg.t_train);
    else if (key == "L") num(cfg.horizon);
    else if (key == "T_s") num(cfg.t_s);
    else if (key == "n_b") num(cfg.n_b);
    else if (key == "n_e") num(cfg.n_e);
    else if (key == "lr") num(cfg.lr);
    else if (key == "beta") num(cfg.beta);
    else if (key == "epsilon") num(cfg.epsilon_rel);
    else if (key == "hidden_dim") num(cfg.hidden_dim);
    else if (key == "n_paths") num(cfg.n_paths);
    else if (key == "power_decay") num(cfg.power_decay);
    else if (key == "rician_k_db") num(cfg.rician_k_db);
    else if (key == "gru_update") { int v = 1; num(v); cfg.update_enabled = v != 0; }
    else if (key == "label_noise") { double v = 0; num(v); cfg.label_noise = v; }
    else if (key == "channel_kind") {
        if (value == "surrogate") cfg.channel_kind = ChannelKind::Surrogate;
        else if (value == "ar_oracle") cfg.channel_kind = ChannelKind::ArOracle;
        else throw std::invalid_argument("unknown channel_kind: " + value);
    } else if (key == "seeds") {
        cfg.seeds.clear();
        std::uint64_t s = 0;
        while (vs >> s) cfg.seeds.push_back(s);
        if (cfg.seeds.empty()) throw std::invalid_argument("seeds list is empty");
    } else {
        throw std::invalid_argument("unknown config key: " + key);
    }
}

inline ScenarioConfig parse_config_text(const std::string& text) {
    ScenarioConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty() || line.front() == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line without '=': " + line);
        apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_config_text(buf.str());
}

inline std::string config_hash(const ScenarioConfig& cfg) {
    const std::string text = serialize_config(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

// ---------------------------------------------------------------------------
// Per-seed pipeline.
// ---------------------------------------------------------------------------

struct SeedArtifacts {
    ChannelSequence channels;  // T + L frames
    SignalSequence signals;
    TransformedPilot pilot;
    ArModel ar;
    Ssm ssm;
    ComplexMatrix c0;  // identified lag-zero channel autocovariance
    double rho = 1.0;
    double sigma_v = 1.0;
};

namespace detail {

// Random stable AR channel model for the ar_oracle kind: raw complex
// coefficient blocks rescaled so the companion spectral radius is 0.9
// (phi_j -> s^j phi_j scales the spectrum by s).
inline std::pair<ComplexMatrix, ComplexMatrix> random_stable_ar(int mn, int p,
                                                                std::uint64_t seed) {
    Rng rng(seed);
    ComplexMatrix phi(mn, p * mn);
    for (Eigen::Index i = 0; i < phi.rows(); ++i)
        for (Eigen::Index j = 0; j < phi.cols(); ++j)
            phi(i, j) = rng.circular_gaussian(1.0 / std::sqrt(static_cast<double>(p * mn)));
    const double radius = spectral_radius(companion_matrix(phi, p));
    const double scale = 0.9 / radius;
    for (int j = 1; j <= p; ++j)
        phi.middleCols((j - 1) * mn, mn) *= std::pow(scale, j);
    ComplexMatrix sigma_u = 0.1 * ComplexMatrix::Identity(mn, mn);
    return {phi, sigma_u};
}

}  // namespace detail

inline ChannelSequence make_scenario_channel(const ScenarioConfig& cfg, std::uint64_t seed,
                                             int length) {
    if (cfg.channel_kind == ChannelKind::Surrogate) {
        SurrogateChannelParams params;
        params.n_paths = cfg.n_paths;
        params.power_decay = cfg.power_decay;
        params.rician_k_db = cfg.rician_k_db;
        params.angle_seed = mix_seed(seed, 10);
        params.phase_seed = mix_seed(seed, 11);
        return generate_surrogate(cfg.condition(), params, cfg.n_rx, cfg.n_tx, length);
    }
    auto [phi, sigma_u] = detail::random_stable_ar(cfg.mn(), cfg.p, mix_seed(seed, 12));
    return generate_ar_oracle(phi, sigma_u, cfg.n_rx, cfg.n_tx, cfg.p, length, mix_seed(seed, 13));
}

// Generate, observe and identify: everything every method shares. The
// absolute signal scale is normalized to unit transmit power (rho = 1)
// by deriving the noise level from the requested SNR; only the ratio is
// physical, and unit-scale observations keep the learned-gain loop and
// the network features well conditioned.
inline SeedArtifacts prepare_seed(const ScenarioConfig& cfg, std::uint64_t seed) {
    SeedArtifacts art;
    const int total = cfg.t_train + cfg.horizon;
    art.channels = make_scenario_channel(cfg, seed, total);

    const double ref_power = art.channels.mean_entry_power(cfg.t_train);
    art.sigma_v =
        std::sqrt(cfg.tau * ref_power * std::pow(10.0, -cfg.snr_db / 10.0));
    const ComplexMatrix pilot = make_pilot(PilotConfig{cfg.n_tx, cfg.tau, 1.0, art.sigma_v});
    art.rho = rho_for_snr(cfg.snr_db, art.sigma_v, pilot, ref_power);
    art.pilot = transform_pilot(pilot, art.rho, cfg.n_rx);
    art.signals = observe(art.channels, art.pilot, art.sigma_v, mix_seed(seed, 14));

    const SignalSequence train_signals = art.signals.slice(0, cfg.t_train);
    const AutocovarianceSet acset =
        channel_autocov_set(train_signals, art.pilot, art.sigma_v, cfg.p);
    art.c0 = acset.c_hat[0];
    const double epsilon = cfg.epsilon_rel * art.c0.trace().real() / cfg.mn();
    art.ar = fit_ar(acset, epsilon);
    art.ssm = build_ssm(art.ar, art.pilot, art.sigma_v);
    return art;
}

struct MethodRun {
    PredictionTrace trace;          // predictions for slots T+1..T+L
    std::vector<double> nses;       // linear, per step
    double nmse_linear = 0.0;
    double rate = 0.0;
    double mean_epoch_ms = 0.0;
    std::vector<double> loss_curve;
};

inline Strategy method_strategy(Method m) {
    switch (m) {
        case Method::S1: return Strategy::S1FilterSupervised;
        case Method::S2: return Strategy::S2PredictionSupervised;
        default: return Strategy::S3Unsupervised;
    }
}

// Keeps only the last `count` records of a trace.
inline PredictionTrace trace_tail(PredictionTrace trace, int count) {
    if (count > trace.length())
        throw std::invalid_argument("trace_tail: trace shorter than requested tail");
    trace.records.erase(trace.records.begin(), trace.records.end() - count);
    return trace;
}

inline MethodRun run_method(Method method, const ScenarioConfig& cfg,
                            const SeedArtifacts& art, std::uint64_t seed) {
    MethodRun run;
    const int t_train = cfg.t_train;
    const int horizon = cfg.horizon;
    const int total = t_train + horizon;

    switch (method) {
        case Method::AR: {
            // Baselines receive ground-truth context frames (the paper's
            // protocol); prediction i targets frame T+i.
            const ChannelSequence context = art.channels.slice(t_train - cfg.p, cfg.p + horizon);
            run.trace = ar_predict(context, art.ar, horizon);
            break;
        }
        case Method::ARKF: {
            // Signal-driven predictors run one continuous rollout from the
            // start of the training prefix so the test-horizon records are
            // produced by a converged filter; only the tail is evaluated.
            run.trace = trace_tail(arkf_predict(art.signals, art.ssm,
                                                kf_initial_state(art.ssm, art.c0), total),
                                   horizon);
            break;
        }
        case Method::KPIN:
        case Method::S1:
        case Method::S2: {
            KpinNetwork net = make_gain_network(cfg.obs_dim(), cfg.state_dim(),
                                                cfg.resolved_hidden(), mix_seed(seed, 20));
            TrainConfig tc;
            tc.t_s = cfg.t_s;
            tc.n_b = cfg.n_b;
            tc.n_e = cfg.n_e;
            tc.lr = cfg.lr;
            tc.beta = cfg.beta;
            tc.strategy = method_strategy(method);
            tc.update_enabled = cfg.update_enabled;
            tc.seed = mix_seed(seed, 21);
            const bool labeled = method != Method::KPIN;
            if (labeled) tc.label_noise = cfg.label_noise;
            const ChannelSequence labels =
                labeled ? art.channels.slice(0, t_train) : ChannelSequence{};
            TrainResult tr = train(art.signals.slice(0, t_train), art.ssm, std::move(net), tc,
                                   labeled ? &labels : nullptr);
            run.loss_curve = tr.loss_curve;
            if (!tr.epoch_ms.empty())
                run.mean_epoch_ms =
                    std::accumulate(tr.epoch_ms.begin(), tr.epoch_ms.end(), 0.0) /
                    static_cast<double>(tr.epoch_ms.size());
            run.trace = trace_tail(
                test_rollout(art.signals, art.ssm, tr.net, total, cfg.update_enabled), horizon);
            break;
        }
    }

    std::vector<ComplexMatrix> truth(art.channels.frames.begin() + t_train,
                                     art.channels.frames.begin() + t_train + horizon);
    run.nses = trace_nse(run.trace, truth);
    run.nmse_linear = nmse(run.nses);

    // Per-slot achievable rate from each predicted channel matrix; slots
    // whose prediction is rank-deficient (e.g. the cold-start zero
    // prediction) are skipped.
    double rate_acc = 0.0;
    int rate_count = 0;
    for (const auto& rec : run.trace.records) {
        try {
            rate_acc += achievable_rate(unvec(rec.h_pred, cfg.n_rx, cfg.n_tx), art.rho,
                                        art.sigma_v, cfg.n_tx);
            ++rate_count;
        } catch (const std::exception&) {
        }
    }
    run.rate = rate_count > 0 ? rate_acc / rate_count : 0.0;
    return run;
}

// ---------------------------------------------------------------------------
// Scenario runs (Monte Carlo over seeds) and ablations.
// ---------------------------------------------------------------------------

struct ScenarioResult {
    ScenarioConfig config;
    std::vector<EvalReport> reports;  // ordered by method, then seed
    std::vector<std::string> errors;  // per-seed diagnostics

    std::vector<double> nmse_db_for(const std::string& method) const {
        std::vector<double> out;
        for (const auto& r : reports)
            if (r.method == method) out.push_back(r.nmse_db);
        return out;
    }
};

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median: empty");
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline ScenarioResult run_scenario(const ScenarioConfig& cfg, const std::vector<Method>& methods,
                                   int jobs = 0) {
    struct SeedOutcome {
        std::vector<EvalReport> reports;
        std::string error;
    };
    const std::string hash = config_hash(cfg);
    auto run_one_seed = [&](std::uint64_t seed) -> SeedOutcome {
        SeedOutcome out;
        try {
            const SeedArtifacts art = prepare_seed(cfg, seed);
            for (Method m : methods) {
                MethodRun run = run_method(m, cfg, art, seed);
                out.reports.push_back(
                    make_eval_report(method_name(m), seed, run.nses, run.rate, hash));
            }
        } catch (const std::exception& e) {
            out.error = "seed " + std::to_string(seed) + ": " + e.what();
        }
        return out;
    };

    const int n_seeds = static_cast<int>(cfg.seeds.size());
    int workers = jobs > 0 ? jobs : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::max(1, std::min(workers, n_seeds));

    std::vector<SeedOutcome> outcomes(n_seeds);
    if (workers <= 1) {
        for (int i = 0; i < n_seeds; ++i) outcomes[i] = run_one_seed(cfg.seeds[i]);
    } else {
        std::vector<std::future<SeedOutcome>> futures;
        futures.reserve(n_seeds);
        for (int i = 0; i < n_seeds; ++i)
            futures.push_back(std::async(std::launch::async | std::launch::deferred,
                                         run_one_seed, cfg.seeds[i]));
        for (int i = 0; i < n_seeds; ++i) outcomes[i] = futures[i].get();
    }

    ScenarioResult result;
    result.config = cfg;
    // Deterministic reduction: method-major, seed order as configured.
    for (size_t mi = 0; mi < methods.size(); ++mi)
        for (int si = 0; si < n_seeds; ++si)
            if (outcomes[si].error.empty())
                result.reports.push_back(outcomes[si].reports[mi]);
    for (const auto& o : outcomes)
        if (!o.error.empty()) result.errors.push_back(o.error);
    return result;
}

struct AblationRow {
    std::string axis;
    double value = 0.0;
    std::string method;
    std::uint64_t seed = 0;
    double nmse_db = 0.0;
    double rate = 0.0;
    double epoch_ms = 0.0;
};

struct AblationTable {
    std::string name;
    std::vector<AblationRow> rows;
};

namespace detail {

inline void append_scenario_rows(AblationTable& table, const std::string& axis, double value,
                                 const ScenarioConfig& cfg, const std::vector<Method>& methods,
                                 int jobs) {
    for (std::uint64_t seed : cfg.seeds) {
        ScenarioConfig one = cfg;
        one.seeds = {seed};
        (void)jobs;
        const SeedArtifacts art = prepare_seed(one, seed);
        for (Method m : methods) {
            MethodRun run = run_method(m, one, art, seed);
            table.rows.push_back({axis, value, method_name(m), seed, to_db(run.nmse_linear),
                                  run.rate, run.mean_epoch_ms});
        }
    }
}

}  // namespace detail

// Named ablation sweeps with desk-scale grids. Output is a long-format
// table (axis value, method, seed, nmse_db, rate, epoch_ms).
inline AblationTable run_ablation(const std::string& name, const ScenarioConfig& base,
                                  int jobs = 0) {
    AblationTable table;
    table.name = name;
    const std::vector<Method> compare = {Method::AR, Method::ARKF, Method::KPIN};

    if (name == "strategies") {
        for (Method m : {Method::ARKF, Method::S1, Method::S2, Method::KPIN}) {
            const double value = m == Method::ARKF ? 0 : (m == Method::S1 ? 1 : (m == Method::S2 ? 2 : 3));
            detail::append_scenario_rows(table, "strategy", value, base, {m}, jobs);
        }
    } else if (name == "gru_update") {
        for (std::uint64_t seed : base.seeds) {
            for (bool update : {true, false}) {
                ScenarioConfig cfg = base;
                cfg.update_enabled = update;
                const SeedArtifacts art = prepare_seed(cfg, seed);
                MethodRun run = run_method(Method::KPIN, cfg, art, seed);
                for (int horizon : {10, 25, 50}) {
                    const int h = std::min(horizon, static_cast<int>(run.nses.size()));
                    const std::vector<double> head(run.nses.begin(), run.nses.begin() + h);
                    table.rows.push_back({"horizon", static_cast<double>(horizon),
                                          update ? "kpin_gru_on" : "kpin_gru_off", seed,
                                          to_db(nmse(head)), run.rate, run.mean_epoch_ms});
                }
            }
        }
    } else if (name == "batch_size") {
        for (int n_b : {1, 5, 10, 20}) {
            ScenarioConfig cfg = base;
            cfg.n_b = n_b;
            detail::append_scenario_rows(table, "n_b", n_b, cfg, {Method::KPIN}, jobs);
        }
    } else if (name == "snr_sweep") {
        for (double snr : {14.0, 18.0, 22.0}) {
            ScenarioConfig cfg = base;
            cfg.snr_db = snr;
            detail::append_scenario_rows(table, "snr_db", snr, cfg, compare, jobs);
        }
    } else if (name == "aging_sweep") {
        for (double k : {0.5, 1.0, 2.0}) {
            ScenarioConfig cfg = base;
            cfg.aging_k = k;
            detail::append_scenario_rows(table, "k", k, cfg, compare, jobs);
        }
    } else if (name == "antenna_sweep") {
        for (int n : {2, 4, 8}) {
            ScenarioConfig cfg = base;
            cfg.n_rx = n;
            detail::append_scenario_rows(table, "n_rx", n, cfg, compare, jobs);
        }
    } else if (name == "train_length") {
        for (int t : {200, 400, 800}) {
            ScenarioConfig cfg = base;
            cfg.t_train = t;
            detail::append_scenario_rows(table, "T", t, cfg, compare, jobs);
        }
    } else if (name == "label_noise") {
        for (double level : {0.0, 0.05, 0.1}) {
            ScenarioConfig cfg = base;
            if (level > 0.0) cfg.label_noise = level;
            for (Method m : {Method::S1, Method::S2, Method::KPIN})
                detail::append_scenario_rows(table, "noise_level", level, cfg, {m}, jobs);
        }
    } else {
        throw std::invalid_argument("unknown ablation: " + name);
    }
    return table;
}

}  // namespace kpin
