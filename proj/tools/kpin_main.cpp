// Command-line front end: generate channel/signal replays, identify the
// AR/SSM model, train and test the learned-gain predictor, and run full
// scenarios and ablation sweeps.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "kpin/harness.hpp"
#include "kpin/io.hpp"

namespace {

using namespace kpin;

struct ConfigCli {
    std::string config_path;
    std::optional<int> n_rx, n_tx, tau, p, t_train, horizon, t_s, n_b, n_e, hidden_dim,
        n_paths;
    std::optional<double> v, f, k, snr_db, lr, beta, epsilon, power_decay, rician_k_db,
        label_noise;
    std::optional<std::string> channel_kind;
    std::optional<bool> gru_update;
    std::vector<std::uint64_t> seeds;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "scenario config file (key = value)");
        app->add_option("--n-rx", n_rx, "BS antennas N");
        app->add_option("--n-tx", n_tx, "UE antennas M");
        app->add_option("--tau", tau, "pilot length");
        app->add_option("--v", v, "UE speed [km/h]");
        app->add_option("--f", f, "carrier frequency [GHz]");
        app->add_option("--k", k, "dynamic condition (slot in coherence times)");
        app->add_option("--snr-db", snr_db, "pilot SNR [dB]");
        app->add_option("--p", p, "AR order");
        app->add_option("--T", t_train, "training length");
        app->add_option("--L", horizon, "test horizon");
        app->add_option("--T-s", t_s, "subsequence length");
        app->add_option("--n-b", n_b, "batch size (subsequences per epoch)");
        app->add_option("--n-e", n_e, "training epochs");
        app->add_option("--lr", lr, "learning rate");
        app->add_option("--beta", beta, "parameter-norm regularization weight");
        app->add_option("--epsilon", epsilon, "Yule-Walker ridge (relative)");
        app->add_option("--hidden-dim", hidden_dim, "GRU width (0 = 4x input)");
        app->add_option("--channel-kind", channel_kind, "surrogate | ar_oracle");
        app->add_option("--n-paths", n_paths, "surrogate multipath count");
        app->add_option("--power-decay", power_decay, "surrogate power profile exponent");
        app->add_option("--rician-k-db", rician_k_db, "first-path power boost [dB]");
        app->add_option("--label-noise", label_noise, "label pre-processing error level");
        app->add_option("--gru-update", gru_update, "enable GRU hidden-state update");
        app->add_option("--seeds", seeds, "Monte Carlo seeds")->delimiter(',');
    }

    ScenarioConfig resolve() const {
        ScenarioConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        auto set = [](auto& field, const auto& opt) {
            if (opt) field = *opt;
        };
        set(cfg.n_rx, n_rx); set(cfg.n_tx, n_tx); set(cfg.tau, tau);
        set(cfg.speed_kmh, v); set(cfg.carrier_ghz, f); set(cfg.aging_k, k);
        set(cfg.snr_db, snr_db); set(cfg.p, p); set(cfg.t_train, t_train);
        set(cfg.horizon, horizon); set(cfg.t_s, t_s); set(cfg.n_b, n_b);
        set(cfg.n_e, n_e); set(cfg.lr, lr); set(cfg.beta, beta);
        set(cfg.epsilon_rel, epsilon); set(cfg.hidden_dim, hidden_dim);
        set(cfg.n_paths, n_paths); set(cfg.power_decay, power_decay);
        set(cfg.rician_k_db, rician_k_db); set(cfg.update_enabled, gru_update);
        if (label_noise) cfg.label_noise = *label_noise;
        if (channel_kind) {
            if (*channel_kind == "surrogate") cfg.channel_kind = ChannelKind::Surrogate;
            else if (*channel_kind == "ar_oracle") cfg.channel_kind = ChannelKind::ArOracle;
            else throw CLI::ValidationError("--channel-kind", "must be surrogate or ar_oracle");
        }
        if (!seeds.empty()) cfg.seeds = seeds;
        return cfg;
    }
};

Strategy parse_strategy(const std::string& name) {
    if (name == "s1" || name == "S1") return Strategy::S1FilterSupervised;
    if (name == "s2" || name == "S2") return Strategy::S2PredictionSupervised;
    if (name == "s3" || name == "S3" || name == "kpin") return Strategy::S3Unsupervised;
    throw CLI::ValidationError("--strategy", "must be s1, s2 or s3");
}

int cmd_generate(const ConfigCli& cli, const std::string& out) {
    const ScenarioConfig cfg = cli.resolve();
    const std::uint64_t seed = cfg.seeds.front();
    const SeedArtifacts art = prepare_seed(cfg, seed);
    io::Replay replay{art.channels, art.signals, cfg.tau};
    io::save_replay(out, replay);
    std::cout << "wrote " << out << " (" << art.channels.length() << " slots, N="
              << cfg.n_rx << ", M=" << cfg.n_tx << ", rho=" << art.rho
              << ", sigma_v=" << art.sigma_v << ")\n";
    return 0;
}

int cmd_fit(const std::string& input, const std::string& out, int p, double epsilon_rel,
            int t_train) {
    const io::Replay replay = io::load_replay(input);
    if (!replay.has_signals())
        throw std::runtime_error("fit: replay file has no signal sequence");
    const int t_used =
        t_train > 0 ? std::min(t_train, replay.signals.length()) : replay.signals.length();
    const auto pilot = make_pilot(
        PilotConfig{replay.channels.n_tx, replay.tau, replay.signals.rho,
                    replay.signals.sigma_v});
    const auto q = transform_pilot(pilot, replay.signals.rho, replay.channels.n_rx);
    const auto set = channel_autocov_set(replay.signals.slice(0, t_used), q,
                                         replay.signals.sigma_v, p);
    const double epsilon =
        epsilon_rel * set.c_hat[0].trace().real() / replay.channels.mn();
    io::ModelFile model;
    model.ar = fit_ar(set, epsilon);
    model.n_rx = replay.channels.n_rx;
    model.n_tx = replay.channels.n_tx;
    model.tau = replay.tau;
    model.rho = replay.signals.rho;
    model.sigma_v = replay.signals.sigma_v;
    io::save_model(out, model);
    const double radius = spectral_radius(companion_matrix(model.ar.phi, p));
    std::cout << "wrote " << out << " (p=" << p << ", spectral radius " << radius << ")\n";
    return 0;
}

int cmd_train(const std::string& input, const std::string& model_path,
              const std::string& out, const std::string& log_path,
              const std::string& strategy_name, const ConfigCli& cli) {
    const ScenarioConfig cfg = cli.resolve();
    const io::Replay replay = io::load_replay(input);
    if (!replay.has_signals())
        throw std::runtime_error("train: replay file has no signal sequence");
    const io::ModelFile model = io::load_model(model_path);
    const Ssm ssm = model.to_ssm();

    const int t_used = std::min(cfg.t_train, replay.signals.length());
    TrainConfig tc;
    tc.t_s = cfg.t_s;
    tc.n_b = cfg.n_b;
    tc.n_e = cfg.n_e;
    tc.lr = cfg.lr;
    tc.beta = cfg.beta;
    tc.strategy = parse_strategy(strategy_name);
    tc.update_enabled = cfg.update_enabled;
    tc.label_noise = cfg.label_noise;
    tc.seed = cfg.seeds.front();

    KpinNetwork net = make_gain_network(ssm.obs_dim(), ssm.state_dim(),
                                        cfg.resolved_hidden(), mix_seed(tc.seed, 20));
    const bool labeled = tc.strategy != Strategy::S3Unsupervised;
    const ChannelSequence labels =
        labeled ? replay.channels.slice(0, t_used) : ChannelSequence{};
    const TrainResult result = train(replay.signals.slice(0, t_used), ssm, std::move(net),
                                     tc, labeled ? &labels : nullptr);
    io::save_checkpoint(out, {result.net, tc.seed,
                              static_cast<std::uint32_t>(tc.n_e)});
    if (!log_path.empty())
        io::save_training_log_csv(log_path, result.loss_curve, result.epoch_ms);
    std::cout << "wrote " << out << " (objective " << result.loss_curve.front() << " -> "
              << result.loss_curve.back() << " over " << tc.n_e << " epochs)\n";
    return 0;
}

int cmd_test(const std::string& input, const std::string& model_path,
             const std::string& ckpt_path, const std::string& out, int horizon,
             int offset, bool include_predictions) {
    const io::Replay replay = io::load_replay(input);
    if (!replay.has_signals())
        throw std::runtime_error("test: replay file has no signal sequence");
    const io::ModelFile model = io::load_model(model_path);
    const Ssm ssm = model.to_ssm();
    const io::Checkpoint ckpt = io::load_checkpoint(ckpt_path);

    const SignalSequence future = replay.signals.slice(offset,
                                                       replay.signals.length() - offset);
    const int l_used = horizon > 0 ? std::min(horizon, future.length()) : future.length();
    PredictionTrace trace = test_rollout(future, ssm, ckpt.net, l_used);
    std::vector<ComplexMatrix> truth(replay.channels.frames.begin() + offset,
                                     replay.channels.frames.begin() + offset + l_used);
    const auto nses = trace_nse(trace, truth);
    io::save_trace_csv(out, trace, include_predictions);
    std::cout << "wrote " << out << " (L=" << l_used << ", NMSE "
              << to_db(nmse(nses)) << " dB)\n";
    return 0;
}

int cmd_run(const ConfigCli& cli, const std::string& methods_arg,
            const std::string& out_dir, const std::string& format, int jobs) {
    const ScenarioConfig cfg = cli.resolve();
    std::vector<Method> methods;
    std::stringstream ss(methods_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) methods.push_back(parse_method(tok));

    const ScenarioResult result = run_scenario(cfg, methods, jobs);
    for (const auto& err : result.errors) std::cerr << "warning: " << err << "\n";

    std::filesystem::create_directories(out_dir);
    const auto dir = std::filesystem::path(out_dir);
    if (format == "csv" || format == "both") {
        io::save_eval_reports_csv((dir / "results.csv").string(), result.reports);
        std::cout << "wrote " << (dir / "results.csv").string() << "\n";
    }
    if (format == "json" || format == "both") {
        io::save_scenario_json((dir / "results.json").string(), result);
        std::cout << "wrote " << (dir / "results.json").string() << "\n";
    }
    for (const Method m : methods) {
        const auto db = result.nmse_db_for(method_name(m));
        if (!db.empty())
            std::cout << method_name(m) << ": median NMSE " << median(db) << " dB over "
                      << db.size() << " seeds\n";
    }
    return result.errors.empty() ? 0 : 1;
}

int cmd_ablate(const ConfigCli& cli, const std::string& name, const std::string& out_dir,
               const std::string& format, int jobs) {
    const ScenarioConfig cfg = cli.resolve();
    const AblationTable table = run_ablation(name, cfg, jobs);
    std::filesystem::create_directories(out_dir);
    const auto dir = std::filesystem::path(out_dir);
    const std::string csv_path = (dir / (name + ".csv")).string();
    io::save_ablation_csv(csv_path, table);
    std::cout << "wrote " << csv_path << " (" << table.rows.size() << " rows)\n";
    if (format == "json" || format == "both") {
        nlohmann::json j;
        j["ablation"] = name;
        j["config_text"] = serialize_config(cfg);
        j["config_hash"] = config_hash(cfg);
        const std::string json_path = (dir / (name + ".json")).string();
        std::ofstream os(json_path);
        os << j.dump(2) << '\n';
        std::cout << "wrote " << json_path << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid model-based/learned-gain channel prediction toolkit"};
    app.require_subcommand(1);

    ConfigCli gen_cli, train_cli, run_cli, ablate_cli;
    std::string out, input, model_path, ckpt_path, log_path;
    std::string strategy = "s3", methods = "AR,ARKF,KPIN", out_dir = "results";
    std::string format = "csv", ablation_name;
    int fit_p = 2, horizon = 0, offset = 0, t_train = 0, jobs = 0;
    double fit_epsilon = 1e-2;
    bool include_predictions = false;

    auto* generate = app.add_subcommand("generate", "generate a channel/signal replay file");
    gen_cli.attach(generate);
    generate->add_option("--out", out, "output replay file")->required();

    auto* fit = app.add_subcommand("fit", "identify the AR model and SSM from a replay");
    fit->add_option("--input", input, "replay file")->required();
    fit->add_option("--out", model_path, "output model file")->required();
    fit->add_option("--p", fit_p, "AR order");
    fit->add_option("--epsilon", fit_epsilon, "ridge relative to trace(C_all)/(p MN)");
    fit->add_option("--T", t_train, "training prefix length (default: whole file)");

    auto* train_cmd = app.add_subcommand("train", "train the gain network on a replay");
    train_cli.attach(train_cmd);
    train_cmd->add_option("--input", input, "replay file")->required();
    train_cmd->add_option("--model", model_path, "model file from 'fit'")->required();
    train_cmd->add_option("--out", ckpt_path, "output checkpoint")->required();
    train_cmd->add_option("--log", log_path, "training log CSV");
    train_cmd->add_option("--strategy", strategy, "s1 | s2 | s3 (default s3)");

    auto* test_cmd = app.add_subcommand("test", "roll out a trained predictor over a replay");
    test_cmd->add_option("--input", input, "replay file")->required();
    test_cmd->add_option("--model", model_path, "model file")->required();
    test_cmd->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
    test_cmd->add_option("--out", out, "output trace CSV")->required();
    test_cmd->add_option("--L", horizon, "horizon (default: whole file)");
    test_cmd->add_option("--offset", offset, "first slot of the rollout");
    test_cmd->add_flag("--include-predictions", include_predictions,
                       "write predicted entries next to the NSE column");

    auto* run = app.add_subcommand("run", "full scenario: generate, fit, train, evaluate");
    run_cli.attach(run);
    run->add_option("--methods", methods, "comma list: AR,ARKF,KPIN,S1,S2");
    run->add_option("--out-dir", out_dir, "output directory");
    run->add_option("--format", format, "csv | json | both");
    run->add_option("--jobs", jobs, "seed-level worker threads (0 = hardware)");

    auto* ablate = app.add_subcommand("ablate", "named ablation sweep");
    ablate_cli.attach(ablate);
    ablate->add_option("--name", ablation_name,
                       "strategies | gru_update | batch_size | snr_sweep | aging_sweep | "
                       "antenna_sweep | train_length | label_noise")
        ->required();
    ablate->add_option("--out-dir", out_dir, "output directory");
    ablate->add_option("--format", format, "csv | json | both");
    ablate->add_option("--jobs", jobs, "worker threads");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) return cmd_generate(gen_cli, out);
        if (fit->parsed()) return cmd_fit(input, model_path, fit_p, fit_epsilon, t_train);
        if (train_cmd->parsed())
            return cmd_train(input, model_path, ckpt_path, log_path, strategy, train_cli);
        if (test_cmd->parsed())
            return cmd_test(input, model_path, ckpt_path, out, horizon, offset,
                            include_predictions);
        if (run->parsed()) return cmd_run(run_cli, methods, out_dir, format, jobs);
        if (ablate->parsed())
            return cmd_ablate(ablate_cli, ablation_name, out_dir, format, jobs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
