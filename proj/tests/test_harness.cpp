#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "kpin/harness.hpp"
#include "kpin/io.hpp"

using namespace kpin;

namespace {

ScenarioConfig tiny_config() {
    ScenarioConfig cfg;
    cfg.n_rx = 2;
    cfg.n_tx = 1;
    cfg.tau = 1;
    cfg.p = 1;
    cfg.t_train = 80;
    cfg.horizon = 20;
    cfg.t_s = 10;
    cfg.n_b = 4;
    cfg.n_e = 3;
    cfg.seeds = {1, 2};
    return cfg;
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("config serialize/parse round trip and hash stability") {
    ScenarioConfig cfg = tiny_config();
    cfg.label_noise = 0.1;
    cfg.channel_kind = ChannelKind::ArOracle;
    const std::string text = serialize_config(cfg);
    const ScenarioConfig parsed = parse_config_text(text);
    REQUIRE(serialize_config(parsed) == text);
    REQUIRE(config_hash(parsed) == config_hash(cfg));

    ScenarioConfig other = cfg;
    other.snr_db = 15.0;
    REQUIRE(config_hash(other) != config_hash(cfg));
}

TEST_CASE("config parser rejects unknown keys and empty seeds") {
    REQUIRE_THROWS_AS(parse_config_text("bogus_key = 1\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(parse_config_text("seeds =\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(parse_config_text("channel_kind = quadriga\n"), std::invalid_argument);
    const ScenarioConfig cfg =
        parse_config_text("# comment\n[scenario]\nn_rx = 8 ; trailing comment\n");
    REQUIRE(cfg.n_rx == 8);
}

TEST_CASE("duplicate seeds produce identical report rows") {
    ScenarioConfig cfg = tiny_config();
    cfg.seeds = {7, 7};
    const ScenarioResult result = run_scenario(cfg, {Method::AR, Method::ARKF}, 1);
    REQUIRE(result.errors.empty());
    REQUIRE(result.reports.size() == 4);
    for (size_t i = 0; i < result.reports.size(); i += 2) {
        REQUIRE(result.reports[i].nmse_db == result.reports[i + 1].nmse_db);
        REQUIRE(result.reports[i].rate_bits_per_s_per_hz ==
                result.reports[i + 1].rate_bits_per_s_per_hz);
    }
}

TEST_CASE("scenario results regenerate byte-identically") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "kpin_harness_repro";
    fs::create_directories(dir);
    ScenarioConfig cfg = tiny_config();
    const auto run_once = [&](const std::string& name) {
        const ScenarioResult result = run_scenario(cfg, {Method::AR, Method::ARKF}, 2);
        const std::string path = (dir / name).string();
        io::save_eval_reports_csv(path, result.reports);
        return read_file(path);
    };
    REQUIRE(run_once("a.csv") == run_once("b.csv"));
    fs::remove_all(dir);
}

TEST_CASE("matched-order AR run lands on the realized-noise NMSE") {
    // ar_oracle channel with a matched fit: the AR baseline's residual is
    // the realized process noise. The exact oracle is the mean of
    // ||u_t||^2/||h_t||^2 with u_t recovered from the true recursion;
    // the trace(sigma_u)/E||h||^2 closed form is its ratio-of-means
    // approximation and only agrees in the large-MN concentration limit.
    ScenarioConfig cfg;
    cfg.n_rx = 2;
    cfg.n_tx = 1;
    cfg.tau = 1;
    cfg.p = 1;
    cfg.t_train = 20000;
    cfg.horizon = 2000;
    cfg.snr_db = 40.0;
    cfg.epsilon_rel = 1e-9;
    cfg.channel_kind = ChannelKind::ArOracle;
    cfg.seeds = {3};

    const SeedArtifacts art = prepare_seed(cfg, 3);
    const MethodRun run = run_method(Method::AR, cfg, art, 3);

    // Realized-noise oracle from the generating model (regenerated via
    // the same seed derivation the harness uses).
    const auto [phi, sigma_u] = detail::random_stable_ar(2, 1, mix_seed(3, 12));
    std::vector<double> oracle_nses;
    for (int t = cfg.t_train; t < cfg.t_train + cfg.horizon; ++t) {
        const ComplexVector u =
            vec(art.channels.frames[t]) - phi * vec(art.channels.frames[t - 1]);
        oracle_nses.push_back(u.squaredNorm() / vec(art.channels.frames[t]).squaredNorm());
    }
    REQUIRE(run.nmse_linear == Catch::Approx(nmse(oracle_nses)).epsilon(0.05));
}

TEST_CASE("untrained network cannot beat the matched-model filter") {
    ScenarioConfig cfg = tiny_config();
    cfg.n_e = 0;  // keep the freshly initialized (near-open-loop) gain
    cfg.seeds = {5};
    const SeedArtifacts art = prepare_seed(cfg, 5);
    const MethodRun arkf = run_method(Method::ARKF, cfg, art, 5);
    const MethodRun kpin = run_method(Method::KPIN, cfg, art, 5);
    REQUIRE(kpin.nmse_linear >= arkf.nmse_linear);
}

TEST_CASE("supervised training never reads test-horizon ground truth") {
    ScenarioConfig cfg = tiny_config();
    cfg.seeds = {9};
    SeedArtifacts art = prepare_seed(cfg, 9);

    SeedArtifacts corrupted = art;
    for (int t = cfg.t_train; t < cfg.t_train + cfg.horizon; ++t)
        corrupted.channels.frames[t] *= 3.0;  // test-horizon truth only

    const MethodRun a = run_method(Method::S2, cfg, art, 9);
    const MethodRun b = run_method(Method::S2, cfg, corrupted, 9);
    REQUIRE(a.loss_curve.size() == b.loss_curve.size());
    for (size_t i = 0; i < a.loss_curve.size(); ++i)
        REQUIRE(a.loss_curve[i] == b.loss_curve[i]);
    // Predictions are identical too; only the evaluated NSEs differ.
    for (int t = 0; t < a.trace.length(); ++t)
        REQUIRE((a.trace.records[t].h_pred - b.trace.records[t].h_pred)
                    .cwiseAbs()
                    .maxCoeff() == 0.0);
    REQUIRE(a.nmse_linear != b.nmse_linear);
}

TEST_CASE("unknown ablation name is rejected") {
    REQUIRE_THROWS_AS(run_ablation("bogus", tiny_config()), std::invalid_argument);
}

TEST_CASE("batch-size ablation emits the expected grid") {
    ScenarioConfig cfg = tiny_config();
    cfg.t_train = 200;  // n_s = 20 so n_b = 20 stays legal
    cfg.seeds = {1};
    const AblationTable table = run_ablation("batch_size", cfg);
    REQUIRE(table.rows.size() == 4);
    std::vector<double> axis;
    for (const auto& row : table.rows) {
        axis.push_back(row.value);
        REQUIRE(row.axis == "n_b");
        REQUIRE(row.method == "KPIN");
        REQUIRE(row.epoch_ms > 0.0);
    }
    REQUIRE(axis == std::vector<double>{1, 5, 10, 20});
}

TEST_CASE("gru ablation produces both modes at three horizons") {
    ScenarioConfig cfg = tiny_config();
    cfg.horizon = 50;
    cfg.seeds = {1};
    const AblationTable table = run_ablation("gru_update", cfg);
    REQUIRE(table.rows.size() == 6);
    int on_count = 0, off_count = 0;
    for (const auto& row : table.rows) {
        REQUIRE(row.axis == "horizon");
        if (row.method == "kpin_gru_on") ++on_count;
        if (row.method == "kpin_gru_off") ++off_count;
    }
    REQUIRE(on_count == 3);
    REQUIRE(off_count == 3);
}

TEST_CASE("failed seeds are reported and skipped") {
    ScenarioConfig cfg = tiny_config();
    cfg.t_train = 5;  // shorter than T_s: training must fail
    cfg.t_s = 10;
    cfg.seeds = {1, 2};
    const ScenarioResult result = run_scenario(cfg, {Method::KPIN}, 1);
    REQUIRE(result.reports.empty());
    REQUIRE(result.errors.size() == 2);
}
