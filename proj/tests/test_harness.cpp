#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "sdelab/harness.hpp"

using namespace sdelab;

namespace {

ExperimentConfig micro_rate_config() {
    ExperimentConfig cfg;
    cfg.experiment_id = "micro";
    cfg.mode = "rate";
    cfg.alpha = 0.5;
    cfg.amplitude = 1.0;
    cfg.frequency = 2.0;
    cfg.s0 = 1.0;
    cfg.s1 = 0.5;
    cfg.d = 1;
    cfg.d1 = 1;
    cfg.x0 = {0.3};
    cfg.scheme_kinds = {SchemeKind::milstein, SchemeKind::euler};
    cfg.levels = {4, 5, 6, 7};
    cfg.level_ref = 13;
    cfg.p_orders = {2.0};
    cfg.path_count = 50;
    cfg.seed = 7077;
    return cfg;
}

}  // namespace

TEST_CASE("config text round-trips keys, arrays and comments") {
    const std::string text =
        "# comment line\n"
        "experiment_id = demo\n"
        "mode = functional   # trailing comment\n"
        "functional = local-expansion\n"
        "alpha = 0.25\n"
        "amplitude = 1.5\n"
        "schemes = milstein, euler\n"
        "levels = 4, 5, 6, 7\n"
        "level_ref = 12\n"
        "p = 2, 4\n"
        "paths = 123\n"
        "seed = 42\n"
        "x0 = 0.1\n";
    const ExperimentConfig cfg = parse_config_text(text);
    CHECK(cfg.experiment_id == "demo");
    CHECK(cfg.mode == "functional");
    CHECK(cfg.functional == "local-expansion");
    CHECK(cfg.alpha == 0.25);
    CHECK(cfg.amplitude == 1.5);
    REQUIRE(cfg.scheme_kinds.size() == 2);
    CHECK(cfg.scheme_kinds[0] == SchemeKind::milstein);
    CHECK(cfg.scheme_kinds[1] == SchemeKind::euler);
    CHECK(cfg.levels == std::vector<int>{4, 5, 6, 7});
    CHECK(cfg.level_ref == 12);
    CHECK(cfg.p_orders == std::vector<double>{2.0, 4.0});
    CHECK(cfg.path_count == 123);
    CHECK(cfg.seed == 42);

    CHECK_THROWS_AS(parse_config_text("not a key value line\n"), ConfigurationError);
    CHECK_THROWS_AS(parse_config_text("unknown_key = 3\n"), ConfigurationError);
    CHECK_THROWS_AS(parse_config_text("alpha = abc\n"), ConfigurationError);
    CHECK_THROWS_AS(parse_config_text("schemes = runge_kutta\n"), ConfigurationError);
}

TEST_CASE("config validation enforces the level gap and mode rules") {
    ExperimentConfig cfg = micro_rate_config();
    CHECK_NOTHROW(validate_config(cfg));

    cfg.level_ref = 12;  // rate mode needs max(levels) + 6
    CHECK_THROWS_AS(validate_config(cfg), ConfigurationError);
    cfg.mode = "moments";
    CHECK_NOTHROW(validate_config(cfg));  // + 4 suffices outside rate mode
    cfg.level_ref = 10;
    CHECK_THROWS_AS(validate_config(cfg), ConfigurationError);

    cfg = micro_rate_config();
    cfg.mode = "no-such-mode";
    CHECK_THROWS_AS(validate_config(cfg), ConfigurationError);
    cfg = micro_rate_config();
    cfg.model = "no-such-family";
    CHECK_THROWS_AS(validate_config(cfg), ConfigurationError);
    cfg = micro_rate_config();
    cfg.p_orders = {0.5};
    CHECK_THROWS_AS(validate_config(cfg), ConfigurationError);
    cfg = micro_rate_config();
    cfg.d1 = 0;
    CHECK_THROWS_AS(validate_config(cfg), ConfigurationError);
}

TEST_CASE("presets: shipped names resolve and pin the documented settings") {
    const ExperimentConfig main_rate = preset("main-rate-a05");
    CHECK(main_rate.alpha == 0.5);
    CHECK(main_rate.d == 1);
    CHECK(main_rate.d1 == 1);
    CHECK(main_rate.levels == std::vector<int>{4, 5, 6, 7, 8, 9});
    CHECK(main_rate.level_ref == 15);
    CHECK(main_rate.path_count == 10000);
    CHECK(main_rate.p_orders == std::vector<double>{2.0});

    const ExperimentConfig euler = preset("euler-baseline-a05");
    CHECK(euler.scheme_kinds == std::vector<SchemeKind>{SchemeKind::euler});
    CHECK(euler.seed == main_rate.seed);  // shares the lattice stream

    const ExperimentConfig girsanov = preset("girsanov-mean");
    CHECK(girsanov.mode == "girsanov");
    CHECK(girsanov.path_count == 100000);
    CHECK(girsanov.levels == std::vector<int>{6});

    for (const auto& p : preset_catalog()) CHECK_NOTHROW(validate_config(p.config));

    CHECK_THROWS_AS(preset("no-such-preset"), ConfigurationError);
    CHECK_THROWS_WITH_AS(preset("no-such-preset"),
                         doctest::Contains("main-rate-a05"), ConfigurationError);
}

TEST_CASE("rate mode: csv schema, row order, fits and determinism") {
    const ExperimentConfig cfg = micro_rate_config();
    const RunResult result = run_experiment(cfg);

    REQUIRE(result.rows.size() == 8);  // 2 schemes x 4 levels x 1 moment order
    CHECK(result.rows[0].scheme == "milstein");
    CHECK(result.rows[0].n == 16);
    CHECK(result.rows[3].n == 128);
    CHECK(result.rows[4].scheme == "euler");
    for (const auto& row : result.rows) {
        CHECK(row.error > 0.0);
        CHECK(row.std_error > 0.0);
        CHECK(row.path_count == 50);
    }
    CHECK(result.metrics.count("slope.milstein.p2") == 1);
    CHECK(result.metrics.count("slope.euler.p2") == 1);
    CHECK(result.metrics.count("sep.euler_minus_milstein.p2") == 1);

    const std::string csv = csv_text(result);
    CHECK(csv.rfind("experiment_id,scheme,alpha,d,d1,n,p,error,std_error,path_count,seed\n", 0) ==
          0);
    CHECK(csv.find("micro,milstein,0.5,1,1,16,2,") != std::string::npos);

    // byte-identical rerun
    const RunResult again = run_experiment(cfg);
    CHECK(csv_text(again) == csv);
}

TEST_CASE("worker count does not change a single output byte") {
    const ExperimentConfig cfg = micro_rate_config();
    setenv("SDE_LAB_THREADS", "1", 1);
    const std::string serial = csv_text(run_experiment(cfg));
    setenv("SDE_LAB_THREADS", "3", 1);
    const std::string threaded = csv_text(run_experiment(cfg));
    unsetenv("SDE_LAB_THREADS");
    CHECK(serial == threaded);
}

TEST_CASE("validate mode produces a report for the shipped model") {
    ExperimentConfig cfg;
    cfg.experiment_id = "validate-test";
    cfg.mode = "validate";
    cfg.alpha = 0.5;
    cfg.amplitude = 2.0;
    cfg.frequency = 2.0;
    cfg.s0 = 1.0;
    cfg.s1 = 0.5;
    cfg.probe_count = 2000;
    cfg.seed = 5;
    const RunResult result = run_experiment(cfg);
    REQUIRE(result.validation.has_value());
    CHECK(result.validation->rayleigh_min >= 0.25 - 1e-9);
    CHECK(result.rows.empty());

    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "sdelab_harness_test").string();
    fs::remove_all(dir);
    const auto written = write_outputs(result, dir);
    REQUIRE(written.size() == 2);
    CHECK(fs::exists(written[0]));  // validation report
    CHECK(fs::exists(written[1]));  // sidecar
    std::ifstream meta(written[1]);
    nlohmann::json j;
    meta >> j;
    CHECK(j.contains("config"));
    CHECK(j.contains("version"));
    CHECK(j.contains("started_at"));
    CHECK(j.contains("wall_seconds"));
    CHECK(j.contains("warnings"));
    CHECK(j["config"]["alpha"] == 0.5);
    fs::remove_all(dir);
}

TEST_CASE("girsanov mode: unit mean within tolerance at micro scale") {
    ExperimentConfig cfg;
    cfg.experiment_id = "girsanov-micro";
    cfg.mode = "girsanov";
    cfg.alpha = 0.5;
    cfg.amplitude = 0.4;
    cfg.frequency = 1.0;
    cfg.s0 = 1.0;
    cfg.s1 = 0.25;
    cfg.x0 = {0.3};
    cfg.levels = {5};
    cfg.level_ref = 10;
    cfg.path_count = 2000;
    cfg.seed = 31;
    const RunResult result = run_experiment(cfg);
    REQUIRE(result.rows.size() == 1);
    CHECK(result.rows[0].n == 32);
    CHECK(result.metrics.at("mean.girsanov") == doctest::Approx(1.0).epsilon(0.05));
    CHECK(result.metrics.at("dev_in_se.girsanov") < 4.0);
}

TEST_CASE("omega mode: decay fit comes out negative at micro scale") {
    ExperimentConfig cfg;
    cfg.experiment_id = "omega-micro";
    cfg.mode = "omega";
    cfg.alpha = 0.5;
    cfg.amplitude = 0.0;
    cfg.s0 = 1.0;
    cfg.s1 = 0.5;
    cfg.levels = {3, 4, 5, 6};
    cfg.level_ref = 11;
    cfg.kappa = 0.9;
    cfg.path_count = 3000;
    cfg.seed = 90;
    const RunResult result = run_experiment(cfg);
    CHECK(result.rows.size() == 4);
    CHECK(result.metrics.at("slope.omega") < 0.0);
    for (const auto& row : result.rows) {
        CHECK(row.scheme == "omega");
        CHECK(row.error >= 0.0);
        CHECK(row.error <= 1.0);
    }
}

TEST_CASE("moments mode emits one row per separation") {
    ExperimentConfig cfg;
    cfg.experiment_id = "moments-micro";
    cfg.mode = "moments";
    cfg.alpha = 0.5;
    cfg.amplitude = 1.0;
    cfg.frequency = 2.0;
    cfg.s0 = 1.0;
    cfg.s1 = 0.5;
    cfg.x0 = {0.3};
    cfg.levels = {5};
    cfg.level_ref = 10;
    cfg.p_orders = {4.0};
    cfg.separation_levels = {2, 4, 6, 8};
    cfg.path_count = 400;
    cfg.seed = 17;
    const RunResult result = run_experiment(cfg);
    REQUIRE(result.rows.size() == 4);
    CHECK(result.rows[0].n == 4);    // separation 2^-2
    CHECK(result.rows[3].n == 256);  // separation 2^-8
    CHECK(result.metrics.at("slope.moments.m4") == doctest::Approx(0.5).epsilon(0.25));
}

TEST_CASE("functional mode works for both functional kinds") {
    ExperimentConfig cfg;
    cfg.experiment_id = "functional-micro";
    cfg.mode = "functional";
    cfg.functional = "additive";
    cfg.alpha = 0.5;
    cfg.amplitude = 2.0;
    cfg.frequency = 2.0;
    cfg.s0 = 1.0;
    cfg.s1 = 0.5;
    cfg.x0 = {0.3};
    cfg.levels = {4, 5, 6, 7};
    cfg.level_ref = 12;
    cfg.p_orders = {2.0};
    cfg.path_count = 150;
    cfg.seed = 23;
    const RunResult additive = run_experiment(cfg);
    CHECK(additive.rows.size() == 4);
    CHECK(additive.metrics.at("slope.functional.p2") < 0.0);

    cfg.functional = "local-expansion";
    cfg.p_orders = {4.0};
    const RunResult expansion = run_experiment(cfg);
    CHECK(expansion.rows.size() == 4);
    CHECK(expansion.metrics.at("slope.local_expansion.p4") < -0.5);
}

TEST_CASE("assertion windows evaluate against run metrics") {
    Preset preset;
    preset.name = "synthetic";
    preset.asserts = {{"slope.milstein.p2", -2.0, -0.1, "slope window"},
                      {"missing.metric", 0.0, 1.0, "absent metric fails"}};
    RunResult result;
    result.metrics["slope.milstein.p2"] = -0.8;
    const auto outcomes = evaluate_asserts(preset, result);
    REQUIRE(outcomes.size() == 2);
    CHECK(outcomes[0].pass);
    CHECK_FALSE(outcomes[1].pass);
}
