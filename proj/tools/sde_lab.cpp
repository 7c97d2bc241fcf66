// Command-line experiment runner.
//
// Subcommands:
//   run --config PATH [--out DIR]
//   run --preset NAME [--seed S] [--out DIR] [--assert]
//   validate --config PATH [--out DIR]
//   list-presets
//
// Exit codes: 0 ok, 2 config error, 3 numerical failure,
// 4 preset assertion failed under --assert.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sdelab/harness.hpp"

namespace {

int execute(sdelab::ExperimentConfig cfg, const std::string& out_dir, bool check_asserts,
            const std::string& preset_name) {
    using namespace sdelab;
    const std::string dir = out_dir.empty() ? cfg.output_path : out_dir;
    RunResult result = run_experiment(cfg);
    const auto written = write_outputs(result, dir);
    for (const auto& note : result.notes) std::cout << note << "\n";
    for (const auto& warning : result.warnings) std::cout << "warning: " << warning << "\n";
    for (const auto& path : written) std::cout << "wrote " << path << "\n";

    if (check_asserts) {
        const Preset& entry = preset_entry(preset_name);
        bool all_pass = true;
        for (const auto& o : evaluate_asserts(entry, result)) {
            std::cout << (o.pass ? "PASS" : "FAIL") << " " << o.label << ": " << o.key << " = "
                      << o.value << " (window [" << o.lo << ", " << o.hi << "])\n";
            all_pass = all_pass && o.pass;
        }
        if (!all_pass) return 4;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"strong-approximation laboratory for singular SDEs"};
    app.require_subcommand(1);

    std::string config_path, preset_name, out_dir;
    bool assert_flag = false;
    std::int64_t seed_override = -1;

    auto* run = app.add_subcommand("run", "run an experiment from a config file or preset");
    auto* run_config = run->add_option("--config", config_path, "config file (key = value lines)");
    auto* run_preset = run->add_option("--preset", preset_name, "preset name (see list-presets)");
    run->add_option("--seed", seed_override, "override the preset seed");
    run->add_option("--out", out_dir, "output directory");
    run->add_flag("--assert", assert_flag, "enforce the preset's acceptance window (exit 4 on failure)");
    run_config->excludes(run_preset);

    auto* validate = app.add_subcommand("validate", "run assumption validation for a config");
    validate->add_option("--config", config_path, "config file")->required();
    validate->add_option("--out", out_dir, "output directory");

    auto* list = app.add_subcommand("list-presets", "list shipped presets");

    CLI11_PARSE(app, argc, argv);

    try {
        if (list->parsed()) {
            for (const auto& p : sdelab::preset_catalog())
                std::cout << p.name << "  -  " << p.description << "\n";
            return 0;
        }
        if (validate->parsed()) {
            sdelab::ExperimentConfig cfg = sdelab::parse_config_file(config_path);
            cfg.mode = "validate";
            return execute(cfg, out_dir, false, "");
        }
        // run
        if (preset_name.empty() && config_path.empty())
            throw sdelab::ConfigurationError("run: need --config or --preset");
        if (assert_flag && preset_name.empty())
            throw sdelab::ConfigurationError("run: --assert requires --preset");
        sdelab::ExperimentConfig cfg = preset_name.empty() ? sdelab::parse_config_file(config_path)
                                                           : sdelab::preset(preset_name);
        if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
        return execute(cfg, out_dir, assert_flag, preset_name);
    } catch (const sdelab::ConfigurationError& e) {
        std::cerr << "config-error: " << e.what() << "\n";
        return 2;
    } catch (const sdelab::InvalidParameterError& e) {
        std::cerr << "config-error: " << e.what() << "\n";
        return 2;
    } catch (const sdelab::Error& e) {
        std::cerr << "numerical-failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
