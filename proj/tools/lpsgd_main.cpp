// lpsgd: low-precision normalized subgradient descent experiments and the
// convergence-bound calculator that goes with them.
//
// Subcommands: run-synthetic, run-logreg, bounds, verify-lemma1, fit-holder,
// estimate-noise. Exit status: 0 success, 1 bound violation, 2 usage or
// config error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lpsgd/experiments.hpp"

namespace fs = std::filesystem;
using namespace lpsgd;

namespace {

// Output directory precedence: --out flag, then LPSGD_OUT, then the config's
// [output] dir, then the current directory.
std::string resolve_out_dir(const std::string& flag_value, const std::string& config_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("LPSGD_OUT"); env != nullptr && env[0] != '\0') {
        return env;
    }
    if (!config_value.empty()) return config_value;
    return ".";
}

void apply_seed_override(ExperimentConfig& config, const std::optional<std::uint64_t>& seed) {
    if (seed) config.seeds = {*seed};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"low-precision SGD experiments and convergence bounds"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_flag;
    std::optional<std::uint64_t> seed_flag;
    app.add_option("--config", config_path, "experiment config file")->configurable(false);
    app.add_option("--out", out_flag, "output directory")->configurable(false);
    app.add_option("--seed", seed_flag, "override the config's seed list")->configurable(false);
    app.fallthrough();

    auto* cmd_synth = app.add_subcommand("run-synthetic", "power-norm experiment with bounds");
    auto* cmd_logreg = app.add_subcommand("run-logreg", "logistic-regression pipeline");

    std::string inputs_path;
    auto* cmd_bounds = app.add_subcommand("bounds", "evaluate all bounds for given inputs");
    cmd_bounds->add_option("--inputs", inputs_path, "bound inputs file")->required();

    int lemma_count = 50;
    int lemma_resolution = 1000;
    auto* cmd_lemma = app.add_subcommand("verify-lemma1",
                                         "closed form vs brute force on random instances");
    cmd_lemma->add_option("--count", lemma_count, "number of random instances");
    cmd_lemma->add_option("--resolution", lemma_resolution, "samples per search dimension");

    std::string samples_path;
    std::string fit_mode = "least-squares";
    auto* cmd_fit = app.add_subcommand("fit-holder", "fit excess = L * distance^p to samples");
    cmd_fit->add_option("--samples", samples_path, "csv of distance,excess rows")->required();
    cmd_fit->add_option("--mode", fit_mode, "least-squares or majorizing");

    auto* cmd_noise = app.add_subcommand("estimate-noise",
                                         "empirical noise moments for a config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cmd_synth->parsed() || cmd_logreg->parsed() || cmd_noise->parsed()) {
            if (config_path.empty()) {
                std::cerr << "error: --config is required\n";
                return 2;
            }
            ExperimentConfig config = ExperimentConfig::load(config_path);
            apply_seed_override(config, seed_flag);
            const std::string out_dir = resolve_out_dir(out_flag, config.out_dir);

            if (cmd_noise->parsed()) {
                std::cout << moments_json(estimate_noise_for_config(config)) << '\n';
                return 0;
            }

            const ExperimentOutcome outcome = cmd_synth->parsed()
                                                  ? run_synthetic_experiment(config, out_dir)
                                                  : run_logreg_experiment(config, out_dir);
            for (const SeedRunSummary& s : outcome.runs) {
                std::cout << "eta=" << format_double(s.eta) << " seed=" << s.seed
                          << " min_loss=" << format_double(s.min_loss)
                          << " bound_stoch=" << format_double(s.bound_stochastic)
                          << (s.within_stochastic ? " ok" : " VIOLATION") << '\n';
            }
            if (outcome.exit_code != 0) {
                std::cerr << "bound violation detected\n";
            }
            return outcome.exit_code;
        }

        if (cmd_bounds->parsed()) {
            const BoundReport report = compute_bound_report(load_bound_inputs(inputs_path));
            const std::string text = render_bound_report(report);
            std::cout << text << '\n';
            if (!out_flag.empty() || std::getenv("LPSGD_OUT") != nullptr) {
                const std::string out_dir = resolve_out_dir(out_flag, "");
                fs::create_directories(out_dir);
                std::ofstream out(fs::path(out_dir) / "bound_report.json");
                out << text << '\n';
            }
            return 0;
        }

        if (cmd_lemma->parsed()) {
            const std::uint64_t seed = seed_flag.value_or(1);
            const Lemma1Verification v = verify_lemma1(lemma_count, seed, lemma_resolution);
            std::cout << "instances=" << v.count << " max_gap=" << format_double(v.max_gap)
                      << " min_gap=" << format_double(v.min_gap)
                      << " max_rel_gap=" << format_double(v.max_rel_gap)
                      << (v.ok ? " ok" : " FAIL") << '\n';
            if (!v.ok) std::cerr << v.detail;
            return v.ok ? 0 : 1;
        }

        if (cmd_fit->parsed()) {
            HolderFitMode mode;
            if (fit_mode == "least-squares" || fit_mode == "ls") {
                mode = HolderFitMode::least_squares;
            } else if (fit_mode == "majorizing") {
                mode = HolderFitMode::majorizing;
            } else {
                std::cerr << "error: unknown fit mode '" << fit_mode << "'\n";
                return 2;
            }
            std::cout << holder_fit_json(fit_holder_from_csv(samples_path, mode)) << '\n';
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
