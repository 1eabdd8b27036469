#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "sediff/errors.hpp"
#include "sediff/experiment.hpp"

namespace {

using sediff::ConfigError;
using sediff::ExperimentConfig;

struct ConfigCli {
    std::string config_path;
    std::vector<std::string> sets;                          // raw key=value
    std::vector<std::pair<std::string, std::string>> kv;   // flag overrides, ordered
};

// --config plus the generic --set key=value override every subcommand takes.
void add_config_options(CLI::App* cmd, ConfigCli& cli) {
    cmd->add_option("--config", cli.config_path, "JSON config file (strict schema)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", cli.sets,
                    "Override a config key, e.g. --set sampler.n_steps=32 (repeatable)");
}

// Sugar flag that maps onto a config key.
void add_override(CLI::App* cmd, ConfigCli& cli, const std::string& flag,
                  const std::string& key, const std::string& desc) {
    cmd->add_option_function<std::string>(
        flag, [&cli, key](const std::string& v) { cli.kv.emplace_back(key, v); }, desc);
}

ExperimentConfig resolve_config(const ConfigCli& cli) {
    ExperimentConfig config;
    if (!cli.config_path.empty()) config = sediff::load_config(cli.config_path);
    for (const auto& kv : cli.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        }
        sediff::apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& [key, value] : cli.kv) {
        sediff::apply_override(config, key, value);
    }
    config.validate();
    return config;
}

void require_manifests_or_synthetic(const ExperimentConfig& config, bool synthetic) {
    if (synthetic) return;
    namespace fs = std::filesystem;
    for (sediff::DatabaseKind kind : {sediff::DatabaseKind::Speech,
                                      sediff::DatabaseKind::Noise,
                                      sediff::DatabaseKind::Brir}) {
        for (std::size_t i = 0; i < 5; ++i) {
            const fs::path manifest =
                fs::path(config.data_dir) /
                (std::string(sediff::kind_name(kind)) + "-" + std::to_string(i)) /
                "manifest.json";
            if (!fs::exists(manifest)) {
                throw ConfigError("manifest missing: " + manifest.string() +
                                  " (pass --synthetic to generate the built-in corpus)");
            }
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"conditional diffusion speech enhancement — simulation, fitting, "
                 "sampling, and evaluation"};
    app.require_subcommand(1);

    // simulate
    ConfigCli sim_cli;
    std::string sim_out = "out/dataset";
    bool sim_synthetic = false;
    CLI::App* sim = app.add_subcommand(
        "simulate", "Render train/matched/mismatched mixture sets for one fold");
    add_config_options(sim, sim_cli);
    add_override(sim, sim_cli, "--seed", "seed", "Root seed");
    add_override(sim, sim_cli, "--data-dir", "data_dir", "Corpus directory");
    add_override(sim, sim_cli, "--fold", "fold", "Fold index (1..5)");
    add_override(sim, sim_cli, "--n", "n_train_databases", "Training databases (1 or 4)");
    add_override(sim, sim_cli, "--hours", "hours", "Training audio hours (tests get 1/10)");
    sim->add_option("--out", sim_out, "Output dataset directory");
    sim->add_flag("--synthetic", sim_synthetic,
                  "Generate the built-in synthetic corpus when manifests are missing");

    // fit
    ConfigCli fit_cli;
    std::string fit_index, fit_model = "out/model.json", fit_report = "out/fit_report.json";
    CLI::App* fit = app.add_subcommand("fit", "Fit the sigma-binned linear denoiser");
    add_config_options(fit, fit_cli);
    add_override(fit, fit_cli, "--seed", "seed", "Root seed");
    add_override(fit, fit_cli, "--bins", "n_sigma_bins", "Number of sigma bins");
    add_override(fit, fit_cli, "--samples", "fit_samples", "Fitting draws");
    add_override(fit, fit_cli, "--cap", "fit_mixture_cap", "Max training mixtures");
    fit->add_option("--index", fit_index, "Training dataset index.json")->required();
    fit->add_option("--model-out", fit_model, "Model file to write");
    fit->add_option("--report", fit_report, "Run report path");

    // enhance
    ConfigCli enh_cli;
    std::string enh_index, enh_out = "out/enhanced", enh_report = "out/enhance_report.json";
    CLI::App* enh = app.add_subcommand("enhance", "Enhance every mixture in a dataset");
    add_config_options(enh, enh_cli);
    add_override(enh, enh_cli, "--seed", "seed", "Root seed");
    add_override(enh, enh_cli, "--denoiser", "denoiser",
                 "oracle | gaussian | model file path");
    add_override(enh, enh_cli, "--sampler", "sampler.kind", "pc | edm");
    add_override(enh, enh_cli, "--steps", "sampler.n_steps", "Sampler steps");
    enh->add_option("--index", enh_index, "Dataset index.json")->required();
    enh->add_option("--out", enh_out, "Directory for enhanced WAVs");
    enh->add_option("--report", enh_report, "Run report path");

    // evaluate
    ConfigCli eval_cli;
    std::string eval_index, eval_dir, eval_csv = "out/scores.csv",
                            eval_report = "out/evaluate_report.json";
    CLI::App* eva = app.add_subcommand("evaluate", "Score enhanced files against a dataset");
    add_config_options(eva, eval_cli);
    add_override(eva, eval_cli, "--pesq", "pesq_command",
                 "External scorer command with {ref}/{deg} placeholders");
    eva->add_option("--index", eval_index, "Dataset index.json")->required();
    eva->add_option("--enhanced", eval_dir, "Directory of enhanced WAVs")->required();
    eva->add_option("--csv", eval_csv, "Per-mixture scores CSV");
    eva->add_option("--report", eval_report, "Run report path");

    // sweep
    ConfigCli sweep_cli;
    std::string sweep_out = "out/sweep";
    CLI::App* sweep = app.add_subcommand(
        "sweep", "Both samplers x n_steps in {4,8,16,32,64} on fresh test mixtures");
    add_config_options(sweep, sweep_cli);
    add_override(sweep, sweep_cli, "--seed", "seed", "Root seed");
    add_override(sweep, sweep_cli, "--data-dir", "data_dir", "Corpus directory");
    add_override(sweep, sweep_cli, "--fold", "fold", "Fold index (1..5)");
    add_override(sweep, sweep_cli, "--n", "n_train_databases", "Training databases (1 or 4)");
    add_override(sweep, sweep_cli, "--hours", "hours", "Scale of the rendered sets");
    add_override(sweep, sweep_cli, "--denoiser", "denoiser",
                 "oracle | gaussian | fit | model file path");
    sweep->add_option("--out", sweep_out, "Output directory (sweep.csv + report)");

    // schedule dump
    CLI::App* schedule = app.add_subcommand("schedule", "Schedule utilities");
    schedule->require_subcommand(1);
    ConfigCli dump_cli;
    std::size_t dump_points = 101;
    std::string dump_out = "out/schedule.csv";
    CLI::App* dump = schedule->add_subcommand("dump", "Write schedule quantities as CSV");
    add_config_options(dump, dump_cli);
    dump->add_option("--points", dump_points, "Grid points (endpoints included)");
    dump->add_option("--output", dump_out, "CSV path");

    // selftest
    ConfigCli self_cli;
    CLI::App* self = app.add_subcommand("selftest", "Fast internal invariant checks");
    add_config_options(self, self_cli);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (sim->parsed()) {
            const ExperimentConfig config = resolve_config(sim_cli);
            require_manifests_or_synthetic(config, sim_synthetic);
            sediff::run_simulate(config, sim_out);
        } else if (fit->parsed()) {
            const ExperimentConfig config = resolve_config(fit_cli);
            sediff::run_fit(config, fit_index, fit_model, fit_report);
        } else if (enh->parsed()) {
            const ExperimentConfig config = resolve_config(enh_cli);
            sediff::run_enhance(config, enh_index, enh_out, enh_report);
        } else if (eva->parsed()) {
            const ExperimentConfig config = resolve_config(eval_cli);
            sediff::run_evaluate(config, eval_index, eval_dir, eval_csv, eval_report);
        } else if (sweep->parsed()) {
            const ExperimentConfig config = resolve_config(sweep_cli);
            sediff::run_sweep(config, sweep_out);
        } else if (schedule->parsed() && dump->parsed()) {
            const ExperimentConfig config = resolve_config(dump_cli);
            const std::filesystem::path parent =
                std::filesystem::path(dump_out).parent_path();
            if (!parent.empty()) std::filesystem::create_directories(parent);
            sediff::run_schedule_dump(config, dump_points, dump_out);
        } else if (self->parsed()) {
            const ExperimentConfig config = resolve_config(self_cli);
            sediff::run_selftest(config);
        }
    } catch (const sediff::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return sediff::exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
