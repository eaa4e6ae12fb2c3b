#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "sdplab/commands.hpp"

namespace {

using ConfigCommand =
    std::function<int(const sdplab::ExperimentConfig&, const sdplab::CliOptions&)>;

int run_config_command(const std::string& config_path, const sdplab::CliOptions& opts,
                       const ConfigCommand& fn) {
    try {
        sdplab::ExperimentConfig cfg = sdplab::load_experiment_config(config_path);
        sdplab::apply_overrides(cfg, opts);
        return fn(cfg, opts);
    } catch (const sdplab::ConfigError& e) {
        std::cerr << "sdplab: config error: " << e.what() << '\n';
        return sdplab::kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "sdplab: error: " << e.what() << '\n';
        return sdplab::kExitRuntimeError;
    }
}

struct SubArgs {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    bool force = false;
    std::size_t jobs = 1;
    CLI::Option* seed_opt = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"iterative pruning laboratory with self-distilled objectives"};
    app.require_subcommand(1);

    int exit_code = sdplab::kExitOk;

    const auto add_command = [&](const char* name, const char* desc, bool with_force,
                                 bool with_jobs, ConfigCommand fn) {
        auto args = std::make_shared<SubArgs>();
        CLI::App* cmd = app.add_subcommand(name, desc);
        cmd->add_option("--config", args->config, "experiment config file (INI)")->required();
        args->seed_opt = cmd->add_option("--seed", args->seed,
                                         "override the configured seed list with one seed");
        cmd->add_option("--out", args->out, "override the configured output directory");
        if (with_force)
            cmd->add_flag("--force", args->force, "allow writing into a non-empty directory");
        if (with_jobs) cmd->add_option("--jobs", args->jobs, "number of concurrent cells");
        cmd->callback([args, fn = std::move(fn), &exit_code] {
            sdplab::CliOptions opts;
            if (args->seed_opt->count() > 0) opts.seed = args->seed;
            opts.out = args->out;
            opts.force = args->force;
            opts.jobs = args->jobs;
            exit_code = run_config_command(args->config, opts, fn);
        });
    };

    add_command("gen-data", "generate a dataset CSV plus manifest", true, false,
                [](const sdplab::ExperimentConfig& cfg, const sdplab::CliOptions& opts) {
                    return sdplab::cmd_gen_data(cfg, opts);
                });
    add_command("train-teacher", "train and checkpoint the dense teacher", false, false,
                [](const sdplab::ExperimentConfig& cfg, const sdplab::CliOptions& opts) {
                    return sdplab::cmd_train_teacher(cfg, opts);
                });
    add_command("prune-run", "iteratively prune a student against a teacher checkpoint", false,
                false,
                [](const sdplab::ExperimentConfig& cfg, const sdplab::CliOptions& opts) {
                    return sdplab::cmd_prune_run(cfg, opts);
                });
    add_command("sweep", "run a method x loss-mode x seed grid and aggregate results", true,
                true,
                [](const sdplab::ExperimentConfig& cfg, const sdplab::CliOptions& opts) {
                    return sdplab::cmd_sweep(cfg, opts);
                });

    auto report_csvs = std::make_shared<std::vector<std::string>>();
    auto report_out = std::make_shared<std::string>();
    CLI::App* report = app.add_subcommand("report", "render SVG charts from metrics CSVs");
    report->add_option("csvs", *report_csvs, "metrics CSV files")->required();
    report->add_option("--out", *report_out, "directory for the SVG files")->required();
    report->callback([report_csvs, report_out, &exit_code] {
        try {
            exit_code = sdplab::cmd_report(*report_csvs, *report_out);
        } catch (const sdplab::ConfigError& e) {
            std::cerr << "sdplab: config error: " << e.what() << '\n';
            exit_code = sdplab::kExitConfigError;
        } catch (const std::exception& e) {
            std::cerr << "sdplab: error: " << e.what() << '\n';
            exit_code = sdplab::kExitRuntimeError;
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return sdplab::kExitConfigError;
    }
    return exit_code;
}
