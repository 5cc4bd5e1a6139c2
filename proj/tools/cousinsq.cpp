#include "cousinsq/errors.hpp"
#include "cousinsq/experiment.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

namespace {

struct Overrides {
    std::string config;
    std::string out;
    std::size_t threads = 0;
    std::vector<std::uint64_t> seeds;
    std::size_t k = 0;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "experiment config (YAML or JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "output directory (overrides output.dir)");
    cmd->add_option("--threads", o.threads, "maximum concurrent seeds")->check(CLI::PositiveNumber);
    cmd->add_option("--seeds", o.seeds, "seed list (overrides seeds)")->delimiter(',');
}

cousinsq::ExperimentConfig load(const Overrides& o) {
    auto cfg = cousinsq::load_config(o.config);
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (o.threads > 0) cfg.threads = o.threads;
    if (!o.seeds.empty()) {
        cfg.seeds = o.seeds;
        cfg.ensemble.seed = o.seeds.front();
    }
    if (o.k > 0) cfg.select.k = o.k;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("cousinsq"));
    spdlog::set_level(spdlog::level::warn);
    if (const char* level = std::getenv("COUSINSQ_LOG")) {
        spdlog::set_level(spdlog::level::from_str(level));
    }

    CLI::App app{"Ensemble synthetic Q-learning experiments"};
    app.require_subcommand(1);
    Overrides o;
    auto* run = app.add_subcommand("run", "run ESQL and baselines over the seed set");
    auto* bounds = app.add_subcommand("verify-bounds", "check the convergence and variance bounds");
    auto* select = app.add_subcommand("select-envs", "rank cousin orders by Bellman error");
    auto* sweep = app.add_subcommand("sweep", "repeat the run over a parameter grid");
    for (auto* cmd : {run, bounds, select, sweep}) {
        add_common(cmd, o);
    }
    select->add_option("--k", o.k, "number of orders to keep")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        const auto cfg = load(o);
        if (run->parsed()) return cousinsq::cmd_run(cfg);
        if (bounds->parsed()) return cousinsq::cmd_verify_bounds(cfg);
        if (select->parsed()) return cousinsq::cmd_select_envs(cfg);
        return cousinsq::cmd_sweep(cfg);
    } catch (const cousinsq::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const cousinsq::CoverageError& e) {
        std::cerr << "coverage error: " << e.what() << " (" << e.starved().size()
                  << " starved pairs)\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
