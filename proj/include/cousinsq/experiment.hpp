#pragma once

#include "cousinsq/aggregation.hpp"
#include "cousinsq/analysis.hpp"
#include "cousinsq/colink.hpp"
#include "cousinsq/config.hpp"
#include "cousinsq/esql.hpp"
#include "cousinsq/qlearning.hpp"
#include "cousinsq/wireless.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cousinsq {

/// Simulator for a model section, plus its explicit MDP when one fits under the cap.
struct BuiltModel {
    std::unique_ptr<Environment> env;
    /// Non-owning view of env when the model is a wireless generator.
    const WirelessModel* wireless = nullptr;
    std::optional<Mdp> mdp;
};

BuiltModel build_model(const ModelSpec& spec, std::size_t dense_cap = kDefaultDenseCap);

/**
 * Everything a seed needs: the true environment, its cousins, the optional
 * aggregation wrappers and the oracle. Built once and shared read-only by
 * every seed.
 */
struct PreparedExperiment {
    BuiltModel model;
    std::vector<int> orders;
    /// Reference MDP the cousins were built from (estimate or exact).
    std::optional<Mdp> reference;
    std::vector<SyntheticEnvironment> cousins;
    std::vector<std::unique_ptr<Environment>> owned;
    std::shared_ptr<const AggregationMap> aggregation;
    /// Learner-facing environments; envs[0] is the true environment.
    std::vector<const Environment*> envs;

    Policy oracle;
    QTable q_star;
    double cost_spread = 0.0;

    const Environment& primary() const { return *envs.front(); }
    /// Q-table entries each learner stores per table.
    std::size_t table_entries() const {
        return primary().num_observations() * primary().num_actions();
    }
};

PreparedExperiment prepare_experiment(const ExperimentConfig& config);

struct LearnerOutcome {
    std::string name;
    std::optional<double> ape;
    std::uint64_t steps = 0;
    std::uint64_t episodes = 0;
    std::uint64_t samples = 0;
    Policy policy;
    ExperimentTrace trace;
    std::vector<double> final_weights;
    double seconds = 0.0;
};

struct SeedOutcome {
    std::uint64_t seed = 0;
    LearnerOutcome esql;
    std::vector<LearnerOutcome> baselines;
};

/// ESQL plus every configured baseline for one seed.
SeedOutcome run_seed(const PreparedExperiment& prepared, const ExperimentConfig& config,
                     std::uint64_t seed, const TraceOptions& extra = {});

/// Runs every seed with at most config.threads workers; results keep seed order.
std::vector<SeedOutcome> run_seeds(const PreparedExperiment& prepared,
                                   const ExperimentConfig& config,
                                   const TraceOptions& extra = {});

/// Deterministic summary (no timings).
nlohmann::json summarize(const PreparedExperiment& prepared, const ExperimentConfig& config,
                         const std::vector<SeedOutcome>& outcomes);

nlohmann::json verify_bounds(const PreparedExperiment& prepared, const ExperimentConfig& config,
                             const std::vector<SeedOutcome>& outcomes);

nlohmann::json select_envs(const ExperimentConfig& config);

/// Applies "aggregation.k" or "model.<key>" to a copy of the config.
ExperimentConfig with_parameter(const ExperimentConfig& config, const std::string& parameter,
                                double value);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

/// Subcommand drivers; return the process exit status.
int cmd_run(const ExperimentConfig& config);
int cmd_verify_bounds(const ExperimentConfig& config);
int cmd_select_envs(const ExperimentConfig& config);
int cmd_sweep(const ExperimentConfig& config);

} // namespace cousinsq
