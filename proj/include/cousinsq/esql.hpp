#pragma once

#include "cousinsq/environment.hpp"
#include "cousinsq/mdp.hpp"
#include "cousinsq/qlearning.hpp"
#include "cousinsq/trace.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace cousinsq {

using WeightVector = std::vector<double>;

WeightVector softmax(const std::vector<double>& raw);

/// k uniform draws in [0, 1), softmax-normalized.
WeightVector init_weights(std::size_t k, Rng& rng);

/// Fraction of states where the two policies agree.
double correct_estimation_rate(const Policy& reference, const Policy& candidate);

/// u * q_it + (1 - u) * sum_n w_n q_n.
QTable ensemble_update(const QTable& q_it, const std::vector<QTable>& q_tables,
                       const WeightVector& weights, double u);

/// Softmax of each environment's optimal-policy agreement with the first one.
WeightVector closed_form_weights(const std::vector<Mdp>& envs, double tol = 1e-8);

enum class FusionMode {
    /// Exact fusion for constant u; only touched entries are brought up to date.
    Lazy,
    /// Full-table fusion every step; required for a time-varying u.
    Dense,
};

struct EnsembleConfig {
    std::vector<int> orders{1};
    double u = 0.5;
    /// Overrides u when set (Dense fusion only).
    std::function<double(std::uint64_t)> u_schedule;
    std::size_t trajectory_len = 15;
    std::uint64_t min_visits = 50;
    LearningSchedule schedule;
    std::uint64_t seed = 0;
    /// Explicit per-environment stream seeds; derived from seed when empty.
    std::vector<std::uint64_t> env_seeds;
    std::optional<std::uint64_t> start_seed;
    std::uint64_t step_cap = 10'000'000;
    /// Fixed budget: stop at the first episode boundary at or past this many steps
    /// without requiring coverage (0 disables).
    std::uint64_t max_steps = 0;
    /// Recompute weights every m steps.
    std::size_t weight_refresh = 1;
    FusionMode fusion = FusionMode::Lazy;

    void validate(std::size_t num_envs) const;
};

struct EsqlResult {
    QTable q_it;
    Policy policy;
    ExperimentTrace trace;
    std::vector<QTable> env_q;
    WeightVector final_weights;
};

/**
 * Ensemble learner over K environments sharing states, actions and gamma.
 *
 * Each episode draws one start state for all environments, then runs l steps.
 * In a step every environment takes an epsilon-greedy action on its own table,
 * samples, and applies the Q-learning update; the greedy policies are compared
 * with environment 1's, the agreement rates are softmax-normalized into w_t,
 * and Q^it <- u Q^it + (1 - u) sum_n w_t^n Q^n_t. The run stops at the first
 * episode boundary where every (s, a) of environment 1 has v visits.
 *
 * Streams: environment n uses derive_seed(seed, n + 1), start states use
 * derive_seed(seed, 0) and the initial weights derive_seed(seed, K + 1).
 */
EsqlResult run_esql(const std::vector<const Environment*>& envs, const EnsembleConfig& config,
                    const TraceOptions& options = {});

} // namespace cousinsq
