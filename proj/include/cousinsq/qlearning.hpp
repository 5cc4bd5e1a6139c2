#pragma once

#include "cousinsq/environment.hpp"
#include "cousinsq/mdp.hpp"
#include "cousinsq/trace.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cousinsq {

enum class EpsilonRule {
    Floor,      ///< max(base^t, floor)
    LiteralMin, ///< min(base^t, floor), read literally
    Constant,   ///< floor at every step
};

enum class AlphaIndex {
    Global, ///< t is the learner's step counter
    Visits, ///< t is the visit count of the updated (s, a)
};

/// alpha_t = 1 / (1 + t / alpha_scale); epsilon per the selected rule. Steps start at 1.
struct LearningSchedule {
    double alpha_scale = 1000.0;
    AlphaIndex alpha_index = AlphaIndex::Global;
    EpsilonRule epsilon_rule = EpsilonRule::Floor;
    double epsilon_base = 0.99;
    double epsilon_floor = 0.01;

    double alpha_at(std::uint64_t t) const;
    double epsilon_at(std::uint64_t t) const;
    void validate() const;
};

/// Per-(s, a) visit counts with an O(1) "all pairs reached the target" test.
class VisitCounter {
public:
    VisitCounter(std::size_t num_states, std::size_t num_actions, std::uint64_t target);

    void add(std::size_t s, std::size_t a);
    std::uint64_t count(std::size_t s, std::size_t a) const { return counts_[s * num_actions_ + a]; }
    bool complete() const noexcept { return satisfied_ == counts_.size(); }
    std::uint64_t target() const noexcept { return target_; }
    std::vector<std::pair<std::size_t, std::size_t>> starved() const;
    const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }

private:
    std::size_t num_actions_;
    std::uint64_t target_;
    std::vector<std::uint64_t> counts_;
    std::size_t satisfied_ = 0;
};

/// Lowest-index argmin of row s.
std::size_t greedy_action(const QTable& q, std::size_t s);
double min_value(const QTable& q, std::size_t s);

/// Q(s,a) <- (1 - alpha) Q(s,a) + alpha (cost + gamma min_a' Q(s', a')). Returns the new entry.
double q_update(QTable& q, std::size_t s, std::size_t a, std::size_t s_next, double cost,
                double alpha, double gamma);

/// One uniform draw decides exploration; exploring spends a second draw on the action.
std::size_t epsilon_greedy(const QTable& q, std::size_t s, double epsilon, Rng& rng);

Policy greedy_policy(const QTable& q);

/// Fraction of latent states whose action under the observation-level policy
/// differs from the oracle.
double ape_observed(const Policy& oracle, const Policy& learned, const Environment& env);

enum class Variant { Simple, Speedy, Double, MaxMin, EnsembleBootstrap };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

struct BaselineConfig {
    Variant variant = Variant::Simple;
    std::size_t trajectory_len = 15;
    std::uint64_t min_visits = 50;
    LearningSchedule schedule;
    std::uint64_t seed = 0;
    std::uint64_t step_cap = 10'000'000;
    /// Fixed budget, as in EnsembleConfig::max_steps.
    std::uint64_t max_steps = 0;
    /// Table count for the MaxMin and bootstrap variants.
    std::size_t num_tables = 2;
};

struct LearnerResult {
    QTable q;
    Policy policy;
    ExperimentTrace trace;
};

/**
 * Runs one tabular baseline with the ensemble's trajectory structure:
 * length-l episodes from a uniform random start, stopping at the first
 * episode boundary where every (s, a) has at least v visits.
 *
 * Stream layout: derive_seed(seed, 0) draws start states and
 * derive_seed(seed, 1) drives exploration and sampling.
 */
LearnerResult run_baseline(const Environment& env, const BaselineConfig& config,
                           const TraceOptions& options = {});

} // namespace cousinsq
