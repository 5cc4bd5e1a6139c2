#pragma once

#include "cousinsq/mdp.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cousinsq {

struct ApePoint {
    std::uint64_t t = 0;       ///< samples drawn from environment 1 so far
    std::uint64_t episode = 0;
    double ape = 0.0;
};

/**
 * Full per-step history of one (s, a) entry.
 *
 * fused[t] is the output table entry before step t, so fused has steps + 1
 * values and fused[0] = 0. env_q[n][t] is environment n's entry right after
 * its update in step t.
 */
struct TrackedPair {
    std::size_t state = 0;
    std::size_t action = 0;
    std::vector<double> fused;
    std::vector<std::vector<double>> env_q;
};

/// What a learner records while it runs.
struct TraceOptions {
    /// Optimal policy over latent states; enables APE checkpoints when nonempty.
    Policy oracle;
    std::uint64_t ape_every = 0;
    bool record_weights = true;
    std::vector<std::pair<std::size_t, std::size_t>> tracked;
    /// Copy the output table every snapshot_every steps (0 disables).
    std::uint64_t snapshot_every = 0;
};

struct ExperimentTrace {
    std::vector<int> orders;
    std::uint64_t seed = 0;
    std::string config_hash;
    double update_ratio = 0.0;

    std::uint64_t steps = 0;
    std::uint64_t episodes = 0;

    /// Weights used before the first refresh.
    std::vector<double> initial_weights;
    /// Row-major steps x K; row t holds the weights w_t used in fusion step t.
    std::vector<double> weights;
    /// Episode index of every step (recorded together with the weights).
    std::vector<std::uint64_t> step_episode;

    std::vector<ApePoint> ape;
    std::vector<TrackedPair> tracked;
    std::vector<std::pair<std::uint64_t, QTable>> snapshots;

    std::size_t num_envs() const noexcept { return orders.size(); }
    double weight(std::uint64_t t, std::size_t n) const {
        return weights[static_cast<std::size_t>(t) * orders.size() + n];
    }
};

} // namespace cousinsq
