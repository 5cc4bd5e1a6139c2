#pragma once

#include "cousinsq/environment.hpp"
#include "cousinsq/mdp.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace cousinsq {

class WirelessModel;

struct AggregationMap {
    std::size_t k = 0;
    std::vector<std::size_t> state_to_cluster;
    /// representatives[c] is the state that opened cluster c.
    std::vector<std::size_t> representatives;

    std::size_t num_states() const noexcept { return state_to_cluster.size(); }
    std::size_t cluster_count() const noexcept { return representatives.size(); }
    /// |S| / cluster_count.
    double reduction() const;
};

using FeatureFn = std::function<std::vector<double>(std::size_t)>;

/**
 * Greedy clustering: states are scanned in index order and each unassigned
 * state opens a cluster that absorbs its k nearest unassigned states under
 * the l1 distance between feature vectors (lower index wins ties).
 */
AggregationMap build_aggregation(std::size_t num_states, const FeatureFn& features, std::size_t k);
AggregationMap build_aggregation(const WirelessModel& model, std::size_t k);

/// Largest max-minus-min cost over the members of any cluster, for any action.
double max_cost_spread(const AggregationMap& map, const Matrix& expected_costs);

/// Cluster-level policy to a state-level one.
Policy expand_policy(const AggregationMap& map, const Policy& cluster_policy);

/**
 * Runs the inner environment unchanged but reports cluster indices as
 * observations. The inner environment must outlive the wrapper.
 */
class AggregatedEnvironment : public Environment {
public:
    AggregatedEnvironment(const Environment& inner, std::shared_ptr<const AggregationMap> map);

    std::size_t num_states() const override { return inner_.num_states(); }
    std::size_t num_actions() const override { return inner_.num_actions(); }
    double gamma() const override { return inner_.gamma(); }
    Sample sample(std::size_t state, std::size_t action, Rng& rng) const override {
        return inner_.sample(state, action, rng);
    }
    bool supports_directed_sampling() const override { return inner_.supports_directed_sampling(); }
    std::size_t num_observations() const override { return map_->cluster_count(); }
    std::size_t observe(std::size_t state) const override { return map_->state_to_cluster[state]; }

    const AggregationMap& map() const noexcept { return *map_; }

private:
    const Environment& inner_;
    std::shared_ptr<const AggregationMap> map_;
};

} // namespace cousinsq
