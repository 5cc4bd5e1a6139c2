#include "cousinsq/aggregation.hpp"

#include "cousinsq/errors.hpp"
#include "cousinsq/wireless.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace cousinsq {

double AggregationMap::reduction() const {
    return static_cast<double>(num_states()) / static_cast<double>(cluster_count());
}

AggregationMap build_aggregation(std::size_t num_states, const FeatureFn& features, std::size_t k) {
    if (num_states == 0) {
        throw ArgumentError("cannot aggregate an empty state space");
    }
    if (k >= num_states) {
        throw ArgumentError(fmt::format("k = {} must be smaller than |S| = {}", k, num_states));
    }
    constexpr auto kUnassigned = std::numeric_limits<std::size_t>::max();
    AggregationMap map;
    map.k = k;
    map.state_to_cluster.assign(num_states, kUnassigned);
    if (k == 0) {
        for (std::size_t s = 0; s < num_states; ++s) {
            map.state_to_cluster[s] = s;
            map.representatives.push_back(s);
        }
        return map;
    }
    std::vector<std::vector<double>> coords(num_states);
    for (std::size_t s = 0; s < num_states; ++s) {
        coords[s] = features(s);
    }
    std::vector<std::pair<double, std::size_t>> candidates;
    for (std::size_t s = 0; s < num_states; ++s) {
        if (map.state_to_cluster[s] != kUnassigned) {
            continue;
        }
        const std::size_t cluster = map.representatives.size();
        map.representatives.push_back(s);
        map.state_to_cluster[s] = cluster;
        candidates.clear();
        for (std::size_t other = s + 1; other < num_states; ++other) {
            if (map.state_to_cluster[other] != kUnassigned) {
                continue;
            }
            double dist = 0.0;
            for (std::size_t d = 0; d < coords[s].size(); ++d) {
                dist += std::abs(coords[s][d] - coords[other][d]);
            }
            candidates.emplace_back(dist, other);
        }
        const std::size_t take = std::min(k, candidates.size());
        std::partial_sort(candidates.begin(),
                          candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end());
        for (std::size_t i = 0; i < take; ++i) {
            map.state_to_cluster[candidates[i].second] = cluster;
        }
    }
    return map;
}

AggregationMap build_aggregation(const WirelessModel& model, std::size_t k) {
    return build_aggregation(
        model.num_states(), [&](std::size_t s) { return model.features(s); }, k);
}

double max_cost_spread(const AggregationMap& map, const Matrix& expected_costs) {
    if (static_cast<std::size_t>(expected_costs.rows()) != map.num_states()) {
        throw ArgumentError("cost matrix does not match the aggregation map");
    }
    const auto clusters = static_cast<Eigen::Index>(map.cluster_count());
    Matrix lo = Matrix::Constant(clusters, expected_costs.cols(),
                                 std::numeric_limits<double>::infinity());
    Matrix hi = Matrix::Constant(clusters, expected_costs.cols(),
                                 -std::numeric_limits<double>::infinity());
    for (std::size_t s = 0; s < map.num_states(); ++s) {
        const auto c = static_cast<Eigen::Index>(map.state_to_cluster[s]);
        const auto r = static_cast<Eigen::Index>(s);
        lo.row(c) = lo.row(c).cwiseMin(expected_costs.row(r));
        hi.row(c) = hi.row(c).cwiseMax(expected_costs.row(r));
    }
    return (hi - lo).maxCoeff();
}

Policy expand_policy(const AggregationMap& map, const Policy& cluster_policy) {
    if (cluster_policy.size() != map.cluster_count()) {
        throw ArgumentError("policy length does not match the cluster count");
    }
    Policy out(map.num_states(), 0);
    for (std::size_t s = 0; s < map.num_states(); ++s) {
        out[s] = cluster_policy[map.state_to_cluster[s]];
    }
    return out;
}

AggregatedEnvironment::AggregatedEnvironment(const Environment& inner,
                                             std::shared_ptr<const AggregationMap> map)
    : inner_(inner), map_(std::move(map)) {
    if (!map_ || map_->num_states() != inner_.num_states()) {
        throw ArgumentError("aggregation map does not match the environment");
    }
    if (inner_.num_observations() != inner_.num_states()) {
        throw ArgumentError("cannot aggregate an already aggregated environment");
    }
}

} // namespace cousinsq
