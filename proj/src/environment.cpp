#include "cousinsq/environment.hpp"

#include "cousinsq/errors.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace cousinsq {

MdpEnvironment::MdpEnvironment(Mdp mdp) : mdp_(std::move(mdp)) {
    const std::size_t ns = mdp_.num_states();
    const std::size_t na = mdp_.num_actions();
    offsets_.reserve(ns * na + 1);
    offsets_.push_back(0);
    for (std::size_t s = 0; s < ns; ++s) {
        for (std::size_t a = 0; a < na; ++a) {
            const auto row = mdp_.transitions().action(a).row(static_cast<Eigen::Index>(s));
            double cumulative = 0.0;
            for (Eigen::Index j = 0; j < row.size(); ++j) {
                if (row(j) <= 0.0) {
                    continue;
                }
                cumulative += row(j);
                next_.push_back(static_cast<std::uint32_t>(j));
                cumulative_.push_back(cumulative);
            }
            offsets_.push_back(next_.size());
        }
    }
}

Sample MdpEnvironment::sample(std::size_t state, std::size_t action, Rng& rng) const {
    const std::size_t na = mdp_.num_actions();
    if (state >= mdp_.num_states() || action >= na) {
        throw IndexError(fmt::format("(s={}, a={}) out of range", state, action));
    }
    const std::size_t row = state * na + action;
    const auto first = cumulative_.begin() + static_cast<std::ptrdiff_t>(offsets_[row]);
    const auto last = cumulative_.begin() + static_cast<std::ptrdiff_t>(offsets_[row + 1]);
    const double u = uniform01(rng);
    auto it = std::upper_bound(first, last, u);
    if (it == last) {
        --it;
    }
    const std::size_t next = next_[static_cast<std::size_t>(it - cumulative_.begin())];
    const CostModel& costs = mdp_.costs();
    const double cost = costs.has_transition_costs()
                            ? costs.transition(action)(static_cast<Eigen::Index>(state),
                                                       static_cast<Eigen::Index>(next))
                            : costs.expected(state, action);
    return {next, cost};
}

} // namespace cousinsq
