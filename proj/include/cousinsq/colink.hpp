#pragma once

#include "cousinsq/environment.hpp"
#include "cousinsq/mdp.hpp"

#include <cstdint>
#include <vector>

namespace cousinsq {

/// Unnormalized n-th order co-link similarities, one |S| x |S| matrix per action.
struct SimilarityTensor {
    int order = 1;
    std::vector<Matrix> raw;
};

/**
 * L^(n)_a = sum_{k=0}^{n-2} P_a^{n-k-1} (P_a^T)^{k+1} + (P_a^T)^{n-k-1} P_a^{k+1}.
 *
 * Order 1 returns a copy of the source. Powers of P_a are computed once and
 * reused, so each action costs n-1 powers plus 2(n-1) products.
 */
SimilarityTensor build_colink(const TransitionTensor& source, int order);

/// Divides each row by its sum; all-zero rows become uniform.
TransitionTensor l1_normalize(const SimilarityTensor& sim);
TransitionTensor l1_normalize(const std::vector<Matrix>& raw);

/// A cousin environment: normalized co-link transitions with the source costs and gamma.
struct SyntheticEnvironment {
    int order = 1;
    Mdp mdp;
};

/**
 * One synthetic environment per order. Order 1 is the source MDP itself, and
 * every cousin shares the source CostModel instance.
 */
std::vector<SyntheticEnvironment> make_cousins(const Mdp& env, const std::vector<int>& orders);

/// Cousins built from a transition tensor (typically an estimate) plus the
/// source cost model.
std::vector<SyntheticEnvironment> make_cousins(const TransitionTensor& transitions,
                                               std::shared_ptr<const CostModel> costs,
                                               double gamma, const std::vector<int>& orders);

struct PttEstimate {
    TransitionTensor transitions;
    /// visits[s * |A| + a] = number of draws from (s, a).
    std::vector<std::uint64_t> visits;
};

/// Sample-average estimate of the PTT, drawing every (s, a) exactly min_visits times.
PttEstimate estimate_ptt(const Environment& env, std::size_t min_visits, Rng& rng);

} // namespace cousinsq
