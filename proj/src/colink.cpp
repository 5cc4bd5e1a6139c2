#include "cousinsq/colink.hpp"

#include "cousinsq/errors.hpp"

#include <fmt/format.h>

#include <set>

namespace cousinsq {

SimilarityTensor build_colink(const TransitionTensor& source, int order) {
    if (order < 1) {
        throw ArgumentError(fmt::format("co-link order must be >= 1, got {}", order));
    }
    SimilarityTensor out;
    out.order = order;
    out.raw.reserve(source.num_actions());
    const auto n = static_cast<Eigen::Index>(source.num_states());
    for (std::size_t a = 0; a < source.num_actions(); ++a) {
        const Matrix& p = source.action(a);
        if (order == 1) {
            out.raw.push_back(p);
            continue;
        }
        std::vector<Matrix> powers;
        powers.reserve(static_cast<std::size_t>(order));
        powers.push_back(Matrix::Identity(n, n));
        powers.push_back(p);
        for (int k = 2; k < order; ++k) {
            powers.push_back(powers.back() * p);
        }
        Matrix sum = Matrix::Zero(n, n);
        for (int k = 0; k <= order - 2; ++k) {
            const Matrix& left = powers[static_cast<std::size_t>(order - k - 1)];
            const Matrix& right = powers[static_cast<std::size_t>(k + 1)];
            sum.noalias() += left * right.transpose();
            sum.noalias() += left.transpose() * right;
        }
        out.raw.push_back(std::move(sum));
    }
    return out;
}

TransitionTensor l1_normalize(const std::vector<Matrix>& raw) {
    std::vector<Matrix> out;
    out.reserve(raw.size());
    for (const Matrix& m : raw) {
        if (m.size() > 0 && m.minCoeff() < 0.0) {
            throw InvariantError("similarity tensor has a negative entry");
        }
        Matrix normalized = m;
        for (Eigen::Index i = 0; i < normalized.rows(); ++i) {
            const double total = normalized.row(i).sum();
            if (total > 0.0) {
                normalized.row(i) /= total;
            } else {
                normalized.row(i).setConstant(1.0 / static_cast<double>(normalized.cols()));
            }
        }
        out.push_back(std::move(normalized));
    }
    return TransitionTensor(std::move(out));
}

TransitionTensor l1_normalize(const SimilarityTensor& sim) { return l1_normalize(sim.raw); }

std::vector<SyntheticEnvironment> make_cousins(const TransitionTensor& transitions,
                                               std::shared_ptr<const CostModel> costs,
                                               double gamma, const std::vector<int>& orders) {
    std::set<int> seen;
    for (int order : orders) {
        if (order < 1) {
            throw ArgumentError(fmt::format("co-link order must be >= 1, got {}", order));
        }
        if (!seen.insert(order).second) {
            throw ArgumentError(fmt::format("duplicate order {}", order));
        }
    }
    auto source = std::make_shared<const TransitionTensor>(transitions);
    std::vector<SyntheticEnvironment> out;
    out.reserve(orders.size());
    for (int order : orders) {
        if (order == 1) {
            out.push_back({1, Mdp(source, costs, gamma)});
        } else {
            auto normalized = std::make_shared<const TransitionTensor>(
                l1_normalize(build_colink(*source, order)));
            out.push_back({order, Mdp(std::move(normalized), costs, gamma)});
        }
    }
    return out;
}

std::vector<SyntheticEnvironment> make_cousins(const Mdp& env, const std::vector<int>& orders) {
    auto cousins = make_cousins(env.transitions(), env.costs_ptr(), env.gamma(), orders);
    for (auto& cousin : cousins) {
        if (cousin.order == 1) {
            cousin.mdp = env;
        }
    }
    return cousins;
}

PttEstimate estimate_ptt(const Environment& env, std::size_t min_visits, Rng& rng) {
    if (min_visits < 1) {
        throw ArgumentError("min_visits must be >= 1");
    }
    if (!env.supports_directed_sampling()) {
        throw CapabilityError("environment does not support directed sampling");
    }
    const std::size_t ns = env.num_states();
    const std::size_t na = env.num_actions();
    const auto n = static_cast<Eigen::Index>(ns);
    std::vector<Matrix> counts(na, Matrix::Zero(n, n));
    std::vector<std::uint64_t> visits(ns * na, 0);
    for (std::size_t s = 0; s < ns; ++s) {
        for (std::size_t a = 0; a < na; ++a) {
            for (std::size_t k = 0; k < min_visits; ++k) {
                const Sample draw = env.sample(s, a, rng);
                counts[a](static_cast<Eigen::Index>(s),
                          static_cast<Eigen::Index>(draw.next_state)) += 1.0;
            }
            visits[s * na + a] = min_visits;
        }
    }
    const double inv = 1.0 / static_cast<double>(min_visits);
    for (Matrix& m : counts) {
        m *= inv;
    }
    return {TransitionTensor(std::move(counts)), std::move(visits)};
}

} // namespace cousinsq
