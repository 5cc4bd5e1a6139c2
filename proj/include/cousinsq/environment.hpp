#pragma once

#include "cousinsq/mdp.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace cousinsq {

/**
 * Sampler interface consumed by every learner.
 *
 * Simulation runs on latent states in [0, num_states()). Learners index their
 * tables by observe(s), which is the identity unless the environment is an
 * aggregation wrapper. Implementations are immutable; all randomness comes
 * from the caller's rng.
 */
class Environment {
public:
    virtual ~Environment() = default;

    virtual std::size_t num_states() const = 0;
    virtual std::size_t num_actions() const = 0;
    virtual double gamma() const = 0;

    virtual Sample sample(std::size_t state, std::size_t action, Rng& rng) const = 0;

    /// True when sample() may be called from any (s, a), not only along a trajectory.
    virtual bool supports_directed_sampling() const { return true; }

    virtual std::size_t num_observations() const { return num_states(); }
    virtual std::size_t observe(std::size_t state) const { return state; }
};

/**
 * Environment backed by an explicit Mdp. Each (s, a) row is stored as the
 * cumulative sums of its nonzero entries, so a draw is a binary search that
 * returns exactly what step() would return for the same rng state.
 */
class MdpEnvironment : public Environment {
public:
    explicit MdpEnvironment(Mdp mdp);

    const Mdp& mdp() const noexcept { return mdp_; }

    std::size_t num_states() const override { return mdp_.num_states(); }
    std::size_t num_actions() const override { return mdp_.num_actions(); }
    double gamma() const override { return mdp_.gamma(); }
    Sample sample(std::size_t state, std::size_t action, Rng& rng) const override;

private:
    Mdp mdp_;
    std::vector<std::size_t> offsets_;
    std::vector<std::uint32_t> next_;
    std::vector<double> cumulative_;
};

} // namespace cousinsq
