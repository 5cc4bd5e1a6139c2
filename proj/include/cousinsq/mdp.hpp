#pragma once

#include "cousinsq/random.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

namespace cousinsq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// |S| x |A| table of action values (or expected costs).
using QTable = Eigen::MatrixXd;

/// Length-|S| vector of state values.
using ValueFunction = Eigen::VectorXd;

/// Row sums of every stochastic matrix must match 1 to this tolerance.
inline constexpr double kStochasticTol = 1e-9;

/**
 * Per-action row-stochastic transition matrices, stored densely.
 *
 * Entry (a, s, s') is the probability of moving from s to s' under action a.
 * The constructor rejects negative entries and rows whose sum differs from 1
 * by more than kStochasticTol.
 */
class TransitionTensor {
public:
    explicit TransitionTensor(std::vector<Matrix> per_action);

    static TransitionTensor identity(std::size_t num_states, std::size_t num_actions);

    std::size_t num_states() const noexcept { return num_states_; }
    std::size_t num_actions() const noexcept { return per_action_.size(); }

    const Matrix& action(std::size_t a) const;
    double operator()(std::size_t a, std::size_t s, std::size_t next) const {
        return per_action_[a](static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(next));
    }

    /// Largest |row sum - 1| over all actions and rows.
    double stochasticity_error() const;

private:
    std::size_t num_states_ = 0;
    std::vector<Matrix> per_action_;
};

/**
 * Average costs c_a(s), optionally backed by instantaneous transition costs
 * c_a(s, s'). When transition costs are supplied the expected costs are
 * derived from them, so the two always agree.
 */
class CostModel {
public:
    /// expected_costs is |S| x |A|.
    explicit CostModel(Matrix expected_costs);

    /// Builds expected costs as sum_{s'} p_a(s,s') c_a(s,s').
    static CostModel from_transition_costs(std::vector<Matrix> transition_costs,
                                           const TransitionTensor& transitions);

    std::size_t num_states() const noexcept { return static_cast<std::size_t>(expected_.rows()); }
    std::size_t num_actions() const noexcept { return static_cast<std::size_t>(expected_.cols()); }

    const Matrix& expected() const noexcept { return expected_; }
    double expected(std::size_t s, std::size_t a) const {
        return expected_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
    }

    bool has_transition_costs() const noexcept { return !transition_.empty(); }
    const Matrix& transition(std::size_t a) const;

    /// Bound on |cost| over every stored entry.
    double c_max() const noexcept { return c_max_; }

private:
    Matrix expected_;
    std::vector<Matrix> transition_;
    double c_max_ = 0.0;
};

/// Deterministic stationary policy.
struct Policy {
    std::vector<std::size_t> actions;

    Policy() = default;
    explicit Policy(std::vector<std::size_t> a) : actions(std::move(a)) {}
    Policy(std::size_t num_states, std::size_t action) : actions(num_states, action) {}

    std::size_t size() const noexcept { return actions.size(); }
    std::size_t operator[](std::size_t s) const { return actions[s]; }
    std::size_t& operator[](std::size_t s) { return actions[s]; }
    friend bool operator==(const Policy&, const Policy&) = default;
};

/**
 * Discounted finite MDP. Transitions and costs are held through shared
 * immutable pointers, so copies are cheap and synthetic environments can
 * share the source cost model by reference.
 */
class Mdp {
public:
    Mdp(TransitionTensor transitions, CostModel costs, double gamma);
    Mdp(std::shared_ptr<const TransitionTensor> transitions,
        std::shared_ptr<const CostModel> costs, double gamma);

    std::size_t num_states() const noexcept { return transitions_->num_states(); }
    std::size_t num_actions() const noexcept { return transitions_->num_actions(); }
    double gamma() const noexcept { return gamma_; }

    const TransitionTensor& transitions() const noexcept { return *transitions_; }
    const CostModel& costs() const noexcept { return *costs_; }
    const std::shared_ptr<const TransitionTensor>& transitions_ptr() const noexcept {
        return transitions_;
    }
    const std::shared_ptr<const CostModel>& costs_ptr() const noexcept { return costs_; }

    /// c_max / (1 - gamma): bound on any discounted value.
    double value_bound() const noexcept { return costs_->c_max() / (1.0 - gamma_); }

private:
    std::shared_ptr<const TransitionTensor> transitions_;
    std::shared_ptr<const CostModel> costs_;
    double gamma_;
};

struct Sample {
    std::size_t next_state;
    double cost;
};

/// Draws s' from p_a(s, .) and reports the transition cost (or c_a(s) when
/// the model has no transition costs).
Sample step(const Mdp& mdp, std::size_t state, std::size_t action, Rng& rng);

struct Solution {
    ValueFunction values;
    Policy policy;
    std::size_t iterations = 0;
    double residual = 0.0;
};

/**
 * Jacobi value iteration for the Bellman minimization operator.
 *
 * Stops once ||T v - v||_inf <= tol and returns T v together with the greedy
 * policy (lowest action index on ties). Every run checks the gamma-contraction
 * of successive differences and throws InvariantError if it is violated.
 */
Solution value_iteration(const Mdp& mdp, double tol = 1e-6, std::size_t max_iters = 1000000);

/// Exact solution of (I - gamma P_pi) v = c_pi by LU factorization.
ValueFunction policy_evaluation(const Mdp& mdp, const Policy& policy);

/// Q(s,a) = c_a(s) + gamma sum_{s'} p_a(s,s') v(s').
QTable q_from_values(const Mdp& mdp, const ValueFunction& values);

/// Fixed point of the Q-Bellman operator, built from value_iteration.
QTable optimal_q(const Mdp& mdp, double tol = 1e-6);

/// Per-state argmin over actions with lowest-index tie-breaking.
Policy argmin_policy(const QTable& q);

} // namespace cousinsq
