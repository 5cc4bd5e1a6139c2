#include "cousinsq/mdp.hpp"

#include "cousinsq/errors.hpp"

#include <Eigen/LU>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace cousinsq {

namespace {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

std::vector<SparseMatrix> to_sparse(const TransitionTensor& p) {
    std::vector<SparseMatrix> out;
    out.reserve(p.num_actions());
    for (std::size_t a = 0; a < p.num_actions(); ++a) {
        out.push_back(p.action(a).sparseView());
    }
    return out;
}

void bellman_q(const std::vector<SparseMatrix>& p, const Matrix& costs, double gamma,
               const Vector& v, Matrix& q) {
    for (std::size_t a = 0; a < p.size(); ++a) {
        const auto col = static_cast<Eigen::Index>(a);
        q.col(col) = costs.col(col) + gamma * (p[a] * v);
    }
}

} // namespace

TransitionTensor::TransitionTensor(std::vector<Matrix> per_action)
    : per_action_(std::move(per_action)) {
    if (per_action_.empty()) {
        throw ArgumentError("transition tensor needs at least one action");
    }
    num_states_ = static_cast<std::size_t>(per_action_.front().rows());
    if (num_states_ == 0) {
        throw ArgumentError("transition tensor needs at least one state");
    }
    for (std::size_t a = 0; a < per_action_.size(); ++a) {
        const Matrix& m = per_action_[a];
        if (static_cast<std::size_t>(m.rows()) != num_states_ ||
            static_cast<std::size_t>(m.cols()) != num_states_) {
            throw ArgumentError(fmt::format("action {} matrix is {}x{}, expected {}x{}", a,
                                            m.rows(), m.cols(), num_states_, num_states_));
        }
        if (!m.allFinite() || m.minCoeff() < 0.0) {
            throw InvariantError(fmt::format("action {} has a negative or non-finite entry", a));
        }
    }
    const double err = stochasticity_error();
    if (err > kStochasticTol) {
        throw InvariantError(fmt::format("rows are not stochastic (max |sum-1| = {:.3e})", err));
    }
}

TransitionTensor TransitionTensor::identity(std::size_t num_states, std::size_t num_actions) {
    const auto n = static_cast<Eigen::Index>(num_states);
    return TransitionTensor(std::vector<Matrix>(num_actions, Matrix::Identity(n, n)));
}

const Matrix& TransitionTensor::action(std::size_t a) const {
    if (a >= per_action_.size()) {
        throw IndexError(fmt::format("action {} out of range [0, {})", a, per_action_.size()));
    }
    return per_action_[a];
}

double TransitionTensor::stochasticity_error() const {
    double worst = 0.0;
    for (const Matrix& m : per_action_) {
        worst = std::max(worst, (m.rowwise().sum().array() - 1.0).abs().maxCoeff());
    }
    return worst;
}

CostModel::CostModel(Matrix expected_costs) : expected_(std::move(expected_costs)) {
    if (expected_.rows() == 0 || expected_.cols() == 0) {
        throw ArgumentError("cost matrix must be nonempty");
    }
    if (!expected_.allFinite()) {
        throw InvariantError("costs must be finite");
    }
    c_max_ = expected_.cwiseAbs().maxCoeff();
}

CostModel CostModel::from_transition_costs(std::vector<Matrix> transition_costs,
                                           const TransitionTensor& transitions) {
    if (transition_costs.size() != transitions.num_actions()) {
        throw ArgumentError("one transition-cost matrix per action is required");
    }
    const auto n = static_cast<Eigen::Index>(transitions.num_states());
    Matrix expected(n, static_cast<Eigen::Index>(transitions.num_actions()));
    double c_max = 0.0;
    for (std::size_t a = 0; a < transition_costs.size(); ++a) {
        const Matrix& c = transition_costs[a];
        if (c.rows() != n || c.cols() != n) {
            throw ArgumentError(fmt::format("transition cost matrix {} has wrong shape", a));
        }
        if (!c.allFinite()) {
            throw InvariantError("costs must be finite");
        }
        expected.col(static_cast<Eigen::Index>(a)) =
            transitions.action(a).cwiseProduct(c).rowwise().sum();
        c_max = std::max(c_max, c.cwiseAbs().maxCoeff());
    }
    CostModel model(std::move(expected));
    model.transition_ = std::move(transition_costs);
    model.c_max_ = std::max(model.c_max_, c_max);
    return model;
}

const Matrix& CostModel::transition(std::size_t a) const {
    if (a >= transition_.size()) {
        throw IndexError("no transition cost matrix for this action");
    }
    return transition_[a];
}

Mdp::Mdp(TransitionTensor transitions, CostModel costs, double gamma)
    : Mdp(std::make_shared<const TransitionTensor>(std::move(transitions)),
          std::make_shared<const CostModel>(std::move(costs)), gamma) {}

Mdp::Mdp(std::shared_ptr<const TransitionTensor> transitions,
         std::shared_ptr<const CostModel> costs, double gamma)
    : transitions_(std::move(transitions)), costs_(std::move(costs)), gamma_(gamma) {
    if (!transitions_ || !costs_) {
        throw ArgumentError("MDP needs transitions and costs");
    }
    if (!(gamma_ > 0.0 && gamma_ < 1.0)) {
        throw ArgumentError(fmt::format("gamma must lie in (0, 1), got {}", gamma_));
    }
    if (costs_->num_states() != transitions_->num_states() ||
        costs_->num_actions() != transitions_->num_actions()) {
        throw ArgumentError("transition and cost dimensions disagree");
    }
}

Sample step(const Mdp& mdp, std::size_t state, std::size_t action, Rng& rng) {
    if (state >= mdp.num_states() || action >= mdp.num_actions()) {
        throw IndexError(fmt::format("(s={}, a={}) out of range", state, action));
    }
    const auto row = mdp.transitions().action(action).row(static_cast<Eigen::Index>(state));
    const double u = uniform01(rng);
    double cumulative = 0.0;
    std::size_t next = 0;
    std::size_t last_support = 0;
    bool found = false;
    for (Eigen::Index j = 0; j < row.size(); ++j) {
        const double p = row(j);
        if (p <= 0.0) {
            continue;
        }
        last_support = static_cast<std::size_t>(j);
        cumulative += p;
        if (u < cumulative) {
            next = static_cast<std::size_t>(j);
            found = true;
            break;
        }
    }
    if (!found) {
        next = last_support;
    }
    const CostModel& costs = mdp.costs();
    const double cost = costs.has_transition_costs()
                            ? costs.transition(action)(static_cast<Eigen::Index>(state),
                                                       static_cast<Eigen::Index>(next))
                            : costs.expected(state, action);
    return {next, cost};
}

Policy argmin_policy(const QTable& q) {
    Policy policy(static_cast<std::size_t>(q.rows()), 0);
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        Eigen::Index best = 0;
        for (Eigen::Index a = 1; a < q.cols(); ++a) {
            if (q(s, a) < q(s, best)) {
                best = a;
            }
        }
        policy[static_cast<std::size_t>(s)] = static_cast<std::size_t>(best);
    }
    return policy;
}

Solution value_iteration(const Mdp& mdp, double tol, std::size_t max_iters) {
    if (!(tol > 0.0)) {
        throw ArgumentError("value_iteration tolerance must be positive");
    }
    const auto n = static_cast<Eigen::Index>(mdp.num_states());
    const auto m = static_cast<Eigen::Index>(mdp.num_actions());
    const auto p = to_sparse(mdp.transitions());
    const Matrix& costs = mdp.costs().expected();
    const double gamma = mdp.gamma();

    Vector v = Vector::Zero(n);
    Matrix q(n, m);
    double previous_diff = -1.0;
    for (std::size_t it = 1; it <= max_iters; ++it) {
        bellman_q(p, costs, gamma, v, q);
        Vector next = q.rowwise().minCoeff();
        const double diff = (next - v).cwiseAbs().maxCoeff();
        if (previous_diff >= 0.0 &&
            diff > gamma * previous_diff + 1e-12 * (1.0 + next.cwiseAbs().maxCoeff())) {
            throw InvariantError(fmt::format(
                "value iteration lost contraction at iteration {} ({:.3e} > {} * {:.3e})", it,
                diff, gamma, previous_diff));
        }
        previous_diff = diff;
        v = std::move(next);
        if (diff <= tol) {
            bellman_q(p, costs, gamma, v, q);
            return {v, argmin_policy(q), it, diff};
        }
    }
    throw ConvergenceError(
        fmt::format("value iteration did not reach tol {} in {} iterations", tol, max_iters),
        previous_diff);
}

ValueFunction policy_evaluation(const Mdp& mdp, const Policy& policy) {
    const std::size_t ns = mdp.num_states();
    if (policy.size() != ns) {
        throw ArgumentError(fmt::format("policy has {} entries, MDP has {} states", policy.size(), ns));
    }
    const auto n = static_cast<Eigen::Index>(ns);
    Matrix system = Matrix::Identity(n, n);
    Vector c(n);
    for (std::size_t s = 0; s < ns; ++s) {
        const std::size_t a = policy[s];
        if (a >= mdp.num_actions()) {
            throw IndexError(fmt::format("policy action {} at state {} out of range", a, s));
        }
        const auto row = static_cast<Eigen::Index>(s);
        system.row(row) -= mdp.gamma() * mdp.transitions().action(a).row(row);
        c(row) = mdp.costs().expected(s, a);
    }
    Eigen::PartialPivLU<Matrix> lu(system);
    Vector v = lu.solve(c);
    const double residual = (system * v - c).cwiseAbs().maxCoeff();
    const double scale = c.size() > 0 ? c.cwiseAbs().maxCoeff() : 0.0;
    if (!v.allFinite() || residual > 1e-8 * std::max(scale, 1e-300)) {
        if (!(scale == 0.0 && residual == 0.0)) {
            throw NumericalError(fmt::format("policy evaluation residual {:.3e}", residual));
        }
    }
    return v;
}

QTable q_from_values(const Mdp& mdp, const ValueFunction& values) {
    const auto n = static_cast<Eigen::Index>(mdp.num_states());
    const auto m = static_cast<Eigen::Index>(mdp.num_actions());
    if (values.size() != n) {
        throw ArgumentError("value vector length does not match the MDP");
    }
    QTable q(n, m);
    for (Eigen::Index a = 0; a < m; ++a) {
        q.col(a) = mdp.costs().expected().col(a) +
                   mdp.gamma() * (mdp.transitions().action(static_cast<std::size_t>(a)) * values);
    }
    return q;
}

QTable optimal_q(const Mdp& mdp, double tol) {
    const Solution sol = value_iteration(mdp, tol);
    return q_from_values(mdp, sol.values);
}

} // namespace cousinsq
