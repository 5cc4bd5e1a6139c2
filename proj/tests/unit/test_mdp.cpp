#include "cousinsq/environment.hpp"
#include "cousinsq/errors.hpp"
#include "cousinsq/mdp.hpp"
#include "cousinsq/mdp_io.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace cousinsq;

namespace {

Mdp single_state(double cost, double gamma) {
    return Mdp(TransitionTensor::identity(1, 1), CostModel(Matrix::Constant(1, 1, cost)), gamma);
}

Mdp two_state_uniform() {
    Matrix p = Matrix::Constant(2, 2, 0.5);
    return Mdp(TransitionTensor({p}), CostModel(Matrix::Zero(2, 1)), 0.9);
}

} // namespace

TEST(TransitionTensor, RejectsNonStochasticRows) {
    Matrix p = Matrix::Identity(2, 2);
    p(0, 1) = 0.1;
    EXPECT_THROW(TransitionTensor({p}), InvariantError);
}

TEST(TransitionTensor, RejectsNegativeEntries) {
    Matrix p(2, 2);
    p << 1.5, -0.5, 0.0, 1.0;
    EXPECT_THROW(TransitionTensor({p}), InvariantError);
}

TEST(TransitionTensor, AcceptsRowsWithinTolerance) {
    Matrix p = Matrix::Identity(2, 2);
    p(0, 0) += 5e-10;
    EXPECT_NO_THROW(TransitionTensor({p}));
}

TEST(TransitionTensor, RejectsShapeMismatch) {
    EXPECT_THROW(TransitionTensor({Matrix::Identity(2, 2), Matrix::Identity(3, 3)}),
                 ArgumentError);
}

TEST(CostModel, ExpectedCostsFromTransitionCosts) {
    Matrix p(2, 2);
    p << 0.25, 0.75, 1.0, 0.0;
    TransitionTensor t({p});
    Matrix c(2, 2);
    c << 4.0, 8.0, 1.0, 100.0;
    const CostModel model = CostModel::from_transition_costs({c}, t);
    EXPECT_DOUBLE_EQ(model.expected(0, 0), 7.0);
    EXPECT_DOUBLE_EQ(model.expected(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(model.c_max(), 100.0);
}

TEST(CostModel, RejectsNonFinite) {
    Matrix c = Matrix::Zero(1, 1);
    c(0, 0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(CostModel{c}, InvariantError);
}

TEST(Mdp, RejectsGammaOutsideOpenInterval) {
    EXPECT_THROW(single_state(1.0, 1.0), ArgumentError);
    EXPECT_THROW(single_state(1.0, 0.0), ArgumentError);
}

TEST(Step, DeterministicRow) {
    Matrix p = Matrix::Zero(3, 3);
    p.col(2).setOnes();
    Mdp mdp(TransitionTensor({p}), CostModel(Matrix::Ones(3, 1)), 0.9);
    Rng rng(99);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(step(mdp, i % 3, 0, rng).next_state, 2u);
    }
}

TEST(Step, UniformRowFrequencies) {
    const Mdp mdp = two_state_uniform();
    Rng rng(5);
    const int draws = 100000;
    int ones = 0;
    for (int i = 0; i < draws; ++i) {
        ones += step(mdp, 0, 0, rng).next_state == 1 ? 1 : 0;
    }
    EXPECT_NEAR(ones / double(draws), 0.5, 0.01);
}

TEST(Step, ZeroTransitionCosts) {
    Matrix p = Matrix::Constant(2, 2, 0.5);
    TransitionTensor t({p});
    Mdp mdp(t, CostModel::from_transition_costs({Matrix::Zero(2, 2)}, t), 0.5);
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        EXPECT_EQ(step(mdp, i % 2, 0, rng).cost, 0.0);
    }
}

TEST(Step, OutOfRange) {
    const Mdp mdp = two_state_uniform();
    Rng rng(1);
    EXPECT_THROW(step(mdp, 2, 0, rng), IndexError);
    EXPECT_THROW(step(mdp, 0, 1, rng), IndexError);
}

TEST(Step, EnvironmentSamplerMatchesStep) {
    const Mdp mdp = oracle::dense_random_mdp(5, 3, 0.9, 11);
    const MdpEnvironment env(mdp);
    Rng a(17), b(17);
    for (int i = 0; i < 2000; ++i) {
        const Sample x = step(mdp, i % 5, i % 3, a);
        const Sample y = env.sample(i % 5, i % 3, b);
        ASSERT_EQ(x.next_state, y.next_state);
        ASSERT_EQ(x.cost, y.cost);
    }
}

TEST(ValueIteration, ZeroCosts) {
    Mdp mdp(TransitionTensor::identity(3, 2), CostModel(Matrix::Zero(3, 2)), 0.9);
    const Solution sol = value_iteration(mdp);
    EXPECT_EQ(sol.values.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(sol.policy, Policy(3, 0));
}

TEST(ValueIteration, GeometricSeries) {
    const Solution sol = value_iteration(single_state(1.0, 0.9), 1e-10);
    EXPECT_NEAR(sol.values(0), 10.0, 1e-8);
}

TEST(ValueIteration, MatchesExhaustiveEnumeration) {
    for (unsigned seed = 1; seed <= 10; ++seed) {
        const Mdp mdp = oracle::dense_random_mdp(4, 2, 0.9, seed);
        const auto best = oracle::exhaustive_optimum(mdp);
        const Solution sol = value_iteration(mdp, 1e-10);
        EXPECT_LT((sol.values - best.values).cwiseAbs().maxCoeff(), 1e-8) << "seed " << seed;
        EXPECT_EQ(sol.policy.actions, oracle::greedy_from_values(mdp, best.values));
    }
}

TEST(ValueIteration, ConvergenceErrorCarriesResidual) {
    const Mdp mdp = oracle::dense_random_mdp(4, 2, 0.99, 3);
    try {
        value_iteration(mdp, 1e-12, 5);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_GT(e.residual(), 1e-12);
    }
}

TEST(PolicyEvaluation, ClosedForms) {
    Mdp zero(TransitionTensor::identity(2, 1), CostModel(Matrix::Zero(2, 1)), 0.5);
    EXPECT_EQ(policy_evaluation(zero, Policy(2, 0)).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_NEAR(policy_evaluation(single_state(2.0, 0.5), Policy(1, 0))(0), 4.0, 1e-12);
}

TEST(PolicyEvaluation, MatchesTruncatedSeries) {
    const Mdp mdp = oracle::dense_random_mdp(5, 3, 0.9, 21);
    const Policy pi(std::vector<std::size_t>{0, 2, 1, 1, 0});
    const Vector series = oracle::evaluate_by_series(mdp, pi.actions, 10000);
    EXPECT_LT((policy_evaluation(mdp, pi) - series).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(PolicyEvaluation, RejectsBadPolicy) {
    const Mdp mdp = oracle::dense_random_mdp(3, 2, 0.9, 1);
    EXPECT_THROW(policy_evaluation(mdp, Policy(2, 0)), ArgumentError);
    EXPECT_THROW(policy_evaluation(mdp, Policy(3, 5)), IndexError);
}

TEST(OptimalQ, ClosedForms) {
    Mdp zero(TransitionTensor::identity(2, 2), CostModel(Matrix::Zero(2, 2)), 0.9);
    EXPECT_EQ(optimal_q(zero).cwiseAbs().maxCoeff(), 0.0);

    Matrix c(1, 2);
    c << 1.0, 2.0;
    Mdp bandit(TransitionTensor::identity(1, 2), CostModel(c), 0.9);
    const QTable q = optimal_q(bandit, 1e-10);
    EXPECT_NEAR(q(0, 0), 10.0, 1e-8);
    EXPECT_NEAR(q(0, 1), 11.0, 1e-8);
}

TEST(OptimalQ, MinimumMatchesValueIteration) {
    const double tol = 1e-8;
    for (unsigned seed = 1; seed <= 5; ++seed) {
        const Mdp mdp = oracle::dense_random_mdp(4, 3, 0.85, seed);
        const QTable q = optimal_q(mdp, tol);
        const Solution sol = value_iteration(mdp, tol);
        EXPECT_LE((q.rowwise().minCoeff() - sol.values).cwiseAbs().maxCoeff(), 2 * tol);
        EXPECT_EQ(argmin_policy(q), sol.policy);
    }
}

TEST(ArgminPolicy, LowestIndexWinsTies) {
    QTable q(2, 3);
    q << 1, 1, 1, 3, 2, 2;
    EXPECT_EQ(argmin_policy(q).actions, (std::vector<std::size_t>{0, 1}));
}

TEST(MdpIo, RoundTrip) {
    Matrix p(2, 2);
    p << 0.25, 0.75, 0.5, 0.5;
    TransitionTensor t({p, Matrix::Identity(2, 2)});
    Matrix c0(2, 2), c1(2, 2);
    c0 << 1, 2, 3, 4;
    c1 << 0, 1, 1, 0;
    const Mdp mdp(t, CostModel::from_transition_costs({c0, c1}, t), 0.8);
    const auto path = std::filesystem::temp_directory_path() / "cousinsq_mdp_roundtrip.json";
    save_mdp(path.string(), mdp, 3);
    const Mdp back = load_mdp(path.string());
    std::filesystem::remove(path);
    EXPECT_EQ(back.gamma(), 0.8);
    for (std::size_t a = 0; a < 2; ++a) {
        EXPECT_EQ(back.transitions().action(a), mdp.transitions().action(a));
        EXPECT_EQ(back.costs().transition(a), mdp.costs().transition(a));
    }
    EXPECT_EQ(back.costs().expected(), mdp.costs().expected());
}

TEST(MdpIo, RejectsInconsistentExpectedCosts) {
    const Mdp mdp = oracle::dense_random_mdp(2, 1, 0.9, 4);
    TransitionTensor t = mdp.transitions();
    const Mdp with_tc(t, CostModel::from_transition_costs({Matrix::Ones(2, 2)}, t), 0.9);
    auto doc = mdp_to_json(with_tc);
    doc["expected_costs"][0][0] = 5.0;
    EXPECT_THROW(mdp_from_json(doc), InvariantError);
}
