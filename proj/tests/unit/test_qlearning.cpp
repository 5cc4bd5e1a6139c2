#include "cousinsq/errors.hpp"
#include "cousinsq/qlearning.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>

using namespace cousinsq;

namespace {

Mdp one_state(double cost, double gamma, std::size_t actions = 1) {
    return Mdp(TransitionTensor::identity(1, actions),
               CostModel(Matrix::Constant(1, static_cast<Eigen::Index>(actions), cost)), gamma);
}

} // namespace

TEST(Schedule, AlphaAndEpsilonRules) {
    LearningSchedule s;
    EXPECT_DOUBLE_EQ(s.alpha_at(1), 1.0 / 1.001);
    EXPECT_DOUBLE_EQ(s.alpha_at(1000), 0.5);
    EXPECT_DOUBLE_EQ(s.epsilon_at(1), 0.99);
    EXPECT_DOUBLE_EQ(s.epsilon_at(10000), 0.01);
    s.epsilon_rule = EpsilonRule::LiteralMin;
    EXPECT_DOUBLE_EQ(s.epsilon_at(1), 0.01);
    EXPECT_DOUBLE_EQ(s.epsilon_at(10000), std::pow(0.99, 10000.0));
    s.epsilon_rule = EpsilonRule::Constant;
    s.epsilon_floor = 0.2;
    EXPECT_DOUBLE_EQ(s.epsilon_at(7), 0.2);
}

TEST(Schedule, Validation) {
    LearningSchedule s;
    s.alpha_scale = 0.0;
    EXPECT_THROW(s.validate(), ArgumentError);
    s = {};
    s.epsilon_floor = 1.5;
    EXPECT_THROW(s.validate(), ArgumentError);
}

TEST(VisitCounter, CompletesWhenEveryPairReachesTarget) {
    VisitCounter v(2, 2, 2);
    for (std::size_t s = 0; s < 2; ++s) {
        for (std::size_t a = 0; a < 2; ++a) {
            v.add(s, a);
        }
    }
    EXPECT_FALSE(v.complete());
    EXPECT_EQ(v.starved().size(), 4u);
    for (std::size_t s = 0; s < 2; ++s) {
        for (std::size_t a = 0; a < 2; ++a) {
            v.add(s, a);
            v.add(s, a);
        }
    }
    EXPECT_TRUE(v.complete());
    EXPECT_EQ(v.count(1, 1), 3u);
}

TEST(QUpdate, ClosedForms) {
    QTable q = QTable::Zero(2, 2);
    EXPECT_DOUBLE_EQ(q_update(q, 0, 1, 1, 3.0, 1.0, 0.0), 3.0);
    EXPECT_DOUBLE_EQ(q(0, 1), 3.0);

    QTable r = QTable::Zero(2, 1);
    r(0, 0) = 2.0;
    r(1, 0) = 2.0;
    // target = 2 + 1 * min Q(1, .) = 4
    EXPECT_DOUBLE_EQ(q_update(r, 0, 0, 1, 2.0, 0.5, 1.0 - 1e-16), 3.0);
}

TEST(QUpdate, FixedPointIteration) {
    QTable q = QTable::Zero(1, 1);
    int updates = 0;
    while (std::abs(q(0, 0) - 10.0) > 1e-4 && updates < 1000) {
        q_update(q, 0, 0, 0, 1.0, 0.5, 0.9);
        ++updates;
    }
    // The error contracts by exactly 1 - alpha (1 - gamma) = 0.95 per update.
    const int expected = static_cast<int>(std::ceil(std::log(1e5) / -std::log(0.95)));
    EXPECT_EQ(updates, expected);
    EXPECT_NEAR(q(0, 0), 10.0, 1e-4);
}

TEST(EpsilonGreedy, ZeroEpsilonIsGreedy) {
    QTable q(1, 3);
    q << 3, 1, 2;
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(epsilon_greedy(q, 0, 0.0, rng), 1u);
    }
    QTable flat = QTable::Zero(1, 4);
    EXPECT_EQ(epsilon_greedy(flat, 0, 0.0, rng), 0u);
}

TEST(EpsilonGreedy, UniformWhenFullyExploring) {
    QTable q(1, 4);
    q << 0, 1, 2, 3;
    Rng rng(7);
    std::array<int, 4> counts{};
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        ++counts[epsilon_greedy(q, 0, 1.0, rng)];
    }
    for (int c : counts) {
        EXPECT_NEAR(c / double(draws), 0.25, 0.01);
    }
}

TEST(EpsilonGreedy, ConsumesOneDrawWhenGreedy) {
    QTable q = QTable::Zero(1, 2);
    Rng a(3), b(3);
    epsilon_greedy(q, 0, 0.0, a);
    b();
    EXPECT_EQ(a(), b());
}

TEST(GreedyPolicy, TieBreakAndArgmin) {
    EXPECT_EQ(greedy_policy(QTable::Zero(3, 2)), Policy(3, 0));
    QTable q(1, 2);
    q << 2, 1;
    EXPECT_EQ(greedy_policy(q)[0], 1u);
}

TEST(GreedyPolicy, MatchesValueIterationOnRandomMdps) {
    for (unsigned seed = 1; seed <= 10; ++seed) {
        const Mdp mdp = oracle::dense_random_mdp(5, 3, 0.9, seed);
        EXPECT_EQ(greedy_policy(optimal_q(mdp, 1e-10)), value_iteration(mdp, 1e-10).policy);
    }
}

TEST(Variant, NamesRoundTrip) {
    for (Variant v : {Variant::Simple, Variant::Speedy, Variant::Double, Variant::MaxMin,
                      Variant::EnsembleBootstrap}) {
        EXPECT_EQ(parse_variant(variant_name(v)), v);
    }
    EXPECT_EQ(parse_variant("ebq"), Variant::EnsembleBootstrap);
    EXPECT_THROW(parse_variant("sarsa"), ArgumentError);
}

TEST(RunBaseline, SimpleOneStateMatchesUpdateOracle) {
    const MdpEnvironment env(one_state(1.0, 0.9));
    BaselineConfig cfg;
    cfg.min_visits = 5000;
    cfg.seed = 4;
    const LearnerResult r = run_baseline(env, cfg);
    double x = 0.0;
    for (std::uint64_t t = 1; t <= r.trace.steps; ++t) {
        const double alpha = 1.0 / (1.0 + static_cast<double>(t) / 1000.0);
        x = (1.0 - alpha) * x + alpha * (1.0 + 0.9 * x);
    }
    EXPECT_NEAR(r.q(0, 0), x, 1e-12);
    EXPECT_NEAR(r.q(0, 0), 10.0, 1e-6);
}

TEST(RunBaseline, DoubleOnSymmetricBandit) {
    const MdpEnvironment env(one_state(1.0, 0.5, 2));
    BaselineConfig cfg;
    cfg.variant = Variant::Double;
    cfg.min_visits = 4000;
    cfg.seed = 2;
    const LearnerResult r = run_baseline(env, cfg);
    EXPECT_NEAR(r.q(0, 0), 2.0, 1e-3);
    EXPECT_NEAR(r.q(0, 1), 2.0, 1e-3);
}

TEST(RunBaseline, AllVariantsDeterministic) {
    const Mdp mdp = oracle::dense_random_mdp(4, 2, 0.8, 9);
    const MdpEnvironment env(mdp);
    TraceOptions opts;
    opts.oracle = value_iteration(mdp, 1e-10).policy;
    opts.ape_every = 50;
    opts.tracked = {{1, 1}};
    for (Variant v : {Variant::Simple, Variant::Speedy, Variant::Double, Variant::MaxMin,
                      Variant::EnsembleBootstrap}) {
        BaselineConfig cfg;
        cfg.variant = v;
        cfg.min_visits = 30;
        cfg.seed = 12;
        cfg.num_tables = 3;
        const LearnerResult a = run_baseline(env, cfg, opts);
        const LearnerResult b = run_baseline(env, cfg, opts);
        EXPECT_EQ(a.q, b.q) << variant_name(v);
        EXPECT_EQ(a.trace.steps, b.trace.steps);
        ASSERT_EQ(a.trace.ape.size(), b.trace.ape.size());
        for (std::size_t i = 0; i < a.trace.ape.size(); ++i) {
            EXPECT_EQ(a.trace.ape[i].ape, b.trace.ape[i].ape);
        }
        EXPECT_EQ(a.trace.tracked[0].env_q[0], b.trace.tracked[0].env_q[0]);
    }
}

TEST(RunBaseline, VariantsConvergeOnSmallMdp) {
    const Mdp mdp = oracle::dense_random_mdp(3, 2, 0.7, 5);
    const MdpEnvironment env(mdp);
    const QTable q_star = optimal_q(mdp, 1e-10);
    for (Variant v : {Variant::Simple, Variant::Speedy, Variant::Double, Variant::MaxMin,
                      Variant::EnsembleBootstrap}) {
        BaselineConfig cfg;
        cfg.variant = v;
        cfg.min_visits = 3000;
        cfg.seed = 1;
        const LearnerResult r = run_baseline(env, cfg);
        EXPECT_LT((r.q - q_star).cwiseAbs().maxCoeff(), 0.25 * q_star.cwiseAbs().maxCoeff())
            << variant_name(v);
    }
}

TEST(RunBaseline, StopsOnlyAfterCoverage) {
    const MdpEnvironment env(oracle::dense_random_mdp(4, 3, 0.9, 6));
    BaselineConfig cfg;
    cfg.min_visits = 20;
    cfg.trajectory_len = 7;
    const LearnerResult r = run_baseline(env, cfg);
    EXPECT_EQ(r.trace.steps, r.trace.episodes * 7);
    EXPECT_GE(r.trace.steps, 4u * 3u * 20u);
}

TEST(RunBaseline, CoverageErrorAtStepCap) {
    const MdpEnvironment env(oracle::dense_random_mdp(4, 3, 0.9, 6));
    BaselineConfig cfg;
    cfg.min_visits = 1000;
    cfg.step_cap = 30;
    try {
        run_baseline(env, cfg);
        FAIL() << "expected CoverageError";
    } catch (const CoverageError& e) {
        EXPECT_FALSE(e.starved().empty());
    }
}

TEST(RunBaseline, ApeCheckpointsEndAtFinalStep) {
    const Mdp mdp = oracle::dense_random_mdp(4, 2, 0.8, 3);
    const MdpEnvironment env(mdp);
    TraceOptions opts;
    opts.oracle = value_iteration(mdp).policy;
    opts.ape_every = 100;
    BaselineConfig cfg;
    cfg.min_visits = 10;
    const LearnerResult r = run_baseline(env, cfg, opts);
    ASSERT_GE(r.trace.ape.size(), 2u);
    EXPECT_EQ(r.trace.ape.front().t, 0u);
    EXPECT_EQ(r.trace.ape.back().t, r.trace.steps);
    EXPECT_DOUBLE_EQ(r.trace.ape.back().ape, ape_observed(opts.oracle, r.policy, env));
}
