#include "cousinsq/errors.hpp"
#include "cousinsq/wireless.hpp"

#include <gtest/gtest.h>

#include <map>
#include <memory>

using namespace cousinsq;

namespace {

Model1Config tiny_model1() {
    Model1Config c;
    c.num_tx = 1;
    c.buffer_size = 1;
    c.arrival_prob = {0.3};
    c.channels = {GilbertElliotChannel::banded(2, 0.8, 0.9, 0.4)};
    return c;
}

Model3Config tiny_model3() {
    Model3Config c;
    c.num_tx = 2;
    c.num_rx = 2;
    c.buffer_size = 1;
    c.max_send = 1;
    return c;
}

/// Empirical rows from the sampler, compared with the materialized PTT.
double sampler_gap(const WirelessModel& model, std::size_t draws_per_row,
                   const std::vector<std::pair<std::size_t, std::size_t>>& rows) {
    const Mdp mdp = model.materialize();
    Rng rng(2024);
    double worst = 0.0;
    for (const auto& [s, a] : rows) {
        Vector freq = Vector::Zero(static_cast<Eigen::Index>(model.num_states()));
        for (std::size_t i = 0; i < draws_per_row; ++i) {
            freq(static_cast<Eigen::Index>(model.sample(s, a, rng).next_state)) += 1.0;
        }
        freq /= static_cast<double>(draws_per_row);
        const Vector exact = mdp.transitions().action(a).row(static_cast<Eigen::Index>(s));
        worst = std::max(worst, (freq - exact).cwiseAbs().maxCoeff());
    }
    return worst;
}

std::vector<std::pair<std::size_t, std::size_t>> spread_rows(const WirelessModel& m,
                                                             std::size_t count) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < count; ++i) {
        out.emplace_back((i * 7919) % m.num_states(), (i * 31) % m.num_actions());
    }
    return out;
}

} // namespace

TEST(Channel, BandedStructure) {
    const auto ch = GilbertElliotChannel::banded(3, 0.7, 0.9, 0.3);
    EXPECT_DOUBLE_EQ(ch.transition(0, 1), 0.3);
    EXPECT_DOUBLE_EQ(ch.transition(1, 0), 0.15);
    EXPECT_DOUBLE_EQ(ch.transition(1, 2), 0.15);
    EXPECT_DOUBLE_EQ(ch.quality[1], 0.6);
    const Vector pi = ch.stationary();
    EXPECT_NEAR(pi.sum(), 1.0, 1e-12);
    EXPECT_LT((pi.transpose() * ch.transition - pi.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Channel, ValidationRejectsBadQuality) {
    auto ch = GilbertElliotChannel::banded(2, 0.5, 0.9, 0.1);
    ch.quality[0] = 1.2;
    EXPECT_THROW(ch.validate(), ArgumentError);
}

TEST(MixedRadix, LastDigitFastest) {
    const MixedRadix codec({2, 3, 4});
    EXPECT_EQ(codec.size(), 24u);
    EXPECT_EQ(codec.encode({0, 0, 1}), 1u);
    EXPECT_EQ(codec.encode({0, 1, 0}), 4u);
    EXPECT_EQ(codec.encode({1, 0, 0}), 12u);
    for (std::size_t i = 0; i < codec.size(); ++i) {
        EXPECT_EQ(codec.encode(codec.decode(i)), i);
    }
    EXPECT_THROW(codec.encode({0, 3, 0}), IndexError);
}

TEST(MixedRadix, CapRaisesSizeError) {
    EXPECT_THROW(MixedRadix({10, 10, 10}, 999), SizeError);
}

TEST(Model1, TinyInstanceMatchesHandEnumeration) {
    const Model1 model(tiny_model1());
    ASSERT_EQ(model.num_states(), 4u);
    ASSERT_EQ(model.num_actions(), 2u);
    const Mdp mdp = model.materialize();
    const double p = 0.3;
    const double q[2] = {0.9, 0.4};
    const double ch[2][2] = {{0.8, 0.2}, {0.2, 0.8}};
    // State index = 2 * buffer + channel.
    for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t c = 0; c < 2; ++c) {
            for (std::size_t a = 0; a < 2; ++a) {
                double buffer[2] = {0.0, 0.0};
                for (int arrived = 0; arrived < 2; ++arrived) {
                    const double pa = arrived ? p : 1.0 - p;
                    const std::size_t b1 = std::min<std::size_t>(b + arrived, 1);
                    if (a == 1 && b1 == 1) {
                        buffer[0] += pa * q[c];
                        buffer[1] += pa * (1.0 - q[c]);
                    } else {
                        buffer[b1] += pa;
                    }
                }
                for (std::size_t b2 = 0; b2 < 2; ++b2) {
                    for (std::size_t c2 = 0; c2 < 2; ++c2) {
                        EXPECT_NEAR(mdp.transitions()(a, 2 * b + c, 2 * b2 + c2),
                                    buffer[b2] * ch[c][c2], 1e-15);
                    }
                }
            }
        }
    }
}

TEST(Model1, DeterministicChannelEntries) {
    Model1Config cfg = tiny_model1();
    GilbertElliotChannel ch;
    ch.transition = Matrix::Identity(2, 2);
    ch.quality = {1.0, 0.0};
    cfg.channels = {ch};
    const Mdp mdp = Model1(cfg).materialize();
    const double p = cfg.arrival_prob[0];
    for (std::size_t a = 0; a < 2; ++a) {
        const Matrix& m = mdp.transitions().action(a);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const double v = m.data()[i];
            EXPECT_TRUE(v == 0.0 || v == 1.0 || std::abs(v - p) < 1e-15 ||
                        std::abs(v - (1.0 - p)) < 1e-15)
                << v;
        }
    }
}

TEST(Model1, SampledCostIsExpectedCost) {
    const Model1 model(Model1Config{});
    Rng rng(3);
    for (std::size_t s = 0; s < model.num_states(); s += 97) {
        for (std::size_t a = 0; a < model.num_actions(); ++a) {
            EXPECT_EQ(model.sample(s, a, rng).cost, model.cost(s, a));
        }
    }
}

TEST(Model4, RandomWalkMarginal) {
    Model4Config cfg;
    cfg.num_tx = 1;
    cfg.width = 2;
    cfg.height = 2;
    cfg.rx_positions = {{0, 0}};
    const Model4 model(cfg);
    ASSERT_EQ(model.num_states(), 3u);
    // Independent law: uniform over in-grid 4-neighbours that are not the receiver.
    auto law = [&](std::size_t s) {
        const auto [x, y] = model.cell(s);
        std::map<std::pair<long, long>, double> out;
        std::vector<std::pair<long, long>> ok;
        for (auto [dx, dy] : std::vector<std::pair<long, long>>{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
            const long nx = static_cast<long>(x) + dx;
            const long ny = static_cast<long>(y) + dy;
            if (nx < 0 || ny < 0 || nx > 1 || ny > 1 || (nx == 0 && ny == 0)) continue;
            ok.emplace_back(nx, ny);
        }
        for (const auto& c : ok) out[c] = 1.0 / static_cast<double>(ok.size());
        return out;
    };
    Rng rng(8);
    const int draws = 100000;
    for (std::size_t s = 0; s < 3; ++s) {
        std::map<std::pair<long, long>, double> freq;
        for (int i = 0; i < draws; ++i) {
            const auto [x, y] = model.cell(model.sample(s, 0, rng).next_state);
            freq[{static_cast<long>(x), static_cast<long>(y)}] += 1.0 / draws;
        }
        const auto expected = law(s);
        EXPECT_EQ(freq.size(), expected.size());
        for (const auto& [cell, prob] : expected) {
            EXPECT_NEAR(freq[cell], prob, 0.01);
        }
    }
}

TEST(WirelessModels, ZeroWeightsGiveZeroCost) {
    Model1Config c1;
    c1.num_tx = 2;
    c1.buffer_w = c1.channel_w = c1.collision_w = 0.0;
    Model2Config c2;
    c2.neg_throughput_w = c2.drop_w = c2.battery_w = 0.0;
    Model3Config c3 = tiny_model3();
    c3.buffer_w = c3.channel_w = c3.collision_w = c3.rx_load_w = 0.0;
    Model4Config c4;
    c4.neg_throughput_w = c4.rx_load_w = c4.interference_w = 0.0;
    std::vector<std::unique_ptr<WirelessModel>> models;
    models.push_back(std::make_unique<Model1>(c1));
    models.push_back(std::make_unique<Model2>(c2));
    models.push_back(std::make_unique<Model3>(c3));
    models.push_back(std::make_unique<Model4>(c4));
    Rng rng(1);
    for (const auto& m : models) {
        for (std::size_t s = 0; s < m->num_states(); s += 3) {
            EXPECT_EQ(m->sample(s, s % m->num_actions(), rng).cost, 0.0) << m->model_id();
        }
    }
}

TEST(WirelessModels, SamplerMatchesMaterializedRows) {
    Model2Config c2;
    c2.battery_size = 2;
    Model4Config c4;
    c4.width = 3;
    c4.height = 3;
    c4.rx_positions = {{0, 0}, {2, 2}};
    std::vector<std::unique_ptr<WirelessModel>> models;
    models.push_back(std::make_unique<Model1>(tiny_model1()));
    models.push_back(std::make_unique<Model2>(c2));
    models.push_back(std::make_unique<Model3>(tiny_model3()));
    models.push_back(std::make_unique<Model4>(c4));
    for (const auto& m : models) {
        // Ten rows with 10^5 draws each: 10^6 samples per model.
        EXPECT_LT(sampler_gap(*m, 100000, spread_rows(*m, 10)), 0.01) << m->model_id();
    }
}

TEST(WirelessModels, CostComponentsMatchWeights) {
    const Model3 model(tiny_model3());
    ASSERT_EQ(model.cost_names().size(), model.cost_weights().size());
    for (std::size_t s = 0; s < model.num_states(); s += 5) {
        for (std::size_t a = 0; a < model.num_actions(); ++a) {
            const auto parts = model.cost_components(s, a);
            double total = 0.0;
            for (std::size_t i = 0; i < parts.size(); ++i) {
                total += parts[i] * model.cost_weights()[i];
            }
            EXPECT_DOUBLE_EQ(model.cost(s, a), total);
        }
    }
}

TEST(Model3, TransmitterPermutationSymmetry) {
    Model3Config cfg = tiny_model3();
    // Every link in the same class so the two transmitters are exchangeable.
    cfg.distance_class = {{0, 0}, {0, 0}};
    const Model3 model(cfg);
    const Mdp mdp = model.materialize();
    const std::size_t block = 1 + cfg.num_rx;
    auto swap_state = [&](std::size_t s) {
        auto d = model.decode(s);
        for (std::size_t k = 0; k < block; ++k) std::swap(d[k], d[block + k]);
        return model.encode(d);
    };
    auto swap_action = [&](std::size_t a) {
        auto x = model.action_codec().decode(a);
        std::swap(x[0], x[1]);
        return model.action_codec().encode(x);
    };
    for (std::size_t a = 0; a < model.num_actions(); ++a) {
        const std::size_t pa = swap_action(a);
        for (std::size_t s = 0; s < model.num_states(); ++s) {
            const std::size_t ps = swap_state(s);
            EXPECT_NEAR(mdp.costs().expected(s, a), mdp.costs().expected(ps, pa), 1e-12);
            for (std::size_t t = 0; t < model.num_states(); ++t) {
                ASSERT_NEAR(mdp.transitions()(a, s, t), mdp.transitions()(pa, ps, swap_state(t)),
                            1e-14);
            }
        }
    }
}

TEST(Model3, DeskInstanceSize) {
    Model3Config cfg;
    const Model3 model(cfg);
    EXPECT_EQ(model.num_states(), 576u);
    EXPECT_EQ(model.num_actions(), 9u);
}

TEST(WirelessModels, MaterializeRespectsDenseCap) {
    const Model1 model(Model1Config{});
    EXPECT_THROW(model.materialize(1000), SizeError);
}

TEST(WirelessModels, StateCapRejectsLargeNetworks) {
    Model1Config cfg;
    cfg.num_tx = 12;
    EXPECT_THROW(Model1{cfg}, SizeError);
}

TEST(WirelessModels, RejectsInvalidParameters) {
    Model1Config c1;
    c1.arrival_prob = {1.5};
    EXPECT_THROW(Model1{c1}, ArgumentError);
    Model3Config c3;
    c3.max_send = 3;
    EXPECT_THROW(Model3{c3}, ArgumentError);
    Model4Config c4;
    c4.rx_positions = {{9, 9}};
    EXPECT_THROW(Model4{c4}, ArgumentError);
}
