#include "cousinsq/qlearning.hpp"

#include "cousinsq/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace cousinsq {

double LearningSchedule::alpha_at(std::uint64_t t) const {
    return 1.0 / (1.0 + static_cast<double>(t) / alpha_scale);
}

double LearningSchedule::epsilon_at(std::uint64_t t) const {
    switch (epsilon_rule) {
    case EpsilonRule::Constant:
        return epsilon_floor;
    case EpsilonRule::LiteralMin:
        return std::min(std::pow(epsilon_base, static_cast<double>(t)), epsilon_floor);
    case EpsilonRule::Floor:
        break;
    }
    return std::max(std::pow(epsilon_base, static_cast<double>(t)), epsilon_floor);
}

void LearningSchedule::validate() const {
    if (!(alpha_scale > 0.0)) {
        throw ArgumentError("alpha_scale must be positive");
    }
    if (!(epsilon_base >= 0.0 && epsilon_base <= 1.0)) {
        throw ArgumentError("epsilon_base must lie in [0, 1]");
    }
    if (!(epsilon_floor >= 0.0 && epsilon_floor <= 1.0)) {
        throw ArgumentError("epsilon_floor must lie in [0, 1]");
    }
}

VisitCounter::VisitCounter(std::size_t num_states, std::size_t num_actions, std::uint64_t target)
    : num_actions_(num_actions), target_(target), counts_(num_states * num_actions, 0) {
    if (target_ < 1) {
        throw ArgumentError("visit target must be >= 1");
    }
}

void VisitCounter::add(std::size_t s, std::size_t a) {
    auto& c = counts_[s * num_actions_ + a];
    ++c;
    if (c == target_) {
        ++satisfied_;
    }
}

std::vector<std::pair<std::size_t, std::size_t>> VisitCounter::starved() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
        if (counts_[i] < target_) {
            out.emplace_back(i / num_actions_, i % num_actions_);
        }
    }
    return out;
}

namespace {

template <typename Row>
std::size_t row_argmin(const Row& row) {
    Eigen::Index best = 0;
    for (Eigen::Index a = 1; a < row.size(); ++a) {
        if (row(a) < row(best)) {
            best = a;
        }
    }
    return static_cast<std::size_t>(best);
}

template <typename Row>
std::size_t row_epsilon_greedy(const Row& row, double epsilon, Rng& rng) {
    if (uniform01(rng) < epsilon) {
        return uniform_index(rng, static_cast<std::size_t>(row.size()));
    }
    return row_argmin(row);
}

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

} // namespace

std::size_t greedy_action(const QTable& q, std::size_t s) { return row_argmin(q.row(idx(s))); }

double min_value(const QTable& q, std::size_t s) {
    return q(idx(s), idx(greedy_action(q, s)));
}

double q_update(QTable& q, std::size_t s, std::size_t a, std::size_t s_next, double cost,
                double alpha, double gamma) {
    if (s >= static_cast<std::size_t>(q.rows()) || s_next >= static_cast<std::size_t>(q.rows()) ||
        a >= static_cast<std::size_t>(q.cols())) {
        throw IndexError(fmt::format("q_update indices ({}, {}, {}) out of range", s, a, s_next));
    }
    const double target = cost + gamma * min_value(q, s_next);
    double& entry = q(idx(s), idx(a));
    entry = (1.0 - alpha) * entry + alpha * target;
    return entry;
}

std::size_t epsilon_greedy(const QTable& q, std::size_t s, double epsilon, Rng& rng) {
    if (s >= static_cast<std::size_t>(q.rows())) {
        throw IndexError(fmt::format("state {} out of range", s));
    }
    return row_epsilon_greedy(q.row(idx(s)), epsilon, rng);
}

Policy greedy_policy(const QTable& q) { return argmin_policy(q); }

double ape_observed(const Policy& oracle, const Policy& learned, const Environment& env) {
    if (oracle.size() != env.num_states()) {
        throw ArgumentError(fmt::format("oracle policy has {} entries, environment has {} states",
                                        oracle.size(), env.num_states()));
    }
    if (learned.size() != env.num_observations()) {
        throw ArgumentError("learned policy does not match the observation space");
    }
    std::size_t wrong = 0;
    for (std::size_t s = 0; s < oracle.size(); ++s) {
        if (oracle[s] != learned[env.observe(s)]) {
            ++wrong;
        }
    }
    return static_cast<double>(wrong) / static_cast<double>(oracle.size());
}

Variant parse_variant(const std::string& name) {
    if (name == "simple") return Variant::Simple;
    if (name == "speedy") return Variant::Speedy;
    if (name == "double") return Variant::Double;
    if (name == "maxmin") return Variant::MaxMin;
    if (name == "ensemble_bootstrap" || name == "ebq") return Variant::EnsembleBootstrap;
    throw ArgumentError(fmt::format("unknown baseline '{}'", name));
}

std::string variant_name(Variant v) {
    switch (v) {
    case Variant::Simple: return "simple";
    case Variant::Speedy: return "speedy";
    case Variant::Double: return "double";
    case Variant::MaxMin: return "maxmin";
    case Variant::EnsembleBootstrap: return "ensemble_bootstrap";
    }
    return "unknown";
}

namespace {

class BaselineLearner {
public:
    BaselineLearner(Variant variant, std::size_t num_obs, std::size_t num_actions,
                    std::size_t num_tables)
        : variant_(variant) {
        std::size_t count = 1;
        switch (variant) {
        case Variant::Simple: count = 1; break;
        case Variant::Speedy:
        case Variant::Double: count = 2; break;
        case Variant::MaxMin:
        case Variant::EnsembleBootstrap:
            if (num_tables < 2) {
                throw ArgumentError("MaxMin and bootstrap variants need at least 2 tables");
            }
            count = num_tables;
            break;
        }
        tables_.assign(count, QTable::Zero(idx(num_obs), idx(num_actions)));
        row_.resize(idx(num_actions));
    }

    std::size_t act(std::size_t o, double epsilon, Rng& rng) {
        switch (variant_) {
        case Variant::Simple:
        case Variant::Speedy:
            return row_epsilon_greedy(tables_[0].row(idx(o)), epsilon, rng);
        default:
            behavior_row(o);
            return row_epsilon_greedy(row_, epsilon, rng);
        }
    }

    /// Returns the new value of the entry that changed.
    double update(std::size_t o, std::size_t a, std::size_t o_next, double cost, double alpha,
                  double gamma, Rng& rng) {
        const Eigen::Index r = idx(o);
        const Eigen::Index c = idx(a);
        switch (variant_) {
        case Variant::Simple:
            return q_update(tables_[0], o, a, o_next, cost, alpha, gamma);
        case Variant::Speedy: {
            QTable& q = tables_[0];
            QTable& prev = tables_[1];
            const double tq = cost + gamma * min_value(q, o_next);
            const double tq_prev = cost + gamma * min_value(prev, o_next);
            const double old = q(r, c);
            q(r, c) = old + alpha * (tq_prev - old) + (1.0 - alpha) * (tq - tq_prev);
            prev(r, c) = old;
            return q(r, c);
        }
        case Variant::Double: {
            const bool first = uniform01(rng) < 0.5;
            QTable& upd = tables_[first ? 0 : 1];
            const QTable& other = tables_[first ? 1 : 0];
            const std::size_t best = greedy_action(upd, o_next);
            const double target = cost + gamma * other(idx(o_next), idx(best));
            upd(r, c) += alpha * (target - upd(r, c));
            return upd(r, c);
        }
        case Variant::MaxMin: {
            const std::size_t i = uniform_index(rng, tables_.size());
            behavior_row(o_next);
            const double target = cost + gamma * row_.minCoeff();
            QTable& upd = tables_[i];
            upd(r, c) += alpha * (target - upd(r, c));
            return upd(r, c);
        }
        case Variant::EnsembleBootstrap: {
            const std::size_t i = uniform_index(rng, tables_.size());
            QTable& upd = tables_[i];
            const std::size_t best = greedy_action(upd, o_next);
            double others = 0.0;
            for (std::size_t j = 0; j < tables_.size(); ++j) {
                if (j != i) {
                    others += tables_[j](idx(o_next), idx(best));
                }
            }
            others /= static_cast<double>(tables_.size() - 1);
            const double target = cost + gamma * others;
            upd(r, c) += alpha * (target - upd(r, c));
            return upd(r, c);
        }
        }
        return 0.0;
    }

    QTable output() const {
        switch (variant_) {
        case Variant::Simple:
        case Variant::Speedy:
            return tables_[0];
        case Variant::Double:
            return 0.5 * (tables_[0] + tables_[1]);
        case Variant::MaxMin: {
            QTable out = tables_[0];
            for (std::size_t i = 1; i < tables_.size(); ++i) {
                out = out.cwiseMax(tables_[i]);
            }
            return out;
        }
        case Variant::EnsembleBootstrap: {
            QTable out = tables_[0];
            for (std::size_t i = 1; i < tables_.size(); ++i) {
                out += tables_[i];
            }
            return out / static_cast<double>(tables_.size());
        }
        }
        return tables_[0];
    }

private:
    void behavior_row(std::size_t o) {
        const Eigen::Index r = idx(o);
        switch (variant_) {
        case Variant::Double:
            row_ = tables_[0].row(r) + tables_[1].row(r);
            break;
        case Variant::MaxMin:
            row_ = tables_[0].row(r);
            for (std::size_t i = 1; i < tables_.size(); ++i) {
                row_ = row_.cwiseMax(tables_[i].row(r));
            }
            break;
        default:
            row_ = tables_[0].row(r);
            for (std::size_t i = 1; i < tables_.size(); ++i) {
                row_ += tables_[i].row(r);
            }
            break;
        }
    }

    Variant variant_;
    std::vector<QTable> tables_;
    Eigen::RowVectorXd row_;
};

} // namespace

LearnerResult run_baseline(const Environment& env, const BaselineConfig& config,
                           const TraceOptions& options) {
    if (config.trajectory_len < 1 || config.min_visits < 1) {
        throw ArgumentError("trajectory length and visit target must be >= 1");
    }
    config.schedule.validate();
    const std::size_t num_obs = env.num_observations();
    const std::size_t na = env.num_actions();
    const double gamma = env.gamma();
    const bool track_ape = !options.oracle.actions.empty() && options.ape_every > 0;

    BaselineLearner learner(config.variant, num_obs, na, config.num_tables);
    VisitCounter visits(num_obs, na, config.min_visits);
    Rng start_rng(derive_seed(config.seed, 0));
    Rng env_rng(derive_seed(config.seed, 1));

    LearnerResult result;
    ExperimentTrace& trace = result.trace;
    trace.orders = {1};
    trace.seed = config.seed;
    for (const auto& [s, a] : options.tracked) {
        TrackedPair tp;
        tp.state = s;
        tp.action = a;
        tp.env_q.resize(1);
        trace.tracked.push_back(std::move(tp));
    }

    auto checkpoint = [&](std::uint64_t t, std::uint64_t episode) {
        if (track_ape) {
            trace.ape.push_back(
                {t, episode, ape_observed(options.oracle, greedy_policy(learner.output()), env)});
        }
    };

    const bool check_bound = config.variant != Variant::Speedy;
    double max_cost = 0.0;
    std::uint64_t t = 0;
    std::uint64_t episode = 0;
    checkpoint(0, 0);
    while (!visits.complete() && !(config.max_steps > 0 && t >= config.max_steps)) {
        if (t >= config.step_cap) {
            throw CoverageError(fmt::format("step cap {} reached before every pair had {} visits",
                                            config.step_cap, config.min_visits),
                                visits.starved());
        }
        std::size_t state = uniform_index(start_rng, env.num_states());
        for (std::size_t i = 0; i < config.trajectory_len; ++i) {
            ++t;
            const std::size_t o = env.observe(state);
            const std::size_t a = learner.act(o, config.schedule.epsilon_at(t), env_rng);
            const Sample draw = env.sample(state, a, env_rng);
            visits.add(o, a);
            const std::uint64_t alpha_t =
                config.schedule.alpha_index == AlphaIndex::Global ? t : visits.count(o, a);
            const double value = learner.update(o, a, env.observe(draw.next_state), draw.cost,
                                                config.schedule.alpha_at(alpha_t), gamma, env_rng);
            max_cost = std::max(max_cost, std::abs(draw.cost));
            if (check_bound && std::abs(value) > max_cost / (1.0 - gamma) + 1.0) {
                throw InvariantError(fmt::format("Q entry {} exceeds the value bound", value));
            }
            if (!trace.tracked.empty()) {
                const QTable out = learner.output();
                for (auto& tp : trace.tracked) {
                    tp.env_q[0].push_back(out(idx(tp.state), idx(tp.action)));
                }
            }
            state = draw.next_state;
            if (track_ape && t % options.ape_every == 0) {
                checkpoint(t, episode);
            }
        }
        ++episode;
    }
    trace.steps = t;
    trace.episodes = episode;
    result.q = learner.output();
    result.policy = greedy_policy(result.q);
    if (track_ape && (trace.ape.empty() || trace.ape.back().t != t)) {
        checkpoint(t, episode);
    }
    return result;
}

} // namespace cousinsq
