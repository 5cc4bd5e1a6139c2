#include "cousinsq/esql.hpp"

#include "cousinsq/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace cousinsq {

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

std::size_t row_argmin(const QTable& q, std::size_t s) { return greedy_action(q, s); }

} // namespace

WeightVector softmax(const std::vector<double>& raw) {
    if (raw.empty()) {
        throw ArgumentError("softmax of an empty vector");
    }
    const double peak = *std::max_element(raw.begin(), raw.end());
    WeightVector out(raw.size());
    double total = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = std::exp(raw[i] - peak);
        total += out[i];
    }
    for (double& w : out) {
        w /= total;
    }
    return out;
}

WeightVector init_weights(std::size_t k, Rng& rng) {
    if (k < 1) {
        throw ArgumentError("need at least one environment");
    }
    std::vector<double> raw(k);
    for (double& r : raw) {
        r = uniform01(rng);
    }
    return softmax(raw);
}

double correct_estimation_rate(const Policy& reference, const Policy& candidate) {
    if (reference.size() != candidate.size()) {
        throw ArgumentError(fmt::format("policy lengths differ ({} vs {})", reference.size(),
                                        candidate.size()));
    }
    if (reference.size() == 0) {
        throw ArgumentError("policies are empty");
    }
    std::size_t agree = 0;
    for (std::size_t s = 0; s < reference.size(); ++s) {
        agree += reference[s] == candidate[s] ? 1 : 0;
    }
    return static_cast<double>(agree) / static_cast<double>(reference.size());
}

QTable ensemble_update(const QTable& q_it, const std::vector<QTable>& q_tables,
                       const WeightVector& weights, double u) {
    if (q_tables.size() != weights.size()) {
        throw ArgumentError("one weight per table is required");
    }
    if (!(u >= 0.0 && u <= 1.0)) {
        throw ArgumentError("u must lie in [0, 1]");
    }
    QTable mix = QTable::Zero(q_it.rows(), q_it.cols());
    for (std::size_t n = 0; n < q_tables.size(); ++n) {
        if (q_tables[n].rows() != q_it.rows() || q_tables[n].cols() != q_it.cols()) {
            throw ArgumentError(fmt::format("table {} has the wrong shape", n));
        }
        mix += weights[n] * q_tables[n];
    }
    return u * q_it + (1.0 - u) * mix;
}

WeightVector closed_form_weights(const std::vector<Mdp>& envs, double tol) {
    if (envs.empty()) {
        throw ArgumentError("need at least one environment");
    }
    std::vector<Policy> policies;
    policies.reserve(envs.size());
    for (const Mdp& env : envs) {
        policies.push_back(value_iteration(env, tol).policy);
    }
    std::vector<double> rates;
    rates.reserve(envs.size());
    for (const Policy& p : policies) {
        rates.push_back(correct_estimation_rate(policies.front(), p));
    }
    return softmax(rates);
}

void EnsembleConfig::validate(std::size_t num_envs) const {
    if (orders.size() != num_envs) {
        throw ArgumentError(fmt::format("{} orders for {} environments", orders.size(), num_envs));
    }
    if (orders.empty() || orders.front() != 1) {
        throw ArgumentError("the first order must be 1 (the original environment)");
    }
    if (!(u >= 0.0 && u <= 1.0)) {
        throw ArgumentError(fmt::format("u must lie in [0, 1], got {}", u));
    }
    if (u_schedule && fusion != FusionMode::Dense) {
        throw ArgumentError("a time-varying u requires dense fusion");
    }
    if (trajectory_len < 1 || min_visits < 1 || weight_refresh < 1) {
        throw ArgumentError("trajectory length, visit target and weight refresh must be >= 1");
    }
    if (!env_seeds.empty() && env_seeds.size() != num_envs) {
        throw ArgumentError("env_seeds needs one seed per environment");
    }
    schedule.validate();
}

namespace {

/**
 * Output table with exact lazy fusion. For an entry whose K source values
 * were constant since time tau,
 *   A_t = u^{t-tau} A_tau + sum_n q_n (G^n_t - u^{t-tau} G^n_tau),
 * where A_t = Q^it_t / (1 - u) and G^n_t = u G^n_{t-1} + w^n_{t-1}.
 */
class FusedTable {
public:
    FusedTable(std::size_t rows, std::size_t cols, std::size_t k, double u, FusionMode mode)
        : rows_(rows), cols_(cols), k_(k), u_(u), mode_(mode) {
        if (mode_ == FusionMode::Lazy) {
            acc_.assign(rows * cols, 0.0);
            since_.assign(rows * cols, 0);
            g_at_.assign(rows * cols * k, 0.0);
            g_.assign(k, 0.0);
        } else {
            dense_ = QTable::Zero(idx(rows), idx(cols));
        }
    }

    /// Must run before any source table changes entry e at step t.
    void flush(std::size_t e, const std::vector<QTable>& tables) {
        if (mode_ == FusionMode::Dense || since_[e] == t_) {
            return;
        }
        acc_[e] = advanced(e, tables);
        since_[e] = t_;
        std::copy(g_.begin(), g_.end(), g_at_.begin() + static_cast<std::ptrdiff_t>(e * k_));
    }

    /// Closes step t with weights w_t.
    void advance(const WeightVector& w, const std::vector<QTable>& tables, double u_now) {
        if (mode_ == FusionMode::Dense) {
            dense_ = ensemble_update(dense_, tables, w, u_now);
        } else {
            for (std::size_t n = 0; n < k_; ++n) {
                g_[n] = u_ * g_[n] + w[n];
            }
        }
        ++t_;
    }

    double value(std::size_t e, const std::vector<QTable>& tables) const {
        if (mode_ == FusionMode::Dense) {
            return dense_(idx(e / cols_), idx(e % cols_));
        }
        return (1.0 - u_) * advanced(e, tables);
    }

    QTable materialize(const std::vector<QTable>& tables) const {
        if (mode_ == FusionMode::Dense) {
            return dense_;
        }
        QTable out(idx(rows_), idx(cols_));
        for (std::size_t e = 0; e < rows_ * cols_; ++e) {
            out(idx(e / cols_), idx(e % cols_)) = value(e, tables);
        }
        return out;
    }

private:
    double advanced(std::size_t e, const std::vector<QTable>& tables) const {
        const std::uint64_t gap = t_ - since_[e];
        const double decay = gap == 0 ? 1.0 : std::pow(u_, static_cast<double>(gap));
        const Eigen::Index r = idx(e / cols_);
        const Eigen::Index c = idx(e % cols_);
        double out = decay * acc_[e];
        const double* g_then = g_at_.data() + e * k_;
        for (std::size_t n = 0; n < k_; ++n) {
            out += tables[n](r, c) * (g_[n] - decay * g_then[n]);
        }
        return out;
    }

    std::size_t rows_;
    std::size_t cols_;
    std::size_t k_;
    double u_;
    FusionMode mode_;
    std::uint64_t t_ = 0;
    std::vector<double> acc_;
    std::vector<std::uint64_t> since_;
    std::vector<double> g_at_;
    std::vector<double> g_;
    QTable dense_;
};

} // namespace

EsqlResult run_esql(const std::vector<const Environment*>& envs, const EnsembleConfig& config,
                    const TraceOptions& options) {
    const std::size_t k = envs.size();
    if (k == 0) {
        throw ArgumentError("run_esql needs at least one environment");
    }
    config.validate(k);
    const Environment& original = *envs.front();
    const std::size_t ns = original.num_states();
    const std::size_t num_obs = original.num_observations();
    const std::size_t na = original.num_actions();
    const double gamma = original.gamma();
    for (std::size_t n = 1; n < k; ++n) {
        if (envs[n]->num_states() != ns || envs[n]->num_actions() != na ||
            envs[n]->num_observations() != num_obs || envs[n]->gamma() != gamma) {
            throw ArgumentError(fmt::format("environment {} does not match environment 1", n + 1));
        }
    }
    const bool track_ape = !options.oracle.actions.empty() && options.ape_every > 0;

    std::vector<QTable> tables(k, QTable::Zero(idx(num_obs), idx(na)));
    std::vector<VisitCounter> visits;
    visits.reserve(k);
    for (std::size_t n = 0; n < k; ++n) {
        visits.emplace_back(num_obs, na, config.min_visits);
    }
    std::vector<Rng> rngs;
    rngs.reserve(k);
    for (std::size_t n = 0; n < k; ++n) {
        rngs.emplace_back(config.env_seeds.empty() ? derive_seed(config.seed, n + 1)
                                                   : config.env_seeds[n]);
    }
    Rng start_rng(config.start_seed ? *config.start_seed : derive_seed(config.seed, 0));
    Rng weight_rng(derive_seed(config.seed, k + 1));

    // Greedy policy of every table and agreement counts against table 0.
    std::vector<std::vector<std::size_t>> greedy(k, std::vector<std::size_t>(num_obs, 0));
    std::vector<std::size_t> agree(k, num_obs);

    EsqlResult result;
    ExperimentTrace& trace = result.trace;
    trace.orders = config.orders;
    trace.seed = config.seed;
    trace.update_ratio = config.u;
    WeightVector weights = init_weights(k, weight_rng);
    trace.initial_weights = weights;

    FusedTable fused(num_obs, na, k, config.u, config.fusion);
    for (const auto& [s, a] : options.tracked) {
        if (s >= num_obs || a >= na) {
            throw IndexError(fmt::format("tracked pair ({}, {}) out of range", s, a));
        }
        TrackedPair tp;
        tp.state = s;
        tp.action = a;
        tp.fused.push_back(0.0);
        tp.env_q.resize(k);
        trace.tracked.push_back(std::move(tp));
    }

    auto checkpoint = [&](std::uint64_t t, std::uint64_t episode) {
        if (track_ape) {
            const Policy policy = greedy_policy(fused.materialize(tables));
            trace.ape.push_back({t, episode, ape_observed(options.oracle, policy, original)});
        }
    };

    auto refresh_greedy = [&](std::size_t n, std::size_t o) {
        const std::size_t best = row_argmin(tables[n], o);
        const std::size_t old = greedy[n][o];
        if (best == old) {
            return;
        }
        if (n == 0) {
            for (std::size_t m = 1; m < k; ++m) {
                const std::size_t other = greedy[m][o];
                if (other == old) {
                    --agree[m];
                }
                if (other == best) {
                    ++agree[m];
                }
            }
        } else {
            const std::size_t ref = greedy[0][o];
            if (old == ref) {
                --agree[n];
            }
            if (best == ref) {
                ++agree[n];
            }
        }
        greedy[n][o] = best;
    };

    std::vector<std::size_t> states(k, 0);
    std::vector<double> rates(k, 1.0);
    std::vector<double> max_cost(k, 0.0);
    std::uint64_t t = 0;
    std::uint64_t episode = 0;
    checkpoint(0, 0);
    while (!visits.front().complete() && !(config.max_steps > 0 && t >= config.max_steps)) {
        if (t >= config.step_cap) {
            throw CoverageError(fmt::format("step cap {} reached before every pair of environment 1 "
                                            "had {} visits",
                                            config.step_cap, config.min_visits),
                                visits.front().starved());
        }
        const std::size_t start = uniform_index(start_rng, ns);
        std::fill(states.begin(), states.end(), start);
        for (std::size_t i = 0; i < config.trajectory_len; ++i) {
            const std::uint64_t step = t + 1;
            const double epsilon = config.schedule.epsilon_at(step);
            for (std::size_t n = 0; n < k; ++n) {
                const Environment& env = *envs[n];
                const std::size_t o = env.observe(states[n]);
                const std::size_t a = epsilon_greedy(tables[n], o, epsilon, rngs[n]);
                const Sample draw = env.sample(states[n], a, rngs[n]);
                visits[n].add(o, a);
                const std::uint64_t alpha_t = config.schedule.alpha_index == AlphaIndex::Global
                                                  ? step
                                                  : visits[n].count(o, a);
                fused.flush(o * na + a, tables);
                const double value = q_update(tables[n], o, a, env.observe(draw.next_state),
                                              draw.cost, config.schedule.alpha_at(alpha_t), gamma);
                max_cost[n] = std::max(max_cost[n], std::abs(draw.cost));
                if (std::abs(value) > max_cost[n] / (1.0 - gamma) + 1.0) {
                    throw InvariantError(fmt::format("Q entry {} of environment {} exceeds the "
                                                     "value bound",
                                                     value, n + 1));
                }
                refresh_greedy(n, o);
                states[n] = draw.next_state;
            }
            if (t % config.weight_refresh == 0) {
                for (std::size_t n = 0; n < k; ++n) {
                    rates[n] = static_cast<double>(agree[n]) / static_cast<double>(num_obs);
                }
                weights = softmax(rates);
            }
            if (options.record_weights) {
                trace.weights.insert(trace.weights.end(), weights.begin(), weights.end());
                trace.step_episode.push_back(episode);
            }
            const double u_now = config.u_schedule ? config.u_schedule(t) : config.u;
            fused.advance(weights, tables, u_now);
            t = step;
            for (auto& tp : trace.tracked) {
                const std::size_t e = tp.state * na + tp.action;
                for (std::size_t n = 0; n < k; ++n) {
                    tp.env_q[n].push_back(tables[n](idx(tp.state), idx(tp.action)));
                }
                tp.fused.push_back(fused.value(e, tables));
            }
            if (options.snapshot_every > 0 && t % options.snapshot_every == 0) {
                trace.snapshots.emplace_back(t, fused.materialize(tables));
            }
            if (track_ape && t % options.ape_every == 0) {
                checkpoint(t, episode);
            }
        }
        ++episode;
    }
    trace.steps = t;
    trace.episodes = episode;
    result.q_it = fused.materialize(tables);
    result.policy = greedy_policy(result.q_it);
    result.env_q = std::move(tables);
    result.final_weights = weights;
    if (track_ape && (trace.ape.empty() || trace.ape.back().t != t)) {
        trace.ape.push_back(
            {t, episode, ape_observed(options.oracle, result.policy, original)});
    }
    return result;
}

} // namespace cousinsq
