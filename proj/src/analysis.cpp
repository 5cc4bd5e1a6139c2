#include "cousinsq/analysis.hpp"

#include "cousinsq/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cousinsq {

double ape(const Policy& optimal, const Policy& estimated) {
    if (optimal.size() != estimated.size()) {
        throw ArgumentError(fmt::format("policy lengths differ ({} vs {})", optimal.size(),
                                        estimated.size()));
    }
    if (optimal.size() == 0) {
        throw ArgumentError("policies are empty");
    }
    std::size_t wrong = 0;
    for (std::size_t s = 0; s < optimal.size(); ++s) {
        wrong += optimal[s] != estimated[s] ? 1 : 0;
    }
    return static_cast<double>(wrong) / static_cast<double>(optimal.size());
}

const TrackedPair& tracked_pair(const ExperimentTrace& trace, std::size_t s, std::size_t a) {
    for (const auto& tp : trace.tracked) {
        if (tp.state == s && tp.action == a) {
            return tp;
        }
    }
    throw CadenceError(fmt::format("pair ({}, {}) was not tracked at every step", s, a));
}

DeltaTrace delta_trace(const ExperimentTrace& trace, std::size_t s, std::size_t a) {
    const TrackedPair& tp = tracked_pair(trace, s, a);
    if (tp.fused.size() != trace.steps + 1) {
        throw CadenceError(fmt::format("pair ({}, {}) has {} fused values for {} steps", s, a,
                                       tp.fused.size(), trace.steps));
    }
    DeltaTrace out;
    out.delta.reserve(trace.steps);
    for (std::size_t t = 0; t + 1 < tp.fused.size(); ++t) {
        out.delta.push_back(tp.fused[t + 1] - tp.fused[t]);
    }
    for (std::size_t t = 0; t + 1 < out.delta.size(); ++t) {
        out.gap.push_back(std::abs(out.delta[t + 1] - out.delta[t]));
    }
    return out;
}

std::vector<std::vector<double>> weighted_updates(const ExperimentTrace& trace, std::size_t s,
                                                  std::size_t a) {
    const TrackedPair& tp = tracked_pair(trace, s, a);
    const std::size_t k = trace.num_envs();
    const std::size_t steps = trace.steps;
    if (trace.weights.size() != steps * k || trace.initial_weights.size() != k) {
        throw CadenceError("weights were not recorded at every step");
    }
    if (tp.env_q.size() != k) {
        throw CadenceError("per-environment values missing for the tracked pair");
    }
    std::vector<std::vector<double>> eps(k, std::vector<double>(steps, 0.0));
    for (std::size_t n = 0; n < k; ++n) {
        const auto& q = tp.env_q[n];
        if (q.size() != steps) {
            throw CadenceError("per-environment values were not recorded at every step");
        }
        for (std::size_t t = 0; t < steps; ++t) {
            const double now = trace.weight(t, n) * q[t];
            const double before = t == 0 ? 0.0 : trace.weight(t - 1, n) * q[t - 1];
            eps[n][t] = now - before;
        }
    }
    return eps;
}

double recursion_residual(const ExperimentTrace& trace, std::size_t s, std::size_t a) {
    const DeltaTrace d = delta_trace(trace, s, a);
    const auto eps = weighted_updates(trace, s, a);
    const double u = trace.update_ratio;
    double previous = 0.0;
    double worst = 0.0;
    for (std::size_t t = 0; t < d.delta.size(); ++t) {
        double sum = 0.0;
        for (const auto& e : eps) {
            sum += e[t];
        }
        const double expected = u * previous + (1.0 - u) * sum;
        worst = std::max(worst, std::abs(d.delta[t] - expected));
        previous = d.delta[t];
    }
    return worst;
}

TailBoundResult tail_error_bound(const ExperimentTrace& trace, std::size_t s, std::size_t a,
                                 double tail_fraction) {
    if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) {
        throw ArgumentError("tail_fraction must lie in (0, 1]");
    }
    const DeltaTrace d = delta_trace(trace, s, a);
    const auto eps = weighted_updates(trace, s, a);
    TailBoundResult out;
    for (const auto& e : eps) {
        double theta = 0.0;
        for (double v : e) {
            theta = std::max(theta, std::abs(v));
        }
        out.theta.push_back(theta);
        out.theta_sum += theta;
    }
    const auto tail = static_cast<std::size_t>(
        std::ceil(tail_fraction * static_cast<double>(d.delta.size())));
    for (std::size_t t = d.delta.size() - std::min(tail, d.delta.size()); t < d.delta.size(); ++t) {
        out.tail_max_delta = std::max(out.tail_max_delta, std::abs(d.delta[t]));
    }
    out.holds = out.tail_max_delta <= out.theta_sum * (1.0 + 1e-12) + 1e-15;
    return out;
}

std::uint64_t first_passage_bound(double beta, double u, double theta_sum) {
    if (!(u > 0.0 && u < 1.0)) {
        throw ArgumentError(fmt::format("u must lie in (0, 1), got {}", u));
    }
    if (!(beta > 0.0)) {
        throw ArgumentError("beta must be positive");
    }
    if (!(beta < theta_sum)) {
        throw ArgumentError(fmt::format("beta = {} must be below theta_sum = {}", beta, theta_sum));
    }
    const double t = std::log(1.0 - beta / theta_sum) / std::log(u);
    // Guard against t landing a few ulps above an integer.
    return static_cast<std::uint64_t>(std::ceil(t - 1e-12));
}

std::optional<std::uint64_t> first_passage(const ExperimentTrace& trace, std::size_t s,
                                           std::size_t a, double beta) {
    const DeltaTrace d = delta_trace(trace, s, a);
    for (std::size_t t = 0; t < d.delta.size(); ++t) {
        if (std::abs(d.delta[t]) <= beta) {
            return t + 1;
        }
    }
    return std::nullopt;
}

GapDecayResult gap_decay_check(const ExperimentTrace& trace, std::size_t s, std::size_t a) {
    const auto eps = weighted_updates(trace, s, a);
    GapDecayResult out;
    for (const auto& e : eps) {
        double phi = 0.0;
        std::size_t skipped = 0;
        bool nonzero = false;
        for (std::size_t t = 0; t + 1 < e.size(); ++t) {
            if (e[t] != 0.0) {
                nonzero = true;
                phi = std::max(phi, std::abs(e[t + 1]) / std::abs(e[t]));
            } else {
                ++skipped;
            }
        }
        if (!e.empty() && e.back() != 0.0) {
            nonzero = true;
        }
        if (!nonzero) {
            out.vacuous = true;
        }
        out.phi.push_back(phi);
        out.skipped.push_back(skipped);
        if (phi >= 1.0) {
            out.all_below_one = false;
        }
    }
    return out;
}

Moments windowed_moments(const std::vector<double>& series, std::size_t t, std::size_t window) {
    if (t < 2 * window) {
        throw RangeError(fmt::format("t = {} must be at least twice the window {}", t, window));
    }
    if (t + window >= series.size()) {
        throw RangeError(fmt::format("series of length {} does not cover [{}, {}]", series.size(),
                                     t - window, t + window));
    }
    const auto count = static_cast<double>(2 * window + 1);
    Moments m;
    for (std::size_t i = t - window; i <= t + window; ++i) {
        m.mean += series[i];
    }
    m.mean /= count;
    for (std::size_t i = t - window; i <= t + window; ++i) {
        m.variance += (series[i] - m.mean) * (series[i] - m.mean);
    }
    m.variance /= count;
    return m;
}

VarianceBounds variance_bounds(double u, double lambda) {
    if (!(u > 0.0 && u < 1.0)) {
        throw ArgumentError(fmt::format("u must lie in (0, 1), got {}", u));
    }
    if (!(lambda > 0.0)) {
        throw ArgumentError(fmt::format("lambda must be positive, got {}", lambda));
    }
    const double ratio = (1.0 - u) / (1.0 + u);
    const double l2 = lambda * lambda;
    return {ratio * l2 / 3.0, ratio * l2, 2.0 * l2 / ((1.0 + u) * (1.0 + u)) + ratio * l2};
}

std::vector<double> fused_error(const ExperimentTrace& trace, std::size_t s, std::size_t a,
                                double q_star) {
    const TrackedPair& tp = tracked_pair(trace, s, a);
    std::vector<double> out(tp.fused.size());
    for (std::size_t t = 0; t < out.size(); ++t) {
        out[t] = tp.fused[t] - q_star;
    }
    return out;
}

namespace {

double normal_cdf(double x, double mu, double sigma) {
    return 0.5 * std::erfc(-(x - mu) / (sigma * std::sqrt(2.0)));
}

} // namespace

std::vector<ErrorDistribution> error_distribution_diagnostics(const ExperimentTrace& trace,
                                                              std::size_t s, std::size_t a,
                                                              double q_star, std::size_t from,
                                                              std::size_t to) {
    const TrackedPair& tp = tracked_pair(trace, s, a);
    std::vector<ErrorDistribution> out;
    for (const auto& series : tp.env_q) {
        if (from >= to || to > series.size()) {
            throw RangeError(fmt::format("window [{}, {}) outside a series of length {}", from, to,
                                         series.size()));
        }
        std::vector<double> x(series.begin() + static_cast<std::ptrdiff_t>(from),
                              series.begin() + static_cast<std::ptrdiff_t>(to));
        for (double& v : x) {
            v -= q_star;
        }
        const auto m = static_cast<double>(x.size());
        ErrorDistribution d;
        d.mean = std::accumulate(x.begin(), x.end(), 0.0) / m;
        double ss = 0.0;
        for (double v : x) {
            ss += (v - d.mean) * (v - d.mean);
        }
        d.variance = ss / m;
        d.fit_mu = d.mean;
        d.fit_sigma = std::sqrt(d.variance);
        d.lambda = x.size() > 1 ? std::sqrt(3.0) * std::sqrt(ss / (m - 1.0)) : 0.0;
        if (d.fit_sigma > 0.0) {
            std::sort(x.begin(), x.end());
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double f = normal_cdf(x[i], d.fit_mu, d.fit_sigma);
                d.ks_distance = std::max({d.ks_distance, std::abs(f - static_cast<double>(i) / m),
                                          std::abs(f - static_cast<double>(i + 1) / m)});
            }
        }
        out.push_back(d);
    }
    return out;
}

double estimate_lambda(const ExperimentTrace& trace, std::size_t s, std::size_t a, double q_star) {
    const std::size_t steps = trace.steps;
    if (steps < 4) {
        throw RangeError("run too short to estimate lambda");
    }
    double lambda = 0.0;
    for (const auto& d : error_distribution_diagnostics(trace, s, a, q_star, steps / 2, steps)) {
        lambda = std::max(lambda, d.lambda);
    }
    return lambda;
}

DistanceCorrelation distance_correlation(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) {
        throw ArgumentError("distance correlation needs equal-length samples");
    }
    const std::size_t n = x.size();
    if (n < 4) {
        throw ArgumentError("distance correlation needs at least 4 samples");
    }
    std::vector<double> ra(n, 0.0);
    std::vector<double> rb(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            ra[i] += std::abs(x[i] - x[j]);
            rb[i] += std::abs(y[i] - y[j]);
        }
    }
    const auto dn = static_cast<double>(n);
    double ga = 0.0;
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ra[i] /= dn;
        rb[i] /= dn;
        ga += ra[i];
        gb += rb[i];
    }
    ga /= dn;
    gb /= dn;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double aij = std::abs(x[i] - x[j]) - ra[i] - ra[j] + ga;
            const double bij = std::abs(y[i] - y[j]) - rb[i] - rb[j] + gb;
            sab += aij * bij;
            saa += aij * aij;
            sbb += bij * bij;
        }
    }
    DistanceCorrelation out;
    const double scale = 1e-24 * (1.0 + ga * ga) * (1.0 + gb * gb);
    if (saa <= scale || sbb <= scale) {
        out.degenerate = true;
        return out;
    }
    out.value = std::sqrt(std::max(0.0, sab) / std::sqrt(saa * sbb));
    out.value = std::min(out.value, 1.0);
    return out;
}

Matrix adc_matrix(const std::vector<const ExperimentTrace*>& runs, std::size_t s, std::size_t a,
                  double q_star, std::size_t from, std::size_t to, std::size_t stride) {
    if (runs.size() < 4) {
        throw ArgumentError("ADC needs at least 4 runs");
    }
    if (stride < 1 || from >= to) {
        throw ArgumentError("ADC needs a nonempty time range and a positive stride");
    }
    const std::size_t k = runs.front()->num_envs();
    std::vector<std::size_t> times;
    for (std::size_t t = from; t < to; t += stride) {
        times.push_back(t);
    }
    if (times.size() < 2) {
        throw ArgumentError("ADC needs at least two time indices");
    }
    // samples[n][i] holds X^(n)_{times[i]} across runs.
    std::vector<std::vector<std::vector<double>>> samples(
        k, std::vector<std::vector<double>>(times.size()));
    for (const ExperimentTrace* run : runs) {
        if (run->num_envs() != k) {
            throw ArgumentError("runs disagree on the number of environments");
        }
        const TrackedPair& tp = tracked_pair(*run, s, a);
        for (std::size_t n = 0; n < k; ++n) {
            if (tp.env_q[n].size() < to) {
                throw RangeError("a run is shorter than the ADC time range");
            }
            for (std::size_t i = 0; i < times.size(); ++i) {
                samples[n][i].push_back(tp.env_q[n][times[i]] - q_star);
            }
        }
    }
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t n1 = 0; n1 < k; ++n1) {
        for (std::size_t n2 = n1; n2 < k; ++n2) {
            double total = 0.0;
            std::size_t count = 0;
            for (std::size_t i = 0; i < times.size(); ++i) {
                for (std::size_t j = 0; j < times.size(); ++j) {
                    if (i == j) continue;
                    total += distance_correlation(samples[n1][i], samples[n2][j]).value;
                    ++count;
                }
            }
            const double mean = total / static_cast<double>(count);
            out(static_cast<Eigen::Index>(n1), static_cast<Eigen::Index>(n2)) = mean;
            out(static_cast<Eigen::Index>(n2), static_cast<Eigen::Index>(n1)) = mean;
        }
    }
    return out;
}

double bellman_error_norm(const Mdp& reference, const Mdp& candidate, const Policy& policy) {
    if (reference.num_states() != candidate.num_states() ||
        reference.num_actions() != candidate.num_actions()) {
        throw ArgumentError("candidate and reference MDPs differ in shape");
    }
    const ValueFunction v1 = policy_evaluation(reference, policy);
    const ValueFunction vn = policy_evaluation(candidate, policy);
    const auto ns = static_cast<Eigen::Index>(reference.num_states());
    Vector be(ns);
    for (Eigen::Index s = 0; s < ns; ++s) {
        const std::size_t a = policy[static_cast<std::size_t>(s)];
        be(s) = reference.costs().expected(static_cast<std::size_t>(s), a) +
                reference.gamma() * reference.transitions().action(a).row(s).dot(vn) - v1(s);
    }
    return be.norm();
}

BellmanSelection bellman_select(const std::vector<SyntheticEnvironment>& envs,
                                const Mdp& reference, std::size_t k) {
    if (k < 1) {
        throw ArgumentError("k must be >= 1");
    }
    if (envs.empty()) {
        throw ArgumentError("no candidate environments");
    }
    const Policy policy = value_iteration(reference, 1e-10).policy;
    BellmanSelection out;
    for (const auto& env : envs) {
        out.ranking.push_back({env.order, bellman_error_norm(reference, env.mdp, policy)});
    }
    std::stable_sort(out.ranking.begin(), out.ranking.end(),
                     [](const BellmanScore& x, const BellmanScore& y) {
                         if (x.norm != y.norm) return x.norm < y.norm;
                         return x.order < y.order;
                     });
    for (std::size_t i = 0; i + 1 < out.ranking.size(); ++i) {
        const double gap = out.ranking[i + 1].norm - out.ranking[i].norm;
        if (gap <= 1e-12 * std::max(1.0, out.ranking[i].norm)) {
            out.ties = true;
        }
    }
    for (std::size_t i = 0; i < std::min(k, out.ranking.size()); ++i) {
        out.selected.push_back(out.ranking[i].order);
    }
    return out;
}

} // namespace cousinsq
