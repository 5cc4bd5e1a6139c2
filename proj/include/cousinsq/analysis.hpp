#pragma once

#include "cousinsq/colink.hpp"
#include "cousinsq/mdp.hpp"
#include "cousinsq/trace.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace cousinsq {

/// Fraction of states where the two policies disagree.
double ape(const Policy& optimal, const Policy& estimated);

/// Index of (s, a) in trace.tracked; throws CadenceError when it was not tracked.
const TrackedPair& tracked_pair(const ExperimentTrace& trace, std::size_t s, std::size_t a);

struct DeltaTrace {
    /// delta[t] = Q^it_{t+1}(s,a) - Q^it_t(s,a), t = 0..T-1.
    std::vector<double> delta;
    /// gap[t] = |delta[t+1] - delta[t]|, t = 0..T-2.
    std::vector<double> gap;
};

DeltaTrace delta_trace(const ExperimentTrace& trace, std::size_t s, std::size_t a);

/**
 * Weighted per-environment updates. Entry [n][t] holds
 * eps^(n)_{t-1} = w^(n)_t Q^(n)_t(s,a) - w^(n)_{t-1} Q^(n)_{t-1}(s,a)
 * for t = 0..T-1, where Q_{-1} = 0 and w_{-1} are the initial weights.
 */
std::vector<std::vector<double>> weighted_updates(const ExperimentTrace& trace, std::size_t s,
                                                  std::size_t a);

/// max_t |delta_t - u delta_{t-1} - (1 - u) sum_n eps^(n)_{t-1}| with delta_{-1} = 0.
double recursion_residual(const ExperimentTrace& trace, std::size_t s, std::size_t a);

struct TailBoundResult {
    std::vector<double> theta;
    double theta_sum = 0.0;
    double tail_max_delta = 0.0;
    bool holds = true;
};

/// theta^(n) = max_t |eps^(n)_t|; checks the last tail_fraction of |delta_t| against sum theta.
TailBoundResult tail_error_bound(const ExperimentTrace& trace, std::size_t s, std::size_t a,
                                 double tail_fraction = 0.1);

/// ceil(log(1 - beta / theta_sum) / log(u)).
std::uint64_t first_passage_bound(double beta, double u, double theta_sum);

/// Smallest iteration count t >= 1 with |delta_{t-1}| <= beta, if any.
std::optional<std::uint64_t> first_passage(const ExperimentTrace& trace, std::size_t s,
                                           std::size_t a, double beta);

struct GapDecayResult {
    std::vector<double> phi;
    bool all_below_one = true;
    /// Number of zero denominators skipped per environment.
    std::vector<std::size_t> skipped;
    /// True when some environment's trace is identically zero.
    bool vacuous = false;
};

GapDecayResult gap_decay_check(const ExperimentTrace& trace, std::size_t s, std::size_t a);

struct Moments {
    double mean = 0.0;
    double variance = 0.0;
};

/// Mean and biased variance over series[t - window .. t + window] (2 window + 1 points).
Moments windowed_moments(const std::vector<double>& series, std::size_t t, std::size_t window);

struct VarianceBounds {
    double strict = 0.0;
    double modest = 0.0;
    double none = 0.0;
};

VarianceBounds variance_bounds(double u, double lambda);

/// E_t = Q^it_t(s,a) - q_star for t = 0..T.
std::vector<double> fused_error(const ExperimentTrace& trace, std::size_t s, std::size_t a,
                                double q_star);

struct ErrorDistribution {
    double mean = 0.0;
    double variance = 0.0;
    /// Maximum-likelihood normal fit.
    double fit_mu = 0.0;
    double fit_sigma = 0.0;
    /// Kolmogorov-Smirnov distance between the sample and the fitted normal.
    double ks_distance = 0.0;
    /// sqrt(3) times the sample standard deviation.
    double lambda = 0.0;
};

/// Per-environment statistics of X^(n)_t = Q^(n)_t(s,a) - q_star over steps [from, to).
std::vector<ErrorDistribution> error_distribution_diagnostics(const ExperimentTrace& trace,
                                                              std::size_t s, std::size_t a,
                                                              double q_star, std::size_t from,
                                                              std::size_t to);

/// max_n lambda_n over the second half of the run.
double estimate_lambda(const ExperimentTrace& trace, std::size_t s, std::size_t a, double q_star);

struct DistanceCorrelation {
    double value = 0.0;
    bool degenerate = false;
};

/// Sample distance correlation in O(n) memory; constant inputs give 0 with the flag set.
DistanceCorrelation distance_correlation(const std::vector<double>& x, const std::vector<double>& y);

/**
 * Averaged distance correlation between X^(n1)_{t1} and X^(n2)_{t2}, where
 * the samples are the runs, averaged over t1 != t2 in [from, to) with the
 * given stride. Returns a K x K matrix.
 */
Matrix adc_matrix(const std::vector<const ExperimentTrace*>& runs, std::size_t s, std::size_t a,
                  double q_star, std::size_t from, std::size_t to, std::size_t stride);

struct BellmanScore {
    int order = 0;
    double norm = 0.0;
};

struct BellmanSelection {
    /// Every candidate, ascending by norm (lower order first on ties).
    std::vector<BellmanScore> ranking;
    std::vector<int> selected;
    /// True when two candidates tie on the norm within 1e-12.
    bool ties = false;
};

/// ||c_pi + gamma P_pi v^(n)_pi - v^(1)_pi||_2 with P, c and v^(1) from the reference.
double bellman_error_norm(const Mdp& reference, const Mdp& candidate, const Policy& policy);

/**
 * Ranks the cousins by the Bellman error norm, with pi the value-iteration
 * policy of the reference (estimated) MDP, and returns the k best orders.
 */
BellmanSelection bellman_select(const std::vector<SyntheticEnvironment>& envs,
                                const Mdp& reference, std::size_t k);

} // namespace cousinsq
