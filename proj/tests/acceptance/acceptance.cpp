// Acceptance suite: one PASS/FAIL line per criterion.
//
//   cousinsq_acceptance [--only 4,9] [--report out.json]

#include "cousinsq/aggregation.hpp"
#include "cousinsq/analysis.hpp"
#include "cousinsq/colink.hpp"
#include "cousinsq/config.hpp"
#include "cousinsq/esql.hpp"
#include "cousinsq/experiment.hpp"
#include "cousinsq/qlearning.hpp"
#include "cousinsq/wireless.hpp"

#include "oracles.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>

using namespace cousinsq;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
    nlohmann::json data;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

double mean(const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

std::vector<const Environment*> pointers(const std::vector<MdpEnvironment>& envs) {
    std::vector<const Environment*> out;
    for (const auto& e : envs) out.push_back(&e);
    return out;
}

Verdict oracle_equivalence() {
    const auto start = Clock::now();
    std::size_t matches = 0;
    for (unsigned i = 0; i < 50; ++i) {
        const std::size_t ns = 2 + i % 5;
        const std::size_t na = 2 + i % 2;
        const Mdp mdp = i % 2 == 0 ? oracle::dense_random_mdp(ns, na, 0.9, 100 + i)
                                   : random_mdp({ns, na, std::min<std::size_t>(2, ns), 0.9, 100 + i});
        const auto exhaustive = oracle::exhaustive_optimum(mdp);
        const Policy vi = value_iteration(mdp, 1e-12).policy;
        matches += vi.actions == exhaustive.policy ? 1 : 0;
    }
    const double secs = seconds_since(start);
    return {matches == 50 && secs < 10.0,
            fmt::format("{}/50 policies match, {:.2f} s", matches, secs),
            {{"matches", matches}, {"seconds", secs}}};
}

Verdict colink_fidelity() {
    double worst = 0.0;
    for (unsigned i = 0; i < 100; ++i) {
        const std::size_t ns = 2 + i % 15;
        const int order = 2 + static_cast<int>(i % 7);
        const Matrix p = oracle::random_stochastic(ns, 300 + i, 0.1 * (i % 5));
        const SimilarityTensor sim = build_colink(TransitionTensor({p}), order);
        const Matrix naive = oracle::naive_colink(p, order);
        worst = std::max(worst, (sim.raw[0] - naive).cwiseAbs().maxCoeff());
    }
    return {worst <= 1e-12, fmt::format("max entry error {:.3e} over 100 kernels", worst),
            {{"max_error", worst}}};
}

Verdict single_env_degeneracy() {
    std::size_t matches = 0;
    for (unsigned i = 0; i < 20; ++i) {
        const Mdp mdp = oracle::dense_random_mdp(3 + i % 6, 2 + i % 2, 0.85, 500 + i);
        const MdpEnvironment env(mdp);
        EnsembleConfig ec;
        ec.orders = {1};
        ec.seed = 40 + i;
        ec.min_visits = 40;
        BaselineConfig bc;
        bc.seed = ec.seed;
        bc.min_visits = ec.min_visits;
        const auto esql = run_esql({&env}, ec);
        const auto simple = run_baseline(env, bc);
        matches += esql.policy == simple.policy ? 1 : 0;
    }
    return {matches == 20, fmt::format("{}/20 final policies identical", matches),
            {{"matches", matches}}};
}

// Model-3 instance shared by the APE trend criteria.
std::string model3_section(std::size_t buffer) {
    return fmt::format(R"(model:
  id: 3
  num_tx: 2
  num_rx: 2
  buffer_size: {}
  max_send: 1
)",
                       buffer);
}

Verdict ape_trend() {
    constexpr std::uint64_t kBudget = 30000;  // 2000 episodes of 15 steps
    constexpr std::uint64_t kEvery = 750;
    const auto start = Clock::now();
    auto cfg = parse_config(model3_section(5) + fmt::format(R"(cousins:
  orders: [1, 2, 3, 4, 5]
ensemble:
  u: 0.5
  trajectory_len: 15
  min_visits: 50
  max_steps: {}
baselines: [simple]
seeds: [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20]
output:
  ape_every: {}
)",
                                                            kBudget, kEvery));
    const auto prepared = prepare_experiment(cfg);
    const auto outcomes = run_seeds(prepared, cfg);

    std::map<std::uint64_t, std::vector<double>> esql;
    std::map<std::uint64_t, std::vector<double>> simple;
    for (const auto& o : outcomes) {
        for (const auto& p : o.esql.trace.ape) esql[p.t].push_back(p.ape);
        for (const auto& p : o.baselines.at(0).trace.ape) simple[p.t].push_back(p.ape);
    }
    double best = 1.0;
    bool dominated = true;
    nlohmann::json curve = nlohmann::json::array();
    std::string worst_point;
    double worst_margin = -1.0;
    for (const auto& [t, values] : esql) {
        if (t > kBudget || values.size() != outcomes.size()) continue;
        const double e = mean(values);
        best = std::min(best, e);
        const auto it = simple.find(t);
        if (it == simple.end() || it->second.size() != outcomes.size()) continue;
        const double s = mean(it->second);
        curve.push_back({{"t", t}, {"esql", e}, {"simple", s}});
        if (4 * t >= kBudget && e - s > worst_margin) {
            worst_margin = e - s;
            worst_point = fmt::format("t={} esql={:.3f} simple={:.3f}", t, e, s);
        }
        if (4 * t >= kBudget && e > s) dominated = false;
    }
    const double secs = seconds_since(start);
    const bool pass = best <= 0.15 && dominated && secs < 600.0;
    return {pass,
            fmt::format("|S|={} best mean ESQL APE {:.3f} (target 0.15); ESQL <= simple on the "
                        "last 75% of the budget: {} (largest gap {}); {:.0f} s",
                        prepared.primary().num_states(), best, dominated ? "yes" : "no",
                        worst_point, secs),
            {{"curve", curve}, {"best", best}, {"dominated", dominated}, {"seconds", secs}}};
}

Verdict weight_closed_form() {
    std::size_t maximal = 0;
    for (unsigned i = 0; i < 50; ++i) {
        const Mdp mdp = oracle::dense_random_mdp(4 + i % 5, 2 + i % 2, 0.9, 700 + i);
        std::vector<Mdp> mdps;
        for (const auto& c : make_cousins(mdp, {1, 2, 3, 4, 5})) mdps.push_back(c.mdp);
        const auto w = closed_form_weights(mdps);
        maximal += *std::max_element(w.begin(), w.end()) == w[0] ? 1 : 0;
    }
    double worst = 0.0;
    for (unsigned i = 0; i < 10; ++i) {
        const Mdp mdp = oracle::dense_random_mdp(4 + i % 3, 2, 0.9, 800 + i);
        std::vector<Mdp> mdps;
        std::vector<MdpEnvironment> envs;
        for (const auto& c : make_cousins(mdp, {1, 2, 3})) {
            mdps.push_back(c.mdp);
            envs.emplace_back(c.mdp);
        }
        EnsembleConfig ec;
        ec.orders = {1, 2, 3};
        ec.min_visits = 2000;
        ec.seed = 60 + i;
        TraceOptions opts;
        opts.record_weights = false;
        const auto r = run_esql(pointers(envs), ec, opts);
        const auto expected = closed_form_weights(mdps);
        for (std::size_t n = 0; n < expected.size(); ++n) {
            worst = std::max(worst, std::abs(r.final_weights[n] - expected[n]));
        }
    }
    return {maximal == 50 && worst <= 0.05,
            fmt::format("w1 maximal on {}/50; max |w_final - w_closed| = {:.4f}", maximal, worst),
            {{"maximal", maximal}, {"max_deviation", worst}}};
}

// Converged runs on small random MDPs, checked pair by pair.
std::vector<nlohmann::json> bounds_reports() {
    static std::vector<nlohmann::json> cache;
    if (!cache.empty()) return cache;
    for (unsigned instance = 1; instance <= 3; ++instance) {
        auto cfg = parse_config(fmt::format(R"(model:
  id: random
  num_states: 6
  num_actions: 2
  branching: 3
  gamma: 0.8
  seed: {}
cousins:
  orders: [1, 2, 3]
ensemble:
  u: 0.5
  min_visits: 400
schedule:
  alpha_index: visits
  alpha_scale: 20
analysis:
  bounds:
    window: 20
baselines: []
seeds: [{}]
)",
                                            instance, instance));
        const auto prepared = prepare_experiment(cfg);
        TraceOptions extra;
        for (std::size_t s = 0; s < prepared.primary().num_states(); ++s)
            for (std::size_t a = 0; a < prepared.primary().num_actions(); ++a)
                extra.tracked.emplace_back(s, a);
        const auto outcomes = run_seeds(prepared, cfg, extra);
        cache.push_back(verify_bounds(prepared, cfg, outcomes));
    }
    return cache;
}

Verdict variance_bounds_check() {
    std::size_t checked = 0;
    std::size_t passed = 0;
    bool grid = true;
    for (const auto& report : bounds_reports()) {
        grid = grid && report["grid_ordering"].get<bool>();
        for (const auto& seed : report["seeds"]) {
            for (const auto& pair : seed["pairs"]) {
                if (!pair.contains("tail_variance")) continue;
                ++checked;
                const double v = pair["tail_variance"].get<double>();
                if (!pair.contains("bound_strict")) {
                    passed += v <= 1e-12 ? 1 : 0;
                    continue;
                }
                passed += v <= pair["bound_strict"].get<double>() &&
                                  v <= pair["bound_modest"].get<double>() &&
                                  v <= pair["bound_none"].get<double>()
                              ? 1
                              : 0;
            }
        }
    }
    const double fraction = checked ? static_cast<double>(passed) / static_cast<double>(checked) : 0.0;
    return {checked > 0 && fraction >= 0.95 && grid,
            fmt::format("{}/{} pairs below all three bounds ({:.1f}%), 100-point grid ordering {}",
                        passed, checked, 100.0 * fraction, grid ? "holds" : "violated"),
            {{"checked", checked}, {"passed", passed}, {"grid", grid}}};
}

Verdict convergence_props() {
    std::vector<double> head;
    std::vector<double> tail;
    std::size_t pairs = 0;
    std::size_t tail_bound = 0;
    std::size_t within_passage = 0;
    std::size_t passage_checked = 0;
    double residual = 0.0;
    for (const auto& report : bounds_reports()) {
        for (const auto& seed : report["seeds"]) {
            for (const auto& pair : seed["pairs"]) {
                ++pairs;
                residual = std::max(residual, pair["recursion_residual"].get<double>());
                tail_bound += pair["tail_max_delta"].get<double>() <=
                                 pair["theta_sum"].get<double>() * (1.0 + 1e-12) + 1e-15
                             ? 1
                             : 0;
                if (!pair["gap_first_block"].is_null()) {
                    head.push_back(pair["gap_first_block"].get<double>());
                    tail.push_back(pair["gap_last_block"].get<double>());
                }
                if (pair.contains("predicted_iterations")) {
                    ++passage_checked;
                    const auto& fp = pair["first_passage"];
                    within_passage += !fp.is_null() && fp.get<std::uint64_t>() <=
                                                      pair["predicted_iterations"].get<std::uint64_t>()
                                     ? 1
                                     : 0;
                }
            }
        }
    }
    const double gap_head = head.empty() ? 0.0 : mean(head);
    const double gap_tail = tail.empty() ? 1.0 : mean(tail);
    const bool pass = gap_tail < 1e-3 && gap_tail <= gap_head && tail_bound == pairs &&
                      within_passage == passage_checked && residual <= 1e-10 && pairs > 0;
    return {pass,
            fmt::format("mean gap {:.2e} -> {:.2e}; tail bound {}/{}; first passage {}/{}; "
                        "recursion residual {:.1e}",
                        gap_head, gap_tail, tail_bound, pairs, within_passage, passage_checked, residual),
            {{"gap_head", gap_head}, {"gap_tail", gap_tail}, {"residual", residual}}};
}

Verdict bellman_search() {
    std::vector<double> overlaps;
    bool faster = true;
    nlohmann::json instances = nlohmann::json::array();
    for (unsigned i = 1; i <= 10; ++i) {
        auto cfg = parse_config(fmt::format(R"(model:
  id: random
  num_states: 8
  num_actions: 3
  branching: 3
  gamma: 0.9
  seed: {}
cousins:
  estimate_visits: 1000
  estimate_seed: {}
ensemble:
  min_visits: 50
analysis:
  bellman_select:
    k: 3
    candidates: [2, 3, 4, 5, 6, 7, 8, 9, 10]
    greedy: true
    greedy_seeds: [1, 2, 3, 4, 5]
)",
                                            900 + i, i));
        const auto doc = select_envs(cfg);
        const double overlap = doc["greedy"]["overlap"].get<double>() / 3.0;
        overlaps.push_back(overlap);
        const double b = doc["timing"]["bellman_seconds"].get<double>();
        const double g = doc["timing"]["greedy_seconds"].get<double>();
        faster = faster && b < g;
        instances.push_back({{"bellman", doc["bellman"]["selected"]},
                             {"greedy", doc["greedy"]["selected"]},
                             {"bellman_seconds", b},
                             {"greedy_seconds", g}});
    }
    const double m = mean(overlaps);
    return {m >= 0.7 && faster,
            fmt::format("mean top-3 overlap {:.0f}%, Bellman faster on every instance: {}",
                        100.0 * m, faster ? "yes" : "no"),
            {{"overlap", m}, {"instances", instances}}};
}

Verdict aggregation_trend() {
    const std::vector<std::size_t> ks{0, 1, 2, 4, 8};
    const std::string base = model3_section(3) + R"(cousins:
  orders: [1, 2, 3]
ensemble:
  min_visits: 50
baselines: []
seeds: [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20]
output:
  ape_every: 1000000000
)";
    std::vector<double> apes;
    bool memory = true;
    double spread = 0.0;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t k : ks) {
        const auto cfg = parse_config(base + fmt::format("aggregation:\n  k: {}\n", k));
        const auto prepared = prepare_experiment(cfg);
        const auto outcomes = run_seeds(prepared, cfg);
        std::vector<double> values;
        for (const auto& o : outcomes) values.push_back(o.esql.ape.value());
        apes.push_back(mean(values));
        const std::size_t clusters =
            prepared.aggregation ? prepared.aggregation->cluster_count() : prepared.primary().num_states();
        memory = memory && prepared.table_entries() == clusters * prepared.primary().num_actions();
        spread = std::max(spread, prepared.cost_spread);
        rows.push_back({{"k", k}, {"ape", apes.back()}, {"clusters", clusters}});
    }
    bool monotone = true;
    for (std::size_t i = 0; i + 1 < apes.size(); ++i) monotone = monotone && apes[i] <= apes[i + 1];

    // k = 0 wrapper against the bare environments.
    const auto cfg = parse_config(base);
    const auto prepared = prepare_experiment(cfg);
    auto identity = std::make_shared<const AggregationMap>(build_aggregation(
        prepared.primary().num_states(), [](std::size_t s) { return std::vector<double>{double(s)}; },
        0));
    std::vector<AggregatedEnvironment> wrapped;
    for (const Environment* env : prepared.envs) wrapped.emplace_back(*env, identity);
    std::vector<const Environment*> wrapped_ptrs;
    for (const auto& w : wrapped) wrapped_ptrs.push_back(&w);
    EnsembleConfig ec = cfg.ensemble;
    ec.seed = 3;
    const auto bare = run_esql(prepared.envs, ec);
    const auto through = run_esql(wrapped_ptrs, ec);
    const bool identical = bare.q_it == through.q_it && bare.trace.steps == through.trace.steps;

    std::string curve;
    for (std::size_t i = 0; i < ks.size(); ++i) curve += fmt::format(" k={}:{:.3f}", ks[i], apes[i]);
    return {monotone && memory && identical,
            fmt::format("APE{} ({}); memory exact: {}; k=0 bit-identical: {}; max cost spread {:.3f}",
                        curve, monotone ? "nondecreasing" : "not monotone", memory ? "yes" : "no",
                        identical ? "yes" : "no", spread),
            {{"rows", rows}, {"spread", spread}}};
}

Verdict estimation_consistency() {
    Model1Config mc;
    mc.num_tx = 2;
    mc.buffer_size = 1;
    mc.channels = {GilbertElliotChannel::banded(3, 0.8, 0.9, 0.3)};
    const Model1 model(mc);
    const Mdp exact = model.materialize();
    const std::vector<std::size_t> visits{100, 1000, 10000};
    std::vector<double> means;
    std::vector<double> row_means;
    for (std::size_t v : visits) {
        std::vector<double> errs;
        std::vector<double> row_errs;
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            Rng rng(derive_seed(seed, v));
            const PttEstimate est = estimate_ptt(model, v, rng);
            double entry = 0.0;
            double row = 0.0;
            for (std::size_t a = 0; a < model.num_actions(); ++a) {
                const Matrix diff = (est.transitions.action(a) - exact.transitions().action(a)).cwiseAbs();
                entry = std::max(entry, diff.maxCoeff());
                row = std::max(row, diff.rowwise().sum().maxCoeff());
            }
            errs.push_back(entry);
            row_errs.push_back(row);
        }
        means.push_back(mean(errs));
        row_means.push_back(mean(row_errs));
    }
    const bool monotone = means[0] >= means[1] && means[1] >= means[2];
    return {monotone && means[2] < 0.05,
            fmt::format("|S|={} mean max-entry error {:.4f} / {:.4f} / {:.4f} at 1e2 / 1e3 / 1e4 "
                        "visits (max row sum {:.4f} at 1e4)",
                        model.num_states(), means[0], means[1], means[2], row_means[2]),
            {{"entry", means}, {"row_sum", row_means}}};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> only;
    std::string report_path;
    app.add_option("--only", only, "criteria to run")->delimiter(',');
    app.add_option("--report", report_path, "write details as JSON");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"oracle equivalence", oracle_equivalence},
        {"co-link fidelity", colink_fidelity},
        {"single-environment degeneracy", single_env_degeneracy},
        {"APE trend on Model 3", ape_trend},
        {"closed-form weights", weight_closed_form},
        {"variance bounds", variance_bounds_check},
        {"convergence properties", convergence_props},
        {"Bellman environment selection", bellman_search},
        {"aggregation trend", aggregation_trend},
        {"estimation consistency", estimation_consistency},
    };

    nlohmann::json report;
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, fmt::format("error: {}", e.what()), {}};
        }
        all = all && v.pass;
        std::cout << fmt::format("criterion {:2d} {}: {} ({})", id, criteria[i].first,
                                 v.pass ? "PASS" : "FAIL", v.detail)
                  << std::endl;
        report[std::to_string(id)] = {{"name", criteria[i].first}, {"pass", v.pass},
                                      {"detail", v.detail}, {"data", v.data}};
    }
    if (!report_path.empty()) write_json(report_path, report);
    return all ? 0 : 1;
}
