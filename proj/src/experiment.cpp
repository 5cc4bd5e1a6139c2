#include "cousinsq/experiment.hpp"

#include "cousinsq/errors.hpp"
#include "cousinsq/mdp_io.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <thread>

namespace cousinsq {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) {
        return std::nan("");
    }
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

nlohmann::json optional_number(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

BaselineConfig baseline_config(const ExperimentConfig& config, Variant variant,
                               std::uint64_t seed) {
    BaselineConfig b;
    b.variant = variant;
    b.trajectory_len = config.ensemble.trajectory_len;
    b.min_visits = config.ensemble.min_visits;
    b.schedule = config.ensemble.schedule;
    b.seed = seed;
    b.step_cap = config.ensemble.step_cap;
    b.max_steps = config.ensemble.max_steps;
    b.num_tables = config.baseline_tables;
    return b;
}

std::string fmt_double(double x) {
    return fmt::format("{:.17g}", x);
}

} // namespace

BuiltModel build_model(const ModelSpec& spec, std::size_t dense_cap) {
    BuiltModel out;
    std::unique_ptr<WirelessModel> wireless;
    if (spec.kind == "1") {
        wireless = std::make_unique<Model1>(spec.model1);
    } else if (spec.kind == "2") {
        wireless = std::make_unique<Model2>(spec.model2);
    } else if (spec.kind == "3") {
        wireless = std::make_unique<Model3>(spec.model3);
    } else if (spec.kind == "4") {
        wireless = std::make_unique<Model4>(spec.model4);
    } else if (spec.kind == "mdp" || spec.kind == "random") {
        Mdp mdp = spec.kind == "mdp" ? load_mdp(spec.mdp_path) : random_mdp(spec.random);
        out.env = std::make_unique<MdpEnvironment>(mdp);
        out.mdp = std::move(mdp);
        return out;
    } else {
        throw ConfigError(fmt::format("unknown model id '{}'", spec.kind));
    }
    try {
        out.mdp = wireless->materialize(dense_cap);
    } catch (const SizeError& e) {
        spdlog::warn("model is not materialized: {}", e.what());
    }
    out.wireless = wireless.get();
    out.env = std::move(wireless);
    return out;
}

PreparedExperiment prepare_experiment(const ExperimentConfig& config) {
    PreparedExperiment p;
    p.model = build_model(config.model, config.dense_cap);
    p.orders = config.cousins.orders;
    const Environment& truth = *p.model.env;

    const bool has_cousins = p.orders.size() > 1;
    if (has_cousins || config.cousins.estimate_visits > 0) {
        if (config.cousins.estimate_visits > 0) {
            Rng rng(config.cousins.estimate_seed);
            PttEstimate est = estimate_ptt(truth, config.cousins.estimate_visits, rng);
            std::shared_ptr<const CostModel> costs;
            if (p.model.mdp) {
                costs = p.model.mdp->costs_ptr();
            } else if (p.model.wireless) {
                costs = std::make_shared<const CostModel>(p.model.wireless->expected_costs());
            } else {
                throw CapabilityError("cost model unavailable for the estimate");
            }
            p.reference = Mdp(std::make_shared<const TransitionTensor>(std::move(est.transitions)),
                              costs, truth.gamma());
        } else {
            if (!p.model.mdp) {
                throw SizeError("cousins need the explicit transition tensor; set "
                                "cousins.estimate_visits or raise run.dense_cap");
            }
            p.reference = *p.model.mdp;
        }
        p.cousins = make_cousins(p.reference->transitions(), p.reference->costs_ptr(),
                                 p.reference->gamma(), p.orders);
    }

    if (p.model.mdp && config.oracle) {
        const Solution sol = value_iteration(*p.model.mdp, 1e-10);
        p.oracle = sol.policy;
        p.q_star = q_from_values(*p.model.mdp, sol.values);
    }

    std::vector<const Environment*> raw{&truth};
    for (std::size_t n = 1; n < p.cousins.size(); ++n) {
        p.owned.push_back(std::make_unique<MdpEnvironment>(p.cousins[n].mdp));
        raw.push_back(p.owned.back().get());
    }

    if (config.aggregation_k > 0) {
        AggregationMap map = p.model.wireless
                                 ? build_aggregation(*p.model.wireless, config.aggregation_k)
                                 : build_aggregation(
                                       truth.num_states(),
                                       [](std::size_t s) {
                                           return std::vector<double>{static_cast<double>(s)};
                                       },
                                       config.aggregation_k);
        p.aggregation = std::make_shared<const AggregationMap>(std::move(map));
        if (p.model.mdp) {
            p.cost_spread = max_cost_spread(*p.aggregation, p.model.mdp->costs().expected());
            if (p.cost_spread > config.spread_threshold) {
                spdlog::warn("aggregation cost spread {:.4g} exceeds threshold {:.4g}",
                             p.cost_spread, config.spread_threshold);
            }
        }
        for (const Environment* env : raw) {
            p.owned.push_back(std::make_unique<AggregatedEnvironment>(*env, p.aggregation));
            p.envs.push_back(p.owned.back().get());
        }
    } else {
        p.envs = raw;
    }
    spdlog::info("prepared model {} with {} states, {} actions, {} environment(s)",
                 config.model.kind, truth.num_states(), truth.num_actions(), p.envs.size());
    return p;
}

SeedOutcome run_seed(const PreparedExperiment& prepared, const ExperimentConfig& config,
                     std::uint64_t seed, const TraceOptions& extra) {
    SeedOutcome out;
    out.seed = seed;
    TraceOptions options = extra;
    options.oracle = prepared.oracle;
    options.ape_every = prepared.oracle.size() > 0 ? config.ape_every : 0;

    EnsembleConfig ec = config.ensemble;
    ec.orders = prepared.orders;
    ec.seed = seed;
    const Environment& primary = prepared.primary();

    auto start = Clock::now();
    EsqlResult r = run_esql(prepared.envs, ec, options);
    out.esql.name = "esql";
    out.esql.seconds = seconds_since(start);
    out.esql.steps = r.trace.steps;
    out.esql.episodes = r.trace.episodes;
    out.esql.samples = r.trace.steps * prepared.envs.size();
    if (!prepared.oracle.actions.empty()) {
        out.esql.ape = ape_observed(prepared.oracle, r.policy, primary);
    }
    out.esql.policy = r.policy;
    out.esql.final_weights = r.final_weights;
    out.esql.trace = std::move(r.trace);
    spdlog::debug("seed {} esql: {} steps", seed, out.esql.steps);

    TraceOptions baseline_options = options;
    baseline_options.tracked.clear();
    baseline_options.snapshot_every = 0;
    for (Variant v : config.baselines) {
        LearnerOutcome lo;
        lo.name = variant_name(v);
        start = Clock::now();
        LearnerResult br = run_baseline(primary, baseline_config(config, v, seed), baseline_options);
        lo.seconds = seconds_since(start);
        lo.steps = br.trace.steps;
        lo.episodes = br.trace.episodes;
        lo.samples = br.trace.steps;
        if (!prepared.oracle.actions.empty()) {
            lo.ape = ape_observed(prepared.oracle, br.policy, primary);
        }
        lo.policy = br.policy;
        lo.trace = std::move(br.trace);
        out.baselines.push_back(std::move(lo));
    }
    return out;
}

std::vector<SeedOutcome> run_seeds(const PreparedExperiment& prepared,
                                   const ExperimentConfig& config, const TraceOptions& extra) {
    std::vector<SeedOutcome> results(config.seeds.size());
    const std::size_t workers =
        std::max<std::size_t>(1, std::min(config.threads, config.seeds.size()));
    if (workers == 1) {
        for (std::size_t i = 0; i < config.seeds.size(); ++i) {
            results[i] = run_seed(prepared, config, config.seeds[i], extra);
        }
        return results;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(config.seeds.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
                try {
                    results[i] = run_seed(prepared, config, config.seeds[i], extra);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    return results;
}

namespace {

nlohmann::json learner_json(const LearnerOutcome& lo) {
    nlohmann::json j;
    j["ape"] = optional_number(lo.ape);
    j["steps"] = lo.steps;
    j["episodes"] = lo.episodes;
    j["samples"] = lo.samples;
    if (!lo.final_weights.empty()) {
        j["final_weights"] = lo.final_weights;
    }
    return j;
}

} // namespace

nlohmann::json summarize(const PreparedExperiment& prepared, const ExperimentConfig& config,
                         const std::vector<SeedOutcome>& outcomes) {
    nlohmann::json doc;
    doc["config_hash"] = config.hash;
    doc["model"] = config.model.kind;
    doc["num_states"] = prepared.primary().num_states();
    doc["num_actions"] = prepared.primary().num_actions();
    doc["num_observations"] = prepared.primary().num_observations();
    doc["table_entries"] = prepared.table_entries();
    doc["orders"] = prepared.orders;
    doc["u"] = config.ensemble.u;
    doc["aggregation_k"] = config.aggregation_k;
    if (prepared.aggregation) {
        doc["cluster_count"] = prepared.aggregation->cluster_count();
        doc["cost_spread"] = prepared.cost_spread;
    }

    std::map<std::string, std::vector<double>> apes;
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& o : outcomes) {
        nlohmann::json s;
        s["seed"] = o.seed;
        s["esql"] = learner_json(o.esql);
        if (o.esql.ape) apes["esql"].push_back(*o.esql.ape);
        for (const auto& b : o.baselines) {
            s[b.name] = learner_json(b);
            if (b.ape) apes[b.name].push_back(*b.ape);
        }
        seeds.push_back(std::move(s));
    }
    doc["seeds"] = std::move(seeds);
    std::vector<std::string> names{"esql"};
    for (Variant v : config.baselines) {
        names.push_back(variant_name(v));
    }
    for (const auto& name : names) {
        const auto it = apes.find(name);
        doc["ape_" + name] =
            it == apes.end() ? nlohmann::json(nullptr) : nlohmann::json(mean_of(it->second));
    }
    return doc;
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
    std::ofstream out(path);
    if (!out) {
        throw Error(fmt::format("cannot write {}", path.string()));
    }
    out << doc.dump(2) << '\n';
}

namespace {

double latest_ape(const std::vector<ApePoint>& points, std::uint64_t t, std::size_t& cursor) {
    while (cursor + 1 < points.size() && points[cursor + 1].t <= t) {
        ++cursor;
    }
    return points[cursor].ape;
}

void write_esql_trace(const fs::path& path, const ExperimentTrace& trace,
                      std::uint64_t every) {
    std::ofstream out(path);
    if (!out) {
        throw Error(fmt::format("cannot write {}", path.string()));
    }
    const std::size_t k = trace.num_envs();
    const bool has_weights = trace.weights.size() == trace.steps * k;
    const bool has_ape = !trace.ape.empty();
    out << "t,episode";
    for (std::size_t n = 0; n < k; ++n) {
        out << ",w_" << n + 1;
    }
    if (has_ape) {
        out << ",ape";
    }
    out << '\n';
    std::size_t cursor = 0;
    for (std::uint64_t t = 0; t < trace.steps; t += every) {
        out << t << ',' << (has_weights ? trace.step_episode[t] : 0);
        for (std::size_t n = 0; n < k; ++n) {
            out << ',' << (has_weights ? fmt_double(trace.weight(t, n)) : "");
        }
        if (has_ape) {
            out << ',' << fmt_double(latest_ape(trace.ape, t, cursor));
        }
        out << '\n';
    }
}

void write_baseline_trace(const fs::path& path, const ExperimentTrace& trace) {
    std::ofstream out(path);
    if (!out) {
        throw Error(fmt::format("cannot write {}", path.string()));
    }
    out << "t,episode,ape\n";
    for (const auto& p : trace.ape) {
        out << p.t << ',' << p.episode << ',' << fmt_double(p.ape) << '\n';
    }
}

fs::path prepare_output(const ExperimentConfig& config) {
    fs::path dir(config.output_dir);
    fs::create_directories(dir);
    return dir;
}

nlohmann::json timing_json(const std::vector<SeedOutcome>& outcomes, double prepare_seconds) {
    nlohmann::json doc;
    doc["prepare_seconds"] = prepare_seconds;
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& o : outcomes) {
        nlohmann::json s;
        s["seed"] = o.seed;
        s["esql"] = o.esql.seconds;
        for (const auto& b : o.baselines) {
            s[b.name] = b.seconds;
        }
        seeds.push_back(std::move(s));
    }
    doc["seeds"] = std::move(seeds);
    return doc;
}

} // namespace

int cmd_run(const ExperimentConfig& config) {
    const auto start = Clock::now();
    const fs::path dir = prepare_output(config);
    PreparedExperiment prepared = prepare_experiment(config);
    const double prepare_seconds = seconds_since(start);

    if (!prepared.oracle.actions.empty()) {
        nlohmann::json oracle;
        oracle["config_hash"] = config.hash;
        oracle["policy"] = prepared.oracle.actions;
        write_json(dir / "oracle_policy.json", oracle);
    }

    const auto outcomes = run_seeds(prepared, config);
    for (const auto& o : outcomes) {
        write_esql_trace(dir / fmt::format("trace_seed{}.csv", o.seed), o.esql.trace,
                         config.trace_every);
        for (const auto& b : o.baselines) {
            write_baseline_trace(dir / fmt::format("trace_{}_seed{}.csv", b.name, o.seed), b.trace);
        }
    }
    write_json(dir / "summary.json", summarize(prepared, config, outcomes));
    nlohmann::json timing = timing_json(outcomes, prepare_seconds);
    timing["config_hash"] = config.hash;
    timing["total_seconds"] = seconds_since(start);
    write_json(dir / "timing.json", timing);
    spdlog::info("wrote results for {} seed(s) to {}", outcomes.size(), dir.string());
    return 0;
}

namespace {

struct PairReport {
    nlohmann::json json;
    bool recursion_ok = true;
    bool tail_ok = true;
    bool passage_ok = true;
    bool gap_ok = true;
    std::optional<bool> variance_ok;
};

PairReport check_pair(const ExperimentTrace& trace, std::size_t s, std::size_t a, double q_star,
                      double u, const BoundsSpec& spec) {
    PairReport r;
    auto& j = r.json;
    j["state"] = s;
    j["action"] = a;

    const double residual = recursion_residual(trace, s, a);
    r.recursion_ok = residual <= spec.recursion_tol;
    j["recursion_residual"] = residual;

    const TailBoundResult p2 = tail_error_bound(trace, s, a, spec.tail_fraction);
    r.tail_ok = p2.holds;
    j["theta"] = p2.theta;
    j["theta_sum"] = p2.theta_sum;
    j["tail_max_delta"] = p2.tail_max_delta;

    if (p2.theta_sum > 0.0) {
        const double beta = spec.beta_fraction * p2.theta_sum;
        const std::uint64_t predicted = first_passage_bound(beta, u, p2.theta_sum);
        const auto passage = first_passage(trace, s, a, beta);
        r.passage_ok = passage.has_value() && *passage <= predicted;
        j["beta"] = beta;
        j["predicted_iterations"] = predicted;
        j["first_passage"] = passage ? nlohmann::json(*passage) : nlohmann::json(nullptr);
    } else {
        j["first_passage"] = nullptr;
    }

    const DeltaTrace dt = delta_trace(trace, s, a);
    const std::size_t blocks = 10;
    if (dt.gap.size() >= blocks) {
        const std::size_t len = dt.gap.size() / blocks;
        auto block_mean = [&](std::size_t b) {
            const auto first = dt.gap.begin() + static_cast<std::ptrdiff_t>(b * len);
            return std::accumulate(first, first + static_cast<std::ptrdiff_t>(len), 0.0) /
                   static_cast<double>(len);
        };
        const double head = block_mean(0);
        const double tail = block_mean(blocks - 1);
        r.gap_ok = tail < spec.gap_threshold && tail <= head;
        j["gap_first_block"] = head;
        j["gap_last_block"] = tail;
    } else {
        r.gap_ok = false;
        j["gap_first_block"] = nullptr;
        j["gap_last_block"] = nullptr;
    }

    const GapDecayResult p3 = gap_decay_check(trace, s, a);
    j["phi"] = p3.phi;
    j["phi_below_one"] = p3.all_below_one;

    const std::vector<double> err = fused_error(trace, s, a, q_star);
    if (err.size() >= 2 * spec.window + 1) {
        const std::size_t center = err.size() - 1 - spec.window;
        const Moments m = windowed_moments(err, center, spec.window);
        const double lambda = estimate_lambda(trace, s, a, q_star);
        j["tail_variance"] = m.variance;
        j["tail_mean"] = m.mean;
        j["lambda"] = lambda;
        if (lambda > 0.0) {
            const VarianceBounds vb = variance_bounds(u, lambda);
            j["bound_strict"] = vb.strict;
            j["bound_modest"] = vb.modest;
            j["bound_none"] = vb.none;
            r.variance_ok = m.variance <= vb.strict && m.variance <= vb.modest &&
                            m.variance <= vb.none;
        } else {
            r.variance_ok = m.variance <= 1e-12;
        }
    }
    j["pass"] = r.recursion_ok && r.tail_ok && r.passage_ok && r.gap_ok;
    return r;
}

} // namespace

nlohmann::json verify_bounds(const PreparedExperiment& prepared, const ExperimentConfig& config,
                             const std::vector<SeedOutcome>& outcomes) {
    if (prepared.q_star.size() == 0) {
        throw CapabilityError("bounds need the exact optimal Q-table (materializable model)");
    }
    if (prepared.aggregation) {
        throw ArgumentError("bounds are checked on unaggregated runs only");
    }
    const double u = config.ensemble.u;
    nlohmann::json doc;
    doc["config_hash"] = config.hash;
    doc["u"] = u;

    // Bound ordering on a fixed grid over (u, lambda).
    bool ordering = true;
    for (int i = 0; i < 10; ++i) {
        for (int k = 0; k < 10; ++k) {
            const double gu = 0.05 + 0.1 * i;
            const double gl = 0.1 + 0.5 * k;
            const VarianceBounds vb = variance_bounds(gu, gl);
            ordering = ordering && vb.strict <= vb.modest && vb.modest <= vb.none;
        }
    }
    doc["grid_ordering"] = ordering;

    bool all_ok = ordering;
    nlohmann::json seeds = nlohmann::json::array();
    double lambda_max = 0.0;
    for (const auto& o : outcomes) {
        const ExperimentTrace& trace = o.esql.trace;
        nlohmann::json pairs = nlohmann::json::array();
        std::size_t variance_checked = 0;
        std::size_t variance_passed = 0;
        bool recursion = true, tail_bound = true, within_passage = true, gap = true;
        for (const auto& tp : trace.tracked) {
            const double qs = prepared.q_star(static_cast<Eigen::Index>(tp.state),
                                              static_cast<Eigen::Index>(tp.action));
            PairReport r = check_pair(trace, tp.state, tp.action, qs, u, config.bounds);
            recursion = recursion && r.recursion_ok;
            tail_bound = tail_bound && r.tail_ok;
            within_passage = within_passage && r.passage_ok;
            gap = gap && r.gap_ok;
            if (r.variance_ok) {
                ++variance_checked;
                variance_passed += *r.variance_ok ? 1 : 0;
            }
            if (r.json.contains("lambda")) {
                lambda_max = std::max(lambda_max, r.json["lambda"].get<double>());
            }
            pairs.push_back(std::move(r.json));
        }
        const double fraction =
            variance_checked > 0
                ? static_cast<double>(variance_passed) / static_cast<double>(variance_checked)
                : 0.0;
        const bool variance = variance_checked > 0 && fraction >= config.bounds.min_fraction;
        nlohmann::json s;
        s["seed"] = o.seed;
        s["steps"] = trace.steps;
        s["recursion"] = recursion;
        s["tail_bound"] = tail_bound;
        s["within_passage"] = within_passage;
        s["gap"] = gap;
        s["variance_fraction"] = fraction;
        s["variance"] = variance;
        s["pairs"] = std::move(pairs);
        all_ok = all_ok && recursion && tail_bound && within_passage && gap && variance;
        seeds.push_back(std::move(s));
    }
    doc["seeds"] = std::move(seeds);
    doc["lambda"] = lambda_max;
    if (lambda_max > 0.0 && u > 0.0 && u < 1.0) {
        const VarianceBounds vb = variance_bounds(u, lambda_max);
        doc["bounds"] = {{"strict", vb.strict}, {"modest", vb.modest}, {"none", vb.none}};
    } else {
        doc["bounds"] = nullptr;
    }
    doc["pass"] = all_ok;
    return doc;
}

int cmd_verify_bounds(const ExperimentConfig& config) {
    const fs::path dir = prepare_output(config);
    PreparedExperiment prepared = prepare_experiment(config);
    TraceOptions extra;
    const auto& primary = prepared.primary();
    if (config.bounds.pairs.empty()) {
        for (std::size_t s = 0; s < primary.num_observations(); ++s) {
            for (std::size_t a = 0; a < primary.num_actions(); ++a) {
                extra.tracked.emplace_back(s, a);
            }
        }
    } else {
        extra.tracked = config.bounds.pairs;
    }
    ExperimentConfig no_baselines = config;
    no_baselines.baselines.clear();
    const auto outcomes = run_seeds(prepared, no_baselines, extra);
    const nlohmann::json report = verify_bounds(prepared, config, outcomes);
    write_json(dir / "bounds_report.json", report);
    const bool pass = report["pass"].get<bool>();
    spdlog::info("bounds check {}", pass ? "passed" : "failed");
    return pass ? 0 : 1;
}

nlohmann::json select_envs(const ExperimentConfig& config) {
    const auto& sel = config.select;
    nlohmann::json doc;
    doc["config_hash"] = config.hash;
    doc["k"] = sel.k;

    auto start = Clock::now();
    BuiltModel model = build_model(config.model, config.dense_cap);
    Mdp reference = [&]() -> Mdp {
        if (config.cousins.estimate_visits > 0) {
            Rng rng(config.cousins.estimate_seed);
            PttEstimate est = estimate_ptt(*model.env, config.cousins.estimate_visits, rng);
            std::shared_ptr<const CostModel> costs =
                model.mdp ? model.mdp->costs_ptr()
                          : std::make_shared<const CostModel>(model.wireless->expected_costs());
            return Mdp(std::make_shared<const TransitionTensor>(std::move(est.transitions)), costs,
                       model.env->gamma());
        }
        if (!model.mdp) {
            throw SizeError("selection needs the explicit transition tensor");
        }
        return *model.mdp;
    }();
    const double prepare_seconds = seconds_since(start);

    start = Clock::now();
    const auto cousins = make_cousins(reference.transitions(), reference.costs_ptr(),
                                      reference.gamma(), [&] {
                                          std::vector<int> orders{1};
                                          orders.insert(orders.end(), sel.candidates.begin(),
                                                        sel.candidates.end());
                                          return orders;
                                      }());
    std::vector<SyntheticEnvironment> candidates(cousins.begin() + 1, cousins.end());
    const BellmanSelection bs = bellman_select(candidates, reference, sel.k);
    const double bellman_seconds = seconds_since(start) + prepare_seconds;

    nlohmann::json ranking = nlohmann::json::array();
    for (const auto& r : bs.ranking) {
        ranking.push_back({{"order", r.order}, {"norm", r.norm}});
    }
    doc["bellman"] = {{"ranking", ranking}, {"selected", bs.selected}, {"ties", bs.ties}};

    nlohmann::json timing;
    timing["bellman_seconds"] = bellman_seconds;
    if (sel.greedy) {
        start = Clock::now();
        if (!model.mdp) {
            throw SizeError("greedy selection needs the oracle policy");
        }
        const Policy oracle = value_iteration(*model.mdp, 1e-10).policy;
        std::vector<std::pair<double, int>> scores;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const SyntheticEnvironment& cousin = cousins[i + 1];
            const MdpEnvironment cousin_env(cousin.mdp);
            std::vector<const Environment*> envs{model.env.get(), &cousin_env};
            std::vector<double> apes;
            for (std::uint64_t seed : sel.greedy_seeds) {
                EnsembleConfig ec = config.ensemble;
                ec.orders = {1, cousin.order};
                ec.seed = seed;
                TraceOptions opts;
                opts.record_weights = false;
                const EsqlResult r = run_esql(envs, ec, opts);
                apes.push_back(ape_observed(oracle, r.policy, *model.env));
            }
            scores.emplace_back(mean_of(apes), cousin.order);
        }
        std::stable_sort(scores.begin(), scores.end());
        nlohmann::json greedy_rank = nlohmann::json::array();
        std::vector<int> greedy_top;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            greedy_rank.push_back({{"order", scores[i].second}, {"ape", scores[i].first}});
            if (i < sel.k) {
                greedy_top.push_back(scores[i].second);
            }
        }
        std::size_t overlap = 0;
        for (int o : bs.selected) {
            overlap += std::count(greedy_top.begin(), greedy_top.end(), o) > 0 ? 1 : 0;
        }
        doc["greedy"] = {{"ranking", greedy_rank}, {"selected", greedy_top}, {"overlap", overlap}};
        timing["greedy_seconds"] = seconds_since(start) + prepare_seconds;
    }
    doc["timing"] = timing;
    return doc;
}

int cmd_select_envs(const ExperimentConfig& config) {
    const fs::path dir = prepare_output(config);
    const nlohmann::json doc = select_envs(config);
    write_json(dir / "select_envs.json", doc);
    return 0;
}

ExperimentConfig with_parameter(const ExperimentConfig& config, const std::string& parameter,
                                double value) {
    const bool integral = std::floor(value) == value && std::abs(value) < 1e15;
    const std::string text =
        integral ? fmt::format("{}", static_cast<long long>(value)) : fmt_double(value);
    nlohmann::json doc = config.canonical;
    if (parameter == "aggregation.k") {
        doc["aggregation"]["k"] = text;
    } else if (parameter.rfind("model.", 0) == 0 && parameter.size() > 6) {
        doc["model"][parameter.substr(6)] = text;
    } else {
        throw ConfigError(fmt::format("unsupported sweep parameter '{}'", parameter));
    }
    doc.erase("sweep");
    ExperimentConfig out = parse_config(doc.dump(), "sweep");
    out.threads = config.threads;
    out.output_dir = config.output_dir;
    out.seeds = config.seeds;
    out.ensemble.seed = out.seeds.front();
    return out;
}

int cmd_sweep(const ExperimentConfig& config) {
    if (config.sweep.parameter.empty() || config.sweep.values.empty()) {
        throw ConfigError("sweep: 'parameter' and 'values' are required");
    }
    const fs::path dir = prepare_output(config);
    std::ofstream out(dir / "sweep.csv");
    if (!out) {
        throw Error("cannot write sweep.csv");
    }
    out << "parameter,value,num_states,table_entries,ape_esql";
    for (Variant v : config.baselines) {
        out << ",ape_" << variant_name(v);
    }
    out << ",esql_samples,seconds,config_hash\n";
    for (double value : config.sweep.values) {
        const ExperimentConfig c = with_parameter(config, config.sweep.parameter, value);
        const auto start = Clock::now();
        PreparedExperiment prepared = prepare_experiment(c);
        TraceOptions extra;
        extra.record_weights = false;
        const auto outcomes = run_seeds(prepared, c, extra);
        const nlohmann::json summary = summarize(prepared, c, outcomes);
        const double secs = seconds_since(start);
        auto field = [&](const std::string& key) {
            const auto& v = summary[key];
            return v.is_null() ? std::string() : fmt_double(v.get<double>());
        };
        std::vector<double> samples;
        for (const auto& o : outcomes) {
            samples.push_back(static_cast<double>(o.esql.samples));
        }
        out << config.sweep.parameter << ',' << fmt_double(value) << ','
            << prepared.primary().num_states() << ',' << prepared.table_entries() << ','
            << field("ape_esql");
        for (Variant v : config.baselines) {
            out << ',' << field("ape_" + variant_name(v));
        }
        out << ',' << fmt_double(mean_of(samples)) << ',' << fmt_double(secs) << ',' << c.hash
            << '\n';
        spdlog::info("sweep {}={} done in {:.2f}s", config.sweep.parameter, value, secs);
    }
    return 0;
}

} // namespace cousinsq
