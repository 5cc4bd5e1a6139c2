#include "cousinsq/analysis.hpp"
#include "cousinsq/colink.hpp"
#include "cousinsq/config.hpp"
#include "cousinsq/errors.hpp"
#include "cousinsq/esql.hpp"
#include "cousinsq/experiment.hpp"
#include "cousinsq/mdp.hpp"
#include "cousinsq/mdp_io.hpp"
#include "cousinsq/qlearning.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace cousinsq;

namespace {

std::vector<std::size_t> actions(const Policy& p) { return p.actions; }

std::vector<const Environment*> env_pointers(const std::vector<MdpEnvironment>& envs) {
    std::vector<const Environment*> out;
    for (const auto& e : envs) out.push_back(&e);
    return out;
}

py::dict learner_dict(const QTable& q, const Policy& policy, const ExperimentTrace& trace) {
    py::dict d;
    d["q"] = q;
    d["policy"] = actions(policy);
    d["steps"] = trace.steps;
    d["episodes"] = trace.episodes;
    py::list ape;
    for (const auto& p : trace.ape) ape.append(py::make_tuple(p.t, p.ape));
    d["ape"] = ape;
    return d;
}

TraceOptions ape_options(const std::optional<std::vector<std::size_t>>& oracle,
                         std::uint64_t ape_every) {
    TraceOptions opts;
    opts.record_weights = false;
    if (oracle) {
        opts.oracle = Policy(*oracle);
        opts.ape_every = ape_every;
    }
    return opts;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Ensemble Q-learning over synthetic co-link environments";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<CoverageError>(m, "CoverageError", base.ptr());
    py::register_exception<SizeError>(m, "SizeError", base.ptr());
    py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
    py::register_exception<InvariantError>(m, "InvariantError", base.ptr());
    py::register_exception<IndexError>(m, "IndexError", base.ptr());

    py::class_<Mdp>(m, "Mdp")
        .def(py::init([](const std::vector<Matrix>& transitions, const Matrix& costs, double gamma) {
                 return Mdp(TransitionTensor(transitions), CostModel(costs), gamma);
             }),
             py::arg("transitions"), py::arg("costs"), py::arg("gamma"))
        .def_property_readonly("num_states", &Mdp::num_states)
        .def_property_readonly("num_actions", &Mdp::num_actions)
        .def_property_readonly("gamma", &Mdp::gamma)
        .def("transition", [](const Mdp& mdp, std::size_t a) { return mdp.transitions().action(a); })
        .def_property_readonly("costs", [](const Mdp& mdp) { return mdp.costs().expected(); })
        .def("to_json", [](const Mdp& mdp) { return mdp_to_json(mdp).dump(); })
        .def_static("from_json", [](const std::string& text) {
            return mdp_from_json(nlohmann::json::parse(text));
        })
        .def("__repr__", [](const Mdp& mdp) {
            return "<Mdp |S|=" + std::to_string(mdp.num_states()) +
                   " |A|=" + std::to_string(mdp.num_actions()) + ">";
        });

    m.def("random_mdp",
          [](std::size_t ns, std::size_t na, std::size_t branching, double gamma, std::uint64_t seed) {
              return random_mdp({ns, na, branching, gamma, seed});
          },
          py::arg("num_states"), py::arg("num_actions"), py::arg("branching") = 3,
          py::arg("gamma") = 0.9, py::arg("seed") = 1);

    m.def("value_iteration",
          [](const Mdp& mdp, double tol) {
              const Solution s = value_iteration(mdp, tol);
              return py::make_tuple(s.values, actions(s.policy), s.iterations);
          },
          py::arg("mdp"), py::arg("tol") = 1e-10,
          "Returns (values, policy, iterations).");
    m.def("policy_evaluation",
          [](const Mdp& mdp, const std::vector<std::size_t>& policy) {
              return policy_evaluation(mdp, Policy(policy));
          });
    m.def("optimal_q", &optimal_q, py::arg("mdp"), py::arg("tol") = 1e-10);

    m.def("build_colink",
          [](const std::vector<Matrix>& transitions, int order) {
              return build_colink(TransitionTensor(transitions), order).raw;
          },
          py::arg("transitions"), py::arg("order"),
          "Unnormalized co-link similarity matrices, one per action.");
    m.def("make_cousins",
          [](const Mdp& mdp, const std::vector<int>& orders) {
              std::vector<Mdp> out;
              for (auto& c : make_cousins(mdp, orders)) out.push_back(std::move(c.mdp));
              return out;
          });
    m.def("closed_form_weights",
          [](const std::vector<Mdp>& envs) { return closed_form_weights(envs); });

    m.def("run_esql",
          [](const std::vector<Mdp>& envs, double u, std::uint64_t seed, std::uint64_t min_visits,
             std::size_t trajectory_len, std::uint64_t max_steps,
             std::optional<std::vector<std::size_t>> oracle, std::uint64_t ape_every) {
              std::vector<MdpEnvironment> owned;
              for (const auto& e : envs) owned.emplace_back(e);
              EnsembleConfig cfg;
              cfg.orders.clear();
              for (std::size_t n = 0; n < envs.size(); ++n) cfg.orders.push_back(static_cast<int>(n + 1));
              cfg.u = u;
              cfg.seed = seed;
              cfg.min_visits = min_visits;
              cfg.trajectory_len = trajectory_len;
              cfg.max_steps = max_steps;
              EsqlResult r;
              {
                  py::gil_scoped_release release;
                  r = run_esql(env_pointers(owned), cfg, ape_options(oracle, ape_every));
              }
              py::dict d = learner_dict(r.q_it, r.policy, r.trace);
              d["final_weights"] = r.final_weights;
            d["env_q"] = r.env_q;
              return d;
          },
          py::arg("envs"), py::arg("u") = 0.5, py::arg("seed") = 0, py::arg("min_visits") = 50,
          py::arg("trajectory_len") = 15, py::arg("max_steps") = 0, py::arg("oracle") = py::none(),
          py::arg("ape_every") = 1000,
          "Ensemble learner over MDPs sharing states and actions; envs[0] is the true one.");

    m.def("run_baseline",
          [](const Mdp& mdp, const std::string& variant, std::uint64_t seed, std::uint64_t min_visits,
             std::size_t trajectory_len, std::uint64_t max_steps,
             std::optional<std::vector<std::size_t>> oracle, std::uint64_t ape_every) {
              const MdpEnvironment env(mdp);
              BaselineConfig cfg;
              cfg.variant = parse_variant(variant);
              cfg.seed = seed;
              cfg.min_visits = min_visits;
              cfg.trajectory_len = trajectory_len;
              cfg.max_steps = max_steps;
              LearnerResult r;
              {
                  py::gil_scoped_release release;
                  r = run_baseline(env, cfg, ape_options(oracle, ape_every));
              }
              return learner_dict(r.q, r.policy, r.trace);
          },
          py::arg("mdp"), py::arg("variant") = "simple", py::arg("seed") = 0,
          py::arg("min_visits") = 50, py::arg("trajectory_len") = 15, py::arg("max_steps") = 0,
          py::arg("oracle") = py::none(), py::arg("ape_every") = 1000);

    m.def("ape", [](const std::vector<std::size_t>& optimal, const std::vector<std::size_t>& estimated) {
        return ape(Policy(optimal), Policy(estimated));
    });
    m.def("variance_bounds", [](double u, double lambda) {
        const VarianceBounds b = variance_bounds(u, lambda);
        return py::make_tuple(b.strict, b.modest, b.none);
    });
    m.def("first_passage_bound", &first_passage_bound, py::arg("beta"), py::arg("u"),
          py::arg("theta_sum"));
    m.def("distance_correlation", [](const std::vector<double>& x, const std::vector<double>& y) {
        return distance_correlation(x, y).value;
    });
    m.def("bellman_error_norm",
          [](const Mdp& reference, const Mdp& candidate, const std::vector<std::size_t>& policy) {
              return bellman_error_norm(reference, candidate, Policy(policy));
          });

    m.def("config_hash", [](const std::string& path) { return load_config(path).hash; });
    m.def("run_config",
          [](const std::string& path, std::optional<std::string> out) {
              auto cfg = load_config(path);
              if (out) cfg.output_dir = *out;
              py::gil_scoped_release release;
              return cmd_run(cfg);
          },
          py::arg("path"), py::arg("out") = py::none(),
          "Runs the 'run' subcommand on a config file; returns the exit status.");
}
