#pragma once

#include "cousinsq/esql.hpp"
#include "cousinsq/qlearning.hpp"
#include "cousinsq/wireless.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cousinsq {

/// Random sparse MDP used by tests and desk experiments.
struct RandomMdpSpec {
    std::size_t num_states = 10;
    std::size_t num_actions = 3;
    /// Successors per (s, a) row.
    std::size_t branching = 3;
    double gamma = 0.9;
    std::uint64_t seed = 1;
};

Mdp random_mdp(const RandomMdpSpec& spec);

struct ModelSpec {
    /// "1".."4", "mdp" (JSON file) or "random".
    std::string kind = "1";
    Model1Config model1;
    Model2Config model2;
    Model3Config model3;
    Model4Config model4;
    std::string mdp_path;
    RandomMdpSpec random;
};

struct CousinSpec {
    std::vector<int> orders{1};
    /// Directed draws per (s, a) for the transition estimate; 0 uses the exact PTT.
    std::size_t estimate_visits = 0;
    std::uint64_t estimate_seed = 12345;
};

struct BoundsSpec {
    /// Empty means every (s, a).
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::size_t window = 20;
    double beta_fraction = 0.5;
    double tail_fraction = 0.1;
    double gap_threshold = 1e-3;
    double min_fraction = 0.95;
    double recursion_tol = 1e-10;
};

struct AdcSpec {
    bool enabled = false;
    std::size_t from = 0;
    std::size_t to = 0;
    std::size_t stride = 50;
};

struct SelectSpec {
    std::size_t k = 3;
    std::vector<int> candidates{2, 3, 4, 5, 6, 7, 8, 9, 10};
    bool greedy = false;
    std::vector<std::uint64_t> greedy_seeds{1, 2, 3};
};

struct SweepSpec {
    /// "aggregation.k" or a numeric model key such as "model.num_tx".
    std::string parameter;
    std::vector<double> values;
};

struct ExperimentConfig {
    ModelSpec model;
    CousinSpec cousins;
    EnsembleConfig ensemble;
    std::vector<Variant> baselines{Variant::Simple};
    std::size_t baseline_tables = 2;
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "out";
    std::uint64_t trace_every = 100;
    std::uint64_t ape_every = 1000;
    bool oracle = true;
    std::size_t aggregation_k = 0;
    double spread_threshold = 1e300;
    BoundsSpec bounds;
    AdcSpec adc;
    SelectSpec select;
    SweepSpec sweep;
    std::size_t threads = 1;
    std::size_t dense_cap = kDefaultDenseCap;

    /// Canonical JSON of the input document and its FNV-1a 64 hash (hex).
    nlohmann::json canonical;
    std::string hash;
};

/// Parses YAML (or JSON) text. Unknown keys and invalid values raise
/// ConfigError carrying the 1-based line of the offending node.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

/// Parses only a model section (same schema as the "model" key).
ModelSpec parse_model(const std::string& text);

std::string fnv1a_hex(const std::string& bytes);

} // namespace cousinsq
