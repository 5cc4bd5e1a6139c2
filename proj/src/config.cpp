#include "cousinsq/config.hpp"

#include "cousinsq/errors.hpp"

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace cousinsq {

Mdp random_mdp(const RandomMdpSpec& spec) {
    if (spec.num_states < 1 || spec.num_actions < 1) {
        throw ArgumentError("random MDP needs at least one state and one action");
    }
    const std::size_t branching = std::clamp<std::size_t>(spec.branching, 1, spec.num_states);
    Rng rng(derive_seed(spec.seed, 0x5eed));
    const auto n = static_cast<Eigen::Index>(spec.num_states);
    std::vector<Matrix> probs(spec.num_actions, Matrix::Zero(n, n));
    Matrix costs(n, static_cast<Eigen::Index>(spec.num_actions));
    std::vector<std::size_t> pool(spec.num_states);
    for (std::size_t s = 0; s < spec.num_states; ++s) {
        for (std::size_t a = 0; a < spec.num_actions; ++a) {
            for (std::size_t i = 0; i < pool.size(); ++i) {
                pool[i] = i;
            }
            // Partial Fisher-Yates draw of the successors.
            double total = 0.0;
            std::vector<std::pair<std::size_t, double>> picks;
            for (std::size_t i = 0; i < branching; ++i) {
                const std::size_t j = i + uniform_index(rng, pool.size() - i);
                std::swap(pool[i], pool[j]);
                const double w = 0.05 + uniform01(rng);
                picks.emplace_back(pool[i], w);
                total += w;
            }
            for (const auto& [next, w] : picks) {
                probs[a](static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(next)) = w / total;
            }
            costs(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = uniform01(rng);
        }
    }
    return Mdp(TransitionTensor(std::move(probs)), CostModel(std::move(costs)), spec.gamma);
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

namespace {

[[noreturn]] void fail(const YAML::Node& node, const std::string& path, const std::string& what) {
    const int line = node.IsDefined() && node.Mark().line >= 0 ? node.Mark().line + 1 : -1;
    if (line > 0) {
        throw ConfigError(fmt::format("line {}: {}: {}", line, path, what), line);
    }
    throw ConfigError(fmt::format("{}: {}", path, what));
}

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

void check_map(const YAML::Node& node, const std::string& path,
               const std::set<std::string>& allowed) {
    if (!node.IsMap()) {
        fail(node, path, "expected a mapping");
    }
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.count(key)) {
            fail(kv.first, join(path, key), "unknown key");
        }
    }
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& path) {
    if (!node.IsScalar()) {
        fail(node, path, "expected a scalar");
    }
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        fail(node, path, fmt::format("cannot read '{}' as the expected type", node.Scalar()));
    }
}

template <typename T>
void read(const YAML::Node& map, const std::string& path, const char* key, T& out) {
    const YAML::Node node = map[key];
    if (node) {
        out = scalar<T>(node, join(path, key));
    }
}

void read_size(const YAML::Node& map, const std::string& path, const char* key, std::size_t& out) {
    const YAML::Node node = map[key];
    if (!node) {
        return;
    }
    const auto v = scalar<long long>(node, join(path, key));
    if (v < 0) {
        fail(node, join(path, key), "must be nonnegative");
    }
    out = static_cast<std::size_t>(v);
}

template <typename T>
std::vector<T> list(const YAML::Node& node, const std::string& path) {
    std::vector<T> out;
    if (node.IsScalar()) {
        out.push_back(scalar<T>(node, path));
        return out;
    }
    if (!node.IsSequence()) {
        fail(node, path, "expected a list");
    }
    for (std::size_t i = 0; i < node.size(); ++i) {
        out.push_back(scalar<T>(node[i], fmt::format("{}[{}]", path, i)));
    }
    return out;
}

template <typename T>
void read_list(const YAML::Node& map, const std::string& path, const char* key, std::vector<T>& out) {
    const YAML::Node node = map[key];
    if (node) {
        out = list<T>(node, join(path, key));
    }
}

Matrix matrix(const YAML::Node& node, const std::string& path) {
    if (!node.IsSequence() || node.size() == 0) {
        fail(node, path, "expected a nonempty list of rows");
    }
    const std::size_t rows = node.size();
    const std::size_t cols = node[0].IsSequence() ? node[0].size() : 0;
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        const auto row = list<double>(node[i], fmt::format("{}[{}]", path, i));
        if (row.size() != cols) {
            fail(node[i], fmt::format("{}[{}]", path, i), "rows must have equal length");
        }
        for (std::size_t j = 0; j < cols; ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
        }
    }
    return m;
}

GilbertElliotChannel channel(const YAML::Node& node, const std::string& path) {
    check_map(node, path, {"states", "stay", "q_best", "q_worst", "transition", "quality"});
    try {
        if (node["transition"]) {
            GilbertElliotChannel ch;
            ch.transition = matrix(node["transition"], join(path, "transition"));
            if (!node["quality"]) {
                fail(node, path, "'quality' is required with 'transition'");
            }
            ch.quality = list<double>(node["quality"], join(path, "quality"));
            ch.validate();
            return ch;
        }
        std::size_t states = 2;
        double stay = 0.8;
        double q_best = 0.9;
        double q_worst = 0.3;
        read_size(node, path, "states", states);
        read(node, path, "stay", stay);
        read(node, path, "q_best", q_best);
        read(node, path, "q_worst", q_worst);
        return GilbertElliotChannel::banded(states, stay, q_best, q_worst);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        fail(node, path, e.what());
    }
}

std::vector<GilbertElliotChannel> channels(const YAML::Node& node, const std::string& path) {
    std::vector<GilbertElliotChannel> out;
    if (node.IsMap()) {
        out.push_back(channel(node, path));
        return out;
    }
    if (!node.IsSequence()) {
        fail(node, path, "expected a channel or a list of channels");
    }
    for (std::size_t i = 0; i < node.size(); ++i) {
        out.push_back(channel(node[i], fmt::format("{}[{}]", path, i)));
    }
    return out;
}

void read_channels(const YAML::Node& map, const std::string& path, const char* key,
                   std::vector<GilbertElliotChannel>& out) {
    if (map[key]) {
        out = channels(map[key], join(path, key));
    }
}

void read_matrix(const YAML::Node& map, const std::string& path, const char* key, Matrix& out) {
    if (map[key]) {
        out = matrix(map[key], join(path, key));
    }
}

ModelSpec model_section(const YAML::Node& node, const std::string& path) {
    if (!node.IsMap()) {
        fail(node, path, "expected a mapping");
    }
    if (!node["id"]) {
        fail(node, path, "'id' is required (1, 2, 3, 4, mdp or random)");
    }
    ModelSpec spec;
    spec.kind = scalar<std::string>(node["id"], join(path, "id"));
    const std::set<std::string> common{"id", "gamma", "state_cap"};
    auto allowed = [&](std::initializer_list<const char*> keys) {
        std::set<std::string> out = common;
        out.insert(keys.begin(), keys.end());
        return out;
    };
    try {
        if (spec.kind == "1") {
            auto& c = spec.model1;
            check_map(node, path, allowed({"num_tx", "buffer_size", "arrival_prob", "channels",
                                           "tx_distance", "interference", "drop_surcharge",
                                           "buffer_w", "channel_w", "collision_w"}));
            read_size(node, path, "num_tx", c.num_tx);
            read_size(node, path, "buffer_size", c.buffer_size);
            read_list(node, path, "arrival_prob", c.arrival_prob);
            read_channels(node, path, "channels", c.channels);
            read_matrix(node, path, "tx_distance", c.tx_distance);
            read(node, path, "interference", c.interference);
            read(node, path, "drop_surcharge", c.drop_surcharge);
            read(node, path, "buffer_w", c.buffer_w);
            read(node, path, "channel_w", c.channel_w);
            read(node, path, "collision_w", c.collision_w);
            read(node, path, "gamma", c.gamma);
            read_size(node, path, "state_cap", c.state_cap);
            Model1 check(c);
        } else if (spec.kind == "2") {
            auto& c = spec.model2;
            check_map(node, path,
                      allowed({"num_tx", "num_relays", "battery_size", "harvest_prob",
                               "direct_energy", "relay_energy", "direct_channels",
                               "relay_channels", "relay_corruption", "neg_throughput_w", "drop_w",
                               "battery_w"}));
            read_size(node, path, "num_tx", c.num_tx);
            read_size(node, path, "num_relays", c.num_relays);
            read_size(node, path, "battery_size", c.battery_size);
            read_list(node, path, "harvest_prob", c.harvest_prob);
            read_size(node, path, "direct_energy", c.direct_energy);
            read_size(node, path, "relay_energy", c.relay_energy);
            read_channels(node, path, "direct_channels", c.direct_channels);
            read_channels(node, path, "relay_channels", c.relay_channels);
            read_list(node, path, "relay_corruption", c.relay_corruption);
            read(node, path, "neg_throughput_w", c.neg_throughput_w);
            read(node, path, "drop_w", c.drop_w);
            read(node, path, "battery_w", c.battery_w);
            read(node, path, "gamma", c.gamma);
            read_size(node, path, "state_cap", c.state_cap);
            Model2 check(c);
        } else if (spec.kind == "3") {
            auto& c = spec.model3;
            check_map(node, path,
                      allowed({"num_tx", "num_rx", "buffer_size", "arrival_prob", "max_send",
                               "channel_classes", "distance_class", "tx_distance", "rx_collision",
                               "drop_surcharge", "buffer_w", "channel_w", "collision_w",
                               "rx_load_w"}));
            read_size(node, path, "num_tx", c.num_tx);
            read_size(node, path, "num_rx", c.num_rx);
            read_size(node, path, "buffer_size", c.buffer_size);
            read_list(node, path, "arrival_prob", c.arrival_prob);
            read_size(node, path, "max_send", c.max_send);
            read_channels(node, path, "channel_classes", c.channel_classes);
            if (node["distance_class"]) {
                const auto& dc = node["distance_class"];
                if (!dc.IsSequence()) fail(dc, join(path, "distance_class"), "expected rows");
                c.distance_class.clear();
                for (std::size_t i = 0; i < dc.size(); ++i) {
                    c.distance_class.push_back(
                        list<std::size_t>(dc[i], fmt::format("{}.distance_class[{}]", path, i)));
                }
            }
            read_matrix(node, path, "tx_distance", c.tx_distance);
            read(node, path, "rx_collision", c.rx_collision);
            read(node, path, "drop_surcharge", c.drop_surcharge);
            read(node, path, "buffer_w", c.buffer_w);
            read(node, path, "channel_w", c.channel_w);
            read(node, path, "collision_w", c.collision_w);
            read(node, path, "rx_load_w", c.rx_load_w);
            read(node, path, "gamma", c.gamma);
            read_size(node, path, "state_cap", c.state_cap);
            Model3 check(c);
        } else if (spec.kind == "4") {
            auto& c = spec.model4;
            check_map(node, path,
                      allowed({"num_tx", "width", "height", "rx_positions", "speed", "allow_stay",
                               "path_loss_exponent", "neg_throughput_w", "rx_load_w",
                               "interference_w"}));
            read_size(node, path, "num_tx", c.num_tx);
            read_size(node, path, "width", c.width);
            read_size(node, path, "height", c.height);
            if (node["rx_positions"]) {
                const auto& rp = node["rx_positions"];
                if (!rp.IsSequence()) fail(rp, join(path, "rx_positions"), "expected [x, y] pairs");
                c.rx_positions.clear();
                for (std::size_t i = 0; i < rp.size(); ++i) {
                    const auto xy =
                        list<std::size_t>(rp[i], fmt::format("{}.rx_positions[{}]", path, i));
                    if (xy.size() != 2) fail(rp[i], join(path, "rx_positions"), "expected [x, y]");
                    c.rx_positions.emplace_back(xy[0], xy[1]);
                }
            }
            read_list(node, path, "speed", c.speed);
            read(node, path, "allow_stay", c.allow_stay);
            read(node, path, "path_loss_exponent", c.path_loss_exponent);
            read(node, path, "neg_throughput_w", c.neg_throughput_w);
            read(node, path, "rx_load_w", c.rx_load_w);
            read(node, path, "interference_w", c.interference_w);
            read(node, path, "gamma", c.gamma);
            read_size(node, path, "state_cap", c.state_cap);
            Model4 check(c);
        } else if (spec.kind == "mdp") {
            check_map(node, path, {"id", "path"});
            read(node, path, "path", spec.mdp_path);
            if (spec.mdp_path.empty()) fail(node, path, "'path' is required for id: mdp");
        } else if (spec.kind == "random") {
            auto& r = spec.random;
            check_map(node, path, {"id", "num_states", "num_actions", "branching", "gamma", "seed"});
            read_size(node, path, "num_states", r.num_states);
            read_size(node, path, "num_actions", r.num_actions);
            read_size(node, path, "branching", r.branching);
            read(node, path, "gamma", r.gamma);
            read(node, path, "seed", r.seed);
            random_mdp(r);
        } else {
            fail(node["id"], join(path, "id"), fmt::format("unknown model id '{}'", spec.kind));
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        fail(node, path, e.what());
    }
    return spec;
}

nlohmann::json to_json(const YAML::Node& node) {
    switch (node.Type()) {
    case YAML::NodeType::Map: {
        nlohmann::json out = nlohmann::json::object();
        for (const auto& kv : node) {
            out[kv.first.as<std::string>()] = to_json(kv.second);
        }
        return out;
    }
    case YAML::NodeType::Sequence: {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& item : node) {
            out.push_back(to_json(item));
        }
        return out;
    }
    case YAML::NodeType::Scalar:
        return node.Scalar();
    default:
        return nullptr;
    }
}

std::vector<std::pair<std::size_t, std::size_t>> pair_list(const YAML::Node& node,
                                                           const std::string& path) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (node.IsScalar() && node.Scalar() == "all") {
        return out;
    }
    if (!node.IsSequence()) fail(node, path, "expected 'all' or a list of [s, a] pairs");
    for (std::size_t i = 0; i < node.size(); ++i) {
        const auto sa = list<std::size_t>(node[i], fmt::format("{}[{}]", path, i));
        if (sa.size() != 2) fail(node[i], path, "expected [s, a]");
        out.emplace_back(sa[0], sa[1]);
    }
    return out;
}

} // namespace

ModelSpec parse_model(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(fmt::format("line {}: {}", e.mark.line + 1, e.msg), e.mark.line + 1);
    }
    return model_section(root, "model");
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(fmt::format("{}:{}: {}", source, e.mark.line + 1, e.msg),
                          e.mark.line + 1);
    }
    ExperimentConfig cfg;
    try {
        check_map(root, "", {"model", "cousins", "ensemble", "schedule", "baselines",
                             "baseline_tables", "seeds", "output", "aggregation", "analysis",
                             "sweep", "run"});
        if (!root["model"]) {
            fail(root, "model", "section is required");
        }
        cfg.model = model_section(root["model"], "model");

        if (const auto c = root["cousins"]) {
            check_map(c, "cousins", {"orders", "estimate_visits", "estimate_seed"});
            read_list(c, "cousins", "orders", cfg.cousins.orders);
            read_size(c, "cousins", "estimate_visits", cfg.cousins.estimate_visits);
            read(c, "cousins", "estimate_seed", cfg.cousins.estimate_seed);
            if (cfg.cousins.orders.empty() || cfg.cousins.orders.front() != 1) {
                fail(c["orders"], "cousins.orders", "must start with order 1");
            }
            std::set<int> seen;
            for (int o : cfg.cousins.orders) {
                if (o < 1 || !seen.insert(o).second) {
                    fail(c["orders"], "cousins.orders", "orders must be distinct and >= 1");
                }
            }
        }
        cfg.ensemble.orders = cfg.cousins.orders;

        auto& e = cfg.ensemble;
        if (const auto n = root["ensemble"]) {
            check_map(n, "ensemble", {"u", "trajectory_len", "min_visits", "step_cap",
                                      "max_steps", "weight_refresh", "fusion"});
            read(n, "ensemble", "u", e.u);
            if (n["u"] && !(e.u > 0.0 && e.u < 1.0)) {
                fail(n["u"], "ensemble.u", "u must be > 0 and < 1");
            }
            read_size(n, "ensemble", "trajectory_len", e.trajectory_len);
            read(n, "ensemble", "min_visits", e.min_visits);
            read(n, "ensemble", "step_cap", e.step_cap);
            read(n, "ensemble", "max_steps", e.max_steps);
            read_size(n, "ensemble", "weight_refresh", e.weight_refresh);
            if (n["fusion"]) {
                const auto mode = scalar<std::string>(n["fusion"], "ensemble.fusion");
                if (mode == "lazy") e.fusion = FusionMode::Lazy;
                else if (mode == "dense") e.fusion = FusionMode::Dense;
                else fail(n["fusion"], "ensemble.fusion", "expected lazy or dense");
            }
            if (e.trajectory_len < 1) fail(n, "ensemble.trajectory_len", "must be >= 1");
            if (e.min_visits < 1) fail(n, "ensemble.min_visits", "must be >= 1");
            if (e.weight_refresh < 1) fail(n, "ensemble.weight_refresh", "must be >= 1");
        }

        auto& s = e.schedule;
        if (const auto n = root["schedule"]) {
            check_map(n, "schedule", {"alpha_scale", "alpha_index", "epsilon_rule", "epsilon_base",
                                      "epsilon_floor"});
            read(n, "schedule", "alpha_scale", s.alpha_scale);
            if (n["alpha_index"]) {
                const auto v = scalar<std::string>(n["alpha_index"], "schedule.alpha_index");
                if (v == "global") s.alpha_index = AlphaIndex::Global;
                else if (v == "visits") s.alpha_index = AlphaIndex::Visits;
                else fail(n["alpha_index"], "schedule.alpha_index", "expected global or visits");
            }
            if (n["epsilon_rule"]) {
                const auto v = scalar<std::string>(n["epsilon_rule"], "schedule.epsilon_rule");
                if (v == "floor") s.epsilon_rule = EpsilonRule::Floor;
                else if (v == "literal_min") s.epsilon_rule = EpsilonRule::LiteralMin;
                else if (v == "constant") s.epsilon_rule = EpsilonRule::Constant;
                else fail(n["epsilon_rule"], "schedule.epsilon_rule",
                          "expected floor, literal_min or constant");
            }
            read(n, "schedule", "epsilon_base", s.epsilon_base);
            read(n, "schedule", "epsilon_floor", s.epsilon_floor);
            try {
                s.validate();
            } catch (const Error& ex) {
                fail(n, "schedule", ex.what());
            }
        }

        if (const auto b = root["baselines"]) {
            cfg.baselines.clear();
            for (const auto& name : list<std::string>(b, "baselines")) {
                try {
                    cfg.baselines.push_back(parse_variant(name));
                } catch (const Error& ex) {
                    fail(b, "baselines", ex.what());
                }
            }
        }
        read_size(root, "", "baseline_tables", cfg.baseline_tables);
        if (cfg.baseline_tables < 2) fail(root["baseline_tables"], "baseline_tables", "must be >= 2");
        if (root["seeds"]) {
            cfg.seeds = list<std::uint64_t>(root["seeds"], "seeds");
            if (cfg.seeds.empty()) fail(root["seeds"], "seeds", "at least one seed is required");
        }
        e.seed = cfg.seeds.front();

        if (const auto o = root["output"]) {
            check_map(o, "output", {"dir", "trace_every", "ape_every", "oracle"});
            read(o, "output", "dir", cfg.output_dir);
            read(o, "output", "trace_every", cfg.trace_every);
            read(o, "output", "ape_every", cfg.ape_every);
            read(o, "output", "oracle", cfg.oracle);
            if (cfg.trace_every < 1) fail(o, "output.trace_every", "must be >= 1");
            if (cfg.ape_every < 1) fail(o, "output.ape_every", "must be >= 1");
        }

        if (const auto a = root["aggregation"]) {
            check_map(a, "aggregation", {"k", "spread_threshold"});
            read_size(a, "aggregation", "k", cfg.aggregation_k);
            read(a, "aggregation", "spread_threshold", cfg.spread_threshold);
        }

        if (const auto an = root["analysis"]) {
            check_map(an, "analysis", {"bounds", "adc", "bellman_select"});
            if (const auto b = an["bounds"]) {
                const std::string p = "analysis.bounds";
                check_map(b, p, {"pairs", "window", "beta_fraction", "tail_fraction",
                                 "gap_threshold", "min_fraction", "recursion_tol"});
                if (b["pairs"]) cfg.bounds.pairs = pair_list(b["pairs"], p + ".pairs");
                read_size(b, p, "window", cfg.bounds.window);
                read(b, p, "beta_fraction", cfg.bounds.beta_fraction);
                read(b, p, "tail_fraction", cfg.bounds.tail_fraction);
                read(b, p, "gap_threshold", cfg.bounds.gap_threshold);
                read(b, p, "min_fraction", cfg.bounds.min_fraction);
                read(b, p, "recursion_tol", cfg.bounds.recursion_tol);
                if (!(cfg.bounds.beta_fraction > 0.0 && cfg.bounds.beta_fraction < 1.0)) {
                    fail(b, p + ".beta_fraction", "must lie in (0, 1)");
                }
            }
            if (const auto d = an["adc"]) {
                const std::string p = "analysis.adc";
                check_map(d, p, {"enabled", "from", "to", "stride"});
                cfg.adc.enabled = true;
                read(d, p, "enabled", cfg.adc.enabled);
                read_size(d, p, "from", cfg.adc.from);
                read_size(d, p, "to", cfg.adc.to);
                read_size(d, p, "stride", cfg.adc.stride);
            }
            if (const auto sel = an["bellman_select"]) {
                const std::string p = "analysis.bellman_select";
                check_map(sel, p, {"k", "candidates", "greedy", "greedy_seeds"});
                read_size(sel, p, "k", cfg.select.k);
                read_list(sel, p, "candidates", cfg.select.candidates);
                read(sel, p, "greedy", cfg.select.greedy);
                read_list(sel, p, "greedy_seeds", cfg.select.greedy_seeds);
                if (cfg.select.k < 1) fail(sel, p + ".k", "must be >= 1");
            }
        }

        if (const auto sw = root["sweep"]) {
            check_map(sw, "sweep", {"parameter", "values"});
            read(sw, "sweep", "parameter", cfg.sweep.parameter);
            read_list(sw, "sweep", "values", cfg.sweep.values);
        }

        if (const auto r = root["run"]) {
            check_map(r, "run", {"threads", "dense_cap"});
            read_size(r, "run", "threads", cfg.threads);
            read_size(r, "run", "dense_cap", cfg.dense_cap);
        }
    } catch (const ConfigError& ex) {
        throw ConfigError(fmt::format("{}: {}", source, ex.what()), ex.line());
    }
    cfg.canonical = to_json(root);
    cfg.hash = fnv1a_hex(cfg.canonical.dump());
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot open config file {}", path));
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), path);
}

} // namespace cousinsq
