#include "cousinsq/mdp_io.hpp"

#include "cousinsq/errors.hpp"

#include <fmt/format.h>

#include <fstream>

namespace cousinsq {

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& rows, std::size_t n_rows, std::size_t n_cols,
                        const std::string& what) {
    if (!rows.is_array() || rows.size() != n_rows) {
        throw ArgumentError(fmt::format("{}: expected {} rows", what, n_rows));
    }
    Matrix m(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(n_cols));
    for (std::size_t i = 0; i < n_rows; ++i) {
        const auto& row = rows[i];
        if (!row.is_array() || row.size() != n_cols) {
            throw ArgumentError(fmt::format("{}: row {} must have {} entries", what, i, n_cols));
        }
        for (std::size_t j = 0; j < n_cols; ++j) {
            if (!row[j].is_number()) {
                throw ArgumentError(fmt::format("{}: entry ({}, {}) is not a number", what, i, j));
            }
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j].get<double>();
        }
    }
    return m;
}

std::size_t positive_size(const nlohmann::json& doc, const char* key) {
    if (!doc.contains(key) || !doc[key].is_number_unsigned() || doc[key].get<std::size_t>() == 0) {
        throw ArgumentError(fmt::format("'{}' must be a positive integer", key));
    }
    return doc[key].get<std::size_t>();
}

} // namespace

nlohmann::json mdp_to_json(const Mdp& mdp, std::optional<int> order) {
    nlohmann::json doc;
    doc["num_states"] = mdp.num_states();
    doc["num_actions"] = mdp.num_actions();
    doc["gamma"] = mdp.gamma();
    nlohmann::json probs = nlohmann::json::array();
    for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
        probs.push_back(matrix_to_json(mdp.transitions().action(a)));
    }
    doc["probs"] = std::move(probs);
    doc["expected_costs"] = matrix_to_json(mdp.costs().expected());
    if (mdp.costs().has_transition_costs()) {
        nlohmann::json tc = nlohmann::json::array();
        for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
            tc.push_back(matrix_to_json(mdp.costs().transition(a)));
        }
        doc["transition_costs"] = std::move(tc);
    }
    if (order) {
        doc["order"] = *order;
    }
    return doc;
}

Mdp mdp_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) {
        throw ArgumentError("MDP document must be a JSON object");
    }
    const std::size_t ns = positive_size(doc, "num_states");
    const std::size_t na = positive_size(doc, "num_actions");
    if (!doc.contains("gamma") || !doc["gamma"].is_number()) {
        throw ArgumentError("'gamma' must be a number");
    }
    if (!doc.contains("probs") || !doc["probs"].is_array() || doc["probs"].size() != na) {
        throw ArgumentError(fmt::format("'probs' must hold {} matrices", na));
    }
    std::vector<Matrix> probs;
    for (std::size_t a = 0; a < na; ++a) {
        probs.push_back(matrix_from_json(doc["probs"][a], ns, ns, fmt::format("probs[{}]", a)));
    }
    TransitionTensor transitions(std::move(probs));
    if (!doc.contains("expected_costs")) {
        throw ArgumentError("'expected_costs' is required");
    }
    Matrix expected = matrix_from_json(doc["expected_costs"], ns, na, "expected_costs");
    if (doc.contains("transition_costs")) {
        const auto& tc = doc["transition_costs"];
        if (!tc.is_array() || tc.size() != na) {
            throw ArgumentError(fmt::format("'transition_costs' must hold {} matrices", na));
        }
        std::vector<Matrix> mats;
        for (std::size_t a = 0; a < na; ++a) {
            mats.push_back(matrix_from_json(tc[a], ns, ns, fmt::format("transition_costs[{}]", a)));
        }
        CostModel costs = CostModel::from_transition_costs(std::move(mats), transitions);
        const double gap = (costs.expected() - expected).cwiseAbs().maxCoeff();
        if (gap > 1e-9) {
            throw InvariantError(fmt::format(
                "expected_costs disagree with transition_costs by {:.3e}", gap));
        }
        return Mdp(std::move(transitions), std::move(costs), doc["gamma"].get<double>());
    }
    return Mdp(std::move(transitions), CostModel(std::move(expected)), doc["gamma"].get<double>());
}

void save_mdp(const std::string& path, const Mdp& mdp, std::optional<int> order) {
    std::ofstream out(path);
    if (!out) {
        throw Error(fmt::format("cannot open {} for writing", path));
    }
    out << mdp_to_json(mdp, order).dump(1) << '\n';
}

Mdp load_mdp(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(fmt::format("cannot open {}", path));
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw ArgumentError(fmt::format("{}: {}", path, e.what()));
    }
    return mdp_from_json(doc);
}

} // namespace cousinsq
