#pragma once

#include "cousinsq/mdp.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>

namespace cousinsq {

/**
 * JSON layout: num_states, num_actions, gamma, probs (one row-major
 * num_states x num_states array per action), expected_costs (num_states rows
 * of num_actions entries) and, when present, transition_costs and order.
 */
nlohmann::json mdp_to_json(const Mdp& mdp, std::optional<int> order = std::nullopt);

/// Parses and re-validates every invariant of the document.
Mdp mdp_from_json(const nlohmann::json& doc);

void save_mdp(const std::string& path, const Mdp& mdp, std::optional<int> order = std::nullopt);
Mdp load_mdp(const std::string& path);

} // namespace cousinsq
