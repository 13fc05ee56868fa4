#pragma once

// JSON encodings of the GDL building blocks, shared by the catalogue,
// workspace and trace formats.

#include <string>

#include <json.hpp>

#include "forge/gdl.hpp"

namespace forge::gdl {

nlohmann::json rule_to_json(const Rule& r);
Rule rule_from_json(const nlohmann::json& j, const std::string& path);

nlohmann::json level_to_json(const LevelDef& l);
LevelDef level_from_json(const nlohmann::json& j, const std::string& path);

nlohmann::json variable_to_json(const VariableDef& v);
VariableDef variable_from_json(const nlohmann::json& j, const std::string& path);

nlohmann::json game_to_json(const GameDefinition& g);
/// Structure only; does not run validate_game.
GameDefinition game_from_json(const nlohmann::json& j);

/// Integer field that may also be written as a numeric string ("5").
int64_t int_field(const nlohmann::json& j, const std::string& path);

}  // namespace forge::gdl
