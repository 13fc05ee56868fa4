#pragma once

// Rule-pattern catalogue, blind instantiation of patterns into a game, and
// the weak "potential" check of a ruleset on template rooms.
//
// A pattern's rules are ordinary rules whose piece names are role names;
// instantiation substitutes the bound pieces.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/agents.hpp"
#include "forge/gdl.hpp"

namespace forge::rulesetdesign {

struct Provenance {
    enum class Kind { Seeded, Banked };
    Kind kind = Kind::Seeded;
    std::string mechanic_id;  // Banked only
    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct RulePattern {
    std::string name;
    std::vector<std::string> roles;
    std::vector<gdl::Rule> rules;
    std::vector<gdl::VariableDef> required_vars;
    Provenance provenance;
    friend bool operator==(const RulePattern&, const RulePattern&) = default;
};

struct Catalogue {
    int64_t version = 1;
    std::vector<RulePattern> patterns;

    const RulePattern* find(const std::string& name) const;
    friend bool operator==(const Catalogue&, const Catalogue&) = default;
};

class RulesetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class InvalidPattern : public RulesetError {
public:
    using RulesetError::RulesetError;
};
class UnboundRole : public RulesetError {
public:
    using RulesetError::RulesetError;
};
class UnknownPiece : public RulesetError {
public:
    using RulesetError::RulesetError;
};
class InsufficientPieces : public RulesetError {
public:
    using RulesetError::RulesetError;
};
class CatalogueTooSmall : public RulesetError {
public:
    using RulesetError::RulesetError;
};

/// Throws InvalidPattern: every rule placeholder must be a role, every
/// variable must be required, and rules must be nonempty.
void validate_pattern(const RulePattern& p);

nlohmann::json pattern_to_json(const RulePattern& p);
RulePattern pattern_from_json(const nlohmann::json& j);
nlohmann::json catalogue_to_json(const Catalogue& c);
/// Throws InvalidPattern on duplicate names or invalid patterns.
Catalogue catalogue_from_json(const nlohmann::json& j);
Catalogue load_catalogue(const std::string& path);
void save_catalogue(const Catalogue& c, const std::string& path);

/// Built-in catalogue, version 1.
Catalogue seed_catalogue();

struct Instantiation {
    std::vector<gdl::Rule> rules;
    std::vector<gdl::VariableDef> variables;  // to append to the game
};

/// "score" is shared with the game; other required variables that collide
/// with existing names get the first free suffix _2, _3, ...
Instantiation instantiate_pattern(const RulePattern& p, const std::map<std::string, std::string>& binding,
                                  const gdl::GameDefinition& g);

/// Role "avatar" binds controlled pieces; "obstacle" prefers solid pieces;
/// other roles prefer non-solid pieces. Distinct pieces are preferred within
/// one pattern.
std::map<std::string, std::string> sample_binding(const RulePattern& p, const gdl::GameDefinition& g, Rng& rng);

/// The skeleton with `n_patterns` sampled patterns instantiated into it.
/// At least one sampled pattern carries WIN or LOSE.
gdl::GameDefinition assemble_ruleset(const Catalogue& c, const gdl::GameDefinition& skeleton, int n_patterns,
                                     uint64_t seed);

struct PotentialBudget {
    int random_episodes = 20;
    int mcts_episodes = 3;
    agents::MctsParams mcts = [] {
        agents::MctsParams p;
        p.iterations = 300;
        return p;
    }();
    int64_t tick_cap = 200;
    int32_t room = 7;
};

struct TemplateLevel {
    std::string name;
    gdl::LevelDef level;
};

/// T1: empty room, the first controlled piece at the centre and one instance
/// of every other piece spaced along the border. T2: every piece twice at
/// seeded distinct cells.
std::vector<TemplateLevel> potential_templates(const gdl::GameDefinition& g, int32_t room, uint64_t seed);

struct Witness {
    std::string template_name;
    std::string agent;  // "random" or "mcts"
    int episode = 0;
    int64_t tick = 0;
    friend bool operator==(const Witness&, const Witness&) = default;
};

struct TemplateCoverage {
    std::string name;
    gdl::LevelDef level;
    agents::CoverageSummary coverage;
};

enum class Verdict { Promising, Dead };
std::string_view to_string(Verdict v);

struct PotentialReport {
    std::vector<TemplateCoverage> templates;
    bool all_rules_firable = false;
    bool terminates = false;
    bool winnable = false;
    Verdict verdict = Verdict::Dead;
    std::vector<std::optional<Witness>> witnesses;  // per rule: first firing
};

nlohmann::json report_to_json(const PotentialReport& r);

PotentialReport test_potential(const gdl::GameDefinition& g, const PotentialBudget& budget = {}, uint64_t seed = 0);

}  // namespace forge::rulesetdesign
