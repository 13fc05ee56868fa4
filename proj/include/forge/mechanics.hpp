#pragma once

// Mechanic invention: small rule blocks composed from the trigger and command
// vocabulary, judged by whether they change what the exhaustive solver can
// reach in fixed environments where something is known to be unreachable.

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/agents.hpp"
#include "forge/gdl.hpp"
#include "forge/rulesetdesign.hpp"

namespace forge::mechanics {

using engine::Action;
using engine::Cell;

/// Rules use role names (avatar, obstacle, hazard, target) as piece names.
/// `id` is the digest of the normalized text.
struct MechanicCandidate {
    std::string id;
    std::vector<gdl::Rule> rules;
    uint64_t synth_seed = 0;
    friend bool operator==(const MechanicCandidate&, const MechanicCandidate&) = default;
};

/// Commands drawn for a rule binding k instances: DESTROY $1..$k,
/// DESTROY <role>, SFX <sound>, SCORE <amount>, SET <var> <constant>,
/// ADD <var> <amount>, WIN, LOSE, SPAWN <role> $1..$k, TRANSFORM $1..$k <role>.
/// Triggers: OVERLAP <role> <role>, TICK <period>, VAR <var> <cmp> <constant>,
/// COUNT <role> <cmp> <constant>. Guards: VAR <var> <cmp> <constant>.
struct Vocabulary {
    std::vector<std::string> roles = {"avatar", "obstacle", "hazard", "target"};
    std::vector<std::string> variables = {"flag", "score"};
    std::vector<std::string> sounds = {"ding"};
    std::vector<int64_t> tick_periods = {1, 2, 3, 5};
    std::vector<int64_t> constants = {0, 1, 2};
    std::vector<int64_t> amounts = {1};
};

struct SynthesisBounds {
    int max_rules = 2;     // 1..2
    int max_commands = 3;  // 1..4
    double guard_chance = 0.25;
    std::optional<gdl::Trigger> fixed_trigger;
    int attempts_per_candidate = 50;  // sampling gives up after count * this draws
};

class MechanicsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class InvalidCount : public MechanicsError {
public:
    using MechanicsError::MechanicsError;
};
class UncertifiedEnvironment : public MechanicsError {
public:
    using MechanicsError::MechanicsError;
};
class NotInteresting : public MechanicsError {
public:
    using MechanicsError::MechanicsError;
};

/// Drops repeats of idempotent commands and sorts and dedups guards.
std::vector<gdl::Rule> normalize_rules(std::vector<gdl::Rule> rules);
std::string normalized_text(const std::vector<gdl::Rule>& rules);
/// Normalizes the rules and assigns the digest id.
MechanicCandidate make_candidate(std::vector<gdl::Rule> rules, uint64_t synth_seed = 0);

/// Up to `count` distinct normalized candidates; fewer only when the bounded
/// space is exhausted within the attempt budget. Throws InvalidCount for
/// count < 1.
std::vector<MechanicCandidate> synthesize_candidates(const Vocabulary& vocab, const SynthesisBounds& bounds, int count,
                                                     uint64_t seed);

nlohmann::json candidate_to_json(const MechanicCandidate& m);
MechanicCandidate candidate_from_json(const nlohmann::json& j);

struct Certification {
    std::set<Cell> reachable;  // avatar cells under the baseline
    bool winnable = false;
    size_t states = 0;
    friend bool operator==(const Certification&, const Certification&) = default;
};

/// Pieces are player (controlled), wall (solid), exit, hazard; roles bind
/// avatar, obstacle, target, hazard to them.
struct TestEnvironment {
    std::string name;
    gdl::GameDefinition definition;  // baseline rules, one level
    std::vector<Cell> target_cells;
    std::map<std::string, std::string> binding;
    Certification certification;
};

/// WallGap, LockedChamber, HazardCorridor, each with its certification.
std::vector<TestEnvironment> builtin_environments();

Certification certify(const TestEnvironment& env, size_t state_cap = agents::kDefaultStateCap);
/// The shipped certification matches a fresh solve and no target is reachable.
bool is_certified(const TestEnvironment& env, size_t state_cap = agents::kDefaultStateCap);

/// Every first action leads to Won or Lost after one step, under every
/// outcome of random behaviors.
bool ends_within_one_tick(const engine::Simulator& sim, const gdl::LevelDef& level);

/// The environment's baseline with the candidate's rules appended (roles
/// bound, required variables declared).
gdl::GameDefinition augment(const TestEnvironment& env, const MechanicCandidate& m);

struct Witness {
    std::string environment;
    std::optional<Cell> cell;
    std::optional<std::vector<Action>> win;
    friend bool operator==(const Witness&, const Witness&) = default;
};

struct EnvironmentResult {
    std::string environment;
    std::set<Cell> newly_reachable_cells;
    bool newly_winnable = false;
    bool degenerate = false;
    bool truncated = false;
    friend bool operator==(const EnvironmentResult&, const EnvironmentResult&) = default;
};

/// interesting iff some environment gained a cell or a win and not every
/// environment is degenerate. Truncated environments report no gains.
struct InterestReport {
    std::string candidate_id;
    std::vector<EnvironmentResult> environments;
    bool interesting = false;
    std::optional<Witness> witness;  // set iff interesting
    friend bool operator==(const InterestReport&, const InterestReport&) = default;
};

nlohmann::json report_to_json(const InterestReport& r);
InterestReport report_from_json(const nlohmann::json& j);

/// Throws UncertifiedEnvironment when a baseline no longer matches its
/// certification.
InterestReport evaluate_candidate(const MechanicCandidate& m, const std::vector<TestEnvironment>& envs,
                                  size_t state_cap = agents::kDefaultStateCap);

/// "Mined_" + first 8 hex digits of the id (suffixed on a name clash).
/// Banking an id already present returns the catalogue unchanged. Throws
/// NotInteresting.
rulesetdesign::Catalogue bank_mechanic(const MechanicCandidate& m, const InterestReport& report,
                                       const rulesetdesign::Catalogue& c);

struct MiningResult {
    rulesetdesign::Catalogue catalogue;
    std::vector<std::pair<MechanicCandidate, InterestReport>> evaluated;
    std::vector<std::string> banked;  // pattern names added
};

/// Synthesize, evaluate against the builtin environments, bank the interesting.
MiningResult mine(const rulesetdesign::Catalogue& c, int count, uint64_t seed, const SynthesisBounds& bounds = {},
                  size_t state_cap = agents::kDefaultStateCap);

}  // namespace forge::mechanics
