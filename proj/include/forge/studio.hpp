#pragma once

// The continuous design loop. Every knowledge-base mutation is an event;
// run_studio computes an event from (kb, rng) and applies it with
// apply_event, so replaying the feed over the initial knowledge base
// reproduces the final one.
//
// Workspace layout: workspace.lock, events.jsonl (append-only),
// catalogue.json, knowledge.json, exports/. Per step the event is appended
// first, then catalogue.json and knowledge.json are replaced atomically. On
// load, a feed longer than knowledge.json's position is replayed from the
// initial knowledge base and a torn final line is discarded.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/leveldesign.hpp"
#include "forge/mechanics.hpp"
#include "forge/rulesetdesign.hpp"

namespace forge::studio {

enum class Activity { RulesetDesign, PotentialTest, LevelDesign, MechanicInvention, Shelve, Resume, Export };
inline constexpr Activity kAllActivities[] = {Activity::RulesetDesign, Activity::PotentialTest,
                                              Activity::LevelDesign,   Activity::MechanicInvention,
                                              Activity::Shelve,        Activity::Resume,
                                              Activity::Export};

std::string_view to_string(Activity a);
/// Throws std::invalid_argument.
Activity activity_from_string(std::string_view s);

class StudioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class WorkspaceLocked : public StudioError {
public:
    using StudioError::StudioError;
};
class PersistenceFailure : public StudioError {
public:
    using StudioError::StudioError;
};
class CorruptWorkspace : public StudioError {
public:
    using StudioError::StudioError;
};
class IoFailure : public StudioError {
public:
    using StudioError::StudioError;
};
class ProjectIncomplete : public StudioError {
public:
    using StudioError::StudioError;
};
class BelowThreshold : public StudioError {
public:
    using StudioError::StudioError;
};
class UnknownProject : public StudioError {
public:
    using StudioError::StudioError;
};

struct Stage {
    bool has_ruleset = false;
    bool ruleset_promising = false;
    bool has_levels = false;
    bool levels_playable = false;
    friend bool operator==(const Stage&, const Stage&) = default;
};

struct Touch {
    int64_t step = 0;
    Activity activity = Activity::RulesetDesign;
    uint64_t seed = 0;
    friend bool operator==(const Touch&, const Touch&) = default;
};

struct Project {
    std::string id;
    std::string skeleton;
    gdl::GameDefinition definition;  // rules and levels may be empty
    Stage stage;
    bool potential_tested = false;
    int level_attempts = 0;
    bool exported = false;
    std::optional<int64_t> shelved_since;
    std::optional<double> quality;
    nlohmann::json evidence = nlohmann::json::object();  // "potential", "level"
    std::vector<Touch> history;
    friend bool operator==(const Project&, const Project&) = default;
};

struct Sketch {
    gdl::LevelDef level;
    std::string project;
    int64_t step = 0;
    friend bool operator==(const Sketch&, const Sketch&) = default;
};

struct MechanicRecord {
    mechanics::MechanicCandidate candidate;
    mechanics::InterestReport report;
    int64_t step = 0;
    friend bool operator==(const MechanicRecord&, const MechanicRecord&) = default;
};

struct KnowledgeBase {
    uint64_t origin_seed = 0;
    uint64_t rng_state = 0;
    rulesetdesign::Catalogue catalogue;
    std::vector<MechanicRecord> mechanics_log;
    std::vector<Sketch> sketches;
    std::vector<Project> projects;
    int64_t event_log_position = 0;  // events applied; the next step is this + 1
    int64_t last_bank_step = 0;
    int64_t next_project = 1;

    const Project* find(const std::string& id) const;
    Project* find(const std::string& id);
    friend bool operator==(const KnowledgeBase&, const KnowledgeBase&) = default;
};

KnowledgeBase initial_knowledge(uint64_t seed);

nlohmann::json knowledge_to_json(const KnowledgeBase& kb);  // without the catalogue
/// Throws CorruptWorkspace, including on any definition or pattern that fails validation.
KnowledgeBase knowledge_from_json(const nlohmann::json& j, rulesetdesign::Catalogue catalogue);
/// Digest over knowledge and catalogue.
std::string kb_digest(const KnowledgeBase& kb);

struct ActivityEvent {
    int64_t step = 0;
    Activity activity = Activity::RulesetDesign;
    std::optional<std::string> project;
    std::string summary;
    nlohmann::json payload = nlohmann::json::object();  // always carries "rng_after"
    friend bool operator==(const ActivityEvent&, const ActivityEvent&) = default;
};

nlohmann::json event_to_json(const ActivityEvent& e);
ActivityEvent event_from_json(const nlohmann::json& j);

struct Utilities {
    double ruleset_design = 1.0;
    double potential_test = 2.0;
    double level_design = 2.0;
    double mechanic_invention = 1.0;
    double shelve = 1.5;
    double resume = 1.5;
    int64_t staleness_horizon = 20;  // steps since the last bank at which invention peaks
    double resume_initial = 0.25;    // fraction of `resume` right after shelving
    double resume_decay = 4.0;       // steps
    int64_t resume_cooldown = 15;    // steps before the spike
    double resume_spike = 1.0;
};

struct StudioConfig {
    double temperature = 1.0;
    Utilities utilities;
    int patterns_min = 2, patterns_max = 3;
    rulesetdesign::PotentialBudget potential = [] {
        rulesetdesign::PotentialBudget b;
        b.random_episodes = 10;
        b.mcts_episodes = 1;
        b.mcts.iterations = 200;
        b.tick_cap = 100;
        return b;
    }();
    leveldesign::EvolutionParams evolution = [] {
        leveldesign::EvolutionParams p;
        p.population = 12;
        p.generations = 8;
        p.random_episodes = 5;
        p.mcts.iterations = 300;
        return p;
    }();
    int mining_batch = 6;
    size_t mining_state_cap = 20000;
    size_t solve_state_cap = agents::kDefaultStateCap;
    int max_level_attempts = 2;
    int64_t level_tick_cap = 60;
};

/// Missing fields keep their defaults. Throws std::invalid_argument.
StudioConfig config_from_json(const nlohmann::json& j);

/// Built-in piece sets new projects start from.
std::vector<std::pair<std::string, gdl::GameDefinition>> builtin_skeletons();

/// Per-activity utility for the current knowledge base (index = enum order).
std::vector<double> activity_utilities(const KnowledgeBase& kb, const StudioConfig& cfg);

struct Selection {
    Activity activity = Activity::RulesetDesign;
    std::optional<std::string> target;  // nullopt for RulesetDesign means a new project
    friend bool operator==(const Selection&, const Selection&) = default;
};

/// Export preempts when a project is publishable; otherwise softmax over the
/// utilities (argmax, ties to enum order, when temperature <= 0). Draws one
/// uniform from `rng` either way.
Selection select_activity(const KnowledgeBase& kb, const StudioConfig& cfg, Rng& rng);

/// Promising ruleset, playable level, MCTS win and a certified solve.
bool publishable(const Project& p);

/// Pure: the event for one bounded activity step. Export writes files.
ActivityEvent execute_activity(const KnowledgeBase& kb, const StudioConfig& cfg, const Selection& sel, Rng& rng,
                               const std::string& workspace);

/// Throws CorruptWorkspace when the event does not fit the knowledge base.
void apply_event(KnowledgeBase& kb, const ActivityEvent& e);
KnowledgeBase replay(const std::vector<ActivityEvent>& feed, uint64_t origin_seed);

/// Files written: exports/<id>.json and exports/<id>.provenance.json.
/// Returns the game path. Throws ProjectIncomplete, BelowThreshold.
std::string export_game(const Project& p, const KnowledgeBase& kb, const std::string& workspace);

struct ExportCheck {
    bool valid_game = false;
    bool digest_matches = false;
    bool winnable = false;
    bool win_replays = false;
    bool ok() const { return valid_game && digest_matches && winnable && win_replays; }
};
/// Re-derives winnability of an exported game with the exhaustive solver.
ExportCheck verify_export(const std::string& game_path, const std::string& sidecar_path);

/// Exclusive advisory lock on workspace.lock for the object's lifetime.
class WorkspaceLock {
public:
    explicit WorkspaceLock(const std::string& workspace);  // throws WorkspaceLocked, IoFailure
    ~WorkspaceLock();
    WorkspaceLock(const WorkspaceLock&) = delete;
    WorkspaceLock& operator=(const WorkspaceLock&) = delete;

private:
    int fd_ = -1;
};

bool workspace_exists(const std::string& dir);
/// Recovers from an interrupted step as described above. Throws CorruptWorkspace, IoFailure.
KnowledgeBase load_workspace(const std::string& dir);
/// Atomic replace of catalogue.json then knowledge.json. Throws PersistenceFailure.
void save_workspace(const KnowledgeBase& kb, const std::string& dir);
std::vector<ActivityEvent> read_feed(const std::string& dir);

struct StudioRun {
    KnowledgeBase kb;
    std::vector<ActivityEvent> events;  // this run only
};

/// Runs `steps` more steps. A fresh workspace starts from initial_knowledge(seed);
/// an existing one resumes from its persisted state and ignores `seed`.
StudioRun run_studio(const StudioConfig& cfg, uint64_t seed, int steps, const std::string& workspace);

}  // namespace forge::studio
