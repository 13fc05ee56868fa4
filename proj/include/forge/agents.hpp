#pragma once

// Playtesting agents: uniform random play, UCT search with a novelty bonus,
// and a breadth-first solver that serves as the reachability oracle.

#include <array>
#include <optional>
#include <stdexcept>
#include <set>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "forge/engine.hpp"

namespace forge::agents {

using engine::Action;
using engine::Cell;
using engine::GameState;
using engine::Simulator;
using engine::Status;
using engine::TraceEvent;

struct Playtrace {
    std::vector<Action> actions;
    std::vector<TraceEvent> events;  // empty unless requested
    Status outcome = Status::Running;
    int64_t ticks = 0;
    int64_t unique_states = 0;  // distinct state_hash values visited, initial state included
    std::set<int32_t> rules_fired;
    std::vector<uint64_t> visited_hashes;  // distinct, in first-visit order
};

struct MctsParams {
    int iterations = 5000;
    double exploration_c = 1.41;
    int rollout_depth = 40;
    double novelty_bonus = 0.01;
    double win_reward = 1.0;
    double loss_reward = 0.0;
    double timeout_reward = 0.0;

    friend bool operator==(const MctsParams&, const MctsParams&) = default;
};

nlohmann::json params_to_json(const MctsParams& p);
/// Missing keys keep their defaults. Throws std::invalid_argument on bad values.
MctsParams params_from_json(const nlohmann::json& j);

class TerminalStateSearch : public engine::EngineError {
public:
    TerminalStateSearch() : EngineError("search from a terminal state") {}
};

class EmptyInput : public std::invalid_argument {
public:
    EmptyInput() : std::invalid_argument("no traces") {}
};

/// Terminal reward of `status` plus novelty_bonus per newly seen hash.
double rollout_reward(Status status, int64_t new_hashes, const MctsParams& p);

/// Uniform actions until the episode ends. Actions draw from a stream
/// independent of the state rng, so behaviors see the same draws as in replay.
Playtrace random_episode(const Simulator& sim, size_t level, uint64_t seed, bool keep_events = false);

/// One search instance per episode: the seen-set of state hashes persists
/// across calls to search().
class MctsSearch {
public:
    MctsSearch(const Simulator& sim, MctsParams params, uint64_t seed);

    Action search(const GameState& s);

    /// Root visit counts of the last search, in kAllActions order.
    const std::array<int64_t, 5>& last_visits() const { return last_visits_; }
    size_t seen_count() const { return seen_.size(); }

private:
    const Simulator& sim_;
    MctsParams p_;
    Rng rng_;
    std::unordered_set<uint64_t> seen_;
    std::array<int64_t, 5> last_visits_{};
};

Action mcts_search(const Simulator& sim, const GameState& s, const MctsParams& p, uint64_t seed);

Playtrace mcts_episode(const Simulator& sim, size_t level, const MctsParams& p, uint64_t seed,
                       bool keep_events = false);

inline constexpr size_t kDefaultStateCap = 200000;

struct ReachabilityReport {
    std::unordered_set<uint64_t> reachable_hashes;
    // Per piece index: cells a controlled instance occupied or stepped into,
    // even if a rule then removed it. Empty for non-controlled pieces.
    std::vector<std::set<Cell>> reachable_cells;
    bool winnable = false;
    std::optional<std::vector<Action>> shortest_win;
    bool truncated = false;
    size_t states = 0;  // distinct search nodes expanded or queued

    bool cell_reachable(Cell c) const;
};

/// Breadth-first search over (structure, tick residue) with every outcome of
/// random behaviors enumerated. Within tick_cap, reachable states are found
/// exactly: a structure revisited at a later tick has a subset of futures.
ReachabilityReport exhaustive_solve(const Simulator& sim, const gdl::LevelDef& level,
                                    size_t state_cap = kDefaultStateCap);
ReachabilityReport exhaustive_solve(const Simulator& sim, size_t level, size_t state_cap = kDefaultStateCap);

struct CoverageSummary {
    double rules_fired_fraction = 0;
    double terminating_fraction = 0;
    bool won_any = false;
    std::set<int32_t> rules_fired;
};

/// Throws EmptyInput for an empty list. Without rules the fired fraction is 1.
CoverageSummary coverage_metrics(const std::vector<Playtrace>& traces, const gdl::GameDefinition& g);

}  // namespace forge::agents
