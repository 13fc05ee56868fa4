#pragma once

// Turn-based simulation of one level of a game definition.
//
// A step runs four phases: controlled pieces move with the input, the other
// pieces act out their behaviors, rules fire in definition order, and the
// tick advances. Rule commands take effect immediately, so later pairs and
// later rules see the mutated state.
//
// OVERLAP pairs are instances sharing a cell, plus contacts: a mover whose
// step was blocked by a solid instance touches that instance for the rest of
// the step.

#include <array>
#include <compare>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "forge/gdl.hpp"
#include "forge/util.hpp"

namespace forge::engine {

enum class Action : uint8_t { Up, Down, Left, Right, Wait };

/// Fixed action order; also the MCTS tie-break order.
inline constexpr std::array<Action, 5> kAllActions = {Action::Up, Action::Down, Action::Left, Action::Right,
                                                      Action::Wait};

std::string_view to_string(Action a);
Action action_from_string(std::string_view s);

enum class Status : uint8_t { Running, Won, Lost, Timeout };

std::string_view to_string(Status s);
inline bool is_terminal(Status s) { return s != Status::Running; }

struct Cell {
    int32_t x = 0, y = 0;
    friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct Instance {
    int32_t id = 0;
    int32_t piece = 0;  // index into GameDefinition::pieces
    int32_t x = 0, y = 0;
    friend bool operator==(const Instance&, const Instance&) = default;
};

struct GameState {
    int32_t width = 1, height = 1;
    std::vector<Instance> instances;  // alive only, ascending id
    std::vector<int64_t> variables;   // declaration order
    std::vector<uint8_t> edge_armed;  // per rule: edge condition held at last evaluation
    int64_t tick = 0;
    Status status = Status::Running;
    Rng rng;
    int32_t next_id = 0;

    friend bool operator==(const GameState&, const GameState&) = default;
};

enum class EventKind : uint8_t { Moved, Blocked, RuleFired, Destroyed, Spawned, Transformed, VarChanged, Sfx, StatusChanged };

std::string_view to_string(EventKind k);

struct TraceEvent {
    int64_t tick = 0;
    EventKind kind = EventKind::Moved;
    int32_t instance = -1;
    std::string piece;     // Transformed: previous piece
    std::string piece_to;  // Transformed: new piece
    Cell from{}, to{};     // Moved/Blocked: origin and target; Destroyed/Spawned: `from` is the cell
    int32_t rule = -1;
    std::string trigger;   // RuleFired: trigger text
    std::vector<int32_t> bound;
    std::string name;      // VarChanged: variable; Sfx: sound
    int64_t old_value = 0, new_value = 0;
    Status status = Status::Running;

    friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

class EngineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class LevelIndexOutOfRange : public EngineError {
public:
    using EngineError::EngineError;
};

class SteppingTerminalState : public EngineError {
public:
    SteppingTerminalState() : EngineError("cannot step a terminal state") {}
};

namespace detail {

struct CompiledCommand {
    enum class Op : uint8_t { DestroyBound, DestroyPiece, Sfx, AddVar, SetVar, Win, Lose, Spawn, Transform };
    Op op = Op::Sfx;
    int32_t binding = -1;  // 0-based
    int32_t piece = -1;
    int32_t var = -1;
    int64_t value = 0;
    std::string text;  // sfx name
};

/// A move blocked by a solid instance: the pair counts as overlapping for
/// the rules phase of the same step.
struct Contact {
    int32_t mover = -1, blocker = -1;
    Cell at{};
};

struct CompiledRule {
    enum class Kind : uint8_t { Overlap, Tick, Var, Count };
    Kind kind = Kind::Tick;
    int32_t piece_a = -1, piece_b = -1;
    int32_t var = -1;
    gdl::Cmp cmp = gdl::Cmp::Eq;
    int64_t value = 0;
    std::vector<std::pair<int32_t, std::pair<gdl::Cmp, int64_t>>> guards;
    std::vector<CompiledCommand> code;
    std::string trigger_text;
};

}  // namespace detail

/// A validated definition with names resolved to indices.
class Simulator {
public:
    /// Throws gdl::SchemaError / gdl::DanglingReference if `g` is invalid.
    explicit Simulator(gdl::GameDefinition g);

    const gdl::GameDefinition& definition() const { return def_; }

    GameState init_state(size_t level_index, uint64_t seed) const;
    GameState init_state(const gdl::LevelDef& level, uint64_t seed) const;

    std::pair<GameState, std::vector<TraceEvent>> step(const GameState& s, Action a) const;

    /// In-place step. `events` may be null. When `forced_moves` is nonempty it
    /// supplies the direction (0..3 = Up, Down, Left, Right) of each
    /// random-behavior instance in id order instead of drawing from s.rng.
    void advance(GameState& s, Action a, std::vector<TraceEvent>* events = nullptr,
                 std::span<const uint8_t> forced_moves = {}) const;

    /// Instances whose behavior draws a direction from the rng this step.
    int random_mover_count(const GameState& s) const;

    /// Digest of per-cell piece-name multisets, variables and status.
    /// Excludes tick, rng, ids and edge flags; Timeout digests as Running.
    uint64_t state_hash(const GameState& s) const;

    /// Everything that determines future behavior except tick and rng.
    std::string structural_key(const GameState& s) const;

    bool has_tick_rules() const { return tick_period_lcm_ > 0; }
    /// Least common multiple of TICK periods, capped at tick_cap; 0 without TICK rules.
    int64_t tick_period_lcm() const { return tick_period_lcm_; }

    const std::string& piece_name(int32_t piece) const { return def_.pieces[static_cast<size_t>(piece)].name; }
    bool is_controlled(int32_t piece) const { return def_.pieces[static_cast<size_t>(piece)].controlled; }
    std::vector<int32_t> controlled_pieces() const;

private:
    bool try_move(GameState& s, size_t idx, int dx, int dy, std::vector<TraceEvent>* events,
                  std::vector<detail::Contact>& contacts) const;
    void run_rules(GameState& s, std::vector<TraceEvent>* events, const std::vector<detail::Contact>& contacts) const;
    void fire(GameState& s, size_t rule_index, const int32_t* ids, const Cell* cells,
              std::vector<TraceEvent>* events) const;

    gdl::GameDefinition def_;
    std::vector<detail::CompiledRule> rules_;
    std::vector<int32_t> name_rank_;  // piece index -> rank of its name in sorted order
    std::vector<int32_t> rank_piece_;  // inverse of name_rank_
    int score_var_ = -1;
    int64_t tick_period_lcm_ = 0;
};

std::set<Action> legal_actions(const GameState& s);

inline uint64_t state_hash(const Simulator& sim, const GameState& s) { return sim.state_hash(s); }

}  // namespace forge::engine
