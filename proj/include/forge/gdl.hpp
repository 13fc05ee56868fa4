#pragma once

// Game description format: metadata, variables, pieces, rules and levels as a
// JSON document. Triggers, guards and commands are stored as one-line text
// forms ("OVERLAP playerpiece enemy", "DESTROY $2") inside the JSON.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace forge::gdl {

inline constexpr int64_t kDefaultTickCap = 1000;

struct Color {
    double r = 0, g = 0, b = 0;
    friend bool operator==(const Color&, const Color&) = default;
};

struct VariableDef {
    std::string name;
    std::string onscreen;  // empty = hidden
    int64_t startvalue = 0;
    friend bool operator==(const VariableDef&, const VariableDef&) = default;
};

enum class Behavior { Static, Chase, Random };

struct PieceDef {
    std::string name;
    int64_t layer = 0;
    std::string sprite;
    bool animated = false;
    bool flips = false;
    bool solid = false;
    bool controlled = false;
    Behavior behavior = Behavior::Static;
    friend bool operator==(const PieceDef&, const PieceDef&) = default;
};

enum class Cmp { Eq, Gte, Lte };

bool compare(int64_t lhs, Cmp cmp, int64_t rhs);

// Triggers. Only Overlap binds instances ($1, $2).
struct Overlap {
    std::string first, second;
    friend bool operator==(const Overlap&, const Overlap&) = default;
};
struct Tick {
    int64_t period = 1;
    friend bool operator==(const Tick&, const Tick&) = default;
};
struct VarCondition {
    std::string var;
    Cmp cmp = Cmp::Eq;
    int64_t value = 0;
    friend bool operator==(const VarCondition&, const VarCondition&) = default;
};
struct CountCondition {
    std::string piece;
    Cmp cmp = Cmp::Eq;
    int64_t value = 0;
    friend bool operator==(const CountCondition&, const CountCondition&) = default;
};
using Trigger = std::variant<Overlap, Tick, VarCondition, CountCondition>;

using Guard = VarCondition;

/// `$k` in a command body.
struct Binding {
    int index = 1;
    friend bool operator==(const Binding&, const Binding&) = default;
};

struct Destroy {
    std::variant<Binding, std::string> target;
    friend bool operator==(const Destroy&, const Destroy&) = default;
};
struct Sfx {
    std::string name;
    friend bool operator==(const Sfx&, const Sfx&) = default;
};
struct Score {
    int64_t amount = 0;
    friend bool operator==(const Score&, const Score&) = default;
};
struct SetVar {
    std::string var;
    int64_t value = 0;
    friend bool operator==(const SetVar&, const SetVar&) = default;
};
struct AddVar {
    std::string var;
    int64_t delta = 0;
    friend bool operator==(const AddVar&, const AddVar&) = default;
};
struct Win {
    friend bool operator==(const Win&, const Win&) = default;
};
struct Lose {
    friend bool operator==(const Lose&, const Lose&) = default;
};
struct Spawn {
    std::string piece;
    Binding at;
    friend bool operator==(const Spawn&, const Spawn&) = default;
};
struct Transform {
    Binding target;
    std::string piece;
    friend bool operator==(const Transform&, const Transform&) = default;
};
using Command = std::variant<Destroy, Sfx, Score, SetVar, AddVar, Win, Lose, Spawn, Transform>;

struct Rule {
    Trigger trigger;
    std::vector<Guard> guards;
    std::vector<Command> code;
    friend bool operator==(const Rule&, const Rule&) = default;
};

struct LevelDef {
    int64_t width = 1;
    int64_t height = 1;
    std::vector<int64_t> data;  // row-major; 0 = empty, k = pieces[k-1]

    int64_t at(int64_t x, int64_t y) const { return data[static_cast<size_t>(y * width + x)]; }
    friend bool operator==(const LevelDef&, const LevelDef&) = default;
};

struct GameDefinition {
    std::string gamename;
    int64_t numplayers = 1;
    std::string floor;
    std::string music;
    Color color_accent;
    Color color_body;
    std::vector<VariableDef> variables;
    std::vector<PieceDef> pieces;
    std::vector<Rule> rules;
    std::vector<LevelDef> levels;
    int64_t tick_cap = kDefaultTickCap;

    /// Index into `pieces`, or nullopt.
    std::optional<size_t> piece_index(std::string_view name) const;
    std::optional<size_t> variable_index(std::string_view name) const;

    friend bool operator==(const GameDefinition&, const GameDefinition&) = default;
};

// ---- errors ---------------------------------------------------------------

class GdlError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MalformedJson : public GdlError {
public:
    using GdlError::GdlError;
};

class SchemaError : public GdlError {
public:
    SchemaError(std::string path, const std::string& what)
        : GdlError(path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

class DanglingReference : public GdlError {
public:
    DanglingReference(std::string name, std::string path)
        : GdlError(path + ": unresolved reference '" + name + "'"),
          name_(std::move(name)),
          path_(std::move(path)) {}
    const std::string& name() const { return name_; }
    const std::string& path() const { return path_; }

private:
    std::string name_;
    std::string path_;
};

// ---- validation -----------------------------------------------------------

enum class ViolationKind {
    DanglingReference,
    DanglingCode,
    DuplicateName,
    BadLevelShape,
    BadValue,
    BadBinding,
    EmptyBody,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
    ViolationKind kind;
    std::string path;
    std::string detail;
    friend bool operator==(const Violation&, const Violation&) = default;
};

using ValidationReport = std::vector<Violation>;

/// Every invariant violation, in document order. Empty means valid.
ValidationReport validate_game(const GameDefinition& g);

// ---- text grammar ---------------------------------------------------------

/// Throws SchemaError with `path` on a malformed line.
Trigger parse_trigger(std::string_view text, const std::string& path = "trigger");
Guard parse_guard(std::string_view text, const std::string& path = "guard");
Command parse_command(std::string_view text, const std::string& path = "command");

std::string format_trigger(const Trigger& t);
std::string format_guard(const Guard& g);
std::string format_command(const Command& c);
std::string_view to_string(Cmp cmp);
std::string_view to_string(Behavior b);

/// Number of instances a trigger binds ($1..$n).
int binding_count(const Trigger& t);

bool is_terminating(const Command& c);
bool has_terminating_command(const Rule& r);

/// Every piece / variable name a rule mentions, in first-use order.
std::vector<std::string> referenced_pieces(const Rule& r);
std::vector<std::string> referenced_variables(const Rule& r);

/// Copy of `r` with piece and variable names substituted; names absent from
/// a map are kept. The implicit "score" of SCORE is not renamed.
Rule rename_rule(const Rule& r, const std::map<std::string, std::string>& pieces,
                 const std::map<std::string, std::string>& variables);

// ---- documents ------------------------------------------------------------

/// Parses and validates. Throws MalformedJson, SchemaError, DanglingReference.
GameDefinition parse_game(std::string_view text);

/// Canonical text: sorted keys, 2-space indent, default-valued extension
/// fields elided, numbers as numbers. Precondition: validate_game(g) is empty.
std::string serialize_game(const GameDefinition& g);

/// FNV-1a of the canonical text, as 16 hex digits.
std::string definition_digest(const GameDefinition& g);

GameDefinition load_game_file(const std::string& path);
void save_game_file(const GameDefinition& g, const std::string& path);

}  // namespace forge::gdl
