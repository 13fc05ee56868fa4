#include "forge/gdl.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "forge/gdl_json.hpp"
#include "forge/util.hpp"
#include "overloaded.hpp"

namespace forge::gdl {

using nlohmann::json;
using detail::overloaded;

namespace {

std::vector<std::string_view> tokenize(std::string_view text) {
    std::vector<std::string_view> out;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
        size_t j = i;
        while (j < text.size() && text[j] != ' ' && text[j] != '\t') ++j;
        if (j > i) out.push_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

std::optional<int64_t> parse_int(std::string_view tok) {
    if (tok.empty()) return std::nullopt;
    std::string_view body = tok;
    if (body.front() == '+') body.remove_prefix(1);
    int64_t v = 0;
    auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
    if (ec != std::errc{} || ptr != body.data() + body.size()) return std::nullopt;
    return v;
}

int64_t expect_int(std::string_view tok, const std::string& path) {
    auto v = parse_int(tok);
    if (!v) throw SchemaError(path, "expected integer, got '" + std::string(tok) + "'");
    return *v;
}

Binding expect_binding(std::string_view tok, const std::string& path) {
    if (tok.size() < 2 || tok.front() != '$')
        throw SchemaError(path, "expected binding $k, got '" + std::string(tok) + "'");
    auto v = parse_int(tok.substr(1));
    if (!v || *v < 1) throw SchemaError(path, "bad binding '" + std::string(tok) + "'");
    return Binding{static_cast<int>(*v)};
}

std::string expect_name(std::string_view tok, const std::string& path) {
    if (tok.empty() || tok.front() == '$')
        throw SchemaError(path, "expected a name, got '" + std::string(tok) + "'");
    return std::string(tok);
}

Cmp expect_cmp(std::string_view tok, const std::string& path) {
    if (tok == "EQ") return Cmp::Eq;
    if (tok == "GTE") return Cmp::Gte;
    if (tok == "LTE") return Cmp::Lte;
    throw SchemaError(path, "expected EQ|GTE|LTE, got '" + std::string(tok) + "'");
}

void expect_arity(const std::vector<std::string_view>& toks, size_t n, const std::string& path) {
    if (toks.size() != n)
        throw SchemaError(path, "'" + std::string(toks.front()) + "' takes " + std::to_string(n - 1) +
                                    " argument(s)");
}

std::string binding_text(Binding b) { return "$" + std::to_string(b.index); }

// -- json field helpers --

const json& require(const json& obj, const char* key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(path + "." + key, "missing field");
    return *it;
}

std::string string_field(const json& j, const std::string& path) {
    if (!j.is_string()) throw SchemaError(path, "expected string");
    return j.get<std::string>();
}

bool bool_field(const json& j, const std::string& path) {
    if (!j.is_boolean()) throw SchemaError(path, "expected boolean");
    return j.get<bool>();
}

const json& array_field(const json& j, const std::string& path) {
    if (!j.is_array()) throw SchemaError(path, "expected array");
    return j;
}

void expect_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw SchemaError(path, "expected object");
}

Color color_field(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 3) throw SchemaError(path, "expected [r, g, b]");
    double c[3];
    for (size_t i = 0; i < 3; ++i) {
        if (!j[i].is_number()) throw SchemaError(path + "[" + std::to_string(i) + "]", "expected number");
        c[i] = j[i].get<double>();
    }
    return Color{c[0], c[1], c[2]};
}

Behavior behavior_field(const json& j, const std::string& path) {
    const std::string s = string_field(j, path);
    if (s == "static") return Behavior::Static;
    if (s == "chase") return Behavior::Chase;
    if (s == "random") return Behavior::Random;
    throw SchemaError(path, "expected static|chase|random, got '" + s + "'");
}

PieceDef piece_from_json(const json& j, const std::string& path) {
    expect_object(j, path);
    PieceDef p;
    p.name = string_field(require(j, "name", path), path + ".name");
    if (auto it = j.find("layer"); it != j.end()) p.layer = int_field(*it, path + ".layer");
    if (auto it = j.find("sprite"); it != j.end()) p.sprite = string_field(*it, path + ".sprite");
    if (auto it = j.find("animated"); it != j.end()) p.animated = bool_field(*it, path + ".animated");
    if (auto it = j.find("flips"); it != j.end()) p.flips = bool_field(*it, path + ".flips");
    if (auto it = j.find("solid"); it != j.end()) p.solid = bool_field(*it, path + ".solid");
    if (auto it = j.find("controlled"); it != j.end()) p.controlled = bool_field(*it, path + ".controlled");
    if (auto it = j.find("behavior"); it != j.end()) p.behavior = behavior_field(*it, path + ".behavior");
    return p;
}

json piece_to_json(const PieceDef& p) {
    json j{{"name", p.name},
           {"layer", p.layer},
           {"sprite", p.sprite},
           {"animated", p.animated},
           {"flips", p.flips}};
    if (p.solid) j["solid"] = true;
    if (p.controlled) j["controlled"] = true;
    if (p.behavior != Behavior::Static) j["behavior"] = std::string(to_string(p.behavior));
    return j;
}

json color_to_json(const Color& c) { return json::array({c.r, c.g, c.b}); }

// -- validation helpers --

struct Checker {
    const GameDefinition& g;
    ValidationReport out;

    void add(ViolationKind k, std::string path, std::string detail) {
        out.push_back({k, std::move(path), std::move(detail)});
    }
    void piece(const std::string& name, const std::string& path) {
        if (!g.piece_index(name)) add(ViolationKind::DanglingReference, path, name);
    }
    void variable(const std::string& name, const std::string& path) {
        if (!g.variable_index(name)) add(ViolationKind::DanglingReference, path, name);
    }
    void binding(Binding b, int bound, const std::string& path) {
        if (b.index < 1 || b.index > bound)
            add(ViolationKind::BadBinding, path, binding_text(b) + " not bound by trigger");
    }
};

}  // namespace

// ---- small API ------------------------------------------------------------

bool compare(int64_t lhs, Cmp cmp, int64_t rhs) {
    switch (cmp) {
        case Cmp::Eq: return lhs == rhs;
        case Cmp::Gte: return lhs >= rhs;
        case Cmp::Lte: return lhs <= rhs;
    }
    return false;
}

std::string_view to_string(Cmp cmp) {
    switch (cmp) {
        case Cmp::Eq: return "EQ";
        case Cmp::Gte: return "GTE";
        case Cmp::Lte: return "LTE";
    }
    return "?";
}

std::string_view to_string(Behavior b) {
    switch (b) {
        case Behavior::Static: return "static";
        case Behavior::Chase: return "chase";
        case Behavior::Random: return "random";
    }
    return "?";
}

std::string_view to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::DanglingReference: return "DanglingReference";
        case ViolationKind::DanglingCode: return "DanglingCode";
        case ViolationKind::DuplicateName: return "DuplicateName";
        case ViolationKind::BadLevelShape: return "BadLevelShape";
        case ViolationKind::BadValue: return "BadValue";
        case ViolationKind::BadBinding: return "BadBinding";
        case ViolationKind::EmptyBody: return "EmptyBody";
    }
    return "?";
}

std::optional<size_t> GameDefinition::piece_index(std::string_view name) const {
    for (size_t i = 0; i < pieces.size(); ++i)
        if (pieces[i].name == name) return i;
    return std::nullopt;
}

std::optional<size_t> GameDefinition::variable_index(std::string_view name) const {
    for (size_t i = 0; i < variables.size(); ++i)
        if (variables[i].name == name) return i;
    return std::nullopt;
}

int binding_count(const Trigger& t) { return std::holds_alternative<Overlap>(t) ? 2 : 0; }

bool is_terminating(const Command& c) {
    return std::holds_alternative<Win>(c) || std::holds_alternative<Lose>(c);
}

bool has_terminating_command(const Rule& r) {
    return std::any_of(r.code.begin(), r.code.end(), is_terminating);
}

std::vector<std::string> referenced_pieces(const Rule& r) {
    std::vector<std::string> out;
    auto add = [&](const std::string& n) {
        if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
    };
    std::visit(overloaded{[&](const Overlap& o) {
                              add(o.first);
                              add(o.second);
                          },
                          [&](const CountCondition& c) { add(c.piece); },
                          [](const auto&) {}},
               r.trigger);
    for (const auto& c : r.code) {
        std::visit(overloaded{[&](const Destroy& d) {
                                  if (auto* n = std::get_if<std::string>(&d.target)) add(*n);
                              },
                              [&](const Spawn& s) { add(s.piece); },
                              [&](const Transform& t) { add(t.piece); },
                              [](const auto&) {}},
                   c);
    }
    return out;
}

Rule rename_rule(const Rule& r, const std::map<std::string, std::string>& pieces,
                 const std::map<std::string, std::string>& variables) {
    auto pc = [&](std::string& n) {
        if (auto it = pieces.find(n); it != pieces.end()) n = it->second;
    };
    auto var = [&](std::string& n) {
        if (auto it = variables.find(n); it != variables.end()) n = it->second;
    };
    Rule out = r;
    std::visit(overloaded{[&](Overlap& o) {
                              pc(o.first);
                              pc(o.second);
                          },
                          [&](CountCondition& c) { pc(c.piece); },
                          [&](VarCondition& v) { var(v.var); },
                          [](Tick&) {}},
               out.trigger);
    for (auto& g : out.guards) var(g.var);
    for (auto& c : out.code) {
        std::visit(overloaded{[&](Destroy& d) {
                                  if (auto* n = std::get_if<std::string>(&d.target)) pc(*n);
                              },
                              [&](Spawn& s) { pc(s.piece); },
                              [&](Transform& t) { pc(t.piece); },
                              [&](SetVar& s) { var(s.var); },
                              [&](AddVar& a) { var(a.var); },
                              [](auto&) {}},
                   c);
    }
    return out;
}

std::vector<std::string> referenced_variables(const Rule& r) {
    std::vector<std::string> out;
    auto add = [&](const std::string& n) {
        if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
    };
    if (auto* v = std::get_if<VarCondition>(&r.trigger)) add(v->var);
    for (const auto& g : r.guards) add(g.var);
    for (const auto& c : r.code) {
        std::visit(overloaded{[&](const Score&) { add("score"); },
                              [&](const SetVar& s) { add(s.var); },
                              [&](const AddVar& a) { add(a.var); },
                              [](const auto&) {}},
                   c);
    }
    return out;
}

// ---- grammar --------------------------------------------------------------

Trigger parse_trigger(std::string_view text, const std::string& path) {
    const auto toks = tokenize(text);
    if (toks.empty()) throw SchemaError(path, "empty trigger");
    const auto kw = toks.front();
    if (kw == "OVERLAP") {
        expect_arity(toks, 3, path);
        return Overlap{expect_name(toks[1], path), expect_name(toks[2], path)};
    }
    if (kw == "TICK") {
        expect_arity(toks, 2, path);
        return Tick{expect_int(toks[1], path)};
    }
    if (kw == "VAR") {
        expect_arity(toks, 4, path);
        return VarCondition{expect_name(toks[1], path), expect_cmp(toks[2], path), expect_int(toks[3], path)};
    }
    if (kw == "COUNT") {
        expect_arity(toks, 4, path);
        return CountCondition{expect_name(toks[1], path), expect_cmp(toks[2], path), expect_int(toks[3], path)};
    }
    throw SchemaError(path, "unknown trigger '" + std::string(kw) + "'");
}

Guard parse_guard(std::string_view text, const std::string& path) {
    auto t = parse_trigger(text, path);
    if (auto* v = std::get_if<VarCondition>(&t)) return *v;
    throw SchemaError(path, "guards must use the VAR form");
}

Command parse_command(std::string_view text, const std::string& path) {
    const auto toks = tokenize(text);
    if (toks.empty()) throw SchemaError(path, "empty command");
    const auto kw = toks.front();
    if (kw == "DESTROY") {
        expect_arity(toks, 2, path);
        if (toks[1].front() == '$') return Destroy{expect_binding(toks[1], path)};
        return Destroy{expect_name(toks[1], path)};
    }
    if (kw == "SFX") {
        expect_arity(toks, 2, path);
        return Sfx{expect_name(toks[1], path)};
    }
    if (kw == "SCORE") {
        expect_arity(toks, 2, path);
        return Score{expect_int(toks[1], path)};
    }
    if (kw == "SET") {
        expect_arity(toks, 3, path);
        return SetVar{expect_name(toks[1], path), expect_int(toks[2], path)};
    }
    if (kw == "ADD") {
        expect_arity(toks, 3, path);
        return AddVar{expect_name(toks[1], path), expect_int(toks[2], path)};
    }
    if (kw == "WIN") {
        expect_arity(toks, 1, path);
        return Win{};
    }
    if (kw == "LOSE") {
        expect_arity(toks, 1, path);
        return Lose{};
    }
    if (kw == "SPAWN") {
        expect_arity(toks, 3, path);
        return Spawn{expect_name(toks[1], path), expect_binding(toks[2], path)};
    }
    if (kw == "TRANSFORM") {
        expect_arity(toks, 3, path);
        return Transform{expect_binding(toks[1], path), expect_name(toks[2], path)};
    }
    throw SchemaError(path, "unknown command '" + std::string(kw) + "'");
}

std::string format_trigger(const Trigger& t) {
    return std::visit(
        overloaded{
            [](const Overlap& o) { return "OVERLAP " + o.first + " " + o.second; },
            [](const Tick& k) { return "TICK " + std::to_string(k.period); },
            [](const VarCondition& v) {
                return "VAR " + v.var + " " + std::string(to_string(v.cmp)) + " " + std::to_string(v.value);
            },
            [](const CountCondition& c) {
                return "COUNT " + c.piece + " " + std::string(to_string(c.cmp)) + " " + std::to_string(c.value);
            },
        },
        t);
}

std::string format_guard(const Guard& g) { return format_trigger(Trigger{g}); }

std::string format_command(const Command& c) {
    return std::visit(
        overloaded{
            [](const Destroy& d) {
                if (auto* b = std::get_if<Binding>(&d.target)) return "DESTROY " + binding_text(*b);
                return "DESTROY " + std::get<std::string>(d.target);
            },
            [](const Sfx& s) { return "SFX " + s.name; },
            [](const Score& s) { return "SCORE " + std::to_string(s.amount); },
            [](const SetVar& s) { return "SET " + s.var + " " + std::to_string(s.value); },
            [](const AddVar& a) { return "ADD " + a.var + " " + std::to_string(a.delta); },
            [](const Win&) { return std::string("WIN"); },
            [](const Lose&) { return std::string("LOSE"); },
            [](const Spawn& s) { return "SPAWN " + s.piece + " " + binding_text(s.at); },
            [](const Transform& t) { return "TRANSFORM " + binding_text(t.target) + " " + t.piece; },
        },
        c);
}

// ---- validation -----------------------------------------------------------

ValidationReport validate_game(const GameDefinition& g) {
    Checker ck{g, {}};

    if (g.numplayers < 1) ck.add(ViolationKind::BadValue, "numplayers", "must be positive");
    if (g.tick_cap < 1) ck.add(ViolationKind::BadValue, "tick_cap", "must be positive");
    for (auto [name, c] : {std::pair{"color_accent", g.color_accent}, std::pair{"color_body", g.color_body}}) {
        for (double ch : {c.r, c.g, c.b})
            if (!(ch >= 0.0 && ch <= 1.0)) {
                ck.add(ViolationKind::BadValue, name, "channel outside [0,1]");
                break;
            }
    }

    std::set<std::string> seen;
    for (size_t i = 0; i < g.variables.size(); ++i) {
        const auto path = "variables[" + std::to_string(i) + "].name";
        const auto& v = g.variables[i];
        if (v.name.empty()) ck.add(ViolationKind::BadValue, path, "empty name");
        else if (!seen.insert(v.name).second) ck.add(ViolationKind::DuplicateName, path, v.name);
    }
    seen.clear();
    for (size_t i = 0; i < g.pieces.size(); ++i) {
        const auto base = "pieces[" + std::to_string(i) + "]";
        const auto& p = g.pieces[i];
        if (p.name.empty()) ck.add(ViolationKind::BadValue, base + ".name", "empty name");
        else if (!seen.insert(p.name).second) ck.add(ViolationKind::DuplicateName, base + ".name", p.name);
        if (p.layer < 0) ck.add(ViolationKind::BadValue, base + ".layer", "negative layer");
    }

    for (size_t ri = 0; ri < g.rules.size(); ++ri) {
        const auto base = "rules[" + std::to_string(ri) + "]";
        const auto& r = g.rules[ri];
        const auto tpath = base + ".trigger";
        std::visit(overloaded{
                       [&](const Overlap& o) {
                           ck.piece(o.first, tpath);
                           ck.piece(o.second, tpath);
                       },
                       [&](const Tick& t) {
                           if (t.period < 1) ck.add(ViolationKind::BadValue, tpath, "TICK period must be positive");
                       },
                       [&](const VarCondition& v) { ck.variable(v.var, tpath); },
                       [&](const CountCondition& c) { ck.piece(c.piece, tpath); },
                   },
                   r.trigger);
        for (size_t gi = 0; gi < r.guards.size(); ++gi)
            ck.variable(r.guards[gi].var, base + ".guards[" + std::to_string(gi) + "]");
        if (r.code.empty()) ck.add(ViolationKind::EmptyBody, base + ".code", "rule body is empty");
        const int bound = binding_count(r.trigger);
        for (size_t ci = 0; ci < r.code.size(); ++ci) {
            const auto cpath = base + ".code[" + std::to_string(ci) + "]";
            std::visit(overloaded{
                           [&](const Destroy& d) {
                               if (auto* b = std::get_if<Binding>(&d.target)) ck.binding(*b, bound, cpath);
                               else ck.piece(std::get<std::string>(d.target), cpath);
                           },
                           [&](const Score&) { ck.variable("score", cpath); },
                           [&](const SetVar& s) { ck.variable(s.var, cpath); },
                           [&](const AddVar& a) { ck.variable(a.var, cpath); },
                           [&](const Spawn& s) {
                               ck.piece(s.piece, cpath);
                               ck.binding(s.at, bound, cpath);
                           },
                           [&](const Transform& t) {
                               ck.binding(t.target, bound, cpath);
                               ck.piece(t.piece, cpath);
                           },
                           [](const auto&) {},
                       },
                       r.code[ci]);
        }
    }

    const auto npieces = static_cast<int64_t>(g.pieces.size());
    for (size_t li = 0; li < g.levels.size(); ++li) {
        const auto base = "levels[" + std::to_string(li) + "]";
        const auto& l = g.levels[li];
        if (l.width < 1 || l.height < 1) {
            ck.add(ViolationKind::BadLevelShape, base, "width and height must be positive");
            continue;
        }
        if (static_cast<int64_t>(l.data.size()) != l.width * l.height)
            ck.add(ViolationKind::BadLevelShape, base + ".data",
                   "expected " + std::to_string(l.width * l.height) + " codes, got " + std::to_string(l.data.size()));
        for (size_t k = 0; k < l.data.size(); ++k)
            if (l.data[k] < 0 || l.data[k] > npieces)
                ck.add(ViolationKind::DanglingCode, base + ".data[" + std::to_string(k) + "]",
                       std::to_string(l.data[k]));
    }
    return std::move(ck.out);
}

// ---- json -----------------------------------------------------------------

int64_t int_field(const json& j, const std::string& path) {
    if (j.is_number_integer()) return j.get<int64_t>();
    if (j.is_number_float()) {
        const double d = j.get<double>();
        if (d == static_cast<double>(static_cast<int64_t>(d))) return static_cast<int64_t>(d);
        throw SchemaError(path, "expected integer");
    }
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (auto v = parse_int(s)) return *v;
        throw SchemaError(path, "expected integer, got \"" + s + "\"");
    }
    throw SchemaError(path, "expected integer");
}

json rule_to_json(const Rule& r) {
    json j{{"trigger", format_trigger(r.trigger)}};
    json code = json::array();
    for (const auto& c : r.code) code.push_back(format_command(c));
    j["code"] = std::move(code);
    if (!r.guards.empty()) {
        json guards = json::array();
        for (const auto& g : r.guards) guards.push_back(format_guard(g));
        j["guards"] = std::move(guards);
    }
    return j;
}

Rule rule_from_json(const json& j, const std::string& path) {
    expect_object(j, path);
    Rule r;
    r.trigger = parse_trigger(string_field(require(j, "trigger", path), path + ".trigger"), path + ".trigger");
    const auto& code = array_field(require(j, "code", path), path + ".code");
    for (size_t i = 0; i < code.size(); ++i) {
        const auto cpath = path + ".code[" + std::to_string(i) + "]";
        r.code.push_back(parse_command(string_field(code[i], cpath), cpath));
    }
    if (auto it = j.find("guards"); it != j.end()) {
        const auto& guards = array_field(*it, path + ".guards");
        for (size_t i = 0; i < guards.size(); ++i) {
            const auto gpath = path + ".guards[" + std::to_string(i) + "]";
            r.guards.push_back(parse_guard(string_field(guards[i], gpath), gpath));
        }
    }
    return r;
}

json level_to_json(const LevelDef& l) {
    return json{{"type", "raw"}, {"width", l.width}, {"height", l.height}, {"data", l.data}};
}

LevelDef level_from_json(const json& j, const std::string& path) {
    expect_object(j, path);
    const auto type = string_field(require(j, "type", path), path + ".type");
    if (type != "raw") throw SchemaError(path + ".type", "only \"raw\" levels are supported");
    LevelDef l;
    l.width = int_field(require(j, "width", path), path + ".width");
    l.height = int_field(require(j, "height", path), path + ".height");
    const auto& data = array_field(require(j, "data", path), path + ".data");
    l.data.reserve(data.size());
    for (size_t k = 0; k < data.size(); ++k)
        l.data.push_back(int_field(data[k], path + ".data[" + std::to_string(k) + "]"));
    return l;
}

json variable_to_json(const VariableDef& v) {
    return json{{"name", v.name}, {"onscreen", v.onscreen}, {"startvalue", v.startvalue}};
}

VariableDef variable_from_json(const json& j, const std::string& path) {
    expect_object(j, path);
    VariableDef v;
    v.name = string_field(require(j, "name", path), path + ".name");
    if (auto it = j.find("onscreen"); it != j.end()) v.onscreen = string_field(*it, path + ".onscreen");
    if (auto it = j.find("startvalue"); it != j.end()) v.startvalue = int_field(*it, path + ".startvalue");
    return v;
}

json game_to_json(const GameDefinition& g) {
    json j{{"gamename", g.gamename},
           {"numplayers", g.numplayers},
           {"floor", g.floor},
           {"music", g.music},
           {"color_accent", color_to_json(g.color_accent)},
           {"color_body", color_to_json(g.color_body)}};
    json vars = json::array(), pieces = json::array(), rules = json::array(), levels = json::array();
    for (const auto& v : g.variables) vars.push_back(variable_to_json(v));
    for (const auto& p : g.pieces) pieces.push_back(piece_to_json(p));
    for (const auto& r : g.rules) rules.push_back(rule_to_json(r));
    for (const auto& l : g.levels) levels.push_back(level_to_json(l));
    j["variables"] = std::move(vars);
    j["pieces"] = std::move(pieces);
    j["rules"] = std::move(rules);
    j["levels"] = std::move(levels);
    if (g.tick_cap != kDefaultTickCap) j["tick_cap"] = g.tick_cap;
    return j;
}

GameDefinition game_from_json(const json& j) {
    const std::string root = "$";
    expect_object(j, root);
    GameDefinition g;
    g.gamename = string_field(require(j, "gamename", root), "gamename");
    if (auto it = j.find("numplayers"); it != j.end()) g.numplayers = int_field(*it, "numplayers");
    if (auto it = j.find("floor"); it != j.end()) g.floor = string_field(*it, "floor");
    if (auto it = j.find("music"); it != j.end()) g.music = string_field(*it, "music");
    if (auto it = j.find("color_accent"); it != j.end()) g.color_accent = color_field(*it, "color_accent");
    if (auto it = j.find("color_body"); it != j.end()) g.color_body = color_field(*it, "color_body");
    if (auto it = j.find("tick_cap"); it != j.end()) g.tick_cap = int_field(*it, "tick_cap");
    if (auto it = j.find("variables"); it != j.end()) {
        const auto& a = array_field(*it, "variables");
        for (size_t i = 0; i < a.size(); ++i)
            g.variables.push_back(variable_from_json(a[i], "variables[" + std::to_string(i) + "]"));
    }
    const auto& pieces = array_field(require(j, "pieces", root), "pieces");
    for (size_t i = 0; i < pieces.size(); ++i)
        g.pieces.push_back(piece_from_json(pieces[i], "pieces[" + std::to_string(i) + "]"));
    if (auto it = j.find("rules"); it != j.end()) {
        const auto& a = array_field(*it, "rules");
        for (size_t i = 0; i < a.size(); ++i)
            g.rules.push_back(rule_from_json(a[i], "rules[" + std::to_string(i) + "]"));
    }
    if (auto it = j.find("levels"); it != j.end()) {
        const auto& a = array_field(*it, "levels");
        for (size_t i = 0; i < a.size(); ++i)
            g.levels.push_back(level_from_json(a[i], "levels[" + std::to_string(i) + "]"));
    }
    return g;
}

GameDefinition parse_game(std::string_view text) {
    json j;
    try {
        j = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw MalformedJson(e.what());
    }
    GameDefinition g = game_from_json(j);
    const auto report = validate_game(g);
    if (!report.empty()) {
        const auto& v = report.front();
        if (v.kind == ViolationKind::DanglingReference || v.kind == ViolationKind::DanglingCode)
            throw DanglingReference(v.detail, v.path);
        throw SchemaError(v.path, v.detail);
    }
    return g;
}

std::string serialize_game(const GameDefinition& g) { return game_to_json(g).dump(2) + "\n"; }

std::string definition_digest(const GameDefinition& g) { return to_hex(fnv1a64(serialize_game(g))); }

GameDefinition load_game_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw GdlError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_game(ss.str());
}

void save_game_file(const GameDefinition& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw GdlError("cannot write " + path);
    out << serialize_game(g);
    if (!out) throw GdlError("write failed: " + path);
}

}  // namespace forge::gdl
