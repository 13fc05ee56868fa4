#pragma once

// Shared test helpers: bundled game paths, tiny hand-built games, and a
// generator of random valid definitions.

#include <fstream>
#include <sstream>
#include <string>

#include "forge/gdl.hpp"
#include "forge/util.hpp"

namespace forge::testing {

inline std::string games_dir() { return FORGE_GAMES_DIR; }

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline gdl::GameDefinition bvf() { return gdl::load_game_file(games_dir() + "/before_venturing_forth.json"); }
inline gdl::GameDefinition adventure() { return gdl::load_game_file(games_dir() + "/adventure.json"); }

inline gdl::PieceDef piece(std::string name, bool controlled = false, bool solid = false,
                           gdl::Behavior behavior = gdl::Behavior::Static) {
    gdl::PieceDef p;
    p.name = std::move(name);
    p.sprite = p.name;
    p.controlled = controlled;
    p.solid = solid;
    p.behavior = behavior;
    return p;
}

inline gdl::Rule rule(const std::string& trigger, std::initializer_list<const char*> code,
                      std::initializer_list<const char*> guards = {}) {
    gdl::Rule r;
    r.trigger = gdl::parse_trigger(trigger);
    for (const char* c : code) r.code.push_back(gdl::parse_command(c));
    for (const char* g : guards) r.guards.push_back(gdl::parse_guard(g));
    return r;
}

inline gdl::LevelDef level(int64_t w, int64_t h, std::vector<int64_t> data) {
    return gdl::LevelDef{w, h, std::move(data)};
}

/// player(1), wall(2, solid), exit(3); "score" declared.
inline gdl::GameDefinition corridor_game(std::vector<gdl::Rule> rules, std::vector<gdl::LevelDef> levels) {
    gdl::GameDefinition g;
    g.gamename = "corridor";
    g.variables = {{"score", "Score", 0}};
    g.pieces = {piece("player", true), piece("wall", false, true), piece("exit")};
    g.rules = std::move(rules);
    g.levels = std::move(levels);
    return g;
}

/// Random valid definition: every reference resolves, every level code is in range.
inline gdl::GameDefinition random_definition(Rng& r) {
    using namespace gdl;
    GameDefinition g;
    g.gamename = "game" + std::to_string(r.below(1000));
    g.numplayers = r.range(1, 4);
    g.floor = r.chance(0.5) ? "grass" : "stone";
    g.music = r.chance(0.5) ? "calm" : "";
    g.color_accent = {r.uniform(), r.uniform(), r.uniform()};
    g.color_body = {r.uniform(), r.uniform(), r.uniform()};
    if (r.chance(0.3)) g.tick_cap = r.range(1, 5000);

    const int nvars = static_cast<int>(r.below(4));
    for (int i = 0; i < nvars; ++i)
        g.variables.push_back({i == 0 && r.chance(0.5) ? "score" : "v" + std::to_string(i),
                               r.chance(0.5) ? "Label" + std::to_string(i) : "", r.range(-5, 5)});
    const int npieces = static_cast<int>(r.range(1, 5));
    for (int i = 0; i < npieces; ++i) {
        PieceDef p;
        p.name = "p" + std::to_string(i);
        p.layer = r.range(0, 9);
        p.sprite = "s" + std::to_string(r.below(20));
        p.animated = r.chance(0.5);
        p.flips = r.chance(0.5);
        p.solid = r.chance(0.2);
        p.controlled = r.chance(0.3);
        p.behavior = static_cast<Behavior>(r.below(3));
        g.pieces.push_back(p);
    }

    auto any_piece = [&] { return g.pieces[r.below(g.pieces.size())].name; };
    auto cmp = [&] { return static_cast<Cmp>(r.below(3)); };
    const int nrules = static_cast<int>(r.below(5));
    for (int i = 0; i < nrules; ++i) {
        Rule rule;
        const auto kind = r.below(g.variables.empty() ? 3 : 4);
        if (kind == 0 || kind == 1) rule.trigger = Overlap{any_piece(), any_piece()};
        else if (kind == 2) rule.trigger = CountCondition{any_piece(), cmp(), r.range(0, 4)};
        else rule.trigger = VarCondition{g.variables[r.below(g.variables.size())].name, cmp(), r.range(-3, 3)};
        if (r.chance(0.15)) rule.trigger = Tick{r.range(1, 10)};
        if (!g.variables.empty() && r.chance(0.3))
            rule.guards.push_back({g.variables[r.below(g.variables.size())].name, cmp(), r.range(-2, 2)});
        const bool bound = binding_count(rule.trigger) > 0;
        const int ncode = static_cast<int>(r.range(1, 4));
        const bool has_score = g.variable_index("score").has_value();
        for (int c = 0; c < ncode; ++c) {
            switch (r.below(9)) {
                case 0:
                    if (bound) rule.code.push_back(Destroy{Binding{static_cast<int>(r.range(1, 2))}});
                    else rule.code.push_back(Destroy{any_piece()});
                    break;
                case 1: rule.code.push_back(Sfx{"snd" + std::to_string(r.below(5))}); break;
                case 2:
                    if (has_score) rule.code.push_back(Score{r.range(-3, 3)});
                    else rule.code.push_back(Win{});
                    break;
                case 3:
                    if (!g.variables.empty())
                        rule.code.push_back(SetVar{g.variables[r.below(g.variables.size())].name, r.range(-9, 9)});
                    else rule.code.push_back(Lose{});
                    break;
                case 4:
                    if (!g.variables.empty())
                        rule.code.push_back(AddVar{g.variables[r.below(g.variables.size())].name, r.range(-9, 9)});
                    else rule.code.push_back(Sfx{"x"});
                    break;
                case 5: rule.code.push_back(Win{}); break;
                case 6: rule.code.push_back(Lose{}); break;
                case 7:
                    if (bound) rule.code.push_back(Spawn{any_piece(), Binding{static_cast<int>(r.range(1, 2))}});
                    else rule.code.push_back(Sfx{"y"});
                    break;
                default:
                    if (bound) rule.code.push_back(Transform{Binding{static_cast<int>(r.range(1, 2))}, any_piece()});
                    else rule.code.push_back(Destroy{any_piece()});
                    break;
            }
        }
        g.rules.push_back(std::move(rule));
    }

    const int nlevels = static_cast<int>(r.range(1, 3));
    for (int i = 0; i < nlevels; ++i) {
        LevelDef l;
        l.width = r.range(1, 7);
        l.height = r.range(1, 7);
        for (int64_t k = 0; k < l.width * l.height; ++k)
            l.data.push_back(r.chance(0.6) ? 0 : r.range(1, static_cast<int64_t>(g.pieces.size())));
        g.levels.push_back(std::move(l));
    }
    return g;
}

}  // namespace forge::testing
