#include "forge/rulesetdesign.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "forge/gdl_json.hpp"

namespace forge::rulesetdesign {

namespace {

gdl::Rule make_rule(const std::string& trigger, std::initializer_list<const char*> code,
                    std::initializer_list<const char*> guards = {}) {
    gdl::Rule r;
    r.trigger = gdl::parse_trigger(trigger);
    for (const char* g : guards) r.guards.push_back(gdl::parse_guard(g));
    for (const char* c : code) r.code.push_back(gdl::parse_command(c));
    return r;
}

RulePattern seeded(std::string name, std::vector<std::string> roles, std::vector<gdl::Rule> rules,
                   std::vector<gdl::VariableDef> vars = {}) {
    return RulePattern{std::move(name), std::move(roles), std::move(rules), std::move(vars), {}};
}

bool mentions_overlap(const RulePattern& p, const std::string& role) {
    for (const auto& r : p.rules)
        if (const auto* o = std::get_if<gdl::Overlap>(&r.trigger); o && (o->first == role || o->second == role))
            return true;
    return false;
}

bool pattern_terminates(const RulePattern& p) {
    return std::any_of(p.rules.begin(), p.rules.end(), [](const gdl::Rule& r) { return gdl::has_terminating_command(r); });
}

}  // namespace

const RulePattern* Catalogue::find(const std::string& name) const {
    for (const auto& p : patterns)
        if (p.name == name) return &p;
    return nullptr;
}

void validate_pattern(const RulePattern& p) {
    if (p.name.empty()) throw InvalidPattern("pattern without a name");
    if (p.rules.empty()) throw InvalidPattern(p.name + ": no rules");
    for (const auto& r : p.rules) {
        if (r.code.empty()) throw InvalidPattern(p.name + ": rule with an empty body");
        for (const auto& piece : gdl::referenced_pieces(r))
            if (std::find(p.roles.begin(), p.roles.end(), piece) == p.roles.end())
                throw InvalidPattern(p.name + ": placeholder '" + piece + "' is not a role");
        for (const auto& var : gdl::referenced_variables(r))
            if (std::none_of(p.required_vars.begin(), p.required_vars.end(),
                             [&](const gdl::VariableDef& v) { return v.name == var; }))
                throw InvalidPattern(p.name + ": variable '" + var + "' is not required");
    }
}

// ---- persistence ------------------------------------------------------------

nlohmann::json pattern_to_json(const RulePattern& p) {
    nlohmann::json rules = nlohmann::json::array(), vars = nlohmann::json::array();
    for (const auto& r : p.rules) rules.push_back(gdl::rule_to_json(r));
    for (const auto& v : p.required_vars) vars.push_back(gdl::variable_to_json(v));
    nlohmann::json prov = {{"kind", p.provenance.kind == Provenance::Kind::Seeded ? "seeded" : "banked"}};
    if (p.provenance.kind == Provenance::Kind::Banked) prov["mechanic"] = p.provenance.mechanic_id;
    return {{"name", p.name}, {"roles", p.roles}, {"rules", rules}, {"required_vars", vars}, {"provenance", prov}};
}

RulePattern pattern_from_json(const nlohmann::json& j) {
    RulePattern p;
    try {
        p.name = j.at("name").get<std::string>();
        p.roles = j.at("roles").get<std::vector<std::string>>();
        for (size_t i = 0; i < j.at("rules").size(); ++i)
            p.rules.push_back(gdl::rule_from_json(j.at("rules")[i], p.name + ".rules[" + std::to_string(i) + "]"));
        if (j.contains("required_vars"))
            for (size_t i = 0; i < j.at("required_vars").size(); ++i)
                p.required_vars.push_back(gdl::variable_from_json(j.at("required_vars")[i],
                                                                  p.name + ".required_vars[" + std::to_string(i) + "]"));
        const auto& prov = j.at("provenance");
        const auto kind = prov.at("kind").get<std::string>();
        if (kind == "seeded") {
            p.provenance.kind = Provenance::Kind::Seeded;
        } else if (kind == "banked") {
            p.provenance.kind = Provenance::Kind::Banked;
            p.provenance.mechanic_id = prov.at("mechanic").get<std::string>();
        } else {
            throw InvalidPattern(p.name + ": unknown provenance '" + kind + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidPattern(std::string("malformed pattern: ") + e.what());
    } catch (const gdl::GdlError& e) {
        throw InvalidPattern(std::string("malformed pattern: ") + e.what());
    }
    validate_pattern(p);
    return p;
}

nlohmann::json catalogue_to_json(const Catalogue& c) {
    nlohmann::json pats = nlohmann::json::array();
    for (const auto& p : c.patterns) pats.push_back(pattern_to_json(p));
    return {{"version", c.version}, {"patterns", pats}};
}

Catalogue catalogue_from_json(const nlohmann::json& j) {
    Catalogue c;
    try {
        c.version = j.at("version").get<int64_t>();
        for (const auto& pj : j.at("patterns")) c.patterns.push_back(pattern_from_json(pj));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidPattern(std::string("malformed catalogue: ") + e.what());
    }
    std::set<std::string> names;
    for (const auto& p : c.patterns)
        if (!names.insert(p.name).second) throw InvalidPattern("duplicate pattern name '" + p.name + "'");
    return c;
}

Catalogue load_catalogue(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RulesetError("cannot open catalogue " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return catalogue_from_json(nlohmann::json::parse(ss.str()));
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidPattern(path + ": " + e.what());
    }
}

void save_catalogue(const Catalogue& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RulesetError("cannot write catalogue " + path);
    out << catalogue_to_json(c).dump(2) << '\n';
}

// ---- seeded patterns --------------------------------------------------------

Catalogue seed_catalogue() {
    const gdl::VariableDef score{"score", "Score", 0};
    Catalogue c;
    c.version = 1;
    c.patterns = {
        seeded("ExitToWin", {"avatar", "target"}, {make_rule("OVERLAP avatar target", {"DESTROY $1", "WIN"})}),
        seeded("KillOnTouch", {"avatar", "hazard"},
               {make_rule("OVERLAP avatar hazard", {"DESTROY $2", "SFX punch", "SCORE 1"})}, {score}),
        seeded("HazardKillsPlayer", {"avatar", "hazard"},
               {make_rule("OVERLAP avatar hazard", {"DESTROY $1"}), make_rule("COUNT avatar EQ 0", {"LOSE"})}),
        seeded("LockAndKey", {"avatar", "token", "door"},
               {make_rule("OVERLAP avatar token", {"DESTROY $2", "SET haskey 1"}),
                make_rule("OVERLAP avatar door", {"DESTROY $2"}, {"VAR haskey GTE 1"})},
               {{"haskey", "", 0}}),
        seeded("CollectAll", {"avatar", "token"},
               {make_rule("OVERLAP avatar token", {"DESTROY $2", "SCORE 1"}), make_rule("COUNT token EQ 0", {"WIN"})},
               {score}),
        seeded("TimedLoss", {}, {make_rule("TICK 100", {"LOSE"})}),
    };
    return c;
}

// ---- instantiation ----------------------------------------------------------

Instantiation instantiate_pattern(const RulePattern& p, const std::map<std::string, std::string>& binding,
                                  const gdl::GameDefinition& g) {
    for (const auto& role : p.roles) {
        const auto it = binding.find(role);
        if (it == binding.end()) throw UnboundRole(p.name + ": role '" + role + "' is unbound");
        if (!g.piece_index(it->second)) throw UnknownPiece(p.name + ": no piece named '" + it->second + "'");
    }

    Instantiation out;
    std::map<std::string, std::string> var_names;
    auto taken = [&](const std::string& n) {
        return g.variable_index(n).has_value() ||
               std::any_of(out.variables.begin(), out.variables.end(), [&](const gdl::VariableDef& v) { return v.name == n; });
    };
    for (const auto& v : p.required_vars) {
        if (v.name == "score") {
            if (!taken("score")) out.variables.push_back(v);
            continue;
        }
        std::string name = v.name;
        for (int k = 2; taken(name); ++k) name = v.name + "_" + std::to_string(k);
        var_names[v.name] = name;
        out.variables.push_back({name, v.onscreen, v.startvalue});
    }
    std::map<std::string, std::string> piece_names(binding.begin(), binding.end());
    for (const auto& r : p.rules) out.rules.push_back(gdl::rename_rule(r, piece_names, var_names));

    gdl::GameDefinition check = g;
    check.variables.insert(check.variables.end(), out.variables.begin(), out.variables.end());
    check.rules.insert(check.rules.end(), out.rules.begin(), out.rules.end());
    const auto violations = gdl::validate_game(check);
    if (!violations.empty())
        throw RulesetError(p.name + ": instantiation invalid at " + violations[0].path + ": " + violations[0].detail);
    return out;
}

std::map<std::string, std::string> sample_binding(const RulePattern& p, const gdl::GameDefinition& g, Rng& rng) {
    std::vector<size_t> controlled, others;
    for (size_t i = 0; i < g.pieces.size(); ++i) (g.pieces[i].controlled ? controlled : others).push_back(i);
    if (controlled.empty()) throw InsufficientPieces("no controlled piece to bind 'avatar'");
    if (others.empty()) others = controlled;

    std::map<std::string, std::string> binding;
    std::set<size_t> used;
    for (const auto& role : p.roles) {
        if (role == "avatar") {
            const size_t pick = controlled[rng.below(controlled.size())];
            binding[role] = g.pieces[pick].name;
            used.insert(pick);
            continue;
        }
        std::vector<size_t> pool = others;
        auto narrow = [&](auto pred) {
            std::vector<size_t> kept;
            std::copy_if(pool.begin(), pool.end(), std::back_inserter(kept), pred);
            if (!kept.empty()) pool = std::move(kept);
        };
        if (role == "obstacle") narrow([&](size_t i) { return g.pieces[i].solid; });
        else if (mentions_overlap(p, role)) narrow([&](size_t i) { return !g.pieces[i].solid; });
        narrow([&](size_t i) { return used.count(i) == 0; });
        const size_t pick = pool[rng.below(pool.size())];
        binding[role] = g.pieces[pick].name;
        used.insert(pick);
    }
    return binding;
}

gdl::GameDefinition assemble_ruleset(const Catalogue& c, const gdl::GameDefinition& skeleton, int n_patterns,
                                     uint64_t seed) {
    if (skeleton.pieces.size() < 2) throw InsufficientPieces("skeleton needs at least two pieces");
    if (std::none_of(skeleton.pieces.begin(), skeleton.pieces.end(), [](const gdl::PieceDef& p) { return p.controlled; }))
        throw InsufficientPieces("skeleton needs a controlled piece");
    if (n_patterns < 1) throw std::invalid_argument("n_patterns must be positive");
    if (static_cast<size_t>(n_patterns) > c.patterns.size())
        throw CatalogueTooSmall("catalogue has " + std::to_string(c.patterns.size()) + " patterns, " +
                                std::to_string(n_patterns) + " requested");

    Rng rng(derive_seed(seed, 5));
    std::vector<size_t> order(c.patterns.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    const auto n = static_cast<size_t>(n_patterns);
    auto terminates = [&](size_t k) { return pattern_terminates(c.patterns[order[k]]); };
    bool any = false;
    for (size_t k = 0; k < n; ++k) any = any || terminates(k);
    if (!any) {
        size_t k = n;
        while (k < order.size() && !terminates(k)) ++k;
        if (k == order.size()) throw CatalogueTooSmall("catalogue has no pattern with WIN or LOSE");
        std::swap(order[n - 1], order[k]);
    }

    gdl::GameDefinition g = skeleton;
    g.rules.clear();
    for (size_t k = 0; k < n; ++k) {
        const auto& pattern = c.patterns[order[k]];
        const auto inst = instantiate_pattern(pattern, sample_binding(pattern, g, rng), g);
        g.variables.insert(g.variables.end(), inst.variables.begin(), inst.variables.end());
        g.rules.insert(g.rules.end(), inst.rules.begin(), inst.rules.end());
    }
    return g;
}

// ---- potential --------------------------------------------------------------

std::string_view to_string(Verdict v) { return v == Verdict::Promising ? "promising" : "dead"; }

std::vector<TemplateLevel> potential_templates(const gdl::GameDefinition& g, int32_t room, uint64_t seed) {
    const int32_t n = room;
    std::vector<std::pair<int32_t, int32_t>> border;
    for (int32_t x = 0; x < n; ++x) border.push_back({x, 0});
    for (int32_t y = 1; y < n; ++y) border.push_back({n - 1, y});
    for (int32_t x = n - 2; x >= 0; --x) border.push_back({x, n - 1});
    for (int32_t y = n - 2; y >= 1; --y) border.push_back({0, y});

    gdl::LevelDef t1{n, n, std::vector<int64_t>(static_cast<size_t>(n * n), 0)};
    std::vector<size_t> rim;
    std::optional<size_t> centre;
    for (size_t i = 0; i < g.pieces.size(); ++i) {
        if (!centre && g.pieces[i].controlled) centre = i;
        else rim.push_back(i);
    }
    if (centre) t1.data[static_cast<size_t>((n / 2) * n + n / 2)] = static_cast<int64_t>(*centre + 1);
    for (size_t k = 0; k < rim.size(); ++k) {
        const auto [x, y] = border[(k * border.size() / std::max<size_t>(rim.size(), 1)) % border.size()];
        t1.data[static_cast<size_t>(y * n + x)] = static_cast<int64_t>(rim[k] + 1);
    }

    gdl::LevelDef t2{n, n, std::vector<int64_t>(static_cast<size_t>(n * n), 0)};
    std::vector<size_t> cells(static_cast<size_t>(n * n));
    for (size_t i = 0; i < cells.size(); ++i) cells[i] = i;
    Rng rng(derive_seed(seed, 6));
    for (size_t i = cells.size(); i > 1; --i) std::swap(cells[i - 1], cells[rng.below(i)]);
    size_t next = 0;
    for (size_t i = 0; i < g.pieces.size(); ++i)
        for (int copy = 0; copy < 2 && next < cells.size(); ++copy) t2.data[cells[next++]] = static_cast<int64_t>(i + 1);

    return {{"T1-empty-room", t1}, {"T2-duplicates", t2}};
}

nlohmann::json report_to_json(const PotentialReport& r) {
    nlohmann::json templates = nlohmann::json::array();
    for (const auto& t : r.templates)
        templates.push_back({{"name", t.name},
                             {"rules_fired_fraction", t.coverage.rules_fired_fraction},
                             {"terminating_fraction", t.coverage.terminating_fraction},
                             {"won_any", t.coverage.won_any},
                             {"rules_fired", t.coverage.rules_fired}});
    nlohmann::json witnesses = nlohmann::json::array();
    for (const auto& w : r.witnesses) {
        if (!w) witnesses.push_back(nullptr);
        else
            witnesses.push_back(
                {{"template", w->template_name}, {"agent", w->agent}, {"episode", w->episode}, {"tick", w->tick}});
    }
    return {{"templates", templates},
            {"all_rules_firable", r.all_rules_firable},
            {"terminates", r.terminates},
            {"winnable", r.winnable},
            {"verdict", std::string(to_string(r.verdict))},
            {"witnesses", witnesses}};
}

PotentialReport test_potential(const gdl::GameDefinition& g, const PotentialBudget& budget, uint64_t seed) {
    PotentialReport rep;
    rep.witnesses.resize(g.rules.size());
    std::set<int32_t> fired;

    for (const auto& tmpl : potential_templates(g, budget.room, seed)) {
        gdl::GameDefinition room = g;
        room.levels = {tmpl.level};
        room.tick_cap = budget.tick_cap;
        const engine::Simulator sim(room);

        std::vector<agents::Playtrace> traces;
        auto witness = [&](const agents::Playtrace& t, const char* agent, int episode) {
            for (const auto& e : t.events)
                if (e.kind == engine::EventKind::RuleFired && !rep.witnesses[static_cast<size_t>(e.rule)])
                    rep.witnesses[static_cast<size_t>(e.rule)] = Witness{tmpl.name, agent, episode, e.tick};
        };
        const uint64_t base = derive_seed(seed, fnv1a64(tmpl.name));
        for (int i = 0; i < budget.random_episodes; ++i) {
            traces.push_back(agents::random_episode(sim, 0, derive_seed(base, static_cast<uint64_t>(i)), true));
            witness(traces.back(), "random", i);
        }
        for (int i = 0; i < budget.mcts_episodes; ++i) {
            traces.push_back(agents::mcts_episode(sim, 0, budget.mcts, derive_seed(base, 1000 + static_cast<uint64_t>(i)), true));
            witness(traces.back(), "mcts", i);
        }
        if (traces.empty()) continue;
        const auto cov = agents::coverage_metrics(traces, room);
        fired.insert(cov.rules_fired.begin(), cov.rules_fired.end());
        rep.terminates = rep.terminates || cov.terminating_fraction > 0;
        rep.winnable = rep.winnable || cov.won_any;
        rep.templates.push_back({tmpl.name, tmpl.level, cov});
    }
    rep.all_rules_firable = fired.size() == g.rules.size();
    rep.verdict = rep.all_rules_firable && rep.terminates ? Verdict::Promising : Verdict::Dead;
    return rep;
}

}  // namespace forge::rulesetdesign
