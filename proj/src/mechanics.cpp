#include "forge/mechanics.hpp"

#include <algorithm>

#include "forge/gdl_json.hpp"

namespace forge::mechanics {

using agents::ReachabilityReport;
using engine::Simulator;
using engine::Status;

namespace {

constexpr gdl::Cmp kCmps[] = {gdl::Cmp::Eq, gdl::Cmp::Gte, gdl::Cmp::Lte};
constexpr int64_t kPlayer = 1, kWall = 2, kExit = 3, kHazard = 4;
constexpr size_t kPlayerPiece = 0;

template <class T>
const T& pick(const std::vector<T>& xs, Rng& r) {
    return xs[r.below(xs.size())];
}

gdl::VarCondition sample_condition(const Vocabulary& v, Rng& r) {
    return {pick(v.variables, r), kCmps[r.below(3)], pick(v.constants, r)};
}

gdl::Trigger sample_trigger(const Vocabulary& v, Rng& r) {
    switch (r.below(4)) {
        case 0: {
            const auto& a = pick(v.roles, r);
            return gdl::Overlap{a, pick(v.roles, r)};
        }
        case 1: return gdl::Tick{pick(v.tick_periods, r)};
        case 2: return sample_condition(v, r);
        default: {
            const auto& role = pick(v.roles, r);
            return gdl::CountCondition{role, kCmps[r.below(3)], pick(v.constants, r)};
        }
    }
}

std::vector<gdl::Command> command_space(const Vocabulary& v, int bound) {
    std::vector<gdl::Command> out;
    for (int k = 1; k <= bound; ++k) out.push_back(gdl::Destroy{gdl::Binding{k}});
    for (const auto& role : v.roles) out.push_back(gdl::Destroy{role});
    for (const auto& s : v.sounds) out.push_back(gdl::Sfx{s});
    for (int64_t a : v.amounts) out.push_back(gdl::Score{a});
    for (const auto& var : v.variables)
        for (int64_t c : v.constants) out.push_back(gdl::SetVar{var, c});
    for (const auto& var : v.variables)
        for (int64_t a : v.amounts) out.push_back(gdl::AddVar{var, a});
    out.push_back(gdl::Win{});
    out.push_back(gdl::Lose{});
    for (const auto& role : v.roles)
        for (int k = 1; k <= bound; ++k) out.push_back(gdl::Spawn{role, gdl::Binding{k}});
    for (int k = 1; k <= bound; ++k)
        for (const auto& role : v.roles) out.push_back(gdl::Transform{gdl::Binding{k}, role});
    return out;
}

gdl::Rule sample_rule(const Vocabulary& v, const SynthesisBounds& b, Rng& r) {
    gdl::Rule rule;
    rule.trigger = b.fixed_trigger ? *b.fixed_trigger : sample_trigger(v, r);
    if (r.chance(b.guard_chance)) rule.guards.push_back(sample_condition(v, r));
    const auto space = command_space(v, gdl::binding_count(rule.trigger));
    const int64_t len = r.range(1, std::clamp(b.max_commands, 1, 4));
    for (int64_t i = 0; i < len; ++i) rule.code.push_back(pick(space, r));
    return rule;
}

bool idempotent(const gdl::Command& c) {
    return std::holds_alternative<gdl::Destroy>(c) || std::holds_alternative<gdl::Sfx>(c) ||
           std::holds_alternative<gdl::SetVar>(c) || std::holds_alternative<gdl::Win>(c) ||
           std::holds_alternative<gdl::Lose>(c) || std::holds_alternative<gdl::Transform>(c);
}

std::string rule_text(const gdl::Rule& r) {
    std::string s = gdl::format_trigger(r.trigger);
    for (const auto& g : r.guards) s += " IF " + gdl::format_guard(g);
    s += " ->";
    for (size_t i = 0; i < r.code.size(); ++i) s += (i ? "; " : " ") + gdl::format_command(r.code[i]);
    return s;
}

gdl::GameDefinition environment_game(const std::string& name, gdl::LevelDef level, bool hazards_kill) {
    gdl::GameDefinition g;
    g.gamename = name;
    auto piece = [](std::string n, int64_t layer, bool controlled, bool solid) {
        gdl::PieceDef p;
        p.name = std::move(n);
        p.sprite = p.name;
        p.layer = layer;
        p.controlled = controlled;
        p.solid = solid;
        return p;
    };
    g.pieces = {piece("player", 2, true, false), piece("wall", 1, false, true), piece("exit", 0, false, false),
                piece("hazard", 0, false, false)};
    gdl::Rule exit_rule;
    exit_rule.trigger = gdl::Overlap{"player", "exit"};
    exit_rule.code = {gdl::Destroy{gdl::Binding{1}}, gdl::Win{}};
    g.rules.push_back(exit_rule);
    if (hazards_kill) {
        gdl::Rule hazard_rule;
        hazard_rule.trigger = gdl::Overlap{"player", "hazard"};
        hazard_rule.code = {gdl::Destroy{gdl::Binding{1}}};
        g.rules.push_back(hazard_rule);
    }
    g.levels = {std::move(level)};
    g.tick_cap = 100;
    return g;
}

// 7x5 room with a full-height column of `code` at x = 3, player west, exit east.
gdl::LevelDef split_room(int64_t code) {
    gdl::LevelDef l{7, 5, std::vector<int64_t>(35, 0)};
    for (int64_t y = 0; y < 5; ++y) l.data[static_cast<size_t>(y * 7 + 3)] = code;
    l.data[2 * 7 + 1] = kPlayer;
    l.data[2 * 7 + 5] = kExit;
    return l;
}

// The exit first, then the rest of the east side.
std::vector<Cell> east_of_column() {
    std::vector<Cell> out{{5, 2}};
    for (int32_t y = 0; y < 5; ++y)
        for (int32_t x = 4; x < 7; ++x)
            if (Cell{x, y} != out[0]) out.push_back({x, y});
    return out;
}

ReachabilityReport solve_baseline(const TestEnvironment& env, size_t state_cap) {
    const Simulator sim(env.definition);
    return agents::exhaustive_solve(sim, env.definition.levels.at(0), state_cap);
}

Certification certification_of(const ReachabilityReport& rep) {
    return {rep.reachable_cells.at(kPlayerPiece), rep.winnable, rep.states};
}

nlohmann::json cell_json(Cell c) { return nlohmann::json::array({c.x, c.y}); }
Cell cell_from(const nlohmann::json& j) { return {j.at(0).get<int32_t>(), j.at(1).get<int32_t>()}; }

}  // namespace

// ---- candidates -------------------------------------------------------------

std::vector<gdl::Rule> normalize_rules(std::vector<gdl::Rule> rules) {
    for (auto& r : rules) {
        std::vector<gdl::Command> code;
        for (auto& c : r.code)
            if (!idempotent(c) || std::find(code.begin(), code.end(), c) == code.end()) code.push_back(std::move(c));
        r.code = std::move(code);
        std::sort(r.guards.begin(), r.guards.end(), [](const gdl::Guard& a, const gdl::Guard& b) {
            return gdl::format_guard(a) < gdl::format_guard(b);
        });
        r.guards.erase(std::unique(r.guards.begin(), r.guards.end()), r.guards.end());
    }
    return rules;
}

std::string normalized_text(const std::vector<gdl::Rule>& rules) {
    std::string s;
    for (const auto& r : normalize_rules(rules)) s += rule_text(r) + "\n";
    return s;
}

MechanicCandidate make_candidate(std::vector<gdl::Rule> rules, uint64_t synth_seed) {
    MechanicCandidate m;
    m.rules = normalize_rules(std::move(rules));
    m.id = to_hex(fnv1a64(normalized_text(m.rules)));
    m.synth_seed = synth_seed;
    return m;
}

std::vector<MechanicCandidate> synthesize_candidates(const Vocabulary& vocab, const SynthesisBounds& bounds, int count,
                                                     uint64_t seed) {
    if (count < 1) throw InvalidCount("candidate count must be at least 1, got " + std::to_string(count));
    Rng master(derive_seed(seed, 7));
    std::set<std::string> seen;
    std::vector<MechanicCandidate> out;
    const int64_t attempts = int64_t{count} * std::max(1, bounds.attempts_per_candidate);
    for (int64_t i = 0; i < attempts && static_cast<int>(out.size()) < count; ++i) {
        const uint64_t s = master.next();
        Rng r(s);
        std::vector<gdl::Rule> rules;
        const int64_t n = r.range(1, std::clamp(bounds.max_rules, 1, 2));
        for (int64_t k = 0; k < n; ++k) rules.push_back(sample_rule(vocab, bounds, r));
        auto m = make_candidate(std::move(rules), s);
        if (seen.insert(m.id).second) out.push_back(std::move(m));
    }
    return out;
}

nlohmann::json candidate_to_json(const MechanicCandidate& m) {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& r : m.rules) rules.push_back(gdl::rule_to_json(r));
    return {{"id", m.id}, {"rules", rules}, {"synth_seed", to_hex(m.synth_seed)}};
}

MechanicCandidate candidate_from_json(const nlohmann::json& j) {
    try {
        MechanicCandidate m;
        m.id = j.at("id").get<std::string>();
        for (size_t i = 0; i < j.at("rules").size(); ++i)
            m.rules.push_back(gdl::rule_from_json(j.at("rules")[i], "rules[" + std::to_string(i) + "]"));
        m.synth_seed = from_hex(j.at("synth_seed").get<std::string>());
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw MechanicsError(std::string("malformed candidate: ") + e.what());
    } catch (const gdl::GdlError& e) {
        throw MechanicsError(std::string("malformed candidate: ") + e.what());
    }
}

// ---- environments -----------------------------------------------------------

std::vector<TestEnvironment> builtin_environments() {
    const std::map<std::string, std::string> binding = {
        {"avatar", "player"}, {"obstacle", "wall"}, {"target", "exit"}, {"hazard", "hazard"}};
    std::vector<TestEnvironment> envs;

    envs.push_back({"WallGap", environment_game("WallGap", split_room(kWall), false), east_of_column(), binding, {}});

    gdl::LevelDef chamber{7, 5, std::vector<int64_t>(35, 0)};
    for (int64_t y = 1; y <= 3; ++y)
        for (int64_t x = 2; x <= 4; ++x) chamber.data[static_cast<size_t>(y * 7 + x)] = kWall;
    chamber.data[2 * 7 + 3] = kExit;
    chamber.data[2 * 7 + 0] = kPlayer;
    envs.push_back({"LockedChamber", environment_game("LockedChamber", chamber, false), {{3, 2}}, binding, {}});

    envs.push_back({"HazardCorridor", environment_game("HazardCorridor", split_room(kHazard), true), east_of_column(),
                    binding, {}});

    for (auto& e : envs) e.certification = certify(e);
    return envs;
}

Certification certify(const TestEnvironment& env, size_t state_cap) {
    return certification_of(solve_baseline(env, state_cap));
}

bool is_certified(const TestEnvironment& env, size_t state_cap) {
    const auto rep = solve_baseline(env, state_cap);
    if (rep.truncated || certification_of(rep) != env.certification) return false;
    return std::none_of(env.target_cells.begin(), env.target_cells.end(),
                        [&](Cell c) { return rep.cell_reachable(c); });
}

bool ends_within_one_tick(const Simulator& sim, const gdl::LevelDef& level) {
    const auto start = sim.init_state(level, 0);
    if (engine::is_terminal(start.status)) return true;
    const int movers = sim.random_mover_count(start);
    if (movers > 6) return false;
    const uint64_t outcomes = uint64_t{1} << (2 * movers);
    std::vector<uint8_t> forced(static_cast<size_t>(movers));
    for (Action a : engine::kAllActions)
        for (uint64_t o = 0; o < outcomes; ++o) {
            for (int m = 0; m < movers; ++m) forced[static_cast<size_t>(m)] = static_cast<uint8_t>((o >> (2 * m)) & 3);
            auto s = start;
            sim.advance(s, a, nullptr, forced);
            if (s.status != Status::Won && s.status != Status::Lost) return false;
        }
    return true;
}

gdl::GameDefinition augment(const TestEnvironment& env, const MechanicCandidate& m) {
    auto g = env.definition;
    for (const auto& r : m.rules) {
        g.rules.push_back(gdl::rename_rule(r, env.binding, {}));
        for (const auto& var : gdl::referenced_variables(r))
            if (!g.variable_index(var)) g.variables.push_back({var, var == "score" ? "Score" : "", 0});
    }
    return g;
}

// ---- evaluation -------------------------------------------------------------

InterestReport evaluate_candidate(const MechanicCandidate& m, const std::vector<TestEnvironment>& envs,
                                  size_t state_cap) {
    InterestReport out;
    out.candidate_id = m.id;
    bool any_gain = false, all_degenerate = !envs.empty();
    for (const auto& env : envs) {
        const auto base = solve_baseline(env, state_cap);
        if (base.truncated || certification_of(base) != env.certification ||
            std::any_of(env.target_cells.begin(), env.target_cells.end(),
                        [&](Cell c) { return base.cell_reachable(c); }))
            throw UncertifiedEnvironment(env.name + ": baseline does not match its certification");

        const auto g = augment(env, m);
        const Simulator sim(g);
        const auto rep = agents::exhaustive_solve(sim, g.levels[0], state_cap);

        EnvironmentResult res;
        res.environment = env.name;
        res.truncated = rep.truncated;
        res.degenerate = rep.truncated || ends_within_one_tick(sim, g.levels[0]);
        if (!rep.truncated) {
            const auto& base_cells = base.reachable_cells[kPlayerPiece];
            for (const auto& c : rep.reachable_cells[kPlayerPiece])
                if (!base_cells.count(c)) res.newly_reachable_cells.insert(c);
            res.newly_winnable = rep.winnable && !base.winnable;
        }
        all_degenerate = all_degenerate && res.degenerate;

        const bool gained = !res.newly_reachable_cells.empty() || res.newly_winnable;
        if (gained && !any_gain) {
            Witness w{env.name, std::nullopt, std::nullopt};
            for (const auto& t : env.target_cells)
                if (res.newly_reachable_cells.count(t)) {
                    w.cell = t;
                    break;
                }
            if (!w.cell && !res.newly_reachable_cells.empty()) w.cell = *res.newly_reachable_cells.begin();
            if (res.newly_winnable) w.win = rep.shortest_win;
            out.witness = std::move(w);
        }
        any_gain = any_gain || gained;
        out.environments.push_back(std::move(res));
    }
    out.interesting = any_gain && !all_degenerate;
    if (!out.interesting) out.witness.reset();
    return out;
}

nlohmann::json report_to_json(const InterestReport& r) {
    nlohmann::json envs = nlohmann::json::array();
    for (const auto& e : r.environments) {
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& c : e.newly_reachable_cells) cells.push_back(cell_json(c));
        envs.push_back({{"environment", e.environment},
                        {"newly_reachable_cells", cells},
                        {"newly_winnable", e.newly_winnable},
                        {"degenerate", e.degenerate},
                        {"truncated", e.truncated}});
    }
    nlohmann::json j = {{"candidate", r.candidate_id}, {"environments", envs}, {"interesting", r.interesting}};
    if (r.witness) {
        nlohmann::json w = {{"environment", r.witness->environment}};
        if (r.witness->cell) w["cell"] = cell_json(*r.witness->cell);
        if (r.witness->win) {
            nlohmann::json acts = nlohmann::json::array();
            for (Action a : *r.witness->win) acts.push_back(std::string(engine::to_string(a)));
            w["win"] = acts;
        }
        j["witness"] = w;
    }
    return j;
}

InterestReport report_from_json(const nlohmann::json& j) {
    try {
        InterestReport r;
        r.candidate_id = j.at("candidate").get<std::string>();
        r.interesting = j.at("interesting").get<bool>();
        for (const auto& e : j.at("environments")) {
            EnvironmentResult res;
            res.environment = e.at("environment").get<std::string>();
            for (const auto& c : e.at("newly_reachable_cells")) res.newly_reachable_cells.insert(cell_from(c));
            res.newly_winnable = e.at("newly_winnable").get<bool>();
            res.degenerate = e.at("degenerate").get<bool>();
            res.truncated = e.at("truncated").get<bool>();
            r.environments.push_back(std::move(res));
        }
        if (j.contains("witness")) {
            const auto& w = j.at("witness");
            Witness out{w.at("environment").get<std::string>(), std::nullopt, std::nullopt};
            if (w.contains("cell")) out.cell = cell_from(w.at("cell"));
            if (w.contains("win")) {
                out.win.emplace();
                for (const auto& a : w.at("win")) out.win->push_back(engine::action_from_string(a.get<std::string>()));
            }
            r.witness = std::move(out);
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw MechanicsError(std::string("malformed interest report: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw MechanicsError(std::string("malformed interest report: ") + e.what());
    }
}

// ---- banking ----------------------------------------------------------------

rulesetdesign::Catalogue bank_mechanic(const MechanicCandidate& m, const InterestReport& report,
                                       const rulesetdesign::Catalogue& c) {
    if (!report.interesting || report.candidate_id != m.id) throw NotInteresting("candidate " + m.id + " is not interesting");
    for (const auto& p : c.patterns)
        if (p.provenance.kind == rulesetdesign::Provenance::Kind::Banked && p.provenance.mechanic_id == m.id) return c;

    rulesetdesign::RulePattern p;
    const std::string base = "Mined_" + m.id.substr(0, 8);
    p.name = base;
    for (int k = 2; c.find(p.name); ++k) p.name = base + "_" + std::to_string(k);
    for (const auto& r : m.rules) {
        for (const auto& piece : gdl::referenced_pieces(r))
            if (std::find(p.roles.begin(), p.roles.end(), piece) == p.roles.end()) p.roles.push_back(piece);
        for (const auto& var : gdl::referenced_variables(r))
            if (std::none_of(p.required_vars.begin(), p.required_vars.end(),
                             [&](const gdl::VariableDef& v) { return v.name == var; }))
                p.required_vars.push_back({var, var == "score" ? "Score" : "", 0});
    }
    p.rules = m.rules;
    p.provenance = {rulesetdesign::Provenance::Kind::Banked, m.id};
    rulesetdesign::validate_pattern(p);

    auto out = c;
    out.patterns.push_back(std::move(p));
    ++out.version;
    return out;
}

MiningResult mine(const rulesetdesign::Catalogue& c, int count, uint64_t seed, const SynthesisBounds& bounds,
                  size_t state_cap) {
    MiningResult out{c, {}, {}};
    const auto envs = builtin_environments();
    for (auto& m : synthesize_candidates(Vocabulary{}, bounds, count, seed)) {
        auto rep = evaluate_candidate(m, envs, state_cap);
        if (rep.interesting) {
            const size_t before = out.catalogue.patterns.size();
            out.catalogue = bank_mechanic(m, rep, out.catalogue);
            if (out.catalogue.patterns.size() > before) out.banked.push_back(out.catalogue.patterns.back().name);
        }
        out.evaluated.emplace_back(std::move(m), std::move(rep));
    }
    return out;
}

}  // namespace forge::mechanics
