#include "forge/studio.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "forge/gdl_json.hpp"

namespace forge::studio {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int64_t kSchema = 1;

std::string project_id(int64_t n) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "p%04lld", static_cast<long long>(n));
    return buf;
}

bool shelvable(const Project& p, const StudioConfig& cfg, std::string* reason = nullptr) {
    if (p.exported || p.shelved_since) return false;
    if (p.potential_tested && !p.stage.ruleset_promising) {
        if (reason) *reason = "dead ruleset";
        return true;
    }
    if (p.stage.ruleset_promising && !p.stage.levels_playable && p.level_attempts >= cfg.max_level_attempts) {
        if (reason) *reason = "no playable level";
        return true;
    }
    return false;
}

bool active(const Project& p) { return !p.exported && !p.shelved_since; }
bool needs_ruleset(const Project& p) { return active(p) && !p.stage.has_ruleset; }
bool needs_potential(const Project& p) { return active(p) && p.stage.has_ruleset && !p.potential_tested; }
bool needs_levels(const Project& p, const StudioConfig& cfg) {
    return active(p) && p.stage.ruleset_promising && !p.stage.levels_playable &&
           p.level_attempts < cfg.max_level_attempts;
}

double resume_value(int64_t age, const Utilities& u) {
    if (age >= u.resume_cooldown) return u.resume_spike;
    return u.resume_initial * std::exp(-static_cast<double>(age) / u.resume_decay);
}

Project& require_project(KnowledgeBase& kb, const std::optional<std::string>& id) {
    if (!id) throw CorruptWorkspace("event without a project");
    Project* p = kb.find(*id);
    if (!p) throw CorruptWorkspace("event names unknown project " + *id);
    return *p;
}

const Project& require_project(const KnowledgeBase& kb, const std::optional<std::string>& id) {
    if (!id) throw UnknownProject("activity needs a target project");
    const Project* p = kb.find(*id);
    if (!p) throw UnknownProject("unknown project " + *id);
    return *p;
}

json optional_int(const std::optional<int64_t>& v) { return v ? json(*v) : json(nullptr); }

gdl::PieceDef piece(std::string name, int64_t layer, bool controlled = false, bool solid = false) {
    gdl::PieceDef p;
    p.name = std::move(name);
    p.sprite = p.name;
    p.layer = layer;
    p.controlled = controlled;
    p.solid = solid;
    return p;
}

gdl::GameDefinition skeleton(std::string name, std::string floor, std::vector<gdl::PieceDef> pieces) {
    gdl::GameDefinition g;
    g.gamename = std::move(name);
    g.floor = std::move(floor);
    g.music = "calm";
    g.color_accent = {0.9, 0.7, 0.2};
    g.color_body = {0.2, 0.3, 0.4};
    g.pieces = std::move(pieces);
    return g;
}

// ---- files ----------------------------------------------------------------

void write_all(int fd, const std::string& data, const std::string& path) {
    size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw PersistenceFailure("write " + path + ": " + std::strerror(errno));
        }
        off += static_cast<size_t>(n);
    }
}

void sync_dir(const fs::path& dir) {
    const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd < 0) return;
    ::fsync(fd);
    ::close(fd);
}

void atomic_write(const fs::path& path, const std::string& data) {
    const fs::path tmp = path.string() + ".tmp";
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) throw PersistenceFailure("open " + tmp.string() + ": " + std::strerror(errno));
    try {
        write_all(fd, data, tmp.string());
    } catch (...) {
        ::close(fd);
        throw;
    }
    if (::fsync(fd) != 0 || ::close(fd) != 0) throw PersistenceFailure("sync " + tmp.string());
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw PersistenceFailure("rename " + tmp.string() + ": " + std::strerror(errno));
    sync_dir(path.parent_path());
}

void append_line(const fs::path& path, const std::string& line) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw PersistenceFailure("open " + path.string() + ": " + std::strerror(errno));
    try {
        write_all(fd, line + "\n", path.string());
    } catch (...) {
        ::close(fd);
        throw;
    }
    if (::fsync(fd) != 0 || ::close(fd) != 0) throw PersistenceFailure("sync " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Drops a final line that was cut short by a crash.
void repair_feed(const fs::path& feed) {
    if (!fs::exists(feed)) return;
    const std::string text = read_text(feed);
    if (text.empty() || text.back() == '\n') return;
    const auto keep = text.rfind('\n');
    fs::resize_file(feed, keep == std::string::npos ? 0 : keep + 1);
}

// ---- json -----------------------------------------------------------------

json touch_to_json(const Touch& t) {
    return {{"step", t.step}, {"activity", std::string(to_string(t.activity))}, {"seed", to_hex(t.seed)}};
}

json project_to_json(const Project& p) {
    json hist = json::array();
    for (const auto& t : p.history) hist.push_back(touch_to_json(t));
    return {{"id", p.id},
            {"skeleton", p.skeleton},
            {"definition", gdl::game_to_json(p.definition)},
            {"stage",
             {{"has_ruleset", p.stage.has_ruleset},
              {"ruleset_promising", p.stage.ruleset_promising},
              {"has_levels", p.stage.has_levels},
              {"levels_playable", p.stage.levels_playable}}},
            {"potential_tested", p.potential_tested},
            {"level_attempts", p.level_attempts},
            {"exported", p.exported},
            {"shelved_since", optional_int(p.shelved_since)},
            {"quality", p.quality ? json(*p.quality) : json(nullptr)},
            {"evidence", p.evidence},
            {"history", hist}};
}

gdl::GameDefinition checked_game(const json& j, const std::string& where) {
    auto g = gdl::game_from_json(j);
    const auto report = gdl::validate_game(g);
    if (!report.empty())
        throw CorruptWorkspace(where + ": " + report[0].path + ": " + std::string(gdl::to_string(report[0].kind)) +
                               " " + report[0].detail);
    return g;
}

Project project_from_json(const json& j) {
    Project p;
    p.id = j.at("id").get<std::string>();
    p.skeleton = j.value("skeleton", "");
    p.definition = checked_game(j.at("definition"), "project " + p.id);
    const json stage = j.value("stage", json::object());
    p.stage.has_ruleset = stage.value("has_ruleset", false);
    p.stage.ruleset_promising = stage.value("ruleset_promising", false);
    p.stage.has_levels = stage.value("has_levels", false);
    p.stage.levels_playable = stage.value("levels_playable", false);
    p.potential_tested = j.value("potential_tested", false);
    p.level_attempts = j.value("level_attempts", 0);
    p.exported = j.value("exported", false);
    if (j.contains("shelved_since") && !j.at("shelved_since").is_null())
        p.shelved_since = j.at("shelved_since").get<int64_t>();
    if (j.contains("quality") && !j.at("quality").is_null()) p.quality = j.at("quality").get<double>();
    p.evidence = j.value("evidence", json::object());
    for (const auto& t : j.value("history", json::array()))
        p.history.push_back({t.at("step").get<int64_t>(), activity_from_string(t.at("activity").get<std::string>()),
                             from_hex(t.at("seed").get<std::string>())});
    return p;
}

uint64_t payload_seed(const ActivityEvent& e) {
    return e.payload.contains("seed") ? from_hex(e.payload.at("seed").get<std::string>()) : 0;
}

}  // namespace

// ---- basics -----------------------------------------------------------------

std::string_view to_string(Activity a) {
    switch (a) {
        case Activity::RulesetDesign: return "RulesetDesign";
        case Activity::PotentialTest: return "PotentialTest";
        case Activity::LevelDesign: return "LevelDesign";
        case Activity::MechanicInvention: return "MechanicInvention";
        case Activity::Shelve: return "Shelve";
        case Activity::Resume: return "Resume";
        case Activity::Export: return "Export";
    }
    return "?";
}

Activity activity_from_string(std::string_view s) {
    for (Activity a : kAllActivities)
        if (to_string(a) == s) return a;
    throw std::invalid_argument("unknown activity '" + std::string(s) + "'");
}

const Project* KnowledgeBase::find(const std::string& id) const {
    for (const auto& p : projects)
        if (p.id == id) return &p;
    return nullptr;
}

Project* KnowledgeBase::find(const std::string& id) {
    for (auto& p : projects)
        if (p.id == id) return &p;
    return nullptr;
}

KnowledgeBase initial_knowledge(uint64_t seed) {
    KnowledgeBase kb;
    kb.origin_seed = seed;
    kb.rng_state = derive_seed(seed, 9);
    kb.catalogue = rulesetdesign::seed_catalogue();
    return kb;
}

json knowledge_to_json(const KnowledgeBase& kb) {
    json mech = json::array(), sketches = json::array(), projects = json::array();
    for (const auto& m : kb.mechanics_log)
        mech.push_back({{"candidate", mechanics::candidate_to_json(m.candidate)},
                        {"report", mechanics::report_to_json(m.report)},
                        {"step", m.step}});
    for (const auto& s : kb.sketches)
        sketches.push_back({{"level", gdl::level_to_json(s.level)}, {"project", s.project}, {"step", s.step}});
    for (const auto& p : kb.projects) projects.push_back(project_to_json(p));
    return {{"schema", kSchema},
            {"origin_seed", to_hex(kb.origin_seed)},
            {"rng_state", to_hex(kb.rng_state)},
            {"catalogue_version", kb.catalogue.version},
            {"mechanics_log", mech},
            {"sketches", sketches},
            {"projects", projects},
            {"event_log_position", kb.event_log_position},
            {"last_bank_step", kb.last_bank_step},
            {"next_project", kb.next_project}};
}

KnowledgeBase knowledge_from_json(const json& j, rulesetdesign::Catalogue catalogue) {
    try {
        KnowledgeBase kb;
        kb.catalogue = std::move(catalogue);
        kb.origin_seed = from_hex(j.at("origin_seed").get<std::string>());
        kb.rng_state = from_hex(j.at("rng_state").get<std::string>());
        for (const auto& m : j.value("mechanics_log", json::array()))
            kb.mechanics_log.push_back({mechanics::candidate_from_json(m.at("candidate")),
                                        mechanics::report_from_json(m.at("report")), m.at("step").get<int64_t>()});
        for (const auto& s : j.value("sketches", json::array())) {
            Sketch sk{gdl::level_from_json(s.at("level"), "sketch"), s.at("project").get<std::string>(),
                      s.at("step").get<int64_t>()};
            if (static_cast<int64_t>(sk.level.data.size()) != sk.level.width * sk.level.height)
                throw CorruptWorkspace("sketch level shape mismatch");
            kb.sketches.push_back(std::move(sk));
        }
        for (const auto& p : j.value("projects", json::array())) {
            auto proj = project_from_json(p);
            if (kb.find(proj.id)) throw CorruptWorkspace("duplicate project id " + proj.id);
            kb.projects.push_back(std::move(proj));
        }
        kb.event_log_position = j.value("event_log_position", int64_t{0});
        kb.last_bank_step = j.value("last_bank_step", int64_t{0});
        kb.next_project = j.value("next_project", static_cast<int64_t>(kb.projects.size()) + 1);
        return kb;
    } catch (const json::exception& e) {
        throw CorruptWorkspace(std::string("knowledge: ") + e.what());
    } catch (const gdl::GdlError& e) {
        throw CorruptWorkspace(std::string("knowledge: ") + e.what());
    } catch (const mechanics::MechanicsError& e) {
        throw CorruptWorkspace(std::string("knowledge: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw CorruptWorkspace(std::string("knowledge: ") + e.what());
    }
}

std::string kb_digest(const KnowledgeBase& kb) {
    const std::string text = knowledge_to_json(kb).dump() + rulesetdesign::catalogue_to_json(kb.catalogue).dump();
    return to_hex(fnv1a64(text));
}

json event_to_json(const ActivityEvent& e) {
    return {{"step", e.step},
            {"activity", std::string(to_string(e.activity))},
            {"project", e.project ? json(*e.project) : json(nullptr)},
            {"summary", e.summary},
            {"payload", e.payload}};
}

ActivityEvent event_from_json(const json& j) {
    try {
        ActivityEvent e;
        e.step = j.at("step").get<int64_t>();
        e.activity = activity_from_string(j.at("activity").get<std::string>());
        if (j.contains("project") && !j.at("project").is_null()) e.project = j.at("project").get<std::string>();
        e.summary = j.value("summary", "");
        e.payload = j.value("payload", json::object());
        return e;
    } catch (const json::exception& ex) {
        throw CorruptWorkspace(std::string("event: ") + ex.what());
    } catch (const std::invalid_argument& ex) {
        throw CorruptWorkspace(std::string("event: ") + ex.what());
    }
}

StudioConfig config_from_json(const json& j) {
    StudioConfig c;
    try {
        c.temperature = j.value("temperature", c.temperature);
        if (j.contains("utilities")) {
            const auto& u = j.at("utilities");
            auto& o = c.utilities;
            o.ruleset_design = u.value("ruleset_design", o.ruleset_design);
            o.potential_test = u.value("potential_test", o.potential_test);
            o.level_design = u.value("level_design", o.level_design);
            o.mechanic_invention = u.value("mechanic_invention", o.mechanic_invention);
            o.shelve = u.value("shelve", o.shelve);
            o.resume = u.value("resume", o.resume);
            o.staleness_horizon = u.value("staleness_horizon", o.staleness_horizon);
            o.resume_initial = u.value("resume_initial", o.resume_initial);
            o.resume_decay = u.value("resume_decay", o.resume_decay);
            o.resume_cooldown = u.value("resume_cooldown", o.resume_cooldown);
            o.resume_spike = u.value("resume_spike", o.resume_spike);
        }
        c.patterns_min = j.value("patterns_min", c.patterns_min);
        c.patterns_max = j.value("patterns_max", c.patterns_max);
        if (j.contains("potential")) {
            const auto& b = j.at("potential");
            c.potential.random_episodes = b.value("random_episodes", c.potential.random_episodes);
            c.potential.mcts_episodes = b.value("mcts_episodes", c.potential.mcts_episodes);
            c.potential.tick_cap = b.value("tick_cap", c.potential.tick_cap);
            c.potential.room = b.value("room", c.potential.room);
            if (b.contains("mcts")) c.potential.mcts = agents::params_from_json(b.at("mcts"));
        }
        if (j.contains("evolution")) {
            json merged = j.at("evolution");
            if (!merged.contains("population")) merged["population"] = c.evolution.population;
            if (!merged.contains("generations")) merged["generations"] = c.evolution.generations;
            if (!merged.contains("random_episodes")) merged["random_episodes"] = c.evolution.random_episodes;
            if (!merged.contains("mcts")) merged["mcts"] = agents::params_to_json(c.evolution.mcts);
            c.evolution = leveldesign::evolution_params_from_json(merged);
        }
        c.mining_batch = j.value("mining_batch", c.mining_batch);
        c.mining_state_cap = j.value("mining_state_cap", c.mining_state_cap);
        c.solve_state_cap = j.value("solve_state_cap", c.solve_state_cap);
        c.max_level_attempts = j.value("max_level_attempts", c.max_level_attempts);
        c.level_tick_cap = j.value("level_tick_cap", c.level_tick_cap);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("studio config: ") + e.what());
    }
    if (c.patterns_min < 1 || c.patterns_max < c.patterns_min) throw std::invalid_argument("studio config: pattern range");
    if (c.mining_batch < 1) throw std::invalid_argument("studio config: mining_batch must be positive");
    if (c.level_tick_cap < 1) throw std::invalid_argument("studio config: level_tick_cap must be positive");
    return c;
}

std::vector<std::pair<std::string, gdl::GameDefinition>> builtin_skeletons() {
    return {
        {"adventure", skeleton("adventure", "grass",
                               {piece("playerpiece", 2, true), piece("enemy", 1), piece("exit", 0),
                                piece("wall", 1, false, true)})},
        {"dungeon", skeleton("dungeon", "stone",
                             {piece("hero", 2, true), piece("key", 0), piece("door", 1), piece("ghost", 1),
                              piece("rock", 1, false, true)})},
        {"garden", skeleton("garden", "moss",
                            {piece("gardener", 2, true), piece("weed", 0), piece("flower", 0),
                             piece("hedge", 1, false, true)})},
    };
}

// ---- selection --------------------------------------------------------------

bool publishable(const Project& p) {
    if (!p.stage.ruleset_promising || !p.stage.levels_playable || !p.stage.has_levels) return false;
    if (!p.evidence.contains("level")) return false;
    const auto& lv = p.evidence.at("level");
    return lv.value("mcts_won", false) && lv.value("winnable", false);
}

std::vector<double> activity_utilities(const KnowledgeBase& kb, const StudioConfig& cfg) {
    const auto& u = cfg.utilities;
    const int64_t step = kb.event_log_position + 1;
    double pending = 0, live = 0, untested = 0, designable = 0, shelve = 0, resume = 0;
    for (const auto& p : kb.projects) {
        if (p.exported) continue;
        if (p.shelved_since) {
            resume = std::max(resume, resume_value(step - *p.shelved_since, u));
            continue;
        }
        live += 1;
        pending += needs_ruleset(p);
        untested += needs_potential(p);
        designable += needs_levels(p, cfg);
        shelve += shelvable(p, cfg);
    }
    std::vector<double> out(std::size(kAllActivities), 0.0);
    const double staleness = static_cast<double>(step - kb.last_bank_step);
    out[static_cast<size_t>(Activity::RulesetDesign)] = u.ruleset_design * (pending + 1.0 / (1.0 + live));
    out[static_cast<size_t>(Activity::PotentialTest)] = u.potential_test * untested;
    out[static_cast<size_t>(Activity::LevelDesign)] = u.level_design * designable;
    out[static_cast<size_t>(Activity::MechanicInvention)] =
        u.mechanic_invention * std::min(1.0, staleness / static_cast<double>(std::max<int64_t>(1, u.staleness_horizon)));
    out[static_cast<size_t>(Activity::Shelve)] = u.shelve * shelve;
    out[static_cast<size_t>(Activity::Resume)] = u.resume * resume;
    return out;
}

Selection select_activity(const KnowledgeBase& kb, const StudioConfig& cfg, Rng& rng) {
    const double draw = rng.uniform();
    for (const auto& p : kb.projects)
        if (!p.exported && !p.shelved_since && publishable(p)) return {Activity::Export, p.id};

    const auto util = activity_utilities(kb, cfg);
    std::vector<size_t> avail;
    for (size_t i = 0; i < util.size(); ++i)
        if (util[i] > 0) avail.push_back(i);
    size_t chosen = avail.empty() ? static_cast<size_t>(Activity::RulesetDesign) : avail.front();
    if (!avail.empty()) {
        if (cfg.temperature <= 0) {
            for (size_t i : avail)
                if (util[i] > util[chosen]) chosen = i;
        } else {
            double hi = 0;
            for (size_t i : avail) hi = std::max(hi, util[i]);
            std::vector<double> w;
            double total = 0;
            for (size_t i : avail) total += w.emplace_back(std::exp((util[i] - hi) / cfg.temperature));
            double acc = 0;
            for (size_t k = 0; k < avail.size(); ++k) {
                acc += w[k];
                chosen = avail[k];
                if (draw * total < acc) break;
            }
        }
    }

    Selection sel{static_cast<Activity>(chosen), std::nullopt};
    const int64_t step = kb.event_log_position + 1;
    switch (sel.activity) {
        case Activity::RulesetDesign:
            for (const auto& p : kb.projects)
                if (needs_ruleset(p)) return {sel.activity, p.id};
            break;
        case Activity::PotentialTest:
            for (const auto& p : kb.projects)
                if (needs_potential(p)) return {sel.activity, p.id};
            break;
        case Activity::LevelDesign:
            for (const auto& p : kb.projects)
                if (needs_levels(p, cfg)) return {sel.activity, p.id};
            break;
        case Activity::Shelve:
            for (const auto& p : kb.projects)
                if (shelvable(p, cfg)) return {sel.activity, p.id};
            break;
        case Activity::Resume: {
            double best = -1;
            for (const auto& p : kb.projects)
                if (!p.exported && p.shelved_since) {
                    const double v = resume_value(step - *p.shelved_since, cfg.utilities);
                    if (v > best) {
                        best = v;
                        sel.target = p.id;
                    }
                }
            break;
        }
        default: break;
    }
    return sel;
}

// ---- activities -------------------------------------------------------------

ActivityEvent execute_activity(const KnowledgeBase& kb, const StudioConfig& cfg, const Selection& sel, Rng& rng,
                               const std::string& workspace) {
    ActivityEvent e;
    e.step = kb.event_log_position + 1;
    e.activity = sel.activity;
    e.project = sel.target;
    const uint64_t seed = rng.next();
    json& pl = e.payload;
    pl["seed"] = to_hex(seed);

    switch (sel.activity) {
        case Activity::RulesetDesign: {
            gdl::GameDefinition base;
            std::string skel;
            if (sel.target) {
                const auto& p = require_project(kb, sel.target);
                base = p.definition;
                skel = p.skeleton;
                pl["created"] = false;
            } else {
                const auto skeletons = builtin_skeletons();
                Rng pick(derive_seed(seed, 1));
                const auto& [name, def] = skeletons[pick.below(skeletons.size())];
                base = def;
                skel = name;
                e.project = project_id(kb.next_project);
                base.gamename = name + "-" + *e.project;
                pl["created"] = true;
            }
            base.rules.clear();
            base.variables.clear();
            base.levels.clear();
            base.tick_cap = cfg.level_tick_cap;
            Rng count_rng(derive_seed(seed, 2));
            const int64_t hi = std::min<int64_t>(cfg.patterns_max, static_cast<int64_t>(kb.catalogue.patterns.size()));
            const int64_t n = count_rng.range(std::min<int64_t>(cfg.patterns_min, hi), hi);
            const auto g = rulesetdesign::assemble_ruleset(kb.catalogue, base, static_cast<int>(n), seed);
            pl["skeleton"] = skel;
            pl["patterns"] = n;
            pl["catalogue_version"] = kb.catalogue.version;
            pl["definition"] = gdl::game_to_json(g);
            e.summary = "assembled " + std::to_string(n) + " patterns into " + *e.project + " (" + skel + ")";
            break;
        }
        case Activity::PotentialTest: {
            const auto& p = require_project(kb, sel.target);
            const auto rep = rulesetdesign::test_potential(p.definition, cfg.potential, seed);
            json fired = json::array();
            for (const auto& t : rep.templates) fired.push_back(t.coverage.rules_fired);
            pl["report"] = {{"verdict", std::string(rulesetdesign::to_string(rep.verdict))},
                            {"all_rules_firable", rep.all_rules_firable},
                            {"terminates", rep.terminates},
                            {"winnable", rep.winnable},
                            {"rules_fired", fired}};
            e.summary = *sel.target + " potential " + std::string(rulesetdesign::to_string(rep.verdict));
            break;
        }
        case Activity::LevelDesign: {
            const auto& p = require_project(kb, sel.target);
            try {
                const auto res = leveldesign::evolve_level(p.definition, cfg.evolution, seed);
                auto g = p.definition;
                g.levels = {res.level};
                const engine::Simulator sim(g);
                const auto solve = agents::exhaustive_solve(sim, 0, cfg.solve_state_cap);
                const bool playable = res.fitness.playable && res.fitness.mcts_won && solve.winnable;
                json win = json::array();
                if (solve.shortest_win)
                    for (auto a : *solve.shortest_win) win.push_back(std::string(engine::to_string(a)));
                json curve = json::array();
                for (const auto& s : res.log) curve.push_back(s.best);
                pl["level"] = gdl::level_to_json(res.level);
                pl["fitness"] = leveldesign::fitness_to_json(res.fitness);
                pl["solve"] = {{"winnable", solve.winnable},
                               {"truncated", solve.truncated},
                               {"states", solve.states},
                               {"shortest_win", win}};
                pl["best_curve"] = curve;
                pl["playable"] = playable;
                e.summary = *sel.target + (playable ? " gained a playable level" : " level attempt unplayable");
            } catch (const leveldesign::InfeasibleDefinition& ex) {
                pl["error"] = ex.what();
                e.summary = *sel.target + " level design infeasible";
            }
            break;
        }
        case Activity::MechanicInvention: {
            const auto res = mechanics::mine(kb.catalogue, cfg.mining_batch, seed, {}, cfg.mining_state_cap);
            json evaluated = json::array(), banked = json::array();
            for (const auto& [m, rep] : res.evaluated)
                evaluated.push_back({{"candidate", mechanics::candidate_to_json(m)},
                                     {"report", mechanics::report_to_json(rep)}});
            for (const auto& name : res.banked) banked.push_back(rulesetdesign::pattern_to_json(*res.catalogue.find(name)));
            pl["evaluated"] = evaluated;
            pl["banked"] = banked;
            e.summary = "mined " + std::to_string(res.evaluated.size()) + " candidates, banked " +
                        std::to_string(res.banked.size());
            break;
        }
        case Activity::Shelve: {
            const auto& p = require_project(kb, sel.target);
            std::string reason = "idle";
            shelvable(p, cfg, &reason);
            pl["reason"] = reason;
            e.summary = "shelved " + p.id + ": " + reason;
            break;
        }
        case Activity::Resume: {
            const auto& p = require_project(kb, sel.target);
            std::string revision = "none";
            if (p.potential_tested && !p.stage.ruleset_promising)
                revision = "ruleset";
            else if (!p.stage.levels_playable && p.level_attempts > 0)
                revision = "levels";
            pl["revision"] = revision;
            e.summary = "resumed " + p.id + " (revise " + revision + ")";
            break;
        }
        case Activity::Export: {
            const auto& p = require_project(kb, sel.target);
            const std::string game = export_game(p, kb, workspace);
            const fs::path rel = fs::relative(game, workspace);
            pl["game"] = rel.string();
            pl["sidecar"] = (rel.parent_path() / (p.id + ".provenance.json")).string();
            pl["definition_digest"] = gdl::definition_digest(p.definition);
            e.summary = "exported " + p.id;
            break;
        }
    }
    pl["rng_after"] = to_hex(rng.state());
    return e;
}

void apply_event(KnowledgeBase& kb, const ActivityEvent& e) {
    if (e.step != kb.event_log_position + 1)
        throw CorruptWorkspace("event step " + std::to_string(e.step) + " does not follow " +
                               std::to_string(kb.event_log_position));
    try {
        const uint64_t seed = payload_seed(e);
        auto touch = [&](Project& p) { p.history.push_back({e.step, e.activity, seed}); };
        const json& pl = e.payload;
        switch (e.activity) {
            case Activity::RulesetDesign: {
                auto g = checked_game(pl.at("definition"), "event " + std::to_string(e.step));
                if (pl.at("created").get<bool>()) {
                    if (!e.project || *e.project != project_id(kb.next_project))
                        throw CorruptWorkspace("unexpected new project id");
                    Project p;
                    p.id = *e.project;
                    p.skeleton = pl.at("skeleton").get<std::string>();
                    kb.projects.push_back(std::move(p));
                    ++kb.next_project;
                }
                auto& p = require_project(kb, e.project);
                p.definition = std::move(g);
                p.stage = Stage{};
                p.stage.has_ruleset = true;
                p.potential_tested = false;
                touch(p);
                break;
            }
            case Activity::PotentialTest: {
                auto& p = require_project(kb, e.project);
                p.potential_tested = true;
                p.stage.ruleset_promising = pl.at("report").at("verdict").get<std::string>() == "promising";
                p.evidence["potential"] = pl.at("report");
                touch(p);
                break;
            }
            case Activity::LevelDesign: {
                auto& p = require_project(kb, e.project);
                ++p.level_attempts;
                if (pl.contains("level")) {
                    const auto level = gdl::level_from_json(pl.at("level"), "event level");
                    kb.sketches.push_back({level, p.id, e.step});
                    if (pl.at("playable").get<bool>()) {
                        p.definition.levels = {level};
                        p.stage.has_levels = true;
                        p.stage.levels_playable = true;
                        p.quality = pl.at("fitness").at("score").get<double>();
                        p.evidence["level"] = {{"fitness", pl.at("fitness")},
                                               {"mcts_won", pl.at("fitness").at("mcts_won")},
                                               {"winnable", pl.at("solve").at("winnable")},
                                               {"solve", pl.at("solve")}};
                    }
                }
                touch(p);
                break;
            }
            case Activity::MechanicInvention: {
                for (const auto& ev : pl.at("evaluated"))
                    kb.mechanics_log.push_back({mechanics::candidate_from_json(ev.at("candidate")),
                                                mechanics::report_from_json(ev.at("report")), e.step});
                for (const auto& pj : pl.at("banked")) {
                    auto pat = rulesetdesign::pattern_from_json(pj);
                    if (kb.catalogue.find(pat.name)) throw CorruptWorkspace("banked name clash " + pat.name);
                    kb.catalogue.patterns.push_back(std::move(pat));
                    ++kb.catalogue.version;
                }
                if (!pl.at("banked").empty()) kb.last_bank_step = e.step;
                break;
            }
            case Activity::Shelve: {
                auto& p = require_project(kb, e.project);
                p.shelved_since = e.step;
                touch(p);
                break;
            }
            case Activity::Resume: {
                auto& p = require_project(kb, e.project);
                p.shelved_since.reset();
                const auto revision = pl.at("revision").get<std::string>();
                if (revision == "ruleset") {
                    p.definition.rules.clear();
                    p.definition.variables.clear();
                    p.definition.levels.clear();
                    p.stage = Stage{};
                    p.potential_tested = false;
                    p.level_attempts = 0;
                    p.quality.reset();
                    p.evidence = json::object();
                } else if (revision == "levels") {
                    p.level_attempts = 0;
                }
                touch(p);
                break;
            }
            case Activity::Export: {
                auto& p = require_project(kb, e.project);
                p.exported = true;
                touch(p);
                break;
            }
        }
        kb.rng_state = from_hex(pl.at("rng_after").get<std::string>());
    } catch (const json::exception& ex) {
        throw CorruptWorkspace("event " + std::to_string(e.step) + ": " + ex.what());
    } catch (const gdl::GdlError& ex) {
        throw CorruptWorkspace("event " + std::to_string(e.step) + ": " + ex.what());
    } catch (const rulesetdesign::RulesetError& ex) {
        throw CorruptWorkspace("event " + std::to_string(e.step) + ": " + ex.what());
    } catch (const mechanics::MechanicsError& ex) {
        throw CorruptWorkspace("event " + std::to_string(e.step) + ": " + ex.what());
    }
    kb.event_log_position = e.step;
}

KnowledgeBase replay(const std::vector<ActivityEvent>& feed, uint64_t origin_seed) {
    auto kb = initial_knowledge(origin_seed);
    for (const auto& e : feed) apply_event(kb, e);
    return kb;
}

// ---- export -----------------------------------------------------------------

std::string export_game(const Project& p, const KnowledgeBase& kb, const std::string& workspace) {
    if (!p.stage.has_ruleset || !p.stage.has_levels || p.definition.levels.empty())
        throw ProjectIncomplete(p.id + " lacks a ruleset or levels");
    if (!publishable(p)) throw BelowThreshold(p.id + " is below the publish threshold");
    const fs::path dir = fs::path(workspace) / "exports";
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw PersistenceFailure("create " + dir.string() + ": " + ec.message());

    json steps = json::array(), seeds = json::array();
    for (const auto& t : p.history) {
        steps.push_back({{"step", t.step}, {"activity", std::string(to_string(t.activity))}});
        seeds.push_back(to_hex(t.seed));
    }
    const json sidecar = {{"project", p.id},
                          {"game", p.id + ".json"},
                          {"definition_digest", gdl::definition_digest(p.definition)},
                          {"catalogue_version", kb.catalogue.version},
                          {"origin_seed", to_hex(kb.origin_seed)},
                          {"seeds", seeds},
                          {"steps", steps},
                          {"quality", p.quality ? json(*p.quality) : json(nullptr)},
                          {"evidence", p.evidence}};
    const fs::path game = dir / (p.id + ".json");
    atomic_write(game, gdl::serialize_game(p.definition));
    atomic_write(dir / (p.id + ".provenance.json"), sidecar.dump(2) + "\n");
    return game.string();
}

ExportCheck verify_export(const std::string& game_path, const std::string& sidecar_path) {
    ExportCheck out;
    gdl::GameDefinition g;
    try {
        g = gdl::load_game_file(game_path);
        out.valid_game = gdl::validate_game(g).empty() && !g.levels.empty();
    } catch (const std::exception&) {
        return out;
    }
    json side;
    try {
        side = json::parse(read_text(sidecar_path));
    } catch (const std::exception&) {
        return out;
    }
    out.digest_matches = side.value("definition_digest", "") == gdl::definition_digest(g);
    if (!out.valid_game) return out;
    const engine::Simulator sim(g);
    const auto solve = agents::exhaustive_solve(sim, 0);
    out.winnable = solve.winnable && side["evidence"]["level"].value("winnable", false);
    try {
        auto s = sim.init_state(0, 0);
        for (const auto& a : side.at("evidence").at("level").at("solve").at("shortest_win"))
            sim.advance(s, engine::action_from_string(a.get<std::string>()));
        out.win_replays = s.status == engine::Status::Won;
    } catch (const std::exception&) {
        out.win_replays = false;
    }
    return out;
}

// ---- workspace --------------------------------------------------------------

WorkspaceLock::WorkspaceLock(const std::string& workspace) {
    const fs::path path = fs::path(workspace) / "workspace.lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw IoFailure("open " + path.string() + ": " + std::strerror(errno));
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw WorkspaceLocked(workspace + " is in use by another studio");
    }
}

WorkspaceLock::~WorkspaceLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

bool workspace_exists(const std::string& dir) { return fs::exists(fs::path(dir) / "knowledge.json"); }

std::vector<ActivityEvent> read_feed(const std::string& dir) {
    const fs::path path = fs::path(dir) / "events.jsonl";
    std::vector<ActivityEvent> out;
    if (!fs::exists(path)) return out;
    const std::string text = read_text(path);
    size_t start = 0;
    while (start < text.size()) {
        const size_t nl = text.find('\n', start);
        if (nl == std::string::npos) break;  // torn tail
        const std::string line = text.substr(start, nl - start);
        start = nl + 1;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw CorruptWorkspace("events.jsonl line " + std::to_string(out.size() + 1) + ": " + e.what());
        }
        out.push_back(event_from_json(j));
    }
    return out;
}

KnowledgeBase load_workspace(const std::string& dir) {
    const fs::path root(dir);
    if (!fs::is_directory(root)) throw IoFailure(dir + " is not a directory");
    json kj;
    rulesetdesign::Catalogue catalogue;
    try {
        kj = json::parse(read_text(root / "knowledge.json"));
    } catch (const json::parse_error& e) {
        throw CorruptWorkspace(std::string("knowledge.json: ") + e.what());
    }
    try {
        catalogue = rulesetdesign::catalogue_from_json(json::parse(read_text(root / "catalogue.json")));
    } catch (const json::parse_error& e) {
        throw CorruptWorkspace(std::string("catalogue.json: ") + e.what());
    } catch (const rulesetdesign::RulesetError& e) {
        throw CorruptWorkspace(std::string("catalogue.json: ") + e.what());
    }
    auto kb = knowledge_from_json(kj, std::move(catalogue));
    const auto feed = read_feed(dir);
    const auto logged = static_cast<int64_t>(feed.size());
    if (logged > kb.event_log_position) return replay(feed, kb.origin_seed);
    if (logged < kb.event_log_position) throw CorruptWorkspace("event feed is shorter than the knowledge base");
    if (kj.value("catalogue_version", kb.catalogue.version) != kb.catalogue.version)
        throw CorruptWorkspace("catalogue version does not match the knowledge base");
    return kb;
}

void save_workspace(const KnowledgeBase& kb, const std::string& dir) {
    const fs::path root(dir);
    atomic_write(root / "catalogue.json", rulesetdesign::catalogue_to_json(kb.catalogue).dump(2) + "\n");
    atomic_write(root / "knowledge.json", knowledge_to_json(kb).dump(2) + "\n");
}

StudioRun run_studio(const StudioConfig& cfg, uint64_t seed, int steps, const std::string& workspace) {
    if (steps < 1) throw std::invalid_argument("steps must be at least 1");
    std::error_code ec;
    fs::create_directories(workspace, ec);
    if (ec) throw IoFailure("create " + workspace + ": " + ec.message());
    const WorkspaceLock lock(workspace);

    StudioRun run;
    const fs::path feed = fs::path(workspace) / "events.jsonl";
    if (workspace_exists(workspace)) {
        repair_feed(feed);
        run.kb = load_workspace(workspace);
        save_workspace(run.kb, workspace);
    } else {
        run.kb = initial_knowledge(seed);
        save_workspace(run.kb, workspace);
    }

    Rng rng(run.kb.rng_state);
    for (int i = 0; i < steps; ++i) {
        const auto sel = select_activity(run.kb, cfg, rng);
        auto e = execute_activity(run.kb, cfg, sel, rng, workspace);
        append_line(feed, event_to_json(e).dump());
        apply_event(run.kb, e);
        save_workspace(run.kb, workspace);
        run.events.push_back(std::move(e));
    }
    return run;
}

}  // namespace forge::studio
