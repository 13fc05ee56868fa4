// forge: command-line front end over the library.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "forge/agents.hpp"
#include "forge/gdl.hpp"
#include "forge/leveldesign.hpp"
#include "forge/mechanics.hpp"
#include "forge/rulesetdesign.hpp"
#include "forge/studio.hpp"
#include "forge/trace.hpp"

using namespace forge;
using nlohmann::json;

namespace {

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

json read_json(const std::string& path) { return json::parse(read_text(path)); }

json actions_json(const std::vector<engine::Action>& actions) {
    json a = json::array();
    for (auto x : actions) a.push_back(std::string(engine::to_string(x)));
    return a;
}

rulesetdesign::Catalogue catalogue_or_seed(const std::string& path) {
    if (path.empty() || !std::filesystem::exists(path)) return rulesetdesign::seed_catalogue();
    return rulesetdesign::load_catalogue(path);
}

std::string default_workspace() {
    const char* env = std::getenv("FORGE_WORKSPACE");
    return env ? env : "";
}

struct PlayOptions {
    std::string game, agent = "random", params, trace, verify;
    size_t level = 0;
    uint64_t seed = 0;
};

int cmd_play(const PlayOptions& o) {
    const auto g = gdl::load_game_file(o.game);
    const engine::Simulator sim(g);
    if (!o.verify.empty()) {
        const auto v = engine::verify_trace(sim, read_text(o.verify));
        std::cout << json{{"ok", v.ok}, {"message", v.message}, {"final_digest", v.final_digest}}.dump() << "\n";
        return v.ok ? 0 : 1;
    }
    std::vector<engine::Action> actions;
    json summary;
    if (o.agent == "solve") {
        const auto rep = agents::exhaustive_solve(sim, o.level);
        size_t cells = 0;
        for (const auto& c : rep.reachable_cells) cells += c.size();
        summary = {{"winnable", rep.winnable},
                   {"truncated", rep.truncated},
                   {"states", rep.states},
                   {"reachable_hashes", rep.reachable_hashes.size()},
                   {"reachable_cells", cells}};
        if (rep.shortest_win) {
            summary["shortest_win"] = actions_json(*rep.shortest_win);
            actions = *rep.shortest_win;
        }
    } else {
        agents::Playtrace t;
        if (o.agent == "random") {
            t = agents::random_episode(sim, o.level, o.seed);
        } else if (o.agent == "mcts") {
            const auto p = o.params.empty() ? agents::MctsParams{} : agents::params_from_json(read_json(o.params));
            t = agents::mcts_episode(sim, o.level, p, o.seed);
        } else {
            throw CLI::ValidationError("--agent", "expected random, mcts or solve");
        }
        actions = t.actions;
        json fired = json::array();
        for (auto r : t.rules_fired) fired.push_back(r);
        summary = {{"outcome", std::string(engine::to_string(t.outcome))},
                   {"ticks", t.ticks},
                   {"unique_states", t.unique_states},
                   {"rules_fired", fired},
                   {"actions", actions_json(t.actions)}};
    }
    if (!o.trace.empty()) {
        const auto rec = engine::record(sim, o.level, o.seed, actions);
        write_text(o.trace, engine::render_trace(rec.header, rec.events));
    }
    std::cout << summary.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"forge: grid game design toolkit"};
    app.require_subcommand(1);

    // play
    PlayOptions play;
    auto* play_cmd = app.add_subcommand("play", "play a level with an agent, or verify a trace");
    play_cmd->add_option("--game", play.game, "game definition")->required()->check(CLI::ExistingFile);
    play_cmd->add_option("--level", play.level, "level index");
    play_cmd->add_option("--agent", play.agent, "random | mcts | solve")
        ->check(CLI::IsMember({"random", "mcts", "solve"}));
    play_cmd->add_option("--seed", play.seed, "episode seed");
    play_cmd->add_option("--params", play.params, "MCTS parameters (JSON)")->check(CLI::ExistingFile);
    play_cmd->add_option("--trace", play.trace, "write the episode trace here");
    play_cmd->add_option("--verify", play.verify, "verify a trace against the game")->check(CLI::ExistingFile);

    // level gen
    auto* level_cmd = app.add_subcommand("level", "level design");
    level_cmd->require_subcommand(1);
    std::string lg_game, lg_out, lg_log, lg_params;
    uint64_t lg_seed = 0;
    auto* lg = level_cmd->add_subcommand("gen", "evolve a level for a ruleset");
    lg->add_option("--game", lg_game, "game definition")->required()->check(CLI::ExistingFile);
    lg->add_option("--seed", lg_seed, "evolution seed");
    lg->add_option("--out", lg_out, "write the game with the evolved level");
    lg->add_option("--log", lg_log, "generation log (JSON Lines)");
    lg->add_option("--params", lg_params, "evolution parameters (JSON)")->check(CLI::ExistingFile);

    // ruleset assemble | test
    auto* rs_cmd = app.add_subcommand("ruleset", "ruleset design");
    rs_cmd->require_subcommand(1);
    std::string ra_cat, ra_skel, ra_out;
    int ra_n = 3;
    uint64_t ra_seed = 0;
    auto* ra = rs_cmd->add_subcommand("assemble", "assemble a ruleset from catalogue patterns");
    ra->add_option("--catalogue", ra_cat, "catalogue file (seed catalogue when absent)");
    ra->add_option("--skeleton", ra_skel, "game whose pieces are used")->required()->check(CLI::ExistingFile);
    ra->add_option("--patterns", ra_n, "number of patterns");
    ra->add_option("--seed", ra_seed, "sampling seed");
    ra->add_option("--out", ra_out, "write the assembled game");
    std::string rt_game, rt_report, rt_cat;
    uint64_t rt_seed = 0;
    auto* rt = rs_cmd->add_subcommand("test", "test a ruleset for potential");
    rt->add_option("--game", rt_game, "game definition")->required()->check(CLI::ExistingFile);
    rt->add_option("--catalogue", rt_cat, "unused; accepted for symmetry with assemble");
    rt->add_option("--seed", rt_seed, "agent seed");
    rt->add_option("--report", rt_report, "write the potential report");

    // mechanic mine
    auto* mech_cmd = app.add_subcommand("mechanic", "mechanic invention");
    mech_cmd->require_subcommand(1);
    int mm_count = 20;
    uint64_t mm_seed = 0;
    size_t mm_cap = agents::kDefaultStateCap;
    std::string mm_cat, mm_report;
    auto* mm = mech_cmd->add_subcommand("mine", "synthesize, evaluate and bank mechanics");
    mm->add_option("--count", mm_count, "candidates to synthesize");
    mm->add_option("--seed", mm_seed, "synthesis seed");
    mm->add_option("--catalogue", mm_cat, "catalogue to extend in place (seed catalogue when absent)");
    mm->add_option("--report", mm_report, "write the evaluation report");
    mm->add_option("--state-cap", mm_cap, "exhaustive solver state cap");

    // studio run | status | export
    auto* st_cmd = app.add_subcommand("studio", "the continuous design loop");
    st_cmd->require_subcommand(1);
    std::string ws = default_workspace(), st_config, st_project;
    int st_steps = 1;
    uint64_t st_seed = 0;
    auto* sr = st_cmd->add_subcommand("run", "run studio steps");
    sr->add_option("--workspace", ws, "workspace directory (default $FORGE_WORKSPACE)");
    sr->add_option("--steps", st_steps, "steps to run")->check(CLI::PositiveNumber);
    sr->add_option("--seed", st_seed, "seed for a fresh workspace");
    sr->add_option("--config", st_config, "studio configuration (JSON)")->check(CLI::ExistingFile);
    auto* ss = st_cmd->add_subcommand("status", "summarize a workspace");
    ss->add_option("--workspace", ws, "workspace directory (default $FORGE_WORKSPACE)");
    auto* se = st_cmd->add_subcommand("export", "export a finished project");
    se->add_option("--workspace", ws, "workspace directory (default $FORGE_WORKSPACE)");
    se->add_option("--project", st_project, "project id")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*play_cmd) return cmd_play(play);

        if (*lg) {
            const auto g = gdl::load_game_file(lg_game);
            const auto p = lg_params.empty() ? leveldesign::EvolutionParams{}
                                             : leveldesign::evolution_params_from_json(read_json(lg_params));
            const auto res = leveldesign::evolve_level(g, p, lg_seed);
            if (!lg_out.empty()) {
                auto out = g;
                out.levels = {res.level};
                gdl::save_game_file(out, lg_out);
            }
            if (!lg_log.empty()) {
                std::string lines;
                for (const auto& s : res.log)
                    lines += json{{"generation", s.generation}, {"best", s.best}, {"mean", s.mean}}.dump() + "\n";
                write_text(lg_log, lines);
            }
            std::cout << leveldesign::fitness_to_json(res.fitness).dump() << "\n";
            return 0;
        }

        if (*ra) {
            auto skel = gdl::load_game_file(ra_skel);
            skel.rules.clear();
            skel.variables.clear();
            const auto g = rulesetdesign::assemble_ruleset(catalogue_or_seed(ra_cat), skel, ra_n, ra_seed);
            if (ra_out.empty())
                std::cout << gdl::serialize_game(g);
            else
                gdl::save_game_file(g, ra_out);
            return 0;
        }

        if (*rt) {
            const auto rep = rulesetdesign::test_potential(gdl::load_game_file(rt_game), {}, rt_seed);
            const auto j = rulesetdesign::report_to_json(rep);
            if (!rt_report.empty()) write_text(rt_report, j.dump(2) + "\n");
            std::cout << json{{"verdict", std::string(rulesetdesign::to_string(rep.verdict))},
                              {"all_rules_firable", rep.all_rules_firable},
                              {"terminates", rep.terminates},
                              {"winnable", rep.winnable}}
                             .dump()
                      << "\n";
            return rep.verdict == rulesetdesign::Verdict::Promising ? 0 : 1;
        }

        if (*mm) {
            const auto res = mechanics::mine(catalogue_or_seed(mm_cat), mm_count, mm_seed, {}, mm_cap);
            if (!mm_cat.empty()) rulesetdesign::save_catalogue(res.catalogue, mm_cat);
            json evaluated = json::array();
            for (const auto& [m, rep] : res.evaluated)
                evaluated.push_back({{"candidate", mechanics::candidate_to_json(m)},
                                     {"report", mechanics::report_to_json(rep)}});
            const json report = {{"evaluated", evaluated},
                                 {"banked", res.banked},
                                 {"catalogue_version", res.catalogue.version}};
            if (!mm_report.empty()) write_text(mm_report, report.dump(2) + "\n");
            std::cout << json{{"evaluated", res.evaluated.size()}, {"banked", res.banked}}.dump() << "\n";
            return 0;
        }

        if (ws.empty()) throw std::runtime_error("no workspace: pass --workspace or set FORGE_WORKSPACE");

        if (*sr) {
            const auto cfg = st_config.empty() ? studio::StudioConfig{} : studio::config_from_json(read_json(st_config));
            const auto run = studio::run_studio(cfg, st_seed, st_steps, ws);
            for (const auto& e : run.events)
                std::cout << e.step << " " << studio::to_string(e.activity) << " " << e.summary << "\n";
            return 0;
        }

        if (*ss) {
            const auto kb = studio::load_workspace(ws);
            const auto feed = studio::read_feed(ws);
            json projects = json::array();
            for (const auto& p : kb.projects)
                projects.push_back({{"id", p.id},
                                    {"skeleton", p.skeleton},
                                    {"has_ruleset", p.stage.has_ruleset},
                                    {"ruleset_promising", p.stage.ruleset_promising},
                                    {"levels_playable", p.stage.levels_playable},
                                    {"shelved", p.shelved_since.has_value()},
                                    {"exported", p.exported}});
            const bool replay_ok = studio::kb_digest(studio::replay(feed, kb.origin_seed)) == studio::kb_digest(kb);
            std::cout << json{{"step", kb.event_log_position},
                              {"catalogue_version", kb.catalogue.version},
                              {"patterns", kb.catalogue.patterns.size()},
                              {"mechanics_log", kb.mechanics_log.size()},
                              {"sketches", kb.sketches.size()},
                              {"projects", projects},
                              {"digest", studio::kb_digest(kb)},
                              {"replay_matches", replay_ok}}
                             .dump(2)
                      << "\n";
            return replay_ok ? 0 : 1;
        }

        if (*se) {
            const studio::WorkspaceLock lock(ws);
            const auto kb = studio::load_workspace(ws);
            const auto* p = kb.find(st_project);
            if (!p) throw studio::UnknownProject("unknown project " + st_project);
            const auto path = studio::export_game(*p, kb, ws);
            std::cout << path << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
