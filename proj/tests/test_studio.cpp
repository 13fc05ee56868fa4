#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "forge/studio.hpp"
#include "support.hpp"

using namespace forge;
using namespace forge::studio;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

StudioConfig fast_config() {
    StudioConfig c;
    c.potential.random_episodes = 5;
    c.potential.mcts.iterations = 100;
    c.evolution.population = 6;
    c.evolution.generations = 3;
    c.evolution.random_episodes = 3;
    c.evolution.mcts.iterations = 150;
    c.mining_batch = 3;
    return c;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("forge_test_" + name)) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

std::string feed_text(const std::string& dir) { return testing::read_file(dir + "/events.jsonl"); }

// One activity with an explicit selection, as the loop would run it.
ActivityEvent drive(KnowledgeBase& kb, const StudioConfig& cfg, Selection sel, const std::string& ws) {
    Rng rng(kb.rng_state);
    auto e = execute_activity(kb, cfg, sel, rng, ws);
    apply_event(kb, e);
    return e;
}

// Runs the pipeline by hand until an adventure project becomes publishable.
std::string publishable_adventure(KnowledgeBase& kb, const StudioConfig& cfg, const std::string& ws) {
    for (int attempt = 0; attempt < 60; ++attempt) {
        const auto rd = drive(kb, cfg, {Activity::RulesetDesign, std::nullopt}, ws);
        const std::string id = *rd.project;
        if (kb.find(id)->skeleton != "adventure") continue;
        drive(kb, cfg, {Activity::PotentialTest, id}, ws);
        if (!kb.find(id)->stage.ruleset_promising) continue;
        for (int k = 0; k < cfg.max_level_attempts && !publishable(*kb.find(id)); ++k)
            drive(kb, cfg, {Activity::LevelDesign, id}, ws);
        if (publishable(*kb.find(id))) return id;
    }
    return {};
}

Project promising_project() {
    Project p;
    p.id = "p0001";
    p.skeleton = "adventure";
    p.definition = testing::adventure();
    p.definition.levels.clear();
    p.stage.has_ruleset = true;
    p.stage.ruleset_promising = true;
    p.potential_tested = true;
    return p;
}

}  // namespace

TEST_CASE("activity names round trip") {
    for (Activity a : kAllActivities) CHECK(activity_from_string(to_string(a)) == a);
    CHECK_THROWS_AS(activity_from_string("Nap"), std::invalid_argument);
}

TEST_CASE("selection on an empty knowledge base") {
    const auto kb = initial_knowledge(1);
    const auto cfg = StudioConfig{};
    const auto u = activity_utilities(kb, cfg);
    CHECK(u[static_cast<size_t>(Activity::LevelDesign)] == 0);
    CHECK(u[static_cast<size_t>(Activity::PotentialTest)] == 0);
    CHECK(u[static_cast<size_t>(Activity::Shelve)] == 0);
    CHECK(u[static_cast<size_t>(Activity::Resume)] == 0);
    CHECK(u[static_cast<size_t>(Activity::RulesetDesign)] > 0);
    CHECK(u[static_cast<size_t>(Activity::MechanicInvention)] > 0);
    Rng rng(3);
    std::set<Activity> seen;
    for (int i = 0; i < 500; ++i) {
        const auto sel = select_activity(kb, cfg, rng);
        CHECK((sel.activity == Activity::RulesetDesign || sel.activity == Activity::MechanicInvention));
        if (sel.activity == Activity::RulesetDesign) CHECK_FALSE(sel.target.has_value());
        seen.insert(sel.activity);
    }
    CHECK(seen.size() == 2);
}

TEST_CASE("zero temperature picks level design for a promising project") {
    auto kb = initial_knowledge(1);
    kb.projects.push_back(promising_project());
    kb.next_project = 2;
    auto cfg = StudioConfig{};
    cfg.temperature = 0;
    Rng rng(99);
    for (int i = 0; i < 20; ++i) {
        const auto sel = select_activity(kb, cfg, rng);
        CHECK(sel.activity == Activity::LevelDesign);
        CHECK(sel.target == std::optional<std::string>("p0001"));
    }
}

TEST_CASE("selection is a function of knowledge and rng state") {
    auto kb = initial_knowledge(4);
    kb.projects.push_back(promising_project());
    auto shelved = promising_project();
    shelved.id = "p0002";
    shelved.shelved_since = 0;
    kb.projects.push_back(shelved);
    kb.event_log_position = 30;
    for (uint64_t s = 0; s < 50; ++s) {
        Rng a(s), b(s);
        CHECK(select_activity(kb, StudioConfig{}, a) == select_activity(kb, StudioConfig{}, b));
        CHECK(a == b);
    }
}

TEST_CASE("resume utility decays then spikes") {
    auto kb = initial_knowledge(4);
    auto p = promising_project();
    p.shelved_since = 0;
    kb.projects.push_back(p);
    const StudioConfig cfg;
    std::vector<double> r;
    for (int64_t age = 0; age < 30; ++age) {
        kb.event_log_position = age - 1;
        r.push_back(activity_utilities(kb, cfg)[static_cast<size_t>(Activity::Resume)]);
    }
    for (int64_t age = 1; age < cfg.utilities.resume_cooldown; ++age) CHECK(r[age] < r[age - 1]);
    CHECK(r[cfg.utilities.resume_cooldown] > r[0]);
    CHECK(r[29] == r[cfg.utilities.resume_cooldown]);
}

TEST_CASE("config parsing keeps defaults") {
    const auto c = config_from_json(json::parse(R"({"temperature": 0.5, "utilities": {"shelve": 3},
        "evolution": {"generations": 2}, "mining_batch": 4})"));
    CHECK(c.temperature == 0.5);
    CHECK(c.utilities.shelve == 3);
    CHECK(c.utilities.resume == StudioConfig{}.utilities.resume);
    CHECK(c.evolution.generations == 2);
    CHECK(c.evolution.population == StudioConfig{}.evolution.population);
    CHECK(c.mining_batch == 4);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"mining_batch": 0})")), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"temperature": "hot"})")), std::invalid_argument);
}

TEST_CASE("one step on an empty workspace") {
    TempDir ws("one_step");
    const auto run = run_studio(fast_config(), 1, 1, ws.str());
    REQUIRE(run.events.size() == 1);
    CHECK(run.events[0].step == 1);
    CHECK(read_feed(ws.str()) == run.events);
    CHECK(fs::exists(ws.path / "knowledge.json"));
    CHECK(fs::exists(ws.path / "catalogue.json"));
    CHECK(fs::exists(ws.path / "workspace.lock"));
    const auto kb = load_workspace(ws.str());
    CHECK(kb == run.kb);
    CHECK(kb.event_log_position == 1);
    CHECK_THROWS_AS(run_studio(fast_config(), 1, 0, ws.str()), std::invalid_argument);
}

TEST_CASE("a held lock refuses a second studio") {
    TempDir ws("locked");
    fs::create_directories(ws.path);
    const WorkspaceLock held(ws.str());
    CHECK_THROWS_AS(run_studio(fast_config(), 1, 1, ws.str()), WorkspaceLocked);
}

TEST_CASE("restart transparency, replay and continuity") {
    const auto cfg = fast_config();
    TempDir whole("whole"), split("split");
    const auto full = run_studio(cfg, 7, 24, whole.str());
    run_studio(cfg, 7, 10, split.str());
    const auto rest = run_studio(cfg, 12345, 14, split.str());  // seed ignored on resume
    CHECK(rest.events.front().step == 11);
    CHECK(feed_text(whole.str()) == feed_text(split.str()));
    CHECK(rest.kb == full.kb);
    CHECK(kb_digest(rest.kb) == kb_digest(full.kb));

    const auto feed = read_feed(whole.str());
    REQUIRE(feed.size() == 24);
    CHECK(kb_digest(replay(feed, 7)) == kb_digest(full.kb));

    // steps strictly increase; knowledge never shrinks; stages only regress on a revision
    auto kb = initial_knowledge(7);
    for (const auto& e : feed) {
        const auto before = kb;
        apply_event(kb, e);
        CHECK(e.step == before.event_log_position + 1);
        CHECK(kb.catalogue.version >= before.catalogue.version);
        CHECK(kb.mechanics_log.size() >= before.mechanics_log.size());
        CHECK(kb.catalogue.patterns.size() >= before.catalogue.patterns.size());
        const bool revision = e.activity == Activity::Resume && e.payload.at("revision") == "ruleset";
        for (const auto& p : before.projects) {
            const auto* q = kb.find(p.id);
            REQUIRE(q);
            if (revision && p.id == *e.project) continue;
            if (e.activity == Activity::RulesetDesign && p.id == *e.project) continue;
            CHECK((!p.stage.has_ruleset || q->stage.has_ruleset));
            CHECK((!p.stage.levels_playable || q->stage.levels_playable));
            CHECK((!p.potential_tested || q->potential_tested));
        }
    }
}

TEST_CASE("crash recovery") {
    const auto cfg = fast_config();
    TempDir ref("ref"), crash("crash");
    run_studio(cfg, 3, 8, ref.str());
    const auto ref_feed = read_feed(ref.str());

    run_studio(cfg, 3, 5, crash.str());
    SUBCASE("event appended, knowledge not yet written") {
        std::ofstream(crash.path / "events.jsonl", std::ios::app) << event_to_json(ref_feed[5]).dump() << "\n";
        const auto kb = load_workspace(crash.str());
        CHECK(kb.event_log_position == 6);
        CHECK(kb_digest(kb) == kb_digest(replay({ref_feed.begin(), ref_feed.begin() + 6}, 3)));
        run_studio(cfg, 3, 2, crash.str());
    }
    SUBCASE("torn final line") {
        const std::string line = event_to_json(ref_feed[5]).dump();
        std::ofstream(crash.path / "events.jsonl", std::ios::app) << line.substr(0, line.size() / 2);
        CHECK(load_workspace(crash.str()).event_log_position == 5);
        run_studio(cfg, 3, 3, crash.str());
    }
    SUBCASE("catalogue replaced, knowledge stale") {
        std::ofstream(crash.path / "events.jsonl", std::ios::app) << event_to_json(ref_feed[5]).dump() << "\n";
        auto ahead = replay({ref_feed.begin(), ref_feed.begin() + 6}, 3);
        ahead.catalogue.version += 1;  // any catalogue content must be superseded by the replay
        std::ofstream(crash.path / "catalogue.json")
            << rulesetdesign::catalogue_to_json(ahead.catalogue).dump(2) << "\n";
        run_studio(cfg, 3, 2, crash.str());
    }
    CHECK(feed_text(crash.str()) == feed_text(ref.str()));
    CHECK(kb_digest(load_workspace(crash.str())) == kb_digest(load_workspace(ref.str())));
}

TEST_CASE("corrupt workspaces are rejected") {
    const auto cfg = fast_config();
    TempDir ws("corrupt");
    run_studio(cfg, 2, 3, ws.str());
    const auto good_cat = testing::read_file(ws.str() + "/catalogue.json");
    const auto good_kb = testing::read_file(ws.str() + "/knowledge.json");

    std::ofstream(ws.path / "catalogue.json") << good_cat.substr(0, good_cat.size() / 2);
    CHECK_THROWS_AS(load_workspace(ws.str()), CorruptWorkspace);
    std::ofstream(ws.path / "catalogue.json") << good_cat;

    auto j = json::parse(good_kb);
    j["projects"] = json::array({json{{"id", "p0009"}, {"definition", {{"gamename", "x"}, {"pieces", json::array()},
                                                                        {"rules", json::array({"nonsense"})}}}}});
    std::ofstream(ws.path / "knowledge.json") << j.dump();
    CHECK_THROWS_AS(load_workspace(ws.str()), CorruptWorkspace);

    j = json::parse(good_kb);
    j["event_log_position"] = 99;
    std::ofstream(ws.path / "knowledge.json") << j.dump();
    CHECK_THROWS_AS(load_workspace(ws.str()), CorruptWorkspace);

    std::ofstream(ws.path / "knowledge.json") << good_kb;
    CHECK_NOTHROW(load_workspace(ws.str()));
}

TEST_CASE("older knowledge files load with defaults") {
    TempDir ws("older");
    const auto run = run_studio(fast_config(), 5, 4, ws.str());
    auto j = json::parse(testing::read_file(ws.str() + "/knowledge.json"));
    j.erase("sketches");
    j.erase("last_bank_step");
    j.erase("next_project");
    j.erase("schema");
    for (auto& p : j["projects"]) {
        p.erase("history");
        p.erase("evidence");
        p.erase("level_attempts");
        p.erase("stage");
    }
    std::ofstream(ws.path / "knowledge.json") << j.dump();
    const auto kb = load_workspace(ws.str());
    CHECK(kb.sketches.empty());
    CHECK(kb.last_bank_step == 0);
    CHECK(kb.next_project == static_cast<int64_t>(kb.projects.size()) + 1);
    for (const auto& p : kb.projects) {
        CHECK(p.history.empty());
        CHECK(p.stage == Stage{});
    }
}

TEST_CASE("events round trip through json") {
    TempDir ws("events");
    const auto run = run_studio(fast_config(), 9, 6, ws.str());
    for (const auto& e : run.events) {
        CHECK(event_from_json(event_to_json(e)) == e);
        CHECK(e.payload.contains("rng_after"));
    }
    CHECK(knowledge_from_json(knowledge_to_json(run.kb), run.kb.catalogue) == run.kb);
}

TEST_CASE("exporting a finished project") {
    TempDir ws("export");
    fs::create_directories(ws.path);
    const auto cfg = fast_config();
    auto kb = initial_knowledge(11);
    const std::string id = publishable_adventure(kb, cfg, ws.str());
    REQUIRE_FALSE(id.empty());
    const auto& p = *kb.find(id);

    const auto ev = drive(kb, cfg, {Activity::Export, id}, ws.str());
    CHECK(kb.find(id)->exported);
    const auto game = ws.path / ev.payload.at("game").get<std::string>();
    const auto sidecar = ws.path / ev.payload.at("sidecar").get<std::string>();
    REQUIRE(fs::exists(game));
    REQUIRE(fs::exists(sidecar));
    const auto g = gdl::load_game_file(game.string());
    CHECK(gdl::validate_game(g).empty());
    CHECK(g == p.definition);

    const auto side = json::parse(testing::read_file(sidecar.string()));
    std::set<std::string> acts;
    for (const auto& s : side.at("steps")) acts.insert(s.at("activity").get<std::string>());
    CHECK(acts.count("RulesetDesign") == 1);
    CHECK(acts.count("LevelDesign") == 1);
    CHECK(side.at("catalogue_version") == kb.catalogue.version);
    CHECK(verify_export(game.string(), sidecar.string()).ok());

    // tampering with the game breaks the digest
    auto broken = g;
    broken.levels[0].data.assign(broken.levels[0].data.size(), 0);
    broken.levels[0].data[0] = 1;
    gdl::save_game_file(broken, game.string());
    const auto check = verify_export(game.string(), sidecar.string());
    CHECK_FALSE(check.digest_matches);
    CHECK_FALSE(check.ok());
}

TEST_CASE("export preconditions") {
    TempDir ws("export_pre");
    const auto kb = initial_knowledge(1);
    const auto incomplete = promising_project();
    CHECK_THROWS_AS(export_game(incomplete, kb, ws.str()), ProjectIncomplete);

    auto weak = promising_project();
    weak.definition = testing::adventure();
    weak.stage.has_levels = true;
    weak.stage.levels_playable = true;
    weak.evidence["level"] = {{"mcts_won", false}, {"winnable", true}};
    CHECK_FALSE(publishable(weak));
    CHECK_THROWS_AS(export_game(weak, kb, ws.str()), BelowThreshold);
}

TEST_CASE("apply_event rejects events that do not fit") {
    auto kb = initial_knowledge(1);
    ActivityEvent e;
    e.step = 2;
    e.activity = Activity::Shelve;
    e.project = "p0001";
    e.payload = {{"rng_after", "0"}};
    CHECK_THROWS_AS(apply_event(kb, e), CorruptWorkspace);
    e.step = 1;
    CHECK_THROWS_AS(apply_event(kb, e), CorruptWorkspace);
}
