#include <doctest.h>

#include <map>
#include <set>
#include <unordered_map>

#include "forge/engine.hpp"
#include "forge/trace.hpp"
#include "support.hpp"

using namespace forge;
using namespace forge::engine;
using testing::level;
using testing::piece;
using testing::rule;

namespace {

gdl::GameDefinition bvf_on(gdl::LevelDef l) {
    auto g = testing::bvf();
    g.levels = {std::move(l)};
    return g;
}

std::vector<EventKind> kinds(const std::vector<TraceEvent>& ev) {
    std::vector<EventKind> out;
    for (const auto& e : ev) out.push_back(e.kind);
    return out;
}

// Independent structural view used as the collision oracle for state_hash.
struct Occupancy {
    int w, h;
    std::map<std::pair<int, int>, std::multiset<std::string>> cells;
    std::vector<int64_t> vars;
    Status status;
    bool operator==(const Occupancy&) const = default;
    bool operator<(const Occupancy& o) const {
        return std::tie(w, h, cells, vars, status) < std::tie(o.w, o.h, o.cells, o.vars, o.status);
    }
};

Occupancy occupancy(const Simulator& sim, const GameState& s) {
    Occupancy o{s.width, s.height, {}, s.variables, s.status == Status::Timeout ? Status::Running : s.status};
    for (const auto& in : s.instances) o.cells[{in.x, in.y}].insert(sim.piece_name(in.piece));
    return o;
}

gdl::GameDefinition busy_game() {
    gdl::GameDefinition g;
    g.gamename = "busy";
    g.variables = {{"score", "Score", 0}, {"hp", "", 3}};
    g.pieces = {piece("hero", true), piece("wall", false, true), piece("coin"),
                piece("bat", false, false, gdl::Behavior::Random), piece("ghost", false, false, gdl::Behavior::Chase)};
    g.rules = {rule("OVERLAP hero coin", {"DESTROY $2", "SCORE 1", "SFX ding"}),
               rule("OVERLAP hero ghost", {"ADD hp -1", "SFX ouch"}),
               rule("OVERLAP bat coin", {"TRANSFORM $2 wall"}),
               rule("TICK 7", {"DESTROY bat"}),
               rule("VAR score GTE 2", {"SFX fanfare"})};
    g.levels = {level(6, 5, {1, 0, 3, 0, 0, 3,  //
                             0, 2, 0, 4, 0, 0,  //
                             3, 0, 0, 0, 2, 3,  //
                             0, 0, 4, 0, 0, 0,  //
                             5, 0, 3, 0, 0, 1})};
    return g;
}

}  // namespace

TEST_CASE("init_state on the bundled level") {
    const Simulator sim(testing::bvf());
    const auto s = sim.init_state(0, 7);
    CHECK(s.width == 5);
    CHECK(s.height == 5);
    CHECK(s.instances.size() == 8);
    CHECK(s.variables == std::vector<int64_t>{0});
    CHECK(s.tick == 0);
    CHECK(s.status == Status::Running);
    const auto& data = sim.definition().levels[0].data;
    for (size_t i = 0; i < s.instances.size(); ++i) {
        const auto& in = s.instances[i];
        CHECK(in.id == static_cast<int32_t>(i));
        CHECK(data[static_cast<size_t>(in.y * 5 + in.x)] == in.piece + 1);
    }
    for (size_t i = 1; i < s.instances.size(); ++i)
        CHECK(s.instances[i - 1].y * 5 + s.instances[i - 1].x < s.instances[i].y * 5 + s.instances[i].x);

    CHECK(sim.init_state(0, 7) == s);
    CHECK_THROWS_AS(sim.init_state(1, 7), LevelIndexOutOfRange);
}

TEST_CASE("empty 1x1 level") {
    const Simulator sim(bvf_on(level(1, 1, {0})));
    const auto s = sim.init_state(0, 1);
    CHECK(s.instances.empty());
    CHECK(s.status == Status::Running);
}

TEST_CASE("kill-on-touch fires in order: destroy, sound, score") {
    const Simulator sim(bvf_on(level(2, 1, {1, 4})));
    const auto s = sim.init_state(0, 3);
    const auto [next, ev] = sim.step(s, Action::Right);
    REQUIRE(kinds(ev) == std::vector<EventKind>{EventKind::Moved, EventKind::RuleFired, EventKind::Destroyed,
                                                EventKind::Sfx, EventKind::VarChanged});
    CHECK(ev[1].rule == 0);
    CHECK(ev[1].trigger == "OVERLAP playerpiece enemy");
    CHECK(ev[1].bound == std::vector<int32_t>{0, 1});
    CHECK(ev[2].piece == "enemy");
    CHECK(ev[2].instance == 1);
    CHECK(ev[3].name == "punch");
    CHECK(ev[4].name == "score");
    CHECK(ev[4].old_value == 0);
    CHECK(ev[4].new_value == 1);
    CHECK(next.instances.size() == 1);
    CHECK(next.variables[0] == 1);
    CHECK(next.status == Status::Running);
}

TEST_CASE("Wait on a static board only advances the tick") {
    const Simulator sim(testing::bvf());
    const auto s = sim.init_state(0, 11);
    const auto [next, ev] = sim.step(s, Action::Wait);
    CHECK(ev.empty());
    auto expect = s;
    expect.tick = 1;
    CHECK(next == expect);
}

TEST_CASE("two avatars: one moves, one is blocked by a wall") {
    const Simulator sim(testing::corridor_game({}, {level(3, 1, {1, 1, 2})}));
    const auto [next, ev] = sim.step(sim.init_state(0, 0), Action::Right);
    REQUIRE(kinds(ev) == std::vector<EventKind>{EventKind::Moved, EventKind::Blocked});
    CHECK(ev[0].instance == 0);
    CHECK(ev[1].instance == 1);
    CHECK(next.instances[0].x == 1);
    CHECK(next.instances[1].x == 1);
}

TEST_CASE("moves off the grid are blocked") {
    const Simulator sim(testing::corridor_game({}, {level(2, 2, {1, 0, 0, 0})}));
    for (Action a : {Action::Up, Action::Left}) {
        const auto [next, ev] = sim.step(sim.init_state(0, 0), a);
        REQUIRE(ev.size() == 1);
        CHECK(ev[0].kind == EventKind::Blocked);
        CHECK(next.instances[0].x == 0);
        CHECK(next.instances[0].y == 0);
    }
}

TEST_CASE("legal actions") {
    const Simulator sim(testing::corridor_game({rule("TICK 1", {"WIN"})}, {level(1, 1, {1})}));
    auto s = sim.init_state(0, 0);
    CHECK(legal_actions(s).size() == 5);
    sim.advance(s, Action::Wait);
    CHECK(s.status == Status::Won);
    CHECK(legal_actions(s).empty());
    CHECK_THROWS_AS(sim.advance(s, Action::Up), SteppingTerminalState);

    auto g = testing::corridor_game({}, {level(1, 1, {1})});
    g.tick_cap = 2;
    const Simulator capped(g);
    auto t = capped.init_state(0, 0);
    capped.advance(t, Action::Wait);
    CHECK(t.status == Status::Running);
    std::vector<TraceEvent> ev;
    capped.advance(t, Action::Wait, &ev);
    CHECK(t.status == Status::Timeout);
    REQUIRE(ev.size() == 1);
    CHECK(ev[0].kind == EventKind::StatusChanged);
    CHECK(legal_actions(t).empty());
}

TEST_CASE("chase steps along the larger axis, horizontal on ties") {
    gdl::GameDefinition g;
    g.gamename = "chase";
    g.pieces = {piece("hero", true), piece("ghost", false, false, gdl::Behavior::Chase), piece("rock", false, true)};
    // ghost at (0,0), hero at (2,1): dx=2 > dy=1 -> step right
    g.levels = {level(3, 3, {2, 0, 0, 0, 0, 1, 0, 0, 0}),
                // ghost at (0,0), hero at (1,1): tie -> horizontal
                level(3, 3, {2, 0, 0, 0, 1, 0, 0, 0, 0}),
                // ghost at (0,0), hero at (1,2): vertical; rock at (0,1) blocks
                level(3, 3, {2, 0, 0, 3, 0, 0, 0, 1, 0})};
    const Simulator sim(g);
    auto ghost = [](const GameState& s) {
        for (const auto& in : s.instances)
            if (in.piece == 1) return Cell{in.x, in.y};
        return Cell{-1, -1};
    };
    CHECK(ghost(sim.step(sim.init_state(0, 0), Action::Wait).first) == Cell{1, 0});
    CHECK(ghost(sim.step(sim.init_state(1, 0), Action::Wait).first) == Cell{1, 0});
    const auto [s3, ev3] = sim.step(sim.init_state(2, 0), Action::Wait);
    CHECK(ghost(s3) == Cell{0, 0});
    REQUIRE(ev3.size() == 1);
    CHECK(ev3[0].kind == EventKind::Blocked);
}

TEST_CASE("random movers draw from the state rng or forced choices") {
    gdl::GameDefinition g;
    g.gamename = "bats";
    g.pieces = {piece("hero", true), piece("bat", false, false, gdl::Behavior::Random)};
    g.levels = {level(5, 5, std::vector<int64_t>(25, 0))};
    g.levels[0].data[12] = 2;
    g.levels[0].data[0] = 1;
    const Simulator sim(g);
    const auto s = sim.init_state(0, 99);
    CHECK(sim.random_mover_count(s) == 1);
    CHECK(sim.step(s, Action::Wait) == sim.step(s, Action::Wait));
    const Cell expect[4] = {{2, 1}, {2, 3}, {1, 2}, {3, 2}};
    for (uint8_t d = 0; d < 4; ++d) {
        auto t = s;
        const uint8_t forced[1] = {d};
        sim.advance(t, Action::Wait, nullptr, forced);
        CHECK(Cell{t.instances[1].x, t.instances[1].y} == expect[d]);
        CHECK(t.rng == s.rng);
    }
}

TEST_CASE("edge-triggered VAR and COUNT fire once per transition") {
    gdl::GameDefinition g;
    g.gamename = "edges";
    g.variables = {{"score", "", 0}, {"n", "", 0}};
    g.pieces = {piece("hero", true), piece("coin")};
    g.rules = {rule("TICK 1", {"ADD n 1"}), rule("VAR n GTE 2", {"SCORE 10"}), rule("COUNT coin EQ 0", {"SCORE 100"})};
    g.levels = {level(2, 1, {1, 2})};
    g.rules.push_back(rule("OVERLAP hero coin", {"DESTROY $2"}));
    const Simulator sim(g);
    auto s = sim.init_state(0, 0);
    sim.advance(s, Action::Wait);  // n=1
    CHECK(s.variables == std::vector<int64_t>{0, 1});
    sim.advance(s, Action::Wait);  // n=2 -> +10
    CHECK(s.variables[0] == 10);
    sim.advance(s, Action::Right);  // n=3, coin destroyed after COUNT evaluated
    CHECK(s.variables[0] == 10);
    sim.advance(s, Action::Wait);  // COUNT coin EQ 0 now true -> +100
    CHECK(s.variables[0] == 110);
    for (int i = 0; i < 5; ++i) sim.advance(s, Action::Wait);
    CHECK(s.variables[0] == 110);
}

TEST_CASE("guards, spawn, transform and destroy-by-name") {
    gdl::GameDefinition g;
    g.gamename = "misc";
    g.variables = {{"haskey", "", 0}};
    g.pieces = {piece("hero", true), piece("key"), piece("door"), piece("coin"), piece("gem")};
    g.rules = {rule("OVERLAP hero key", {"DESTROY $2", "SET haskey 1", "SPAWN coin $1"}),
               rule("OVERLAP hero door", {"DESTROY $2"}, {"VAR haskey GTE 1"}),
               rule("OVERLAP hero coin", {"TRANSFORM $2 gem"}),
               rule("TICK 5", {"DESTROY gem"})};
    // hero, door, key
    g.levels = {level(3, 1, {1, 3, 2})};
    const Simulator sim(g);
    auto s = sim.init_state(0, 0);
    sim.advance(s, Action::Right);  // onto the door without the key: guard fails
    CHECK(s.instances.size() == 3);
    std::vector<TraceEvent> ev;
    sim.advance(s, Action::Right, &ev);  // onto the key
    CHECK(s.variables[0] == 1);
    // key destroyed, coin spawned at hero's cell, coin then transformed to gem by rule 2
    bool spawned = false, transformed = false;
    for (const auto& e : ev) {
        spawned |= e.kind == EventKind::Spawned && e.piece == "coin" && e.from == Cell{2, 0};
        transformed |= e.kind == EventKind::Transformed && e.piece == "coin" && e.piece_to == "gem";
    }
    CHECK(spawned);
    CHECK(transformed);
    sim.advance(s, Action::Left);  // back onto the door with the key
    CHECK(s.instances.size() == 2);  // hero + gem
    sim.advance(s, Action::Wait);
    sim.advance(s, Action::Wait);  // tick 5: gems destroyed
    REQUIRE(s.instances.size() == 1);
    CHECK(s.instances[0].piece == 0);
}

TEST_CASE("bumping a solid instance counts as overlapping it") {
    const Simulator sim(testing::corridor_game({rule("OVERLAP player wall", {"DESTROY $2", "SFX crumble"})},
                                               {level(3, 1, {1, 2, 3})}));
    auto s = sim.init_state(0, 0);
    std::vector<TraceEvent> ev;
    sim.advance(s, Action::Right, &ev);
    REQUIRE(kinds(ev) == std::vector<EventKind>{EventKind::Blocked, EventKind::RuleFired, EventKind::Destroyed,
                                                EventKind::Sfx});
    CHECK(ev[1].bound == std::vector<int32_t>{0, 1});
    CHECK(s.instances[0].x == 0);
    sim.advance(s, Action::Right);
    CHECK(s.instances[0].x == 1);

    // off-grid blocks have no partner
    const Simulator edge(testing::corridor_game({rule("OVERLAP player wall", {"WIN"})}, {level(2, 1, {2, 1})}));
    auto t = edge.init_state(0, 0);
    edge.advance(t, Action::Right);
    CHECK(t.status == Status::Running);

    // a solid chaser that bumps into nothing and then shares the cell counts once
    gdl::GameDefinition g;
    g.gamename = "golem";
    g.variables = {{"score", "", 0}};
    g.pieces = {piece("hero", true), piece("golem", false, true, gdl::Behavior::Chase)};
    g.rules = {rule("OVERLAP hero golem", {"SCORE 1"})};
    g.levels = {level(2, 1, {1, 2})};
    const Simulator chase(g);
    auto c = chase.init_state(0, 0);
    chase.advance(c, Action::Right);  // hero bumps the golem, golem steps onto the hero
    CHECK(c.instances[1].x == 0);
    CHECK(c.variables[0] == 1);
}

TEST_CASE("a destroyed instance no longer matches later pairs") {
    gdl::GameDefinition g;
    g.gamename = "pairs";
    g.variables = {{"score", "", 0}};
    g.pieces = {piece("hero", true), piece("enemy")};
    g.rules = {rule("OVERLAP hero enemy", {"DESTROY $1", "SCORE 1"})};
    // two heroes share a cell with one enemy after moving right
    g.levels = {level(2, 2, {1, 2, 1, 0})};
    g.levels[0].data = {1, 2, 0, 0};
    const Simulator sim(g);
    auto s = sim.init_state(0, 0);
    sim.advance(s, Action::Right);
    CHECK(s.variables[0] == 1);

    // one hero, two enemies in the same cell: hero dies on the first pair
    g.levels = {level(2, 1, {1, 2})};
    g.rules.push_back(rule("OVERLAP enemy enemy", {"SCORE 5"}));
    const Simulator sim2(g);
    auto t = sim2.init_state(0, 0);
    sim2.advance(t, Action::Right);
    CHECK(t.variables[0] == 1);
}

TEST_CASE("a win ends the step and holds with one surviving avatar") {
    const Simulator sim(testing::bvf());
    auto g = testing::bvf();
    // two adventurers; the lower one walks into a trap while the upper one exits
    g.levels = {level(3, 2, {1, 0, 2, 1, 0, 3})};
    const Simulator two(g);
    auto s = two.init_state(0, 0);
    std::vector<TraceEvent> ev;
    two.advance(s, Action::Right, &ev);
    two.advance(s, Action::Right, &ev);
    CHECK(s.status == Status::Won);
    CHECK(ev.back().kind == EventKind::StatusChanged);
    CHECK(ev.back().status == Status::Won);
    CHECK(legal_actions(s).empty());
}

TEST_CASE("state_hash ignores tick and sees occupancy") {
    const Simulator sim(bvf_on(level(2, 1, {1, 4})));
    const auto s = sim.init_state(0, 1);
    auto later = s;
    later.tick = 17;
    later.rng = Rng(5);
    CHECK(sim.state_hash(s) == sim.state_hash(later));
    const auto next = sim.step(s, Action::Right).first;
    CHECK(sim.state_hash(next) != sim.state_hash(s));
}

TEST_CASE("state_hash has no collisions over random play") {
    const Simulator sim(busy_game());
    std::unordered_map<uint64_t, Occupancy> seen;
    Rng pick(4242);
    int samples = 0, collisions = 0;
    for (uint64_t episode = 0; samples < 10000; ++episode) {
        auto s = sim.init_state(0, episode);
        while (!is_terminal(s.status) && samples < 10000) {
            sim.advance(s, kAllActions[pick.below(5)]);
            ++samples;
            const auto occ = occupancy(sim, s);
            auto [it, inserted] = seen.emplace(sim.state_hash(s), occ);
            if (!inserted && !(it->second == occ)) ++collisions;
        }
    }
    CHECK(samples == 10000);
    CHECK(seen.size() > 100);
    CHECK(collisions == 0);
}

TEST_CASE("determinism and trace conservation over random play") {
    const Simulator sim(busy_game());
    Rng pick(7);
    for (uint64_t seed = 0; seed < 20; ++seed) {
        auto a = sim.init_state(0, seed), b = a;
        std::vector<TraceEvent> ea, eb;
        while (!is_terminal(a.status)) {
            const Action act = kAllActions[pick.below(5)];
            const auto before = a;
            std::vector<TraceEvent> step_events;
            sim.advance(a, act, &step_events);
            sim.advance(b, act, &eb);
            ea.insert(ea.end(), step_events.begin(), step_events.end());

            // instance count changes only through Destroyed/Spawned; variables only through VarChanged
            int64_t delta = 0;
            auto vars = before.variables;
            for (const auto& e : step_events) {
                if (e.kind == EventKind::Destroyed) --delta;
                if (e.kind == EventKind::Spawned) ++delta;
                if (e.kind == EventKind::VarChanged) {
                    const auto idx = *sim.definition().variable_index(e.name);
                    CHECK(vars[idx] == e.old_value);
                    vars[idx] = e.new_value;
                }
            }
            CHECK(static_cast<int64_t>(a.instances.size()) == static_cast<int64_t>(before.instances.size()) + delta);
            CHECK(vars == a.variables);
            for (const auto& in : a.instances) {
                CHECK(in.x >= 0);
                CHECK(in.x < a.width);
                CHECK(in.y >= 0);
                CHECK(in.y < a.height);
            }
        }
        CHECK(a == b);
        CHECK(ea == eb);
        CHECK(a.tick <= sim.definition().tick_cap);
    }
}

TEST_CASE("trace files verify and reject tampering") {
    const Simulator sim(busy_game());
    std::vector<Action> actions;
    Rng pick(3);
    for (int i = 0; i < 50; ++i) actions.push_back(kAllActions[pick.below(5)]);
    const auto rec = record(sim, 0, 77, actions);
    const auto text = render_trace(rec.header, rec.events);
    CHECK(text == render_trace(record(sim, 0, 77, actions).header, record(sim, 0, 77, actions).events));

    const auto ok = verify_trace(sim, text);
    CHECK(ok.ok);
    CHECK(ok.final_digest == rec.header.final_digest);

    const auto parsed = parse_trace(text);
    CHECK(parsed.header == rec.header);
    REQUIRE(parsed.event_lines.size() == rec.events.size());
    for (size_t i = 0; i < rec.events.size(); ++i)
        CHECK(event_from_json(nlohmann::json::parse(parsed.event_lines[i])) == rec.events[i]);

    auto tampered = text;
    const auto pos = tampered.find("\"seed\":77");
    REQUIRE(pos != std::string::npos);
    tampered.replace(pos, 9, "\"seed\":78");
    CHECK_FALSE(verify_trace(sim, tampered).ok);

    auto other = busy_game();
    other.gamename = "different";
    const auto mismatch = verify_trace(Simulator(other), text);
    CHECK_FALSE(mismatch.ok);
    CHECK(mismatch.message.find("definition digest mismatch") != std::string::npos);

    // A hand-written header without events fails on event count, not parsing.
    auto header_only = text.substr(0, text.find('\n') + 1);
    const auto v = verify_trace(sim, header_only);
    CHECK_FALSE(v.ok);
    CHECK(v.message.find("event count") != std::string::npos);
}
