#include <doctest.h>

#include <algorithm>
#include <map>
#include <queue>
#include <set>
#include <tuple>

#include "forge/agents.hpp"
#include "support.hpp"

using namespace forge;
using namespace forge::agents;
using engine::kAllActions;
using testing::level;
using testing::piece;
using testing::rule;

namespace {

// Two-token oracle for the bundled 5x5 level. Both adventurers move in
// unison and stop at the border; enemies are harmless trophies, the exit
// wins, a trap kills the token standing on it, and losing both adventurers
// loses. Mirrors the rule order of the bundled file with no engine code.
struct TwoToken {
    static constexpr int kDead = -1;
    int a, b;   // cell index or kDead
    int alive;  // bitmask over the three enemies
    int status; // 0 running, 1 won, 2 lost
    auto operator<=>(const TwoToken&) const = default;
};

struct OracleResult {
    std::set<int> cells;
    std::set<std::tuple<std::vector<int>, int, int>> digests;  // (sorted live cells, enemy mask, status)
    int shortest = -1;
};

OracleResult two_token_oracle() {
    const int enemy_cells[3] = {1, 2, 22};
    const std::set<int> traps = {4, 24};
    const int exit_cell = 9;
    const int dx[4] = {0, 0, -1, 1}, dy[4] = {-1, 1, 0, 0};

    OracleResult out;
    auto note = [&](const TwoToken& t) {
        std::vector<int> live;
        for (int c : {t.a, t.b})
            if (c != TwoToken::kDead) {
                live.push_back(c);
                out.cells.insert(c);
            }
        std::sort(live.begin(), live.end());
        out.digests.insert({live, t.alive, t.status});
    };

    std::map<TwoToken, int> depth;
    std::queue<TwoToken> q;
    const TwoToken start{5, 15, 7, 0};
    depth[start] = 0;
    q.push(start);
    note(start);
    while (!q.empty()) {
        const TwoToken t = q.front();
        q.pop();
        if (t.status != 0) continue;
        for (int act = 0; act < 5; ++act) {
            TwoToken n = t;
            for (int* tok : {&n.a, &n.b}) {
                if (*tok == TwoToken::kDead || act == 4) continue;
                const int x = *tok % 5 + dx[act], y = *tok / 5 + dy[act];
                if (x >= 0 && x < 5 && y >= 0 && y < 5) *tok = y * 5 + x;
            }
            for (int tok : {n.a, n.b})
                if (tok != TwoToken::kDead) out.cells.insert(tok);
            for (int* tok : {&n.a, &n.b})
                for (int e = 0; e < 3; ++e)
                    if (*tok == enemy_cells[e]) n.alive &= ~(1 << e);
            if (n.a == exit_cell || n.b == exit_cell) {
                n.status = 1;
            } else {
                for (int* tok : {&n.a, &n.b})
                    if (traps.count(*tok)) *tok = TwoToken::kDead;
                if (n.a == TwoToken::kDead && n.b == TwoToken::kDead) n.status = 2;
            }
            if (depth.count(n)) continue;
            depth[n] = depth[t] + 1;
            if (n.status == 1 && out.shortest < 0) out.shortest = depth[n];
            note(n);
            q.push(n);
        }
    }
    return out;
}

gdl::GameDefinition wandering_game() {
    gdl::GameDefinition g;
    g.gamename = "wander";
    g.variables = {{"score", "", 0}};
    g.pieces = {piece("hero", true), piece("wall", false, true), piece("coin"),
                piece("bat", false, false, gdl::Behavior::Random)};
    g.rules = {rule("OVERLAP hero coin", {"DESTROY $2", "SCORE 1"}), rule("OVERLAP bat hero", {"DESTROY $2"}),
               rule("COUNT hero EQ 0", {"LOSE"}), rule("TICK 4", {"ADD score 0"})};
    g.levels = {level(4, 3, {1, 0, 2, 3,  //
                             0, 2, 0, 0,  //
                             3, 0, 4, 0})};
    g.tick_cap = 40;
    return g;
}

MctsParams small_params(int iterations) {
    MctsParams p;
    p.iterations = iterations;
    return p;
}

}  // namespace

TEST_CASE("random episodes") {
    SUBCASE("a forced loss ends after one step") {
        const Simulator sim(testing::corridor_game({rule("TICK 1", {"LOSE"})}, {level(3, 1, {1, 0, 3})}));
        for (uint64_t seed = 0; seed < 10; ++seed) {
            const auto t = random_episode(sim, 0, seed);
            CHECK(t.outcome == Status::Lost);
            CHECK(t.ticks == 1);
            CHECK(t.actions.size() == 1);
            CHECK(t.rules_fired == std::set<int32_t>{0});
        }
    }
    SUBCASE("an empty ruleset times out at the cap") {
        auto g = testing::corridor_game({}, {level(3, 3, {0, 0, 0, 0, 1, 0, 0, 0, 0})});
        g.tick_cap = 30;
        const auto t = random_episode(Simulator(g), 0, 5);
        CHECK(t.outcome == Status::Timeout);
        CHECK(t.ticks == 30);
        CHECK(t.unique_states <= 9);
    }
    SUBCASE("same seed gives the same playtrace") {
        const Simulator sim(wandering_game());
        const auto a = random_episode(sim, 0, 9, true), b = random_episode(sim, 0, 9, true);
        CHECK(a.actions == b.actions);
        CHECK(a.events == b.events);
        CHECK(a.outcome == b.outcome);
        CHECK(a.visited_hashes == b.visited_hashes);
        CHECK(a.rules_fired == b.rules_fired);
    }
}

TEST_CASE("playtrace invariants hold over many seeds") {
    const Simulator sim(wandering_game());
    for (uint64_t seed = 0; seed < 50; ++seed) {
        const auto t = random_episode(sim, 0, seed);
        CHECK(t.ticks <= sim.definition().tick_cap);
        CHECK(t.ticks == static_cast<int64_t>(t.actions.size()));
        for (int32_t r : t.rules_fired) {
            CHECK(r >= 0);
            CHECK(r < static_cast<int32_t>(sim.definition().rules.size()));
        }
        CHECK(t.unique_states == static_cast<int64_t>(t.visited_hashes.size()));
    }
}

TEST_CASE("exhaustive solver on tiny boards") {
    const Simulator open(testing::corridor_game({rule("OVERLAP player exit", {"WIN"})}, {level(3, 1, {1, 0, 3})}));
    const auto rep = exhaustive_solve(open, 0);
    CHECK(rep.winnable);
    CHECK_FALSE(rep.truncated);
    REQUIRE(rep.shortest_win.has_value());
    CHECK(*rep.shortest_win == std::vector<Action>{Action::Right, Action::Right});
    CHECK(rep.cell_reachable({2, 0}));

    const Simulator walled(testing::corridor_game({rule("OVERLAP player exit", {"WIN"})}, {level(3, 1, {1, 2, 3})}));
    const auto rep2 = exhaustive_solve(walled, 0);
    CHECK_FALSE(rep2.winnable);
    CHECK_FALSE(rep2.shortest_win.has_value());
    CHECK_FALSE(rep2.truncated);
    CHECK_FALSE(rep2.cell_reachable({2, 0}));
    CHECK(rep2.reachable_cells[0] == std::set<Cell>{{0, 0}});
}

TEST_CASE("exhaustive solver on the bundled level matches a two-token oracle") {
    const Simulator sim(testing::bvf());
    const auto rep = exhaustive_solve(sim, 0);
    const auto oracle = two_token_oracle();
    CHECK_FALSE(rep.truncated);
    CHECK(rep.winnable);
    REQUIRE(rep.shortest_win.has_value());
    CHECK(static_cast<int>(rep.shortest_win->size()) == oracle.shortest);
    CHECK(oracle.shortest == 4);

    std::set<int> cells;
    for (const auto& c : rep.reachable_cells[0]) cells.insert(c.y * 5 + c.x);
    CHECK(cells == oracle.cells);
    // Every cell: a token stepping onto a trap counts as having entered it.
    CHECK(cells.size() == 25);
    for (size_t p = 1; p < rep.reachable_cells.size(); ++p) CHECK(rep.reachable_cells[p].empty());
    CHECK(rep.reachable_hashes.size() == oracle.digests.size());
}

TEST_CASE("exhaustive solver replays its shortest win") {
    const Simulator sim(testing::adventure());
    const auto rep = exhaustive_solve(sim, 0);
    REQUIRE(rep.winnable);
    auto s = sim.init_state(0, 0);
    for (Action a : *rep.shortest_win) sim.advance(s, a);
    CHECK(s.status == Status::Won);
}

TEST_CASE("exhaustive solver marks truncation") {
    const Simulator sim(wandering_game());
    const auto rep = exhaustive_solve(sim, 0, 50);
    CHECK(rep.truncated);
    CHECK(rep.states <= 50);
}

TEST_CASE("agents never leave the exhaustive reachable set") {
    const Simulator sim(wandering_game());
    const auto rep = exhaustive_solve(sim, 0);
    REQUIRE_FALSE(rep.truncated);
    for (uint64_t seed = 0; seed < 100; ++seed) {
        const auto t = random_episode(sim, 0, seed);
        for (uint64_t h : t.visited_hashes) CHECK(rep.reachable_hashes.count(h) == 1);
        if (t.outcome == Status::Won) CHECK(rep.winnable);
    }
    const auto m = mcts_episode(sim, 0, small_params(100), 3);
    for (uint64_t h : m.visited_hashes) CHECK(rep.reachable_hashes.count(h) == 1);
}

TEST_CASE("no agent wins a level the solver certifies unwinnable") {
    // exit sealed behind walls; nothing destroys walls
    const Simulator sim(testing::corridor_game({rule("OVERLAP player exit", {"WIN"})},
                                               {level(4, 3, {1, 0, 2, 3,  //
                                                             0, 0, 2, 2,  //
                                                             0, 0, 0, 0})}));
    auto g = sim.definition();
    g.tick_cap = 25;
    const Simulator capped(g);
    const auto rep = exhaustive_solve(capped, 0);
    REQUIRE_FALSE(rep.truncated);
    REQUIRE_FALSE(rep.winnable);
    for (uint64_t seed = 0; seed < 30; ++seed) CHECK(random_episode(capped, 0, seed).outcome != Status::Won);
    for (uint64_t seed = 0; seed < 3; ++seed) CHECK(mcts_episode(capped, 0, small_params(200), seed).outcome != Status::Won);
}

TEST_CASE("MCTS picks the one-step win") {
    const Simulator sim(testing::corridor_game({rule("OVERLAP player exit", {"WIN"})}, {level(3, 1, {0, 1, 3})}));
    const auto rep = exhaustive_solve(sim, 0);
    REQUIRE(rep.shortest_win == std::vector<Action>{Action::Right});
    for (uint64_t seed = 0; seed < 5; ++seed) CHECK(mcts_search(sim, sim.init_state(0, seed), small_params(1000), seed) == Action::Right);
}

TEST_CASE("MCTS avoids every losing move") {
    auto g = testing::corridor_game({rule("OVERLAP player exit", {"LOSE"}), rule("TICK 3", {"WIN"})},
                                    {level(3, 3, {0, 3, 0,  //
                                                  3, 1, 3,  //
                                                  0, 3, 0})});
    const Simulator sim(g);
    const auto s = sim.init_state(0, 0);
    // 1-ply enumeration oracle
    std::vector<Action> safe;
    for (Action a : kAllActions)
        if (sim.step(s, a).first.status != Status::Lost) safe.push_back(a);
    REQUIRE(safe == std::vector<Action>{Action::Wait});
    for (uint64_t seed = 0; seed < 5; ++seed) CHECK(mcts_search(sim, s, small_params(1000), seed) == Action::Wait);
}

TEST_CASE("MCTS with no reward signal returns the first action") {
    auto p = small_params(1000);
    p.novelty_bonus = 0;
    const Simulator sim(testing::corridor_game({}, {level(3, 3, {0, 0, 0, 0, 1, 0, 0, 0, 0})}));
    MctsSearch search(sim, p, 1);
    CHECK(search.search(sim.init_state(0, 0)) == Action::Up);
    const auto& v = search.last_visits();
    CHECK(*std::max_element(v.begin(), v.end()) == v[0]);
}

TEST_CASE("MCTS is deterministic and refuses terminal states") {
    const Simulator sim(wandering_game());
    const auto s = sim.init_state(0, 4);
    MctsSearch a(sim, small_params(300), 8), b(sim, small_params(300), 8);
    CHECK(a.search(s) == b.search(s));
    CHECK(a.last_visits() == b.last_visits());
    CHECK(a.seen_count() == b.seen_count());

    auto done = s;
    done.status = Status::Won;
    CHECK_THROWS_AS(a.search(done), TerminalStateSearch);
}

TEST_CASE("novelty reward grows with each new hash") {
    MctsParams p;
    for (double bonus : {0.001, 0.01, 0.5}) {
        p.novelty_bonus = bonus;
        for (int64_t k = 0; k < 100; ++k)
            for (Status st : {Status::Running, Status::Lost, Status::Timeout, Status::Won})
                CHECK(rollout_reward(st, k + 1, p) > rollout_reward(st, k, p));
    }
    p.novelty_bonus = 0.01;
    CHECK(rollout_reward(Status::Won, 0, p) == 1.0);
    CHECK(rollout_reward(Status::Lost, 3, p) == doctest::Approx(0.03));
}

TEST_CASE("MCTS episode on an empty ruleset") {
    auto g = testing::corridor_game({}, {level(2, 2, {1, 0, 0, 0})});
    g.tick_cap = 15;
    const auto t = mcts_episode(Simulator(g), 0, small_params(50), 2);
    CHECK(t.outcome == Status::Timeout);
    CHECK(t.unique_states <= 4);
}

TEST_CASE("MCTS params parse with defaults") {
    const auto d = params_from_json(nlohmann::json::object());
    CHECK(d == MctsParams{});
    CHECK(d.iterations == 5000);
    CHECK(d.exploration_c == 1.41);
    CHECK(d.rollout_depth == 40);
    CHECK(d.novelty_bonus == 0.01);
    CHECK(params_from_json(params_to_json(small_params(7))) == small_params(7));
    CHECK_THROWS_AS(params_from_json({{"iterations", 0}}), std::invalid_argument);
    CHECK_THROWS_AS(params_from_json({{"novelty_bonus", -1}}), std::invalid_argument);
    CHECK_THROWS_AS(params_from_json({{"iterations", "many"}}), std::invalid_argument);
}

TEST_CASE("coverage metrics") {
    gdl::GameDefinition two_rules;
    two_rules.rules.resize(2);
    Playtrace a, b;
    a.rules_fired = {0};
    a.outcome = Status::Timeout;
    b.outcome = Status::Timeout;
    auto c = coverage_metrics({a, b}, two_rules);
    CHECK(c.rules_fired_fraction == 0.5);
    CHECK(c.terminating_fraction == 0.0);
    CHECK_FALSE(c.won_any);

    b.rules_fired = {1};
    b.outcome = Status::Won;
    a.outcome = Status::Lost;
    c = coverage_metrics({a, b}, two_rules);
    CHECK(c.rules_fired_fraction == 1.0);
    CHECK(c.terminating_fraction == 1.0);
    CHECK(c.won_any);

    const gdl::GameDefinition no_rules;
    CHECK(coverage_metrics({a}, no_rules).rules_fired_fraction == 1.0);
    CHECK_THROWS_AS(coverage_metrics({}, no_rules), EmptyInput);
}
