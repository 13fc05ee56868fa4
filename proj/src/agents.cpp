#include "forge/agents.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace forge::agents {

using engine::EventKind;
using engine::kAllActions;

namespace {

class EpisodeRecorder {
public:
    EpisodeRecorder(const Simulator& sim, bool keep_events) : sim_(sim), keep_(keep_events) {}

    void visit(const GameState& s) {
        const uint64_t h = sim_.state_hash(s);
        if (seen_.insert(h).second) trace_.visited_hashes.push_back(h);
    }

    void step(GameState& s, Action a) {
        scratch_.clear();
        sim_.advance(s, a, &scratch_);
        trace_.actions.push_back(a);
        for (const auto& e : scratch_)
            if (e.kind == EventKind::RuleFired) trace_.rules_fired.insert(e.rule);
        if (keep_) trace_.events.insert(trace_.events.end(), scratch_.begin(), scratch_.end());
        visit(s);
    }

    Playtrace finish(const GameState& s) {
        trace_.outcome = s.status;
        trace_.ticks = s.tick;
        trace_.unique_states = static_cast<int64_t>(trace_.visited_hashes.size());
        return std::move(trace_);
    }

private:
    const Simulator& sim_;
    bool keep_;
    Playtrace trace_;
    std::unordered_set<uint64_t> seen_;
    std::vector<TraceEvent> scratch_;
};

double terminal_reward(Status s, const MctsParams& p) {
    switch (s) {
        case Status::Won: return p.win_reward;
        case Status::Lost: return p.loss_reward;
        case Status::Timeout: return p.timeout_reward;
        case Status::Running: return 0.0;
    }
    return 0.0;
}

struct Node {
    GameState state;
    int32_t parent = -1;
    uint8_t untried = 0;  // next index into kAllActions to expand
    std::array<int32_t, 5> child{-1, -1, -1, -1, -1};
    int64_t visits = 0;
    double total = 0.0;
};

}  // namespace

nlohmann::json params_to_json(const MctsParams& p) {
    return {{"iterations", p.iterations},       {"exploration_c", p.exploration_c},
            {"rollout_depth", p.rollout_depth}, {"novelty_bonus", p.novelty_bonus},
            {"win_reward", p.win_reward},       {"loss_reward", p.loss_reward},
            {"timeout_reward", p.timeout_reward}};
}

MctsParams params_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("MCTS params must be an object");
    MctsParams p;
    try {
        p.iterations = j.value("iterations", p.iterations);
        p.exploration_c = j.value("exploration_c", p.exploration_c);
        p.rollout_depth = j.value("rollout_depth", p.rollout_depth);
        p.novelty_bonus = j.value("novelty_bonus", p.novelty_bonus);
        p.win_reward = j.value("win_reward", p.win_reward);
        p.loss_reward = j.value("loss_reward", p.loss_reward);
        p.timeout_reward = j.value("timeout_reward", p.timeout_reward);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("bad MCTS params: ") + e.what());
    }
    if (p.iterations < 1) throw std::invalid_argument("iterations must be at least 1");
    if (p.rollout_depth < 1) throw std::invalid_argument("rollout_depth must be at least 1");
    if (p.novelty_bonus < 0) throw std::invalid_argument("novelty_bonus must be nonnegative");
    return p;
}

double rollout_reward(Status status, int64_t new_hashes, const MctsParams& p) {
    return terminal_reward(status, p) + p.novelty_bonus * static_cast<double>(new_hashes);
}

Playtrace random_episode(const Simulator& sim, size_t level, uint64_t seed, bool keep_events) {
    GameState s = sim.init_state(level, seed);
    Rng pick(derive_seed(seed, 1));
    EpisodeRecorder rec(sim, keep_events);
    rec.visit(s);
    while (!engine::is_terminal(s.status)) rec.step(s, kAllActions[pick.below(kAllActions.size())]);
    return rec.finish(s);
}

// ---- MCTS -------------------------------------------------------------------

MctsSearch::MctsSearch(const Simulator& sim, MctsParams params, uint64_t seed)
    : sim_(sim), p_(params), rng_(derive_seed(seed, 2)) {
    if (p_.iterations < 1 || p_.rollout_depth < 1 || p_.novelty_bonus < 0)
        throw std::invalid_argument("invalid MCTS params");
}

Action MctsSearch::search(const GameState& root_state) {
    if (engine::is_terminal(root_state.status)) throw TerminalStateSearch();
    seen_.insert(sim_.state_hash(root_state));

    std::vector<Node> tree;
    tree.reserve(static_cast<size_t>(p_.iterations) + 1);
    tree.push_back(Node{root_state});
    GameState scratch;

    for (int it = 0; it < p_.iterations; ++it) {
        // selection
        int32_t n = 0;
        while (!engine::is_terminal(tree[static_cast<size_t>(n)].state.status) &&
               tree[static_cast<size_t>(n)].untried == kAllActions.size()) {
            const Node& node = tree[static_cast<size_t>(n)];
            const double log_n = std::log(static_cast<double>(node.visits));
            int32_t best = -1;
            double best_value = 0;
            for (int32_t c : node.child) {
                const Node& ch = tree[static_cast<size_t>(c)];
                const double v = ch.total / static_cast<double>(ch.visits) +
                                 p_.exploration_c * std::sqrt(log_n / static_cast<double>(ch.visits));
                if (best < 0 || v > best_value) {
                    best = c;
                    best_value = v;
                }
            }
            n = best;
        }

        // expansion
        int64_t fresh = 0;
        if (!engine::is_terminal(tree[static_cast<size_t>(n)].state.status)) {
            Node child{tree[static_cast<size_t>(n)].state};
            const uint8_t k = tree[static_cast<size_t>(n)].untried++;
            sim_.advance(child.state, kAllActions[k]);
            child.parent = n;
            if (seen_.insert(sim_.state_hash(child.state)).second) ++fresh;
            const auto id = static_cast<int32_t>(tree.size());
            tree[static_cast<size_t>(n)].child[k] = id;
            tree.push_back(std::move(child));
            n = id;
        }

        // rollout
        scratch = tree[static_cast<size_t>(n)].state;
        for (int d = 0; d < p_.rollout_depth && !engine::is_terminal(scratch.status); ++d) {
            sim_.advance(scratch, kAllActions[rng_.below(kAllActions.size())]);
            if (seen_.insert(sim_.state_hash(scratch)).second) ++fresh;
        }
        const double reward = rollout_reward(scratch.status, fresh, p_);

        // backpropagation
        for (int32_t m = n; m >= 0; m = tree[static_cast<size_t>(m)].parent) {
            tree[static_cast<size_t>(m)].visits += 1;
            tree[static_cast<size_t>(m)].total += reward;
        }
    }

    const Node& root = tree[0];
    size_t best = 0;
    for (size_t k = 0; k < kAllActions.size(); ++k) {
        last_visits_[k] = root.child[k] < 0 ? 0 : tree[static_cast<size_t>(root.child[k])].visits;
        if (last_visits_[k] > last_visits_[best]) best = k;
    }
    return kAllActions[best];
}

Action mcts_search(const Simulator& sim, const GameState& s, const MctsParams& p, uint64_t seed) {
    MctsSearch search(sim, p, seed);
    return search.search(s);
}

Playtrace mcts_episode(const Simulator& sim, size_t level, const MctsParams& p, uint64_t seed, bool keep_events) {
    GameState s = sim.init_state(level, seed);
    MctsSearch search(sim, p, seed);
    EpisodeRecorder rec(sim, keep_events);
    rec.visit(s);
    while (!engine::is_terminal(s.status)) rec.step(s, search.search(s));
    return rec.finish(s);
}

// ---- exhaustive solver ------------------------------------------------------

bool ReachabilityReport::cell_reachable(Cell c) const {
    for (const auto& cells : reachable_cells)
        if (cells.count(c)) return true;
    return false;
}

ReachabilityReport exhaustive_solve(const Simulator& sim, size_t level, size_t state_cap) {
    if (level >= sim.definition().levels.size())
        throw engine::LevelIndexOutOfRange("level " + std::to_string(level) + " out of range");
    return exhaustive_solve(sim, sim.definition().levels[level], state_cap);
}

ReachabilityReport exhaustive_solve(const Simulator& sim, const gdl::LevelDef& level, size_t state_cap) {
    struct SearchNode {
        GameState state;
        int32_t parent;
        Action action;
    };

    ReachabilityReport rep;
    rep.reachable_cells.resize(sim.definition().pieces.size());
    const int64_t period = sim.tick_period_lcm();

    auto key_of = [&](const GameState& s) {
        std::string k = sim.structural_key(s);
        if (period > 0) {
            const int64_t residue = s.tick % period;
            k.append(reinterpret_cast<const char*>(&residue), sizeof residue);
        }
        return k;
    };
    auto note = [&](const GameState& s) {
        rep.reachable_hashes.insert(sim.state_hash(s));
        for (const auto& in : s.instances)
            if (sim.is_controlled(in.piece)) rep.reachable_cells[static_cast<size_t>(in.piece)].insert({in.x, in.y});
    };
    auto path_to = [](const std::vector<SearchNode>& nodes, int32_t i) {
        std::vector<Action> path;
        for (; nodes[static_cast<size_t>(i)].parent >= 0; i = nodes[static_cast<size_t>(i)].parent)
            path.push_back(nodes[static_cast<size_t>(i)].action);
        std::reverse(path.begin(), path.end());
        return path;
    };

    std::vector<SearchNode> nodes;
    std::unordered_set<std::string> keys;
    nodes.push_back({sim.init_state(level, 0), -1, Action::Wait});
    keys.insert(key_of(nodes[0].state));
    note(nodes[0].state);

    std::unordered_map<std::string, size_t> controlled;
    for (size_t p = 0; p < sim.definition().pieces.size(); ++p)
        if (sim.definition().pieces[p].controlled) controlled.emplace(sim.definition().pieces[p].name, p);

    std::vector<uint8_t> forced;
    std::vector<TraceEvent> events;
    for (size_t i = 0; i < nodes.size() && !rep.truncated; ++i) {
        if (engine::is_terminal(nodes[i].state.status)) continue;
        const int movers = sim.random_mover_count(nodes[i].state);
        if (2 * movers >= 63 || (uint64_t{1} << (2 * movers)) > state_cap) {
            rep.truncated = true;
            break;
        }
        const uint64_t outcomes = uint64_t{1} << (2 * movers);
        forced.assign(static_cast<size_t>(movers), 0);
        for (Action a : kAllActions) {
            for (uint64_t o = 0; o < outcomes && !rep.truncated; ++o) {
                for (int m = 0; m < movers; ++m) forced[static_cast<size_t>(m)] = static_cast<uint8_t>((o >> (2 * m)) & 3);
                GameState next = nodes[i].state;
                events.clear();
                sim.advance(next, a, &events, forced);
                for (const auto& e : events)
                    if (e.kind == EventKind::Moved)
                        if (const auto it = controlled.find(e.piece); it != controlled.end())
                            rep.reachable_cells[it->second].insert(e.to);
                if (!keys.insert(key_of(next)).second) continue;
                if (nodes.size() >= state_cap) {
                    rep.truncated = true;
                    break;
                }
                note(next);
                const bool won = next.status == Status::Won;
                nodes.push_back({std::move(next), static_cast<int32_t>(i), a});
                if (won && !rep.winnable) {
                    rep.winnable = true;
                    rep.shortest_win = path_to(nodes, static_cast<int32_t>(nodes.size() - 1));
                }
            }
            if (rep.truncated) break;
        }
    }
    rep.states = nodes.size();
    return rep;
}

// ---- coverage ---------------------------------------------------------------

CoverageSummary coverage_metrics(const std::vector<Playtrace>& traces, const gdl::GameDefinition& g) {
    if (traces.empty()) throw EmptyInput();
    CoverageSummary out;
    int64_t terminating = 0;
    for (const auto& t : traces) {
        out.rules_fired.insert(t.rules_fired.begin(), t.rules_fired.end());
        if (t.outcome == Status::Won || t.outcome == Status::Lost) ++terminating;
        out.won_any = out.won_any || t.outcome == Status::Won;
    }
    out.rules_fired_fraction =
        g.rules.empty() ? 1.0 : static_cast<double>(out.rules_fired.size()) / static_cast<double>(g.rules.size());
    out.terminating_fraction = static_cast<double>(terminating) / static_cast<double>(traces.size());
    return out;
}

}  // namespace forge::agents
