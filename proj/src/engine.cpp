#include "forge/engine.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>

#include "overloaded.hpp"

namespace forge::engine {

using detail::CompiledCommand;
using detail::CompiledRule;
using forge::detail::overloaded;

namespace {

constexpr int kDx[4] = {0, 0, -1, 1};
constexpr int kDy[4] = {-1, 1, 0, 0};

size_t find_instance(const GameState& s, int32_t id) {
    auto it = std::lower_bound(s.instances.begin(), s.instances.end(), id,
                               [](const Instance& in, int32_t v) { return in.id < v; });
    if (it == s.instances.end() || it->id != id) return s.instances.size();
    return static_cast<size_t>(it - s.instances.begin());
}

void put_bytes(std::string& out, const void* p, size_t n) { out.append(static_cast<const char*>(p), n); }

template <class T>
void put(std::string& out, T v) {
    put_bytes(out, &v, sizeof v);
}

}  // namespace

std::string_view to_string(Action a) {
    switch (a) {
        case Action::Up: return "Up";
        case Action::Down: return "Down";
        case Action::Left: return "Left";
        case Action::Right: return "Right";
        case Action::Wait: return "Wait";
    }
    return "?";
}

Action action_from_string(std::string_view s) {
    for (Action a : kAllActions)
        if (to_string(a) == s) return a;
    throw EngineError("unknown action '" + std::string(s) + "'");
}

std::string_view to_string(Status s) {
    switch (s) {
        case Status::Running: return "Running";
        case Status::Won: return "Won";
        case Status::Lost: return "Lost";
        case Status::Timeout: return "Timeout";
    }
    return "?";
}

std::string_view to_string(EventKind k) {
    switch (k) {
        case EventKind::Moved: return "Moved";
        case EventKind::Blocked: return "Blocked";
        case EventKind::RuleFired: return "RuleFired";
        case EventKind::Destroyed: return "Destroyed";
        case EventKind::Spawned: return "Spawned";
        case EventKind::Transformed: return "Transformed";
        case EventKind::VarChanged: return "VarChanged";
        case EventKind::Sfx: return "Sfx";
        case EventKind::StatusChanged: return "StatusChanged";
    }
    return "?";
}

std::set<Action> legal_actions(const GameState& s) {
    if (is_terminal(s.status)) return {};
    return {kAllActions.begin(), kAllActions.end()};
}

// ---- compilation ----------------------------------------------------------

Simulator::Simulator(gdl::GameDefinition g) : def_(std::move(g)) {
    const auto report = gdl::validate_game(def_);
    if (!report.empty()) {
        const auto& v = report.front();
        if (v.kind == gdl::ViolationKind::DanglingReference || v.kind == gdl::ViolationKind::DanglingCode)
            throw gdl::DanglingReference(v.detail, v.path);
        throw gdl::SchemaError(v.path, v.detail);
    }

    auto piece = [&](const std::string& n) { return static_cast<int32_t>(*def_.piece_index(n)); };
    auto var = [&](const std::string& n) { return static_cast<int32_t>(*def_.variable_index(n)); };
    if (auto i = def_.variable_index("score")) score_var_ = static_cast<int>(*i);

    int64_t lcm = 0;
    for (const auto& r : def_.rules) {
        CompiledRule cr;
        cr.trigger_text = gdl::format_trigger(r.trigger);
        std::visit(overloaded{
                       [&](const gdl::Overlap& o) {
                           cr.kind = CompiledRule::Kind::Overlap;
                           cr.piece_a = piece(o.first);
                           cr.piece_b = piece(o.second);
                       },
                       [&](const gdl::Tick& t) {
                           cr.kind = CompiledRule::Kind::Tick;
                           cr.value = t.period;
                           lcm = lcm == 0 ? t.period : std::min<int64_t>(std::lcm(lcm, t.period), def_.tick_cap);
                       },
                       [&](const gdl::VarCondition& v) {
                           cr.kind = CompiledRule::Kind::Var;
                           cr.var = var(v.var);
                           cr.cmp = v.cmp;
                           cr.value = v.value;
                       },
                       [&](const gdl::CountCondition& c) {
                           cr.kind = CompiledRule::Kind::Count;
                           cr.piece_a = piece(c.piece);
                           cr.cmp = c.cmp;
                           cr.value = c.value;
                       },
                   },
                   r.trigger);
        for (const auto& gd : r.guards) cr.guards.push_back({var(gd.var), {gd.cmp, gd.value}});
        for (const auto& c : r.code) {
            CompiledCommand cc;
            using Op = CompiledCommand::Op;
            std::visit(overloaded{
                           [&](const gdl::Destroy& d) {
                               if (auto* b = std::get_if<gdl::Binding>(&d.target)) {
                                   cc.op = Op::DestroyBound;
                                   cc.binding = b->index - 1;
                               } else {
                                   cc.op = Op::DestroyPiece;
                                   cc.piece = piece(std::get<std::string>(d.target));
                               }
                           },
                           [&](const gdl::Sfx& s) {
                               cc.op = Op::Sfx;
                               cc.text = s.name;
                           },
                           [&](const gdl::Score& s) {
                               cc.op = Op::AddVar;
                               cc.var = score_var_;
                               cc.value = s.amount;
                           },
                           [&](const gdl::SetVar& s) {
                               cc.op = Op::SetVar;
                               cc.var = var(s.var);
                               cc.value = s.value;
                           },
                           [&](const gdl::AddVar& a) {
                               cc.op = Op::AddVar;
                               cc.var = var(a.var);
                               cc.value = a.delta;
                           },
                           [&](const gdl::Win&) { cc.op = Op::Win; },
                           [&](const gdl::Lose&) { cc.op = Op::Lose; },
                           [&](const gdl::Spawn& s) {
                               cc.op = Op::Spawn;
                               cc.piece = piece(s.piece);
                               cc.binding = s.at.index - 1;
                           },
                           [&](const gdl::Transform& t) {
                               cc.op = Op::Transform;
                               cc.piece = piece(t.piece);
                               cc.binding = t.target.index - 1;
                           },
                       },
                       c);
            cr.code.push_back(std::move(cc));
        }
        rules_.push_back(std::move(cr));
    }
    tick_period_lcm_ = lcm;

    std::vector<int32_t> order(def_.pieces.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
        return def_.pieces[static_cast<size_t>(a)].name < def_.pieces[static_cast<size_t>(b)].name;
    });
    name_rank_.assign(def_.pieces.size(), 0);
    for (size_t r = 0; r < order.size(); ++r) name_rank_[static_cast<size_t>(order[r])] = static_cast<int32_t>(r);
    rank_piece_ = order;
}

std::vector<int32_t> Simulator::controlled_pieces() const {
    std::vector<int32_t> out;
    for (size_t i = 0; i < def_.pieces.size(); ++i)
        if (def_.pieces[i].controlled) out.push_back(static_cast<int32_t>(i));
    return out;
}

// ---- state ----------------------------------------------------------------

GameState Simulator::init_state(size_t level_index, uint64_t seed) const {
    if (level_index >= def_.levels.size())
        throw LevelIndexOutOfRange("level " + std::to_string(level_index) + " out of range (" +
                                   std::to_string(def_.levels.size()) + " levels)");
    return init_state(def_.levels[level_index], seed);
}

GameState Simulator::init_state(const gdl::LevelDef& level, uint64_t seed) const {
    if (level.width < 1 || level.height < 1 || static_cast<int64_t>(level.data.size()) != level.width * level.height)
        throw EngineError("malformed level");
    GameState s;
    s.width = static_cast<int32_t>(level.width);
    s.height = static_cast<int32_t>(level.height);
    for (int32_t y = 0; y < s.height; ++y)
        for (int32_t x = 0; x < s.width; ++x) {
            const int64_t code = level.at(x, y);
            if (code == 0) continue;
            if (code < 0 || code > static_cast<int64_t>(def_.pieces.size()))
                throw EngineError("level code " + std::to_string(code) + " out of range");
            s.instances.push_back({s.next_id++, static_cast<int32_t>(code - 1), x, y});
        }
    for (const auto& v : def_.variables) s.variables.push_back(v.startvalue);
    s.edge_armed.assign(rules_.size(), 0);
    s.rng = Rng(seed);
    return s;
}

std::pair<GameState, std::vector<TraceEvent>> Simulator::step(const GameState& s, Action a) const {
    std::pair<GameState, std::vector<TraceEvent>> out{s, {}};
    advance(out.first, a, &out.second);
    return out;
}

int Simulator::random_mover_count(const GameState& s) const {
    int n = 0;
    for (const auto& in : s.instances) {
        const auto& p = def_.pieces[static_cast<size_t>(in.piece)];
        if (!p.controlled && p.behavior == gdl::Behavior::Random) ++n;
    }
    return n;
}

bool Simulator::try_move(GameState& s, size_t idx, int dx, int dy, std::vector<TraceEvent>* events,
                         std::vector<detail::Contact>& contacts) const {
    Instance& me = s.instances[idx];
    const int32_t tx = me.x + dx, ty = me.y + dy;
    bool blocked = tx < 0 || ty < 0 || tx >= s.width || ty >= s.height;
    if (!blocked) {
        for (size_t j = 0; j < s.instances.size(); ++j) {
            const auto& o = s.instances[j];
            if (j != idx && o.x == tx && o.y == ty && def_.pieces[static_cast<size_t>(o.piece)].solid) {
                blocked = true;
                contacts.push_back({me.id, o.id, {tx, ty}});
            }
        }
    }
    if (events) {
        TraceEvent e;
        e.tick = s.tick;
        e.kind = blocked ? EventKind::Blocked : EventKind::Moved;
        e.instance = me.id;
        e.piece = piece_name(me.piece);
        e.from = {me.x, me.y};
        e.to = {tx, ty};
        events->push_back(std::move(e));
    }
    if (blocked) return false;
    me.x = tx;
    me.y = ty;
    return true;
}

void Simulator::advance(GameState& s, Action a, std::vector<TraceEvent>* events,
                        std::span<const uint8_t> forced_moves) const {
    if (is_terminal(s.status)) throw SteppingTerminalState();
    thread_local std::vector<detail::Contact> contacts;
    contacts.clear();

    // (1) movement
    if (a != Action::Wait) {
        const int dir = static_cast<int>(a);
        for (size_t i = 0; i < s.instances.size(); ++i)
            if (is_controlled(s.instances[i].piece)) try_move(s, i, kDx[dir], kDy[dir], events, contacts);
    }

    // (2) behaviors
    size_t forced_index = 0;
    for (size_t i = 0; i < s.instances.size(); ++i) {
        const auto& p = def_.pieces[static_cast<size_t>(s.instances[i].piece)];
        if (p.controlled) continue;
        if (p.behavior == gdl::Behavior::Random) {
            int dir;
            if (!forced_moves.empty()) dir = forced_moves[forced_index++] & 3;
            else dir = static_cast<int>(s.rng.below(4));
            try_move(s, i, kDx[dir], kDy[dir], events, contacts);
        } else if (p.behavior == gdl::Behavior::Chase) {
            const Instance& me = s.instances[i];
            int best = -1;
            int best_dist = 0;
            for (size_t j = 0; j < s.instances.size(); ++j) {
                const auto& o = s.instances[j];
                if (!is_controlled(o.piece)) continue;
                const int d = std::abs(o.x - me.x) + std::abs(o.y - me.y);
                if (best < 0 || d < best_dist) {
                    best = static_cast<int>(j);
                    best_dist = d;
                }
            }
            if (best < 0 || best_dist == 0) continue;
            const int dx = s.instances[static_cast<size_t>(best)].x - me.x;
            const int dy = s.instances[static_cast<size_t>(best)].y - me.y;
            if (std::abs(dx) >= std::abs(dy)) try_move(s, i, dx > 0 ? 1 : -1, 0, events, contacts);
            else try_move(s, i, 0, dy > 0 ? 1 : -1, events, contacts);
        }
    }

    // (3) rules
    run_rules(s, events, contacts);

    // (4) tick
    ++s.tick;
    if (s.status == Status::Running && s.tick >= def_.tick_cap) {
        s.status = Status::Timeout;
        if (events) {
            TraceEvent e;
            e.tick = s.tick - 1;
            e.kind = EventKind::StatusChanged;
            e.status = s.status;
            events->push_back(std::move(e));
        }
    }
}

void Simulator::run_rules(GameState& s, std::vector<TraceEvent>* events,
                          const std::vector<detail::Contact>& contacts) const {
    const int64_t step_number = s.tick + 1;
    struct Pair {
        int32_t cell, a, b;
        auto operator<=>(const Pair&) const = default;
    };
    thread_local std::vector<Pair> pairs;

    auto guards_pass = [&](const CompiledRule& r) {
        for (const auto& [var, cond] : r.guards)
            if (!gdl::compare(s.variables[static_cast<size_t>(var)], cond.first, cond.second)) return false;
        return true;
    };

    for (size_t ri = 0; ri < rules_.size(); ++ri) {
        if (s.status != Status::Running) return;
        const CompiledRule& r = rules_[ri];
        switch (r.kind) {
            case CompiledRule::Kind::Overlap: {
                pairs.clear();
                for (const auto& ia : s.instances) {
                    if (ia.piece != r.piece_a) continue;
                    for (const auto& ib : s.instances)
                        if (ib.piece == r.piece_b && ib.id != ia.id && ib.x == ia.x && ib.y == ia.y)
                            pairs.push_back({ia.y * s.width + ia.x, ia.id, ib.id});
                }
                for (const auto& c : contacts) {
                    const size_t ia = find_instance(s, c.mover), ib = find_instance(s, c.blocker);
                    if (ia < s.instances.size() && ib < s.instances.size() && s.instances[ia].piece == r.piece_a &&
                        s.instances[ib].piece == r.piece_b)
                        pairs.push_back({c.at.y * s.width + c.at.x, c.mover, c.blocker});
                }
                std::sort(pairs.begin(), pairs.end());
                // A solid blocker may step onto its mover; keep the first entry per pair.
                for (size_t i = 1; i < pairs.size(); ++i)
                    for (size_t j = 0; j < i; ++j)
                        if (pairs[j].a == pairs[i].a && pairs[j].b == pairs[i].b) {
                            pairs.erase(pairs.begin() + static_cast<std::ptrdiff_t>(i--));
                            break;
                        }
                for (const auto& pr : pairs) {
                    if (s.status != Status::Running) return;
                    const size_t ia = find_instance(s, pr.a), ib = find_instance(s, pr.b);
                    if (ia == s.instances.size() || ib == s.instances.size()) continue;
                    if (s.instances[ia].piece != r.piece_a || s.instances[ib].piece != r.piece_b) continue;
                    if (!guards_pass(r)) continue;
                    const int32_t ids[2] = {pr.a, pr.b};
                    const Cell cells[2] = {{s.instances[ia].x, s.instances[ia].y},
                                           {s.instances[ib].x, s.instances[ib].y}};
                    fire(s, ri, ids, cells, events);
                }
                break;
            }
            case CompiledRule::Kind::Tick:
                if (step_number % r.value == 0 && guards_pass(r)) fire(s, ri, nullptr, nullptr, events);
                break;
            case CompiledRule::Kind::Var:
            case CompiledRule::Kind::Count: {
                int64_t lhs;
                if (r.kind == CompiledRule::Kind::Var) {
                    lhs = s.variables[static_cast<size_t>(r.var)];
                } else {
                    lhs = static_cast<int64_t>(std::count_if(s.instances.begin(), s.instances.end(),
                                                             [&](const Instance& in) { return in.piece == r.piece_a; }));
                }
                const bool holds = gdl::compare(lhs, r.cmp, r.value);
                const bool was = s.edge_armed[ri] != 0;
                s.edge_armed[ri] = holds ? 1 : 0;
                if (holds && !was && guards_pass(r)) fire(s, ri, nullptr, nullptr, events);
                break;
            }
        }
    }
}

void Simulator::fire(GameState& s, size_t rule_index, const int32_t* ids, const Cell* cells,
                     std::vector<TraceEvent>* events) const {
    const CompiledRule& r = rules_[rule_index];
    if (events) {
        TraceEvent e;
        e.tick = s.tick;
        e.kind = EventKind::RuleFired;
        e.rule = static_cast<int32_t>(rule_index);
        e.trigger = r.trigger_text;
        if (ids) e.bound = {ids[0], ids[1]};
        events->push_back(std::move(e));
    }

    auto destroy_at = [&](size_t idx) {
        const Instance in = s.instances[idx];
        s.instances.erase(s.instances.begin() + static_cast<std::ptrdiff_t>(idx));
        if (events) {
            TraceEvent e;
            e.tick = s.tick;
            e.kind = EventKind::Destroyed;
            e.instance = in.id;
            e.piece = piece_name(in.piece);
            e.from = {in.x, in.y};
            events->push_back(std::move(e));
        }
    };
    auto set_var = [&](int32_t var, int64_t value) {
        auto& slot = s.variables[static_cast<size_t>(var)];
        const int64_t old = slot;
        slot = value;
        if (events) {
            TraceEvent e;
            e.tick = s.tick;
            e.kind = EventKind::VarChanged;
            e.name = def_.variables[static_cast<size_t>(var)].name;
            e.old_value = old;
            e.new_value = value;
            events->push_back(std::move(e));
        }
    };
    auto set_status = [&](Status st) {
        s.status = st;
        if (events) {
            TraceEvent e;
            e.tick = s.tick;
            e.kind = EventKind::StatusChanged;
            e.status = st;
            events->push_back(std::move(e));
        }
    };

    using Op = CompiledCommand::Op;
    for (const auto& c : r.code) {
        switch (c.op) {
            case Op::DestroyBound: {
                const size_t idx = find_instance(s, ids[c.binding]);
                if (idx < s.instances.size()) destroy_at(idx);
                break;
            }
            case Op::DestroyPiece:
                for (size_t i = 0; i < s.instances.size();) {
                    if (s.instances[i].piece == c.piece) destroy_at(i);
                    else ++i;
                }
                break;
            case Op::Sfx:
                if (events) {
                    TraceEvent e;
                    e.tick = s.tick;
                    e.kind = EventKind::Sfx;
                    e.name = c.text;
                    events->push_back(std::move(e));
                }
                break;
            case Op::AddVar: set_var(c.var, s.variables[static_cast<size_t>(c.var)] + c.value); break;
            case Op::SetVar: set_var(c.var, c.value); break;
            case Op::Win: set_status(Status::Won); return;
            case Op::Lose: set_status(Status::Lost); return;
            case Op::Spawn: {
                const Cell at = cells[c.binding];
                const int32_t id = s.next_id++;
                s.instances.push_back({id, c.piece, at.x, at.y});
                if (events) {
                    TraceEvent e;
                    e.tick = s.tick;
                    e.kind = EventKind::Spawned;
                    e.instance = id;
                    e.piece = piece_name(c.piece);
                    e.from = at;
                    events->push_back(std::move(e));
                }
                break;
            }
            case Op::Transform: {
                const size_t idx = find_instance(s, ids[c.binding]);
                if (idx == s.instances.size()) break;
                const int32_t old = s.instances[idx].piece;
                s.instances[idx].piece = c.piece;
                if (events) {
                    TraceEvent e;
                    e.tick = s.tick;
                    e.kind = EventKind::Transformed;
                    e.instance = s.instances[idx].id;
                    e.piece = piece_name(old);
                    e.piece_to = piece_name(c.piece);
                    e.from = {s.instances[idx].x, s.instances[idx].y};
                    events->push_back(std::move(e));
                }
                break;
            }
        }
    }
}

// ---- digests --------------------------------------------------------------

uint64_t Simulator::state_hash(const GameState& s) const {
    // Canonical byte stream, FNV-1a 64:
    //   "<w>x<h>;" then per cell in row-major order the sorted piece names
    //   joined by ',' and terminated by ';', then '|', then "name=value;" per
    //   variable in declaration order, then '|' and the status word. Timeout
    //   is written as running: it is a function of the clock, which is excluded.
    thread_local std::vector<std::pair<int32_t, int32_t>> cells;  // (cell index, name rank)
    cells.clear();
    for (const auto& in : s.instances)
        cells.push_back({in.y * s.width + in.x, name_rank_[static_cast<size_t>(in.piece)]});
    std::sort(cells.begin(), cells.end());

    uint64_t h = fnv1a64(std::to_string(s.width) + "x" + std::to_string(s.height) + ";");
    size_t k = 0;
    const int32_t ncells = s.width * s.height;
    for (int32_t c = 0; c < ncells; ++c) {
        bool first = true;
        while (k < cells.size() && cells[k].first == c) {
            if (!first) h = fnv1a64(",", h);
            h = fnv1a64(piece_name(rank_piece_[static_cast<size_t>(cells[k].second)]), h);
            first = false;
            ++k;
        }
        h = fnv1a64(";", h);
    }
    h = fnv1a64("|", h);
    for (size_t v = 0; v < s.variables.size(); ++v) {
        h = fnv1a64(def_.variables[v].name, h);
        h = fnv1a64("=", h);
        h = fnv1a64(std::to_string(s.variables[v]), h);
        h = fnv1a64(";", h);
    }
    h = fnv1a64("|", h);
    h = fnv1a64(to_string(s.status == Status::Timeout ? Status::Running : s.status), h);
    return h;
}

std::string Simulator::structural_key(const GameState& s) const {
    std::string out;
    out.reserve(16 + s.instances.size() * 16 + s.variables.size() * 8 + s.edge_armed.size());
    put(out, static_cast<uint8_t>(s.status));
    put(out, s.next_id);
    put(out, static_cast<uint32_t>(s.instances.size()));
    for (const auto& in : s.instances) {
        put(out, in.id);
        put(out, static_cast<int16_t>(in.piece));
        put(out, static_cast<int16_t>(in.x));
        put(out, static_cast<int16_t>(in.y));
    }
    for (int64_t v : s.variables) put(out, v);
    put_bytes(out, s.edge_armed.data(), s.edge_armed.size());
    return out;
}

}  // namespace forge::engine
