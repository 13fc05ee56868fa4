#include "forge/trace.hpp"

#include <sstream>

namespace forge::engine {

using nlohmann::json;

namespace {

json cell_json(Cell c) { return json::array({c.x, c.y}); }

Cell cell_from(const json& j) { return Cell{j.at(0).get<int32_t>(), j.at(1).get<int32_t>()}; }

EventKind kind_from_string(const std::string& s) {
    for (int k = 0; k <= static_cast<int>(EventKind::StatusChanged); ++k)
        if (to_string(static_cast<EventKind>(k)) == s) return static_cast<EventKind>(k);
    throw EngineError("unknown event kind '" + s + "'");
}

Status status_from_string(const std::string& s) {
    for (Status st : {Status::Running, Status::Won, Status::Lost, Status::Timeout})
        if (to_string(st) == s) return st;
    throw EngineError("unknown status '" + s + "'");
}

json header_json(const TraceHeader& h) {
    json actions = json::array();
    for (Action a : h.actions) actions.push_back(std::string(to_string(a)));
    return json{{"format", kTraceFormat},
                {"definition_digest", h.definition_digest},
                {"level", h.level},
                {"seed", h.seed},
                {"actions", std::move(actions)},
                {"final_digest", h.final_digest}};
}

}  // namespace

json event_to_json(const TraceEvent& e) {
    json j{{"tick", e.tick}, {"kind", std::string(to_string(e.kind))}};
    switch (e.kind) {
        case EventKind::Moved:
        case EventKind::Blocked:
            j["id"] = e.instance;
            j["piece"] = e.piece;
            j["from"] = cell_json(e.from);
            j["to"] = cell_json(e.to);
            break;
        case EventKind::RuleFired:
            j["rule"] = e.rule;
            j["trigger"] = e.trigger;
            j["bound"] = e.bound;
            break;
        case EventKind::Destroyed:
        case EventKind::Spawned:
            j["id"] = e.instance;
            j["piece"] = e.piece;
            j["at"] = cell_json(e.from);
            break;
        case EventKind::Transformed:
            j["id"] = e.instance;
            j["piece"] = e.piece;
            j["piece_to"] = e.piece_to;
            j["at"] = cell_json(e.from);
            break;
        case EventKind::VarChanged:
            j["var"] = e.name;
            j["old"] = e.old_value;
            j["new"] = e.new_value;
            break;
        case EventKind::Sfx: j["name"] = e.name; break;
        case EventKind::StatusChanged: j["status"] = std::string(to_string(e.status)); break;
    }
    return j;
}

TraceEvent event_from_json(const json& j) {
    TraceEvent e;
    e.tick = j.at("tick").get<int64_t>();
    e.kind = kind_from_string(j.at("kind").get<std::string>());
    switch (e.kind) {
        case EventKind::Moved:
        case EventKind::Blocked:
            e.instance = j.at("id").get<int32_t>();
            e.piece = j.at("piece").get<std::string>();
            e.from = cell_from(j.at("from"));
            e.to = cell_from(j.at("to"));
            break;
        case EventKind::RuleFired:
            e.rule = j.at("rule").get<int32_t>();
            e.trigger = j.at("trigger").get<std::string>();
            e.bound = j.at("bound").get<std::vector<int32_t>>();
            break;
        case EventKind::Destroyed:
        case EventKind::Spawned:
            e.instance = j.at("id").get<int32_t>();
            e.piece = j.at("piece").get<std::string>();
            e.from = cell_from(j.at("at"));
            break;
        case EventKind::Transformed:
            e.instance = j.at("id").get<int32_t>();
            e.piece = j.at("piece").get<std::string>();
            e.piece_to = j.at("piece_to").get<std::string>();
            e.from = cell_from(j.at("at"));
            break;
        case EventKind::VarChanged:
            e.name = j.at("var").get<std::string>();
            e.old_value = j.at("old").get<int64_t>();
            e.new_value = j.at("new").get<int64_t>();
            break;
        case EventKind::Sfx: e.name = j.at("name").get<std::string>(); break;
        case EventKind::StatusChanged: e.status = status_from_string(j.at("status").get<std::string>()); break;
    }
    return e;
}

Recording record(const Simulator& sim, size_t level, uint64_t seed, const std::vector<Action>& actions) {
    Recording rec;
    rec.final_state = sim.init_state(level, seed);
    rec.header.definition_digest = gdl::definition_digest(sim.definition());
    rec.header.level = static_cast<int64_t>(level);
    rec.header.seed = seed;
    for (Action a : actions) {
        if (is_terminal(rec.final_state.status)) break;
        sim.advance(rec.final_state, a, &rec.events);
        rec.header.actions.push_back(a);
    }
    rec.header.final_digest = to_hex(sim.state_hash(rec.final_state));
    return rec;
}

std::string render_trace(const TraceHeader& header, const std::vector<TraceEvent>& events) {
    std::string out = header_json(header).dump();
    out += '\n';
    for (const auto& e : events) {
        out += event_to_json(e).dump();
        out += '\n';
    }
    return out;
}

ParsedTrace parse_trace(const std::string& text) {
    ParsedTrace t;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw EngineError("empty trace");
    json h;
    try {
        h = json::parse(line);
        if (h.at("format").get<std::string>() != kTraceFormat) throw EngineError("unsupported trace format");
        t.header.definition_digest = h.at("definition_digest").get<std::string>();
        t.header.level = h.at("level").get<int64_t>();
        t.header.seed = h.at("seed").get<uint64_t>();
        for (const auto& a : h.at("actions")) t.header.actions.push_back(action_from_string(a.get<std::string>()));
        t.header.final_digest = h.at("final_digest").get<std::string>();
    } catch (const json::exception& e) {
        throw EngineError(std::string("bad trace header: ") + e.what());
    }
    while (std::getline(in, line))
        if (!line.empty()) t.event_lines.push_back(line);
    return t;
}

Verification verify_trace(const Simulator& sim, const std::string& text) {
    Verification v;
    ParsedTrace t;
    try {
        t = parse_trace(text);
    } catch (const EngineError& e) {
        v.message = e.what();
        return v;
    }
    const auto digest = gdl::definition_digest(sim.definition());
    if (t.header.definition_digest != digest) {
        v.message = "definition digest mismatch: trace " + t.header.definition_digest + ", game " + digest;
        return v;
    }
    if (t.header.level < 0 || static_cast<size_t>(t.header.level) >= sim.definition().levels.size()) {
        v.message = "level index out of range";
        return v;
    }
    const auto rec = record(sim, static_cast<size_t>(t.header.level), t.header.seed, t.header.actions);
    v.final_digest = rec.header.final_digest;
    if (rec.header.actions.size() != t.header.actions.size()) {
        v.message = "episode ended after " + std::to_string(rec.header.actions.size()) + " of " +
                    std::to_string(t.header.actions.size()) + " actions";
        return v;
    }
    if (t.header.final_digest != rec.header.final_digest) {
        v.message = "final digest mismatch: trace " + t.header.final_digest + ", engine " + rec.header.final_digest;
        return v;
    }
    if (t.event_lines.size() != rec.events.size()) {
        v.message = "event count mismatch: trace " + std::to_string(t.event_lines.size()) + ", engine " +
                    std::to_string(rec.events.size());
        return v;
    }
    for (size_t i = 0; i < rec.events.size(); ++i) {
        if (event_to_json(rec.events[i]).dump() != t.event_lines[i]) {
            v.message = "event " + std::to_string(i) + " differs";
            return v;
        }
    }
    v.ok = true;
    v.message = "ok";
    return v;
}

}  // namespace forge::engine
