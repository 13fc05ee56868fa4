#pragma once

// Trace files: JSON Lines. The first line is a header
//   {"actions":[...],"definition_digest":"..","final_digest":"..","format":"forge-trace/1","level":N,"seed":S}
// and every following line is one TraceEvent. Keys are sorted, so a given
// episode always renders to the same bytes.

#include <string>
#include <vector>

#include <json.hpp>

#include "forge/engine.hpp"

namespace forge::engine {

inline constexpr const char* kTraceFormat = "forge-trace/1";

struct TraceHeader {
    std::string definition_digest;
    int64_t level = 0;
    uint64_t seed = 0;
    std::vector<Action> actions;
    std::string final_digest;  // state_hash of the final state, hex
    friend bool operator==(const TraceHeader&, const TraceHeader&) = default;
};

nlohmann::json event_to_json(const TraceEvent& e);
TraceEvent event_from_json(const nlohmann::json& j);

struct Recording {
    TraceHeader header;
    std::vector<TraceEvent> events;
    GameState final_state;
};

/// Replays `actions` from init_state(level, seed), stopping early if the
/// episode ends.
Recording record(const Simulator& sim, size_t level, uint64_t seed, const std::vector<Action>& actions);

std::string render_trace(const TraceHeader& header, const std::vector<TraceEvent>& events);

struct ParsedTrace {
    TraceHeader header;
    std::vector<std::string> event_lines;
};

/// Throws EngineError on a malformed trace.
ParsedTrace parse_trace(const std::string& text);

struct Verification {
    bool ok = false;
    std::string message;
    std::string final_digest;  // recomputed
};

/// Re-runs the header's actions and checks digests and every event line.
Verification verify_trace(const Simulator& sim, const std::string& text);

}  // namespace forge::engine
