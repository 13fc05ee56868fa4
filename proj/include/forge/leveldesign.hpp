#pragma once

// Evolutionary level generation. A genome is a list of primitive shapes
// rasterized in order, followed by mandatory single-piece placements that
// are stamped last and therefore always survive.

#include <stdexcept>
#include <variant>
#include <vector>

#include <json.hpp>

#include "forge/agents.hpp"
#include "forge/gdl.hpp"

namespace forge::leveldesign {

struct Rect {
    int64_t code = 0;
    int32_t x = 0, y = 0, w = 1, h = 1;
    bool filled = true;
    friend bool operator==(const Rect&, const Rect&) = default;
};

/// Axis-aligned: x0 == x1 or y0 == y1.
struct Line {
    int64_t code = 0;
    int32_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    friend bool operator==(const Line&, const Line&) = default;
};

/// `count` cells drawn with replacement from Rng(seed).
struct Scatter {
    int64_t code = 0;
    int32_t count = 1;
    uint64_t seed = 0;
    friend bool operator==(const Scatter&, const Scatter&) = default;
};

using Stroke = std::variant<Rect, Line, Scatter>;

struct Placement {
    int64_t code = 0;
    int32_t x = 0, y = 0;
    friend bool operator==(const Placement&, const Placement&) = default;
};

/// Invariants: coordinates within bounds; placements occupy distinct cells.
struct LevelGenome {
    int32_t width = 5, height = 5;
    std::vector<Stroke> strokes;
    std::vector<Placement> placements;
    friend bool operator==(const LevelGenome&, const LevelGenome&) = default;
};

nlohmann::json genome_to_json(const LevelGenome& g);

gdl::LevelDef decode_genome(const LevelGenome& genome, const gdl::GameDefinition& g);

/// Max over left-right and top-bottom mirrors of the fraction of cells equal
/// to their mirror image.
double symmetry_score(const gdl::LevelDef& level);

struct LevelFitness {
    bool playable = false;
    bool mcts_won = false;
    double random_won_fraction = 0;
    double symmetry = 0;
    int64_t unique_state_count = 0;
    double score = 0;
    friend bool operator==(const LevelFitness&, const LevelFitness&) = default;
};

nlohmann::json fitness_to_json(const LevelFitness& f);

struct FitnessWeights {
    double mcts_won = 2.0;
    double random_won = 1.0;
    double symmetry = 0.25;
    double unique_states = 0.05;
    double unique_norm = 500.0;
};

double fitness_score(const LevelFitness& f, const FitnessWeights& w = {});

struct EvolutionParams {
    int32_t width = 5, height = 5;
    int population = 40;
    int generations = 50;
    int tournament = 3;
    double crossover_rate = 0.7;
    double mutation_rate = 0.2;
    int elitism = 2;
    int max_strokes = 10;
    int random_episodes = 10;
    agents::MctsParams mcts = [] {
        agents::MctsParams p;
        p.iterations = 500;
        return p;
    }();
    size_t state_cap = 20000;
    FitnessWeights weights;
};

EvolutionParams evolution_params_from_json(const nlohmann::json& j);

class InfeasibleDefinition : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Piece codes that must appear exactly once: controlled pieces and the
/// pieces a controlled piece must overlap to win.
std::vector<int64_t> mandatory_codes(const gdl::GameDefinition& g);

/// Agent seeds derive from `seed` and the level contents only.
LevelFitness evaluate_level(const gdl::GameDefinition& g, const gdl::LevelDef& level, const EvolutionParams& p,
                            uint64_t seed);

struct GenerationStats {
    int generation = 0;
    double best = 0;
    double mean = 0;
    friend bool operator==(const GenerationStats&, const GenerationStats&) = default;
};

struct EvolutionResult {
    gdl::LevelDef level;
    LevelFitness fitness;
    LevelGenome genome;
    std::vector<GenerationStats> log;
};

/// Throws InfeasibleDefinition when `g` has no controlled piece.
EvolutionResult evolve_level(const gdl::GameDefinition& g, const EvolutionParams& p, uint64_t seed);

LevelGenome random_genome(const gdl::GameDefinition& g, const EvolutionParams& p, Rng& rng);
LevelGenome mutate(const LevelGenome& genome, const gdl::GameDefinition& g, const EvolutionParams& p, Rng& rng);
LevelGenome crossover(const LevelGenome& a, const LevelGenome& b, const EvolutionParams& p, Rng& rng);

}  // namespace forge::leveldesign
