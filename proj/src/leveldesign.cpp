#include "forge/leveldesign.hpp"

#include <algorithm>
#include <map>

#include "overloaded.hpp"

namespace forge::leveldesign {

using forge::detail::overloaded;

namespace {

int32_t clamp32(int64_t v, int64_t lo, int64_t hi) { return static_cast<int32_t>(std::clamp(v, lo, hi)); }

std::vector<int64_t> stroke_codes(const gdl::GameDefinition& g) {
    const auto mandatory = mandatory_codes(g);
    std::vector<int64_t> codes{0};
    for (size_t i = 0; i < g.pieces.size(); ++i) {
        const auto code = static_cast<int64_t>(i + 1);
        if (!g.pieces[i].controlled && std::find(mandatory.begin(), mandatory.end(), code) == mandatory.end())
            codes.push_back(code);
    }
    return codes;
}

Stroke random_stroke(const std::vector<int64_t>& codes, int32_t W, int32_t H, Rng& rng) {
    const int64_t code = codes[rng.below(codes.size())];
    switch (rng.below(3)) {
        case 0: {
            Rect r;
            r.code = code;
            r.w = static_cast<int32_t>(rng.range(1, W));
            r.h = static_cast<int32_t>(rng.range(1, H));
            r.x = static_cast<int32_t>(rng.range(0, W - r.w));
            r.y = static_cast<int32_t>(rng.range(0, H - r.h));
            r.filled = rng.chance(0.5);
            return r;
        }
        case 1: {
            Line l;
            l.code = code;
            if (rng.chance(0.5)) {
                l.y0 = l.y1 = static_cast<int32_t>(rng.range(0, H - 1));
                l.x0 = static_cast<int32_t>(rng.range(0, W - 1));
                l.x1 = static_cast<int32_t>(rng.range(0, W - 1));
            } else {
                l.x0 = l.x1 = static_cast<int32_t>(rng.range(0, W - 1));
                l.y0 = static_cast<int32_t>(rng.range(0, H - 1));
                l.y1 = static_cast<int32_t>(rng.range(0, H - 1));
            }
            return l;
        }
        default: {
            Scatter s;
            s.code = code;
            s.count = static_cast<int32_t>(rng.range(1, std::max(1, W * H / 3)));
            s.seed = rng.next();
            return s;
        }
    }
}

void jitter(Stroke& stroke, const std::vector<int64_t>& codes, int32_t W, int32_t H, Rng& rng) {
    if (rng.chance(0.5)) {
        const int64_t code = codes[rng.below(codes.size())];
        std::visit([&](auto& s) { s.code = code; }, stroke);
        return;
    }
    auto d = [&] { return rng.range(-1, 1); };
    std::visit(overloaded{
                   [&](Rect& r) {
                       r.w = clamp32(r.w + d(), 1, W);
                       r.h = clamp32(r.h + d(), 1, H);
                       r.x = clamp32(r.x + d(), 0, W - r.w);
                       r.y = clamp32(r.y + d(), 0, H - r.h);
                       if (rng.chance(0.25)) r.filled = !r.filled;
                   },
                   [&](Line& l) {
                       if (l.y0 == l.y1) {
                           l.y0 = l.y1 = clamp32(l.y0 + d(), 0, H - 1);
                           l.x0 = clamp32(l.x0 + d(), 0, W - 1);
                           l.x1 = clamp32(l.x1 + d(), 0, W - 1);
                       } else {
                           l.x0 = l.x1 = clamp32(l.x0 + d(), 0, W - 1);
                           l.y0 = clamp32(l.y0 + d(), 0, H - 1);
                           l.y1 = clamp32(l.y1 + d(), 0, H - 1);
                       }
                   },
                   [&](Scatter& s) {
                       s.count = clamp32(s.count + d(), 1, std::max(1, W * H / 3));
                       s.seed = rng.next();
                   },
               },
               stroke);
}

bool cell_taken(const std::vector<Placement>& ps, int32_t x, int32_t y, size_t except) {
    for (size_t i = 0; i < ps.size(); ++i)
        if (i != except && ps[i].x == x && ps[i].y == y) return true;
    return false;
}

void place_freely(std::vector<Placement>& ps, size_t i, int32_t W, int32_t H, Rng& rng) {
    do {
        ps[i].x = static_cast<int32_t>(rng.range(0, W - 1));
        ps[i].y = static_cast<int32_t>(rng.range(0, H - 1));
    } while (cell_taken(ps, ps[i].x, ps[i].y, i));
}

uint64_t level_digest(const gdl::LevelDef& l) {
    std::string bytes = std::to_string(l.width) + "x" + std::to_string(l.height) + ":";
    for (int64_t c : l.data) bytes += std::to_string(c) + ",";
    return fnv1a64(bytes);
}

}  // namespace

nlohmann::json genome_to_json(const LevelGenome& g) {
    nlohmann::json strokes = nlohmann::json::array();
    for (const auto& s : g.strokes) {
        strokes.push_back(std::visit(
            overloaded{
                [](const Rect& r) -> nlohmann::json {
                    return {{"kind", "rect"}, {"code", r.code}, {"x", r.x},           {"y", r.y},
                            {"w", r.w},       {"h", r.h},       {"filled", r.filled}};
                },
                [](const Line& l) -> nlohmann::json {
                    return {{"kind", "line"}, {"code", l.code}, {"x0", l.x0}, {"y0", l.y0}, {"x1", l.x1}, {"y1", l.y1}};
                },
                [](const Scatter& s) -> nlohmann::json {
                    return {{"kind", "scatter"}, {"code", s.code}, {"count", s.count}, {"seed", s.seed}};
                },
            },
            s));
    }
    nlohmann::json placements = nlohmann::json::array();
    for (const auto& p : g.placements) placements.push_back({{"code", p.code}, {"x", p.x}, {"y", p.y}});
    return {{"width", g.width}, {"height", g.height}, {"strokes", strokes}, {"placements", placements}};
}

gdl::LevelDef decode_genome(const LevelGenome& genome, const gdl::GameDefinition&) {
    gdl::LevelDef l{genome.width, genome.height, std::vector<int64_t>(static_cast<size_t>(genome.width * genome.height), 0)};
    auto put = [&](int32_t x, int32_t y, int64_t code) {
        if (x >= 0 && y >= 0 && x < genome.width && y < genome.height)
            l.data[static_cast<size_t>(y * genome.width + x)] = code;
    };
    for (const auto& stroke : genome.strokes) {
        std::visit(overloaded{
                       [&](const Rect& r) {
                           for (int32_t y = r.y; y < r.y + r.h; ++y)
                               for (int32_t x = r.x; x < r.x + r.w; ++x)
                                   if (r.filled || x == r.x || y == r.y || x == r.x + r.w - 1 || y == r.y + r.h - 1)
                                       put(x, y, r.code);
                       },
                       [&](const Line& ln) {
                           for (int32_t y = std::min(ln.y0, ln.y1); y <= std::max(ln.y0, ln.y1); ++y)
                               for (int32_t x = std::min(ln.x0, ln.x1); x <= std::max(ln.x0, ln.x1); ++x)
                                   put(x, y, ln.code);
                       },
                       [&](const Scatter& s) {
                           Rng r(s.seed);
                           for (int32_t i = 0; i < s.count; ++i) {
                               const auto x = static_cast<int32_t>(r.below(static_cast<uint64_t>(genome.width)));
                               const auto y = static_cast<int32_t>(r.below(static_cast<uint64_t>(genome.height)));
                               put(x, y, s.code);
                           }
                       },
                   },
                   stroke);
    }
    for (const auto& p : genome.placements) put(p.x, p.y, p.code);
    return l;
}

double symmetry_score(const gdl::LevelDef& level) {
    const int64_t W = level.width, H = level.height;
    int64_t lr = 0, tb = 0;
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            const int64_t v = level.at(x, y);
            lr += v == level.at(W - 1 - x, y);
            tb += v == level.at(x, H - 1 - y);
        }
    return static_cast<double>(std::max(lr, tb)) / static_cast<double>(W * H);
}

nlohmann::json fitness_to_json(const LevelFitness& f) {
    return {{"playable", f.playable},
            {"mcts_won", f.mcts_won},
            {"random_won_fraction", f.random_won_fraction},
            {"symmetry", f.symmetry},
            {"unique_state_count", f.unique_state_count},
            {"score", f.score}};
}

double fitness_score(const LevelFitness& f, const FitnessWeights& w) {
    return w.mcts_won * (f.mcts_won ? 1.0 : 0.0) - w.random_won * f.random_won_fraction + w.symmetry * f.symmetry +
           w.unique_states * std::min(1.0, static_cast<double>(f.unique_state_count) / w.unique_norm);
}

EvolutionParams evolution_params_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("evolution params must be an object");
    EvolutionParams p;
    try {
        p.width = j.value("width", p.width);
        p.height = j.value("height", p.height);
        p.population = j.value("population", p.population);
        p.generations = j.value("generations", p.generations);
        p.tournament = j.value("tournament", p.tournament);
        p.crossover_rate = j.value("crossover_rate", p.crossover_rate);
        p.mutation_rate = j.value("mutation_rate", p.mutation_rate);
        p.elitism = j.value("elitism", p.elitism);
        p.max_strokes = j.value("max_strokes", p.max_strokes);
        p.random_episodes = j.value("random_episodes", p.random_episodes);
        p.state_cap = j.value("state_cap", p.state_cap);
        if (j.contains("mcts")) p.mcts = agents::params_from_json(j.at("mcts"));
        if (j.contains("weights")) {
            const auto& w = j.at("weights");
            p.weights.mcts_won = w.value("mcts_won", p.weights.mcts_won);
            p.weights.random_won = w.value("random_won", p.weights.random_won);
            p.weights.symmetry = w.value("symmetry", p.weights.symmetry);
            p.weights.unique_states = w.value("unique_states", p.weights.unique_states);
            p.weights.unique_norm = w.value("unique_norm", p.weights.unique_norm);
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("bad evolution params: ") + e.what());
    }
    if (p.width < 1 || p.height < 1 || p.population < 1 || p.generations < 1 || p.tournament < 1 ||
        p.elitism < 0 || p.elitism > p.population || p.max_strokes < 0 || p.random_episodes < 0)
        throw std::invalid_argument("evolution params out of range");
    return p;
}

std::vector<int64_t> mandatory_codes(const gdl::GameDefinition& g) {
    std::vector<int64_t> out;
    auto add = [&](int64_t c) {
        if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    };
    for (size_t i = 0; i < g.pieces.size(); ++i)
        if (g.pieces[i].controlled) add(static_cast<int64_t>(i + 1));
    for (const auto& r : g.rules) {
        const auto* o = std::get_if<gdl::Overlap>(&r.trigger);
        if (!o) continue;
        const bool wins = std::any_of(r.code.begin(), r.code.end(),
                                      [](const gdl::Command& c) { return std::holds_alternative<gdl::Win>(c); });
        if (!wins) continue;
        const auto a = g.piece_index(o->first), b = g.piece_index(o->second);
        if (!a || !b) continue;
        if (g.pieces[*a].controlled && !g.pieces[*b].controlled) add(static_cast<int64_t>(*b + 1));
        if (g.pieces[*b].controlled && !g.pieces[*a].controlled) add(static_cast<int64_t>(*a + 1));
    }
    return out;
}

LevelFitness evaluate_level(const gdl::GameDefinition& g, const gdl::LevelDef& level, const EvolutionParams& p,
                            uint64_t seed) {
    gdl::GameDefinition single = g;
    single.levels = {level};
    const engine::Simulator sim(std::move(single));
    const uint64_t base = derive_seed(seed, level_digest(level));

    LevelFitness f;
    const auto rep = agents::exhaustive_solve(sim, 0, p.state_cap);
    f.playable = rep.winnable;
    f.unique_state_count = static_cast<int64_t>(rep.reachable_hashes.size());
    f.symmetry = symmetry_score(level);
    if (p.random_episodes > 0) {
        int won = 0;
        for (int i = 0; i < p.random_episodes; ++i)
            won += agents::random_episode(sim, 0, derive_seed(base, 100 + static_cast<uint64_t>(i))).outcome ==
                   engine::Status::Won;
        f.random_won_fraction = static_cast<double>(won) / static_cast<double>(p.random_episodes);
    }
    if (f.playable || rep.truncated)
        f.mcts_won = agents::mcts_episode(sim, 0, p.mcts, derive_seed(base, 1)).outcome == engine::Status::Won;
    f.score = fitness_score(f, p.weights);
    return f;
}

LevelGenome random_genome(const gdl::GameDefinition& g, const EvolutionParams& p, Rng& rng) {
    LevelGenome genome;
    genome.width = p.width;
    genome.height = p.height;
    const auto codes = stroke_codes(g);
    const auto n = rng.range(1, std::max(1, p.max_strokes));
    for (int64_t i = 0; i < n && i < p.max_strokes; ++i) genome.strokes.push_back(random_stroke(codes, p.width, p.height, rng));
    for (int64_t code : mandatory_codes(g)) {
        genome.placements.push_back({code, 0, 0});
        place_freely(genome.placements, genome.placements.size() - 1, p.width, p.height, rng);
    }
    return genome;
}

LevelGenome mutate(const LevelGenome& genome, const gdl::GameDefinition& g, const EvolutionParams& p, Rng& rng) {
    LevelGenome out = genome;
    const auto codes = stroke_codes(g);
    std::vector<int> ops;
    if (!out.strokes.empty()) ops.push_back(0);
    if (static_cast<int>(out.strokes.size()) < p.max_strokes) ops.push_back(1);
    if (!out.strokes.empty()) ops.push_back(2);
    if (!out.placements.empty()) ops.push_back(3);
    if (ops.empty()) return out;
    switch (ops[rng.below(ops.size())]) {
        case 0: jitter(out.strokes[rng.below(out.strokes.size())], codes, out.width, out.height, rng); break;
        case 1: {
            const auto at = static_cast<std::ptrdiff_t>(rng.below(out.strokes.size() + 1));
            out.strokes.insert(out.strokes.begin() + at, random_stroke(codes, out.width, out.height, rng));
            break;
        }
        case 2: out.strokes.erase(out.strokes.begin() + static_cast<std::ptrdiff_t>(rng.below(out.strokes.size()))); break;
        default: place_freely(out.placements, rng.below(out.placements.size()), out.width, out.height, rng); break;
    }
    return out;
}

LevelGenome crossover(const LevelGenome& a, const LevelGenome& b, const EvolutionParams& p, Rng& rng) {
    LevelGenome child = a;
    const auto i = static_cast<std::ptrdiff_t>(rng.below(a.strokes.size() + 1));
    const auto j = static_cast<std::ptrdiff_t>(rng.below(b.strokes.size() + 1));
    child.strokes.assign(a.strokes.begin(), a.strokes.begin() + i);
    child.strokes.insert(child.strokes.end(), b.strokes.begin() + j, b.strokes.end());
    if (static_cast<int>(child.strokes.size()) > p.max_strokes) child.strokes.resize(static_cast<size_t>(p.max_strokes));
    return child;
}

EvolutionResult evolve_level(const gdl::GameDefinition& g, const EvolutionParams& p, uint64_t seed) {
    if (std::none_of(g.pieces.begin(), g.pieces.end(), [](const gdl::PieceDef& pc) { return pc.controlled; }))
        throw InfeasibleDefinition("definition has no controlled piece");
    if (mandatory_codes(g).size() > static_cast<size_t>(p.width * p.height))
        throw InfeasibleDefinition("level too small for the mandatory pieces");

    Rng rng(derive_seed(seed, 3));
    const uint64_t agent_seed = derive_seed(seed, 4);
    std::map<std::vector<int64_t>, LevelFitness> cache;
    auto fitness_of = [&](const LevelGenome& genome) {
        const auto level = decode_genome(genome, g);
        auto it = cache.find(level.data);
        if (it == cache.end()) it = cache.emplace(level.data, evaluate_level(g, level, p, agent_seed)).first;
        return it->second;
    };

    std::vector<LevelGenome> pop;
    for (int i = 0; i < p.population; ++i) pop.push_back(random_genome(g, p, rng));

    EvolutionResult result;
    std::vector<double> scores;
    for (int gen = 0; gen < p.generations; ++gen) {
        scores.clear();
        for (const auto& genome : pop) scores.push_back(fitness_of(genome).score);
        double sum = 0;
        for (double s : scores) sum += s;
        result.log.push_back({gen, *std::max_element(scores.begin(), scores.end()), sum / static_cast<double>(scores.size())});
        if (gen + 1 == p.generations) break;

        std::vector<size_t> order(pop.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
        auto tournament = [&]() -> const LevelGenome& {
            size_t best = rng.below(pop.size());
            for (int k = 1; k < p.tournament; ++k) {
                const size_t c = rng.below(pop.size());
                if (scores[c] > scores[best] || (scores[c] == scores[best] && c < best)) best = c;
            }
            return pop[best];
        };

        std::vector<LevelGenome> next;
        for (int e = 0; e < p.elitism; ++e) next.push_back(pop[order[static_cast<size_t>(e)]]);
        while (static_cast<int>(next.size()) < p.population) {
            LevelGenome child = tournament();
            if (rng.chance(p.crossover_rate)) child = crossover(child, tournament(), p, rng);
            if (rng.chance(p.mutation_rate)) child = mutate(child, g, p, rng);
            next.push_back(std::move(child));
        }
        pop = std::move(next);
    }

    size_t best = 0;
    for (size_t i = 1; i < pop.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    result.genome = pop[best];
    result.level = decode_genome(pop[best], g);
    result.fitness = fitness_of(pop[best]);
    return result;
}

}  // namespace forge::leveldesign
