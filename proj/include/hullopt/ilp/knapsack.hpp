#pragma once

#include <vector>

#include "hullopt/common.hpp"

namespace hullopt {

struct KnapsackOption {
    int clusters = 1; // adds clusters - 1 parameters
    double value = 0.0;
};

/// Refinement options of one parameter; at most one is chosen.
struct KnapsackGroup {
    std::vector<KnapsackOption> options;
};

/// Chosen option index per group, -1 for none. Maximizes total value subject to
/// sum(clusters - 1) <= budget; ties go to fewer added parameters, then to earlier options.
inline std::vector<int> solve_knapsack(const std::vector<KnapsackGroup>& groups, int budget)
{
    if (budget < 0)
        throw ConfigError("knapsack budget must be non-negative");
    for (const auto& g : groups)
        for (const auto& o : g.options)
            if (o.clusters < 1)
                throw ConfigError("knapsack option needs at least one cluster");

    struct Cell {
        double value = 0.0;
        int added = 0;
    };
    auto better = [](const Cell& a, const Cell& b) {
        return a.value > b.value || (a.value == b.value && a.added < b.added);
    };
    const auto n = groups.size();
    const auto w = static_cast<std::size_t>(budget) + 1;
    // best[g][b]: groups [0, g) with at most b added parameters.
    std::vector<std::vector<Cell>> best(n + 1, std::vector<Cell>(w));
    std::vector<std::vector<int>> pick(n, std::vector<int>(w, -1));
    for (std::size_t g = 0; g < n; ++g) {
        for (std::size_t b = 0; b < w; ++b) {
            Cell cur = best[g][b];
            int choice = -1;
            for (std::size_t o = 0; o < groups[g].options.size(); ++o) {
                const auto& opt = groups[g].options[o];
                const auto cost = static_cast<std::size_t>(opt.clusters - 1);
                if (opt.value <= 0.0 || cost > b)
                    continue;
                const Cell prev = best[g][b - cost];
                const Cell cand{prev.value + opt.value, prev.added + static_cast<int>(cost)};
                if (better(cand, cur)) {
                    cur = cand;
                    choice = static_cast<int>(o);
                }
            }
            best[g + 1][b] = cur;
            pick[g][b] = choice;
        }
    }
    std::vector<int> out(n, -1);
    std::size_t b = w - 1;
    for (std::size_t g = n; g-- > 0;) {
        out[g] = pick[g][b];
        if (out[g] >= 0)
            b -= static_cast<std::size_t>(groups[g].options[static_cast<std::size_t>(out[g])].clusters - 1);
    }
    return out;
}

} // namespace hullopt
