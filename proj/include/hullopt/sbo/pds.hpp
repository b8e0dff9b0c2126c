#pragma once

#include <chrono>
#include <vector>

#include "hullopt/common.hpp"
#include "hullopt/hull/parameter_space.hpp"
#include "hullopt/sbo/bo.hpp"
#include "hullopt/sbo/polytope.hpp"

namespace hullopt {

enum class PdsMode {
    Cyclic,   // each parameter's scan starts from the best configuration found so far in the sweep
    FromBase, // every scan of a sweep starts from the configuration the sweep started with
};

struct PdsOptions {
    PdsMode mode = PdsMode::Cyclic;
    int max_sweeps = 100;
    double time_limit = 0.0; // seconds, 0 = none
};

struct PdsResult {
    Configuration x;
    double f = 0.0;
    double f_start = 0.0;
    int sweeps = 0;
    std::vector<std::size_t> sweep_evaluations;
    bool budget_exhausted = false;
};

/// Principal-dimensions search: repeated full single-coordinate scans, skipping points that violate the
/// VCG bound or the incumbent mass bound.
inline PdsResult pds_run(const ParameterSpace& space, LinearBounds bounds, const ScalarBatchObjective& f,
                         const Configuration& start, const PdsOptions& opt = {})
{
    space.validate(start);
    if (!bounds.vcg_ok(space, start))
        throw DomainError("principal-dimensions search needs a start satisfying the VCG bound");
    const auto t0 = std::chrono::steady_clock::now();
    auto out_of_time = [&] {
        return opt.time_limit > 0.0
            && std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >= opt.time_limit;
    };

    PdsResult r;
    r.x = start;
    r.f = r.f_start = f({start}).at(0);

    for (int s = 0; s < opt.max_sweeps; ++s) {
        const Configuration base = r.x;
        Configuration best = r.x;
        double best_f = r.f;
        std::size_t evals = 0;
        for (std::size_t i = 0; i < space.size(); ++i) {
            if (out_of_time()) {
                r.budget_exhausted = true;
                break;
            }
            const Configuration& from = opt.mode == PdsMode::Cyclic ? best : base;
            bounds.m_ub = best_f;
            std::vector<Configuration> cand;
            for (double t : space[i].domain) {
                if (t == from[i])
                    continue;
                Configuration y = from;
                y[i] = t;
                if (bounds.feasible(space, y))
                    cand.push_back(std::move(y));
            }
            if (cand.empty())
                continue;
            const auto fs = f(cand);
            evals += cand.size();
            for (std::size_t k = 0; k < cand.size(); ++k)
                if (fs[k] < best_f) {
                    best_f = fs[k];
                    best = cand[k];
                }
        }
        ++r.sweeps;
        r.sweep_evaluations.push_back(evals);
        const bool improved = best_f < r.f;
        r.x = best;
        r.f = best_f;
        if (!improved || r.budget_exhausted)
            break;
        if (s + 1 == opt.max_sweeps)
            r.budget_exhausted = true;
    }
    return r;
}

} // namespace hullopt
