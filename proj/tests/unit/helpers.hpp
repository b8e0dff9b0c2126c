#pragma once

#include <random>
#include <string>
#include <vector>

#include "hullopt/criteria.hpp"
#include "hullopt/hull/fem.hpp"
#include "hullopt/hull/model.hpp"
#include "hullopt/rom/database.hpp"

namespace hullopt::test {

inline std::vector<double> range_domain(double first, double step, int count)
{
    std::vector<double> d;
    for (int k = 0; k < count; ++k)
        d.push_back(first + step * k);
    return d;
}

/// Small girder: bottom, one deck, two end bulkheads, shell.
inline ModelSpec small_spec(int nx = 12, int nz = 6)
{
    ModelSpec s;
    s.nx = nx;
    s.nz = nz;
    s.dx = 0.7;
    s.dz = 0.7;
    s.bottom_rows = 1;
    s.inner_bottom_rows = 0;
    s.deck_rows = {nz / 2};
    s.external_bulkhead_cols = {0, nx - 1};
    s.patch_nx = 4;
    s.patch_nz = 2;
    s.groups = {
        {"bottom", {"bottom"}, {8, 10, 12}, 10},
        {"deck", {"deck"}, {6, 8, 10}, 8},
        {"bulkhead", {"external_bulkhead"}, {6, 8}, 6},
        {"shell", {"shell"}, {6, 8, 10}, 8},
    };
    s.end_moment = 2.0e6;
    s.wave_load = 0.0;
    s.pressure = 0.0;
    return s;
}

inline PenaltyConfig model_penalty(const HullModel& m)
{
    PenaltyConfig pen;
    pen.m_fixed = m.m_fixed;
    pen.vcg_fixed = m.vcg_fixed;
    pen.vcg_crit = 1e9;
    pen.c_y = 1.0;
    pen.c_b = 1.0;
    pen.y_crit = 5;
    pen.b_crit = 5;
    pen.m_bar = 0.01;
    return pen;
}

inline Configuration random_config(const ParameterSpace& s, std::mt19937_64& rng)
{
    Configuration x(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        std::uniform_int_distribution<std::size_t> u(0, s[i].domain.size() - 1);
        x[i] = s[i].domain[u(rng)];
    }
    return x;
}

/// High-fidelity database over `count` distinct random configurations (default first).
inline SnapshotDatabase make_db(const HullModel& m, const PenaltyConfig& pen, std::size_t count, std::uint64_t seed)
{
    HifiSolver hf(m);
    FailureEvaluator ev(m.elements, m.material, pen.yield);
    SnapshotDatabase db;
    std::mt19937_64 rng(seed);
    Configuration x = m.default_config;
    while (db.size() < count) {
        if (!db.contains(x)) {
            auto snap = std::make_shared<StressSnapshot>(hf.solve(m.space, x));
            DbEntry e;
            e.config = x;
            e.qoi = compute_qois(*snap, m, m.space, ev, pen, m.monitored_node);
            e.f = penalized_mass(e.qoi, pen);
            e.snapshot = std::move(snap);
            db.add(std::move(e));
        }
        x = random_config(m.space, rng);
    }
    return db;
}

} // namespace hullopt::test
