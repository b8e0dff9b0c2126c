#pragma once

#include <optional>
#include <random>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "hullopt/common.hpp"
#include "hullopt/hull/parameter_space.hpp"
#include "hullopt/ilp/assignment.hpp"
#include "hullopt/sbo/polytope.hpp"

namespace hullopt {

struct RoundingOptions {
    int max_perturbations = 50;
    std::uint64_t seed = 0;
};

enum class RoundingPath { Naive, Ilp, Perturbed };

struct RoundingResult {
    std::optional<Configuration> config; // empty when no admissible candidate was found
    RoundingPath path = RoundingPath::Naive;
};

inline Configuration round_nearest(const ParameterSpace& space, const Eigen::VectorXd& x_bar)
{
    Configuration x(space.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = space[i].domain[space.nearest_index(i, x_bar[static_cast<Eigen::Index>(i)])];
    return x;
}

/// Closest configuration to x_bar in squared distance that differs from `naive` in at least one
/// coordinate and satisfies the linear bounds.
inline AssignmentIlp rounding_ilp(const ParameterSpace& space, const Eigen::VectorXd& x_bar,
                                  const Configuration& naive, const LinearBounds& bounds)
{
    const std::size_t n = space.size();
    AssignmentIlp p;
    p.values.resize(n);
    p.costs.resize(n);
    CouplingConstraint mass, vcg;
    mass.coef.resize(n);
    vcg.coef.resize(n);
    std::vector<std::size_t> excl(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& dom = space[i].domain;
        const double xb = x_bar[static_cast<Eigen::Index>(i)];
        for (double t : dom) {
            p.values[i].push_back(t);
            p.costs[i].push_back((t - xb) * (t - xb));
            mass.coef[i].push_back(bounds.d[static_cast<Eigen::Index>(i)] * t);
            vcg.coef[i].push_back(bounds.w[static_cast<Eigen::Index>(i)] * t);
        }
        excl[i] = space.value_index(i, naive[i]);
    }
    if (std::isfinite(bounds.m_ub)) {
        mass.rhs = bounds.m_ub - bounds.m_fixed;
        p.coupling.push_back(std::move(mass));
    }
    if (bounds.has_vcg()) {
        vcg.rhs = bounds.vcg_rhs;
        p.coupling.push_back(std::move(vcg));
    }
    p.excluded = std::move(excl);
    return p;
}

/// Maps a continuous point to an unvisited feasible configuration: naive rounding, then the rounding
/// ILP, then random single-coordinate perturbations.
inline RoundingResult ilp_round(const ParameterSpace& space, const Eigen::VectorXd& x_bar,
                                const std::set<Configuration>& visited, const LinearBounds& bounds,
                                const RoundingOptions& opt = {})
{
    if (x_bar.size() != static_cast<Eigen::Index>(space.size()))
        throw DomainError("point dimension does not match the parameter space");
    RoundingResult r;
    const Configuration naive = round_nearest(space, x_bar);
    auto admissible = [&](const Configuration& x) { return !visited.count(x) && bounds.feasible(space, x); };
    if (admissible(naive)) {
        r.config = naive;
        return r;
    }

    const auto sol = solve_assignment(rounding_ilp(space, x_bar, naive, bounds));
    if (sol.status == IlpStatus::Infeasible)
        return r;
    Configuration x(space.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = space[i].domain[sol.assignment[i]];
    if (admissible(x)) {
        r.config = x;
        r.path = RoundingPath::Ilp;
        return r;
    }

    std::mt19937_64 rng(opt.seed);
    std::vector<std::size_t> movable;
    for (std::size_t i = 0; i < space.size(); ++i)
        if (space[i].domain.size() > 1)
            movable.push_back(i);
    if (movable.empty())
        return r;
    for (int a = 0; a < opt.max_perturbations; ++a) {
        Configuration y = x;
        const std::size_t i = movable[std::uniform_int_distribution<std::size_t>(0, movable.size() - 1)(rng)];
        const auto& dom = space[i].domain;
        const std::size_t cur = space.value_index(i, y[i]);
        std::size_t k = std::uniform_int_distribution<std::size_t>(0, dom.size() - 2)(rng);
        if (k >= cur)
            ++k;
        y[i] = dom[k];
        if (admissible(y)) {
            r.config = y;
            r.path = RoundingPath::Perturbed;
            return r;
        }
    }
    return r;
}

} // namespace hullopt
