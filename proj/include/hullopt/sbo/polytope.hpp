#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "hullopt/common.hpp"
#include "hullopt/criteria.hpp"
#include "hullopt/hull/parameter_space.hpp"

namespace hullopt {

struct HalfSpace {
    Eigen::VectorXd a;
    double b = 0.0; // a . z <= b
};

/// Box intersected with half-spaces.
struct Polytope {
    Eigen::VectorXd lo, hi;
    std::vector<HalfSpace> half;

    double violation(const Eigen::VectorXd& z) const
    {
        double v = 0.0;
        for (Eigen::Index i = 0; i < z.size(); ++i)
            v = std::max({v, lo[i] - z[i], z[i] - hi[i]});
        for (const auto& h : half)
            v = std::max(v, h.a.dot(z) - h.b);
        return v;
    }

    bool contains(const Eigen::VectorXd& z, double tol = 1e-9) const { return violation(z) <= tol; }

    Eigen::VectorXd clamp(const Eigen::VectorXd& z) const { return z.cwiseMax(lo).cwiseMin(hi); }

    /// Euclidean projection by Dykstra's alternating scheme, followed by a feasibility polish.
    Eigen::VectorXd project(const Eigen::VectorXd& z0, int max_iters = 500) const
    {
        const std::size_t sets = half.size() + 1;
        std::vector<Eigen::VectorXd> inc(sets, Eigen::VectorXd::Zero(z0.size()));
        Eigen::VectorXd z = z0;
        for (int it = 0; it < max_iters; ++it) {
            const Eigen::VectorXd before = z;
            for (std::size_t s = 0; s < sets; ++s) {
                const Eigen::VectorXd y = z + inc[s];
                Eigen::VectorXd p;
                if (s == 0) {
                    p = clamp(y);
                } else {
                    const auto& h = half[s - 1];
                    const double n2 = h.a.squaredNorm();
                    const double excess = h.a.dot(y) - h.b;
                    p = excess > 0.0 && n2 > 0.0 ? Eigen::VectorXd(y - (excess / n2) * h.a) : y;
                }
                inc[s] = y - p;
                z = p;
            }
            if ((z - before).norm() <= 1e-14 * (1.0 + z.norm()) && violation(z) <= 1e-12)
                break;
        }
        for (int it = 0; it < 100 && violation(z) > 1e-12; ++it) {
            z = clamp(z);
            for (const auto& h : half) {
                const double excess = h.a.dot(z) - h.b;
                const double n2 = h.a.squaredNorm();
                if (excess > 0.0 && n2 > 0.0)
                    z -= (excess * (1.0 + 1e-12) / n2) * h.a;
            }
        }
        return clamp(z);
    }
};

/// Mass and VCG bounds, linear in the configuration.
///   mass:  m_fixed + d . x <= m_ub
///   VCG:   sum_i (VCG_i - VCG_crit) d_i x_i <= (VCG_crit - VCG_fixed) m_fixed
struct LinearBounds {
    Eigen::VectorXd d;
    Eigen::VectorXd w;
    double m_fixed = 0.0;
    double vcg_crit = std::numeric_limits<double>::infinity();
    double vcg_rhs = std::numeric_limits<double>::infinity();
    double m_ub = std::numeric_limits<double>::infinity();

    static LinearBounds from(const ParameterSpace& space, const PenaltyConfig& pen)
    {
        LinearBounds b;
        const auto dens = space.linear_densities();
        const auto vcg = space.vcgs();
        b.d = Eigen::Map<const Eigen::VectorXd>(dens.data(), static_cast<Eigen::Index>(dens.size()));
        b.w.resize(b.d.size());
        for (Eigen::Index i = 0; i < b.d.size(); ++i)
            b.w[i] = (vcg[static_cast<std::size_t>(i)] - pen.vcg_crit) * b.d[i];
        b.m_fixed = pen.m_fixed;
        b.vcg_crit = pen.vcg_crit;
        b.vcg_rhs = (pen.vcg_crit - pen.vcg_fixed) * pen.m_fixed;
        return b;
    }

    bool has_vcg() const { return std::isfinite(vcg_crit); }

    /// Checks on a discrete configuration, using the same mass sums as the QoIs.
    bool mass_ok(const ParameterSpace& space, const Configuration& x) const
    {
        return !(m_fixed + space.dot_density(x) > m_ub);
    }
    bool vcg_ok(const ParameterSpace& space, const Configuration& x) const
    {
        if (!has_vcg())
            return true;
        return space.vcg_moment(x) - vcg_crit * space.dot_density(x) <= vcg_rhs;
    }
    bool feasible(const ParameterSpace& space, const Configuration& x) const
    {
        return mass_ok(space, x) && vcg_ok(space, x);
    }

    /// Polytope in normalized coordinates z, with x = lb + width * z.
    Polytope normalized(const Eigen::VectorXd& lb, const Eigen::VectorXd& width) const
    {
        Polytope p;
        const Eigen::Index n = lb.size();
        p.lo = Eigen::VectorXd::Zero(n);
        p.hi = (width.array() > 0.0).cast<double>().matrix();
        if (std::isfinite(m_ub))
            p.half.push_back({d.cwiseProduct(width), m_ub - m_fixed - d.dot(lb)});
        if (has_vcg())
            p.half.push_back({w.cwiseProduct(width), vcg_rhs - w.dot(lb)});
        return p;
    }
};

} // namespace hullopt
