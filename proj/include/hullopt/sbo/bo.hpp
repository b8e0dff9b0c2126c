#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hullopt/common.hpp"
#include "hullopt/hull/parameter_space.hpp"
#include "hullopt/rom/gpr.hpp"
#include "hullopt/sbo/acquisition.hpp"
#include "hullopt/sbo/polytope.hpp"
#include "hullopt/sbo/rounding.hpp"

namespace hullopt {

using ScalarBatchObjective = std::function<std::vector<double>(const std::vector<Configuration>&)>;

/// Scalar GPR over normalized inputs z in [0,1]^d, centred on the mean target.
class ObjectiveSurface {
public:
    ObjectiveSurface() = default;

    static ObjectiveSurface fit(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const GprOptions& opt)
    {
        ObjectiveSurface s;
        s.offset_ = y.mean();
        s.gp_ = GprModel::fit(z, (y.array() - s.offset_).matrix(), opt);
        return s;
    }

    struct Point {
        double mu = 0.0, sigma = 0.0;
        Eigen::VectorXd dmu, dsigma;
    };

    Point at(const Eigen::VectorXd& z) const
    {
        const auto g = gp_.predict_with_gradient(z);
        Point p;
        p.mu = g.mean + offset_;
        p.sigma = std::sqrt(std::max(g.variance, 0.0));
        p.dmu = g.dmean;
        p.dsigma = p.sigma > 0.0 ? Eigen::VectorXd(g.dvariance / (2.0 * p.sigma))
                                 : Eigen::VectorXd::Zero(g.dvariance.size());
        return p;
    }

    const GprModel& gpr() const { return gp_; }
    double offset() const { return offset_; }

private:
    GprModel gp_;
    double offset_ = 0.0;
};

struct AcquisitionSearch {
    int starts = 16;
    int max_steps = 80;
    double min_step = 1e-7;
};

/// Multi-start projected gradient ascent of the acquisition over the polytope. Returns nothing when
/// the polytope is empty.
inline std::optional<Eigen::VectorXd> maximize_acquisition(const ObjectiveSurface& s, const Polytope& poly,
                                                           double y_star, const AcquisitionConfig& acq,
                                                           const std::optional<Eigen::VectorXd>& incumbent,
                                                           std::mt19937_64& rng, const AcquisitionSearch& opt = {})
{
    const Eigen::Index n = poly.lo.size();
    std::vector<Eigen::VectorXd> starts;
    for (const Eigen::VectorXd& z0 : {poly.lo, Eigen::VectorXd(0.5 * (poly.lo + poly.hi))}) {
        const Eigen::VectorXd z = poly.project(z0);
        if (poly.contains(z))
            starts.push_back(z);
    }
    if (starts.empty())
        return std::nullopt;
    starts.clear();

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 0.1);
    if (incumbent) {
        starts.push_back(poly.project(*incumbent));
        for (int k = 0; k < std::max(1, opt.starts / 4); ++k) {
            Eigen::VectorXd z = *incumbent;
            for (Eigen::Index i = 0; i < n; ++i)
                z[i] += gauss(rng) * (poly.hi[i] - poly.lo[i]);
            starts.push_back(poly.project(z));
        }
    }
    while (static_cast<int>(starts.size()) < opt.starts) {
        Eigen::VectorXd z(n);
        for (Eigen::Index i = 0; i < n; ++i)
            z[i] = poly.lo[i] + u01(rng) * (poly.hi[i] - poly.lo[i]);
        starts.push_back(poly.project(z));
    }

    auto value = [&](const Eigen::VectorXd& z, Eigen::VectorXd* grad) {
        const auto p = s.at(z);
        if (grad)
            *grad = acquisition_gradient(acq.kind, p.mu, p.sigma, y_star, p.dmu, p.dsigma, acq);
        return acquisition(acq.kind, p.mu, p.sigma, y_star, acq);
    };

    std::optional<Eigen::VectorXd> best;
    double best_val = -std::numeric_limits<double>::infinity();
    for (auto z : starts) {
        if (!poly.contains(z))
            continue;
        Eigen::VectorXd g;
        double a = value(z, &g);
        double step = 0.1;
        for (int it = 0; it < opt.max_steps && step >= opt.min_step; ++it) {
            const double gn = g.norm();
            if (!(gn > 0.0) || !std::isfinite(gn))
                break;
            const Eigen::VectorXd zn = poly.project(z + (step / gn) * g);
            if (!poly.contains(zn)) {
                step *= 0.5;
                continue;
            }
            Eigen::VectorXd gn_vec;
            const double an = value(zn, &gn_vec);
            if (an > a) {
                z = zn;
                a = an;
                g = gn_vec;
                step *= 1.5;
            } else {
                step *= 0.5;
            }
        }
        if (a > best_val) {
            best_val = a;
            best = z;
        }
    }
    if (!best)
        return std::nullopt;
    return best;
}

struct BoOptions {
    AcquisitionConfig acq;
    int max_iters = 200;
    double time_limit = 300.0; // seconds, 0 = none
    std::size_t n_candidates = 3;
    AcquisitionSearch search;
    GprOptions gpr{.restarts = 3, .max_iters = 100};
    GprOptions refit{.restarts = 1, .max_iters = 40};
    RoundingOptions rounding;
    std::uint64_t seed = 0;
};

struct BoTraceEntry {
    int iteration = 0;
    AcqKind kind = AcqKind::NLCB;
    Configuration config;
    double f = 0.0;
    double incumbent_f = 0.0;
};

struct BoResult {
    std::vector<Configuration> candidates; // best first
    std::vector<double> candidate_f;
    std::vector<BoTraceEntry> trace;       // entry 0 is the starting incumbent
    Configuration incumbent;
    double incumbent_f = 0.0;
    std::string stop_reason;
};

/// Index of the lowest-f sample satisfying the VCG bound.
inline std::optional<std::size_t> feasible_incumbent(const ParameterSpace& space, const LinearBounds& bounds,
                                                     const std::vector<Configuration>& xs,
                                                     const std::vector<double>& ys)
{
    std::optional<std::size_t> best;
    for (std::size_t k = 0; k < xs.size(); ++k)
        if (bounds.vcg_ok(space, xs[k]) && (!best || ys[k] < ys[*best]))
            best = k;
    return best;
}

/// Bayesian optimization of a scalar objective over the discrete space, seeded with evaluated samples.
/// `bounds` carries the VCG bound; the mass bound is refreshed from the incumbent every iteration.
inline BoResult bo_run(const ParameterSpace& space, LinearBounds bounds, const ScalarBatchObjective& f,
                       const std::vector<Configuration>& x0, const std::vector<double>& y0,
                       const BoOptions& opt = {})
{
    opt.acq.validate();
    if (x0.empty() || x0.size() != y0.size())
        throw DataError("BO needs a non-empty set of evaluated samples");
    for (const auto& x : x0)
        space.validate(x);
    const auto inc = feasible_incumbent(space, bounds, x0, y0);
    if (!inc)
        throw DataError("no sample satisfies the VCG bound; BO needs a feasible incumbent");

    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    const std::size_t d = space.size();
    Eigen::VectorXd lb(d), width(d);
    for (std::size_t i = 0; i < d; ++i) {
        lb[static_cast<Eigen::Index>(i)] = space[i].domain.front();
        width[static_cast<Eigen::Index>(i)] = space[i].domain.back() - space[i].domain.front();
    }
    auto to_z = [&](const Configuration& x) {
        Eigen::VectorXd z(d);
        for (std::size_t i = 0; i < d; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            z[ii] = width[ii] > 0.0 ? (x[i] - lb[ii]) / width[ii] : 0.0;
        }
        return z;
    };

    std::vector<Configuration> xs = x0;
    std::vector<double> ys = y0;
    std::set<Configuration> visited(x0.begin(), x0.end());

    BoResult res;
    res.incumbent = x0[*inc];
    res.incumbent_f = y0[*inc];
    const double f_start = res.incumbent_f;
    AcquisitionConfig acq = opt.acq;
    res.trace.push_back({0, acq.kind, res.incumbent, res.incumbent_f, res.incumbent_f});

    std::mt19937_64 rng(opt.seed);
    ObjectiveSurface surf;
    bool fitted = false;
    int stale = 0;
    std::vector<std::size_t> evaluated;
    res.stop_reason = "iteration budget";

    for (int it = 1; it <= opt.max_iters; ++it) {
        if (opt.time_limit > 0.0 && elapsed() >= opt.time_limit) {
            res.stop_reason = "time limit";
            break;
        }
        bounds.m_ub = res.incumbent_f;
        const Polytope poly = bounds.normalized(lb, width);

        std::optional<Eigen::VectorXd> z;
        if (xs.size() >= 2) {
            Eigen::MatrixXd zm(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(d));
            for (std::size_t k = 0; k < xs.size(); ++k)
                zm.row(static_cast<Eigen::Index>(k)) = to_z(xs[k]).transpose();
            const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
            GprOptions g = fitted ? opt.refit : opt.gpr;
            g.seed = opt.seed + static_cast<std::uint64_t>(it);
            if (fitted)
                g.warm_start = surf.gpr().theta();
            surf = ObjectiveSurface::fit(zm, yv, g);
            fitted = true;
            z = maximize_acquisition(surf, poly, res.incumbent_f, acq, to_z(res.incumbent), rng, opt.search);
        } else {
            Eigen::VectorXd u(d);
            std::uniform_real_distribution<double> u01(0.0, 1.0);
            for (Eigen::Index i = 0; i < u.size(); ++i)
                u[i] = u01(rng) * poly.hi[i];
            const Eigen::VectorXd p = poly.project(u);
            if (poly.contains(p))
                z = p;
        }
        if (!z) {
            res.stop_reason = "search space exhausted";
            break;
        }
        const Eigen::VectorXd x_bar = lb + width.cwiseProduct(*z);
        RoundingOptions ro = opt.rounding;
        ro.seed = opt.rounding.seed + static_cast<std::uint64_t>(it);
        const auto rounded = ilp_round(space, x_bar, visited, bounds, ro);
        if (!rounded.config) {
            res.stop_reason = "search space exhausted";
            break;
        }
        const Configuration& x = *rounded.config;
        const AcqKind used = acq.kind;
        const double y = f({x}).at(0);
        visited.insert(x);
        xs.push_back(x);
        ys.push_back(y);
        evaluated.push_back(xs.size() - 1);

        if (y < res.incumbent_f) {
            res.incumbent = x;
            res.incumbent_f = y;
            stale = 0;
        } else if (++stale >= acq.switch_patience) {
            acq.kind = next_acq(acq.kind);
            stale = 0;
        }
        res.trace.push_back({it, used, x, y, res.incumbent_f});
    }

    std::vector<std::size_t> better;
    for (auto k : evaluated)
        if (ys[k] < f_start)
            better.push_back(k);
    std::stable_sort(better.begin(), better.end(), [&](auto a, auto b) { return ys[a] < ys[b]; });
    for (std::size_t k = 0; k < better.size() && k < opt.n_candidates; ++k) {
        res.candidates.push_back(xs[better[k]]);
        res.candidate_f.push_back(ys[better[k]]);
    }
    return res;
}

} // namespace hullopt
