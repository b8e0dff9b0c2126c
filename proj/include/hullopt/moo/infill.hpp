#pragma once

#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "hullopt/common.hpp"
#include "hullopt/rom/surrogate.hpp"

namespace hullopt {

/// Aggregated kernel covariances between low-fidelity candidates (L) and high-fidelity samples (H).
struct InfillState {
    Eigen::MatrixXd c_ll;                 // n x n
    Eigen::MatrixXd c_lh;                 // n x m
    std::vector<std::size_t> remaining;   // original candidate index per row of c_ll
    std::vector<std::size_t> selected;    // original candidate indices, in selection order
    std::vector<double> deltas;           // criterion value of each selection
};

/// Covariance aggregation over the field regressors: for each stress component the maximum over
/// load cases and reduced coefficients, then the sum over components. Coefficient covariances are
/// in target units (kernel times the coefficient's squared target scale).
inline Eigen::MatrixXd aggregated_covariance(const SurrogateModel& sm, const std::vector<Configuration>& a,
                                             const std::vector<Configuration>& b)
{
    const Eigen::MatrixXd xa = sm.norm.apply(a), xb = sm.norm.apply(b);
    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(xa.rows(), xb.rows());
    for (std::size_t c = 0; c < kNumComponents; ++c) {
        Eigen::MatrixXd comp;
        for (std::size_t l = 0; l < kNumLoads; ++l) {
            if (!sm.active(l, c))
                continue;
            const auto& g = sm.gprs[l][c];
            const double s2 = g.target_scale().array().square().maxCoeff();
            const Eigen::MatrixXd k = s2 * g.kernel(xa, xb);
            comp = comp.size() == 0 ? k : comp.cwiseMax(k).eval();
        }
        if (comp.size() != 0)
            total += comp;
    }
    return total;
}

inline InfillState infill_state(const Eigen::MatrixXd& c_ll, const Eigen::MatrixXd& c_lh)
{
    if (c_ll.rows() != c_ll.cols() || c_lh.rows() != c_ll.rows())
        throw DataError("infill matrices have inconsistent shapes");
    if (!c_ll.allFinite() || !c_lh.allFinite())
        throw DataError("infill matrices have non-finite entries");
    InfillState s;
    s.c_ll = c_ll;
    s.c_lh = c_lh;
    s.remaining.resize(static_cast<std::size_t>(c_ll.rows()));
    std::iota(s.remaining.begin(), s.remaining.end(), 0);
    return s;
}

/// Total positive relative covariance increase of each candidate over the best high-fidelity
/// contribution to the other candidates. A zero denominator gives +inf for a positive numerator, else 0.
inline Eigen::VectorXd infill_delta(const Eigen::MatrixXd& c_ll, const Eigen::MatrixXd& c_lh)
{
    const Eigen::Index n = c_ll.rows();
    Eigen::VectorXd hmax(n);
    for (Eigen::Index j = 0; j < n; ++j)
        hmax[j] = c_lh.cols() > 0 ? c_lh.row(j).maxCoeff() : 0.0;
    Eigen::VectorXd delta(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double num = 0.0, den = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i)
                continue;
            num += std::max(c_ll(i, j) - hmax[j], 0.0);
            den += hmax[j];
        }
        if (den == 0.0)
            delta[i] = num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        else
            delta[i] = num / den;
    }
    return delta;
}

/// Selects the argmax (smallest index on ties) and simulates its promotion to the high-fidelity set.
/// Returns the original index of the selection.
inline std::size_t infill_step(InfillState& s)
{
    const Eigen::Index n = s.c_ll.rows();
    if (n == 0)
        throw DataError("no infill candidates left");
    const Eigen::VectorXd delta = infill_delta(s.c_ll, s.c_lh);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < n; ++i)
        if (delta[i] > delta[best])
            best = i;

    const Eigen::Index m = s.c_lh.cols();
    Eigen::MatrixXd ll(n - 1, n - 1), lh(n - 1, m + 1);
    for (Eigen::Index i = 0, r = 0; i < n; ++i) {
        if (i == best)
            continue;
        for (Eigen::Index j = 0, c = 0; j < n; ++j) {
            if (j == best)
                continue;
            ll(r, c++) = s.c_ll(i, j);
        }
        if (m > 0)
            lh.row(r).head(m) = s.c_lh.row(i);
        lh(r, m) = s.c_ll(i, best);
        ++r;
    }
    const std::size_t orig = s.remaining[static_cast<std::size_t>(best)];
    s.c_ll = std::move(ll);
    s.c_lh = std::move(lh);
    s.remaining.erase(s.remaining.begin() + best);
    s.selected.push_back(orig);
    s.deltas.push_back(delta[best]);
    return orig;
}

struct InfillResult {
    std::vector<Configuration> configs;
    std::vector<std::size_t> indices; // into the candidate list
    std::vector<double> deltas;
};

/// Greedy selection of `count` low-fidelity Pareto candidates for high-fidelity validation.
inline InfillResult infill_select(const std::vector<Configuration>& lowfi, const std::vector<Configuration>& hifi,
                                  const SurrogateModel& sm, std::size_t count)
{
    if (lowfi.empty())
        throw DataError("infill needs at least one low-fidelity candidate");
    if (count > lowfi.size())
        throw ConfigError("infill count exceeds the number of candidates");
    std::set<Configuration> h(hifi.begin(), hifi.end());
    for (const auto& x : lowfi)
        if (h.count(x))
            throw DataError("infill candidates must not already be high-fidelity samples");
    auto state = infill_state(aggregated_covariance(sm, lowfi, lowfi), aggregated_covariance(sm, lowfi, hifi));
    InfillResult out;
    for (std::size_t k = 0; k < count; ++k) {
        const auto i = infill_step(state);
        out.indices.push_back(i);
        out.configs.push_back(lowfi[i]);
        out.deltas.push_back(state.deltas.back());
    }
    return out;
}

} // namespace hullopt
