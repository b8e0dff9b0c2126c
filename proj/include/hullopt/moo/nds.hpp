#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "hullopt/common.hpp"

namespace hullopt {

/// a dominates b under minimization: no worse everywhere, strictly better somewhere.
inline bool dominates(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b)
{
    bool strict = false;
    for (Eigen::Index j = 0; j < a.size(); ++j) {
        if (a[j] > b[j])
            return false;
        if (a[j] < b[j])
            strict = true;
    }
    return strict;
}

/// Layers of row indices; the first layer is the non-dominated set. Indices ascend within a layer.
inline std::vector<std::vector<std::size_t>> non_dominated_sort(const Eigen::MatrixXd& f)
{
    if (!f.allFinite())
        throw DataError("objective matrix has non-finite entries");
    const auto p = static_cast<std::size_t>(f.rows());
    std::vector<std::vector<std::size_t>> dominated(p);
    std::vector<std::size_t> count(p, 0);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i + 1; j < p; ++j) {
            const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
            if (dominates(f.row(ii), f.row(jj))) {
                dominated[i].push_back(j);
                ++count[j];
            } else if (dominates(f.row(jj), f.row(ii))) {
                dominated[j].push_back(i);
                ++count[i];
            }
        }
    std::vector<std::vector<std::size_t>> layers;
    std::vector<std::size_t> front;
    for (std::size_t i = 0; i < p; ++i)
        if (count[i] == 0)
            front.push_back(i);
    while (!front.empty()) {
        std::vector<std::size_t> next;
        for (auto i : front)
            for (auto j : dominated[i])
                if (--count[j] == 0)
                    next.push_back(j);
        std::sort(next.begin(), next.end());
        layers.push_back(std::move(front));
        front = std::move(next);
    }
    return layers;
}

namespace detail {

inline double hv_recursive(std::vector<std::vector<double>> pts, const std::vector<double>& ref, std::size_t dims)
{
    if (pts.empty())
        return 0.0;
    if (dims == 1) {
        double lo = ref[0];
        for (const auto& q : pts)
            lo = std::min(lo, q[0]);
        return ref[0] - lo;
    }
    const std::size_t last = dims - 1;
    std::sort(pts.begin(), pts.end(), [&](const auto& a, const auto& b) { return a[last] < b[last]; });
    if (dims == 2) {
        double area = 0.0, best = ref[0];
        for (std::size_t i = 0; i < pts.size(); ++i) {
            best = std::min(best, pts[i][0]);
            const double top = i + 1 < pts.size() ? pts[i + 1][last] : ref[last];
            area += (ref[0] - best) * (top - pts[i][last]);
        }
        return area;
    }
    double vol = 0.0;
    std::vector<std::vector<double>> slice;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        slice.push_back(pts[i]);
        const double top = i + 1 < pts.size() ? pts[i + 1][last] : ref[last];
        const double h = top - pts[i][last];
        if (h > 0.0)
            vol += h * hv_recursive(slice, ref, dims - 1);
    }
    return vol;
}

} // namespace detail

/// Exact dominated hypervolume with respect to `ref` (minimization). Points not strictly below ref are ignored.
inline double hypervolume(const Eigen::MatrixXd& f, const Eigen::VectorXd& ref)
{
    if (f.cols() != ref.size())
        throw DataError("reference point dimension mismatch");
    const auto k = static_cast<std::size_t>(f.cols());
    std::vector<std::vector<double>> pts;
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
        bool inside = true;
        for (Eigen::Index j = 0; j < f.cols(); ++j)
            inside = inside && f(i, j) < ref[j];
        if (!inside)
            continue;
        std::vector<double> q(k);
        for (std::size_t j = 0; j < k; ++j)
            q[j] = f(i, static_cast<Eigen::Index>(j));
        pts.push_back(std::move(q));
    }
    if (pts.empty() || k == 0)
        return 0.0;
    // Only the non-dominated points contribute.
    Eigen::MatrixXd m(static_cast<Eigen::Index>(pts.size()), f.cols());
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = 0; j < k; ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = pts[i][j];
    const auto front = non_dominated_sort(m).front();
    std::vector<std::vector<double>> nd;
    for (auto i : front)
        nd.push_back(pts[i]);
    std::sort(nd.begin(), nd.end());
    nd.erase(std::unique(nd.begin(), nd.end()), nd.end());
    return detail::hv_recursive(std::move(nd), std::vector<double>(ref.data(), ref.data() + ref.size()), k);
}

} // namespace hullopt
