#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "hullopt/common.hpp"
#include "hullopt/moo/nds.hpp"

namespace hullopt {

/// Das-Dennis simplex lattice: all k-vectors with entries in {0, 1/H, ..., 1} summing to 1.
inline Eigen::MatrixXd das_dennis(int k, int divisions)
{
    if (k < 1 || divisions < 1)
        throw ConfigError("reference directions need k >= 1 and at least one division");
    std::vector<std::vector<int>> out;
    std::vector<int> cur(static_cast<std::size_t>(k), 0);
    auto rec = [&](auto&& self, int pos, int left) -> void {
        if (pos == k - 1) {
            cur[static_cast<std::size_t>(pos)] = left;
            out.push_back(cur);
            return;
        }
        for (int v = left; v >= 0; --v) {
            cur[static_cast<std::size_t>(pos)] = v;
            self(self, pos + 1, left - v);
        }
    };
    rec(rec, 0, divisions);
    Eigen::MatrixXd w(static_cast<Eigen::Index>(out.size()), k);
    for (std::size_t i = 0; i < out.size(); ++i)
        for (int j = 0; j < k; ++j)
            w(static_cast<Eigen::Index>(i), j) = out[i][static_cast<std::size_t>(j)] / static_cast<double>(divisions);
    return w;
}

/// Smallest division count giving at least `target` directions, capped at `max_divisions`.
inline int default_divisions(int k, std::size_t target, int max_divisions = 12)
{
    auto count = [k](int h) {
        double c = 1.0;
        for (int i = 1; i < k; ++i)
            c = c * (h + i) / i;
        return c;
    };
    int h = 1;
    while (h < max_divisions && count(h) < static_cast<double>(target))
        ++h;
    return h;
}

/// Direction index and perpendicular distance of each row of normalized objectives.
inline void associate(const Eigen::MatrixXd& fn, const Eigen::MatrixXd& refs, std::vector<std::size_t>& dir,
                      std::vector<double>& dist)
{
    const auto p = static_cast<std::size_t>(fn.rows());
    dir.assign(p, 0);
    dist.assign(p, std::numeric_limits<double>::infinity());
    for (Eigen::Index i = 0; i < fn.rows(); ++i) {
        for (Eigen::Index r = 0; r < refs.rows(); ++r) {
            const double w2 = refs.row(r).squaredNorm();
            const double t = fn.row(i).dot(refs.row(r)) / w2;
            const double d = (fn.row(i) - t * refs.row(r)).norm();
            if (d < dist[static_cast<std::size_t>(i)]) {
                dist[static_cast<std::size_t>(i)] = d;
                dir[static_cast<std::size_t>(i)] = static_cast<std::size_t>(r);
            }
        }
    }
}

/// Per-column min-max normalization onto [0, 1]; constant columns map to 0.
inline Eigen::MatrixXd normalize_objectives(const Eigen::MatrixXd& f)
{
    Eigen::MatrixXd out(f.rows(), f.cols());
    for (Eigen::Index j = 0; j < f.cols(); ++j) {
        const double lo = f.col(j).minCoeff(), hi = f.col(j).maxCoeff();
        if (hi > lo)
            out.col(j) = (f.col(j).array() - lo) / (hi - lo);
        else
            out.col(j).setZero();
    }
    return out;
}

struct SurvivorSelection {
    std::vector<std::size_t> selected; // row indices of the input
    std::vector<int> rank;             // layer rank per selected row (0 = non-dominated)
    std::vector<int> niche;            // individuals sharing the reference direction, per selected row
};

/// Layer-wise survivor selection with reference-direction niching on the boundary layer.
/// `divisions` <= 0 picks a lattice with at least `limit` directions.
inline SurvivorSelection select_survivors(const Eigen::MatrixXd& f, std::size_t limit, std::uint64_t seed,
                                          int divisions = 0)
{
    if (limit < 1)
        throw ConfigError("survivor limit must be at least one");
    const auto layers = non_dominated_sort(f);
    const auto p = static_cast<std::size_t>(f.rows());
    std::vector<int> layer_of(p, 0);
    for (std::size_t l = 0; l < layers.size(); ++l)
        for (auto i : layers[l])
            layer_of[i] = static_cast<int>(l);

    std::vector<std::size_t> chosen;
    std::size_t boundary = layers.size();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (chosen.size() + layers[l].size() <= limit) {
            chosen.insert(chosen.end(), layers[l].begin(), layers[l].end());
        } else {
            boundary = l;
            break;
        }
    }
    std::vector<std::size_t> members = chosen;
    if (boundary < layers.size() && chosen.size() < limit)
        members.insert(members.end(), layers[boundary].begin(), layers[boundary].end());

    // Niching over everything considered, used both for truncation and for the reported niche counts.
    const auto k = static_cast<int>(f.cols());
    const int h = divisions > 0 ? divisions : default_divisions(k, limit);
    const Eigen::MatrixXd refs = das_dennis(k, h);
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(members.size()), f.cols());
    for (std::size_t i = 0; i < members.size(); ++i)
        sub.row(static_cast<Eigen::Index>(i)) = f.row(static_cast<Eigen::Index>(members[i]));
    std::vector<std::size_t> dir;
    std::vector<double> dist;
    if (!members.empty())
        associate(normalize_objectives(sub), refs, dir, dist);

    std::vector<int> count(static_cast<std::size_t>(refs.rows()), 0);
    std::vector<std::size_t> picked(chosen.size()); // position in `members` per chosen row
    std::iota(picked.begin(), picked.end(), 0);
    for (std::size_t i = 0; i < chosen.size(); ++i)
        ++count[dir[i]];

    if (members.size() > chosen.size()) {
        // Candidates per direction, closest first (ties: smaller row index).
        std::vector<std::vector<std::size_t>> cand(static_cast<std::size_t>(refs.rows()));
        for (std::size_t i = chosen.size(); i < members.size(); ++i)
            cand[dir[i]].push_back(i);
        for (auto& c : cand)
            std::stable_sort(c.begin(), c.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
        std::vector<std::size_t> next(cand.size(), 0);
        // Seeded order breaks ties between directions with equal niche counts.
        std::vector<std::size_t> order(cand.size());
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
        while (chosen.size() < limit) {
            std::size_t best = cand.size();
            for (auto r : order) {
                if (next[r] >= cand[r].size())
                    continue;
                if (best == cand.size() || count[r] < count[best])
                    best = r;
            }
            if (best == cand.size())
                break;
            const std::size_t i = cand[best][next[best]++];
            chosen.push_back(members[i]);
            picked.push_back(i);
            ++count[best];
        }
    }

    SurvivorSelection out;
    out.selected = chosen;
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        out.rank.push_back(layer_of[chosen[i]]);
        out.niche.push_back(count[dir[picked[i]]]);
    }
    return out;
}

} // namespace hullopt
