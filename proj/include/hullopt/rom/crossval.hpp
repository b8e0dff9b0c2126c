#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "hullopt/common.hpp"
#include "hullopt/rom/surrogate.hpp"

namespace hullopt {

struct Quantiles {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Linear-interpolation quantiles of a sample.
inline Quantiles quantiles(std::vector<double> v)
{
    if (v.empty())
        return {};
    std::sort(v.begin(), v.end());
    auto at = [&](double p) {
        const double pos = p * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    return {v.front(), at(0.25), at(0.5), at(0.75), v.back()};
}

struct CvResult {
    int rank = 0;
    std::string qoi; // "n_y" or "n_b"
    /// (predicted - true) / critical threshold, one entry per held-out sample.
    std::vector<double> errors;
    Quantiles summary;
};

/// Fold index per entry: seeded permutation, then round-robin.
inline std::vector<int> fold_assignment(std::size_t n, int folds, std::uint64_t seed)
{
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> fold(n);
    for (std::size_t k = 0; k < n; ++k)
        fold[perm[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
    return fold;
}

inline std::vector<CvResult> cross_validate(const SnapshotDatabase& db, const HullModel& model,
                                            const ParameterSpace& space, const PenaltyConfig& pen,
                                            const std::vector<int>& ranks, int folds, SurrogateFitOptions opt,
                                            std::uint64_t seed)
{
    if (folds < 2)
        throw ConfigError("cross-validation needs at least two folds");
    if (db.size() < static_cast<std::size_t>(folds))
        throw DataError("database has fewer entries than folds");
    if (db.size() - (db.size() + static_cast<std::size_t>(folds) - 1) / static_cast<std::size_t>(folds) < 2)
        throw DataError("database too small: training folds need at least two entries");
    const auto fold = fold_assignment(db.size(), folds, seed);
    const double ycrit = pen.y_crit > 0 ? pen.y_crit : 1.0;
    const double bcrit = pen.b_crit > 0 ? pen.b_crit : 1.0;

    std::vector<CvResult> out;
    for (int r : ranks) {
        if (r < 1)
            throw ConfigError("cross-validation ranks must be positive");
        CvResult ey{r, "n_y", {}, {}}, eb{r, "n_b", {}, {}};
        for (int k = 0; k < folds; ++k) {
            SnapshotDatabase train;
            std::vector<std::size_t> held;
            for (std::size_t i = 0; i < db.size(); ++i) {
                if (fold[i] == k)
                    held.push_back(i);
                else
                    train.add(db[i]);
            }
            opt.policy = RankPolicy::fixed(r);
            opt.gpr.seed = derive_seed(seed, static_cast<std::uint64_t>(r * 1000 + k));
            const auto sm = surrogate_fit(train, space, model.monitored_node, opt);
            SurrogateEvaluator ev(sm, model, space, pen);
            std::vector<Configuration> xs;
            for (auto i : held)
                xs.push_back(db[i].config);
            const auto pred = ev.qois(xs);
            for (std::size_t h = 0; h < held.size(); ++h) {
                ey.errors.push_back((pred[h].n_y - db[held[h]].qoi.n_y) / ycrit);
                eb.errors.push_back((pred[h].n_b - db[held[h]].qoi.n_b) / bcrit);
            }
        }
        ey.summary = quantiles(ey.errors);
        eb.summary = quantiles(eb.errors);
        out.push_back(std::move(ey));
        out.push_back(std::move(eb));
    }
    return out;
}

} // namespace hullopt
