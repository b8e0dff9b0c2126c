#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "hullopt/common.hpp"

namespace hullopt {

struct RankPolicy {
    enum class Kind { Fixed, Energy };
    Kind kind = Kind::Energy;
    int rank = 0;      // Fixed
    double tau = 0.01; // Energy: keep modes with sigma_k / sigma_1 >= tau

    static RankPolicy fixed(int r) { return {Kind::Fixed, r, 0.01}; }
    static RankPolicy energy(double tau = 0.01) { return {Kind::Energy, 0, tau}; }
};

struct PodBasis {
    Eigen::MatrixXd basis;           // n x r
    Eigen::VectorXd singular_values; // min(n, m), descending
    int rank = 0;
    /// All-zero snapshot matrix: basis is a single zero column.
    bool degenerate = false;

    Eigen::Index size() const { return basis.rows(); }

    static PodBasis zero(Eigen::Index n, Eigen::Index m)
    {
        PodBasis p;
        p.basis = Eigen::MatrixXd::Zero(n, 1);
        p.singular_values = Eigen::VectorXd::Zero(std::min(n, m));
        p.rank = 1;
        p.degenerate = true;
        return p;
    }
};

/// Number of modes kept by the energy policy: every retained sigma_k / sigma_1 >= tau.
inline int energy_rank(const Eigen::VectorXd& sv, double tau)
{
    if (sv.size() == 0 || !(sv[0] > 0.0))
        return 0;
    int r = 0;
    while (r < sv.size() && sv[r] / sv[0] >= tau)
        ++r;
    return r;
}

inline PodBasis pod_fit(const Eigen::MatrixXd& snapshots, const RankPolicy& policy)
{
    if (snapshots.cols() < 1 || snapshots.rows() < 1)
        throw FitError("POD needs at least one snapshot");
    if (!snapshots.allFinite())
        throw FitError("POD snapshot matrix has non-finite entries");
    if (snapshots.cwiseAbs().maxCoeff() == 0.0)
        throw FitError("degenerate POD basis: all snapshots are zero");

    Eigen::BDCSVD<Eigen::MatrixXd> svd(snapshots, Eigen::ComputeThinU);
    PodBasis p;
    p.singular_values = svd.singularValues();
    const auto max_rank = static_cast<int>(p.singular_values.size());
    int r = policy.kind == RankPolicy::Kind::Energy ? energy_rank(p.singular_values, policy.tau) : policy.rank;
    if (policy.kind == RankPolicy::Kind::Fixed && r < 1)
        throw ConfigError("fixed POD rank must be at least 1");
    r = std::clamp(r, 1, max_rank);
    p.rank = r;
    p.basis = svd.matrixU().leftCols(r);
    return p;
}

inline Eigen::VectorXd reduce(const PodBasis& p, const Eigen::VectorXd& s)
{
    if (s.size() != p.basis.rows())
        throw DataError("snapshot length does not match the POD basis");
    return p.basis.transpose() * s;
}

inline Eigen::VectorXd reconstruct(const PodBasis& p, const Eigen::VectorXd& c)
{
    if (c.size() != p.basis.cols())
        throw DataError("coefficient count does not match the POD rank");
    return p.basis * c;
}

/// Frobenius norm of the discarded tail: sqrt(sum_{k>r} sigma_k^2).
inline double truncation_error(const PodBasis& p)
{
    if (p.rank >= p.singular_values.size())
        return 0.0;
    return p.singular_values.tail(p.singular_values.size() - p.rank).norm();
}

} // namespace hullopt
