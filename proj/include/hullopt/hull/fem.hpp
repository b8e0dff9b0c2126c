#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "hullopt/common.hpp"
#include "hullopt/hull/model.hpp"

namespace hullopt {

/// Stress fields (MPa) and displacements (m) of one load case.
struct LoadResponse {
    std::array<Eigen::VectorXd, kNumComponents> stress;
    /// Interleaved (u_x, u_z) per node.
    Eigen::VectorXd displacement;
};

struct StressSnapshot {
    Configuration config;
    std::array<LoadResponse, kNumLoads> loads;

    std::size_t element_count() const { return static_cast<std::size_t>(loads[0].stress[0].size()); }
    const Eigen::VectorXd& field(LoadKind l, std::size_t c) const { return loads[static_cast<std::size_t>(l)].stress[c]; }
};

/// Bilinear plane-stress quadrilaterals, 2x2 Gauss quadrature, direct sparse factorization.
/// The sparsity pattern and per-element unit-thickness matrices are built once; solve() is reentrant.
class FemSolver {
public:
    FemSolver(std::vector<Node> nodes, std::vector<std::array<int, 4>> quads, std::vector<int> fixed_dofs,
              const Material& mat)
        : nodes_(std::move(nodes)), quads_(std::move(quads)), mat_(mat)
    {
        const std::size_t ndof = 2 * nodes_.size();
        free_index_.assign(ndof, 0);
        for (int d : fixed_dofs) {
            if (d < 0 || static_cast<std::size_t>(d) >= ndof)
                throw ConfigError("fixed dof out of range");
            free_index_[static_cast<std::size_t>(d)] = -1;
        }
        int nf = 0;
        for (auto& f : free_index_)
            if (f == 0)
                f = nf++;
        n_free_ = nf;

        const double c = mat_.youngs_modulus / (1.0 - mat_.poisson * mat_.poisson);
        d_ << c, c * mat_.poisson, 0.0, c * mat_.poisson, c, 0.0, 0.0, 0.0, c * 0.5 * (1.0 - mat_.poisson);

        unit_k_.resize(quads_.size());
        centroid_stress_.resize(quads_.size());
        for (std::size_t e = 0; e < quads_.size(); ++e)
            element_matrices(e);

        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(quads_.size() * 36);
        for (const auto& q : quads_)
            for (int a = 0; a < 8; ++a)
                for (int b = 0; b < 8; ++b) {
                    const int ra = free_dof(q, a), cb = free_dof(q, b);
                    if (ra >= 0 && cb >= 0 && ra >= cb)
                        trip.emplace_back(ra, cb, 1.0);
                }
        pattern_.resize(n_free_, n_free_);
        pattern_.setFromTriplets(trip.begin(), trip.end());
        pattern_.makeCompressed();

        slots_.resize(quads_.size());
        for (std::size_t e = 0; e < quads_.size(); ++e) {
            for (int a = 0; a < 8; ++a)
                for (int b = 0; b < 8; ++b) {
                    const int ra = free_dof(quads_[e], a), cb = free_dof(quads_[e], b);
                    int slot = -1;
                    if (ra >= 0 && cb >= 0 && ra >= cb) {
                        const int* inner = pattern_.innerIndexPtr();
                        for (int k = pattern_.outerIndexPtr()[cb]; k < pattern_.outerIndexPtr()[cb + 1]; ++k)
                            if (inner[k] == ra) {
                                slot = k;
                                break;
                            }
                    }
                    slots_[e][static_cast<std::size_t>(a * 8 + b)] = slot;
                }
        }
    }

    std::size_t element_count() const noexcept { return quads_.size(); }
    std::size_t node_count() const noexcept { return nodes_.size(); }
    int free_dof_count() const noexcept { return n_free_; }

    /// Full (unconstrained) stiffness in N/m for thickness in mm.
    Eigen::SparseMatrix<double> assemble_full(const std::vector<double>& thickness_mm) const
    {
        check_thickness(thickness_mm);
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(quads_.size() * 64);
        for (std::size_t e = 0; e < quads_.size(); ++e) {
            const double t = thickness_mm[e] * 1e-3;
            for (int a = 0; a < 8; ++a)
                for (int b = 0; b < 8; ++b)
                    trip.emplace_back(dof(quads_[e], a), dof(quads_[e], b), t * unit_k_[e](a, b));
        }
        const auto n = static_cast<Eigen::Index>(2 * nodes_.size());
        Eigen::SparseMatrix<double> k(n, n);
        k.setFromTriplets(trip.begin(), trip.end());
        return k;
    }

    /// Solves K u = f for each right-hand side (N per dof); one factorization shared by all.
    std::vector<LoadResponse> solve(const std::vector<double>& thickness_mm,
                                    const std::vector<const std::vector<double>*>& forces) const
    {
        check_thickness(thickness_mm);
        Eigen::SparseMatrix<double> k = pattern_;
        double* val = k.valuePtr();
        std::fill(val, val + k.nonZeros(), 0.0);
        for (std::size_t e = 0; e < quads_.size(); ++e) {
            const double t = thickness_mm[e] * 1e-3;
            const auto& s = slots_[e];
            for (int a = 0; a < 8; ++a)
                for (int b = 0; b < 8; ++b)
                    if (const int slot = s[static_cast<std::size_t>(a * 8 + b)]; slot >= 0)
                        val[slot] += t * unit_k_[e](a, b);
        }

        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt;
        if (n_free_ > 0) {
            ldlt.compute(k);
            if (ldlt.info() != Eigen::Success)
                throw SolverError("stiffness factorization failed");
            const auto& dv = ldlt.vectorD();
            const double dmax = dv.cwiseAbs().maxCoeff();
            if (!(dv.minCoeff() > 1e-10 * dmax))
                throw SolverError("singular stiffness matrix: insufficient boundary constraints");
        }

        std::vector<LoadResponse> out;
        out.reserve(forces.size());
        const std::size_t ndof = 2 * nodes_.size();
        for (const auto* f : forces) {
            if (f->size() != ndof)
                throw DataError("force vector size does not match the mesh");
            Eigen::VectorXd rhs(n_free_);
            for (std::size_t d = 0; d < ndof; ++d)
                if (free_index_[d] >= 0)
                    rhs[free_index_[d]] = (*f)[d];
            Eigen::VectorXd uf = n_free_ > 0 ? Eigen::VectorXd(ldlt.solve(rhs)) : Eigen::VectorXd(0);
            LoadResponse r;
            r.displacement = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ndof));
            for (std::size_t d = 0; d < ndof; ++d)
                if (free_index_[d] >= 0)
                    r.displacement[static_cast<Eigen::Index>(d)] = uf[free_index_[d]];
            for (auto& s : r.stress)
                s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(quads_.size()));
            for (std::size_t e = 0; e < quads_.size(); ++e) {
                Eigen::Matrix<double, 8, 1> ue;
                for (int a = 0; a < 8; ++a)
                    ue[a] = r.displacement[dof(quads_[e], a)];
                const Eigen::Vector3d sig = centroid_stress_[e] * ue;
                const auto ei = static_cast<Eigen::Index>(e);
                r.stress[static_cast<std::size_t>(StressComponent::Sx)][ei] = sig[0];
                r.stress[static_cast<std::size_t>(StressComponent::Sy)][ei] = sig[1];
                r.stress[static_cast<std::size_t>(StressComponent::Txy)][ei] = sig[2];
            }
            out.push_back(std::move(r));
        }
        return out;
    }

private:
    static int dof(const std::array<int, 4>& q, int a) { return 2 * q[static_cast<std::size_t>(a / 2)] + a % 2; }
    int free_dof(const std::array<int, 4>& q, int a) const { return free_index_[static_cast<std::size_t>(dof(q, a))]; }

    void check_thickness(const std::vector<double>& t) const
    {
        if (t.size() != quads_.size())
            throw DataError("thickness vector size does not match the element count");
        for (double v : t)
            if (!(v > 0.0) || !std::isfinite(v))
                throw DomainError("element thickness must be positive and finite");
    }

    // Strain-displacement matrix and Jacobian determinant at (xi, eta).
    std::pair<Eigen::Matrix<double, 3, 8>, double> strain_matrix(std::size_t e, double xi, double eta) const
    {
        static constexpr std::array<double, 4> sx{-1, 1, 1, -1};
        static constexpr std::array<double, 4> sy{-1, -1, 1, 1};
        Eigen::Matrix<double, 2, 4> dn;
        for (int i = 0; i < 4; ++i) {
            dn(0, i) = 0.25 * sx[static_cast<std::size_t>(i)] * (1 + sy[static_cast<std::size_t>(i)] * eta);
            dn(1, i) = 0.25 * sy[static_cast<std::size_t>(i)] * (1 + sx[static_cast<std::size_t>(i)] * xi);
        }
        Eigen::Matrix<double, 4, 2> xy;
        for (int i = 0; i < 4; ++i) {
            const auto& n = nodes_[static_cast<std::size_t>(quads_[e][static_cast<std::size_t>(i)])];
            xy(i, 0) = n.x;
            xy(i, 1) = n.z;
        }
        const Eigen::Matrix2d jac = dn * xy;
        const double det = jac.determinant();
        if (!(det > 0.0))
            throw ConfigError("element " + std::to_string(e) + " is degenerate or not counter-clockwise");
        const Eigen::Matrix<double, 2, 4> dxy = jac.inverse() * dn;
        Eigen::Matrix<double, 3, 8> b = Eigen::Matrix<double, 3, 8>::Zero();
        for (int i = 0; i < 4; ++i) {
            b(0, 2 * i) = dxy(0, i);
            b(1, 2 * i + 1) = dxy(1, i);
            b(2, 2 * i) = dxy(1, i);
            b(2, 2 * i + 1) = dxy(0, i);
        }
        return {b, det};
    }

    void element_matrices(std::size_t e)
    {
        const double g = 1.0 / std::sqrt(3.0);
        Eigen::Matrix<double, 8, 8> k = Eigen::Matrix<double, 8, 8>::Zero();
        const Eigen::Matrix3d d_pa = d_ * 1e6; // MPa -> Pa
        for (double xi : {-g, g})
            for (double eta : {-g, g}) {
                auto [b, det] = strain_matrix(e, xi, eta);
                k += b.transpose() * d_pa * b * det;
            }
        unit_k_[e] = 0.5 * (k + k.transpose());
        centroid_stress_[e] = d_ * strain_matrix(e, 0.0, 0.0).first;
    }

    std::vector<Node> nodes_;
    std::vector<std::array<int, 4>> quads_;
    Material mat_;
    Eigen::Matrix3d d_;
    std::vector<int> free_index_;
    int n_free_ = 0;
    std::vector<Eigen::Matrix<double, 8, 8>> unit_k_;
    std::vector<Eigen::Matrix<double, 3, 8>> centroid_stress_;
    Eigen::SparseMatrix<double> pattern_;
    std::vector<std::array<int, 64>> slots_;
};

/// High-fidelity oracle bound to one hull model.
class HifiSolver {
public:
    explicit HifiSolver(const HullModel& model) : model_(&model), fem_(make_fem(model)) {}

    StressSnapshot solve(const ParameterSpace& space, const Configuration& x) const
    {
        space.validate(x);
        const auto t = model_->element_thickness(space, x);
        std::vector<const std::vector<double>*> f;
        for (const auto& lc : model_->loads)
            f.push_back(&lc.nodal_forces);
        auto res = fem_->solve(t, f);
        StressSnapshot s;
        s.config = x;
        for (std::size_t l = 0; l < kNumLoads; ++l)
            s.loads[l] = std::move(res[l]);
        return s;
    }

    const HullModel& model() const noexcept { return *model_; }
    const FemSolver& fem() const noexcept { return *fem_; }

private:
    static std::shared_ptr<const FemSolver> make_fem(const HullModel& m)
    {
        std::vector<std::array<int, 4>> quads;
        quads.reserve(m.elements.size());
        for (const auto& e : m.elements)
            quads.push_back(e.nodes);
        return std::make_shared<const FemSolver>(m.nodes, std::move(quads), m.fixed_dofs, m.material);
    }

    const HullModel* model_;
    std::shared_ptr<const FemSolver> fem_;
};

inline StressSnapshot solve_hifi(const HullModel& model, const ParameterSpace& space, const Configuration& x)
{
    return HifiSolver(model).solve(space, x);
}

/// Maximum over load cases of |u_z| at a node, in mm.
inline double vertical_deflection(const StressSnapshot& s, int node)
{
    double out = 0.0;
    for (const auto& l : s.loads) {
        if (node < 0 || 2 * static_cast<Eigen::Index>(node) + 1 >= l.displacement.size())
            throw LookupError("unknown node id " + std::to_string(node));
        out = std::max(out, std::abs(l.displacement[2 * node + 1]) * 1000.0);
    }
    return out;
}

} // namespace hullopt
