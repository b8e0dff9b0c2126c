#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "hullopt/hull/fem.hpp"
#include "hullopt/hull/model.hpp"
#include "hullopt/hull/snapshot_io.hpp"

#include "helpers.hpp"

using namespace hullopt;

namespace {

ModelSpec five_region_spec()
{
    auto s = test::small_spec(16, 8);
    s.inner_bottom_rows = 1;
    s.internal_bulkhead_cols = {8};
    s.groups = {
        {"x1", {"bottom", "inner_bottom"}, test::range_domain(12, 0.5, 14), 14},
        {"x2", {"deck"}, test::range_domain(5, 2.5, 5), 5},
        {"x3", {"external_bulkhead"}, test::range_domain(8, 0.5, 14), 10},
        {"x4", {"internal_bulkhead"}, test::range_domain(5, 1, 8), 5},
        {"x5", {"shell"}, test::range_domain(8, 1, 8), 8},
    };
    return s;
}

FemSolver unit_square(std::vector<int> fixed)
{
    std::vector<Node> nodes{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    return FemSolver(nodes, {{0, 1, 2, 3}}, std::move(fixed), Material{});
}

} // namespace

TEST(HullModel, FiveRegionDomainHas62720Configurations)
{
    const auto m = build_demo_model(five_region_spec());
    EXPECT_EQ(m.space.size(), 5u);
    EXPECT_DOUBLE_EQ(m.space.total_configurations(), 62720.0);
}

TEST(HullModel, SingleValueDomainHasOneConfiguration)
{
    auto s = test::small_spec();
    s.groups = {{"all", {"bottom", "deck", "external_bulkhead", "shell"}, {10}, 10}};
    const auto m = build_demo_model(s);
    EXPECT_DOUBLE_EQ(m.space.total_configurations(), 1.0);
    EXPECT_TRUE(m.space.contains({10}));
    EXPECT_FALSE(m.space.contains({11}));
}

TEST(HullModel, TwoRegionProductEnumeration)
{
    auto s = test::small_spec();
    s.groups = {{"a", {"bottom"}, {1, 2, 3}, 1}, {"b", {"shell"}, {4, 5, 6}, 4}};
    const auto m = build_demo_model(s);
    std::set<Configuration> seen;
    for (double a : m.space[0].domain)
        for (double b : m.space[1].domain) {
            EXPECT_TRUE(m.space.contains({a, b}));
            seen.insert({a, b});
        }
    EXPECT_EQ(seen.size(), 9u);
    EXPECT_DOUBLE_EQ(m.space.total_configurations(), 9.0);
}

TEST(HullModel, InvalidSpecsRejected)
{
    auto s = test::small_spec();
    s.nx = 0;
    EXPECT_THROW(build_demo_model(s), ConfigError);
    s = test::small_spec();
    s.groups[0].domain.clear();
    EXPECT_THROW(build_demo_model(s), ConfigError);
    s = test::small_spec();
    s.groups.clear();
    EXPECT_THROW(build_demo_model(s), ConfigError);
    s = test::small_spec();
    s.groups[1].domain = {8, 6};
    EXPECT_THROW(build_demo_model(s), ConfigError);
}

TEST(HullModel, MeshPartition)
{
    const auto m = build_demo_model(five_region_spec());
    std::size_t in_patches = 0;
    std::set<int> seen;
    for (const auto& p : m.patches) {
        EXPECT_FALSE(p.element_ids.empty());
        EXPECT_GT(p.linear_density_coeff, 0.0);
        in_patches += p.element_ids.size();
        for (int e : p.element_ids)
            EXPECT_TRUE(seen.insert(e).second);
    }
    EXPECT_EQ(in_patches, m.parameterized_element_count());
    std::size_t fixed = 0;
    for (const auto& e : m.elements)
        fixed += e.patch_id < 0;
    EXPECT_EQ(in_patches + fixed, m.element_count());
}

TEST(HullModel, ParameterDensityAndVcgAggregatePatches)
{
    const auto m = build_demo_model(five_region_spec());
    for (const auto& p : m.space.params()) {
        double d = 0.0, mom = 0.0;
        for (int pid : p.patch_ids) {
            d += m.patches[static_cast<std::size_t>(pid)].linear_density_coeff;
            mom += m.patches[static_cast<std::size_t>(pid)].linear_density_coeff
                   * m.patches[static_cast<std::size_t>(pid)].vcg_p;
        }
        EXPECT_NEAR(p.linear_density, d, 1e-12 * d);
        EXPECT_NEAR(p.vcg, mom / d, 1e-12);
    }
}

TEST(HullModel, DeterministicConstruction)
{
    const auto a = build_demo_model(five_region_spec());
    const auto b = build_demo_model(five_region_spec());
    EXPECT_EQ(a.patches.size(), b.patches.size());
    EXPECT_EQ(a.loads[0].nodal_forces, b.loads[0].nodal_forces);
    EXPECT_EQ(a.space.patch_owner(), b.space.patch_owner());
}

TEST(HullModel, SpecJsonRoundTrip)
{
    const auto s = five_region_spec();
    const auto s2 = model_spec_from_json(model_spec_to_json(s));
    const auto a = build_demo_model(s);
    const auto b = build_demo_model(s2);
    EXPECT_EQ(a.loads[1].nodal_forces, b.loads[1].nodal_forces);
    EXPECT_EQ(a.default_config, b.default_config);
}

TEST(Fem, PatchTestUniaxialTraction)
{
    const auto fem = unit_square({0, 1, 6});
    std::vector<double> f(8, 0.0);
    f[2] = f[4] = 0.5e6; // 1e6 N/m over a 1 m edge
    for (double t : {10.0, 20.0}) {
        const auto r = fem.solve({t}, {&f});
        const double expected = 1e6 / (t * 1e-3) / 1e6;
        EXPECT_NEAR(r[0].stress[0][0], expected, 1e-9 * expected);
        EXPECT_NEAR(r[0].stress[1][0], 0.0, 1e-9 * expected);
        EXPECT_NEAR(r[0].stress[3][0], 0.0, 1e-9 * expected);
    }
}

TEST(Fem, DoublingThicknessHalvesStress)
{
    const auto fem = unit_square({0, 1, 6});
    std::vector<double> f(8, 0.0);
    f[2] = 3e5;
    f[4] = 2e5;
    f[5] = 1e5;
    f[3] = -1e5;
    const auto a = fem.solve({8.0}, {&f});
    const auto b = fem.solve({16.0}, {&f});
    for (std::size_t c = 0; c < kNumComponents; ++c)
        EXPECT_NEAR(b[0].stress[c][0], 0.5 * a[0].stress[c][0], 1e-9 * (1.0 + std::abs(a[0].stress[c][0])));
}

TEST(Fem, ZeroLoadGivesZeroResponse)
{
    auto s = test::small_spec();
    s.end_moment = 0.0;
    const auto m = build_demo_model(s);
    const auto snap = solve_hifi(m, m.space, m.default_config);
    for (const auto& l : snap.loads) {
        for (const auto& f : l.stress)
            EXPECT_EQ(f.cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ(l.displacement.cwiseAbs().maxCoeff(), 0.0);
    }
    EXPECT_EQ(vertical_deflection(snap, m.monitored_node), 0.0);
}

TEST(Fem, StiffnessIsSymmetric)
{
    const auto m = build_demo_model(test::small_spec());
    HifiSolver hf(m);
    const auto k = hf.fem().assemble_full(m.element_thickness(m.space, m.default_config));
    const Eigen::SparseMatrix<double> diff = k - Eigen::SparseMatrix<double>(k.transpose());
    EXPECT_LE(diff.norm(), 1e-12 * k.norm());
}

TEST(Fem, SingularStiffnessDetected)
{
    const auto fem = unit_square({});
    std::vector<double> f(8, 0.0);
    EXPECT_THROW(fem.solve({10.0}, {&f}), SolverError);
}

TEST(Fem, NonMemberThicknessRejected)
{
    const auto m = build_demo_model(test::small_spec());
    auto x = m.default_config;
    x[0] = 9.0;
    EXPECT_THROW(solve_hifi(m, m.space, x), DomainError);
}

TEST(Fem, HoggingSaggingMirrored)
{
    const auto m = build_demo_model(test::small_spec());
    const auto s = solve_hifi(m, m.space, m.default_config);
    const auto& hog = s.field(LoadKind::Hogging, 0);
    const auto& sag = s.field(LoadKind::Sagging, 0);
    EXPECT_GT(hog.norm(), 0.0);
    EXPECT_LE((hog + sag).norm(), 1e-9 * hog.norm());
    // Tension on top under hogging.
    EXPECT_GT(hog[static_cast<Eigen::Index>(m.element_count() - 1)], 0.0);
}

TEST(Fem, PlaneStressLeavesOutOfPlaneZero)
{
    const auto m = build_demo_model(test::small_spec());
    const auto s = solve_hifi(m, m.space, m.default_config);
    for (const auto& l : s.loads)
        for (auto c : {StressComponent::Sz, StressComponent::Txz, StressComponent::Tyz})
            EXPECT_EQ(l.stress[static_cast<std::size_t>(c)].cwiseAbs().maxCoeff(), 0.0);
}

TEST(Fem, SolveIsDeterministic)
{
    auto spec = test::small_spec();
    spec.pressure = 5e3;
    spec.wave_load = 2e4;
    const auto m = build_demo_model(spec);
    HifiSolver hf(m);
    const auto a = hf.solve(m.space, m.default_config);
    const auto b = hf.solve(m.space, m.default_config);
    for (std::size_t l = 0; l < kNumLoads; ++l) {
        for (std::size_t c = 0; c < kNumComponents; ++c)
            EXPECT_EQ(a.loads[l].stress[c], b.loads[l].stress[c]);
        EXPECT_EQ(a.loads[l].displacement, b.loads[l].displacement);
    }
}

TEST(Deflection, MaxAbsoluteOverLoadCases)
{
    StressSnapshot s;
    for (auto& l : s.loads) {
        l.displacement = Eigen::VectorXd::Zero(4);
        for (auto& f : l.stress)
            f = Eigen::VectorXd::Zero(1);
    }
    s.loads[0].displacement[3] = -0.14;
    s.loads[1].displacement[3] = 0.02;
    EXPECT_NEAR(vertical_deflection(s, 1), 140.0, 1e-12);
    EXPECT_THROW(vertical_deflection(s, 2), LookupError);
    EXPECT_THROW(vertical_deflection(s, -1), LookupError);
}

TEST(Deflection, ConstrainedNodeIsZero)
{
    auto spec = test::small_spec();
    spec.monitored_node = 0;
    spec.pressure = 1e4;
    const auto m = build_demo_model(spec);
    const auto s = solve_hifi(m, m.space, m.default_config);
    EXPECT_EQ(vertical_deflection(s, m.monitored_node), 0.0);
    EXPECT_GT(vertical_deflection(s, spec.nx / 2), 0.0);
}

TEST(SnapshotIo, RoundTripIsBitIdentical)
{
    const auto m = build_demo_model(test::small_spec());
    const auto s = solve_hifi(m, m.space, m.default_config);
    const auto dir = std::filesystem::temp_directory_path() / "hullopt_snapshot_rt";
    std::filesystem::remove_all(dir);
    save_snapshot(dir, s);
    const auto r = load_snapshot(dir);
    EXPECT_EQ(r.config, s.config);
    for (std::size_t l = 0; l < kNumLoads; ++l) {
        for (std::size_t c = 0; c < kNumComponents; ++c)
            EXPECT_EQ(r.loads[l].stress[c], s.loads[l].stress[c]);
        EXPECT_EQ(r.loads[l].displacement, s.loads[l].displacement);
    }
    std::filesystem::remove_all(dir);
}

TEST(ParameterSpace, LiftCopiesParentValue)
{
    std::vector<ParameterDef> defs(3);
    defs[0].name = "a";
    defs[0].patch_ids = {0};
    defs[0].domain = {1, 2};
    defs[1].name = "b";
    defs[1].patch_ids = {1};
    defs[1].domain = {3, 4};
    defs[2].name = "a1";
    defs[2].patch_ids = {2};
    defs[2].domain = {1, 2};
    defs[2].parent = 0;
    ParameterSpace s(defs, 3);
    EXPECT_EQ(s.lift({2, 3}), (Configuration{2, 3, 2}));
    defs[2].parent = 2;
    EXPECT_THROW(ParameterSpace(defs, 3), ConfigError);
}
