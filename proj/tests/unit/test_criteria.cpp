#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hullopt/criteria.hpp"

#include "helpers.hpp"

using namespace hullopt;

TEST(Yield, DirectStressAboveLimit)
{
    EXPECT_TRUE(check_yield({250, 0, 0, 0, 0, 0}));
    EXPECT_FALSE(check_yield({245, 0, 0, 0, 0, 0}));
}

TEST(Yield, ZeroStressIsHealthy) { EXPECT_FALSE(check_yield({0, 0, 0, 0, 0, 0})); }

TEST(Yield, PureShearFailsVonMises)
{
    const StressTensor s{0, 0, 0, 180, 0, 0};
    EXPECT_NEAR(von_mises(s), 311.769145362398, 1e-9);
    EXPECT_TRUE(check_yield(s));
    EXPECT_FALSE(check_yield({0, 0, 0, 150, 0, 0}));
}

TEST(Yield, ThresholdsOverridable)
{
    YieldLimits lim{100, 60, 120};
    EXPECT_TRUE(check_yield({110, 0, 0, 0, 0, 0}, lim));
    EXPECT_FALSE(check_yield({90, 0, 0, 0, 0, 0}, lim));
}

TEST(Yield, MonotoneInEachComponent)
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-400, 400), grow(0, 100);
    for (int trial = 0; trial < 2000; ++trial) {
        StressTensor s;
        for (auto& v : s)
            v = u(rng);
        if (!check_yield(s))
            continue;
        for (std::size_t c = 0; c < kNumComponents; ++c) {
            auto t = s;
            t[c] += std::copysign(grow(rng), t[c]);
            EXPECT_TRUE(check_yield(t));
        }
    }
}

TEST(Buckling, CriticalStressHandValue)
{
    EXPECT_NEAR(critical_stress(4.0, 10.0, 0.7), 151.99, 0.01);
    const auto u = check_buckling({-160, 0, 0, 0, 0, 0}, 0.7, 2.1, 10.0);
    EXPECT_NEAR(u[0], 160.0 / critical_stress(4.0, 10.0, 0.7), 1e-12);
    EXPECT_NEAR(u[0], 1.0527, 1e-3);
    EXPECT_GT(u[0], 1.0);
}

TEST(Buckling, TensionNeverBuckles)
{
    const auto u = check_buckling({200, 0, 0, 0, 0, 0}, 0.7, 2.1, 10.0);
    EXPECT_EQ(u[0], 0.0);
    EXPECT_EQ(u[1], 0.0);
    EXPECT_EQ(u[2], 0.0);
}

TEST(Buckling, DoublingThicknessQuartersUsage)
{
    const StressTensor s{-80, -30, 0, 40, 0, 0};
    const auto a = check_buckling(s, 0.7, 2.1, 9.0);
    const auto b = check_buckling(s, 0.7, 2.1, 18.0);
    for (int k = 0; k < 3; ++k)
        EXPECT_NEAR(b[static_cast<std::size_t>(k)], a[static_cast<std::size_t>(k)] / 4.0, 1e-12);
}

TEST(Buckling, ShearCoefficient)
{
    EXPECT_NEAR(shear_buckling_coefficient(0.7, 2.1), 5.34 + 4.0 / 9.0, 1e-12);
    EXPECT_THROW(check_buckling({}, 0.0, 1.0, 10.0), DomainError);
    EXPECT_THROW(check_buckling({}, 0.7, 1.0, 0.0), DomainError);
}

namespace {

ParameterSpace two_param_space(double vcg0, double vcg1)
{
    std::vector<ParameterDef> defs(2);
    defs[0].name = "a";
    defs[0].patch_ids = {0};
    defs[0].domain = {5, 10};
    defs[0].linear_density = 1.0;
    defs[0].vcg = vcg0;
    defs[1].name = "b";
    defs[1].patch_ids = {1};
    defs[1].domain = {2, 5};
    defs[1].linear_density = 2.0;
    defs[1].vcg = vcg1;
    return ParameterSpace(defs, 2);
}

} // namespace

TEST(Qoi, MassFormula)
{
    PenaltyConfig pen;
    pen.m_fixed = 100;
    pen.m_bar = 0.05;
    const auto q = assemble_qois(0, 10, 0.0, two_param_space(1, 2), {10, 5}, pen);
    EXPECT_NEAR(q.mass, 120.5, 1e-12);
}

TEST(Qoi, UniformVcgIsConstant)
{
    PenaltyConfig pen;
    pen.m_fixed = 50;
    pen.vcg_fixed = 10;
    const auto s = two_param_space(10, 10);
    for (double a : s[0].domain)
        for (double b : s[1].domain)
            EXPECT_NEAR(assemble_qois(0, 0, 0, s, {a, b}, pen).vcg, 10.0, 1e-12);
}

TEST(Qoi, MassAffineAtFixedCounts)
{
    PenaltyConfig pen;
    pen.m_fixed = 30;
    pen.m_bar = 0.2;
    const auto s = two_param_space(1, 2);
    const auto a = assemble_qois(3, 4, 0, s, {5, 2}, pen);
    const auto b = assemble_qois(3, 4, 0, s, {10, 5}, pen);
    EXPECT_NEAR(b.mass - a.mass, 1.0 * 5 + 2.0 * 3, 1e-12);
}

TEST(Qoi, ZeroLoadSnapshotHasNoFailures)
{
    auto spec = test::small_spec();
    spec.end_moment = 0;
    const auto m = build_demo_model(spec);
    const auto snap = solve_hifi(m, m.space, m.default_config);
    PenaltyConfig pen;
    pen.m_fixed = m.m_fixed;
    pen.vcg_fixed = m.vcg_fixed;
    FailureEvaluator ev(m.elements, m.material, pen.yield);
    const auto q = compute_qois(snap, m, m.space, ev, pen, m.monitored_node);
    EXPECT_EQ(q.n_y, 0);
    EXPECT_EQ(q.n_b, 0);
    EXPECT_EQ(q.deflection, 0.0);
    EXPECT_GT(q.mass, 0.0);
    EXPECT_GE(q.vcg, 0.0);
}

TEST(Qoi, PatchCountsSumToTotals)
{
    auto spec = test::small_spec();
    spec.end_moment = 6e7;
    const auto m = build_demo_model(spec);
    const auto snap = solve_hifi(m, m.space, m.default_config);
    FailureEvaluator ev(m.elements, m.material, YieldLimits{});
    const auto fs = ev.evaluate(snap, m.element_thickness(m.space, m.default_config));
    const auto [y, b] = patch_counts(fs, m);
    int ty = 0, tb = 0, fy = 0, fb = 0;
    for (std::size_t p = 0; p < y.size(); ++p) {
        ty += y[p];
        tb += b[p];
    }
    for (const auto& e : m.elements)
        if (e.patch_id < 0) {
            fy += fs.yielded[static_cast<std::size_t>(e.id)];
            fb += fs.buckled[static_cast<std::size_t>(e.id)];
        }
    EXPECT_GT(count_flags(fs.buckled), 0);
    EXPECT_EQ(ty + fy, count_flags(fs.yielded));
    EXPECT_EQ(tb + fb, count_flags(fs.buckled));
}

TEST(Qoi, EvaluatorMatchesScalarChecks)
{
    auto spec = test::small_spec();
    spec.end_moment = 6e7;
    const auto m = build_demo_model(spec);
    const auto snap = solve_hifi(m, m.space, m.default_config);
    FailureEvaluator ev(m.elements, m.material, YieldLimits{});
    const auto t = m.element_thickness(m.space, m.default_config);
    const auto fs = ev.evaluate(snap, t);
    for (std::size_t e = 0; e < m.element_count(); ++e) {
        bool y = false, b = false;
        for (const auto& l : snap.loads) {
            StressTensor s;
            for (std::size_t c = 0; c < kNumComponents; ++c)
                s[c] = l.stress[c][static_cast<Eigen::Index>(e)];
            y = y || check_yield(s);
            const auto u = check_buckling(s, m.elements[e], t[e]);
            b = b || u[0] > 1 || u[1] > 1 || u[2] > 1;
        }
        EXPECT_EQ(fs.yielded[e] != 0, y);
        EXPECT_EQ(fs.buckled[e] != 0, b);
    }
}

TEST(Penalty, InactiveWithinThresholds)
{
    PenaltyConfig pen;
    pen.c_y = 3;
    pen.c_b = 4;
    pen.y_crit = 10;
    pen.b_crit = 10;
    QoiVector q;
    q.mass = 120.5;
    q.n_y = 10;
    q.n_b = 3;
    EXPECT_EQ(penalized_mass(q, pen), q.mass);
}

TEST(Penalty, YieldExcessHandValue)
{
    PenaltyConfig pen;
    pen.c_y = 0.01;
    pen.y_crit = 200;
    pen.b_crit = 100;
    QoiVector q;
    q.mass = 120.5;
    q.n_y = 210;
    q.n_b = 50;
    EXPECT_NEAR(penalized_mass(q, pen), 121.5, 1e-12);
    q.n_y = 220;
    EXPECT_NEAR(penalized_mass(q, pen) - q.mass, 4.0, 1e-12);
}

TEST(Penalty, NeverBelowMass)
{
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> cnt(0, 50);
    PenaltyConfig pen;
    pen.c_y = 0.3;
    pen.c_b = 0.7;
    pen.y_crit = 20;
    pen.b_crit = 25;
    for (int k = 0; k < 500; ++k) {
        QoiVector q;
        q.mass = 10;
        q.n_y = cnt(rng);
        q.n_b = cnt(rng);
        const double f = penalized_mass(q, pen);
        EXPECT_GE(f, q.mass);
        EXPECT_EQ(f == q.mass, q.n_y <= pen.y_crit && q.n_b <= pen.b_crit);
    }
}

TEST(Penalty, DeflectionTermOnlyWhenConfigured)
{
    PenaltyConfig pen;
    pen.c_d = 2.0;
    QoiVector q;
    q.mass = 5;
    q.deflection = 30;
    EXPECT_EQ(penalized_mass(q, pen), 5.0);
    pen.deflection_crit = 20.0;
    EXPECT_NEAR(penalized_mass(q, pen), 5.0 + 200.0, 1e-12);
}

TEST(MassGap, HandValues)
{
    std::vector<ParameterDef> defs(2);
    for (int i = 0; i < 2; ++i) {
        defs[static_cast<std::size_t>(i)].name = "p" + std::to_string(i);
        defs[static_cast<std::size_t>(i)].patch_ids = {i};
        defs[static_cast<std::size_t>(i)].domain = {50, 52, 53};
        defs[static_cast<std::size_t>(i)].linear_density = 1.0;
    }
    ParameterSpace s(defs, 2);
    PenaltyConfig pen;
    const Configuration lb{50, 50};
    QoiVector q;
    EXPECT_NEAR(mass_gap({52, 53}, q, pen, s, lb), 5.0, 1e-12);
    EXPECT_EQ(mass_gap(lb, q, pen, s, lb), 0.0);
}

TEST(MassGap, ZeroDenominatorRejected)
{
    std::vector<ParameterDef> defs(1);
    defs[0].name = "p";
    defs[0].patch_ids = {0};
    defs[0].domain = {1};
    defs[0].linear_density = 0.0;
    ParameterSpace s(defs, 1);
    EXPECT_THROW(mass_gap({1}, QoiVector{}, PenaltyConfig{}, s, {1}), DomainError);
}
