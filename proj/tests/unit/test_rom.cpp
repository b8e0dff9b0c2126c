#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>

#include "hullopt/rom/crossval.hpp"
#include "hullopt/rom/gpr.hpp"
#include "hullopt/rom/pod.hpp"
#include "hullopt/rom/surrogate.hpp"

#include "helpers.hpp"

using namespace hullopt;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index n, Eigen::Index m, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Eigen::MatrixXd a(n, m);
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
            a(i, j) = g(rng);
    return a;
}

// Low-rank plus small noise so that the energy policy truncates.
Eigen::MatrixXd decaying_matrix(Eigen::Index n, Eigen::Index m, std::uint64_t seed)
{
    Eigen::MatrixXd u = random_matrix(n, m, seed);
    Eigen::MatrixXd v = random_matrix(m, m, seed + 1);
    Eigen::VectorXd s(m);
    for (Eigen::Index k = 0; k < m; ++k)
        s[k] = std::pow(0.3, static_cast<double>(k));
    return u * s.asDiagonal() * v;
}

} // namespace

TEST(Pod, SingleSnapshot)
{
    Eigen::MatrixXd s(4, 1);
    s << 1, 2, 2, 4;
    const auto p = pod_fit(s, RankPolicy::energy());
    EXPECT_EQ(p.rank, 1);
    EXPECT_NEAR(p.singular_values[0], 5.0, 1e-12);
    EXPECT_NEAR(std::abs(p.basis.col(0).dot(s.col(0) / 5.0)), 1.0, 1e-12);
}

TEST(Pod, OrthogonalColumnsGiveTheirNorms)
{
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(5, 2);
    s(0, 0) = 3.0;
    s(2, 1) = 4.0;
    const auto p = pod_fit(s, RankPolicy::fixed(2));
    EXPECT_NEAR(p.singular_values[0], 4.0, 1e-12);
    EXPECT_NEAR(p.singular_values[1], 3.0, 1e-12);
}

TEST(Pod, FrobeniusErrorMatchesDiscardedSingularValues)
{
    const Eigen::MatrixXd s = random_matrix(200, 12, 5);
    for (int r = 1; r <= 12; ++r) {
        const auto p = pod_fit(s, RankPolicy::fixed(r));
        const Eigen::MatrixXd rec = p.basis * (p.basis.transpose() * s);
        const double err = (s - rec).norm();
        const double expected = truncation_error(p);
        EXPECT_NEAR(err, expected, 1e-8 * std::max(expected, 1e-300) + 1e-12 * s.norm());
        EXPECT_LE((p.basis.transpose() * p.basis - Eigen::MatrixXd::Identity(r, r)).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Pod, EnergyPolicySplitsAtTau)
{
    const Eigen::MatrixXd s = decaying_matrix(300, 10, 11);
    const auto p = pod_fit(s, RankPolicy::energy(0.01));
    EXPECT_LT(p.rank, 10);
    for (Eigen::Index k = 0; k < p.singular_values.size(); ++k) {
        const double rel = p.singular_values[k] / p.singular_values[0];
        if (k < p.rank)
            EXPECT_GE(rel, 0.01);
        else
            EXPECT_LT(rel, 0.01);
    }
    for (Eigen::Index k = 1; k < p.singular_values.size(); ++k)
        EXPECT_LE(p.singular_values[k], p.singular_values[k - 1]);
}

TEST(Pod, AllZeroIsDegenerate)
{
    EXPECT_THROW(pod_fit(Eigen::MatrixXd::Zero(5, 3), RankPolicy::energy()), FitError);
}

TEST(Pod, ReduceReconstructIdentities)
{
    const Eigen::MatrixXd s = random_matrix(50, 6, 2);
    const auto p = pod_fit(s, RankPolicy::fixed(3));
    const Eigen::VectorXd in_span = p.basis * Eigen::Vector3d(1.0, -2.0, 0.5);
    EXPECT_LE((reconstruct(p, reduce(p, in_span)) - in_span).norm(), 1e-10);

    Eigen::VectorXd v = random_matrix(50, 1, 9).col(0);
    const Eigen::VectorXd orth = v - p.basis * (p.basis.transpose() * v);
    EXPECT_LE(reduce(p, orth).norm(), 1e-10);

    const Eigen::VectorXd c = reduce(p, v);
    const Eigen::VectorXd uc = reconstruct(p, c);
    EXPECT_NEAR((v - uc).squaredNorm() + uc.squaredNorm(), v.squaredNorm(), 1e-10 * v.squaredNorm());
    EXPECT_THROW(reduce(p, Eigen::VectorXd::Zero(49)), DataError);
}

namespace {

GprModel fit_1d(double noise)
{
    Eigen::MatrixXd x(5, 1), y(5, 1);
    for (int i = 0; i < 5; ++i) {
        x(i, 0) = i / 4.0;
        y(i, 0) = i / 4.0;
    }
    GprOptions opt;
    opt.fixed_noise = noise;
    return GprModel::fit(x, y, opt);
}

} // namespace

TEST(Gpr, KernelAtZeroDistanceIsSignalVariance)
{
    Eigen::VectorXd th(4);
    th << std::log(2.5), std::log(0.3), std::log(1.7), std::log(1e-4);
    Eigen::MatrixXd x(3, 2);
    x << 0.1, 0.2, 0.5, 0.9, 1.0, 0.0;
    const auto k = GprModel::kernel(x, x, th);
    for (int i = 0; i < 3; ++i)
        EXPECT_NEAR(k(i, i), 2.5, 1e-12);
}

TEST(Gpr, InterpolatesTrainingPoints)
{
    const auto g = fit_1d(1e-10);
    Eigen::MatrixXd x(5, 1);
    for (int i = 0; i < 5; ++i)
        x(i, 0) = i / 4.0;
    const auto p = g.predict(x);
    for (int i = 0; i < 5; ++i) {
        EXPECT_NEAR(p.mean(i, 0), i / 4.0, 1e-6 * std::max(1.0, i / 4.0));
        EXPECT_LE(p.variance[i], g.noise_variance() + g.jitter() + 1e-8);
    }
}

TEST(Gpr, FarQueryRevertsToPrior)
{
    const auto g = fit_1d(1e-8);
    Eigen::MatrixXd q(1, 1);
    q(0, 0) = 1e3;
    const auto p = g.predict(q);
    EXPECT_NEAR(p.mean(0, 0), 0.0, 1e-12);
    EXPECT_NEAR(p.variance[0], g.signal_variance(), 1e-12);
}

TEST(Gpr, BatchEqualsSingleQueries)
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    Eigen::MatrixXd x(12, 3), y(12, 2);
    for (int i = 0; i < 12; ++i) {
        for (int d = 0; d < 3; ++d)
            x(i, d) = u(rng);
        y(i, 0) = std::sin(3 * x(i, 0)) + x(i, 1);
        y(i, 1) = x(i, 2) * x(i, 0);
    }
    const auto g = GprModel::fit(x, y);
    Eigen::MatrixXd q(7, 3);
    for (int i = 0; i < 7; ++i)
        for (int d = 0; d < 3; ++d)
            q(i, d) = u(rng);
    const auto batch = g.predict(q);
    for (int i = 0; i < 7; ++i) {
        const auto one = g.predict(q.row(i));
        for (int c = 0; c < 2; ++c)
            EXPECT_NEAR(batch.mean(i, c), one.mean(0, c), 1e-12 * (1 + std::abs(one.mean(0, c))));
        EXPECT_NEAR(batch.variance[i], one.variance[0], 1e-12);
    }
}

TEST(Gpr, LikelihoodGradientMatchesFiniteDifferences)
{
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0, 1);
    Eigen::MatrixXd x(15, 3), y(15, 2);
    for (int i = 0; i < 15; ++i) {
        for (int d = 0; d < 3; ++d)
            x(i, d) = u(rng);
        y(i, 0) = std::cos(2 * x(i, 0)) - x(i, 2);
        y(i, 1) = x(i, 1) * x(i, 1);
    }
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd th(5);
        th << std::log(0.2 + 3 * u(rng)), std::log(0.1 + u(rng)), std::log(0.1 + u(rng)), std::log(0.1 + u(rng)),
            std::log(1e-3 + 0.1 * u(rng));
        Eigen::VectorXd g;
        GprModel::log_likelihood(x, y, th, &g);
        for (int k = 0; k < 5; ++k) {
            const double h = 1e-5;
            Eigen::VectorXd a = th, b = th;
            a[k] += h;
            b[k] -= h;
            const double fd = (GprModel::log_likelihood(x, y, a) - GprModel::log_likelihood(x, y, b)) / (2 * h);
            worst = std::max(worst, std::abs(fd - g[k]) / std::max(1.0, std::abs(fd)));
        }
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(Gpr, FitImprovesLikelihoodOverStart)
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    Eigen::MatrixXd x(20, 2), y(20, 1);
    for (int i = 0; i < 20; ++i) {
        x(i, 0) = u(rng);
        x(i, 1) = u(rng);
        y(i, 0) = std::sin(6 * x(i, 0));
    }
    const auto g = GprModel::fit(x, y);
    // The irrelevant second input gets a longer length scale.
    EXPECT_GT(g.length_scales()[1], g.length_scales()[0]);
    const Eigen::MatrixXd ys = y / g.target_scale()[0];
    Eigen::VectorXd start(4);
    start << 0.0, std::log(0.5), std::log(0.5), g.theta()[3];
    EXPECT_GE(g.log_likelihood_value(), GprModel::log_likelihood(x, ys, start));
}

TEST(Gpr, PointGradientMatchesFiniteDifferences)
{
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0, 1);
    Eigen::MatrixXd x(10, 2), y(10, 1);
    for (int i = 0; i < 10; ++i) {
        x(i, 0) = u(rng);
        x(i, 1) = u(rng);
        y(i, 0) = 3 + x(i, 0) - 2 * x(i, 1) * x(i, 1);
    }
    GprOptions opt;
    opt.fixed_noise = 1e-4; // keeps the covariance well conditioned for differencing
    const auto g = GprModel::fit(x, y, opt);
    Eigen::VectorXd q(2);
    q << 0.37, 0.61;
    const auto r = g.predict_with_gradient(q);
    const auto p = g.predict(q.transpose());
    EXPECT_NEAR(r.mean, p.mean(0, 0), 1e-10);
    EXPECT_NEAR(r.variance, p.variance[0] * g.target_scale()[0] * g.target_scale()[0], 1e-10);
    for (int d = 0; d < 2; ++d) {
        Eigen::VectorXd a = q, b = q;
        a[d] += 1e-5;
        b[d] -= 1e-5;
        const auto pa = g.predict_with_gradient(a), pb = g.predict_with_gradient(b);
        EXPECT_NEAR(r.dmean[d], (pa.mean - pb.mean) / 2e-5, 1e-5 * (1 + std::abs(r.dmean[d])));
        EXPECT_NEAR(r.dvariance[d], (pa.variance - pb.variance) / 2e-5, 1e-5 * (1 + std::abs(r.dvariance[d])));
    }
}

TEST(Gpr, RejectsTooFewSamples)
{
    EXPECT_THROW(GprModel::fit(Eigen::MatrixXd::Zero(1, 2), Eigen::MatrixXd::Zero(1, 1)), FitError);
}

class SurrogateTest : public ::testing::Test {
protected:
    void SetUp() override
    {
        auto spec = test::small_spec();
        spec.end_moment = 6e7;
        model = build_demo_model(spec);
        pen = test::model_penalty(model);
        db = test::make_db(model, pen, 14, 5);
    }
    HullModel model;
    PenaltyConfig pen;
    SnapshotDatabase db;
};

TEST_F(SurrogateTest, OutOfPlaneComponentsAreZero)
{
    const auto sm = surrogate_fit(db, model.space, model.monitored_node, {});
    for (std::size_t l = 0; l < kNumLoads; ++l) {
        for (std::size_t c : {2u, 4u, 5u})
            EXPECT_FALSE(sm.active(l, c));
        for (std::size_t c : {0u, 1u, 3u})
            EXPECT_TRUE(sm.active(l, c));
    }
    SurrogateEvaluator ev(sm, model, model.space, pen);
    const auto f = ev.fields(model.default_config);
    for (const auto& l : f.loads)
        EXPECT_EQ(l.stress[2].cwiseAbs().maxCoeff(), 0.0);
}

TEST_F(SurrogateTest, TrainingConfigsReproduceFailureCounts)
{
    SurrogateFitOptions opt;
    opt.policy = RankPolicy::fixed(static_cast<int>(db.size()));
    const auto sm = surrogate_fit(db, model.space, model.monitored_node, opt);
    SurrogateEvaluator ev(sm, model, model.space, pen);
    const auto q = ev.qois(db.configs());
    for (std::size_t i = 0; i < db.size(); ++i) {
        EXPECT_NEAR(q[i].n_y, db[i].qoi.n_y, 1);
        EXPECT_NEAR(q[i].n_b, db[i].qoi.n_b, 1);
        EXPECT_NEAR(q[i].deflection, db[i].qoi.deflection, 1e-3 * (1 + db[i].qoi.deflection));
        EXPECT_DOUBLE_EQ(q[i].mass - pen.m_bar * q[i].n_b, db[i].qoi.mass - pen.m_bar * db[i].qoi.n_b);
    }
}

TEST_F(SurrogateTest, TwoEntriesBoundRank)
{
    SnapshotDatabase small;
    small.add(db[0]);
    small.add(db[1]);
    const auto sm = surrogate_fit(small, model.space, model.monitored_node, {});
    EXPECT_LE(sm.max_rank(), 2);
}

TEST_F(SurrogateTest, BatchChunkingMatchesSingleCalls)
{
    const auto sm = surrogate_fit(db, model.space, model.monitored_node, {});
    SurrogateEvaluator ev(sm, model, model.space, pen, 3);
    const auto xs = db.configs();
    const auto batch = ev.qois(xs);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto one = ev.qoi(xs[i]);
        EXPECT_EQ(one.n_y, batch[i].n_y);
        EXPECT_EQ(one.n_b, batch[i].n_b);
        EXPECT_NEAR(one.deflection, batch[i].deflection, 1e-12 * (1 + one.deflection));
    }
}

TEST_F(SurrogateTest, ArchiveRoundTripIsBitIdentical)
{
    const auto sm = surrogate_fit(db, model.space, model.monitored_node, {});
    const auto dir = std::filesystem::temp_directory_path() / "hullopt_surrogate_rt";
    std::filesystem::remove_all(dir);
    save_surrogate(dir, sm);
    const auto back = load_surrogate(dir);
    SurrogateEvaluator a(sm, model, model.space, pen), b(back, model, model.space, pen);
    std::mt19937_64 rng(1);
    for (int k = 0; k < 10; ++k) {
        const auto x = test::random_config(model.space, rng);
        const auto fa = a.fields(x), fb = b.fields(x);
        for (std::size_t l = 0; l < kNumLoads; ++l)
            for (std::size_t c = 0; c < kNumComponents; ++c)
                EXPECT_EQ(fa.loads[l].stress[c], fb.loads[l].stress[c]);
        EXPECT_EQ(a.deflection(x), b.deflection(x));
    }
    std::filesystem::remove_all(dir);
}

TEST_F(SurrogateTest, RefitWithNewSnapshotMatchesIt)
{
    SurrogateFitOptions opt;
    opt.policy = RankPolicy::fixed(static_cast<int>(db.size()));
    auto extra = test::make_db(model, pen, db.size() + 1, 5);
    const auto sm = surrogate_fit(extra, model.space, model.monitored_node, opt);
    SurrogateEvaluator ev(sm, model, model.space, pen);
    const auto& last = extra[extra.size() - 1];
    const auto q = ev.qoi(last.config);
    EXPECT_NEAR(q.n_y, last.qoi.n_y, 1);
    EXPECT_NEAR(q.n_b, last.qoi.n_b, 1);
}

TEST(CrossVal, LeaveOneOutFoldArithmetic)
{
    const auto f = fold_assignment(5, 5, 3);
    std::vector<int> count(5, 0);
    for (int k : f)
        ++count[static_cast<std::size_t>(k)];
    for (int c : count)
        EXPECT_EQ(c, 1);
}

TEST(CrossVal, QuantilesOfKnownSample)
{
    const auto q = quantiles({4, 1, 3, 2, 5});
    EXPECT_EQ(q.min, 1);
    EXPECT_EQ(q.q1, 2);
    EXPECT_EQ(q.median, 3);
    EXPECT_EQ(q.q3, 4);
    EXPECT_EQ(q.max, 5);
}

TEST(CrossVal, ConstantTargetsGiveZeroError)
{
    auto spec = test::small_spec();
    spec.end_moment = 1e5; // far below every threshold
    const auto m = build_demo_model(spec);
    const auto pen = test::model_penalty(m);
    const auto db = test::make_db(m, pen, 10, 2);
    for (const auto& e : db.entries()) {
        EXPECT_EQ(e.qoi.n_y, 0);
        EXPECT_EQ(e.qoi.n_b, 0);
    }
    const auto res = cross_validate(db, m, m.space, pen, {2, 4}, 5, {}, 9);
    ASSERT_EQ(res.size(), 4u);
    for (const auto& r : res) {
        EXPECT_EQ(r.errors.size(), db.size());
        for (double e : r.errors)
            EXPECT_EQ(e, 0.0);
    }
}

TEST(CrossVal, TooSmallDatabaseRejected)
{
    const auto m = build_demo_model(test::small_spec());
    const auto pen = test::model_penalty(m);
    const auto db = test::make_db(m, pen, 3, 2);
    EXPECT_THROW(cross_validate(db, m, m.space, pen, {2}, 5, {}, 1), DataError);
}
