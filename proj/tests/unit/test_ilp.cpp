#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "hullopt/ilp/assignment.hpp"
#include "hullopt/ilp/knapsack.hpp"

using namespace hullopt;

namespace {

// Exhaustive oracle: optimum objective over all feasible assignments (inf if none).
double enumerate_optimum(const AssignmentIlp& p, std::size_t* count_optimal = nullptr)
{
    const std::size_t n = p.rows();
    std::vector<std::size_t> a(n, 0);
    double best = std::numeric_limits<double>::infinity();
    std::size_t ties = 0;
    while (true) {
        if (p.feasible(a)) {
            const double f = p.objective(a);
            if (f < best - 1e-12) {
                best = f;
                ties = 1;
            } else if (std::abs(f - best) <= 1e-12) {
                ++ties;
            }
        }
        std::size_t r = 0;
        while (r < n && ++a[r] == p.costs[r].size())
            a[r++] = 0;
        if (r == n)
            break;
    }
    if (count_optimal)
        *count_optimal = ties;
    return best;
}

AssignmentIlp random_instance(std::mt19937_64& rng, bool coupling, bool cardinality, bool exclusion)
{
    std::uniform_int_distribution<int> nrows(1, 5), ncols(1, 4);
    std::uniform_real_distribution<double> u(-1.0, 3.0);
    AssignmentIlp p;
    const int n = nrows(rng);
    const std::vector<double> labels{5, 6, 8, 10};
    for (int r = 0; r < n; ++r) {
        const int k = ncols(rng);
        std::vector<double> v, c;
        for (int j = 0; j < k; ++j) {
            v.push_back(labels[static_cast<std::size_t>(j)]);
            c.push_back(std::round(u(rng) * 4.0) / 4.0);
        }
        p.values.push_back(v);
        p.costs.push_back(c);
    }
    if (coupling) {
        for (int k = 0; k < 2; ++k) {
            CouplingConstraint cc;
            double lo = 0.0;
            for (int r = 0; r < n; ++r) {
                std::vector<double> row;
                double m = 1e9;
                for (std::size_t j = 0; j < p.costs[static_cast<std::size_t>(r)].size(); ++j) {
                    row.push_back(u(rng));
                    m = std::min(m, row.back());
                }
                lo += m;
                cc.coef.push_back(row);
            }
            cc.rhs = lo + std::abs(u(rng));
            p.coupling.push_back(cc);
        }
    }
    if (cardinality)
        p.n_clusters = std::uniform_int_distribution<int>(1, 3)(rng);
    if (exclusion) {
        std::vector<std::size_t> ex;
        for (int r = 0; r < n; ++r)
            ex.push_back(std::uniform_int_distribution<std::size_t>(0, p.costs[static_cast<std::size_t>(r)].size() - 1)(rng));
        p.excluded = ex;
    }
    return p;
}

} // namespace

TEST(Assignment, RoundingInstance)
{
    AssignmentIlp p;
    p.values = {{1, 2, 3}, {1, 2, 3}};
    for (int r = 0; r < 2; ++r)
        p.costs.push_back({1.0, 0.0, 1.0});
    p.excluded = std::vector<std::size_t>{1, 1};
    const auto s = solve_assignment(p);
    EXPECT_EQ(s.status, IlpStatus::Optimal);
    EXPECT_DOUBLE_EQ(s.objective, 1.0);
    EXPECT_TRUE(p.feasible(s.assignment));
    std::size_t ties = 0;
    EXPECT_DOUBLE_EQ(enumerate_optimum(p, &ties), 1.0);
    EXPECT_EQ(ties, 4u);
}

TEST(Assignment, SingleRowSingleValue)
{
    AssignmentIlp p;
    p.values = {{7}};
    p.costs = {{3.5}};
    const auto s = solve_assignment(p);
    EXPECT_EQ(s.status, IlpStatus::Optimal);
    EXPECT_EQ(s.assignment, (std::vector<std::size_t>{0}));
    EXPECT_DOUBLE_EQ(s.objective, 3.5);
}

TEST(Assignment, ClusteringInstance)
{
    AssignmentIlp p;
    p.values = {{5, 10}, {5, 10}, {5, 10}};
    p.costs = {{9.0, 1.0}, {1.0, 4.0}, {1.0, 4.0}};
    p.n_clusters = 2;
    const auto s = solve_assignment(p);
    ASSERT_EQ(s.status, IlpStatus::Optimal);
    EXPECT_EQ(s.assignment, (std::vector<std::size_t>{1, 0, 0}));
    EXPECT_DOUBLE_EQ(s.objective, enumerate_optimum(p));
}

TEST(Assignment, CardinalityForcesBothValuesUsed)
{
    AssignmentIlp p;
    p.values = {{5, 10}, {5, 10}};
    p.costs = {{0.0, 1.0}, {0.0, 2.0}};
    p.n_clusters = 2;
    const auto s = solve_assignment(p);
    EXPECT_DOUBLE_EQ(s.objective, 1.0);
    EXPECT_EQ(s.assignment, (std::vector<std::size_t>{1, 0}));
}

TEST(Assignment, InfeasibleReported)
{
    AssignmentIlp p;
    p.values = {{1, 2}};
    p.costs = {{0.0, 0.0}};
    p.coupling.push_back({{{1.0, 2.0}}, 0.5});
    EXPECT_EQ(solve_assignment(p).status, IlpStatus::Infeasible);

    AssignmentIlp q;
    q.values = {{1}, {1}};
    q.costs = {{0.0}, {0.0}};
    q.n_clusters = 2;
    EXPECT_EQ(solve_assignment(q).status, IlpStatus::Infeasible);
}

TEST(Assignment, MatchesEnumerationOnRandomInstances)
{
    std::mt19937_64 rng(77);
    int feasible = 0;
    for (int trial = 0; trial < 600; ++trial) {
        const auto p = random_instance(rng, trial % 2 == 0, trial % 3 == 0, trial % 5 < 2);
        const double oracle = enumerate_optimum(p);
        const auto s = solve_assignment(p);
        if (!std::isfinite(oracle)) {
            EXPECT_EQ(s.status, IlpStatus::Infeasible) << "trial " << trial;
            continue;
        }
        ++feasible;
        ASSERT_EQ(s.status, IlpStatus::Optimal) << "trial " << trial;
        EXPECT_TRUE(p.feasible(s.assignment)) << "trial " << trial;
        EXPECT_NEAR(s.objective, oracle, 1e-12) << "trial " << trial;
        EXPECT_NEAR(p.objective(s.assignment), s.objective, 1e-12);
        EXPECT_EQ(s.gap, 0.0);
    }
    EXPECT_GT(feasible, 300);
}

TEST(Assignment, GapLimitBoundsSuboptimality)
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = random_instance(rng, trial % 2 == 0, trial % 3 == 0, false);
        const double oracle = enumerate_optimum(p);
        const auto s = solve_assignment(p, 0.5);
        if (!std::isfinite(oracle))
            continue;
        ASSERT_FALSE(s.assignment.empty());
        EXPECT_TRUE(p.feasible(s.assignment));
        EXPECT_LE(s.objective - oracle, s.gap + 1e-12);
        EXPECT_LE(s.gap, 0.5);
    }
}

TEST(Assignment, TimeLimitGapIsAdmissible)
{
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    AssignmentIlp p;
    for (int r = 0; r < 9; ++r) {
        p.values.push_back({1, 2, 3, 4});
        p.costs.push_back({u(rng), u(rng), u(rng), u(rng)});
    }
    CouplingConstraint cc;
    for (int r = 0; r < 9; ++r)
        cc.coef.push_back({u(rng), u(rng), u(rng), u(rng)});
    cc.rhs = 3.0;
    p.coupling.push_back(cc);
    const double oracle = enumerate_optimum(p);
    for (double limit : {1e-9, 1e-4, 0.0}) {
        const auto s = solve_assignment(p, 0.0, limit);
        if (s.assignment.empty()) {
            EXPECT_EQ(s.status, IlpStatus::GapLimit);
            continue;
        }
        EXPECT_TRUE(p.feasible(s.assignment));
        EXPECT_GE(s.gap + 1e-12, s.objective - oracle);
        if (s.status == IlpStatus::Optimal)
            EXPECT_NEAR(s.objective, oracle, 1e-12);
    }
}

TEST(Assignment, RejectsMalformedProblems)
{
    AssignmentIlp p;
    p.values = {{}};
    p.costs = {{}};
    EXPECT_THROW(solve_assignment(p), ConfigError);
    AssignmentIlp q;
    q.values = {{1}};
    q.costs = {{std::nan("")}};
    EXPECT_THROW(solve_assignment(q), ConfigError);
}

TEST(Assignment, LpDumpListsEveryBlock)
{
    AssignmentIlp p;
    p.values = {{5, 10}, {5, 10}};
    p.costs = {{1, 2}, {3, 4}};
    p.coupling.push_back({{{1, 1}, {1, 1}}, 3});
    p.n_clusters = 1;
    p.excluded = std::vector<std::size_t>{0, 0};
    std::ostringstream os;
    write_lp(os, p);
    const auto t = os.str();
    for (const char* key : {"minimize", "row1:", "cpl0:", "excl:", "card:", "cover1:", "binary", "end"})
        EXPECT_NE(t.find(key), std::string::npos) << key;
}

TEST(Knapsack, ZeroBudgetSelectsNothing)
{
    std::vector<KnapsackGroup> g{{{{2, 10.0}}}, {{{3, 5.0}}}};
    EXPECT_EQ(solve_knapsack(g, 0), (std::vector<int>{-1, -1}));
}

TEST(Knapsack, ThreeGroupsBudgetTwo)
{
    std::vector<KnapsackGroup> g{{{{2, 10.0}}}, {{{2, 7.0}}}, {{{2, 6.0}}}};
    EXPECT_EQ(solve_knapsack(g, 2), (std::vector<int>{0, 0, -1}));
}

TEST(Knapsack, NegativeValueNeverSelected)
{
    std::vector<KnapsackGroup> g{{{{2, -1.0}}}};
    EXPECT_EQ(solve_knapsack(g, 5), (std::vector<int>{-1}));
}

TEST(Knapsack, TieGoesToFewerAddedParameters)
{
    std::vector<KnapsackGroup> g{{{{3, 4.0}, {2, 4.0}}}};
    EXPECT_EQ(solve_knapsack(g, 5), (std::vector<int>{1}));
}

TEST(Knapsack, MatchesExhaustiveEnumeration)
{
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> ng(1, 5), no(1, 3), cl(1, 4), bud(0, 6);
    std::uniform_real_distribution<double> val(-2.0, 10.0);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<KnapsackGroup> g(static_cast<std::size_t>(ng(rng)));
        for (auto& grp : g) {
            const int k = no(rng);
            for (int o = 0; o < k; ++o)
                grp.options.push_back({cl(rng), std::round(val(rng))});
        }
        const int budget = bud(rng);
        // Oracle over every choice vector, same tie-break on (value, added).
        std::vector<int> choice(g.size(), -1);
        double best_v = 0.0;
        int best_a = 0;
        while (true) {
            double v = 0.0;
            int a = 0;
            bool ok = true;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (choice[i] >= 0) {
                    const auto& o = g[i].options[static_cast<std::size_t>(choice[i])];
                    if (o.value <= 0.0)
                        ok = false;
                    v += o.value;
                    a += o.clusters - 1;
                }
            if (ok && a <= budget && (v > best_v || (v == best_v && a < best_a))) {
                best_v = v;
                best_a = a;
            }
            std::size_t i = 0;
            while (i < g.size() && ++choice[i] == static_cast<int>(g[i].options.size()))
                choice[i++] = -1;
            if (i == g.size())
                break;
        }
        const auto sel = solve_knapsack(g, budget);
        double v = 0.0;
        int a = 0;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (sel[i] >= 0) {
                v += g[i].options[static_cast<std::size_t>(sel[i])].value;
                a += g[i].options[static_cast<std::size_t>(sel[i])].clusters - 1;
            }
        EXPECT_LE(a, budget);
        EXPECT_DOUBLE_EQ(v, best_v) << "trial " << trial;
        EXPECT_EQ(a, best_a) << "trial " << trial;
    }
}
