#pragma once

#include <functional>
#include <random>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "hullopt/common.hpp"
#include "hullopt/criteria.hpp"
#include "hullopt/hull/parameter_space.hpp"
#include "hullopt/moo/niching.hpp"

namespace hullopt {

inline constexpr int kNumObjectives = 5;

inline const std::array<std::string, kNumObjectives>& objective_names()
{
    static const std::array<std::string, kNumObjectives> n{"n_y", "n_b", "deflection", "mass", "vcg"};
    return n;
}

inline Eigen::RowVectorXd objective_row(const QoiVector& q)
{
    Eigen::RowVectorXd r(kNumObjectives);
    r << q.n_y, q.n_b, q.deflection, q.mass, q.vcg;
    return r;
}

struct Population {
    std::vector<Configuration> individuals;
    Eigen::MatrixXd objectives; // one row per individual

    std::size_t size() const noexcept { return individuals.size(); }

    /// Rows of the first non-dominated layer.
    std::vector<std::size_t> front() const
    {
        if (individuals.empty())
            return {};
        return non_dominated_sort(objectives).front();
    }
};

using BatchObjective = std::function<Eigen::MatrixXd(const std::vector<Configuration>&)>;

struct GaOptions {
    std::size_t pop_size = 200;
    int generations = 10;
    std::uint64_t seed = 0;
    /// Reference lattice divisions; <= 0 derives it from the population size.
    int divisions = 0;
    /// Per-generation hook (generation index, survivors). Generation 0 is the initial population.
    std::function<void(int, const Population&)> on_generation;
};

namespace detail {

inline Population evaluate_population(std::vector<Configuration> xs, const BatchObjective& fn)
{
    Population p;
    p.objectives = fn(xs);
    if (static_cast<std::size_t>(p.objectives.rows()) != xs.size())
        throw DataError("objective function returned the wrong number of rows");
    p.individuals = std::move(xs);
    return p;
}

inline Population subset(const Population& p, const std::vector<std::size_t>& rows)
{
    Population out;
    out.objectives.resize(static_cast<Eigen::Index>(rows.size()), p.objectives.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.individuals.push_back(p.individuals[rows[i]]);
        out.objectives.row(static_cast<Eigen::Index>(i)) = p.objectives.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

inline Population concat(const Population& a, const Population& b)
{
    Population out;
    out.individuals = a.individuals;
    out.individuals.insert(out.individuals.end(), b.individuals.begin(), b.individuals.end());
    const Eigen::Index cols = a.size() ? a.objectives.cols() : b.objectives.cols();
    out.objectives.resize(a.objectives.rows() + b.objectives.rows(), cols);
    if (a.size())
        out.objectives.topRows(a.objectives.rows()) = a.objectives;
    if (b.size())
        out.objectives.bottomRows(b.objectives.rows()) = b.objectives;
    return out;
}

} // namespace detail

/// Uniform sample of distinct configurations; enumerates the whole domain when it is small.
inline std::vector<Configuration> sample_configurations(const ParameterSpace& space, std::size_t count,
                                                        std::mt19937_64& rng,
                                                        const std::vector<Configuration>& include = {})
{
    std::set<Configuration> seen;
    std::vector<Configuration> out;
    for (const auto& x : include)
        if (out.size() < count && seen.insert(x).second)
            out.push_back(x);
    const double total = space.total_configurations();
    if (total <= static_cast<double>(count) * 1.5 && total < 1e6) {
        // Small domain: shuffle the full enumeration.
        std::vector<Configuration> all;
        Configuration x(space.size());
        std::vector<std::size_t> idx(space.size(), 0);
        while (true) {
            for (std::size_t i = 0; i < space.size(); ++i)
                x[i] = space[i].domain[idx[i]];
            if (!seen.count(x))
                all.push_back(x);
            std::size_t i = 0;
            while (i < space.size() && ++idx[i] == space[i].domain.size())
                idx[i++] = 0;
            if (i == space.size())
                break;
        }
        std::shuffle(all.begin(), all.end(), rng);
        for (auto& a : all) {
            if (out.size() >= count)
                break;
            out.push_back(std::move(a));
        }
        return out;
    }
    std::size_t misses = 0;
    while (out.size() < count && misses < 100 * count) {
        Configuration x(space.size());
        for (std::size_t i = 0; i < space.size(); ++i) {
            std::uniform_int_distribution<std::size_t> u(0, space[i].domain.size() - 1);
            x[i] = space[i].domain[u(rng)];
        }
        if (seen.insert(x).second)
            out.push_back(std::move(x));
        else
            ++misses;
    }
    return out;
}

/// Elitist genetic algorithm with reference-direction survivor selection.
inline Population evolve(const BatchObjective& objective, const ParameterSpace& space, const GaOptions& opt,
                         const std::vector<Configuration>& inject = {})
{
    if (opt.pop_size < 2)
        throw ConfigError("population size must be at least two");
    if (opt.generations < 0)
        throw ConfigError("generation count must be non-negative");
    std::mt19937_64 rng(opt.seed);
    const std::size_t d = space.size();

    std::vector<Configuration> known;
    for (const auto& x : inject)
        if (space.contains(x))
            known.push_back(x);
    Population pop = detail::evaluate_population(sample_configurations(space, opt.pop_size, rng, known), objective);
    auto sel = select_survivors(pop.objectives, opt.pop_size, derive_seed(opt.seed, 0), opt.divisions);
    pop = detail::subset(pop, sel.selected);
    if (opt.on_generation)
        opt.on_generation(0, pop);

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double pm = d > 0 ? 1.0 / static_cast<double>(d) : 0.0;
    for (int gen = 1; gen <= opt.generations; ++gen) {
        std::set<Configuration> seen(pop.individuals.begin(), pop.individuals.end());
        std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
        auto tournament = [&]() {
            const std::size_t a = pick(rng), b = pick(rng);
            if (sel.rank[a] != sel.rank[b])
                return sel.rank[a] < sel.rank[b] ? a : b;
            if (sel.niche[a] != sel.niche[b])
                return sel.niche[a] < sel.niche[b] ? a : b;
            return std::min(a, b);
        };
        std::vector<Configuration> children;
        std::size_t attempts = 0;
        while (children.size() < opt.pop_size && attempts < 20 * opt.pop_size) {
            ++attempts;
            const auto& pa = pop.individuals[tournament()];
            const auto& pb = pop.individuals[tournament()];
            Configuration c(d);
            for (std::size_t i = 0; i < d; ++i)
                c[i] = u01(rng) < 0.5 ? pa[i] : pb[i];
            for (std::size_t i = 0; i < d; ++i) {
                const auto& dom = space[i].domain;
                if (dom.size() < 2 || u01(rng) >= pm)
                    continue;
                const std::size_t k = space.nearest_index(i, c[i]);
                const bool up = k == 0 || (k + 1 < dom.size() && u01(rng) < 0.5);
                c[i] = dom[up ? k + 1 : k - 1];
            }
            for (std::size_t i = 0; i < d; ++i)
                c[i] = space[i].domain[space.nearest_index(i, c[i])];
            if (seen.insert(c).second)
                children.push_back(std::move(c));
        }
        if (!children.empty()) {
            const Population offspring = detail::evaluate_population(std::move(children), objective);
            const Population uni = detail::concat(pop, offspring);
            sel = select_survivors(uni.objectives, opt.pop_size, derive_seed(opt.seed, static_cast<std::uint64_t>(gen)),
                                   opt.divisions);
            pop = detail::subset(uni, sel.selected);
        }
        if (opt.on_generation)
            opt.on_generation(gen, pop);
    }
    return pop;
}

} // namespace hullopt
