#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hullopt/common.hpp"
#include "hullopt/criteria.hpp"
#include "hullopt/hull/model.hpp"
#include "hullopt/hull/parameter_space.hpp"
#include "hullopt/ilp/assignment.hpp"
#include "hullopt/ilp/knapsack.hpp"
#include "hullopt/rom/database.hpp"
#include "hullopt/rom/surrogate.hpp"

namespace hullopt {

/// Per-patch failure counts of one section over its thickness domain, other parameters at the incumbent.
struct SectionResponses {
    std::size_t section = 0;
    std::vector<double> values;               // D_i
    std::vector<int> patches;                 // patch ids of the section
    std::vector<std::vector<int>> yielded;    // [patch][value]
    std::vector<std::vector<int>> buckled;    // [patch][value]
    std::vector<double> density;              // t/mm per patch
    std::vector<double> vcg;                  // m per patch
    std::vector<std::size_t> element_count;   // per patch
    std::vector<bool> from_hf;                // per value
};

using FailureQuery = std::function<FailureState(const Configuration&)>;

inline SectionResponses collect_responses(const HullModel& model, const ParameterSpace& space,
                                          const FailureQuery& query, const Configuration& x_star, std::size_t section)
{
    space.validate(x_star);
    if (section >= space.size())
        throw DomainError("section index out of range");
    const auto& def = space[section];
    SectionResponses r;
    r.section = section;
    r.values = def.domain;
    r.patches = def.patch_ids;
    const auto np = r.patches.size(), nv = r.values.size();
    r.yielded.assign(np, std::vector<int>(nv, 0));
    r.buckled.assign(np, std::vector<int>(nv, 0));
    r.from_hf.assign(nv, false);
    const auto& pd = space.patch_density();
    const auto& pv = space.patch_vcg();
    for (std::size_t p = 0; p < np; ++p) {
        const auto pid = static_cast<std::size_t>(r.patches[p]);
        if (pid >= model.patches.size())
            throw DataError("parameter space does not match the model's patches");
        r.density.push_back(pd.empty() ? def.linear_density / static_cast<double>(np) : pd[pid]);
        r.vcg.push_back(pv.empty() ? def.vcg : pv[pid]);
        r.element_count.push_back(model.patches[pid].element_ids.size());
    }
    for (std::size_t k = 0; k < nv; ++k) {
        Configuration x = x_star;
        x[section] = r.values[k];
        const FailureState fs = query(x);
        const auto [y, b] = patch_counts(fs, model);
        for (std::size_t p = 0; p < np; ++p) {
            r.yielded[p][k] = y[static_cast<std::size_t>(r.patches[p])];
            r.buckled[p][k] = b[static_cast<std::size_t>(r.patches[p])];
        }
    }
    return r;
}

/// Surrogate failure query that uses high-fidelity snapshots for configurations already in the database.
inline FailureQuery failure_query(const SurrogateEvaluator& ev, const HullModel& model, const SnapshotDatabase* db)
{
    return [&ev, &model, db](const Configuration& x) {
        if (db) {
            const long idx = db->find(x);
            if (idx >= 0) {
                const auto& e = (*db)[static_cast<std::size_t>(idx)];
                return ev.failure_evaluator().evaluate(*e.snapshot, ev.element_thickness(x));
            }
        }
        return ev.failures(x);
    };
}

inline SectionResponses collect_responses(const SurrogateEvaluator& ev, const HullModel& model,
                                          const SnapshotDatabase* db, const Configuration& x_star,
                                          std::size_t section)
{
    auto r = collect_responses(model, ev.space(), failure_query(ev, model, db), x_star, section);
    if (db)
        for (std::size_t k = 0; k < r.values.size(); ++k) {
            Configuration x = x_star;
            x[section] = r.values[k];
            r.from_hf[k] = db->contains(x);
        }
    return r;
}

/// Mass and VCG of everything outside one section, at the incumbent.
struct VcgContext {
    double vcg_res = 0.0;
    double m_res = 0.0;
    double vcg_crit = std::numeric_limits<double>::infinity();
};

inline VcgContext vcg_context(const ParameterSpace& space, const PenaltyConfig& pen, const Configuration& x_star,
                              std::size_t section)
{
    double m = pen.m_fixed, mom = pen.vcg_fixed * pen.m_fixed;
    const auto& owner = space.patch_owner();
    const auto& pd = space.patch_density();
    const auto& pv = space.patch_vcg();
    if (!pd.empty()) {
        for (std::size_t p = 0; p < owner.size(); ++p)
            if (owner[p] >= 0 && static_cast<std::size_t>(owner[p]) != section) {
                const double mp = pd[p] * x_star[static_cast<std::size_t>(owner[p])];
                m += mp;
                mom += pv[p] * mp;
            }
    } else {
        for (std::size_t i = 0; i < space.size(); ++i)
            if (i != section) {
                const double mi = space[i].linear_density * x_star[i];
                m += mi;
                mom += space[i].vcg * mi;
            }
    }
    VcgContext c;
    c.m_res = m;
    c.vcg_res = m > 0.0 ? mom / m : 0.0;
    c.vcg_crit = pen.vcg_crit;
    return c;
}

struct RefinementProposal {
    std::size_t section = 0;
    int n_clusters = 0;
    std::vector<int> patches;
    std::vector<double> assignment; // thickness per patch
    double ilp_objective = 0.0;
    double baseline = 0.0;
    double improvement = 0.0;
    bool feasible = false;
    IlpStatus status = IlpStatus::Infeasible;
};

/// Per-(patch, value) cost: added mass plus the per-patch failure penalty.
inline double patch_cost(const SectionResponses& r, std::size_t p, std::size_t k, const PenaltyConfig& pen)
{
    const double y = r.yielded[p][k], b = r.buckled[p][k];
    return r.density[p] * r.values[k] + pen.m_bar * b + pen.c_y * y * y + pen.c_b * b * b;
}

inline AssignmentIlp clustering_ilp(const SectionResponses& r, const PenaltyConfig& pen, int n_clusters,
                                    const VcgContext& ctx)
{
    AssignmentIlp p;
    const auto np = r.patches.size(), nv = r.values.size();
    p.values.assign(np, r.values);
    p.costs.assign(np, std::vector<double>(nv));
    for (std::size_t i = 0; i < np; ++i)
        for (std::size_t k = 0; k < nv; ++k)
            p.costs[i][k] = patch_cost(r, i, k, pen);
    p.n_clusters = n_clusters;
    if (std::isfinite(ctx.vcg_crit)) {
        CouplingConstraint c;
        c.coef.assign(np, std::vector<double>(nv));
        for (std::size_t i = 0; i < np; ++i)
            for (std::size_t k = 0; k < nv; ++k)
                c.coef[i][k] = (r.vcg[i] - ctx.vcg_crit) * r.density[i] * r.values[k];
        c.rhs = (ctx.vcg_crit - ctx.vcg_res) * ctx.m_res;
        p.coupling.push_back(std::move(c));
    }
    return p;
}

inline RefinementProposal propose_refinement(const SectionResponses& r, const PenaltyConfig& pen, int n_clusters,
                                             const VcgContext& ctx, double x_star_i, double time_limit = 0.0)
{
    if (n_clusters < 2 || static_cast<std::size_t>(n_clusters) > r.values.size())
        throw ConfigError("cluster count must be between 2 and the domain size");
    if (r.patches.size() < static_cast<std::size_t>(n_clusters))
        throw ConfigError("section has fewer patches than clusters");
    const auto it = std::find(r.values.begin(), r.values.end(), x_star_i);
    if (it == r.values.end())
        throw DomainError("incumbent value is not in the section domain");
    const auto k_star = static_cast<std::size_t>(it - r.values.begin());

    RefinementProposal out;
    out.section = r.section;
    out.n_clusters = n_clusters;
    out.patches = r.patches;
    for (std::size_t p = 0; p < r.patches.size(); ++p)
        out.baseline += patch_cost(r, p, k_star, pen);

    const auto ilp = clustering_ilp(r, pen, n_clusters, ctx);
    const auto sol = solve_assignment(ilp, 0.0, time_limit);
    out.status = sol.status;
    if (sol.status == IlpStatus::Infeasible)
        return out;
    out.feasible = true;
    out.ilp_objective = sol.objective;
    for (std::size_t p = 0; p < r.patches.size(); ++p)
        out.assignment.push_back(r.values[sol.assignment[p]]);
    out.improvement = out.baseline - out.ilp_objective;
    return out;
}

/// One proposal per section at most, chosen by knapsack on improvement within the parameter budget.
inline std::vector<RefinementProposal> select_refinements(const std::vector<std::vector<RefinementProposal>>& by_section,
                                                          std::size_t current_params, std::size_t max_params)
{
    if (max_params < current_params)
        throw ConfigError("parameter budget is below the current parameter count");
    std::vector<KnapsackGroup> groups(by_section.size());
    for (std::size_t g = 0; g < by_section.size(); ++g)
        for (const auto& p : by_section[g])
            groups[g].options.push_back({p.n_clusters, p.feasible ? p.improvement : 0.0});
    const auto pick = solve_knapsack(groups, static_cast<int>(max_params - current_params));
    std::vector<RefinementProposal> chosen;
    for (std::size_t g = 0; g < pick.size(); ++g)
        if (pick[g] >= 0)
            chosen.push_back(by_section[g][static_cast<std::size_t>(pick[g])]);
    return chosen;
}

struct RefinementResult {
    ParameterSpace space;
    /// Incumbent with the split patches at their proposed values.
    Configuration joined;
    bool joined_vcg_violated = false;
    /// New parameter indices created per chosen proposal.
    std::vector<std::vector<std::size_t>> children;
};

inline void recompute_parameter_properties(ParameterDef& d, const ParameterSpace& space)
{
    const auto& pd = space.patch_density();
    const auto& pv = space.patch_vcg();
    if (pd.empty())
        return;
    double m = 0.0, mom = 0.0;
    for (int p : d.patch_ids) {
        m += pd[static_cast<std::size_t>(p)];
        mom += pd[static_cast<std::size_t>(p)] * pv[static_cast<std::size_t>(p)];
    }
    d.linear_density = m;
    d.vcg = m > 0.0 ? mom / m : 0.0;
}

/// Splits each chosen section: the cluster whose value is closest to the incumbent (ties to the larger
/// cluster, then the smaller value) stays on the parameter; every other cluster becomes a child parameter
/// with the same domain. Child parameters are appended, so coarse configurations lift by copying.
inline RefinementResult apply_refinements(const ParameterSpace& space, const std::vector<RefinementProposal>& chosen,
                                          const Configuration& x_star, const PenaltyConfig* pen = nullptr)
{
    space.validate(x_star);
    std::vector<ParameterDef> defs = space.params();
    std::set<std::size_t> seen;
    std::vector<std::pair<std::size_t, double>> child_values, kept_values;
    RefinementResult res;
    for (const auto& prop : chosen) {
        if (prop.section >= space.size())
            throw ConfigError("refinement references an unknown section");
        if (!seen.insert(prop.section).second)
            throw ConfigError("two refinements for one section");
        if (!prop.feasible)
            throw ConfigError("refinement proposal is infeasible");
        auto& parent = defs[prop.section];
        std::vector<int> own = space[prop.section].patch_ids, theirs = prop.patches;
        std::sort(own.begin(), own.end());
        std::sort(theirs.begin(), theirs.end());
        if (own != theirs || prop.assignment.size() != prop.patches.size())
            throw ConfigError("refinement patches do not match the section");

        std::map<double, std::vector<int>> clusters;
        for (std::size_t p = 0; p < prop.patches.size(); ++p) {
            if (!std::binary_search(parent.domain.begin(), parent.domain.end(), prop.assignment[p]))
                throw ConfigError("refinement value is outside the section domain");
            clusters[prop.assignment[p]].push_back(prop.patches[p]);
        }
        if (static_cast<int>(clusters.size()) != prop.n_clusters)
            throw ConfigError("refinement uses a different number of values than clusters");

        const double xi = x_star[prop.section];
        auto kept = clusters.begin();
        for (auto c = clusters.begin(); c != clusters.end(); ++c) {
            const double dc = std::abs(c->first - xi), dk = std::abs(kept->first - xi);
            if (dc < dk || (dc == dk && c->second.size() > kept->second.size()))
                kept = c;
        }
        parent.patch_ids = kept->second;
        kept_values.emplace_back(prop.section, kept->first);
        std::vector<std::size_t> kids;
        int n = 1;
        for (auto c = clusters.begin(); c != clusters.end(); ++c) {
            if (c == kept)
                continue;
            ParameterDef child;
            child.name = space[prop.section].name + "." + std::to_string(n++);
            child.patch_ids = c->second;
            child.domain = space[prop.section].domain;
            child.parent = static_cast<int>(prop.section);
            kids.push_back(defs.size());
            child_values.emplace_back(defs.size(), c->first);
            defs.push_back(std::move(child));
        }
        res.children.push_back(std::move(kids));
    }

    ParameterSpace tmp(defs, space.patch_count());
    if (!space.patch_density().empty())
        tmp.set_patch_properties(space.patch_density(), space.patch_vcg());
    for (auto& d : defs)
        recompute_parameter_properties(d, tmp);
    res.space = ParameterSpace(defs, space.patch_count());
    if (!space.patch_density().empty())
        res.space.set_patch_properties(space.patch_density(), space.patch_vcg());

    res.joined = res.space.lift(x_star);
    for (const auto& [k, v] : kept_values)
        res.joined[k] = v;
    for (const auto& [k, v] : child_values)
        res.joined[k] = v;
    if (pen)
        res.joined_vcg_violated = structural_vcg(res.space, res.joined, *pen) > pen->vcg_crit;
    return res;
}

struct ResampleResult {
    std::vector<Configuration> configs;
    double score = 0.0;
    std::vector<double> trial_scores;
    bool reduced = false;
};

/// Minimum normalized distance over candidate pairs and candidate-to-sample pairs.
inline double spread_score(const ParameterSpace& space, const std::vector<Configuration>& cand,
                           const std::vector<Configuration>& samples)
{
    auto dist = [&](const Configuration& a, const Configuration& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double w = space[i].domain.back() - space[i].domain.front();
            const double d = w > 0.0 ? (a[i] - b[i]) / w : 0.0;
            s += d * d;
        }
        return std::sqrt(s);
    };
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < cand.size(); ++a) {
        for (std::size_t b = a + 1; b < cand.size(); ++b)
            m = std::min(m, dist(cand[a], cand[b]));
        for (const auto& s : samples)
            m = std::min(m, dist(cand[a], s));
    }
    return m;
}

/// Best of `trials` uniform candidate sets by spread against each other and the existing samples.
inline ResampleResult resample_domain(const ParameterSpace& space, const std::vector<Configuration>& samples,
                                      std::size_t count, int trials, std::uint64_t seed)
{
    if (count < 1)
        throw ConfigError("resample count must be at least 1");
    if (trials < 1)
        throw ConfigError("resample trials must be at least 1");
    const std::set<Configuration> visited(samples.begin(), samples.end());
    ResampleResult res;
    const double free = space.total_configurations() - static_cast<double>(visited.size());
    if (free < static_cast<double>(count)) {
        count = free > 0.0 ? static_cast<std::size_t>(free) : 0;
        res.reduced = true;
        warn("refined domain has only " + std::to_string(count) + " unvisited configurations");
    }
    if (count == 0)
        return res;

    std::mt19937_64 rng(seed);
    double best = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < trials; ++t) {
        std::set<Configuration> taken;
        std::vector<Configuration> cand;
        for (std::size_t attempts = 0; cand.size() < count && attempts < 1000 * count; ++attempts) {
            Configuration x(space.size());
            for (std::size_t i = 0; i < x.size(); ++i) {
                const auto& dom = space[i].domain;
                x[i] = dom[std::uniform_int_distribution<std::size_t>(0, dom.size() - 1)(rng)];
            }
            if (visited.count(x) || !taken.insert(x).second)
                continue;
            cand.push_back(std::move(x));
        }
        const double s = spread_score(space, cand, samples);
        res.trial_scores.push_back(s);
        if (cand.size() > res.configs.size() || (cand.size() == res.configs.size() && s > best)) {
            best = s;
            res.configs = std::move(cand);
            res.score = s;
        }
    }
    res.reduced = res.reduced || res.configs.size() < count;
    return res;
}

inline nlohmann::json proposal_to_json(const RefinementProposal& p, const ParameterSpace& space)
{
    std::map<double, std::vector<int>> clusters;
    for (std::size_t k = 0; k < p.patches.size() && k < p.assignment.size(); ++k)
        clusters[p.assignment[k]].push_back(p.patches[k]);
    nlohmann::json c = nlohmann::json::array();
    for (const auto& [v, ps] : clusters)
        c.push_back({{"value", v}, {"patches", ps}});
    return nlohmann::json{{"section", p.section},
                          {"name", space[p.section].name},
                          {"n_clusters", p.n_clusters},
                          {"feasible", p.feasible},
                          {"baseline", p.baseline},
                          {"ilp_objective", p.ilp_objective},
                          {"improvement", p.improvement},
                          {"clusters", c}};
}

} // namespace hullopt
