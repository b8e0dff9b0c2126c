#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <vector>

#include "hullopt/common.hpp"

namespace hullopt {

/// Linear constraint sum coef[row][col] * x[row][col] <= rhs.
struct CouplingConstraint {
    std::vector<std::vector<double>> coef;
    double rhs = 0.0;
};

/// 0-1 program choosing exactly one column per row.
struct AssignmentIlp {
    /// Value label of each column; labels define the cardinality layer across rows.
    std::vector<std::vector<double>> values;
    std::vector<std::vector<double>> costs;
    std::vector<CouplingConstraint> coupling;
    /// Exactly this many distinct values are used, each by at least one row.
    std::optional<int> n_clusters;
    /// Column index per row of an assignment that is not allowed.
    std::optional<std::vector<std::size_t>> excluded;

    std::size_t rows() const { return costs.size(); }

    void validate() const
    {
        if (values.size() != costs.size())
            throw ConfigError("ILP values and costs have different row counts");
        for (std::size_t r = 0; r < costs.size(); ++r) {
            if (costs[r].empty())
                throw ConfigError("ILP row without columns");
            if (values[r].size() != costs[r].size())
                throw ConfigError("ILP row has mismatched values and costs");
            for (double c : costs[r])
                if (!std::isfinite(c))
                    throw ConfigError("ILP cost is not finite");
        }
        for (const auto& k : coupling) {
            if (k.coef.size() != costs.size())
                throw ConfigError("coupling constraint has the wrong row count");
            for (std::size_t r = 0; r < costs.size(); ++r) {
                if (k.coef[r].size() != costs[r].size())
                    throw ConfigError("coupling constraint has the wrong column count");
                for (double c : k.coef[r])
                    if (!std::isfinite(c))
                        throw ConfigError("coupling coefficient is not finite");
            }
            if (!std::isfinite(k.rhs))
                throw ConfigError("coupling right-hand side is not finite");
        }
        if (excluded && excluded->size() != costs.size())
            throw ConfigError("excluded assignment has the wrong length");
        if (n_clusters && *n_clusters < 1)
            throw ConfigError("cluster count must be positive");
    }

    /// Distinct value labels, ascending.
    std::vector<double> distinct_values() const
    {
        std::vector<double> d;
        for (const auto& row : values)
            d.insert(d.end(), row.begin(), row.end());
        std::sort(d.begin(), d.end());
        d.erase(std::unique(d.begin(), d.end()), d.end());
        return d;
    }

    double objective(const std::vector<std::size_t>& a) const
    {
        double f = 0.0;
        for (std::size_t r = 0; r < a.size(); ++r)
            f += costs[r][a[r]];
        return f;
    }

    /// Checks every constraint of the program exactly.
    bool feasible(const std::vector<std::size_t>& a) const
    {
        if (a.size() != rows())
            return false;
        for (std::size_t r = 0; r < a.size(); ++r)
            if (a[r] >= costs[r].size())
                return false;
        if (excluded && a == *excluded)
            return false;
        for (const auto& k : coupling) {
            double lhs = 0.0;
            for (std::size_t r = 0; r < a.size(); ++r)
                lhs += k.coef[r][a[r]];
            if (lhs > k.rhs)
                return false;
        }
        if (n_clusters) {
            std::vector<double> used;
            for (std::size_t r = 0; r < a.size(); ++r)
                used.push_back(values[r][a[r]]);
            std::sort(used.begin(), used.end());
            used.erase(std::unique(used.begin(), used.end()), used.end());
            if (static_cast<int>(used.size()) != *n_clusters)
                return false;
        }
        return true;
    }
};

enum class IlpStatus { Optimal, Infeasible, GapLimit };

struct IlpSolution {
    std::vector<std::size_t> assignment; // column index per row
    double objective = std::numeric_limits<double>::infinity();
    IlpStatus status = IlpStatus::Infeasible;
    double gap = 0.0;
};

namespace detail {

class AssignmentSearch {
public:
    using Clock = std::chrono::steady_clock;

    AssignmentSearch(const AssignmentIlp& p, double gap_limit, Clock::time_point deadline)
        : p_(p), gap_limit_(gap_limit), deadline_(deadline)
    {
        const std::size_t n = p.rows();
        order_.resize(n);
        std::iota(order_.begin(), order_.end(), 0);
        std::vector<double> spread(n);
        for (std::size_t r = 0; r < n; ++r) {
            const auto [lo, hi] = std::minmax_element(p.costs[r].begin(), p.costs[r].end());
            spread[r] = *hi - *lo;
        }
        std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return spread[a] > spread[b]; });
        current_.assign(n, 0);
    }

    /// Searches with columns restricted to `allowed` labels (all when empty) and records the best leaf.
    /// Returns false if the deadline stopped the search.
    bool run(const std::vector<double>& allowed)
    {
        allowed_ = allowed;
        const std::size_t n = p_.rows();
        cols_.assign(n, {});
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < p_.costs[r].size(); ++c)
                if (allowed_.empty() || std::binary_search(allowed_.begin(), allowed_.end(), p_.values[r][c]))
                    cols_[r].push_back(c);
            std::stable_sort(cols_[r].begin(), cols_[r].end(),
                             [&](std::size_t a, std::size_t b) { return p_.costs[r][a] < p_.costs[r][b]; });
            if (cols_[r].empty())
                return true;
        }
        // Per-constraint tails: sum over rows at depth >= k of the minimum coefficient.
        const std::size_t nk = p_.coupling.size();
        tail_min_.assign(nk, std::vector<double>(n + 1, 0.0));
        for (std::size_t k = 0; k < nk; ++k)
            for (std::size_t depth = n; depth-- > 0;) {
                const std::size_t r = order_[depth];
                double lo = std::numeric_limits<double>::infinity();
                for (auto c : cols_[r])
                    lo = std::min(lo, p_.coupling[k].coef[r][c]);
                tail_min_[k][depth] = tail_min_[k][depth + 1] + lo;
            }
        rest_min_.assign(n + 1, 0.0);
        for (std::size_t depth = n; depth-- > 0;)
            rest_min_[depth] = rest_min_[depth + 1] + p_.costs[order_[depth]][cols_[order_[depth]].front()];
        lhs_.assign(nk, 0.0);
        used_count_.assign(allowed_.size(), 0);
        uncovered_ = allowed_.size();
        timed_out_ = false;
        descend(0, 0.0);
        return !timed_out_;
    }

    /// Admissible lower bound of the restricted problem before any branching.
    double root_bound(const std::vector<double>& allowed) const
    {
        double b = 0.0;
        for (std::size_t r = 0; r < p_.rows(); ++r) {
            double lo = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < p_.costs[r].size(); ++c)
                if (allowed.empty() || std::binary_search(allowed.begin(), allowed.end(), p_.values[r][c]))
                    lo = std::min(lo, p_.costs[r][c]);
            b += lo;
        }
        return b;
    }

    double incumbent_value() const { return best_; }
    const std::vector<std::size_t>& incumbent() const { return best_assignment_; }
    bool tolerance_pruned() const { return tolerance_pruned_; }

private:
    // Column c of the row at `depth` can still be completed, given rows before `from` are fixed.
    bool admissible(std::size_t from, std::size_t depth, std::size_t r, std::size_t c) const
    {
        for (std::size_t k = 0; k < p_.coupling.size(); ++k) {
            const double others = from == depth
                                      ? tail_min_[k][depth + 1]
                                      : tail_min_[k][from] - (tail_min_[k][depth] - tail_min_[k][depth + 1]);
            // Lookahead checks get a small slack so rounding never tightens the bound.
            const double slack = from == depth ? 0.0 : 1e-9 * (1.0 + std::abs(p_.coupling[k].rhs));
            if (lhs_[k] + p_.coupling[k].coef[r][c] + others > p_.coupling[k].rhs + slack)
                return false;
        }
        return true;
    }

    // Sum of per-row minima over admissible columns for rows at depth >= from.
    double bound_from(std::size_t from) const
    {
        double b = 0.0;
        for (std::size_t depth = from; depth < order_.size(); ++depth) {
            const std::size_t r = order_[depth];
            double lo = std::numeric_limits<double>::infinity();
            for (auto c : cols_[r])
                if (admissible(from, depth, r, c)) {
                    lo = p_.costs[r][c]; // columns are sorted by cost
                    break;
                }
            if (!std::isfinite(lo))
                return lo;
            b += lo;
        }
        return b;
    }

    std::size_t label_index(double v) const
    {
        return static_cast<std::size_t>(std::lower_bound(allowed_.begin(), allowed_.end(), v) - allowed_.begin());
    }

    void descend(std::size_t depth, double cost)
    {
        if (timed_out_)
            return;
        if ((++nodes_ & 1023) == 0 && Clock::now() > deadline_) {
            timed_out_ = true;
            return;
        }
        const std::size_t n = order_.size();
        if (depth == n) {
            if (uncovered_ != 0)
                return;
            if (p_.excluded && current_ == *p_.excluded)
                return;
            if (cost < best_) {
                best_ = cost;
                best_assignment_ = current_;
            }
            return;
        }
        if (uncovered_ > n - depth)
            return;
        const double bound = cost + bound_from(depth);
        if (prune(bound))
            return;
        const std::size_t r = order_[depth];
        for (auto c : cols_[r]) {
            if (!admissible(depth, depth, r, c))
                continue;
            const double next = cost + p_.costs[r][c];
            if (prune(next + rest_min_[depth + 1]))
                break; // later columns cost at least as much
            for (std::size_t k = 0; k < lhs_.size(); ++k)
                lhs_[k] += p_.coupling[k].coef[r][c];
            std::size_t li = 0;
            if (!allowed_.empty()) {
                li = label_index(p_.values[r][c]);
                if (used_count_[li]++ == 0)
                    --uncovered_;
            }
            current_[r] = c;
            descend(depth + 1, next);
            if (!allowed_.empty() && --used_count_[li] == 0)
                ++uncovered_;
            for (std::size_t k = 0; k < lhs_.size(); ++k)
                lhs_[k] -= p_.coupling[k].coef[r][c];
            if (timed_out_)
                return;
        }
    }

    bool prune(double bound)
    {
        if (!std::isfinite(bound))
            return true;
        if (bound >= best_)
            return true;
        if (gap_limit_ > 0.0 && bound >= best_ - gap_limit_) {
            tolerance_pruned_ = true;
            return true;
        }
        return false;
    }

    const AssignmentIlp& p_;
    double gap_limit_;
    Clock::time_point deadline_;
    std::vector<std::size_t> order_;
    std::vector<std::vector<std::size_t>> cols_;
    std::vector<std::vector<double>> tail_min_;
    std::vector<double> rest_min_;
    std::vector<double> lhs_;
    std::vector<double> allowed_;
    std::vector<int> used_count_;
    std::size_t uncovered_ = 0;
    std::vector<std::size_t> current_;
    std::vector<std::size_t> best_assignment_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t nodes_ = 0;
    bool timed_out_ = false;
    bool tolerance_pruned_ = false;
};

inline void next_combination_init(std::vector<std::size_t>& idx, std::size_t k)
{
    idx.resize(k);
    std::iota(idx.begin(), idx.end(), 0);
}

inline bool next_combination(std::vector<std::size_t>& idx, std::size_t n)
{
    const std::size_t k = idx.size();
    for (std::size_t i = k; i-- > 0;) {
        if (idx[i] < n - k + i) {
            ++idx[i];
            for (std::size_t j = i + 1; j < k; ++j)
                idx[j] = idx[j - 1] + 1;
            return true;
        }
    }
    return false;
}

} // namespace detail

/// Exact branch and bound. gap_limit is an absolute objective tolerance; time_limit in seconds (<= 0: none).
inline IlpSolution solve_assignment(const AssignmentIlp& p, double gap_limit = 0.0, double time_limit = 0.0)
{
    p.validate();
    if (gap_limit < 0.0)
        throw ConfigError("gap limit must be non-negative");
    using Clock = detail::AssignmentSearch::Clock;
    const auto deadline = time_limit > 0.0
                              ? Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(time_limit))
                              : Clock::time_point::max();
    detail::AssignmentSearch search(p, gap_limit, deadline);

    // Subsets of active values, or a single unrestricted pass.
    std::vector<std::vector<double>> subsets;
    if (p.n_clusters) {
        const auto d = p.distinct_values();
        const auto k = static_cast<std::size_t>(*p.n_clusters);
        if (k <= d.size() && k <= p.rows()) {
            std::vector<std::size_t> idx;
            detail::next_combination_init(idx, k);
            do {
                std::vector<double> s;
                for (auto i : idx)
                    s.push_back(d[i]);
                subsets.push_back(std::move(s));
            } while (detail::next_combination(idx, d.size()));
        }
    } else {
        subsets.push_back({});
    }
    std::vector<double> roots(subsets.size());
    for (std::size_t s = 0; s < subsets.size(); ++s)
        roots[s] = search.root_bound(subsets[s]);
    std::vector<std::size_t> order(subsets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return roots[a] < roots[b]; });

    double lower = std::numeric_limits<double>::infinity();
    bool complete = true;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const std::size_t s = order[pos];
        if (roots[s] >= search.incumbent_value())
            continue;
        if (!search.run(subsets[s])) {
            complete = false;
            for (std::size_t q = pos; q < order.size(); ++q)
                lower = std::min(lower, roots[order[q]]);
            break;
        }
    }

    IlpSolution sol;
    if (search.incumbent().empty()) {
        sol.status = complete ? IlpStatus::Infeasible : IlpStatus::GapLimit;
        sol.gap = complete ? 0.0 : std::numeric_limits<double>::infinity();
        return sol;
    }
    sol.assignment = search.incumbent();
    sol.objective = search.incumbent_value();
    if (!complete) {
        sol.status = IlpStatus::GapLimit;
        sol.gap = std::max(0.0, sol.objective - std::min(lower, sol.objective));
    } else if (search.tolerance_pruned()) {
        sol.status = IlpStatus::GapLimit;
        sol.gap = gap_limit;
    } else {
        sol.status = IlpStatus::Optimal;
        sol.gap = 0.0;
    }
    return sol;
}

/// LP-like text dump for cross-checking with an external solver.
inline void write_lp(std::ostream& os, const AssignmentIlp& p)
{
    os << "minimize\n obj:";
    for (std::size_t r = 0; r < p.rows(); ++r)
        for (std::size_t c = 0; c < p.costs[r].size(); ++c)
            os << " + " << p.costs[r][c] << " x_" << r << "_" << c;
    os << "\nsubject to\n";
    for (std::size_t r = 0; r < p.rows(); ++r) {
        os << " row" << r << ":";
        for (std::size_t c = 0; c < p.costs[r].size(); ++c)
            os << " + x_" << r << "_" << c;
        os << " = 1\n";
    }
    for (std::size_t k = 0; k < p.coupling.size(); ++k) {
        os << " cpl" << k << ":";
        for (std::size_t r = 0; r < p.rows(); ++r)
            for (std::size_t c = 0; c < p.costs[r].size(); ++c)
                if (p.coupling[k].coef[r][c] != 0.0)
                    os << " + " << p.coupling[k].coef[r][c] << " x_" << r << "_" << c;
        os << " <= " << p.coupling[k].rhs << "\n";
    }
    if (p.excluded) {
        os << " excl:";
        for (std::size_t r = 0; r < p.rows(); ++r)
            os << " + x_" << r << "_" << (*p.excluded)[r];
        os << " <= " << p.rows() - 1 << "\n";
    }
    if (p.n_clusters) {
        const auto d = p.distinct_values();
        os << " card:";
        for (std::size_t t = 0; t < d.size(); ++t)
            os << " + u_" << t;
        os << " = " << *p.n_clusters << "\n";
        for (std::size_t t = 0; t < d.size(); ++t) {
            os << " cover" << t << ":";
            for (std::size_t r = 0; r < p.rows(); ++r)
                for (std::size_t c = 0; c < p.values[r].size(); ++c)
                    if (p.values[r][c] == d[t])
                        os << " + x_" << r << "_" << c;
            os << " - u_" << t << " >= 0\n";
            for (std::size_t r = 0; r < p.rows(); ++r)
                for (std::size_t c = 0; c < p.values[r].size(); ++c)
                    if (p.values[r][c] == d[t])
                        os << " link" << t << "_" << r << ": x_" << r << "_" << c << " - u_" << t << " <= 0\n";
        }
    }
    os << "binary\n";
    for (std::size_t r = 0; r < p.rows(); ++r)
        for (std::size_t c = 0; c < p.costs[r].size(); ++c)
            os << " x_" << r << "_" << c << "\n";
    if (p.n_clusters)
        for (std::size_t t = 0; t < p.distinct_values().size(); ++t)
            os << " u_" << t << "\n";
    os << "end\n";
}

} // namespace hullopt
