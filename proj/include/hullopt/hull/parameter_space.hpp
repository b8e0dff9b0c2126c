#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hullopt/common.hpp"

namespace hullopt {

struct ParameterDef {
    int index = 0;
    std::string name;
    std::vector<int> patch_ids;
    /// Admissible thickness values (mm), strictly ascending.
    std::vector<double> domain;
    std::optional<int> parent;
    /// Mass per mm of thickness over all controlled patches (t/mm).
    double linear_density = 0.0;
    /// Mass-weighted vertical centre of the controlled patches (m).
    double vcg = 0.0;
};

/// Discrete thickness parameters, the patches they control and their refinement hierarchy.
class ParameterSpace {
public:
    ParameterSpace() = default;

    ParameterSpace(std::vector<ParameterDef> params, std::size_t n_patches)
        : params_(std::move(params)), owner_(n_patches, -1)
    {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i];
            p.index = static_cast<int>(i);
            if (p.domain.empty())
                throw ConfigError("parameter '" + p.name + "' has an empty domain");
            for (std::size_t k = 0; k < p.domain.size(); ++k) {
                if (!(p.domain[k] > 0.0))
                    throw ConfigError("parameter '" + p.name + "' has a non-positive thickness");
                if (k > 0 && !(p.domain[k] > p.domain[k - 1]))
                    throw ConfigError("parameter '" + p.name + "' domain is not strictly ascending");
            }
            if (p.patch_ids.empty())
                throw ConfigError("parameter '" + p.name + "' controls no patch");
            for (int patch : p.patch_ids) {
                if (patch < 0 || static_cast<std::size_t>(patch) >= owner_.size())
                    throw ConfigError("parameter '" + p.name + "' references unknown patch");
                if (owner_[static_cast<std::size_t>(patch)] != -1)
                    throw ConfigError("patch " + std::to_string(patch) + " is controlled by two parameters");
                owner_[static_cast<std::size_t>(patch)] = static_cast<int>(i);
            }
            if (p.parent) {
                if (*p.parent < 0 || static_cast<std::size_t>(*p.parent) >= i)
                    throw ConfigError("parameter parent must precede its child");
            }
        }
    }

    std::size_t size() const noexcept { return params_.size(); }
    const ParameterDef& operator[](std::size_t i) const { return params_.at(i); }
    const std::vector<ParameterDef>& params() const noexcept { return params_; }
    /// Parameter index controlling each patch, -1 for unparameterized patches.
    const std::vector<int>& patch_owner() const noexcept { return owner_; }
    std::size_t patch_count() const noexcept { return owner_.size(); }

    double total_configurations() const
    {
        double n = 1.0;
        for (const auto& p : params_)
            n *= static_cast<double>(p.domain.size());
        return n;
    }

    bool contains(const Configuration& x) const
    {
        if (x.size() != params_.size())
            return false;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (!std::binary_search(params_[i].domain.begin(), params_[i].domain.end(), x[i]))
                return false;
        return true;
    }

    void validate(const Configuration& x) const
    {
        if (x.size() != params_.size())
            throw DomainError("configuration has " + std::to_string(x.size()) + " values, space has "
                              + std::to_string(params_.size()) + " parameters");
        for (std::size_t i = 0; i < x.size(); ++i)
            if (!std::binary_search(params_[i].domain.begin(), params_[i].domain.end(), x[i]))
                throw DomainError("value " + std::to_string(x[i]) + " is not in the domain of '"
                                  + params_[i].name + "'");
    }

    Configuration lower_bounds() const
    {
        Configuration lb(params_.size());
        for (std::size_t i = 0; i < lb.size(); ++i)
            lb[i] = params_[i].domain.front();
        return lb;
    }

    Configuration upper_bounds() const
    {
        Configuration ub(params_.size());
        for (std::size_t i = 0; i < ub.size(); ++i)
            ub[i] = params_[i].domain.back();
        return ub;
    }

    std::vector<double> linear_densities() const
    {
        std::vector<double> d(params_.size());
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] = params_[i].linear_density;
        return d;
    }

    std::vector<double> vcgs() const
    {
        std::vector<double> v(params_.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = params_[i].vcg;
        return v;
    }

    /// Per-patch density (t/mm) and vertical centre (m); when set, mass sums run over patches so that
    /// they do not depend on how patches are grouped into parameters.
    void set_patch_properties(std::vector<double> density, std::vector<double> vcg)
    {
        if (density.size() != owner_.size() || vcg.size() != owner_.size())
            throw ConfigError("patch property arrays do not match the patch count");
        patch_density_ = std::move(density);
        patch_vcg_ = std::move(vcg);
    }
    const std::vector<double>& patch_density() const noexcept { return patch_density_; }
    const std::vector<double>& patch_vcg() const noexcept { return patch_vcg_; }

    /// d . x
    double dot_density(const Configuration& x) const
    {
        if (x.size() != params_.size())
            throw DomainError("configuration size does not match the parameter space");
        double s = 0.0;
        if (!patch_density_.empty()) {
            for (std::size_t p = 0; p < owner_.size(); ++p)
                if (owner_[p] >= 0)
                    s += patch_density_[p] * x[static_cast<std::size_t>(owner_[p])];
            return s;
        }
        for (std::size_t i = 0; i < params_.size(); ++i)
            s += params_[i].linear_density * x[i];
        return s;
    }

    /// sum_i vcg_i d_i x_i
    double vcg_moment(const Configuration& x) const
    {
        if (x.size() != params_.size())
            throw DomainError("configuration size does not match the parameter space");
        double s = 0.0;
        if (!patch_density_.empty()) {
            for (std::size_t p = 0; p < owner_.size(); ++p)
                if (owner_[p] >= 0)
                    s += patch_vcg_[p] * patch_density_[p] * x[static_cast<std::size_t>(owner_[p])];
            return s;
        }
        for (std::size_t i = 0; i < params_.size(); ++i)
            s += params_[i].vcg * params_[i].linear_density * x[i];
        return s;
    }

    /// Index of the domain value nearest to v (ties towards the smaller value).
    std::size_t nearest_index(std::size_t i, double v) const
    {
        const auto& dom = params_.at(i).domain;
        std::size_t best = 0;
        for (std::size_t k = 1; k < dom.size(); ++k)
            if (std::abs(dom[k] - v) < std::abs(dom[best] - v))
                best = k;
        return best;
    }

    std::size_t value_index(std::size_t i, double v) const
    {
        const auto& dom = params_.at(i).domain;
        auto it = std::lower_bound(dom.begin(), dom.end(), v);
        if (it == dom.end() || *it != v)
            throw DomainError("value not in domain of '" + params_.at(i).name + "'");
        return static_cast<std::size_t>(it - dom.begin());
    }

    /// Lifts a configuration of a coarser ancestor space: each child copies its parent's value.
    Configuration lift(const Configuration& coarse) const
    {
        if (coarse.size() > params_.size())
            throw DataError("cannot lift a configuration with more values than the space");
        Configuration x(coarse);
        x.resize(params_.size());
        for (std::size_t k = coarse.size(); k < params_.size(); ++k) {
            if (!params_[k].parent)
                throw DataError("parameter '" + params_[k].name + "' has no parent to lift from");
            x[k] = x[static_cast<std::size_t>(*params_[k].parent)];
        }
        return x;
    }

    /// Thickness assigned to every patch (NaN for unparameterized ones).
    std::vector<double> patch_thickness(const Configuration& x) const
    {
        std::vector<double> t(owner_.size(), std::nan(""));
        for (std::size_t p = 0; p < owner_.size(); ++p)
            if (owner_[p] >= 0)
                t[p] = x.at(static_cast<std::size_t>(owner_[p]));
        return t;
    }

private:
    std::vector<ParameterDef> params_;
    std::vector<int> owner_;
    std::vector<double> patch_density_;
    std::vector<double> patch_vcg_;
};

inline void to_json(nlohmann::json& j, const ParameterDef& p)
{
    j = nlohmann::json{{"name", p.name},       {"patches", p.patch_ids},           {"domain", p.domain},
                       {"linear_density", p.linear_density}, {"vcg", p.vcg}};
    j["parent"] = p.parent ? nlohmann::json(*p.parent) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, ParameterDef& p)
{
    j.at("name").get_to(p.name);
    j.at("patches").get_to(p.patch_ids);
    j.at("domain").get_to(p.domain);
    j.at("linear_density").get_to(p.linear_density);
    j.at("vcg").get_to(p.vcg);
    if (j.contains("parent") && !j["parent"].is_null())
        p.parent = j["parent"].get<int>();
    else
        p.parent.reset();
}

inline nlohmann::json space_to_json(const ParameterSpace& s)
{
    return nlohmann::json{{"patch_count", s.patch_count()},
                          {"params", s.params()},
                          {"patch_density", s.patch_density()},
                          {"patch_vcg", s.patch_vcg()}};
}

inline ParameterSpace space_from_json(const nlohmann::json& j)
{
    ParameterSpace s(j.at("params").get<std::vector<ParameterDef>>(), j.at("patch_count").get<std::size_t>());
    auto d = j.value("patch_density", std::vector<double>{});
    if (!d.empty())
        s.set_patch_properties(std::move(d), j.at("patch_vcg").get<std::vector<double>>());
    return s;
}

} // namespace hullopt
