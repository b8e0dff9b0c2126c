#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "json.hpp"

#include "hullopt/common.hpp"
#include "hullopt/hull/fem.hpp"
#include "hullopt/hull/model.hpp"
#include "hullopt/hull/parameter_space.hpp"

namespace hullopt {

/// (sx, sy, sz, txy, txz, tyz) in MPa.
using StressTensor = std::array<double, kNumComponents>;

struct YieldLimits {
    double direct = 245.0;
    double shear = 153.0;
    double von_mises = 307.0;
};

struct PenaltyConfig {
    double c_y = 0.0; // t per count^2
    double c_b = 0.0;
    double y_crit = 0.0;
    double b_crit = 0.0;
    double m_bar = 0.0; // t per buckled element
    double m_fixed = 0.0;
    double vcg_fixed = 0.0;
    double vcg_crit = 0.0;
    std::optional<double> deflection_crit; // mm
    double c_d = 0.0;                      // t per mm^2, used with deflection_crit
    YieldLimits yield;

    void validate() const
    {
        if (c_y < 0 || c_b < 0 || c_d < 0 || m_bar < 0 || y_crit < 0 || b_crit < 0)
            throw ConfigError("penalty weights and thresholds must be non-negative");
        if (deflection_crit && *deflection_crit < 0)
            throw ConfigError("deflection threshold must be non-negative");
    }
};

struct QoiVector {
    int n_y = 0;
    int n_b = 0;
    double deflection = 0.0; // mm
    double mass = 0.0;       // t
    double vcg = 0.0;        // m
};

struct FailureState {
    std::vector<char> yielded;
    std::vector<char> buckled;
    /// Per element, max over load cases of (long., transv., shear) usage.
    std::vector<std::array<double, 3>> usage_factors;
};

inline double von_mises(const StressTensor& s)
{
    const double sx = s[0], sy = s[1], sz = s[2];
    const double d = ((sx - sy) * (sx - sy) + (sy - sz) * (sy - sz) + (sz - sx) * (sz - sx)) / 2.0;
    return std::sqrt(d + 3.0 * (s[3] * s[3] + s[4] * s[4] + s[5] * s[5]));
}

inline bool check_yield(const StressTensor& s, const YieldLimits& lim = {})
{
    for (int i = 0; i < 3; ++i)
        if (std::abs(s[static_cast<std::size_t>(i)]) > lim.direct)
            return true;
    for (int i = 3; i < 6; ++i)
        if (std::abs(s[static_cast<std::size_t>(i)]) > lim.shear)
            return true;
    return von_mises(s) > lim.von_mises;
}

/// Elastic critical stress (MPa) of a simply supported plate strip: k pi^2 E / (12(1-nu^2)) (t/b)^2.
inline double critical_stress(double k, double thickness_mm, double b_m, const Material& mat = {})
{
    const double tb = thickness_mm * 1e-3 / b_m;
    return k * std::numbers::pi * std::numbers::pi * mat.youngs_modulus / (12.0 * (1.0 - mat.poisson * mat.poisson))
           * tb * tb;
}

inline double shear_buckling_coefficient(double b, double a) { return 5.34 + 4.0 * (b / a) * (b / a); }

/// Usage factors (long. compression, transv. compression, shear).
inline std::array<double, 3> check_buckling(const StressTensor& s, double panel_width_b, double panel_length_a,
                                            double thickness_mm, const Material& mat = {})
{
    if (!(thickness_mm > 0.0) || !(panel_width_b > 0.0) || !(panel_length_a > 0.0))
        throw DomainError("buckling check needs positive thickness and panel dimensions");
    const double sc = critical_stress(4.0, thickness_mm, panel_width_b, mat);
    const double tc =
        critical_stress(shear_buckling_coefficient(panel_width_b, panel_length_a), thickness_mm, panel_width_b, mat);
    return {std::max(-s[0], 0.0) / sc, std::max(-s[1], 0.0) / sc, std::abs(s[3]) / tc};
}

inline std::array<double, 3> check_buckling(const StressTensor& s, const Element& e, double thickness_mm,
                                            const Material& mat = {})
{
    return check_buckling(s, e.panel_width_b, e.panel_length_a, thickness_mm, mat);
}

/// Element-wise failure evaluation with per-element buckling coefficients precomputed once per model.
class FailureEvaluator {
public:
    FailureEvaluator() = default;

    FailureEvaluator(const std::vector<Element>& elements, const Material& mat, const YieldLimits& lim)
        : lim_(lim)
    {
        direct_.resize(elements.size());
        shear_.resize(elements.size());
        for (std::size_t e = 0; e < elements.size(); ++e) {
            const auto& el = elements[e];
            if (!(el.panel_width_b > 0.0) || !(el.panel_length_a > 0.0))
                throw DomainError("element panel dimensions must be positive");
            direct_[e] = critical_stress(4.0, 1.0, el.panel_width_b, mat);
            shear_[e] = critical_stress(shear_buckling_coefficient(el.panel_width_b, el.panel_length_a), 1.0,
                                        el.panel_width_b, mat);
        }
    }

    std::size_t element_count() const noexcept { return direct_.size(); }
    const YieldLimits& limits() const noexcept { return lim_; }

    /// fields[l][c] points to the element array of component c under load l.
    FailureState evaluate(const std::array<std::array<const double*, kNumComponents>, kNumLoads>& fields,
                          const std::vector<double>& thickness_mm) const
    {
        const std::size_t n = direct_.size();
        if (thickness_mm.size() != n)
            throw DataError("thickness vector size does not match the element count");
        FailureState fs;
        fs.yielded.assign(n, 0);
        fs.buckled.assign(n, 0);
        fs.usage_factors.assign(n, {0.0, 0.0, 0.0});
        for (std::size_t e = 0; e < n; ++e) {
            const double t2 = thickness_mm[e] * thickness_mm[e];
            const double sc = direct_[e] * t2, tc = shear_[e] * t2;
            auto& u = fs.usage_factors[e];
            for (std::size_t l = 0; l < kNumLoads; ++l) {
                StressTensor s;
                for (std::size_t c = 0; c < kNumComponents; ++c)
                    s[c] = fields[l][c][e];
                if (check_yield(s, lim_))
                    fs.yielded[e] = 1;
                u[0] = std::max(u[0], std::max(-s[0], 0.0) / sc);
                u[1] = std::max(u[1], std::max(-s[1], 0.0) / sc);
                u[2] = std::max(u[2], std::abs(s[3]) / tc);
            }
            fs.buckled[e] = (u[0] > 1.0 || u[1] > 1.0 || u[2] > 1.0) ? 1 : 0;
        }
        return fs;
    }

    FailureState evaluate(const StressSnapshot& s, const std::vector<double>& thickness_mm) const
    {
        std::array<std::array<const double*, kNumComponents>, kNumLoads> f{};
        for (std::size_t l = 0; l < kNumLoads; ++l) {
            for (std::size_t c = 0; c < kNumComponents; ++c) {
                if (static_cast<std::size_t>(s.loads[l].stress[c].size()) != direct_.size())
                    throw DataError("snapshot element count does not match the model");
                f[l][c] = s.loads[l].stress[c].data();
            }
        }
        return evaluate(f, thickness_mm);
    }

private:
    YieldLimits lim_;
    std::vector<double> direct_; // sigma_cr per mm^2 of thickness
    std::vector<double> shear_;
};

inline double controllable_mass(const ParameterSpace& space, const Configuration& x) { return space.dot_density(x); }

inline double structural_vcg(const ParameterSpace& space, const Configuration& x, const PenaltyConfig& pen)
{
    const double num = pen.vcg_fixed * pen.m_fixed + space.vcg_moment(x);
    const double den = pen.m_fixed + space.dot_density(x);
    return den > 0.0 ? num / den : 0.0;
}

/// QoIs from counts and deflection already known; mass and VCG follow from the configuration.
inline QoiVector assemble_qois(int n_y, int n_b, double deflection, const ParameterSpace& space,
                               const Configuration& x, const PenaltyConfig& pen)
{
    QoiVector q;
    q.n_y = n_y;
    q.n_b = n_b;
    q.deflection = deflection;
    q.mass = pen.m_fixed + space.dot_density(x) + pen.m_bar * n_b;
    q.vcg = structural_vcg(space, x, pen);
    return q;
}

inline int count_flags(const std::vector<char>& v) { return static_cast<int>(std::count(v.begin(), v.end(), 1)); }

inline QoiVector compute_qois(const StressSnapshot& snap, const HullModel& model, const ParameterSpace& space,
                              const FailureEvaluator& eval, const PenaltyConfig& pen, int monitored_node)
{
    if (snap.element_count() != model.element_count())
        throw DataError("snapshot element count does not match the model");
    const auto fs = eval.evaluate(snap, model.element_thickness(space, snap.config));
    return assemble_qois(count_flags(fs.yielded), count_flags(fs.buckled), vertical_deflection(snap, monitored_node),
                         space, snap.config, pen);
}

inline double plus(double v) { return v > 0.0 ? v : 0.0; }

inline double penalty_term(const QoiVector& q, const PenaltyConfig& pen)
{
    const double ey = plus(q.n_y - pen.y_crit), eb = plus(q.n_b - pen.b_crit);
    double p = pen.c_y * ey * ey + pen.c_b * eb * eb;
    if (pen.deflection_crit) {
        const double ed = plus(q.deflection - *pen.deflection_crit);
        p += pen.c_d * ed * ed;
    }
    return p;
}

inline double penalized_mass(const QoiVector& q, const PenaltyConfig& pen) { return q.mass + penalty_term(q, pen); }

inline bool vcg_feasible(const QoiVector& q, const PenaltyConfig& pen) { return q.vcg <= pen.vcg_crit; }

inline bool constraints_met(const QoiVector& q, const PenaltyConfig& pen)
{
    return q.n_y <= pen.y_crit && q.n_b <= pen.b_crit && q.vcg <= pen.vcg_crit
           && (!pen.deflection_crit || q.deflection <= *pen.deflection_crit);
}

/// Percentage excess of controllable mass plus penalties over the lower-bound controllable mass.
inline double mass_gap(const Configuration& x, const QoiVector& q, const PenaltyConfig& pen,
                       const ParameterSpace& space, const Configuration& x_lb)
{
    const double base = space.dot_density(x_lb);
    if (!(base > 0.0))
        throw DomainError("mass gap undefined: d . x_LB is zero");
    const double dx = space.dot_density(x) - base;
    return 100.0 * (dx + pen.m_bar * q.n_b + penalty_term(q, pen)) / base;
}

/// Per-patch yielded and buckled counts.
inline std::pair<std::vector<int>, std::vector<int>> patch_counts(const FailureState& fs, const HullModel& model)
{
    std::vector<int> y(model.patches.size(), 0), b(model.patches.size(), 0);
    for (const auto& e : model.elements) {
        if (e.patch_id < 0)
            continue;
        y[static_cast<std::size_t>(e.patch_id)] += fs.yielded[static_cast<std::size_t>(e.id)];
        b[static_cast<std::size_t>(e.patch_id)] += fs.buckled[static_cast<std::size_t>(e.id)];
    }
    return {y, b};
}

inline void to_json(nlohmann::json& j, const PenaltyConfig& p)
{
    j = nlohmann::json{{"c_y", p.c_y},           {"c_b", p.c_b},     {"y_crit", p.y_crit},
                       {"b_crit", p.b_crit},     {"m_bar", p.m_bar}, {"vcg_crit", p.vcg_crit},
                       {"c_d", p.c_d},           {"yield_direct", p.yield.direct},
                       {"yield_shear", p.yield.shear}, {"yield_von_mises", p.yield.von_mises}};
    j["deflection_crit"] = p.deflection_crit ? nlohmann::json(*p.deflection_crit) : nlohmann::json(nullptr);
}

/// m_fixed and vcg_fixed are derived from the model, not read.
inline void from_json(const nlohmann::json& j, PenaltyConfig& p)
{
    p.c_y = j.value("c_y", p.c_y);
    p.c_b = j.value("c_b", p.c_b);
    p.y_crit = j.value("y_crit", p.y_crit);
    p.b_crit = j.value("b_crit", p.b_crit);
    p.m_bar = j.value("m_bar", p.m_bar);
    p.vcg_crit = j.value("vcg_crit", p.vcg_crit);
    p.c_d = j.value("c_d", p.c_d);
    p.yield.direct = j.value("yield_direct", p.yield.direct);
    p.yield.shear = j.value("yield_shear", p.yield.shear);
    p.yield.von_mises = j.value("yield_von_mises", p.yield.von_mises);
    if (j.contains("deflection_crit") && !j["deflection_crit"].is_null())
        p.deflection_crit = j["deflection_crit"].get<double>();
}

} // namespace hullopt
