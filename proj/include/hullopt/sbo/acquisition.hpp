#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "hullopt/common.hpp"

namespace hullopt {

enum class AcqKind { NLCB, EI, PI };

inline std::string acq_name(AcqKind k)
{
    switch (k) {
    case AcqKind::NLCB: return "NLCB";
    case AcqKind::EI: return "EI";
    case AcqKind::PI: return "PI";
    }
    return "?";
}

inline AcqKind acq_from_name(const std::string& s)
{
    for (auto k : {AcqKind::NLCB, AcqKind::EI, AcqKind::PI})
        if (acq_name(k) == s)
            return k;
    throw ConfigError("unknown acquisition '" + s + "'");
}

/// Rotation NLCB -> EI -> PI -> NLCB.
inline AcqKind next_acq(AcqKind k)
{
    switch (k) {
    case AcqKind::NLCB: return AcqKind::EI;
    case AcqKind::EI: return AcqKind::PI;
    case AcqKind::PI: return AcqKind::NLCB;
    }
    return AcqKind::NLCB;
}

struct AcquisitionConfig {
    AcqKind kind = AcqKind::NLCB;
    double beta = 2.0;
    double epsilon = 0.1; // tonnes
    int switch_patience = 100;

    void validate() const
    {
        if (!(beta >= 0.0))
            throw ConfigError("acquisition beta must be non-negative");
        if (!(epsilon > 0.0))
            throw ConfigError("acquisition epsilon must be positive");
        if (switch_patience < 1)
            throw ConfigError("acquisition switch patience must be positive");
    }
};

inline double normal_pdf(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

/// Acquisition value for a minimization problem with best known value y_star.
inline double acquisition(AcqKind kind, double mu, double sigma, double y_star, const AcquisitionConfig& cfg = {})
{
    switch (kind) {
    case AcqKind::NLCB:
        return -(mu - cfg.beta * sigma);
    case AcqKind::EI: {
        const double imp = y_star - mu;
        if (sigma <= 0.0)
            return imp > 0.0 ? imp : 0.0;
        const double u = imp / sigma;
        return imp * normal_cdf(u) + sigma * normal_pdf(u);
    }
    case AcqKind::PI: {
        const double imp = y_star - cfg.epsilon - mu;
        if (sigma <= 0.0)
            return imp > 0.0 ? 1.0 : (imp < 0.0 ? 0.0 : 0.5);
        return normal_cdf(imp / sigma);
    }
    }
    return 0.0;
}

/// Chain rule from (dmu, dsigma) to the acquisition gradient.
inline Eigen::VectorXd acquisition_gradient(AcqKind kind, double mu, double sigma, double y_star,
                                            const Eigen::VectorXd& dmu, const Eigen::VectorXd& dsigma,
                                            const AcquisitionConfig& cfg = {})
{
    switch (kind) {
    case AcqKind::NLCB:
        return -dmu + cfg.beta * dsigma;
    case AcqKind::EI: {
        const double imp = y_star - mu;
        if (sigma <= 0.0)
            return imp > 0.0 ? Eigen::VectorXd(-dmu) : Eigen::VectorXd::Zero(dmu.size());
        const double u = imp / sigma;
        return -normal_cdf(u) * dmu + normal_pdf(u) * dsigma;
    }
    case AcqKind::PI: {
        if (sigma <= 0.0)
            return Eigen::VectorXd::Zero(dmu.size());
        const double u = (y_star - cfg.epsilon - mu) / sigma;
        return normal_pdf(u) * (-dmu / sigma - u * dsigma / sigma);
    }
    }
    return Eigen::VectorXd::Zero(dmu.size());
}

} // namespace hullopt
