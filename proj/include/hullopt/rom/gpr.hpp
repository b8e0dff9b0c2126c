#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "json.hpp"

#include "hullopt/common.hpp"
#include "hullopt/hull/snapshot_io.hpp"

namespace hullopt {

struct GprOptions {
    int restarts = 5;
    int max_iters = 200;
    std::uint64_t seed = 0;
    /// Keeps the noise variance (in scaled target units) fixed instead of optimizing it.
    std::optional<double> fixed_noise;
    double noise_init_ratio = 1e-6;
    /// Starting point for the first restart, log-space [sf2, l_1..l_d, sn2].
    std::optional<Eigen::VectorXd> warm_start;
};

struct GprPrediction {
    Eigen::MatrixXd mean;     // q x k
    Eigen::VectorXd variance; // q, latent variance in scaled target units
};

struct GprPointGradient {
    double mean = 0.0;
    double variance = 0.0;
    Eigen::VectorXd dmean;
    Eigen::VectorXd dvariance;
};

/// Zero-mean GP with squared-exponential ARD kernel; k target columns share one covariance.
/// Targets are divided by their per-column RMS before fitting.
class GprModel {
public:
    static constexpr double kLogSf2Min = -9.21, kLogSf2Max = 4.605; // 1e-4 .. 1e2 (targets are RMS-scaled)
    static constexpr double kLogLsMin = -4.61, kLogLsMax = 4.61;   // 1e-2 .. 1e2
    static constexpr double kLogSn2Min = -23.03, kLogSn2Max = 0.0; // 1e-10 .. 1

    GprModel() = default;

    Eigen::Index dim() const { return x_.cols(); }
    Eigen::Index outputs() const { return alpha_.cols(); }
    Eigen::Index samples() const { return x_.rows(); }
    bool fitted() const { return x_.rows() > 0; }
    const Eigen::VectorXd& theta() const { return theta_; }
    double signal_variance() const { return std::exp(theta_[0]); }
    double noise_variance() const { return std::exp(theta_[theta_.size() - 1]); }
    Eigen::VectorXd length_scales() const { return theta_.segment(1, dim()).array().exp(); }
    const Eigen::VectorXd& target_scale() const { return scale_; }
    double jitter() const { return jitter_; }
    const Eigen::MatrixXd& inputs() const { return x_; }
    double log_likelihood_value() const { return ll_; }

    /// Squared-exponential ARD kernel in scaled target units.
    static Eigen::MatrixXd kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::VectorXd& theta)
    {
        const Eigen::Index d = a.cols();
        const double sf2 = std::exp(theta[0]);
        const Eigen::ArrayXd inv_l = (-theta.segment(1, d)).array().exp();
        const Eigen::MatrixXd as = a.array().rowwise() * inv_l.transpose();
        const Eigen::MatrixXd bs = b.array().rowwise() * inv_l.transpose();
        Eigen::MatrixXd k(a.rows(), b.rows());
        for (Eigen::Index j = 0; j < b.rows(); ++j)
            for (Eigen::Index i = 0; i < a.rows(); ++i)
                k(i, j) = sf2 * std::exp(-0.5 * (as.row(i) - bs.row(j)).squaredNorm());
        return k;
    }

    Eigen::MatrixXd kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const { return kernel(a, b, theta_); }

    /// Log marginal likelihood of Y (m x k) under theta; gradient w.r.t. log-hyperparameters if requested.
    /// Returns -inf when the covariance is not positive definite.
    static double log_likelihood(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const Eigen::VectorXd& theta,
                                 Eigen::VectorXd* grad = nullptr, double jitter = 0.0)
    {
        const Eigen::Index m = x.rows(), d = x.cols(), k = y.cols();
        if (theta.size() != d + 2)
            throw DataError("hyperparameter vector has the wrong length");
        const Eigen::MatrixXd kf = kernel(x, x, theta);
        const double sn2 = std::exp(theta[d + 1]);
        Eigen::MatrixXd kk = kf;
        kk.diagonal().array() += sn2 + jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(kk);
        if (llt.info() != Eigen::Success)
            return -std::numeric_limits<double>::infinity();
        const Eigen::MatrixXd a = llt.solve(y);
        const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        const double ll = -0.5 * static_cast<double>(k * m) * std::log(2.0 * std::numbers::pi) - 0.5 * k * logdet
                          - 0.5 * (y.array() * a.array()).sum();
        if (!std::isfinite(ll))
            return -std::numeric_limits<double>::infinity();
        if (grad) {
            const Eigen::MatrixXd kinv = llt.solve(Eigen::MatrixXd::Identity(m, m));
            const Eigen::MatrixXd w = a * a.transpose() - static_cast<double>(k) * kinv;
            grad->resize(d + 2);
            const Eigen::MatrixXd wk = w.cwiseProduct(kf);
            (*grad)[0] = 0.5 * wk.sum();
            for (Eigen::Index dd = 0; dd < d; ++dd) {
                const double l2 = std::exp(2.0 * theta[1 + dd]);
                double s = 0.0;
                for (Eigen::Index j = 0; j < m; ++j)
                    for (Eigen::Index i = 0; i < m; ++i) {
                        const double diff = x(i, dd) - x(j, dd);
                        s += wk(i, j) * diff * diff;
                    }
                (*grad)[1 + dd] = 0.5 * s / l2;
            }
            (*grad)[d + 1] = 0.5 * sn2 * w.trace();
        }
        return ll;
    }

    static GprModel fit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const GprOptions& opt = {})
    {
        const Eigen::Index m = x.rows(), d = x.cols(), k = y.cols();
        if (m < 2)
            throw FitError("GPR needs at least two samples");
        if (y.rows() != m || k < 1)
            throw DataError("GPR target matrix does not match the inputs");
        if (!x.allFinite() || !y.allFinite())
            throw FitError("GPR data has non-finite entries");

        GprModel g;
        g.x_ = x;
        g.scale_.resize(k);
        for (Eigen::Index c = 0; c < k; ++c) {
            const double rms = std::sqrt(y.col(c).squaredNorm() / static_cast<double>(m));
            g.scale_[c] = rms > 0.0 ? rms : 1.0;
        }
        const Eigen::MatrixXd ys = y.array().rowwise() / g.scale_.transpose().array();

        double var = 0.0;
        for (Eigen::Index c = 0; c < k; ++c) {
            const double mu = ys.col(c).mean();
            var += (ys.col(c).array() - mu).square().sum() / static_cast<double>(m);
        }
        var /= static_cast<double>(k);
        const double noise0 = opt.fixed_noise ? *opt.fixed_noise : std::max(opt.noise_init_ratio * (var > 0 ? var : 1.0), 1e-10);
        const double log_noise0 = std::clamp(std::log(noise0), kLogSn2Min, opt.fixed_noise ? 0.0 : kLogSn2Max);

        std::mt19937_64 rng(opt.seed);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        Eigen::VectorXd best;
        double best_ll = -std::numeric_limits<double>::infinity();
        const int starts = std::max(1, opt.restarts);
        for (int s = 0; s < starts; ++s) {
            Eigen::VectorXd th(d + 2);
            if (s == 0 && opt.warm_start && opt.warm_start->size() == d + 2) {
                th = *opt.warm_start;
            } else if (s == 0) {
                th[0] = 0.0;
                th.segment(1, d).setConstant(std::log(0.5));
            } else {
                th[0] = std::log(0.3) + u01(rng) * (std::log(3.0) - std::log(0.3));
                for (Eigen::Index dd = 0; dd < d; ++dd)
                    th[1 + dd] = std::log(0.1) + u01(rng) * (std::log(2.0) - std::log(0.1));
            }
            if (opt.fixed_noise || !(s == 0 && opt.warm_start && opt.warm_start->size() == d + 2))
                th[d + 1] = log_noise0;
            const double ll = ascend(x, ys, th, opt.max_iters, opt.fixed_noise.has_value());
            if (ll > best_ll) {
                best_ll = ll;
                best = th;
            }
        }
        if (!std::isfinite(best_ll))
            throw FitError("GPR likelihood could not be evaluated at any starting point");
        g.theta_ = best;
        g.ll_ = best_ll;
        g.factorize(ys);
        return g;
    }

    GprPrediction predict(const Eigen::MatrixXd& xq) const
    {
        check_dim(xq.cols());
        const Eigen::MatrixXd kq = kernel(xq, x_);
        GprPrediction p;
        p.mean = (kq * alpha_).array().rowwise() * scale_.transpose().array();
        const Eigen::MatrixXd v = l_.triangularView<Eigen::Lower>().solve(kq.transpose());
        p.variance = (signal_variance() - v.colwise().squaredNorm().array()).matrix().transpose();
        clamp_variance(p.variance);
        return p;
    }

    /// Means only; skips the triangular solve.
    Eigen::MatrixXd predict_mean(const Eigen::MatrixXd& xq) const
    {
        check_dim(xq.cols());
        return (kernel(xq, x_) * alpha_).array().rowwise() * scale_.transpose().array();
    }

    /// Mean and variance of target column 0 with input gradients, in target units.
    GprPointGradient predict_with_gradient(const Eigen::VectorXd& xq) const
    {
        check_dim(xq.size());
        const Eigen::Index m = x_.rows(), d = x_.cols();
        const Eigen::VectorXd inv_l2 = (-2.0 * theta_.segment(1, d)).array().exp();
        const Eigen::VectorXd kv = kernel(xq.transpose(), x_).transpose();
        const Eigen::VectorXd kinv_k = l_.transpose().triangularView<Eigen::Upper>().solve(
            l_.triangularView<Eigen::Lower>().solve(kv));
        const double s0 = scale_[0];
        GprPointGradient r;
        r.mean = kv.dot(alpha_.col(0)) * s0;
        r.variance = std::max(0.0, signal_variance() - kv.dot(kinv_k)) * s0 * s0;
        r.dmean.resize(d);
        r.dvariance.resize(d);
        for (Eigen::Index dd = 0; dd < d; ++dd) {
            Eigen::VectorXd dk(m);
            for (Eigen::Index j = 0; j < m; ++j)
                dk[j] = -kv[j] * (xq[dd] - x_(j, dd)) * inv_l2[dd];
            r.dmean[dd] = dk.dot(alpha_.col(0)) * s0;
            r.dvariance[dd] = -2.0 * dk.dot(kinv_k) * s0 * s0;
        }
        return r;
    }

    nlohmann::json manifest() const
    {
        return nlohmann::json{{"samples", x_.rows()},
                              {"dim", x_.cols()},
                              {"outputs", alpha_.cols()},
                              {"theta", std::vector<double>(theta_.data(), theta_.data() + theta_.size())},
                              {"target_scale", std::vector<double>(scale_.data(), scale_.data() + scale_.size())},
                              {"jitter", jitter_},
                              {"log_likelihood", ll_}};
    }

    void save(const std::filesystem::path& dir, const std::string& prefix) const
    {
        write_f64(dir / (prefix + "_x.f64"), x_.data(), static_cast<std::size_t>(x_.size()));
        write_f64(dir / (prefix + "_alpha.f64"), alpha_.data(), static_cast<std::size_t>(alpha_.size()));
        write_f64(dir / (prefix + "_chol.f64"), l_.data(), static_cast<std::size_t>(l_.size()));
    }

    static GprModel load(const std::filesystem::path& dir, const std::string& prefix, const nlohmann::json& j)
    {
        GprModel g;
        const auto m = j.at("samples").get<Eigen::Index>();
        const auto d = j.at("dim").get<Eigen::Index>();
        const auto k = j.at("outputs").get<Eigen::Index>();
        auto th = j.at("theta").get<std::vector<double>>();
        auto sc = j.at("target_scale").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(th.size()) != d + 2 || static_cast<Eigen::Index>(sc.size()) != k)
            throw DataError("GPR manifest is inconsistent");
        g.theta_ = Eigen::Map<Eigen::VectorXd>(th.data(), d + 2);
        g.scale_ = Eigen::Map<Eigen::VectorXd>(sc.data(), k);
        g.jitter_ = j.at("jitter").get<double>();
        g.ll_ = j.value("log_likelihood", 0.0);
        auto xs = read_f64(dir / (prefix + "_x.f64"));
        auto as = read_f64(dir / (prefix + "_alpha.f64"));
        auto ls = read_f64(dir / (prefix + "_chol.f64"));
        if (static_cast<Eigen::Index>(xs.size()) != m * d || static_cast<Eigen::Index>(as.size()) != m * k
            || static_cast<Eigen::Index>(ls.size()) != m * m)
            throw DataError("GPR array sizes do not match the manifest");
        g.x_ = Eigen::Map<Eigen::MatrixXd>(xs.data(), m, d);
        g.alpha_ = Eigen::Map<Eigen::MatrixXd>(as.data(), m, k);
        g.l_ = Eigen::Map<Eigen::MatrixXd>(ls.data(), m, m);
        return g;
    }

private:
    void check_dim(Eigen::Index d) const
    {
        if (!fitted())
            throw DataError("GPR is not fitted");
        if (d != x_.cols())
            throw DataError("query dimension does not match the GPR inputs");
    }

    static void clamp_variance(Eigen::VectorXd& v)
    {
        for (auto& e : v) {
            if (e < -1e-10)
                warn("negative GPR variance " + std::to_string(e) + " clamped to zero");
            e = std::max(e, 0.0);
        }
    }

    static void project(Eigen::VectorXd& th)
    {
        const Eigen::Index d = th.size() - 2;
        th[0] = std::clamp(th[0], kLogSf2Min, kLogSf2Max);
        for (Eigen::Index i = 1; i <= d; ++i)
            th[i] = std::clamp(th[i], kLogLsMin, kLogLsMax);
        th[d + 1] = std::clamp(th[d + 1], kLogSn2Min, kLogSn2Max);
    }

    // Projected gradient ascent with a doubling/halving step; returns the final log-likelihood.
    static double ascend(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Eigen::VectorXd& th, int max_iters,
                         bool fixed_noise)
    {
        const Eigen::Index last = th.size() - 1;
        const double noise = th[last];
        project(th);
        if (fixed_noise)
            th[last] = noise;
        Eigen::VectorXd g;
        double ll = log_likelihood(x, y, th, &g);
        if (!std::isfinite(ll))
            return ll;
        double step = 0.5;
        for (int it = 0; it < max_iters; ++it) {
            if (fixed_noise)
                g[last] = 0.0;
            const double gmax = g.cwiseAbs().maxCoeff();
            if (!(gmax > 1e-9))
                break;
            bool moved = false;
            for (int tries = 0; tries < 30; ++tries) {
                Eigen::VectorXd cand = th + (step / gmax) * g;
                project(cand);
                if (fixed_noise)
                    cand[last] = noise;
                Eigen::VectorXd gc;
                const double lc = log_likelihood(x, y, cand, &gc);
                if (lc > ll) {
                    const double gain = lc - ll;
                    th = cand;
                    ll = lc;
                    g = gc;
                    step = std::min(step * 2.0, 2.0);
                    moved = gain > 1e-10 * (1.0 + std::abs(ll));
                    break;
                }
                step *= 0.5;
                if (step < 1e-8)
                    break;
            }
            if (!moved)
                break;
        }
        return ll;
    }

    void factorize(const Eigen::MatrixXd& ys)
    {
        Eigen::MatrixXd kk = kernel(x_, x_);
        kk.diagonal().array() += noise_variance();
        const double sf2 = signal_variance();
        for (double rel : {0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6}) {
            Eigen::MatrixXd kj = kk;
            kj.diagonal().array() += rel * sf2;
            Eigen::LLT<Eigen::MatrixXd> llt(kj);
            if (llt.info() == Eigen::Success) {
                jitter_ = rel * sf2;
                l_ = llt.matrixL();
                alpha_ = llt.solve(ys);
                // Refinement recovers accuracy lost to ill-conditioning at long length scales.
                for (int it = 0; it < 3 && alpha_.allFinite(); ++it)
                    alpha_ += llt.solve(ys - kj * alpha_);
                if (alpha_.allFinite())
                    return;
            }
        }
        throw FitError("covariance Cholesky failed after jitter escalation");
    }

    Eigen::MatrixXd x_;
    Eigen::VectorXd theta_;
    Eigen::VectorXd scale_;
    Eigen::MatrixXd alpha_;
    Eigen::MatrixXd l_;
    double jitter_ = 0.0;
    double ll_ = 0.0;
};

} // namespace hullopt
