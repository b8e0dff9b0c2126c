#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "hullopt/common.hpp"
#include "hullopt/criteria.hpp"
#include "hullopt/hull/model.hpp"
#include "hullopt/rom/database.hpp"
#include "hullopt/rom/gpr.hpp"
#include "hullopt/rom/pod.hpp"

namespace hullopt {

struct SurrogateFitOptions {
    RankPolicy policy = RankPolicy::energy();
    GprOptions gpr;
    /// Restarts and iterations used when a previous surrogate supplies warm starts.
    int warm_restarts = 1;
    int warm_iters = 60;
};

/// Per-parameter min-max map onto [0, 1]; single-valued parameters map to 0.
struct Normalizer {
    Configuration lb, ub;

    Normalizer() = default;
    explicit Normalizer(const ParameterSpace& s) : lb(s.lower_bounds()), ub(s.upper_bounds()) {}

    std::size_t dim() const { return lb.size(); }

    Eigen::MatrixXd apply(const std::vector<Configuration>& xs) const
    {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(lb.size()));
        for (std::size_t r = 0; r < xs.size(); ++r) {
            if (xs[r].size() != lb.size())
                throw DataError("configuration size does not match the surrogate inputs");
            for (std::size_t i = 0; i < lb.size(); ++i)
                out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = scale(i, xs[r][i]);
        }
        return out;
    }

    double scale(std::size_t i, double v) const
    {
        const double w = ub[i] - lb[i];
        return w > 0.0 ? (v - lb[i]) / w : 0.0;
    }
    double width(std::size_t i) const { return ub[i] - lb[i]; }
};

/// POD bases and vector-valued GPRs per (load, stress component), plus one deflection GPR per load.
struct SurrogateModel {
    Normalizer norm;
    std::array<std::array<PodBasis, kNumComponents>, kNumLoads> pods;
    std::array<std::array<GprModel, kNumComponents>, kNumLoads> gprs;
    std::array<GprModel, kNumLoads> deflection;
    RankPolicy policy;
    int monitored_node = 0;
    std::vector<Configuration> training;

    bool active(std::size_t l, std::size_t c) const { return !pods[l][c].degenerate; }

    int max_rank() const
    {
        int r = 0;
        for (std::size_t l = 0; l < kNumLoads; ++l)
            for (std::size_t c = 0; c < kNumComponents; ++c)
                if (active(l, c))
                    r = std::max(r, pods[l][c].rank);
        return r;
    }
};

inline std::string regressor_name(std::size_t l, std::size_t c)
{
    return std::string(load_name(kLoadKinds[l])) + "_" + std::string(component_name(c));
}

/// Largest energy-policy rank over the active components of a database.
inline int energy_rank_of(const SnapshotDatabase& db, double tau)
{
    int r = 1;
    const auto n = static_cast<Eigen::Index>(db[0].snapshot->element_count());
    const auto m = static_cast<Eigen::Index>(db.size());
    for (std::size_t l = 0; l < kNumLoads; ++l)
        for (std::size_t c = 0; c < kNumComponents; ++c) {
            Eigen::MatrixXd s(n, m);
            for (Eigen::Index j = 0; j < m; ++j)
                s.col(j) = db[static_cast<std::size_t>(j)].snapshot->loads[l].stress[c];
            if (s.cwiseAbs().maxCoeff() == 0.0)
                continue;
            r = std::max(r, pod_fit(s, RankPolicy::energy(tau)).rank);
        }
    return r;
}

/// Fits the 12 field regressors and the deflection regressors on the database.
/// `warm` (same input dimension) provides hyperparameter warm starts.
inline SurrogateModel surrogate_fit(const SnapshotDatabase& db, const ParameterSpace& space, int monitored_node,
                                    const SurrogateFitOptions& opt, const SurrogateModel* warm = nullptr)
{
    if (db.size() < 2)
        throw FitError("surrogate fit needs at least two database entries");
    SurrogateModel sm;
    sm.norm = Normalizer(space);
    sm.policy = opt.policy;
    sm.monitored_node = monitored_node;
    sm.training = db.configs();
    const Eigen::MatrixXd x = sm.norm.apply(sm.training);
    const auto m = static_cast<Eigen::Index>(db.size());
    const auto n = static_cast<Eigen::Index>(db[0].snapshot->element_count());
    const bool use_warm = warm && static_cast<Eigen::Index>(warm->norm.dim()) == x.cols();

    auto gpr_options = [&](std::size_t task, const GprModel* prev) {
        GprOptions g = opt.gpr;
        g.seed = derive_seed(opt.gpr.seed, task);
        if (use_warm && prev && prev->fitted()) {
            g.warm_start = prev->theta();
            g.restarts = opt.warm_restarts;
            g.max_iters = opt.warm_iters;
        }
        return g;
    };

    parallel_for(kNumLoads * kNumComponents + kNumLoads, [&](std::size_t task) {
        if (task >= kNumLoads * kNumComponents) {
            const std::size_t l = task - kNumLoads * kNumComponents;
            Eigen::MatrixXd y(m, 1);
            for (Eigen::Index j = 0; j < m; ++j) {
                const auto& u = db[static_cast<std::size_t>(j)].snapshot->loads[l].displacement;
                if (2 * monitored_node + 1 >= u.size())
                    throw LookupError("monitored node not in snapshot displacements");
                y(j, 0) = u[2 * monitored_node + 1] * 1000.0;
            }
            const GprModel* prev = use_warm ? &warm->deflection[l] : nullptr;
            try {
                sm.deflection[l] = GprModel::fit(x, y, gpr_options(task, prev));
            } catch (const FitError& e) {
                throw FitError(std::string("deflection ") + std::string(load_name(kLoadKinds[l])) + ": " + e.what());
            }
            return;
        }
        const std::size_t l = task / kNumComponents, c = task % kNumComponents;
        Eigen::MatrixXd s(n, m);
        for (Eigen::Index j = 0; j < m; ++j)
            s.col(j) = db[static_cast<std::size_t>(j)].snapshot->loads[l].stress[c];
        if (s.cwiseAbs().maxCoeff() == 0.0) {
            sm.pods[l][c] = PodBasis::zero(n, m);
            return;
        }
        try {
            sm.pods[l][c] = pod_fit(s, opt.policy);
            const Eigen::MatrixXd coeffs = (sm.pods[l][c].basis.transpose() * s).transpose(); // m x r
            const GprModel* prev = use_warm && warm->active(l, c) ? &warm->gprs[l][c] : nullptr;
            sm.gprs[l][c] = GprModel::fit(x, coeffs, gpr_options(task, prev));
        } catch (const FitError& e) {
            throw FitError("regressor " + regressor_name(l, c) + ": " + e.what());
        }
    });
    return sm;
}

/// Batch QoI predictions for one surrogate bound to a model, space and penalty set.
class SurrogateEvaluator {
public:
    SurrogateEvaluator(const SurrogateModel& sm, const HullModel& model, const ParameterSpace& space,
                       const PenaltyConfig& pen, std::size_t chunk = 128)
        : sm_(&sm), space_(&space), pen_(pen), owner_(model.element_parameters(space)),
          fixed_t_(model.element_count()), eval_(model.elements, model.material, pen.yield),
          zeros_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.element_count()))), chunk_(chunk)
    {
        if (sm.norm.dim() != space.size())
            throw DataError("surrogate inputs do not match the parameter space");
        for (std::size_t e = 0; e < model.element_count(); ++e)
            fixed_t_[e] = model.elements[e].fixed_thickness;
    }

    const SurrogateModel& surrogate() const noexcept { return *sm_; }
    const ParameterSpace& space() const noexcept { return *space_; }
    const PenaltyConfig& penalty() const noexcept { return pen_; }
    const FailureEvaluator& failure_evaluator() const noexcept { return eval_; }

    std::vector<double> element_thickness(const Configuration& x) const
    {
        std::vector<double> t(fixed_t_);
        for (std::size_t e = 0; e < t.size(); ++e)
            if (owner_[e] >= 0)
                t[e] = x[static_cast<std::size_t>(owner_[e])];
        return t;
    }

    std::vector<QoiVector> qois(const std::vector<Configuration>& xs) const
    {
        std::vector<QoiVector> out;
        out.reserve(xs.size());
        for_each_chunk(xs, [&](const Configuration& x, const FailureState& fs, double defl) {
            out.push_back(assemble_qois(count_flags(fs.yielded), count_flags(fs.buckled), defl, *space_, x, pen_));
        });
        return out;
    }

    QoiVector qoi(const Configuration& x) const { return qois({x}).front(); }

    double penalized(const Configuration& x) const { return penalized_mass(qoi(x), pen_); }

    std::vector<double> penalized(const std::vector<Configuration>& xs) const
    {
        std::vector<double> f;
        f.reserve(xs.size());
        for (const auto& q : qois(xs))
            f.push_back(penalized_mass(q, pen_));
        return f;
    }

    FailureState failures(const Configuration& x) const
    {
        FailureState out;
        for_each_chunk({x}, [&](const Configuration&, const FailureState& fs, double) { out = fs; });
        return out;
    }

    /// Reconstructed stress fields (no displacements).
    StressSnapshot fields(const Configuration& x) const
    {
        StressSnapshot s;
        s.config = x;
        const Eigen::MatrixXd xn = sm_->norm.apply({x});
        for (std::size_t l = 0; l < kNumLoads; ++l)
            for (std::size_t c = 0; c < kNumComponents; ++c) {
                if (!sm_->active(l, c)) {
                    s.loads[l].stress[c] = zeros_;
                    continue;
                }
                const Eigen::MatrixXd coef = sm_->gprs[l][c].predict_mean(xn);
                s.loads[l].stress[c] = sm_->pods[l][c].basis * coef.transpose();
            }
        return s;
    }

    double deflection(const Configuration& x) const
    {
        const Eigen::MatrixXd xn = sm_->norm.apply({x});
        double d = 0.0;
        for (std::size_t l = 0; l < kNumLoads; ++l)
            d = std::max(d, std::abs(sm_->deflection[l].predict_mean(xn)(0, 0)));
        return d;
    }

private:
    template <class Fn>
    void for_each_chunk(const std::vector<Configuration>& xs, Fn&& fn) const
    {
        for (std::size_t start = 0; start < xs.size(); start += chunk_) {
            const std::size_t end = std::min(xs.size(), start + chunk_);
            const std::vector<Configuration> part(xs.begin() + static_cast<std::ptrdiff_t>(start),
                                                  xs.begin() + static_cast<std::ptrdiff_t>(end));
            for (const auto& x : part)
                if (x.size() != space_->size())
                    throw DataError("configuration size does not match the parameter space");
            const Eigen::MatrixXd xn = sm_->norm.apply(part);
            std::array<std::array<Eigen::MatrixXd, kNumComponents>, kNumLoads> f;
            for (std::size_t l = 0; l < kNumLoads; ++l)
                for (std::size_t c = 0; c < kNumComponents; ++c)
                    if (sm_->active(l, c))
                        f[l][c].noalias() = sm_->pods[l][c].basis * sm_->gprs[l][c].predict_mean(xn).transpose();
            std::array<Eigen::MatrixXd, kNumLoads> defl;
            for (std::size_t l = 0; l < kNumLoads; ++l)
                defl[l] = sm_->deflection[l].predict_mean(xn);
            for (std::size_t j = 0; j < part.size(); ++j) {
                std::array<std::array<const double*, kNumComponents>, kNumLoads> ptr{};
                for (std::size_t l = 0; l < kNumLoads; ++l)
                    for (std::size_t c = 0; c < kNumComponents; ++c)
                        ptr[l][c] = sm_->active(l, c) ? f[l][c].col(static_cast<Eigen::Index>(j)).data() : zeros_.data();
                double d = 0.0;
                for (std::size_t l = 0; l < kNumLoads; ++l)
                    d = std::max(d, std::abs(defl[l](static_cast<Eigen::Index>(j), 0)));
                fn(part[j], eval_.evaluate(ptr, element_thickness(part[j])), d);
            }
        }
    }

    const SurrogateModel* sm_;
    const ParameterSpace* space_;
    PenaltyConfig pen_;
    std::vector<int> owner_;
    std::vector<double> fixed_t_;
    FailureEvaluator eval_;
    Eigen::VectorXd zeros_;
    std::size_t chunk_;
};

inline nlohmann::json policy_to_json(const RankPolicy& p)
{
    return nlohmann::json{{"kind", p.kind == RankPolicy::Kind::Energy ? "energy" : "fixed"},
                          {"rank", p.rank},
                          {"tau", p.tau}};
}

inline RankPolicy policy_from_json(const nlohmann::json& j)
{
    RankPolicy p;
    p.kind = j.at("kind").get<std::string>() == "energy" ? RankPolicy::Kind::Energy : RankPolicy::Kind::Fixed;
    p.rank = j.at("rank").get<int>();
    p.tau = j.at("tau").get<double>();
    return p;
}

/// Archive: manifest.json plus raw little-endian f64 arrays for bases and GPR solves.
inline void save_surrogate(const std::filesystem::path& dir, const SurrogateModel& sm)
{
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["format"] = "hullopt-surrogate";
    j["version"] = 1;
    j["normalization"] = {{"lb", sm.norm.lb}, {"ub", sm.norm.ub}};
    j["rank_policy"] = policy_to_json(sm.policy);
    j["monitored_node"] = sm.monitored_node;
    j["training"] = sm.training;
    j["regressors"] = nlohmann::json::array();
    for (std::size_t l = 0; l < kNumLoads; ++l)
        for (std::size_t c = 0; c < kNumComponents; ++c) {
            const auto& p = sm.pods[l][c];
            const auto name = regressor_name(l, c);
            nlohmann::json r{{"name", name},
                             {"degenerate", p.degenerate},
                             {"rank", p.rank},
                             {"rows", p.basis.rows()},
                             {"singular_values",
                              std::vector<double>(p.singular_values.data(),
                                                  p.singular_values.data() + p.singular_values.size())}};
            if (!p.degenerate) {
                write_f64(dir / (name + "_basis.f64"), p.basis.data(), static_cast<std::size_t>(p.basis.size()));
                sm.gprs[l][c].save(dir, name);
                r["gpr"] = sm.gprs[l][c].manifest();
            }
            j["regressors"].push_back(r);
        }
    j["deflection"] = nlohmann::json::array();
    for (std::size_t l = 0; l < kNumLoads; ++l) {
        const auto name = std::string("deflection_") + std::string(load_name(kLoadKinds[l]));
        sm.deflection[l].save(dir, name);
        j["deflection"].push_back({{"name", name}, {"gpr", sm.deflection[l].manifest()}});
    }
    std::ofstream(dir / "manifest.json") << j.dump(1) << '\n';
}

inline SurrogateModel load_surrogate(const std::filesystem::path& dir)
{
    std::ifstream in(dir / "manifest.json");
    if (!in)
        throw DataError("missing surrogate manifest in " + dir.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("corrupt surrogate manifest: ") + e.what());
    }
    if (j.value("format", "") != "hullopt-surrogate" || j.value("version", 0) != 1)
        throw DataError("unsupported surrogate archive version");
    SurrogateModel sm;
    sm.norm.lb = j.at("normalization").at("lb").get<Configuration>();
    sm.norm.ub = j.at("normalization").at("ub").get<Configuration>();
    sm.policy = policy_from_json(j.at("rank_policy"));
    sm.monitored_node = j.at("monitored_node").get<int>();
    sm.training = j.at("training").get<std::vector<Configuration>>();
    const auto& regs = j.at("regressors");
    if (regs.size() != kNumLoads * kNumComponents)
        throw DataError("surrogate archive has the wrong regressor count");
    for (std::size_t l = 0; l < kNumLoads; ++l)
        for (std::size_t c = 0; c < kNumComponents; ++c) {
            const auto& r = regs[l * kNumComponents + c];
            auto sv = r.at("singular_values").get<std::vector<double>>();
            const auto rows = r.at("rows").get<Eigen::Index>();
            PodBasis p;
            if (r.at("degenerate").get<bool>()) {
                p = PodBasis::zero(rows, static_cast<Eigen::Index>(sv.size()));
            } else {
                p.rank = r.at("rank").get<int>();
                auto b = read_f64(dir / (regressor_name(l, c) + "_basis.f64"));
                if (static_cast<Eigen::Index>(b.size()) != rows * p.rank)
                    throw DataError("POD basis size does not match the manifest");
                p.basis = Eigen::Map<Eigen::MatrixXd>(b.data(), rows, p.rank);
                sm.gprs[l][c] = GprModel::load(dir, regressor_name(l, c), r.at("gpr"));
            }
            p.singular_values = Eigen::Map<Eigen::VectorXd>(sv.data(), static_cast<Eigen::Index>(sv.size()));
            sm.pods[l][c] = std::move(p);
        }
    const auto& defl = j.at("deflection");
    for (std::size_t l = 0; l < kNumLoads; ++l)
        sm.deflection[l] = GprModel::load(dir, defl[l].at("name").get<std::string>(), defl[l].at("gpr"));
    return sm;
}

} // namespace hullopt
