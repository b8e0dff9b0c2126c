#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "hullopt/common.hpp"
#include "hullopt/criteria.hpp"
#include "hullopt/hull/model.hpp"
#include "json.hpp"

namespace hullopt {

struct MooSettings {
    std::size_t pop_size = 2000;
    int generations = 10;
    std::size_t infill = 9;
    int max_rounds = 5;
    /// A round whose best infill criterion falls below this stops the MOO phase.
    double delta_tol = 0.01;
};

struct BoSettings {
    int max_iters = 200;
    double time_limit = 300.0;
    std::size_t n_candidates = 3;
    int max_rounds = 5;
    double beta = 2.0;
    double epsilon = 0.1;
    int switch_patience = 100;
};

struct PdsSettings {
    int max_sweeps = 100;
    double time_limit = 0.0;
    int max_rounds = 5;
    bool from_base = false;
};

struct ReparamSettings {
    /// Target parameter counts, one per refinement round.
    std::vector<std::size_t> schedule;
    int max_clusters = 2;
    std::size_t resample_count = 20;
    int resample_trials = 20;
    double ilp_time_limit = 0.0;
};

struct StopSettings {
    std::size_t max_hf = 1000;
    /// Fraction of d . x_LB a refinement stage must gain to allow the next one.
    double improvement_tol = 0.005;
    int max_reparam_rounds = -1; // -1: schedule length
};

struct SurrogateSettings {
    double tau = 0.01;
    int restarts = 5;
    int iters = 200;
    int warm_restarts = 1;
    int warm_iters = 60;
};

struct PipelineConfig {
    /// Model spec file, relative to the config file's directory (or the run directory once copied).
    std::string model_path;
    /// Inline model spec; used when model_path is empty.
    nlohmann::json model;
    /// Penalty weights and thresholds; m_fixed and vcg_fixed come from the model.
    PenaltyConfig penalty;
    std::size_t initial_samples = 20;
    MooSettings moo;
    BoSettings bo;
    PdsSettings pds;
    ReparamSettings reparam;
    StopSettings stop;
    SurrogateSettings surrogate;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (model_path.empty() && model.is_null())
            throw ConfigError("config needs a model spec ('model' or 'model_path')");
        if (initial_samples > 100000)
            throw ConfigError("initial sample count is unreasonably large");
        if (moo.pop_size < 2 || moo.generations < 0 || moo.max_rounds < 0 || !(moo.delta_tol >= 0.0))
            throw ConfigError("invalid MOO settings");
        if (bo.max_iters < 0 || bo.max_rounds < 0 || bo.time_limit < 0.0 || bo.switch_patience < 1)
            throw ConfigError("invalid BO settings");
        if (pds.max_sweeps < 1 || pds.max_rounds < 0 || pds.time_limit < 0.0)
            throw ConfigError("invalid PDS settings");
        if (reparam.max_clusters < 2 || reparam.resample_trials < 1 || reparam.ilp_time_limit < 0.0)
            throw ConfigError("invalid reparameterization settings");
        for (std::size_t k = 1; k < reparam.schedule.size(); ++k)
            if (reparam.schedule[k] <= reparam.schedule[k - 1])
                throw ConfigError("parameter schedule must be strictly increasing");
        if (stop.max_hf < 1 || !(stop.improvement_tol >= 0.0))
            throw ConfigError("invalid stopping rules");
        if (!(surrogate.tau > 0.0 && surrogate.tau < 1.0) || surrogate.restarts < 1 || surrogate.iters < 0)
            throw ConfigError("invalid surrogate settings");
    }
};

inline PenaltyConfig default_penalty()
{
    PenaltyConfig p;
    p.vcg_crit = std::numeric_limits<double>::infinity();
    return p;
}

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j)
{
    PipelineConfig c;
    c.penalty = default_penalty();
    try {
        if (j.contains("model_path"))
            c.model_path = j["model_path"].get<std::string>();
        if (j.contains("model"))
            c.model = j["model"];
        if (j.contains("penalty"))
            from_json(j["penalty"], c.penalty);
        c.seed = j.value("seed", c.seed);
        if (j.contains("sampling"))
            c.initial_samples = j["sampling"].value("initial", c.initial_samples);
        if (j.contains("moo")) {
            const auto& m = j["moo"];
            c.moo.pop_size = m.value("pop_size", c.moo.pop_size);
            c.moo.generations = m.value("generations", c.moo.generations);
            c.moo.infill = m.value("infill", c.moo.infill);
            c.moo.max_rounds = m.value("max_rounds", c.moo.max_rounds);
            c.moo.delta_tol = m.value("delta_tol", c.moo.delta_tol);
        }
        if (j.contains("bo")) {
            const auto& b = j["bo"];
            c.bo.max_iters = b.value("max_iters", c.bo.max_iters);
            c.bo.time_limit = b.value("time_limit", c.bo.time_limit);
            c.bo.n_candidates = b.value("candidates", c.bo.n_candidates);
            c.bo.max_rounds = b.value("max_rounds", c.bo.max_rounds);
            c.bo.beta = b.value("beta", c.bo.beta);
            c.bo.epsilon = b.value("epsilon", c.bo.epsilon);
            c.bo.switch_patience = b.value("switch_patience", c.bo.switch_patience);
        }
        if (j.contains("pds")) {
            const auto& p = j["pds"];
            c.pds.max_sweeps = p.value("max_sweeps", c.pds.max_sweeps);
            c.pds.time_limit = p.value("time_limit", c.pds.time_limit);
            c.pds.max_rounds = p.value("max_rounds", c.pds.max_rounds);
            const auto mode = p.value("mode", std::string("cyclic"));
            if (mode != "cyclic" && mode != "from-base")
                throw ConfigError("pds.mode must be 'cyclic' or 'from-base'");
            c.pds.from_base = mode == "from-base";
        }
        if (j.contains("reparam")) {
            const auto& r = j["reparam"];
            c.reparam.schedule = r.value("schedule", c.reparam.schedule);
            c.reparam.max_clusters = r.value("max_clusters", c.reparam.max_clusters);
            c.reparam.resample_count = r.value("resample", c.reparam.resample_count);
            c.reparam.resample_trials = r.value("resample_trials", c.reparam.resample_trials);
            c.reparam.ilp_time_limit = r.value("ilp_time_limit", c.reparam.ilp_time_limit);
        }
        if (j.contains("stop")) {
            const auto& s = j["stop"];
            c.stop.max_hf = s.value("max_hf", c.stop.max_hf);
            c.stop.improvement_tol = s.value("improvement_tol", c.stop.improvement_tol);
            c.stop.max_reparam_rounds = s.value("max_reparam_rounds", c.stop.max_reparam_rounds);
        }
        if (j.contains("surrogate")) {
            const auto& s = j["surrogate"];
            c.surrogate.tau = s.value("tau", c.surrogate.tau);
            c.surrogate.restarts = s.value("restarts", c.surrogate.restarts);
            c.surrogate.iters = s.value("iters", c.surrogate.iters);
            c.surrogate.warm_restarts = s.value("warm_restarts", c.surrogate.warm_restarts);
            c.surrogate.warm_iters = s.value("warm_iters", c.surrogate.warm_iters);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid pipeline config: ") + e.what());
    }
    c.validate();
    return c;
}

inline nlohmann::json pipeline_config_to_json(const PipelineConfig& c)
{
    nlohmann::json j;
    if (!c.model_path.empty())
        j["model_path"] = c.model_path;
    else
        j["model"] = c.model;
    nlohmann::json pen;
    to_json(pen, c.penalty);
    pen.erase("m_fixed");
    pen.erase("vcg_fixed");
    if (!std::isfinite(c.penalty.vcg_crit))
        pen.erase("vcg_crit");
    j["penalty"] = pen;
    j["seed"] = c.seed;
    j["sampling"] = {{"initial", c.initial_samples}};
    j["moo"] = {{"pop_size", c.moo.pop_size},     {"generations", c.moo.generations}, {"infill", c.moo.infill},
                {"max_rounds", c.moo.max_rounds}, {"delta_tol", c.moo.delta_tol}};
    j["bo"] = {{"max_iters", c.bo.max_iters}, {"time_limit", c.bo.time_limit}, {"candidates", c.bo.n_candidates},
               {"max_rounds", c.bo.max_rounds}, {"beta", c.bo.beta}, {"epsilon", c.bo.epsilon},
               {"switch_patience", c.bo.switch_patience}};
    j["pds"] = {{"max_sweeps", c.pds.max_sweeps},
                {"time_limit", c.pds.time_limit},
                {"max_rounds", c.pds.max_rounds},
                {"mode", c.pds.from_base ? "from-base" : "cyclic"}};
    j["reparam"] = {{"schedule", c.reparam.schedule},
                    {"max_clusters", c.reparam.max_clusters},
                    {"resample", c.reparam.resample_count},
                    {"resample_trials", c.reparam.resample_trials},
                    {"ilp_time_limit", c.reparam.ilp_time_limit}};
    j["stop"] = {{"max_hf", c.stop.max_hf},
                 {"improvement_tol", c.stop.improvement_tol},
                 {"max_reparam_rounds", c.stop.max_reparam_rounds}};
    j["surrogate"] = {{"tau", c.surrogate.tau},
                      {"restarts", c.surrogate.restarts},
                      {"iters", c.surrogate.iters},
                      {"warm_restarts", c.surrogate.warm_restarts},
                      {"warm_iters", c.surrogate.warm_iters}};
    return j;
}

inline nlohmann::json read_json_file(const std::filesystem::path& p)
{
    std::ifstream in(p);
    if (!in)
        throw ConfigError("cannot open " + p.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse " + p.string() + ": " + e.what());
    }
}

/// Model spec of a config; relative model paths resolve against `base_dir`.
inline ModelSpec resolve_model_spec(const PipelineConfig& c, const std::filesystem::path& base_dir)
{
    if (!c.model_path.empty()) {
        const std::filesystem::path p = std::filesystem::path(c.model_path).is_absolute()
            ? std::filesystem::path(c.model_path)
            : base_dir / c.model_path;
        auto j = read_json_file(p);
        return model_spec_from_json(j.contains("model") ? j["model"] : j);
    }
    return model_spec_from_json(c.model);
}

/// Penalty with the model's fixed mass and VCG filled in.
inline PenaltyConfig bind_penalty(PenaltyConfig p, const HullModel& m)
{
    p.m_fixed = m.m_fixed;
    p.vcg_fixed = m.vcg_fixed;
    return p;
}

} // namespace hullopt
