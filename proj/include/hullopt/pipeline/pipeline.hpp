#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include "hullopt/common.hpp"
#include "hullopt/criteria.hpp"
#include "hullopt/hull/fem.hpp"
#include "hullopt/hull/model.hpp"
#include "hullopt/hull/snapshot_io.hpp"
#include "hullopt/moo/ga.hpp"
#include "hullopt/moo/infill.hpp"
#include "hullopt/moo/nds.hpp"
#include "hullopt/pipeline/config.hpp"
#include "hullopt/reparam/reparam.hpp"
#include "hullopt/rom/crossval.hpp"
#include "hullopt/rom/database.hpp"
#include "hullopt/rom/surrogate.hpp"
#include "hullopt/sbo/bo.hpp"
#include "hullopt/sbo/pds.hpp"
#include "hullopt/sbo/polytope.hpp"
#include "json.hpp"

namespace hullopt {

namespace fs = std::filesystem;

inline constexpr int kRunManifestVersion = 1;

/// Cache key of a high-fidelity result. Hashes the per-patch thickness, so a lifted configuration
/// maps to the same key as its coarse original.
inline std::string hf_key(const ParameterSpace& space, const Configuration& x)
{
    const auto t = space.patch_thickness(x);
    return hex64(fnv1a(t.data(), t.size() * sizeof(double)));
}

/// `count` distinct configurations including the default one.
inline std::vector<Configuration> initial_sample(const ParameterSpace& space, const Configuration& default_config,
                                                 std::size_t count, std::uint64_t seed)
{
    if (count < 1)
        throw ConfigError("initial sample count must be at least 1");
    space.validate(default_config);
    std::mt19937_64 rng(seed);
    return sample_configurations(space, count, rng, {default_config});
}

struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<double> time_limit;
    std::optional<int> max_iters;
    std::optional<std::size_t> params_target;

    void apply(PipelineConfig& c) const
    {
        if (seed)
            c.seed = *seed;
        if (time_limit) {
            c.bo.time_limit = *time_limit;
            c.pds.time_limit = *time_limit;
        }
        if (max_iters)
            c.bo.max_iters = *max_iters;
        if (params_target)
            c.reparam.schedule = {*params_target};
        c.validate();
    }
};

/// Exclusive lock on a run directory. A lock left by a dead process is taken over.
class RunLock {
public:
    explicit RunLock(fs::path path) : path_(std::move(path))
    {
        for (int attempt = 0; attempt < 2; ++attempt) {
            const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
            if (fd >= 0) {
                const std::string pid = std::to_string(::getpid()) + "\n";
                [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
                ::close(fd);
                return;
            }
            long owner = 0;
            std::ifstream(path_) >> owner;
            if (owner > 0 && (owner == ::getpid() || ::kill(static_cast<pid_t>(owner), 0) == 0))
                break;
            std::error_code ec;
            fs::remove(path_, ec);
        }
        throw ConfigError("run directory is locked by another process (" + path_.string() + ")");
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;
    ~RunLock()
    {
        std::error_code ec;
        fs::remove(path_, ec);
    }

private:
    fs::path path_;
};

struct LedgerEntry {
    std::size_t seq = 0;
    int stage = 0;
    Phase phase = Phase::InitialSample;
    std::size_t params = 0;
    Configuration config; // in the space of its stage
    std::string key;
    QoiVector qoi;
    double f = 0.0;
    std::string time;
};

inline nlohmann::json ledger_to_json(const LedgerEntry& e)
{
    return {{"seq", e.seq},
            {"stage", e.stage},
            {"phase", phase_name(e.phase)},
            {"params", e.params},
            {"config", e.config},
            {"key", e.key},
            {"n_y", e.qoi.n_y},
            {"n_b", e.qoi.n_b},
            {"deflection", e.qoi.deflection},
            {"mass", e.qoi.mass},
            {"vcg", e.qoi.vcg},
            {"f", e.f},
            {"time", e.time}};
}

inline LedgerEntry ledger_from_json(const nlohmann::json& j)
{
    LedgerEntry e;
    e.seq = j.at("seq").get<std::size_t>();
    e.stage = j.at("stage").get<int>();
    e.phase = phase_from_name(j.at("phase").get<std::string>());
    e.params = j.at("params").get<std::size_t>();
    e.config = j.at("config").get<Configuration>();
    e.key = j.at("key").get<std::string>();
    e.qoi.n_y = j.at("n_y").get<int>();
    e.qoi.n_b = j.at("n_b").get<int>();
    e.qoi.deflection = j.at("deflection").get<double>();
    e.qoi.mass = j.at("mass").get<double>();
    e.qoi.vcg = j.at("vcg").get<double>();
    e.f = j.at("f").get<double>();
    e.time = j.value("time", "");
    return e;
}

/// Incumbent summary of one parameterization stage.
struct StageRecord {
    int stage = 0;
    std::size_t params = 0;
    std::size_t hf_evaluations = 0;
    Configuration config;
    QoiVector qoi;
    double f = 0.0;
    double dx = 0.0;    // controllable mass d . x
    double dx_lb = 0.0; // d . x_LB
    double buckling_mass = 0.0;
    double penalty = 0.0;
    double m_gap = 0.0;
};

inline nlohmann::json stage_to_json(const StageRecord& s)
{
    return {{"stage", s.stage},     {"params", s.params}, {"hf_evaluations", s.hf_evaluations},
            {"config", s.config},   {"n_y", s.qoi.n_y},   {"n_b", s.qoi.n_b},
            {"deflection", s.qoi.deflection}, {"mass", s.qoi.mass}, {"vcg", s.qoi.vcg},
            {"f", s.f},             {"dx", s.dx},         {"dx_lb", s.dx_lb},
            {"buckling_mass", s.buckling_mass}, {"penalty", s.penalty}, {"m_gap", s.m_gap}};
}

inline StageRecord stage_from_json(const nlohmann::json& j)
{
    StageRecord s;
    s.stage = j.at("stage").get<int>();
    s.params = j.at("params").get<std::size_t>();
    s.hf_evaluations = j.at("hf_evaluations").get<std::size_t>();
    s.config = j.at("config").get<Configuration>();
    s.qoi.n_y = j.at("n_y").get<int>();
    s.qoi.n_b = j.at("n_b").get<int>();
    s.qoi.deflection = j.at("deflection").get<double>();
    s.qoi.mass = j.at("mass").get<double>();
    s.qoi.vcg = j.at("vcg").get<double>();
    s.f = j.at("f").get<double>();
    s.dx = j.at("dx").get<double>();
    s.dx_lb = j.at("dx_lb").get<double>();
    s.buckling_mass = j.at("buckling_mass").get<double>();
    s.penalty = j.at("penalty").get<double>();
    s.m_gap = j.at("m_gap").get<double>();
    return s;
}

struct PendingConfig {
    Configuration config;
    Phase phase = Phase::InitialSample;
};

struct MooRoundResult {
    std::size_t front_size = 0;
    std::size_t candidates = 0;
    std::vector<double> deltas;
    bool converged = false;
};

struct SolveResult {
    std::size_t solved = 0;
    std::size_t cached = 0;
    std::size_t failed = 0;
    std::size_t skipped = 0;
};

/// Formats a double so that it round-trips.
inline std::string fmt_double(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string join_config(const Configuration& x)
{
    std::string s;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (i)
            s += ' ';
        s += fmt_double(x[i]);
    }
    return s;
}

/// Normalized singular values per regressor; retained modes below 0.01 are flagged.
inline std::string singular_values_csv(const SurrogateModel* sm = nullptr)
{
    std::ostringstream os;
    os << "load,component,mode,sigma,normalized,retained,flagged\n";
    if (!sm)
        return os.str();
    for (std::size_t l = 0; l < kNumLoads; ++l)
        for (std::size_t c = 0; c < kNumComponents; ++c) {
            if (!sm->active(l, c))
                continue;
            const auto& p = sm->pods[l][c];
            const double s0 = p.singular_values.size() ? p.singular_values[0] : 0.0;
            for (Eigen::Index k = 0; k < p.singular_values.size(); ++k) {
                const double nv = s0 > 0.0 ? p.singular_values[k] / s0 : 0.0;
                const bool kept = k < p.rank;
                os << load_name(kLoadKinds[l]) << ',' << component_name(c) << ',' << k + 1 << ','
                   << fmt_double(p.singular_values[k]) << ',' << fmt_double(nv) << ',' << (kept ? 1 : 0) << ','
                   << (kept && nv < 0.01 ? 1 : 0) << '\n';
            }
        }
    return os.str();
}

inline std::string singular_values_csv(const SurrogateModel& sm) { return singular_values_csv(&sm); }

inline void write_text_atomic(const fs::path& path, const std::string& text)
{
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot write " + tmp.string());
        out << text;
        if (!out)
            throw Error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

/// Persistent optimization run in a directory: config copy, db/ (HF snapshot cache), ledger.jsonl,
/// manifest.json, surrogates/, reports/ and logs/.
class Pipeline {
public:
    /// Creates a run directory from a config file. Relative model paths resolve against the config's
    /// directory; the model spec is copied next to the config.
    static void init(const fs::path& run_dir, const fs::path& config_file, const ConfigOverrides& ov = {})
    {
        auto cfg = pipeline_config_from_json(read_json_file(config_file));
        ov.apply(cfg);
        init(run_dir, cfg, config_file.parent_path());
    }

    static void init(const fs::path& run_dir, PipelineConfig cfg, const fs::path& base_dir)
    {
        cfg.validate();
        if (fs::exists(run_dir / "manifest.json"))
            throw ConfigError("run directory already initialized: " + run_dir.string());
        const ModelSpec spec = resolve_model_spec(cfg, base_dir);
        const HullModel model = build_demo_model(spec);
        bind_penalty(cfg.penalty, model).validate();
        fs::create_directories(run_dir);
        for (const char* sub : {"db", "surrogates", "reports", "logs"})
            fs::create_directories(run_dir / sub);
        cfg.model_path.clear();
        cfg.model = model_spec_to_json(spec);
        write_text_atomic(run_dir / "config.json", pipeline_config_to_json(cfg).dump(2) + "\n");
        nlohmann::json m;
        m["version"] = kRunManifestVersion;
        m["space"] = space_to_json(model.space);
        write_text_atomic(run_dir / "manifest.json", m.dump(1) + "\n");
        std::ofstream(run_dir / "ledger.jsonl", std::ios::trunc);
    }

    /// Opens and locks an initialized run directory.
    explicit Pipeline(const fs::path& run_dir, const ConfigOverrides& ov = {})
        : dir_(run_dir), start_(std::chrono::steady_clock::now())
    {
        if (!fs::exists(dir_ / "manifest.json"))
            throw ConfigError("not a run directory (no manifest.json): " + dir_.string());
        const auto man = read_json_file(dir_ / "manifest.json");
        if (man.value("version", -1) != kRunManifestVersion)
            throw ConfigError("unsupported run manifest version in " + dir_.string());
        lock_ = std::make_unique<RunLock>(dir_ / "lock");
        cfg_ = pipeline_config_from_json(read_json_file(dir_ / "config.json"));
        ov.apply(cfg_);
        model_ = std::make_unique<HullModel>(build_demo_model(resolve_model_spec(cfg_, dir_)));
        pen_ = bind_penalty(cfg_.penalty, *model_);
        pen_.validate();
        solver_ = std::make_unique<HifiSolver>(*model_);
        load_state(man);
    }

    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;

    // State access.
    const PipelineConfig& config() const noexcept { return cfg_; }
    const HullModel& model() const noexcept { return *model_; }
    const PenaltyConfig& penalty() const noexcept { return pen_; }
    const ParameterSpace& space() const noexcept { return space_; }
    const SnapshotDatabase& db() const noexcept { return db_; }
    const std::vector<LedgerEntry>& ledger() const noexcept { return ledger_; }
    const std::vector<PendingConfig>& pending() const noexcept { return pending_; }
    const std::vector<StageRecord>& closed_stages() const noexcept { return stages_; }
    const std::optional<SurrogateModel>& surrogate() const noexcept { return sm_; }
    int stage() const noexcept { return stage_; }
    int reparam_rounds() const noexcept { return reparam_rounds_; }
    const fs::path& dir() const noexcept { return dir_; }
    bool finished() const noexcept { return cursor_.phase == "done"; }

    /// Test hook called once per new HF result, before it is recorded.
    void set_probe(std::function<void(const std::string&)> p) { probe_ = std::move(p); }

    bool surrogate_stale() const
    {
        return !sm_ || sm_db_size_ != db_.size() || sm_->norm.dim() != space_.size();
    }

    /// Lowest penalized HF objective among VCG-feasible entries.
    std::optional<std::size_t> incumbent_index() const
    {
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < db_.size(); ++i)
            if (vcg_feasible(db_[i].qoi, pen_) && (!best || db_[i].f < db_[*best].f))
                best = i;
        return best;
    }

    std::optional<StageRecord> current_stage_record() const
    {
        const auto inc = incumbent_index();
        if (!inc)
            return std::nullopt;
        const auto& e = db_[*inc];
        StageRecord s;
        s.stage = stage_;
        s.params = space_.size();
        s.hf_evaluations = db_.size();
        s.config = e.config;
        s.qoi = e.qoi;
        s.f = e.f;
        s.dx = space_.dot_density(e.config);
        s.dx_lb = space_.dot_density(space_.lower_bounds());
        s.buckling_mass = pen_.m_bar * e.qoi.n_b;
        s.penalty = penalty_term(e.qoi, pen_);
        s.m_gap = mass_gap(e.config, e.qoi, pen_, space_, space_.lower_bounds());
        return s;
    }

    // Stages. Each persists the run state before returning.

    /// Queues the initial random sample (default configuration included).
    std::size_t sample()
    {
        if (!db_.empty() || !pending_.empty())
            throw DataError("initial sample already taken");
        const auto xs = initial_sample(space_, model_->default_config, cfg_.initial_samples + 1, next_seed());
        for (const auto& x : xs)
            pending_.push_back({x, Phase::InitialSample});
        log("sample: " + std::to_string(xs.size()) + " configurations queued");
        save_manifest();
        return xs.size();
    }

    /// HF-solves every pending configuration (cached results are reused) and records the successes.
    SolveResult solve()
    {
        SolveResult r;
        std::vector<PendingConfig> todo;
        std::set<Configuration> queued;
        for (const auto& p : pending_) {
            if (db_.contains(p.config) || !queued.insert(p.config).second) {
                ++r.skipped;
                continue;
            }
            todo.push_back(p);
        }
        const std::size_t budget = cfg_.stop.max_hf > db_.size() ? cfg_.stop.max_hf - db_.size() : 0;
        if (todo.size() > budget) {
            log("solve: HF budget allows " + std::to_string(budget) + " of " + std::to_string(todo.size())
                + " pending configurations");
            r.skipped += todo.size() - budget;
            todo.resize(budget);
        }

        std::vector<std::shared_ptr<const StressSnapshot>> snaps(todo.size());
        std::vector<std::string> errors(todo.size());
        std::vector<char> from_cache(todo.size(), 0);
        parallel_for(todo.size(), [&](std::size_t i) {
            const auto& x = todo[i].config;
            const fs::path d = dir_ / "db" / hf_key(space_, x);
            try {
                if (fs::exists(d / "manifest.json")) {
                    try {
                        auto s = load_snapshot(d);
                        s.config = x;
                        snaps[i] = std::make_shared<const StressSnapshot>(std::move(s));
                        from_cache[i] = 1;
                        return;
                    } catch (const DataError&) {
                        fs::remove_all(d);
                    }
                }
                auto s = solver_->solve(space_, x);
                const fs::path tmp = d.string() + ".tmp" + std::to_string(i);
                fs::remove_all(tmp);
                save_snapshot(tmp, s);
                fs::rename(tmp, d);
                snaps[i] = std::make_shared<const StressSnapshot>(std::move(s));
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        });

        FailureEvaluator eval(model_->elements, model_->material, pen_.yield);
        for (std::size_t i = 0; i < todo.size(); ++i) {
            if (!snaps[i]) {
                ++r.failed;
                log("solve: HF solve failed for [" + join_config(todo[i].config) + "]: " + errors[i]);
                warn("HF solve failed: " + errors[i]);
                continue;
            }
            if (probe_)
                probe_("hf");
            DbEntry e;
            e.config = todo[i].config;
            e.snapshot = snaps[i];
            e.qoi = compute_qois(*snaps[i], *model_, space_, eval, pen_, model_->monitored_node);
            e.f = penalized_mass(e.qoi, pen_);
            e.phase = todo[i].phase;
            record(e);
            ++(from_cache[i] ? r.cached : r.solved);
        }
        pending_.clear();
        save_manifest();
        log("solve: " + std::to_string(r.solved) + " solved, " + std::to_string(r.cached) + " cached, "
            + std::to_string(r.failed) + " failed; db size " + std::to_string(db_.size()));
        return r;
    }

    /// Refits the field surrogates on the whole database.
    void fit()
    {
        if (db_.size() < 2)
            throw DataError("surrogate fit needs at least two HF results");
        SurrogateFitOptions o;
        o.gpr.restarts = cfg_.surrogate.restarts;
        o.gpr.max_iters = cfg_.surrogate.iters;
        o.gpr.seed = next_seed();
        o.warm_restarts = cfg_.surrogate.warm_restarts;
        o.warm_iters = cfg_.surrogate.warm_iters;
        if (rank_bonus_ > 0) {
            const int r = energy_rank_of(db_, cfg_.surrogate.tau) + rank_bonus_;
            o.policy = RankPolicy::fixed(std::min(r, static_cast<int>(db_.size())));
        } else {
            o.policy = RankPolicy::energy(cfg_.surrogate.tau);
        }
        const SurrogateModel* warm = sm_ && sm_->norm.dim() == space_.size() ? &*sm_ : nullptr;
        auto sm = surrogate_fit(db_, space_, model_->monitored_node, o, warm);
        const fs::path target = dir_ / "surrogates" / "current";
        const fs::path tmp = dir_ / "surrogates" / "current.tmp";
        fs::remove_all(tmp);
        save_surrogate(tmp, sm);
        fs::remove_all(target);
        fs::rename(tmp, target);
        sm_ = std::move(sm);
        sm_db_size_ = db_.size();
        save_manifest();
        log("fit: " + std::to_string(db_.size()) + " samples, max rank " + std::to_string(sm_->max_rank()));
    }

    /// One GA run on the surrogate objectives followed by infill selection of Pareto candidates.
    MooRoundResult moo_round()
    {
        require_surrogate();
        SurrogateEvaluator ev(*sm_, *model_, space_, pen_);
        BatchObjective obj = [&ev](const std::vector<Configuration>& xs) {
            const auto q = ev.qois(xs);
            Eigen::MatrixXd m(static_cast<Eigen::Index>(xs.size()), kNumObjectives);
            for (std::size_t k = 0; k < q.size(); ++k)
                m.row(static_cast<Eigen::Index>(k)) = objective_row(q[k]);
            return m;
        };
        GaOptions g;
        g.pop_size = cfg_.moo.pop_size;
        g.generations = cfg_.moo.generations;
        g.seed = next_seed();
        const auto pop = evolve(obj, space_, g, hf_front(g.pop_size / 2));
        const auto front = pop.front();

        MooRoundResult r;
        r.front_size = front.size();
        write_front(pop, front);
        std::vector<Configuration> cand;
        std::set<Configuration> seen;
        for (auto i : front)
            if (!db_.contains(pop.individuals[i]) && seen.insert(pop.individuals[i]).second)
                cand.push_back(pop.individuals[i]);
        r.candidates = cand.size();
        if (cand.empty()) {
            r.converged = true;
        } else {
            const auto sel = infill_select(cand, db_.configs(), *sm_, std::min(cfg_.moo.infill, cand.size()));
            r.deltas = sel.deltas;
            if (sel.deltas.empty() || sel.deltas.front() < cfg_.moo.delta_tol)
                r.converged = true;
            else
                for (const auto& x : sel.configs)
                    pending_.push_back({x, Phase::MooInfill});
        }
        save_manifest();
        log("moo: front " + std::to_string(r.front_size) + ", " + std::to_string(r.candidates)
            + " unvalidated candidates, max delta " + (r.deltas.empty() ? "-" : fmt_double(r.deltas.front())) + ", "
            + std::to_string(pending_.size()) + " queued" + (r.converged ? " (converged)" : ""));
        return r;
    }

    /// Bayesian optimization of the surrogate penalized mass; queues its best candidates.
    std::optional<BoResult> bo_round()
    {
        require_surrogate();
        SurrogateEvaluator ev(*sm_, *model_, space_, pen_);
        const auto xs = db_.configs();
        const auto ys = ev.penalized(xs);
        BoOptions o;
        o.acq.beta = cfg_.bo.beta;
        o.acq.epsilon = cfg_.bo.epsilon;
        o.acq.switch_patience = cfg_.bo.switch_patience;
        o.max_iters = cfg_.bo.max_iters;
        o.time_limit = cfg_.bo.time_limit;
        o.n_candidates = cfg_.bo.n_candidates;
        o.seed = next_seed();
        o.rounding.seed = derive_seed(o.seed, 1);
        std::optional<BoResult> res;
        try {
            res = bo_run(space_, LinearBounds::from(space_, pen_), scalar_objective(ev), xs, ys, o);
        } catch (const DataError& e) {
            log(std::string("bo: skipped: ") + e.what());
            save_manifest();
            return std::nullopt;
        }
        for (const auto& x : res->candidates)
            if (!db_.contains(x))
                pending_.push_back({x, Phase::Bo});
        save_manifest();
        log("bo: " + std::to_string(res->trace.size() - 1) + " iterations (" + res->stop_reason + "), "
            + std::to_string(pending_.size()) + " candidates queued, surrogate best " + fmt_double(res->incumbent_f));
        return res;
    }

    /// Principal-dimensions search from the HF incumbent on the surrogate penalized mass.
    std::optional<PdsResult> pds_round()
    {
        require_surrogate();
        const auto inc = incumbent_index();
        if (!inc) {
            log("pds: skipped: no VCG-feasible incumbent");
            save_manifest();
            return std::nullopt;
        }
        next_seed();
        SurrogateEvaluator ev(*sm_, *model_, space_, pen_);
        PdsOptions o;
        o.mode = cfg_.pds.from_base ? PdsMode::FromBase : PdsMode::Cyclic;
        o.max_sweeps = cfg_.pds.max_sweeps;
        o.time_limit = cfg_.pds.time_limit;
        const auto start = db_[*inc].config;
        auto r = pds_run(space_, LinearBounds::from(space_, pen_), scalar_objective(ev), start, o);
        if (r.x != start && !db_.contains(r.x))
            pending_.push_back({r.x, Phase::Pds});
        save_manifest();
        log("pds: " + std::to_string(r.sweeps) + " sweeps, surrogate f " + fmt_double(r.f_start) + " -> "
            + fmt_double(r.f) + ", " + std::to_string(pending_.size()) + " queued");
        return r;
    }

    /// Refines the parameterization up to the next scheduled parameter count and queues new samples.
    RefinementResult reparam()
    {
        if (reparam_rounds_ >= static_cast<int>(cfg_.reparam.schedule.size()))
            throw ConfigError("parameter schedule exhausted");
        require_surrogate();
        const auto inc = incumbent_index();
        if (!inc)
            throw DataError("reparameterization needs a VCG-feasible incumbent");
        const std::size_t target = cfg_.reparam.schedule[static_cast<std::size_t>(reparam_rounds_)];
        const Configuration x_star = db_[*inc].config;
        const std::uint64_t seed = next_seed();

        SurrogateEvaluator ev(*sm_, *model_, space_, pen_);
        std::vector<std::vector<RefinementProposal>> by_section(space_.size());
        nlohmann::json proposals = nlohmann::json::array();
        for (std::size_t i = 0; i < space_.size(); ++i) {
            const auto& def = space_[i];
            const int max_n = std::min<int>({cfg_.reparam.max_clusters, static_cast<int>(def.patch_ids.size()),
                                             static_cast<int>(def.domain.size())});
            if (max_n < 2)
                continue;
            const auto resp = collect_responses(ev, *model_, &db_, x_star, i);
            const auto ctx = vcg_context(space_, pen_, x_star, i);
            for (int n = 2; n <= max_n; ++n) {
                auto p = propose_refinement(resp, pen_, n, ctx, x_star[i], cfg_.reparam.ilp_time_limit);
                proposals.push_back(proposal_to_json(p, space_));
                by_section[i].push_back(std::move(p));
            }
        }
        const auto chosen = select_refinements(by_section, space_.size(), target);

        if (auto rec = current_stage_record())
            stages_.push_back(*rec);
        auto res = apply_refinements(space_, chosen, x_star, &pen_);
        const std::size_t added = res.space.size() - space_.size();
        space_ = res.space;
        db_ = db_.lifted(space_);
        sm_.reset();
        sm_db_size_ = 0;
        rank_bonus_ += static_cast<int>(added);
        ++reparam_rounds_;
        ++stage_;

        std::size_t queued = 0;
        if (added > 0 && !res.joined_vcg_violated && !db_.contains(res.joined)) {
            pending_.push_back({res.joined, Phase::ReparamSample});
            ++queued;
        }
        if (added > 0 && cfg_.reparam.resample_count > 0) {
            auto existing = db_.configs();
            for (const auto& p : pending_)
                existing.push_back(p.config);
            const auto rs = resample_domain(space_, existing, cfg_.reparam.resample_count,
                                            cfg_.reparam.resample_trials, seed);
            for (const auto& x : rs.configs)
                pending_.push_back({x, Phase::ReparamSample});
            queued += rs.configs.size();
        }
        nlohmann::json rep;
        rep["stage"] = stage_;
        rep["target_params"] = target;
        rep["params"] = space_.size();
        rep["proposals"] = proposals;
        rep["chosen"] = nlohmann::json::array();
        for (const auto& p : chosen)
            rep["chosen"].push_back(proposal_to_json(p, space_));
        rep["space"] = space_to_json(space_);
        write_text_atomic(dir_ / "reports" / ("reparam_stage" + std::to_string(stage_) + ".json"), rep.dump(1) + "\n");
        save_manifest();
        log("reparam: " + std::to_string(chosen.size()) + " sections refined, " + std::to_string(space_.size())
            + " parameters, " + std::to_string(queued) + " samples queued");
        if (chosen.empty())
            warn("reparameterization found no improving refinement");
        return res;
    }

    /// Whether the run loop should start another refinement round.
    bool should_reparam() const
    {
        const int max_rounds = cfg_.stop.max_reparam_rounds < 0
            ? static_cast<int>(cfg_.reparam.schedule.size())
            : std::min(cfg_.stop.max_reparam_rounds, static_cast<int>(cfg_.reparam.schedule.size()));
        if (reparam_rounds_ >= max_rounds || db_.size() >= cfg_.stop.max_hf)
            return false;
        const auto inc = incumbent_index();
        if (!inc)
            return false;
        if (!stages_.empty()) {
            const double gain = stages_.back().f - db_[*inc].f;
            const double tol = cfg_.stop.improvement_tol * space_.dot_density(space_.lower_bounds());
            if (gain < tol)
                return false;
        }
        return true;
    }

    /// Runs (or resumes) the full loop and writes the reports.
    void run()
    {
        log("run: start");
        for (;;) {
            if (!pending_.empty()) {
                solve();
                continue;
            }
            if (db_.empty()) {
                sample();
                continue;
            }
            if (db_.size() < 2)
                throw DataError("fewer than two successful HF solves; cannot fit surrogates");
            if (surrogate_stale()) {
                fit();
                continue;
            }
            if (cursor_.phase == "done")
                break;
            if (db_.size() >= cfg_.stop.max_hf) {
                log("run: HF budget exhausted");
                set_cursor("done", 0);
                break;
            }
            step();
        }
        write_reports();
        log("run: done");
    }

    // Reports.

    void write_reports() const
    {
        fs::create_directories(dir_ / "reports");
        write_text_atomic(dir_ / "reports" / "hf_history.csv", hf_history_csv());
        write_text_atomic(dir_ / "reports" / "stages.csv", stages_csv());
        write_text_atomic(dir_ / "reports" / "singular_values.csv", singular_values_csv());
    }

    std::string hf_history_csv() const
    {
        std::ostringstream os;
        os << "seq,stage,phase,params,n_y,n_b,deflection,mass,vcg,f,vcg_feasible,best_f,config\n";
        double best = std::numeric_limits<double>::infinity();
        for (const auto& e : ledger_) {
            const bool feas = vcg_feasible(e.qoi, pen_);
            if (feas)
                best = std::min(best, e.f);
            os << e.seq << ',' << e.stage << ',' << phase_name(e.phase) << ',' << e.params << ',' << e.qoi.n_y << ','
               << e.qoi.n_b << ',' << fmt_double(e.qoi.deflection) << ',' << fmt_double(e.qoi.mass) << ','
               << fmt_double(e.qoi.vcg) << ',' << fmt_double(e.f) << ',' << (feas ? 1 : 0) << ','
               << fmt_double(best) << ',' << join_config(e.config) << '\n';
        }
        return os.str();
    }

    std::vector<StageRecord> stage_table() const
    {
        auto rows = stages_;
        if (auto cur = current_stage_record())
            rows.push_back(*cur);
        return rows;
    }

    std::string stages_csv() const
    {
        std::ostringstream os;
        os << "stage,params,hf_evaluations,f,m_gap,n_y,n_b,deflection,mass,vcg,dx,dx_lb,buckling_mass,penalty,config\n";
        for (const auto& s : stage_table())
            os << s.stage << ',' << s.params << ',' << s.hf_evaluations << ',' << fmt_double(s.f) << ','
               << fmt_double(s.m_gap) << ',' << s.qoi.n_y << ',' << s.qoi.n_b << ',' << fmt_double(s.qoi.deflection)
               << ',' << fmt_double(s.qoi.mass) << ',' << fmt_double(s.qoi.vcg) << ',' << fmt_double(s.dx) << ','
               << fmt_double(s.dx_lb) << ',' << fmt_double(s.buckling_mass) << ',' << fmt_double(s.penalty) << ','
               << join_config(s.config) << '\n';
        return os.str();
    }

    std::string singular_values_csv() const { return hullopt::singular_values_csv(sm_ ? &*sm_ : nullptr); }

    /// k-fold cross-validation of the failure counts per POD rank; writes crossval CSVs.
    std::vector<CvResult> crossval(int folds, const std::vector<int>& ranks) const
    {
        SurrogateFitOptions o;
        o.gpr.restarts = cfg_.surrogate.restarts;
        o.gpr.max_iters = cfg_.surrogate.iters;
        const auto res = cross_validate(db_, *model_, space_, pen_, ranks, folds, o, derive_seed(cfg_.seed, 77));
        std::ostringstream all, sum;
        all << "rank,qoi,sample,error\n";
        sum << "rank,qoi,count,min,q1,median,q3,max\n";
        for (const auto& r : res) {
            for (std::size_t k = 0; k < r.errors.size(); ++k)
                all << r.rank << ',' << r.qoi << ',' << k << ',' << fmt_double(r.errors[k]) << '\n';
            sum << r.rank << ',' << r.qoi << ',' << r.errors.size() << ',' << fmt_double(r.summary.min) << ','
                << fmt_double(r.summary.q1) << ',' << fmt_double(r.summary.median) << ','
                << fmt_double(r.summary.q3) << ',' << fmt_double(r.summary.max) << '\n';
        }
        fs::create_directories(dir_ / "reports");
        write_text_atomic(dir_ / "reports" / "crossval.csv", all.str());
        write_text_atomic(dir_ / "reports" / "crossval_summary.csv", sum.str());
        return res;
    }

    nlohmann::json summary() const
    {
        nlohmann::json j;
        j["stage"] = stage_;
        j["params"] = space_.size();
        j["hf_evaluations"] = db_.size();
        j["pending"] = pending_.size();
        j["surrogate_fresh"] = !surrogate_stale();
        j["phase"] = cursor_.phase;
        if (auto s = current_stage_record())
            j["incumbent"] = stage_to_json(*s);
        else
            j["incumbent"] = nullptr;
        return j;
    }

private:
    struct Cursor {
        std::string phase = "moo";
        int round = 0;
        double f_ref = std::numeric_limits<double>::infinity();
    };

    /// One decision of the run loop; surrogate is fresh and nothing is pending.
    void step()
    {
        const auto inc_f = [&] {
            const auto i = incumbent_index();
            return i ? db_[*i].f : std::numeric_limits<double>::infinity();
        };
        if (cursor_.phase == "moo") {
            if (cursor_.round >= cfg_.moo.max_rounds)
                return set_cursor("bo", 0);
            const auto r = moo_round();
            set_cursor(r.converged || pending_.empty() ? "bo" : "moo", r.converged || pending_.empty() ? 0 : cursor_.round + 1);
            return;
        }
        if (cursor_.phase == "bo" || cursor_.phase == "pds") {
            const bool bo = cursor_.phase == "bo";
            const int max_rounds = bo ? cfg_.bo.max_rounds : cfg_.pds.max_rounds;
            const char* next = bo ? "pds" : "decide";
            if (cursor_.round >= max_rounds || (cursor_.round > 0 && !(inc_f() < cursor_.f_ref)))
                return set_cursor(next, 0);
            const double f0 = inc_f();
            if (bo)
                bo_round();
            else
                pds_round();
            if (pending_.empty())
                return set_cursor(next, 0);
            set_cursor(cursor_.phase, cursor_.round + 1, f0);
            return;
        }
        if (cursor_.phase == "decide") {
            if (should_reparam()) {
                reparam();
                set_cursor("moo", 0);
            } else {
                set_cursor("done", 0);
            }
            return;
        }
        throw DataError("unknown run phase '" + cursor_.phase + "'");
    }

    void set_cursor(const std::string& phase, int round, double f_ref = std::numeric_limits<double>::infinity())
    {
        cursor_ = {phase, round, f_ref};
        save_manifest();
    }

    std::uint64_t next_seed() { return derive_seed(cfg_.seed, ops_++); }

    void require_surrogate() const
    {
        if (surrogate_stale())
            throw DataError("surrogate is missing or stale; run 'fit' first");
    }

    ScalarBatchObjective scalar_objective(const SurrogateEvaluator& ev) const
    {
        return [&ev](const std::vector<Configuration>& xs) { return ev.penalized(xs); };
    }

    /// HF non-dominated configurations, at most `cap`, used to seed the GA.
    std::vector<Configuration> hf_front(std::size_t cap) const
    {
        if (db_.empty())
            return {};
        Eigen::MatrixXd f(static_cast<Eigen::Index>(db_.size()), kNumObjectives);
        for (std::size_t i = 0; i < db_.size(); ++i)
            f.row(static_cast<Eigen::Index>(i)) = objective_row(db_[i].qoi);
        std::vector<Configuration> out;
        const auto layers = non_dominated_sort(f);
        for (auto i : layers.front())
            if (out.size() < cap)
                out.push_back(db_[i].config);
        return out;
    }

    void write_front(const Population& pop, const std::vector<std::size_t>& front) const
    {
        std::ostringstream os;
        os << "stage,params";
        for (const auto& n : objective_names())
            os << ',' << n;
        os << ",hf_validated,config\n";
        for (auto i : front) {
            os << stage_ << ',' << space_.size();
            for (Eigen::Index k = 0; k < pop.objectives.cols(); ++k)
                os << ',' << fmt_double(pop.objectives(static_cast<Eigen::Index>(i), k));
            os << ',' << (db_.contains(pop.individuals[i]) ? 1 : 0) << ',' << join_config(pop.individuals[i]) << '\n';
        }
        fs::create_directories(dir_ / "reports");
        write_text_atomic(dir_ / "reports" / ("pareto_stage" + std::to_string(stage_) + ".csv"), os.str());
    }

    void record(const DbEntry& e)
    {
        LedgerEntry l;
        l.seq = ledger_.size();
        l.stage = stage_;
        l.phase = e.phase;
        l.params = space_.size();
        l.config = e.config;
        l.key = hf_key(space_, e.config);
        l.qoi = e.qoi;
        l.f = e.f;
        l.time = utc_now();
        {
            std::ofstream out(dir_ / "ledger.jsonl", std::ios::app);
            out << ledger_to_json(l).dump() << '\n';
            out.flush();
            if (!out)
                throw Error("cannot append to the ledger");
        }
        ledger_.push_back(std::move(l));
        db_.add(e);
    }

    void load_state(const nlohmann::json& man)
    {
        space_ = man.contains("space") ? space_from_json(man["space"]) : model_->space;
        ops_ = man.value("ops", std::uint64_t{0});
        stage_ = man.value("stage", 0);
        rank_bonus_ = man.value("rank_bonus", 0);
        reparam_rounds_ = man.value("reparam_rounds", 0);
        sm_db_size_ = man.value("surrogate_db_size", std::size_t{0});
        if (man.contains("cursor")) {
            const auto& c = man["cursor"];
            cursor_.phase = c.value("phase", std::string("moo"));
            cursor_.round = c.value("round", 0);
            cursor_.f_ref = c.contains("f_ref") && c["f_ref"].is_number() ? c["f_ref"].get<double>()
                                                                            : std::numeric_limits<double>::infinity();
        }
        if (man.contains("stages"))
            for (const auto& s : man["stages"])
                stages_.push_back(stage_from_json(s));
        if (man.contains("pending"))
            for (const auto& p : man["pending"])
                pending_.push_back({p.at("config").get<Configuration>(), phase_from_name(p.at("phase").get<std::string>())});

        std::ifstream in(dir_ / "ledger.jsonl");
        std::string line;
        bool torn = false;
        while (std::getline(in, line)) {
            if (line.empty())
                continue;
            LedgerEntry l;
            try {
                l = ledger_from_json(nlohmann::json::parse(line));
            } catch (const std::exception& e) {
                // A torn final line from an interrupted append; the entry is re-solved from the cache.
                warn(std::string("dropping unreadable ledger line: ") + e.what());
                torn = true;
                continue;
            }
            const Configuration x = space_.lift(l.config);
            if (db_.contains(x))
                continue;
            auto snap = load_snapshot(dir_ / "db" / l.key);
            snap.config = x;
            DbEntry e;
            e.config = x;
            e.snapshot = std::make_shared<const StressSnapshot>(std::move(snap));
            e.qoi = l.qoi;
            e.f = penalized_mass(e.qoi, pen_);
            e.phase = l.phase;
            l.seq = ledger_.size();
            ledger_.push_back(std::move(l));
            db_.add(std::move(e));
        }
        in.close();
        if (torn) {
            std::string text;
            for (const auto& l : ledger_)
                text += ledger_to_json(l).dump() + "\n";
            write_text_atomic(dir_ / "ledger.jsonl", text);
        }
        // A stale surrogate is still loaded: it warm-starts the next fit exactly as in an uninterrupted run.
        if (sm_db_size_ > 0 && fs::exists(dir_ / "surrogates" / "current")) {
            auto sm = load_surrogate(dir_ / "surrogates" / "current");
            if (sm.norm.dim() == space_.size())
                sm_ = std::move(sm);
        }
    }

    void save_manifest() const
    {
        nlohmann::json m;
        m["version"] = kRunManifestVersion;
        m["space"] = space_to_json(space_);
        m["ops"] = ops_;
        m["stage"] = stage_;
        m["rank_bonus"] = rank_bonus_;
        m["reparam_rounds"] = reparam_rounds_;
        m["surrogate_db_size"] = sm_ ? sm_db_size_ : 0;
        m["cursor"] = {{"phase", cursor_.phase}, {"round", cursor_.round}};
        if (std::isfinite(cursor_.f_ref))
            m["cursor"]["f_ref"] = cursor_.f_ref;
        m["stages"] = nlohmann::json::array();
        for (const auto& s : stages_)
            m["stages"].push_back(stage_to_json(s));
        m["pending"] = nlohmann::json::array();
        for (const auto& p : pending_)
            m["pending"].push_back({{"config", p.config}, {"phase", phase_name(p.phase)}});
        m["hf_evaluations"] = db_.size();
        write_text_atomic(dir_ / "manifest.json", m.dump(1) + "\n");
    }

    static std::string utc_now()
    {
        const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&t, &tm);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }

    void log(const std::string& msg) const
    {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        std::ofstream out(dir_ / "logs" / "run.log", std::ios::app);
        char buf[32];
        std::snprintf(buf, sizeof buf, "[%s +%.1fs] ", utc_now().c_str(), s);
        out << buf << msg << '\n';
        if (std::getenv("HULLOPT_VERBOSE"))
            std::fprintf(stderr, "%s%s\n", buf, msg.c_str());
    }

    fs::path dir_;
    std::chrono::steady_clock::time_point start_;
    std::unique_ptr<RunLock> lock_;
    PipelineConfig cfg_;
    std::unique_ptr<HullModel> model_;
    PenaltyConfig pen_;
    std::unique_ptr<HifiSolver> solver_;

    ParameterSpace space_;
    SnapshotDatabase db_;
    std::vector<LedgerEntry> ledger_;
    std::optional<SurrogateModel> sm_;
    std::size_t sm_db_size_ = 0;
    std::vector<PendingConfig> pending_;
    std::vector<StageRecord> stages_;
    std::uint64_t ops_ = 0;
    int stage_ = 0;
    int rank_bonus_ = 0;
    int reparam_rounds_ = 0;
    Cursor cursor_;
    std::function<void(const std::string&)> probe_;
};

} // namespace hullopt
