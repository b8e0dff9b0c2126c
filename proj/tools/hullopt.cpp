#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hullopt/pipeline/pipeline.hpp"

using namespace hullopt;

namespace {

struct Options {
    std::string run_dir;
    std::string config;
    bool json = false;
    std::optional<std::uint64_t> seed;
    std::optional<double> time_limit;
    std::optional<int> max_iters;
    std::optional<std::size_t> params_target;
    int folds = 5;
    std::string ranks = "4,6,8";
};

ConfigOverrides overrides(const Options& o)
{
    ConfigOverrides ov;
    ov.seed = o.seed;
    ov.time_limit = o.time_limit;
    ov.max_iters = o.max_iters;
    ov.params_target = o.params_target;
    return ov;
}

std::vector<int> parse_ranks(const std::string& s)
{
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            const int r = std::stoi(tok, &used);
            if (used != tok.size())
                throw std::invalid_argument(tok);
            out.push_back(r);
        } catch (const std::logic_error&) {
            throw ConfigError("invalid rank list '" + s + "'");
        }
    }
    if (out.empty())
        throw ConfigError("empty rank list");
    return out;
}

void emit(const Options& o, const nlohmann::json& j, const std::string& human)
{
    if (o.json)
        std::cout << j.dump(2) << '\n';
    else
        std::cout << human << '\n';
}

std::string incumbent_line(const Pipeline& p)
{
    const auto s = p.current_stage_record();
    if (!s)
        return "no VCG-feasible incumbent yet";
    char buf[256];
    std::snprintf(buf, sizeof buf, "incumbent f %.4f (mass %.4f, n_y %d, n_b %d, vcg %.4f, m_gap %.3f%%) at [%s]", s->f,
                  s->qoi.mass, s->qoi.n_y, s->qoi.n_b, s->qoi.vcg, s->m_gap, join_config(s->config).c_str());
    return buf;
}

int dispatch(const std::string& cmd, const Options& o)
{
    if (cmd == "init") {
        Pipeline::init(o.run_dir, o.config, overrides(o));
        emit(o, {{"run_dir", o.run_dir}, {"status", "initialized"}}, "initialized " + o.run_dir);
        return 0;
    }
    Pipeline p(o.run_dir, overrides(o));
    if (cmd == "sample") {
        const auto n = p.sample();
        emit(o, {{"queued", n}}, std::to_string(n) + " configurations queued for HF solve");
    } else if (cmd == "solve") {
        const auto r = p.solve();
        emit(o, {{"solved", r.solved}, {"cached", r.cached}, {"failed", r.failed}, {"skipped", r.skipped},
                 {"hf_evaluations", p.db().size()}},
             std::to_string(r.solved) + " solved, " + std::to_string(r.cached) + " from cache, "
                 + std::to_string(r.failed) + " failed; " + std::to_string(p.db().size()) + " HF results\n"
                 + incumbent_line(p));
    } else if (cmd == "fit") {
        p.fit();
        emit(o, {{"samples", p.db().size()}, {"max_rank", p.surrogate()->max_rank()}},
             "surrogate fitted on " + std::to_string(p.db().size()) + " samples, max rank "
                 + std::to_string(p.surrogate()->max_rank()));
    } else if (cmd == "moo") {
        const auto r = p.moo_round();
        emit(o, {{"front", r.front_size}, {"candidates", r.candidates}, {"deltas", r.deltas},
                 {"converged", r.converged}, {"queued", p.pending().size()}},
             "Pareto front " + std::to_string(r.front_size) + ", " + std::to_string(p.pending().size())
                 + " infill configurations queued" + (r.converged ? " (converged)" : ""));
    } else if (cmd == "bo") {
        const auto r = p.bo_round();
        nlohmann::json j{{"queued", p.pending().size()}};
        if (r) {
            j["iterations"] = r->trace.size() - 1;
            j["stop_reason"] = r->stop_reason;
            j["surrogate_best"] = r->incumbent_f;
        }
        emit(o, j, std::to_string(p.pending().size()) + " BO candidates queued"
                       + (r ? " (" + r->stop_reason + ")" : std::string(" (skipped)")));
    } else if (cmd == "pds") {
        const auto r = p.pds_round();
        nlohmann::json j{{"queued", p.pending().size()}};
        if (r) {
            j["sweeps"] = r->sweeps;
            j["f_start"] = r->f_start;
            j["f"] = r->f;
        }
        emit(o, j, std::to_string(p.pending().size()) + " PDS candidates queued");
    } else if (cmd == "reparam") {
        const auto r = p.reparam();
        emit(o, {{"params", p.space().size()}, {"queued", p.pending().size()}, {"stage", p.stage()}},
             "refined to " + std::to_string(p.space().size()) + " parameters; " + std::to_string(p.pending().size())
                 + " samples queued");
    } else if (cmd == "run") {
        p.run();
        emit(o, p.summary(), "run finished: " + std::to_string(p.db().size()) + " HF results, "
                                 + std::to_string(p.space().size()) + " parameters\n" + incumbent_line(p));
    } else if (cmd == "report") {
        p.write_reports();
        emit(o, p.summary(), "reports written to " + (p.dir() / "reports").string() + "\n" + incumbent_line(p));
    } else if (cmd == "crossval") {
        const auto res = p.crossval(o.folds, parse_ranks(o.ranks));
        nlohmann::json j = nlohmann::json::array();
        std::string human = "rank qoi median [q1, q3]";
        for (const auto& r : res) {
            j.push_back({{"rank", r.rank}, {"qoi", r.qoi}, {"median", r.summary.median}, {"q1", r.summary.q1},
                         {"q3", r.summary.q3}, {"min", r.summary.min}, {"max", r.summary.max}});
            char buf[160];
            std::snprintf(buf, sizeof buf, "\n%d %s %.4f [%.4f, %.4f]", r.rank, r.qoi.c_str(), r.summary.median,
                          r.summary.q1, r.summary.q3);
            human += buf;
        }
        emit(o, j, human);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Surrogate-assisted hull structure optimization"};
    app.require_subcommand(1, 1);
    Options o;
    app.add_flag("--json", o.json, "Print machine-readable JSON summaries");

    const std::vector<std::pair<std::string, std::string>> commands{
        {"init", "Create a run directory from a config file"},
        {"sample", "Queue the initial random sample"},
        {"solve", "HF-solve all queued configurations"},
        {"fit", "Fit the POD-GPR surrogates on the database"},
        {"moo", "One GA round on the surrogate with infill selection"},
        {"bo", "One Bayesian optimization round"},
        {"pds", "One principal-dimensions search round"},
        {"reparam", "Refine the parameterization and queue new samples"},
        {"run", "Run or resume the full optimization loop"},
        {"report", "Write the CSV reports"},
        {"crossval", "Cross-validate the surrogate per POD rank"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("run_dir", o.run_dir, "Run directory")->required();
        sub->add_option("--seed", o.seed, "Override the config seed");
        sub->add_option("--time-limit", o.time_limit, "Override BO/PDS time limits (s)");
        sub->add_option("--max-iters", o.max_iters, "Override the BO iteration budget");
        sub->add_option("--params-target", o.params_target, "Single refinement round to this parameter count");
        if (name == "init")
            sub->add_option("--config", o.config, "Pipeline config file")->required()->check(CLI::ExistingFile);
        if (name == "crossval") {
            sub->add_option("--folds", o.folds, "Number of folds");
            sub->add_option("--ranks", o.ranks, "Comma-separated POD ranks");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        return dispatch(app.get_subcommands().front()->get_name(), o);
    } catch (const hullopt::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 2;
    }
}
