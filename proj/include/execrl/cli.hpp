#pragma once

#include "execrl/baselines.hpp"
#include "execrl/config.hpp"
#include "execrl/error.hpp"
#include "execrl/eval.hpp"
#include "execrl/gradcheck.hpp"
#include "execrl/market_data.hpp"
#include "execrl/policy.hpp"
#include "execrl/ppo.hpp"
#include "execrl/util.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace execrl::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kValidationFailure = 1, kRuntimeFailure = 2 };

// Training roles as exposed on the command line.
enum class TrainRole { teacher, student, pure_student };

inline TrainRole parse_train_role(std::string_view s) {
    if (s == "teacher") return TrainRole::teacher;
    if (s == "student") return TrainRole::student;
    if (s == "pure-student") return TrainRole::pure_student;
    throw ConfigError("--role must be teacher, student or pure-student, got '" + std::string(s) + "'");
}

inline std::string to_string(TrainRole r) {
    switch (r) {
        case TrainRole::teacher: return "teacher";
        case TrainRole::student: return "student";
        case TrainRole::pure_student: return "pure-student";
    }
    return "?";
}

// Report label of a trained agent.
inline std::string strategy_label(TrainRole r) {
    switch (r) {
        case TrainRole::teacher: return "OPD-T";
        case TrainRole::student: return "OPD";
        case TrainRole::pure_student: return "OPD-S";
    }
    return "?";
}

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value, applied after the file
    std::string out;                     // overrides `out`
    std::string seeds;                   // overrides `seeds`
};

inline RunConfig resolve_config(const CommonOptions& opt) {
    std::string text;
    if (!opt.config_path.empty()) {
        std::ifstream in(opt.config_path);
        if (!in) throw ConfigError("cannot open config '" + opt.config_path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    // Later assignments replace earlier ones.
    std::map<std::string, std::string> extra;
    for (const auto& o : opt.overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
        extra[trim(o.substr(0, eq))] = trim(o.substr(eq + 1));
    }
    if (!opt.out.empty()) extra["out"] = opt.out;
    if (!opt.seeds.empty()) extra["seeds"] = opt.seeds;
    std::string merged;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        const auto hash = line.find('#');
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        const auto eq = body.find('=');
        if (eq != std::string::npos && extra.count(trim(body.substr(0, eq)))) continue;
        merged += line + "\n";
    }
    for (const auto& [k, v] : extra) merged += k + " = " + v + "\n";
    return RunConfig::parse(merged, opt.config_path.empty() ? "<defaults>" : opt.config_path);
}

inline nlohmann::json provenance(const RunConfig& cfg) {
    return {{"config_hash", hex64(cfg.hash())}, {"env_hash", hex64(cfg.env_hash())}, {"config", cfg.canonical()}};
}

// Data, splits and contexts of one config, built once per command.
struct Workspace {
    RunConfig cfg;
    Dataset all;
    Splits splits;
    std::vector<EpisodeContext> train, valid, test;
    std::vector<std::string> diagnostics;

    explicit Workspace(RunConfig c) : cfg(std::move(c)) {
        LoadResult lr = load_dataset(cfg);
        diagnostics = lr.warnings;
        for (const auto& s : lr.skipped.entries)
            diagnostics.push_back("skipped " + s.instrument + " " + s.date + ": " + s.reason);
        all = std::move(lr.dataset);
        splits = split_dataset(cfg, all);
        train = build_contexts(splits.train, cfg.env, &diagnostics);
        valid = build_contexts(splits.valid, cfg.env, &diagnostics);
        test = build_contexts(splits.test, cfg.env, &diagnostics);
    }
    Workspace(const Workspace&) = delete;

    const std::vector<EpisodeContext>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "valid") return valid;
        if (name == "test") return test;
        throw ConfigError("--split must be train, valid or test");
    }
    const Dataset& split_data(const std::string& name) const {
        if (name == "train") return splits.train;
        if (name == "valid") return splits.valid;
        if (name == "test") return splits.test;
        throw ConfigError("--split must be train, valid or test");
    }
};

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

inline int cmd_gen_data(const CommonOptions& opt, std::ostream& out) {
    const RunConfig cfg = resolve_config(opt);
    const LoadResult lr = load_dataset(cfg);
    const fs::path dir = fs::path(cfg.out) / "data";
    fs::create_directories(dir);
    write_text(dir / "data.csv", to_csv(lr.dataset));
    write_text(dir / "config.txt", cfg.canonical());
    nlohmann::json manifest = provenance(cfg);
    manifest["frames"] = lr.dataset.frames.size();
    manifest["orders"] = lr.dataset.orders.size();
    manifest["bars_per_day"] = lr.dataset.bars_per_day;
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    out << "wrote " << lr.dataset.frames.size() << " day frames to " << (dir / "data.csv").string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

// Iterations between intermediate checkpoints, so an interrupted run can resume.
inline constexpr std::size_t kCheckpointEvery = 25;

struct TrainOptions {
    std::string role = "teacher";
    std::string teacher;  // checkpoint file, or a teacher run directory holding seed<k>/best.ckpt
    bool resume = false;
    bool verbose = false;
};

inline fs::path run_dir(const RunConfig& cfg, const std::string& role, std::uint64_t seed) {
    return fs::path(cfg.out) / role / ("seed" + std::to_string(seed));
}

inline fs::path teacher_checkpoint_for(const std::string& teacher, std::uint64_t seed) {
    const fs::path p(teacher);
    if (fs::is_directory(p)) {
        const fs::path candidate = p / ("seed" + std::to_string(seed)) / "best.ckpt";
        if (fs::exists(candidate)) return candidate;
        if (fs::exists(p / "best.ckpt")) return p / "best.ckpt";
        throw ConfigError("no teacher checkpoint for seed " + std::to_string(seed) + " under '" + teacher + "'");
    }
    if (!fs::exists(p)) throw ConfigError("teacher checkpoint '" + teacher + "' does not exist");
    return p;
}

inline nlohmann::json checkpoint_meta(const RunConfig& cfg, TrainRole role, std::uint64_t seed, const TrainConfig& tc) {
    nlohmann::json meta = provenance(cfg);
    meta["train_role"] = to_string(role);
    meta["strategy"] = strategy_label(role);
    meta["seed"] = seed;
    meta["returns_mode"] = to_string(tc.returns_mode);
    meta["distill_weight"] = format_double(tc.distill_weight);
    return meta;
}

inline int cmd_train(const CommonOptions& opt, const TrainOptions& topt, std::ostream& out) {
    const TrainRole role = parse_train_role(topt.role);
    const RunConfig cfg = resolve_config(opt);
    if (role == TrainRole::student && cfg.train.distill_weight > 0.0 && topt.teacher.empty())
        throw ConfigError("train --role student requires --teacher <checkpoint>");
    const Workspace ws(cfg);
    if (ws.train.empty()) throw ValidationError("training split has no orders");
    for (const auto& d : ws.diagnostics) out << "note: " << d << "\n";

    for (std::uint64_t seed : cfg.seeds) {
        TrainConfig tc = cfg.train;
        tc.seed = seed;
        if (role == TrainRole::pure_student) tc.distill_weight = 0.0;
        if (role == TrainRole::teacher) tc.distill_weight = 0.0;

        std::optional<LoadedPolicy> teacher;
        if (role == TrainRole::student && tc.distill_weight > 0.0) {
            teacher = load_policy(teacher_checkpoint_for(topt.teacher, seed).string());
            if (teacher->net.role() != Role::teacher) throw ConfigError("--teacher checkpoint has role student");
            if (teacher->meta.value("env_hash", "") != hex64(cfg.env_hash()))
                throw ValidationError("--teacher checkpoint was trained on different env params");
        }

        const fs::path dir = run_dir(cfg, to_string(role), seed);
        fs::create_directories(dir);
        const nlohmann::json meta = checkpoint_meta(cfg, role, seed, tc);
        const Role net_role = role == TrainRole::teacher ? Role::teacher : Role::student;

        std::optional<TrainState> state;
        if (topt.resume && fs::exists(dir / "last.ckpt")) {
            LoadedPolicy last = load_policy((dir / "last.ckpt").string());
            if (last.meta.value("config_hash", "") != hex64(cfg.hash()))
                throw ConfigError("cannot resume '" + dir.string() + "': config hash " +
                                  last.meta.value("config_hash", "?") + " differs from " + hex64(cfg.hash()));
            LoadedPolicy best = load_policy((dir / "best.ckpt").string());
            state.emplace(TrainState{std::move(last.net), std::move(best.net), 0, 0, 1.0, 0.0, 0, {}});
            state->restore_meta(last.meta.at("train_state"));
        } else {
            state.emplace(initial_state(PolicyNet(cfg.policy, net_role, seed), tc));
        }

        TrainInputs in;
        in.train = &ws.train;
        in.valid = &ws.valid;
        in.teacher = teacher ? &teacher->net : nullptr;
        if (topt.verbose) in.on_iteration = [&](const CurveRow& r) { out << r.csv() << "\n"; };
        auto save_state = [&](const TrainState& st) {
            nlohmann::json last_meta = meta;
            last_meta["train_state"] = st.meta();
            save_policy((dir / "last.ckpt").string(), st.current, last_meta);
            nlohmann::json best_meta = meta;
            best_meta["best_iteration"] = st.best_iteration;
            best_meta["best_valid_pa"] = format_double(st.best_valid_pa);
            save_policy((dir / "best.ckpt").string(), st.best, best_meta);
        };
        in.on_state = [&](const TrainState& st) {
            if (st.iteration % kCheckpointEvery == 0) save_state(st);
        };
        const TrainResult res = train(tc, std::move(*state), in);
        save_state(res.state);
        write_text(dir / "curve.csv", curve_csv(res.state.curve));
        nlohmann::json summary = meta;
        summary["iterations"] = res.state.iteration;
        summary["steps"] = res.state.steps;
        summary["best_iteration"] = res.state.best_iteration;
        summary["best_valid_pa"] = format_double(res.state.best_valid_pa);
        summary["max_identity_residual"] = format_double(res.max_identity_residual);
        summary["identity_checks"] = res.identity_checks;
        summary["warnings"] = res.warnings;
        write_text(dir / "train.json", summary.dump(2) + "\n");
        out << to_string(role) << " seed " << seed << ": " << res.state.iteration << " iterations, " << res.state.steps
            << " steps, best valid PA " << format_double(res.state.best_valid_pa) << " bps -> "
            << (dir / "best.ckpt").string() << "\n";
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// backtest
// ---------------------------------------------------------------------------

struct BacktestOptions {
    std::string strategy = "twap";
    std::vector<std::string> checkpoints;
    std::string split = "test";
    std::string format = "csv";
    bool details = false;
    std::string label;  // output name; derived when empty
};

inline int cmd_backtest(const CommonOptions& opt, const BacktestOptions& bopt, std::ostream& out) {
    const RunConfig cfg = resolve_config(opt);
    const ExportFormat format = parse_export_format(bopt.format);
    const Workspace ws(cfg);
    const auto& contexts = ws.split(bopt.split);
    for (const auto& d : ws.diagnostics) out << "note: " << d << "\n";

    struct Run {
        std::string label;
        std::vector<OrderRecord> records;
        nlohmann::json extra;
    };
    std::vector<Run> runs;
    nlohmann::json base = provenance(cfg);
    base["split"] = bopt.split;
    const int horizon = cfg.env.horizon;

    if (bopt.strategy == "policy") {
        if (bopt.checkpoints.empty()) throw ConfigError("--strategy policy needs at least one --checkpoint");
        for (const auto& path : bopt.checkpoints) {
            LoadedPolicy lp = load_policy(path);
            if (lp.meta.value("env_hash", "") != hex64(cfg.env_hash()))
                throw ValidationError("checkpoint '" + path + "' was trained on different env params");
            if (lp.net.config().n_actions != cfg.env.action_set.size())
                throw ValidationError("checkpoint '" + path + "' has a different action count");
            Run run;
            const std::string strategy = lp.meta.value("strategy", to_string(lp.net.role()));
            const std::uint64_t seed = lp.meta.value("seed", std::uint64_t{0});
            run.label = bopt.label.empty() ? strategy + "-seed" + std::to_string(seed)
                                           : (bopt.checkpoints.size() == 1 ? bopt.label : bopt.label + "-" + std::to_string(runs.size()));
            run.records = run_backtest(lp.net, contexts, cfg.train.workers);
            run.extra = base;
            run.extra["strategy"] = strategy;
            run.extra["seed"] = seed;
            run.extra["checkpoint"] = path;
            run.extra["trained_config_hash"] = lp.meta.value("config_hash", "");
            runs.push_back(std::move(run));
        }
    } else {
        if (!bopt.checkpoints.empty()) throw ConfigError("--checkpoint only applies to --strategy policy");
        Schedule schedule;
        nlohmann::json extra = base;
        if (bopt.strategy == "twap") {
            schedule = twap_schedule(horizon);
        } else if (bopt.strategy == "vwap") {
            std::vector<std::string> warnings;
            schedule = vwap_schedule(volume_profile(ws.splits.train, horizon, &warnings));
            for (const auto& w : warnings) out << "note: " << w << "\n";
        } else if (bopt.strategy == "ac") {
            const double kappa = cfg.kappa ? *cfg.kappa : fit_ac_kappa(ws.train, horizon, cfg.kappa_grid);
            extra["kappa"] = format_double(kappa);
            schedule = ac_schedule(horizon, kappa);
        } else {
            throw ConfigError("--strategy must be twap, vwap, ac or policy, got '" + bopt.strategy + "'");
        }
        std::string sched_text;
        for (double x : schedule) sched_text += (sched_text.empty() ? "" : ",") + format_double(x);
        extra["schedule"] = sched_text;
        std::string name = bopt.strategy;
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::toupper(c); });
        extra["strategy"] = name;
        extra["seed"] = 0;
        runs.push_back({bopt.label.empty() ? bopt.strategy : bopt.label,
                        run_backtest(ScheduleAgent(schedule, bopt.strategy), contexts), extra});
    }

    for (const auto& run : runs) {
        const fs::path dir = fs::path(cfg.out) / "backtest" / run.label;
        nlohmann::json extra = run.extra;
        if (format == ExportFormat::csv) extra.erase("config");
        export_records(run.records, dir, format, bopt.details, extra);
        write_text(dir / "config.txt", cfg.canonical());
        if (run.records.empty()) {
            out << run.label << ": no orders in split '" << bopt.split << "'\n";
            continue;
        }
        const EvalReport rep = metrics(run.records);
        out << run.label << ": orders " << rep.count << ", mean reward " << format_double(rep.mean_reward)
            << ", mean PA " << format_double(rep.mean_pa_bps) << " bps, GLR " << format_double(rep.glr) << " -> "
            << dir.string() << "\n";
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// grad-check
// ---------------------------------------------------------------------------

inline int cmd_grad_check(std::uint64_t seed, std::ostream& out) {
    const GradCheckReport rep = run_grad_check(seed);
    for (const auto& e : rep.entries)
        out << (e.max_rel_error < rep.tolerance ? "ok   " : "FAIL ") << e.block << "  max_rel_error "
            << format_double(e.max_rel_error) << "\n";
    out << (rep.passed() ? "grad-check passed" : "grad-check FAILED") << " (max " << format_double(rep.max_error())
        << ", tolerance " << format_double(rep.tolerance) << ")\n";
    return rep.passed() ? kOk : kValidationFailure;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct RunRecords {
    std::string strategy;
    std::uint64_t seed = 0;
    std::string env_hash;
    std::vector<OrderRecord> records;
};

// Reads one backtest output directory (csv or json).
inline RunRecords read_backtest_dir(const fs::path& dir) {
    RunRecords run;
    if (fs::exists(dir / "report.json")) {
        const auto doc = nlohmann::json::parse(read_text(dir / "report.json"));
        run.strategy = doc.value("strategy", dir.filename().string());
        run.seed = doc.value("seed", std::uint64_t{0});
        run.env_hash = doc.value("env_hash", "");
        run.records = import_records_json(dir / "report.json");
        return run;
    }
    if (!fs::exists(dir / "report.csv")) throw ValidationError("'" + dir.string() + "' holds no backtest report");
    std::istringstream summary(read_text(dir / "summary.csv"));
    std::string line;
    while (std::getline(summary, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        const std::string key = line.substr(0, comma), value = trim(line.substr(comma + 1));
        if (key == "strategy") run.strategy = value;
        if (key == "seed") run.seed = static_cast<std::uint64_t>(parse_int(value, "seed"));
        if (key == "env_hash") run.env_hash = value;
    }
    if (run.strategy.empty()) run.strategy = dir.filename().string();
    run.records = import_records_csv(dir / "report.csv");
    return run;
}

struct StrategyRow {
    std::string strategy;
    std::size_t runs = 0;
    double mean_reward = 0.0;
    double mean_pa_bps = 0.0;
    double median_pa_bps = 0.0;  // median over runs of the run mean
    double glr = 0.0;            // mean over runs; inf if any run is inf
    double p_pa = 1.0;           // vs reference, pooled per-order pairs
    double p_reward = 1.0;
};

inline double median(std::vector<double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// Pools the records of every run of `a` against runs of `b`, pairing per
// (order, seed); a single-run side is reused for every seed of the other.
inline Significance pooled_significance(const std::vector<const RunRecords*>& a, const std::vector<const RunRecords*>& b) {
    std::vector<OrderRecord> pa, pb;
    auto find_seed = [](const std::vector<const RunRecords*>& runs, std::uint64_t seed) -> const RunRecords* {
        for (const auto* r : runs)
            if (r->seed == seed) return r;
        return runs.size() == 1 ? runs.front() : nullptr;
    };
    const auto& many = a.size() >= b.size() ? a : b;
    for (const auto* ra : many) {
        const RunRecords* x = &a == &many ? ra : find_seed(a, ra->seed);
        const RunRecords* y = &b == &many ? ra : find_seed(b, ra->seed);
        if (!x || !y) throw UsageError("report: no run with seed " + std::to_string(ra->seed) + " to pair with");
        for (auto r : x->records) {
            r.order_id += "#" + std::to_string(ra->seed);
            pa.push_back(std::move(r));
        }
        for (auto r : y->records) {
            r.order_id += "#" + std::to_string(ra->seed);
            pb.push_back(std::move(r));
        }
    }
    return significance(pa, pb);
}

inline std::vector<StrategyRow> aggregate(const std::vector<RunRecords>& runs, const std::string& reference) {
    std::map<std::string, std::vector<const RunRecords*>> by_strategy;
    for (const auto& r : runs) by_strategy[r.strategy].push_back(&r);
    std::vector<StrategyRow> rows;
    for (const auto& [name, group] : by_strategy) {
        StrategyRow row;
        row.strategy = name;
        row.runs = group.size();
        std::vector<double> pas;
        bool inf_glr = false;
        for (const auto* r : group) {
            const EvalReport rep = metrics(r->records);
            row.mean_reward += rep.mean_reward;
            row.mean_pa_bps += rep.mean_pa_bps;
            pas.push_back(rep.mean_pa_bps);
            if (std::isinf(rep.glr)) inf_glr = true;
            else row.glr += rep.glr;
        }
        const double n = static_cast<double>(group.size());
        row.mean_reward /= n;
        row.mean_pa_bps /= n;
        row.median_pa_bps = median(pas);
        row.glr = inf_glr ? std::numeric_limits<double>::infinity() : row.glr / n;
        if (by_strategy.count(reference) && name != reference) {
            const Significance s = pooled_significance(group, by_strategy.at(reference));
            row.p_pa = s.p_pa;
            row.p_reward = s.p_reward;
        }
        rows.push_back(row);
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const StrategyRow& x, const StrategyRow& y) { return x.mean_pa_bps > y.mean_pa_bps; });
    return rows;
}

struct ReportOptions {
    std::vector<std::string> inputs;  // backtest directories, or parents holding several
    std::string reference = "TWAP";
    std::string out;                  // report directory; default <out>/report
};

inline std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
    std::vector<fs::path> dirs;
    for (const auto& in : inputs) {
        const fs::path p(in);
        if (!fs::is_directory(p)) throw ValidationError("report input '" + in + "' is not a directory");
        if (fs::exists(p / "report.csv") || fs::exists(p / "report.json")) {
            dirs.push_back(p);
            continue;
        }
        std::vector<fs::path> children;
        for (const auto& e : fs::directory_iterator(p))
            if (e.is_directory() && (fs::exists(e.path() / "report.csv") || fs::exists(e.path() / "report.json")))
                children.push_back(e.path());
        if (children.empty()) throw ValidationError("report input '" + in + "' holds no backtest reports");
        std::sort(children.begin(), children.end());
        dirs.insert(dirs.end(), children.begin(), children.end());
    }
    return dirs;
}

inline int cmd_report(const ReportOptions& ropt, std::ostream& out) {
    if (ropt.inputs.empty()) throw ConfigError("report needs --inputs");
    std::vector<RunRecords> runs;
    for (const auto& dir : expand_inputs(ropt.inputs)) runs.push_back(read_backtest_dir(dir));
    for (const auto& r : runs)
        if (r.env_hash != runs.front().env_hash)
            throw ValidationError("report: runs use different env params (" + r.env_hash + " vs " + runs.front().env_hash + ")");
    std::set<std::pair<std::string, std::uint64_t>> seen;
    for (const auto& r : runs) {
        if (r.records.empty()) throw ValidationError("report: run '" + r.strategy + "' has no records");
        if (!seen.insert({r.strategy, r.seed}).second)
            throw ValidationError("report: more than one run of " + r.strategy + " with seed " + std::to_string(r.seed));
    }
    std::string reference = ropt.reference;
    std::transform(reference.begin(), reference.end(), reference.begin(), [](unsigned char c) { return std::toupper(c); });
    const bool has_reference = std::any_of(runs.begin(), runs.end(), [&](const RunRecords& r) { return r.strategy == reference; });
    const auto rows = aggregate(runs, reference);

    std::string table = "strategy,runs,mean_reward,mean_pa_bps,median_pa_bps,glr,p_pa,p_reward,significant\n";
    out << "strategy     runs  reward(1e-2)  PA(bps)   GLR     p(PA) vs " << reference << "\n";
    for (const auto& r : rows) {
        const bool star = has_reference && r.strategy != reference && r.p_pa < 0.01;
        table += r.strategy + "," + std::to_string(r.runs) + "," + format_double(r.mean_reward) + "," +
                 format_double(r.mean_pa_bps) + "," + format_double(r.median_pa_bps) + "," + format_double(r.glr) + "," +
                 format_double(r.p_pa) + "," + format_double(r.p_reward) + "," + (star ? "*" : "") + "\n";
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%-12s %4zu  %11.4f  %8.3f%s  %6.3f  %.3g\n", r.strategy.c_str(), r.runs,
                      100.0 * r.mean_reward, r.mean_pa_bps, star ? "*" : " ", r.glr, r.p_pa);
        out << buf;
    }
    if (!has_reference) out << "note: reference '" << reference << "' not among the inputs; no significance computed\n";
    const fs::path dir = ropt.out.empty() ? fs::path(ropt.inputs.front()).parent_path() / "report" : fs::path(ropt.out);
    fs::create_directories(dir);
    write_text(dir / "table.csv", table);
    out << "wrote " << (dir / "table.csv").string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Order execution with oracle policy distillation"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    CommonOptions common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "run config file (key = value lines)");
        sub->add_option("--set", common.overrides, "override a config key: key=value (repeatable)");
        sub->add_option("--out", common.out, "output directory (overrides `out`)");
        sub->add_option("--seeds", common.seeds, "comma-separated seeds (overrides `seeds`)");
    };

    auto* gen = app.add_subcommand("gen-data", "generate or ingest the dataset and write it as CSV");
    add_common(gen);

    TrainOptions topt;
    auto* tr = app.add_subcommand("train", "train a teacher, student or pure student");
    add_common(tr);
    tr->add_option("--role", topt.role, "teacher | student | pure-student")->required();
    tr->add_option("--teacher", topt.teacher, "teacher checkpoint, or teacher run directory with seed<k>/best.ckpt");
    tr->add_flag("--resume", topt.resume, "continue from last.ckpt of each seed");
    tr->add_flag("--verbose", topt.verbose, "print the learning curve while training");

    BacktestOptions bopt;
    auto* bt = app.add_subcommand("backtest", "evaluate a strategy on a split");
    add_common(bt);
    bt->add_option("--strategy", bopt.strategy, "twap | vwap | ac | policy");
    bt->add_option("--checkpoint", bopt.checkpoints, "policy checkpoint (repeatable)");
    bt->add_option("--split", bopt.split, "train | valid | test");
    bt->add_option("--format", bopt.format, "csv | json");
    bt->add_flag("--details", bopt.details, "write per-step execution details");
    bt->add_option("--label", bopt.label, "output directory name under <out>/backtest");

    std::uint64_t gc_seed = 0;
    auto* gc = app.add_subcommand("grad-check", "compare analytic gradients with finite differences");
    gc->add_option("--seed", gc_seed, "seed of the random test instances");

    ReportOptions ropt;
    auto* rp = app.add_subcommand("report", "aggregate backtests into a comparison table");
    rp->add_option("--inputs", ropt.inputs, "backtest directories (or parents of several)")->required();
    rp->add_option("--reference", ropt.reference, "strategy used for significance stars");
    rp->add_option("--out", ropt.out, "report output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kValidationFailure;
    }

    try {
        if (*gen) return cmd_gen_data(common, out);
        if (*tr) return cmd_train(common, topt, out);
        if (*bt) return cmd_backtest(common, bopt, out);
        if (*gc) return cmd_grad_check(gc_seed, out);
        if (*rp) return cmd_report(ropt, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kValidationFailure;
    } catch (const ValidationError& e) {
        err << "validation error: " << e.what() << "\n";
        return kValidationFailure;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kValidationFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeFailure;
    }
    return kOk;
}

}  // namespace execrl::cli
