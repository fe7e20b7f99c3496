#pragma once

#include "execrl/baselines.hpp"
#include "execrl/env.hpp"
#include "execrl/error.hpp"
#include "execrl/policy.hpp"
#include "execrl/rollout.hpp"
#include "execrl/util.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include <cmath>
#include <concepts>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace execrl {

struct StepRecord {
    int step = 0;
    int window = 0;  // execution window index
    double proportion = 0.0;
    double price = 0.0;

    friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct OrderRecord {
    std::string order_id;
    std::string instrument;
    std::string date;
    Side side = Side::sell;
    std::vector<StepRecord> steps;
    double aep = 0.0;
    double pa_bps = 0.0;
    double reward = 0.0;
    double p_tilde = 0.0;

    friend bool operator==(const OrderRecord&, const OrderRecord&) = default;
};

inline OrderRecord make_record(const EpisodeContext& ctx, std::span<const double> proportions,
                               std::span<const double> prices) {
    const EpisodeMetrics m = episode_metrics(proportions, prices, ctx.p_tilde, ctx.alpha, ctx.order.side);
    OrderRecord r;
    r.order_id = ctx.order.id();
    r.instrument = ctx.order.instrument;
    r.date = ctx.order.date;
    r.side = ctx.order.side;
    r.aep = m.aep;
    r.pa_bps = m.pa_bps;
    r.reward = m.total_reward;
    r.p_tilde = ctx.p_tilde;
    for (std::size_t i = 0; i < proportions.size(); ++i)
        r.steps.push_back({static_cast<int>(i), static_cast<int>(i) + 1, proportions[i], prices[i]});
    return r;
}

// One context per order with a matching frame; the rest are reported.
inline std::vector<EpisodeContext> build_contexts(const Dataset& ds, const EnvParams& params,
                                                  std::vector<std::string>* diagnostics = nullptr) {
    std::map<std::pair<std::string, std::string>, const DayFrame*> index;
    for (const auto& f : ds.frames) index[{f.instrument, f.date}] = &f;
    std::vector<EpisodeContext> out;
    out.reserve(ds.orders.size());
    for (const auto& order : ds.orders) {
        auto it = index.find({order.instrument, order.date});
        if (it == index.end()) {
            if (diagnostics) diagnostics->push_back("order " + order.id() + ": no matching day frame; skipped");
            continue;
        }
        out.push_back(make_context(*it->second, order, params));
    }
    return out;
}

template <class A>
concept ExecutionAgent = requires(const A& agent, const EpisodeContext& ctx, const ExecutionEnv& env) {
    agent.begin(ctx);
    { agent.propose(env) } -> std::convertible_to<double>;
};

// Executes every order to completion; each episode ends at the horizon or on fulfillment.
template <ExecutionAgent A>
std::vector<OrderRecord> run_backtest(const A& agent, const std::vector<EpisodeContext>& contexts) {
    std::vector<OrderRecord> records;
    records.reserve(contexts.size());
    for (const auto& ctx : contexts) {
        agent.begin(ctx);
        ExecutionEnv env(ctx);
        while (!env.done()) env.step_proportion(agent.propose(env));
        records.push_back(make_record(ctx, env.executed(), env.prices()));
    }
    return records;
}

// Learned policy in greedy mode, evaluated in lockstep batches.
inline std::vector<OrderRecord> run_backtest(const PolicyNet& policy, const std::vector<EpisodeContext>& contexts,
                                             std::size_t workers = 1, std::size_t batch = 256) {
    std::vector<OrderRecord> records(contexts.size());
    const std::size_t n_batches = (contexts.size() + batch - 1) / batch;
    parallel_chunks(n_batches, workers, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b) {
            const std::size_t begin = b * batch, end = std::min(contexts.size(), begin + batch);
            std::vector<const EpisodeContext*> ptrs;
            for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&contexts[i]);
            const auto logs = run_policy_episodes(policy, ptrs, [](std::size_t, const ActionDist& d) { return act_greedy(d); });
            for (std::size_t i = begin; i < end; ++i)
                records[i] = make_record(contexts[i], logs[i - begin].proportions, logs[i - begin].prices);
        }
    });
    return records;
}

// Greedy agent re-encoding the full observation each step.
class PolicyAgent {
public:
    explicit PolicyAgent(const PolicyNet& net) : net_(&net) {}
    void begin(const EpisodeContext&) const {}
    double propose(const ExecutionEnv& env) const {
        const auto out = net_->role() == Role::teacher ? net_->forward(env.perfect_observation())
                                                       : net_->forward(env.observation());
        return env.context().action_set[act_greedy(out.dist)];
    }

private:
    const PolicyNet* net_;
};

struct EvalReport {
    double mean_reward = 0.0;
    double mean_pa_bps = 0.0;
    double glr = 0.0;  // +inf when there are gains but no losses
    std::size_t count = 0;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// PAs within this many BPs of zero count as neither gain nor loss, so rounding
// residue on a TWAP-equivalent order cannot flip the GLR.
inline constexpr double kPaZeroTolerance = 1e-9;

inline EvalReport metrics(const std::vector<OrderRecord>& records) {
    if (records.empty()) throw UsageError("metrics: no records");
    EvalReport rep;
    rep.count = records.size();
    double gains = 0.0, losses = 0.0;
    std::size_t n_gain = 0, n_loss = 0;
    for (const auto& r : records) {
        rep.mean_reward += r.reward;
        rep.mean_pa_bps += r.pa_bps;
        if (r.pa_bps > kPaZeroTolerance) {
            gains += r.pa_bps;
            ++n_gain;
        } else if (r.pa_bps < -kPaZeroTolerance) {
            losses += r.pa_bps;
            ++n_loss;
        }
    }
    rep.mean_reward /= static_cast<double>(records.size());
    rep.mean_pa_bps /= static_cast<double>(records.size());
    if (n_gain == 0)
        rep.glr = 0.0;
    else if (n_loss == 0)
        rep.glr = std::numeric_limits<double>::infinity();
    else
        rep.glr = (gains / static_cast<double>(n_gain)) / std::abs(losses / static_cast<double>(n_loss));
    return rep;
}

// Two-sided one-sample t-test of mean(diffs) = 0. Conventions: all-zero
// differences give 1; a non-zero constant difference (zero variance) gives 0;
// fewer than two samples give 1.
inline double paired_t_pvalue(std::span<const double> diffs) {
    const std::size_t n = diffs.size();
    if (n < 2) return 1.0;
    bool all_zero = true, all_equal = true;
    for (double d : diffs) {
        all_zero = all_zero && d == 0.0;
        all_equal = all_equal && d == diffs[0];
    }
    if (all_zero) return 1.0;
    if (all_equal) return 0.0;
    double mean = 0.0;
    for (double d : diffs) mean += d;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double d : diffs) ss += (d - mean) * (d - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0.0) return mean == 0.0 ? 1.0 : 0.0;
    const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
    const boost::math::students_t dist(static_cast<double>(n - 1));
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

struct Significance {
    double p_pa = 1.0;
    double p_reward = 1.0;
    double mean_pa_diff = 0.0;
};

// Paired on order identity; both sides must cover exactly the same orders.
inline Significance significance(const std::vector<OrderRecord>& a, const std::vector<OrderRecord>& b) {
    if (a.size() != b.size()) throw UsageError("significance: record sets differ in size");
    std::map<std::string, const OrderRecord*> by_id;
    for (const auto& r : b)
        if (!by_id.emplace(r.order_id, &r).second) throw UsageError("significance: duplicate order " + r.order_id);
    std::vector<double> d_pa, d_reward;
    for (const auto& r : a) {
        auto it = by_id.find(r.order_id);
        if (it == by_id.end()) throw UsageError("significance: order " + r.order_id + " missing from second set");
        d_pa.push_back(r.pa_bps - it->second->pa_bps);
        d_reward.push_back(r.reward - it->second->reward);
    }
    Significance s;
    s.p_pa = paired_t_pvalue(d_pa);
    s.p_reward = paired_t_pvalue(d_reward);
    for (double d : d_pa) s.mean_pa_diff += d;
    if (!d_pa.empty()) s.mean_pa_diff /= static_cast<double>(d_pa.size());
    return s;
}

// ---------------------------------------------------------------------------
// Export / import
// ---------------------------------------------------------------------------

inline constexpr const char* kReportHeader = "order_id,instrument,date,side,pa_bps,reward,aep,p_tilde";
inline constexpr const char* kDetailsHeader = "order_id,step,window,proportion,price";

enum class ExportFormat { csv, json };

inline ExportFormat parse_export_format(std::string_view s) {
    if (s == "csv") return ExportFormat::csv;
    if (s == "json") return ExportFormat::json;
    throw ConfigError("unknown export format '" + std::string(s) + "'");
}

inline nlohmann::json summary_json(const EvalReport& rep) {
    return {{"mean_reward", rep.mean_reward},
            {"mean_pa_bps", rep.mean_pa_bps},
            {"glr", std::isinf(rep.glr) ? nlohmann::json("inf") : nlohmann::json(rep.glr)},
            {"count", rep.count}};
}

inline nlohmann::json records_json(const std::vector<OrderRecord>& records, bool with_details) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : records) {
        nlohmann::json j = {{"order_id", r.order_id}, {"instrument", r.instrument}, {"date", r.date},
                            {"side", to_string(r.side)}, {"pa_bps", r.pa_bps}, {"reward", r.reward},
                            {"aep", r.aep}, {"p_tilde", r.p_tilde}};
        if (with_details) {
            j["details"] = nlohmann::json::array();
            for (const auto& s : r.steps)
                j["details"].push_back({{"step", s.step}, {"window", s.window}, {"proportion", s.proportion}, {"price", s.price}});
        }
        out.push_back(std::move(j));
    }
    return out;
}

struct ExportPaths {
    std::string summary;
    std::string records;
    std::string details;  // empty unless written
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path.string() + "'");
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Writes report files into `dir`. `extra` is merged into the JSON summary
// (provenance such as strategy name and config hash).
inline ExportPaths export_records(const std::vector<OrderRecord>& records, const std::filesystem::path& dir,
                                  ExportFormat format, bool with_details,
                                  const nlohmann::json& extra = nlohmann::json::object()) {
    std::filesystem::create_directories(dir);
    const EvalReport rep = records.empty() ? EvalReport{} : metrics(records);
    ExportPaths paths;
    if (format == ExportFormat::json) {
        nlohmann::json doc = extra;
        doc["summary"] = summary_json(rep);
        doc["records"] = records_json(records, with_details);
        paths.summary = paths.records = (dir / "report.json").string();
        write_text(paths.summary, doc.dump(2) + "\n");
        if (with_details) paths.details = paths.summary;
        return paths;
    }
    std::string summary = "metric,value\n";
    summary += "mean_reward," + format_double(rep.mean_reward) + "\n";
    summary += "mean_pa_bps," + format_double(rep.mean_pa_bps) + "\n";
    summary += "glr," + format_double(rep.glr) + "\n";
    summary += "count," + std::to_string(rep.count) + "\n";
    for (auto it = extra.begin(); it != extra.end(); ++it)
        summary += it.key() + "," + (it->is_string() ? it->get<std::string>() : it->dump()) + "\n";
    paths.summary = (dir / "summary.csv").string();
    write_text(paths.summary, summary);

    std::string body = std::string(kReportHeader) + "\n";
    for (const auto& r : records)
        body += r.order_id + "," + r.instrument + "," + r.date + "," + to_string(r.side) + "," + format_double(r.pa_bps) +
                "," + format_double(r.reward) + "," + format_double(r.aep) + "," + format_double(r.p_tilde) + "\n";
    paths.records = (dir / "report.csv").string();
    write_text(paths.records, body);
    if (with_details) {
        std::string details = std::string(kDetailsHeader) + "\n";
        for (const auto& r : records)
            for (const auto& s : r.steps)
                details += r.order_id + "," + std::to_string(s.step) + "," + std::to_string(s.window) + "," +
                           format_double(s.proportion) + "," + format_double(s.price) + "\n";
        paths.details = (dir / "details.csv").string();
        write_text(paths.details, details);
    }
    return paths;
}

// Reads report.csv (and details.csv if given) back into records.
inline std::vector<OrderRecord> import_records_csv(const std::filesystem::path& report,
                                                   const std::filesystem::path& details = {}) {
    std::istringstream in(read_text(report));
    std::string line;
    if (!std::getline(in, line) || trim(line) != kReportHeader)
        throw SchemaError("'" + report.string() + "': unexpected report header");
    std::vector<OrderRecord> records;
    std::map<std::string, std::size_t> by_id;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto c = split(trim(line), ',');
        if (c.size() != 8) throw ValidationError("'" + report.string() + "': malformed row");
        OrderRecord r;
        r.order_id = c[0];
        r.instrument = c[1];
        r.date = c[2];
        r.side = parse_side(c[3]);
        r.pa_bps = parse_double(c[4], "pa_bps");
        r.reward = parse_double(c[5], "reward");
        r.aep = parse_double(c[6], "aep");
        r.p_tilde = parse_double(c[7], "p_tilde");
        by_id[r.order_id] = records.size();
        records.push_back(std::move(r));
    }
    if (!details.empty()) {
        std::istringstream din(read_text(details));
        if (!std::getline(din, line) || trim(line) != kDetailsHeader)
            throw SchemaError("'" + details.string() + "': unexpected details header");
        while (std::getline(din, line)) {
            if (trim(line).empty()) continue;
            const auto c = split(trim(line), ',');
            if (c.size() != 5) throw ValidationError("'" + details.string() + "': malformed row");
            auto it = by_id.find(c[0]);
            if (it == by_id.end()) throw ValidationError("details reference unknown order " + c[0]);
            records[it->second].steps.push_back({static_cast<int>(parse_int(c[1], "step")),
                                                 static_cast<int>(parse_int(c[2], "window")),
                                                 parse_double(c[3], "proportion"), parse_double(c[4], "price")});
        }
    }
    return records;
}

inline std::vector<OrderRecord> import_records_json(const std::filesystem::path& path) {
    const auto doc = nlohmann::json::parse(read_text(path));
    std::vector<OrderRecord> records;
    for (const auto& j : doc.at("records")) {
        OrderRecord r;
        r.order_id = j.at("order_id").get<std::string>();
        r.instrument = j.at("instrument").get<std::string>();
        r.date = j.at("date").get<std::string>();
        r.side = parse_side(j.at("side").get<std::string>());
        r.pa_bps = j.at("pa_bps").get<double>();
        r.reward = j.at("reward").get<double>();
        r.aep = j.at("aep").get<double>();
        r.p_tilde = j.at("p_tilde").get<double>();
        if (j.contains("details"))
            for (const auto& s : j.at("details"))
                r.steps.push_back({s.at("step").get<int>(), s.at("window").get<int>(), s.at("proportion").get<double>(),
                                   s.at("price").get<double>()});
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace execrl
