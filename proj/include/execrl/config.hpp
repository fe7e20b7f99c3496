#pragma once

#include "execrl/baselines.hpp"
#include "execrl/env.hpp"
#include "execrl/error.hpp"
#include "execrl/market_data.hpp"
#include "execrl/policy.hpp"
#include "execrl/ppo.hpp"
#include "execrl/util.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace execrl {

// Declarative description of one experiment, read from a flat file of
// `key = value` lines (`#` starts a comment). Unknown keys are rejected.
struct RunConfig {
    // data
    std::string data_source = "synthetic";  // synthetic | csv
    std::string data_csv;
    SyntheticConfig synthetic;

    // split: date ranges when all three are set, else chronological fractions
    std::string split_train, split_valid, split_test;
    double train_fraction = 0.6;
    double valid_fraction = 0.2;

    // env
    EnvParams env;
    Side side = Side::sell;
    double quantity = kDefaultQuantity;

    PolicyConfig policy;
    TrainConfig train;

    // baselines
    std::optional<double> kappa;  // unset: fitted on the training split
    std::vector<double> kappa_grid = default_kappa_grid();

    std::vector<std::uint64_t> seeds{0};
    std::string out = "runs";

    // Cross-field validation; also derives the action count.
    void finalize() {
        env.action_set = normalize_action_set(env.action_set);
        policy.n_actions = env.action_set.size();
        train.gamma = env.gamma;
        if (data_source != "synthetic" && data_source != "csv") throw ConfigError("data.source must be synthetic or csv");
        if (data_source == "csv" && data_csv.empty()) throw ConfigError("data.csv is required when data.source = csv");
        if (env.horizon < 2) throw ConfigError("env.horizon must be >= 2");
        if (env.alpha < 0.0) throw ConfigError("env.alpha must be >= 0");
        if (!(quantity > 0.0)) throw ConfigError("env.quantity must be > 0");
        if (data_source == "synthetic") {
            if (synthetic.n_instruments < 1 || synthetic.n_days < 1) throw ConfigError("data.instruments and data.days must be >= 1");
            if (synthetic.bars_per_day < env.horizon + 1)
                throw ConfigError("data.bars_per_day must be at least env.horizon + 1");
        }
        const int set_ranges = !split_train.empty() + !split_valid.empty() + !split_test.empty();
        if (set_ranges != 0 && set_ranges != 3) throw ConfigError("split.train, split.valid and split.test go together");
        if (set_ranges == 3) {
            parse_date_range(split_train);
            parse_date_range(split_valid);
            parse_date_range(split_test);
        }
        if (kappa && *kappa < 0.0) throw ConfigError("baseline.kappa must be >= 0");
        if (kappa_grid.empty()) throw ConfigError("baseline.kappa_grid must not be empty");
        if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
        if (policy.public_hidden < 1 || policy.private_hidden < 1 || policy.inference_width < 1)
            throw ConfigError("policy widths must be >= 1");
        train.validate();
    }

    // Every key in a fixed order; parses back to the same config.
    std::string canonical() const;
    // Hash of everything that affects results; `seeds` and `out` are excluded.
    std::uint64_t hash() const;
    // Hash of the execution problem only (horizon, impact, action set, side).
    std::uint64_t env_hash() const;

    static RunConfig parse(std::string_view text, const std::string& origin = "<config>");
    static RunConfig load(const std::string& path);
};

namespace config_detail {

struct Key {
    std::string name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
    bool hashed = true;
    bool env = false;
};

inline std::vector<double> parse_list(const std::string& v, const std::string& key) {
    std::vector<double> out;
    for (const auto& part : split(v, ',')) out.push_back(parse_double(trim(part), key));
    return out;
}

inline std::string join(const std::vector<double>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + format_double(xs[i]);
    return s;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline double num(const std::string& v, const std::string& key) {
    double x = 0.0;
    if (!try_parse_double(v, x)) throw ConfigError(key + ": not a number: '" + v + "'");
    return x;
}

inline long long integer(const std::string& v, const std::string& key) {
    try {
        return parse_int(v, key);
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
}

inline std::size_t count(const std::string& v, const std::string& key) {
    const long long x = integer(v, key);
    if (x < 0) throw ConfigError(key + " must be >= 0");
    return static_cast<std::size_t>(x);
}

#define EXECRL_DOUBLE(key, field) \
    Key { key, [](RunConfig& c, const std::string& v) { c.field = num(v, key); }, [](const RunConfig& c) { return format_double(c.field); } }
#define EXECRL_COUNT(key, field) \
    Key { key, [](RunConfig& c, const std::string& v) { c.field = count(v, key); }, [](const RunConfig& c) { return std::to_string(c.field); } }
#define EXECRL_INT(key, field) \
    Key { key, [](RunConfig& c, const std::string& v) { c.field = static_cast<int>(integer(v, key)); }, [](const RunConfig& c) { return std::to_string(c.field); } }

inline const std::vector<Key>& keys() {
    static const std::vector<Key> table = [] {
        std::vector<Key> k{
            {"data.source", [](RunConfig& c, const std::string& v) { c.data_source = v; }, [](const RunConfig& c) { return c.data_source; }},
            {"data.csv", [](RunConfig& c, const std::string& v) { c.data_csv = v; }, [](const RunConfig& c) { return c.data_csv; }},
            {"data.regime", [](RunConfig& c, const std::string& v) { c.synthetic.regime = parse_regime(v); },
             [](const RunConfig& c) { return to_string(c.synthetic.regime); }},
            EXECRL_INT("data.instruments", synthetic.n_instruments),
            EXECRL_INT("data.days", synthetic.n_days),
            EXECRL_INT("data.bars_per_day", synthetic.bars_per_day),
            {"data.seed", [](RunConfig& c, const std::string& v) { c.synthetic.seed = count(v, "data.seed"); },
             [](const RunConfig& c) { return std::to_string(c.synthetic.seed); }},
            {"data.start_date", [](RunConfig& c, const std::string& v) { c.synthetic.start_date = v; },
             [](const RunConfig& c) { return c.synthetic.start_date; }},
            EXECRL_DOUBLE("data.base_price", synthetic.base_price),
            EXECRL_DOUBLE("data.price_dispersion", synthetic.price_dispersion),
            EXECRL_DOUBLE("data.sigma", synthetic.sigma),
            EXECRL_DOUBLE("data.drift", synthetic.drift),
            EXECRL_DOUBLE("data.ar_coef", synthetic.ar_coef),
            EXECRL_DOUBLE("data.amplitude", synthetic.amplitude),
            EXECRL_DOUBLE("data.cycles", synthetic.cycles),
            EXECRL_DOUBLE("data.phase", synthetic.phase),
            EXECRL_DOUBLE("data.phase_jitter", synthetic.phase_jitter),
            EXECRL_DOUBLE("data.spread", synthetic.spread),
            {"data.volume_shape",
             [](RunConfig& c, const std::string& v) {
                 if (v == "flat") c.synthetic.volume_shape = VolumeShape::flat;
                 else if (v == "u_shape") c.synthetic.volume_shape = VolumeShape::u_shape;
                 else throw ConfigError("data.volume_shape must be flat or u_shape");
             },
             [](const RunConfig& c) { return std::string(c.synthetic.volume_shape == VolumeShape::flat ? "flat" : "u_shape"); }},
            EXECRL_DOUBLE("data.base_volume", synthetic.base_volume),
            EXECRL_DOUBLE("data.volume_noise", synthetic.volume_noise),

            {"split.train", [](RunConfig& c, const std::string& v) { c.split_train = v; }, [](const RunConfig& c) { return c.split_train; }},
            {"split.valid", [](RunConfig& c, const std::string& v) { c.split_valid = v; }, [](const RunConfig& c) { return c.split_valid; }},
            {"split.test", [](RunConfig& c, const std::string& v) { c.split_test = v; }, [](const RunConfig& c) { return c.split_test; }},
            EXECRL_DOUBLE("split.train_fraction", train_fraction),
            EXECRL_DOUBLE("split.valid_fraction", valid_fraction),

            EXECRL_INT("env.horizon", env.horizon),
            EXECRL_DOUBLE("env.alpha", env.alpha),
            EXECRL_DOUBLE("env.gamma", env.gamma),
            {"env.action_set", [](RunConfig& c, const std::string& v) { c.env.action_set = parse_list(v, "env.action_set"); },
             [](const RunConfig& c) { return join(c.env.action_set); }},
            {"env.side", [](RunConfig& c, const std::string& v) { c.side = parse_side(v); }, [](const RunConfig& c) { return to_string(c.side); }},
            EXECRL_DOUBLE("env.quantity", quantity),

            EXECRL_COUNT("policy.public_hidden", policy.public_hidden),
            EXECRL_COUNT("policy.private_hidden", policy.private_hidden),
            EXECRL_COUNT("policy.inference_width", policy.inference_width),
            EXECRL_DOUBLE("policy.input_scale", policy.input_scale),
            EXECRL_DOUBLE("policy.actor_init_gain", policy.actor_init_gain),

            EXECRL_DOUBLE("train.value_weight", train.value_weight),
            EXECRL_DOUBLE("train.distill_weight", train.distill_weight),
            EXECRL_DOUBLE("train.beta_init", train.beta_init),
            EXECRL_DOUBLE("train.kl_target", train.kl_target),
            EXECRL_DOUBLE("train.beta_factor", train.beta_factor),
            EXECRL_DOUBLE("train.lr", train.lr),
            EXECRL_COUNT("train.epochs", train.epochs),
            EXECRL_COUNT("train.minibatch_steps", train.minibatch_steps),
            EXECRL_COUNT("train.episodes_per_iteration", train.episodes_per_iteration),
            EXECRL_COUNT("train.total_steps", train.total_steps),
            {"train.returns_mode", [](RunConfig& c, const std::string& v) { c.train.returns_mode = parse_returns_mode(v); },
             [](const RunConfig& c) { return to_string(c.train.returns_mode); }},
            {"train.normalize_advantages",
             [](RunConfig& c, const std::string& v) { c.train.normalize_advantages = parse_bool(v, "train.normalize_advantages"); },
             [](const RunConfig& c) { return std::string(c.train.normalize_advantages ? "true" : "false"); }},
            EXECRL_DOUBLE("train.max_grad_norm", train.max_grad_norm),
            EXECRL_COUNT("train.eval_every", train.eval_every),

            {"baseline.kappa",
             [](RunConfig& c, const std::string& v) {
                 if (v == "auto") c.kappa.reset();
                 else c.kappa = num(v, "baseline.kappa");
             },
             [](const RunConfig& c) { return c.kappa ? format_double(*c.kappa) : std::string("auto"); }},
            {"baseline.kappa_grid", [](RunConfig& c, const std::string& v) { c.kappa_grid = parse_list(v, "baseline.kappa_grid"); },
             [](const RunConfig& c) { return join(c.kappa_grid); }},
        };
        // Worker count changes wall time only.
        k.push_back({"train.workers", [](RunConfig& c, const std::string& v) { c.train.workers = count(v, "train.workers"); },
                     [](const RunConfig& c) { return std::to_string(c.train.workers); }, false});
        k.push_back({"seeds",
                     [](RunConfig& c, const std::string& v) {
                         c.seeds.clear();
                         for (const auto& s : split(v, ',')) c.seeds.push_back(count(trim(s), "seeds"));
                     },
                     [](const RunConfig& c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.seeds.size(); ++i) s += (i ? "," : "") + std::to_string(c.seeds[i]);
                         return s;
                     },
                     false});
        k.push_back({"out", [](RunConfig& c, const std::string& v) { c.out = v; }, [](const RunConfig& c) { return c.out; }, false});
        for (auto& key : k) key.env = key.name.rfind("env.", 0) == 0;
        return k;
    }();
    return table;
}

#undef EXECRL_DOUBLE
#undef EXECRL_COUNT
#undef EXECRL_INT

}  // namespace config_detail

inline std::string RunConfig::canonical() const {
    std::string s;
    for (const auto& k : config_detail::keys()) s += k.name + " = " + k.get(*this) + "\n";
    return s;
}

inline std::uint64_t RunConfig::hash() const {
    std::string s;
    for (const auto& k : config_detail::keys())
        if (k.hashed) s += k.name + "=" + k.get(*this) + "\n";
    return fnv1a(s);
}

inline std::uint64_t RunConfig::env_hash() const {
    std::string s;
    for (const auto& k : config_detail::keys())
        if (k.env) s += k.name + "=" + k.get(*this) + "\n";
    return fnv1a(s);
}

inline RunConfig RunConfig::parse(std::string_view text, const std::string& origin) {
    RunConfig cfg;
    std::map<std::string, const config_detail::Key*> by_name;
    for (const auto& k : config_detail::keys()) by_name[k.name] = &k;
    std::set<std::string> seen;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash_pos = line.find('#');
        const std::string body = trim(hash_pos == std::string::npos ? line : line.substr(0, hash_pos));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        const std::string where = origin + ":" + std::to_string(line_no);
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        auto it = by_name.find(key);
        if (it == by_name.end()) throw ConfigError(where + ": unknown key '" + key + "'");
        if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key '" + key + "'");
        try {
            it->second->set(cfg, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    cfg.finalize();
    return cfg;
}

inline RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

// The dataset a config describes, with one order per day frame.
inline LoadResult load_dataset(const RunConfig& cfg) {
    LoadResult result;
    if (cfg.data_source == "csv")
        result = load_csv(cfg.data_csv);
    else
        result.dataset = gen_synthetic(cfg.synthetic);
    if (!result.dataset.frames.empty())
        result.dataset = make_orders(std::move(result.dataset), cfg.side, cfg.env.horizon, cfg.quantity);
    return result;
}

inline Splits split_dataset(const RunConfig& cfg, const Dataset& all) {
    if (!cfg.split_train.empty())
        return split_by_dates(all, parse_date_range(cfg.split_train), parse_date_range(cfg.split_valid),
                              parse_date_range(cfg.split_test));
    return split_by_fractions(all, cfg.train_fraction, cfg.valid_fraction);
}

}  // namespace execrl
