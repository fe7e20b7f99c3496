#pragma once

#include "execrl/distill.hpp"
#include "execrl/error.hpp"
#include "execrl/eval.hpp"
#include "execrl/nn/ops.hpp"
#include "execrl/nn/param_store.hpp"
#include "execrl/policy.hpp"
#include "execrl/trajectory.hpp"
#include "execrl/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace execrl {

inline constexpr double kBetaMin = 1e-6;
inline constexpr double kBetaMax = 1e6;

struct TrainConfig {
    double gamma = 1.0;
    double value_weight = 0.5;    // lambda
    double distill_weight = 1.0;  // mu
    double beta_init = 1.0;
    double kl_target = 0.01;
    double beta_factor = 2.0;
    double lr = 3e-4;
    std::size_t epochs = 4;
    std::size_t minibatch_steps = 64;
    std::size_t episodes_per_iteration = 128;
    std::size_t total_steps = 200000;
    std::uint64_t seed = 0;
    ReturnsMode returns_mode = ReturnsMode::standard;
    bool normalize_advantages = false;
    double max_grad_norm = 0.0;  // 0 disables clipping
    std::size_t workers = 1;
    std::size_t eval_every = 1;  // iterations between validation backtests

    void validate() const {
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("train.gamma must be in (0, 1]");
        if (!(value_weight >= 0.0)) throw ConfigError("train.value_weight must be >= 0");
        if (!(distill_weight >= 0.0)) throw ConfigError("train.distill_weight must be >= 0");
        if (!(beta_init > 0.0)) throw ConfigError("train.beta_init must be > 0");
        if (!(kl_target > 0.0)) throw ConfigError("train.kl_target must be > 0");
        if (!(beta_factor > 1.0)) throw ConfigError("train.beta_factor must be > 1");
        if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
        if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
        if (minibatch_steps < 1) throw ConfigError("train.minibatch_steps must be >= 1");
        if (episodes_per_iteration < 1) throw ConfigError("train.episodes_per_iteration must be >= 1");
        if (workers < 1) throw ConfigError("train.workers must be >= 1");
        if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
        if (max_grad_norm < 0.0) throw ConfigError("train.max_grad_norm must be >= 0");
    }
};

// Fills value targets and advantages from the rewards and recorded values.
inline void prepare_targets(std::vector<Trajectory>& batch, const TrainConfig& cfg) {
    for (auto& tr : batch) {
        tr.value_targets = compute_returns(tr.log.rewards, cfg.gamma, cfg.returns_mode, tr.context->horizon);
        tr.advantages = advantage(tr.log.rewards, tr.log.values, cfg.gamma);
    }
    if (cfg.normalize_advantages) normalize_advantages(batch);
}

struct LossTerms {
    nn::Tensor total;
    nn::Tensor policy_loss;
    nn::Tensor value_loss;
    nn::Tensor distill_loss;  // undefined unless mu > 0
    double loss_p = 0.0;
    double loss_v = 0.0;
    double loss_d = 0.0;  // NaN when no labels are present
    double mean_kl = 0.0;
    double mean_advantage = 0.0;
};

// Loss of `policy` on the episodes `idx` of `batch`:
//   L_p = -mean(ratio * A - beta * KL(old || new)),  L_v = mean((V - V_t)^2),
//   L_d = -mean log pi(teacher label),  total = L_p + lambda L_v + mu L_d.
inline LossTerms losses(const std::vector<Trajectory>& batch, const std::vector<std::size_t>& idx, const PolicyNet& policy,
                        double beta, double value_weight, double distill_weight) {
    if (idx.empty()) throw UsageError("losses: empty minibatch");
    const bool student = policy.role() == Role::student;
    SequenceInput in;
    std::vector<std::size_t> actions, labels;
    std::vector<double> old_logp_taken, old_probs, plogp, adv, targets;
    const std::size_t k = policy.config().n_actions;
    bool all_labeled = true;
    for (std::size_t e : idx) {
        const Trajectory& tr = batch[e];
        if (tr.length() == 0) throw UsageError("losses: empty trajectory");
        in.public_rows.push_back(student ? &tr.context->history_features : &tr.context->full_features);
        in.private_rows.push_back(&tr.log.private_rows);
        in.lengths.push_back(tr.length());
        all_labeled = all_labeled && tr.labeled();
        for (std::size_t t = 0; t < tr.length(); ++t) {
            const std::size_t a = tr.log.actions[t];
            actions.push_back(a);
            old_logp_taken.push_back(tr.log.log_probs(t, a));
            double c = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                const double lp = tr.log.log_probs(t, j);
                const double p = std::exp(lp);
                old_probs.push_back(p);
                c += p * lp;
            }
            plogp.push_back(c);
            adv.push_back(tr.advantages.at(t));
            targets.push_back(tr.value_targets.at(t));
            if (tr.labeled()) labels.push_back(tr.teacher_actions[t]);
        }
    }
    if (distill_weight > 0.0 && !all_labeled) throw UsageError("losses: distillation weight > 0 but teacher labels missing");

    const std::size_t n = actions.size();
    const SequenceOutput out = policy.forward_sequences(in);
    const nn::Tensor logp = nn::log_softmax(out.logits);
    const nn::Tensor old_taken = nn::Tensor::from(n, 1, old_logp_taken);
    const nn::Tensor ratio = nn::exp(nn::sub(nn::pick(logp, actions), old_taken));
    // KL(old || new) = sum p_old log p_old - sum p_old log p_new
    const nn::Tensor kl = nn::sub(nn::Tensor::from(n, 1, std::move(plogp)),
                                  nn::row_sum(nn::mul(nn::Tensor::from(n, k, std::move(old_probs)), logp)));
    const nn::Tensor a = nn::Tensor::from(n, 1, adv);
    const nn::Tensor l_p = nn::scale(nn::mean(nn::sub(nn::mul(ratio, a), nn::scale(kl, beta))), -1.0);
    const nn::Tensor l_v = nn::mean(nn::square(nn::sub(out.values, nn::Tensor::from(n, 1, std::move(targets)))));

    LossTerms terms;
    terms.policy_loss = l_p;
    terms.value_loss = l_v;
    terms.loss_p = l_p.item();
    terms.loss_v = l_v.item();
    terms.mean_kl = nn::mean(kl).item();
    for (double x : adv) terms.mean_advantage += x;
    terms.mean_advantage /= static_cast<double>(n);
    terms.total = value_weight == 0.0 ? l_p : nn::add(l_p, nn::scale(l_v, value_weight));
    terms.loss_d = std::numeric_limits<double>::quiet_NaN();
    if (distill_weight > 0.0) {
        const nn::Tensor l_d = nn::scale(nn::mean(nn::pick(logp, std::move(labels))), -1.0);
        terms.distill_loss = l_d;
        terms.loss_d = l_d.item();
        terms.total = nn::add(terms.total, nn::scale(l_d, distill_weight));
    } else if (all_labeled) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s -= logp(i, labels[i]);
        terms.loss_d = s / static_cast<double>(n);
    }
    return terms;
}

struct BetaUpdate {
    double beta = 1.0;
    bool clamped = false;
};

// Raises beta when KL overshoots 1.5 d_targ, lowers it below d_targ / 1.5.
inline BetaUpdate adapt_beta_checked(double mean_kl, double beta, double kl_target, double factor) {
    if (!(beta > 0.0)) throw UsageError("adapt_beta: beta must be > 0");
    double next = beta;
    if (mean_kl > 1.5 * kl_target)
        next = beta * factor;
    else if (mean_kl < kl_target / 1.5)
        next = beta / factor;
    const double clamped = std::clamp(next, kBetaMin, kBetaMax);
    return {clamped, clamped != next};
}

inline double adapt_beta(double mean_kl, double beta, double kl_target, double factor = 2.0) {
    return adapt_beta_checked(mean_kl, beta, kl_target, factor).beta;
}

// Mean KL(old || current) over all steps, without building a graph.
inline double batch_kl(const std::vector<Trajectory>& batch, const PolicyNet& policy) {
    nn::NoGradGuard guard;
    std::vector<std::size_t> all;
    for (std::size_t i = 0; i < batch.size(); ++i)
        if (batch[i].length() > 0) all.push_back(i);
    if (all.empty()) return 0.0;
    return losses(batch, all, policy, 1.0, 0.0, 0.0).mean_kl;
}

// Whole episodes grouped until each minibatch holds at least `min_steps` steps.
inline std::vector<std::vector<std::size_t>> make_minibatches(const std::vector<Trajectory>& batch,
                                                              std::size_t min_steps, std::mt19937_64& rng) {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < batch.size(); ++i)
        if (batch[i].length() > 0) order.push_back(i);
    for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
        std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> cur;
    std::size_t steps = 0;
    for (std::size_t e : order) {
        cur.push_back(e);
        steps += batch[e].length();
        if (steps >= min_steps) {
            out.push_back(std::move(cur));
            cur.clear();
            steps = 0;
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline constexpr const char* kCurveHeader =
    "iteration,steps,train_reward,valid_reward,valid_pa,mean_kl,beta,loss_p,loss_v,loss_d";

struct CurveRow {
    std::size_t iteration = 0;
    std::size_t steps = 0;
    double train_reward = 0.0;
    double valid_reward = std::numeric_limits<double>::quiet_NaN();
    double valid_pa = std::numeric_limits<double>::quiet_NaN();
    double mean_kl = 0.0;
    double beta = 0.0;
    double loss_p = 0.0;
    double loss_v = 0.0;
    double loss_d = std::numeric_limits<double>::quiet_NaN();

    std::string csv() const {
        return std::to_string(iteration) + "," + std::to_string(steps) + "," + format_double(train_reward) + "," +
               format_double(valid_reward) + "," + format_double(valid_pa) + "," + format_double(mean_kl) + "," +
               format_double(beta) + "," + format_double(loss_p) + "," + format_double(loss_v) + "," +
               format_double(loss_d);
    }
};

inline std::string curve_csv(const std::vector<CurveRow>& curve) {
    std::string s = std::string(kCurveHeader) + "\n";
    for (const auto& r : curve) s += r.csv() + "\n";
    return s;
}

inline CurveRow parse_curve_row(std::string_view line) {
    const auto c = split(trim(line), ',');
    if (c.size() != 10) throw ValidationError("learning curve: malformed row");
    CurveRow r;
    r.iteration = static_cast<std::size_t>(parse_int(c[0], "iteration"));
    r.steps = static_cast<std::size_t>(parse_int(c[1], "steps"));
    r.train_reward = parse_double(c[2], "train_reward");
    r.valid_reward = parse_double(c[3], "valid_reward");
    r.valid_pa = parse_double(c[4], "valid_pa");
    r.mean_kl = parse_double(c[5], "mean_kl");
    r.beta = parse_double(c[6], "beta");
    r.loss_p = parse_double(c[7], "loss_p");
    r.loss_v = parse_double(c[8], "loss_v");
    r.loss_d = parse_double(c[9], "loss_d");
    return r;
}

// Everything needed to continue a run exactly where it stopped.
struct TrainState {
    PolicyNet current;
    PolicyNet best;
    std::size_t iteration = 0;
    std::size_t steps = 0;
    double beta = 1.0;
    double best_valid_pa = -std::numeric_limits<double>::infinity();
    std::size_t best_iteration = 0;
    std::vector<CurveRow> curve;

    nlohmann::json meta() const {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : curve) rows.push_back(r.csv());
        return {{"iteration", iteration},
                {"steps", steps},
                {"beta", format_double(beta)},
                {"best_valid_pa", format_double(best_valid_pa)},
                {"best_iteration", best_iteration},
                {"curve", rows}};
    }
    void restore_meta(const nlohmann::json& j) {
        iteration = j.at("iteration").get<std::size_t>();
        steps = j.at("steps").get<std::size_t>();
        beta = parse_double(j.at("beta").get<std::string>(), "beta");
        best_valid_pa = parse_double(j.at("best_valid_pa").get<std::string>(), "best_valid_pa");
        best_iteration = j.at("best_iteration").get<std::size_t>();
        curve.clear();
        for (const auto& r : j.at("curve")) curve.push_back(parse_curve_row(r.get<std::string>()));
    }
};

struct TrainResult {
    TrainState state;
    double max_identity_residual = 0.0;  // max |L_p + mean(A)| on first minibatches
    std::size_t identity_checks = 0;
    std::vector<std::string> warnings;
};

struct TrainInputs {
    const std::vector<EpisodeContext>* train = nullptr;
    const std::vector<EpisodeContext>* valid = nullptr;  // may be empty; then the last policy is kept
    const PolicyNet* teacher = nullptr;                  // required for a student with mu > 0
    std::function<void(const CurveRow&)> on_iteration;
    std::function<void(const TrainState&)> on_state;  // after every iteration
};

// Greedy validation metrics (mean reward, mean PA).
inline std::pair<double, double> validate_policy(const PolicyNet& net, const std::vector<EpisodeContext>& valid,
                                                 std::size_t workers) {
    const auto rep = metrics(run_backtest(net, valid, workers));
    return {rep.mean_reward, rep.mean_pa_bps};
}

// PPO with an adaptive KL penalty and optional distillation. `start` carries
// the initial (or resumed) state; its `current` network defines the role.
inline TrainResult train(const TrainConfig& cfg, TrainState start, const TrainInputs& inputs) {
    cfg.validate();
    if (!inputs.train) throw UsageError("train: no training contexts");
    const Role role = start.current.role();
    const bool distilling = role == Role::student && cfg.distill_weight > 0.0;
    if (distilling && !inputs.teacher) throw ConfigError("student training with distill_weight > 0 needs a teacher checkpoint");
    if (inputs.teacher && inputs.teacher->role() != Role::teacher) throw ConfigError("teacher checkpoint has role student");
    // A teacher's loss has no distillation term.
    const double mu = role == Role::teacher ? 0.0 : cfg.distill_weight;

    TrainResult result{std::move(start), 0.0, 0, {}};
    TrainState& st = result.state;
    if (st.iteration == 0 && st.curve.empty()) st.beta = cfg.beta_init;
    const nn::AdamConfig adam{cfg.lr};
    const bool have_valid = inputs.valid && !inputs.valid->empty();

    while (st.steps < cfg.total_steps) {
        const std::size_t it = st.iteration;
        std::vector<Trajectory> batch =
            collect(st.current, *inputs.train, cfg.episodes_per_iteration, cfg.seed, it, cfg.workers);
        if (distilling) label_with_teacher(batch, *inputs.teacher, cfg.workers);
        prepare_targets(batch, cfg);

        CurveRow row;
        row.iteration = it;
        std::size_t new_steps = 0;
        for (const auto& tr : batch) {
            new_steps += tr.length();
            row.train_reward += total_reward(tr);
        }
        row.train_reward /= static_cast<double>(batch.size());

        double sum_p = 0.0, sum_v = 0.0, sum_d = 0.0;
        std::size_t n_mb = 0;
        for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            auto rng = make_rng(cfg.seed, {it, epoch, 0xB47CULL});
            const auto minibatches = make_minibatches(batch, cfg.minibatch_steps, rng);
            for (std::size_t m = 0; m < minibatches.size(); ++m) {
                LossTerms terms = losses(batch, minibatches[m], st.current, st.beta, cfg.value_weight, mu);
                if (epoch == 0 && m == 0) {
                    result.max_identity_residual =
                        std::max(result.max_identity_residual, std::abs(terms.loss_p + terms.mean_advantage));
                    ++result.identity_checks;
                }
                st.current.params().zero_grad();
                terms.total.backward();
                if (cfg.max_grad_norm > 0.0) nn::clip_grad_norm(st.current.params(), cfg.max_grad_norm);
                nn::adam_step(st.current.params(), adam);
                if (epoch + 1 == cfg.epochs) {
                    sum_p += terms.loss_p;
                    sum_v += terms.loss_v;
                    sum_d += terms.loss_d;
                    ++n_mb;
                }
            }
        }
        row.loss_p = sum_p / static_cast<double>(n_mb);
        row.loss_v = sum_v / static_cast<double>(n_mb);
        row.loss_d = sum_d / static_cast<double>(n_mb);
        row.mean_kl = batch_kl(batch, st.current);
        const BetaUpdate bu = adapt_beta_checked(row.mean_kl, st.beta, cfg.kl_target, cfg.beta_factor);
        if (bu.clamped) result.warnings.push_back("iteration " + std::to_string(it) + ": beta clamped to " + format_double(bu.beta));
        st.beta = row.beta = bu.beta;
        st.steps += new_steps;
        row.steps = st.steps;
        ++st.iteration;

        const bool last = st.steps >= cfg.total_steps;
        if (have_valid && (st.iteration % cfg.eval_every == 0 || last)) {
            std::tie(row.valid_reward, row.valid_pa) = validate_policy(st.current, *inputs.valid, cfg.workers);
            if (row.valid_pa > st.best_valid_pa) {
                st.best_valid_pa = row.valid_pa;
                st.best_iteration = st.iteration;
                st.best = st.current;
            }
        } else if (!have_valid) {
            st.best = st.current;
            st.best_iteration = st.iteration;
        }
        st.curve.push_back(row);
        if (inputs.on_iteration) inputs.on_iteration(row);
        if (inputs.on_state) inputs.on_state(st);
    }
    return result;
}

// Fresh state for a given network.
inline TrainState initial_state(const PolicyNet& net, const TrainConfig& cfg) {
    return TrainState{net, net, 0, 0, cfg.beta_init, -std::numeric_limits<double>::infinity(), 0, {}};
}

}  // namespace execrl
