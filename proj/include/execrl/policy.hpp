#pragma once

#include "execrl/env.hpp"
#include "execrl/error.hpp"
#include "execrl/matrix.hpp"
#include "execrl/nn/gru.hpp"
#include "execrl/nn/ops.hpp"
#include "execrl/nn/param_store.hpp"
#include "execrl/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace execrl {

enum class Role { teacher, student };

inline std::string to_string(Role role) { return role == Role::teacher ? "teacher" : "student"; }

inline Role parse_role(std::string_view text) {
    if (text == "teacher") return Role::teacher;
    if (text == "student") return Role::student;
    throw ConfigError("unknown role '" + std::string(text) + "'");
}

struct PolicyConfig {
    std::size_t public_hidden = 32;
    std::size_t private_hidden = 32;
    std::size_t inference_width = 32;
    std::size_t n_actions = 6;
    // Public features are ratios near zero; they enter the encoder multiplied by this.
    double input_scale = 100.0;
    double actor_init_gain = 0.01;

    nlohmann::json to_json() const {
        return {{"public_hidden", public_hidden},     {"private_hidden", private_hidden},
                {"inference_width", inference_width}, {"n_actions", n_actions},
                {"input_scale", input_scale},         {"actor_init_gain", actor_init_gain}};
    }
    static PolicyConfig from_json(const nlohmann::json& j) {
        PolicyConfig c;
        c.public_hidden = j.at("public_hidden").get<std::size_t>();
        c.private_hidden = j.at("private_hidden").get<std::size_t>();
        c.inference_width = j.at("inference_width").get<std::size_t>();
        c.n_actions = j.at("n_actions").get<std::size_t>();
        c.input_scale = j.at("input_scale").get<double>();
        c.actor_init_gain = j.at("actor_init_gain").get<double>();
        return c;
    }
};

// Categorical distribution over the action set.
struct ActionDist {
    std::vector<double> probs;

    static ActionDist from_logits(std::span<const double> logits) {
        ActionDist d;
        d.probs.resize(logits.size());
        const double mx = *std::max_element(logits.begin(), logits.end());
        double s = 0.0;
        for (std::size_t i = 0; i < logits.size(); ++i) s += (d.probs[i] = std::exp(logits[i] - mx));
        for (double& p : d.probs) p /= s;
        return d;
    }
};

inline std::size_t sample(const ActionDist& dist, std::mt19937_64& rng) {
    const double u = uniform01(rng);
    double cumulative = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < dist.probs.size(); ++i) {
        if (dist.probs[i] <= 0.0) continue;
        last_positive = i;
        cumulative += dist.probs[i];
        if (u < cumulative) return i;
    }
    return last_positive;
}

// Argmax; ties resolve to the lowest index.
inline std::size_t act_greedy(const ActionDist& dist) {
    return static_cast<std::size_t>(std::max_element(dist.probs.begin(), dist.probs.end()) - dist.probs.begin());
}

inline double log_prob(const ActionDist& dist, std::size_t action) { return std::log(dist.probs.at(action)); }

inline double entropy(const ActionDist& dist) {
    double h = 0.0;
    for (double p : dist.probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

// KL(p || q) = sum p ln(p / q), with 0 ln 0 = 0.
inline double kl(const ActionDist& p, const ActionDist& q) {
    if (p.probs.size() != q.probs.size()) throw DimensionError("kl: distribution sizes differ");
    double d = 0.0;
    for (std::size_t i = 0; i < p.probs.size(); ++i)
        if (p.probs[i] > 0.0) d += p.probs[i] * (std::log(p.probs[i]) - std::log(q.probs[i]));
    return d;
}

// Differentiable forms over rows of logits.
namespace dist_ops {

inline nn::Tensor log_prob(const nn::Tensor& logits, std::vector<std::size_t> actions) {
    return nn::pick(nn::log_softmax(logits), std::move(actions));
}

inline nn::Tensor entropy(const nn::Tensor& logits) {
    const nn::Tensor logp = nn::log_softmax(logits);
    return nn::scale(nn::row_sum(nn::mul(nn::exp(logp), logp)), -1.0);
}

// Row-wise KL(softmax(p) || softmax(q)).
inline nn::Tensor kl(const nn::Tensor& logits_p, const nn::Tensor& logits_q) {
    const nn::Tensor lp = nn::log_softmax(logits_p);
    const nn::Tensor lq = nn::log_softmax(logits_q);
    return nn::row_sum(nn::mul(nn::exp(lp), nn::sub(lp, lq)));
}

// Row-wise KL(p || softmax(q)) for a fixed probability matrix p.
inline nn::Tensor kl_from_probs(const nn::Tensor& p, const nn::Tensor& logits_q) {
    if (p.rows() != logits_q.rows() || p.cols() != logits_q.cols())
        throw DimensionError("kl_from_probs: shape mismatch " + p.shape_str() + " vs " + logits_q.shape_str());
    std::vector<double> plogp(p.rows(), 0.0);
    for (std::size_t i = 0; i < p.rows(); ++i)
        for (std::size_t j = 0; j < p.cols(); ++j)
            if (p(i, j) > 0.0) plogp[i] += p(i, j) * std::log(p(i, j));
    const nn::Tensor constant = nn::Tensor::from(p.rows(), 1, std::move(plogp));
    return nn::sub(constant, nn::row_sum(nn::mul(p, nn::log_softmax(logits_q))));
}

}  // namespace dist_ops

// Episodes to run through the network at once. Every episode contributes
// `lengths[e]` decision steps; the public sequence is `public_rows[e]`
// (history rows for a student, the full day for a teacher).
struct SequenceInput {
    std::vector<const Matrix*> public_rows;
    std::vector<const Matrix*> private_rows;
    std::vector<std::size_t> lengths;
};

struct SequenceOutput {
    nn::Tensor logits;  // [sum(lengths) x K], episode-major, step-minor
    nn::Tensor values;  // [sum(lengths) x 1]
};

// Dual-GRU actor-critic: a public-feature encoder and a private-feature
// encoder feed one shared inference layer, which feeds the actor (logits over
// the action set) and critic (state value) heads.
class PolicyNet {
public:
    struct Output {
        ActionDist dist;
        double value = 0.0;
    };

    PolicyNet(const PolicyConfig& cfg, Role role, std::uint64_t seed) : cfg_(cfg), role_(role) {
        if (cfg.n_actions < 1 || cfg.public_hidden < 1 || cfg.private_hidden < 1 || cfg.inference_width < 1)
            throw ConfigError("PolicyNet: widths and action count must be >= 1");
        auto rng = make_rng(seed, {0x9071CULL});
        add_gru("public", kPublicFeatures, cfg.public_hidden, rng);
        add_gru("private", kPrivateFeatures, cfg.private_hidden, rng);
        const std::size_t joint = cfg.public_hidden + cfg.private_hidden;
        params_.add("inference.kernel", joint, cfg.inference_width,
                    nn::fan_in_uniform(joint, cfg.inference_width, rng));
        params_.add("inference.bias", 1, cfg.inference_width, std::vector<double>(cfg.inference_width, 0.0));
        params_.add("actor.kernel", cfg.inference_width, cfg.n_actions,
                    nn::fan_in_uniform(cfg.inference_width, cfg.n_actions, rng, cfg.actor_init_gain));
        params_.add("actor.bias", 1, cfg.n_actions, std::vector<double>(cfg.n_actions, 0.0));
        params_.add("critic.kernel", cfg.inference_width, 1, nn::fan_in_uniform(cfg.inference_width, 1, rng));
        params_.add("critic.bias", 1, 1, {0.0});
        bind();
    }

    PolicyNet(const PolicyConfig& cfg, Role role, nn::ParamStore params)
        : cfg_(cfg), role_(role), params_(std::move(params)) {
        bind();
        if (actor_kernel_.cols() != cfg.n_actions || public_.hidden_width() != cfg.public_hidden ||
            private_.hidden_width() != cfg.private_hidden || inference_kernel_.cols() != cfg.inference_width)
            throw ValidationError("PolicyNet: parameters do not match the policy config");
    }

    PolicyNet(const PolicyNet& other) : cfg_(other.cfg_), role_(other.role_), params_(other.params_.clone()) { bind(); }
    PolicyNet& operator=(const PolicyNet& other) {
        if (this != &other) {
            cfg_ = other.cfg_;
            role_ = other.role_;
            params_ = other.params_.clone();
            bind();
        }
        return *this;
    }
    PolicyNet(PolicyNet&&) = default;
    PolicyNet& operator=(PolicyNet&&) = default;

    const PolicyConfig& config() const { return cfg_; }
    Role role() const { return role_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    // Encodes the full stored histories from scratch and evaluates both heads.
    std::pair<nn::Tensor, nn::Tensor> forward_tensors(const Matrix& public_rows, const Matrix& private_rows) const {
        if (public_rows.rows == 0 || private_rows.rows == 0) throw UsageError("PolicyNet::forward: empty history");
        if (public_rows.cols != kPublicFeatures || private_rows.cols != kPrivateFeatures)
            throw DimensionError("PolicyNet::forward: feature widths [" + std::to_string(public_rows.cols) + ", " +
                                 std::to_string(private_rows.cols) + "] vs [6, 2]");
        nn::Tensor h_pub(1, cfg_.public_hidden);
        for (std::size_t i = 0; i < public_rows.rows; ++i)
            h_pub = nn::gru_cell(public_input(public_rows, {i}), h_pub, public_);
        nn::Tensor h_priv(1, cfg_.private_hidden);
        for (std::size_t i = 0; i < private_rows.rows; ++i)
            h_priv = nn::gru_cell(private_input(private_rows, {i}), h_priv, private_);
        return heads(h_pub, h_priv);
    }

    Output forward(const Observation& obs) const {
        if (role_ != Role::student) throw UsageError("PolicyNet: a teacher consumes PerfectObservation");
        return to_output(forward_tensors(obs.public_history, obs.private_history));
    }

    Output forward(const PerfectObservation& obs) const {
        if (role_ != Role::teacher) throw UsageError("PolicyNet: a student consumes Observation");
        return to_output(forward_tensors(obs.public_full, obs.private_history));
    }

    // Same values as calling forward_tensors at every step of every episode,
    // computed with one incremental unroll. A student's public input at step t
    // is row t; a teacher's public encoding is the whole sequence, done once.
    SequenceOutput forward_sequences(const SequenceInput& in) const {
        const std::size_t episodes = in.lengths.size();
        if (episodes == 0 || in.public_rows.size() != episodes || in.private_rows.size() != episodes)
            throw UsageError("forward_sequences: inconsistent batch");
        // Longest first: at step t the active episodes are a prefix.
        std::vector<std::size_t> order(episodes);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return in.lengths[a] > in.lengths[b]; });
        const std::size_t max_len = in.lengths[order.front()];
        std::vector<std::size_t> active(max_len, 0);
        for (std::size_t e : order)
            for (std::size_t t = 0; t < in.lengths[e]; ++t) ++active[t];

        nn::Tensor h_full;
        if (role_ == Role::teacher) {
            std::size_t n_rows = in.public_rows[order.front()]->rows;
            for (std::size_t e : order)
                if (in.public_rows[e]->rows != n_rows) throw DimensionError("forward_sequences: unequal full-day lengths");
            h_full = nn::Tensor(episodes, cfg_.public_hidden);
            for (std::size_t i = 0; i < n_rows; ++i)
                h_full = nn::gru_cell(gather_rows(in.public_rows, order, episodes, i, true), h_full, public_);
        }

        std::vector<nn::Tensor> step_logits, step_values;
        nn::Tensor h_pub(episodes, cfg_.public_hidden);
        nn::Tensor h_priv(episodes, cfg_.private_hidden);
        for (std::size_t t = 0; t < max_len; ++t) {
            const std::size_t n = active[t];
            if (t > 0 && n != h_priv.rows()) {
                h_priv = nn::select_rows(h_priv, prefix(n));
                if (role_ == Role::student) h_pub = nn::select_rows(h_pub, prefix(n));
            }
            nn::Tensor pub_state;
            if (role_ == Role::student) {
                h_pub = nn::gru_cell(gather_rows(in.public_rows, order, n, t, true), h_pub, public_);
                pub_state = h_pub;
            } else {
                pub_state = n == episodes ? h_full : nn::select_rows(h_full, prefix(n));
            }
            h_priv = nn::gru_cell(gather_rows(in.private_rows, order, n, t, false), h_priv, private_);
            auto [lg, v] = heads(pub_state, h_priv);
            step_logits.push_back(lg);
            step_values.push_back(v);
        }

        // Row of (step t, sorted slot s) in the stacked output.
        std::vector<std::size_t> offset(max_len + 1, 0);
        for (std::size_t t = 0; t < max_len; ++t) offset[t + 1] = offset[t] + active[t];
        std::vector<std::size_t> slot_of(episodes);
        for (std::size_t s = 0; s < episodes; ++s) slot_of[order[s]] = s;
        std::vector<std::size_t> rows;
        rows.reserve(offset.back());
        for (std::size_t e = 0; e < episodes; ++e)
            for (std::size_t t = 0; t < in.lengths[e]; ++t) rows.push_back(offset[t] + slot_of[e]);
        nn::Tensor all_logits = step_logits.size() == 1 ? step_logits.front() : nn::concat_rows(step_logits);
        nn::Tensor all_values = step_values.size() == 1 ? step_values.front() : nn::concat_rows(step_values);
        return {nn::select_rows(all_logits, rows), nn::select_rows(all_values, std::move(rows))};
    }

    // Incremental evaluation for a batch of concurrently running episodes.
    class Runner {
    public:
        Runner(const PolicyNet& net, std::size_t batch)
            : net_(&net), h_pub_(batch, net.cfg_.public_hidden), h_priv_(batch, net.cfg_.private_hidden) {}

        // Teacher only: encodes each episode's full-day matrix once.
        void set_full_public(const std::vector<const Matrix*>& full) {
            nn::NoGradGuard guard;
            std::vector<std::size_t> identity(full.size());
            std::iota(identity.begin(), identity.end(), 0);
            nn::Tensor h(full.size(), net_->cfg_.public_hidden);
            for (std::size_t i = 0; i < full.front()->rows; ++i)
                h = nn::gru_cell(net_->gather_rows(full, identity, full.size(), i, true), h, net_->public_);
            h_pub_ = h;
        }

        // Consumes row t of each episode (public rows ignored for a teacher);
        // returns logits [B x K] and values [B x 1].
        std::pair<nn::Tensor, nn::Tensor> step(const std::vector<const Matrix*>& public_rows,
                                               const std::vector<const Matrix*>& private_rows, std::size_t t) {
            nn::NoGradGuard guard;
            std::vector<std::size_t> identity(private_rows.size());
            std::iota(identity.begin(), identity.end(), 0);
            if (net_->role_ == Role::student)
                h_pub_ = nn::gru_cell(net_->gather_rows(public_rows, identity, identity.size(), t, true), h_pub_,
                                      net_->public_);
            h_priv_ = nn::gru_cell(net_->gather_rows(private_rows, identity, identity.size(), t, false), h_priv_,
                                   net_->private_);
            return net_->heads(h_pub_, h_priv_);
        }

    private:
        const PolicyNet* net_;
        nn::Tensor h_pub_;
        nn::Tensor h_priv_;
    };

    nlohmann::json checkpoint_meta() const { return {{"role", to_string(role_)}, {"policy", cfg_.to_json()}}; }

private:
    void add_gru(const std::string& name, std::size_t in, std::size_t hid, std::mt19937_64& rng) {
        params_.add(name + ".input_kernel", in, 3 * hid, nn::fan_in_uniform(in, 3 * hid, rng));
        params_.add(name + ".recurrent_kernel", hid, 3 * hid, nn::orthogonal_blocks(hid, 3, rng));
        params_.add(name + ".input_bias", 1, 3 * hid, std::vector<double>(3 * hid, 0.0));
        params_.add(name + ".recurrent_bias", 1, 3 * hid, std::vector<double>(3 * hid, 0.0));
    }

    void bind() {
        auto gru = [this](const std::string& name) {
            return nn::GruParams{params_.get(name + ".input_kernel"), params_.get(name + ".recurrent_kernel"),
                                 params_.get(name + ".input_bias"), params_.get(name + ".recurrent_bias")};
        };
        public_ = gru("public");
        private_ = gru("private");
        inference_kernel_ = params_.get("inference.kernel");
        inference_bias_ = params_.get("inference.bias");
        actor_kernel_ = params_.get("actor.kernel");
        actor_bias_ = params_.get("actor.bias");
        critic_kernel_ = params_.get("critic.kernel");
        critic_bias_ = params_.get("critic.bias");
    }

    static std::vector<std::size_t> prefix(std::size_t n) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        return idx;
    }

    nn::Tensor public_input(const Matrix& rows, std::initializer_list<std::size_t> which) const {
        std::vector<double> v;
        for (std::size_t r : which)
            for (double x : rows.row(r)) v.push_back(x * cfg_.input_scale);
        return nn::Tensor::from(which.size(), rows.cols, std::move(v));
    }

    nn::Tensor private_input(const Matrix& rows, std::initializer_list<std::size_t> which) const {
        std::vector<double> v;
        for (std::size_t r : which)
            for (double x : rows.row(r)) v.push_back(x);
        return nn::Tensor::from(which.size(), rows.cols, std::move(v));
    }

    // Row r of the first n (in `order`) episodes' matrices, stacked.
    nn::Tensor gather_rows(const std::vector<const Matrix*>& mats, const std::vector<std::size_t>& order,
                           std::size_t n, std::size_t r, bool is_public) const {
        const std::size_t width = mats[order.front()]->cols;
        const double s = is_public ? cfg_.input_scale : 1.0;
        std::vector<double> v(n * width);
        for (std::size_t i = 0; i < n; ++i) {
            const Matrix& m = *mats[order[i]];
            if (m.cols != width || r >= m.rows) throw DimensionError("gather_rows: ragged input");
            for (std::size_t j = 0; j < width; ++j) v[i * width + j] = m(r, j) * s;
        }
        return nn::Tensor::from(n, width, std::move(v));
    }

    std::pair<nn::Tensor, nn::Tensor> heads(const nn::Tensor& h_pub, const nn::Tensor& h_priv) const {
        const nn::Tensor z = nn::relu(nn::linear(nn::concat_cols(h_pub, h_priv), inference_kernel_, inference_bias_));
        return {nn::linear(z, actor_kernel_, actor_bias_), nn::linear(z, critic_kernel_, critic_bias_)};
    }

    static Output to_output(const std::pair<nn::Tensor, nn::Tensor>& out) {
        return {ActionDist::from_logits(out.first.values()), out.second.item()};
    }

    PolicyConfig cfg_;
    Role role_;
    nn::ParamStore params_;
    nn::GruParams public_, private_;
    nn::Tensor inference_kernel_, inference_bias_, actor_kernel_, actor_bias_, critic_kernel_, critic_bias_;
};

inline void save_policy(const std::string& path, const PolicyNet& net, nlohmann::json extra = nlohmann::json::object()) {
    nlohmann::json meta = extra;
    meta.update(net.checkpoint_meta());
    nn::save_checkpoint(path, net.params(), meta);
}

struct LoadedPolicy {
    PolicyNet net;
    nlohmann::json meta;
};

inline LoadedPolicy load_policy(const std::string& path) {
    auto ck = nn::load_checkpoint(path);
    if (!ck.meta.contains("role") || !ck.meta.contains("policy"))
        throw ValidationError("checkpoint '" + path + "' is not a policy checkpoint");
    PolicyNet net(PolicyConfig::from_json(ck.meta.at("policy")), parse_role(ck.meta.at("role").get<std::string>()),
                  std::move(ck.params));
    return {std::move(net), std::move(ck.meta)};
}

}  // namespace execrl
