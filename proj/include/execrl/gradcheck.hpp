#pragma once

#include "execrl/distill.hpp"
#include "execrl/env.hpp"
#include "execrl/market_data.hpp"
#include "execrl/nn/gru.hpp"
#include "execrl/nn/ops.hpp"
#include "execrl/policy.hpp"
#include "execrl/ppo.hpp"
#include "execrl/trajectory.hpp"
#include "execrl/util.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace execrl {

inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr double kGradCheckStep = 1e-5;

inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

struct GradCheckEntry {
    std::string block;  // e.g. "gru/recurrent_kernel" or "L_p/actor.kernel"
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tolerance = kGradCheckTolerance;

    double max_error() const {
        double m = 0.0;
        for (const auto& e : entries) m = std::max(m, e.max_rel_error);
        return m;
    }
    bool passed() const { return max_error() < tolerance; }
};

// Compares reverse-mode gradients of `loss()` against central differences for
// every element of each named leaf.
inline void check_leaves(const std::string& prefix, const std::vector<std::pair<std::string, nn::Tensor>>& leaves,
                         const std::function<nn::Tensor()>& loss, GradCheckReport& report, double h = kGradCheckStep) {
    for (auto [name, leaf] : leaves) leaf.zero_grad();
    loss().backward();
    for (auto [name, leaf] : leaves) {
        const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
        GradCheckEntry entry{prefix + "/" + name, 0.0, 0};
        auto w = leaf.mutable_values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double saved = w[i];
            double up = 0.0, down = 0.0;
            {
                nn::NoGradGuard guard;
                w[i] = saved + h;
                up = loss().item();
                w[i] = saved - h;
                down = loss().item();
            }
            w[i] = saved;
            entry.max_rel_error = std::max(entry.max_rel_error, relative_error(analytic[i], (up - down) / (2.0 * h)));
            ++entry.checked;
        }
        report.entries.push_back(entry);
    }
}

namespace gradcheck_detail {

inline nn::Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0, bool leaf = true) {
    std::vector<double> v(r * c);
    for (double& x : v) x = scale * (2.0 * uniform01(rng) - 1.0);
    return nn::Tensor::from(r, c, std::move(v), leaf);
}

inline std::vector<std::pair<std::string, nn::Tensor>> policy_leaves(PolicyNet& net) {
    std::vector<std::pair<std::string, nn::Tensor>> out;
    for (auto& e : net.params().entries()) out.emplace_back(e.name, e.tensor);
    return out;
}

}  // namespace gradcheck_detail

// Layer-level and loss-level gradient checks on small random instances.
inline GradCheckReport run_grad_check(std::uint64_t seed = 0) {
    using namespace gradcheck_detail;
    GradCheckReport report;
    auto rng = make_rng(seed, {0x64AD});

    {  // dense layer with relu
        auto x = random_tensor(3, 4, rng), w = random_tensor(4, 5, rng), b = random_tensor(1, 5, rng);
        const auto probe = random_tensor(3, 5, rng, 1.0, false);
        check_leaves("dense", {{"input", x}, {"kernel", w}, {"bias", b}},
                     [&] { return nn::sum(nn::mul(nn::relu(nn::linear(x, w, b)), probe)); }, report);
        check_leaves("dense_tanh", {{"kernel", w}},
                     [&] { return nn::sum(nn::mul(nn::tanh(nn::linear(x, w, b)), probe)); }, report);
    }
    {  // GRU, three steps
        const std::size_t in = 3, hid = 4;
        nn::GruParams p{random_tensor(in, 3 * hid, rng, 0.5), random_tensor(hid, 3 * hid, rng, 0.5),
                        random_tensor(1, 3 * hid, rng, 0.5), random_tensor(1, 3 * hid, rng, 0.5)};
        std::vector<nn::Tensor> xs{random_tensor(2, in, rng), random_tensor(2, in, rng), random_tensor(2, in, rng)};
        auto h0 = random_tensor(2, hid, rng, 0.5);
        const auto probe = random_tensor(2, hid, rng, 1.0, false);
        check_leaves("gru",
                     {{"input_kernel", p.input_kernel}, {"recurrent_kernel", p.recurrent_kernel},
                      {"input_bias", p.input_bias}, {"recurrent_bias", p.recurrent_bias}, {"h0", h0}, {"x0", xs[0]}},
                     [&] { return nn::sum(nn::mul(nn::gru_unroll(xs, h0, p).back(), probe)); }, report);
    }
    {  // softmax heads
        auto logits = random_tensor(3, 5, rng, 2.0);
        const auto probe = random_tensor(3, 5, rng, 1.0, false);
        check_leaves("log_softmax", {{"logits", logits}},
                     [&] { return nn::sum(nn::mul(nn::log_softmax(logits), probe)); }, report);
        check_leaves("softmax", {{"logits", logits}}, [&] { return nn::sum(nn::mul(nn::softmax(logits), probe)); }, report);
        auto other = random_tensor(3, 5, rng, 2.0);
        check_leaves("kl", {{"p", logits}, {"q", other}}, [&] { return nn::sum(dist_ops::kl(logits, other)); }, report);
    }

    // Loss terms on a tiny batch with a perturbed policy (ratio != 1, KL != 0).
    SyntheticConfig sc;
    sc.regime = Regime::ar_predictable;
    sc.n_instruments = 2;
    sc.n_days = 3;
    sc.bars_per_day = 20;
    sc.seed = seed;
    sc.sigma = 2e-3;
    const Dataset ds = make_orders(gen_synthetic(sc), Side::sell, 4);
    EnvParams ep;
    ep.horizon = 4;
    ep.action_set = {0.0, 0.25, 0.5, 1.0};
    std::vector<EpisodeContext> contexts;
    for (const auto& o : ds.orders) contexts.push_back(make_context(*ds.find_frame(o), o, ep));

    PolicyConfig pc;
    pc.public_hidden = 3;
    pc.private_hidden = 3;
    pc.inference_width = 4;
    pc.n_actions = ep.action_set.size();
    pc.actor_init_gain = 1.0;
    pc.input_scale = 10.0;
    for (Role role : {Role::student, Role::teacher}) {
        PolicyNet net(pc, role, seed + 1);
        PolicyNet teacher(pc, Role::teacher, seed + 2);
        auto batch = collect(net, contexts, 4, seed, 0);
        if (role == Role::student) label_with_teacher(batch, teacher);
        TrainConfig tc;
        prepare_targets(batch, tc);
        for (auto& e : net.params().entries())
            for (double& w : e.tensor.mutable_values()) w += 0.05 * (2.0 * uniform01(rng) - 1.0);
        std::vector<std::size_t> idx(batch.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        const std::string tag = role == Role::student ? "student" : "teacher";
        auto leaves = policy_leaves(net);
        check_leaves("L_p[" + tag + "]", leaves, [&] { return losses(batch, idx, net, 0.7, 0.0, 0.0).policy_loss; }, report);
        check_leaves("L_v[" + tag + "]", leaves, [&] { return losses(batch, idx, net, 0.7, 1.0, 0.0).value_loss; }, report);
        if (role == Role::student)
            check_leaves("L_d[" + tag + "]", leaves, [&] { return losses(batch, idx, net, 0.7, 0.5, 1.0).distill_loss; },
                         report);
        check_leaves("total[" + tag + "]", leaves,
                     [&] { return losses(batch, idx, net, 0.7, 0.5, role == Role::student ? 1.0 : 0.0).total; }, report);
    }
    return report;
}

}  // namespace execrl
