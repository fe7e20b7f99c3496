#pragma once

#include "execrl/env.hpp"
#include "execrl/policy.hpp"

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace execrl {

// What one policy-driven episode produced.
struct EpisodeLog {
    std::vector<std::size_t> actions;
    std::vector<double> proportions;
    std::vector<double> prices;
    std::vector<double> rewards;
    std::vector<double> values;
    Matrix log_probs;     // [len x K] log pi(. | s_t) at decision time
    Matrix private_rows;  // [len x 2]

    std::size_t length() const { return actions.size(); }
};

// Runs one episode per context in lockstep through a single batched network
// evaluation per step. `choose(episode, dist)` picks the action index.
inline std::vector<EpisodeLog> run_policy_episodes(
    const PolicyNet& net, const std::vector<const EpisodeContext*>& contexts,
    const std::function<std::size_t(std::size_t, const ActionDist&)>& choose) {
    const std::size_t n = contexts.size();
    std::vector<EpisodeLog> logs(n);
    if (n == 0) return logs;
    const int horizon = contexts.front()->horizon;
    for (const auto* c : contexts) {
        if (c->horizon != horizon) throw UsageError("run_policy_episodes: mixed horizons");
        if (c->action_set.size() != net.config().n_actions)
            throw DimensionError("run_policy_episodes: action set of size " + std::to_string(c->action_set.size()) +
                                 " vs policy with " + std::to_string(net.config().n_actions) + " actions");
    }

    std::vector<ExecutionEnv> envs;
    envs.reserve(n);
    for (const auto* c : contexts) envs.emplace_back(*c);
    PolicyNet::Runner runner(net, n);
    std::vector<const Matrix*> public_rows(n), private_rows(n);
    for (std::size_t e = 0; e < n; ++e)
        public_rows[e] = net.role() == Role::teacher ? &contexts[e]->full_features : &contexts[e]->history_features;
    if (net.role() == Role::teacher) runner.set_full_public(public_rows);
    // Finished episodes keep a row in the batch; they read this filler.
    const Matrix filler(static_cast<std::size_t>(horizon), kPrivateFeatures);

    const std::size_t k = net.config().n_actions;
    for (int t = 0; t < horizon; ++t) {
        bool any_active = false;
        for (std::size_t e = 0; e < n; ++e) {
            private_rows[e] = envs[e].done() ? &filler : &envs[e].private_history();
            any_active = any_active || !envs[e].done();
        }
        if (!any_active) break;
        auto [logits, values] = runner.step(public_rows, private_rows, static_cast<std::size_t>(t));
        for (std::size_t e = 0; e < n; ++e) {
            if (envs[e].done()) continue;
            const auto row = logits.values().subspan(e * k, k);
            const ActionDist dist = ActionDist::from_logits(row);
            const std::size_t a = choose(e, dist);
            EpisodeLog& log = logs[e];
            double mx = *std::max_element(row.begin(), row.end());
            double s = 0.0;
            for (double x : row) s += std::exp(x - mx);
            const double lse = mx + std::log(s);
            std::vector<double> lp(k);
            for (std::size_t j = 0; j < k; ++j) lp[j] = row[j] - lse;
            log.log_probs.append_row(lp);
            log.private_rows.append_row(envs[e].private_history().row(static_cast<std::size_t>(t)));
            log.values.push_back(values.values()[e]);
            const StepResult r = envs[e].step(a);
            log.actions.push_back(a);
            log.proportions.push_back(r.proportion);
            log.prices.push_back(r.price);
            log.rewards.push_back(r.reward);
        }
    }
    return logs;
}

// Calls body(begin, end) over [0, n) split into `workers` contiguous chunks.
inline void parallel_chunks(std::size_t n, std::size_t workers, const std::function<void(std::size_t, std::size_t)>& body) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers <= 1) {
        if (n > 0) body(0, n);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * n / workers, end = (w + 1) * n / workers;
        pool.emplace_back([&, w, begin, end] {
            try {
                body(begin, end);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace execrl
