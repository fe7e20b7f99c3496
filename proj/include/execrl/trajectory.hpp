#pragma once

#include "execrl/env.hpp"
#include "execrl/error.hpp"
#include "execrl/policy.hpp"
#include "execrl/rollout.hpp"
#include "execrl/util.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace execrl {

// One sampled episode plus everything the update needs.
struct Trajectory {
    const EpisodeContext* context = nullptr;
    EpisodeLog log;
    std::vector<double> value_targets;
    std::vector<double> advantages;
    std::vector<std::size_t> teacher_actions;  // empty unless labeled
    Matrix teacher_probs;                      // [len x K], diagnostics only

    std::size_t length() const { return log.length(); }
    bool labeled() const { return teacher_actions.size() == length() && length() > 0; }

    // State seen by a student before decision t.
    Observation observation(std::size_t t) const {
        return {context->history_features.head(t + 1), log.private_rows.head(t + 1)};
    }
    // State seen by a teacher before decision t.
    PerfectObservation perfect_observation(std::size_t t) const {
        return {context->full_features, log.private_rows.head(t + 1)};
    }
};

inline double total_reward(const Trajectory& tr) {
    double s = 0.0;
    for (double r : tr.log.rewards) s += r;
    return s;
}

// Samples n_episodes on-policy episodes. Episode e of `iteration` draws its
// context and its actions from an RNG keyed by (seed, iteration, e), so the
// result does not depend on how episodes are split across workers.
inline std::vector<Trajectory> collect(const PolicyNet& snapshot, const std::vector<EpisodeContext>& pool,
                                       std::size_t n_episodes, std::uint64_t seed, std::uint64_t iteration = 0,
                                       std::size_t workers = 1) {
    if (n_episodes == 0) return {};
    if (pool.empty()) throw UsageError("collect: empty context pool");
    std::vector<Trajectory> out(n_episodes);
    parallel_chunks(n_episodes, workers, [&](std::size_t begin, std::size_t end) {
        std::vector<std::mt19937_64> rngs;
        std::vector<const EpisodeContext*> ctxs;
        for (std::size_t e = begin; e < end; ++e) {
            rngs.push_back(make_rng(seed, {iteration, e}));
            const auto pick = static_cast<std::size_t>(uniform01(rngs.back()) * static_cast<double>(pool.size()));
            ctxs.push_back(&pool[std::min(pick, pool.size() - 1)]);
        }
        auto logs = run_policy_episodes(snapshot, ctxs,
                                        [&](std::size_t i, const ActionDist& d) { return sample(d, rngs[i]); });
        for (std::size_t i = 0; i < logs.size(); ++i) {
            out[begin + i].context = ctxs[i];
            out[begin + i].log = std::move(logs[i]);
        }
    });
    return out;
}

enum class ReturnsMode { standard, horizon_exponent };

inline std::string to_string(ReturnsMode m) { return m == ReturnsMode::standard ? "standard" : "horizon_exponent"; }

inline ReturnsMode parse_returns_mode(std::string_view s) {
    if (s == "standard") return ReturnsMode::standard;
    if (s == "horizon_exponent") return ReturnsMode::horizon_exponent;
    throw ConfigError("unknown returns mode '" + std::string(s) + "'");
}

// Value targets. standard: V_t = sum_{t'>=t} gamma^{t'-t} R_{t'}.
// horizon_exponent: V_t = sum_{t'>=t} gamma^{T-t'-1} R_{t'} with T the horizon.
inline std::vector<double> compute_returns(const std::vector<double>& rewards, double gamma, ReturnsMode mode,
                                           int horizon) {
    const std::size_t n = rewards.size();
    std::vector<double> v(n, 0.0);
    if (mode == ReturnsMode::standard) {
        double acc = 0.0;
        for (std::size_t i = n; i-- > 0;) v[i] = acc = rewards[i] + gamma * acc;
        return v;
    }
    double acc = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        acc += std::pow(gamma, static_cast<double>(horizon - static_cast<int>(i) - 1)) * rewards[i];
        v[i] = acc;
    }
    return v;
}

// One-step TD residual with a zero terminal value.
inline std::vector<double> advantage(const std::vector<double>& rewards, const std::vector<double>& values, double gamma) {
    if (rewards.size() != values.size()) throw UsageError("advantage: rewards and values differ in length");
    std::vector<double> a(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        const double next = i + 1 < values.size() ? values[i + 1] : 0.0;
        a[i] = rewards[i] + gamma * next - values[i];
    }
    return a;
}

// Rescales advantages across the whole batch to zero mean and unit variance.
inline void normalize_advantages(std::vector<Trajectory>& batch) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& tr : batch)
        for (double a : tr.advantages) {
            sum += a;
            ++n;
        }
    if (n < 2) return;
    const double mean = sum / static_cast<double>(n);
    for (const auto& tr : batch)
        for (double a : tr.advantages) sq += (a - mean) * (a - mean);
    const double sd = std::sqrt(sq / static_cast<double>(n));
    for (auto& tr : batch)
        for (double& a : tr.advantages) a = (a - mean) / (sd + 1e-8);
}

}  // namespace execrl
