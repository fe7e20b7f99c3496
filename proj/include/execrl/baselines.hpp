#pragma once

#include "execrl/env.hpp"
#include "execrl/error.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace execrl {

// Fractions of the order per decision step; non-negative, summing to 1.
using Schedule = std::vector<double>;

inline void validate_schedule(const Schedule& s) {
    if (s.empty()) throw UsageError("schedule is empty");
    double total = 0.0;
    for (double x : s) {
        if (!(x >= 0.0 && x <= 1.0)) throw UsageError("schedule entry outside [0, 1]");
        total += x;
    }
    if (std::abs(total - 1.0) > 1e-12) throw UsageError("schedule sums to " + format_double(total) + ", not 1");
}

inline Schedule twap_schedule(int horizon) {
    if (horizon < 1) throw UsageError("twap_schedule: horizon must be >= 1");
    return Schedule(static_cast<std::size_t>(horizon), 1.0 / horizon);
}

// Almgren-Chriss trade list with temporary impact only:
//   n_j = 2 sinh(k/2) cosh(k (T - j + 1/2)) / sinh(k T),  j = 1..T
// evaluated in an overflow-free exponential form, then renormalized.
inline Schedule ac_schedule(int horizon, double kappa) {
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ConfigError("ac_schedule: kappa must be a finite value >= 0");
    if (kappa == 0.0) return twap_schedule(horizon);
    if (horizon < 1) throw UsageError("ac_schedule: horizon must be >= 1");
    const double big_t = horizon;
    const double front = 2.0 * std::sinh(0.5 * kappa) / -std::expm1(-2.0 * kappa * big_t);
    Schedule s(static_cast<std::size_t>(horizon));
    double total = 0.0;
    for (int j = 1; j <= horizon; ++j) {
        // cosh(k(T-j+1/2)) / sinh(kT) = (e^{k(1/2-j)} + e^{-k(2T-j+1/2)}) / (1 - e^{-2kT})
        const double num = std::exp(kappa * (0.5 - j)) + std::exp(-kappa * (2.0 * big_t - j + 0.5));
        total += (s[static_cast<std::size_t>(j - 1)] = front * num);
    }
    for (double& x : s) x /= total;
    return s;
}

// Urgency from model primitives with unit step: cosh(kappa) = 1 + risk_aversion * sigma^2 / (2 eta).
inline double ac_kappa(double risk_aversion, double volatility, double temporary_impact) {
    if (risk_aversion < 0.0 || volatility < 0.0 || !(temporary_impact > 0.0))
        throw ConfigError("ac_kappa: need risk_aversion >= 0, volatility >= 0, temporary_impact > 0");
    return std::acosh(1.0 + risk_aversion * volatility * volatility / (2.0 * temporary_impact));
}

inline Schedule vwap_schedule(const std::vector<double>& profile) {
    Schedule s = profile;
    validate_schedule(s);
    return s;
}

// Proposes schedule[t] at step t, bypassing the discrete action set.
class ScheduleAgent {
public:
    explicit ScheduleAgent(Schedule schedule, std::string name = "schedule")
        : schedule_(std::move(schedule)), name_(std::move(name)) {
        validate_schedule(schedule_);
    }

    void begin(const EpisodeContext& ctx) const {
        if (static_cast<std::size_t>(ctx.horizon) != schedule_.size())
            throw UsageError("ScheduleAgent: schedule length " + std::to_string(schedule_.size()) + " vs horizon " +
                             std::to_string(ctx.horizon));
    }
    double propose(const ExecutionEnv& env) const { return schedule_[static_cast<std::size_t>(env.t())]; }

    const Schedule& schedule() const { return schedule_; }
    const std::string& name() const { return name_; }

private:
    Schedule schedule_;
    std::string name_;
};

inline ScheduleAgent as_policy(const Schedule& schedule, std::string name = "schedule") {
    return ScheduleAgent(schedule, std::move(name));
}

// Mean episode reward of a fixed schedule over contexts.
inline double schedule_mean_reward(const Schedule& schedule, const std::vector<EpisodeContext>& contexts) {
    if (contexts.empty()) throw UsageError("schedule_mean_reward: no contexts");
    double total = 0.0;
    for (const auto& ctx : contexts) {
        ExecutionEnv env(ctx);
        while (!env.done()) total += env.step_proportion(schedule[static_cast<std::size_t>(env.t())]).reward;
    }
    return total / static_cast<double>(contexts.size());
}

inline std::vector<double> default_kappa_grid() { return {0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0}; }

// Grid search for the urgency that maximizes mean training reward; ties keep the smaller kappa.
inline double fit_ac_kappa(const std::vector<EpisodeContext>& train, int horizon,
                           const std::vector<double>& grid = default_kappa_grid()) {
    if (grid.empty()) throw ConfigError("fit_ac_kappa: empty grid");
    double best_kappa = grid.front();
    double best = -std::numeric_limits<double>::infinity();
    for (double kappa : grid) {
        const double r = schedule_mean_reward(ac_schedule(horizon, kappa), train);
        if (r > best) {
            best = r;
            best_kappa = kappa;
        }
    }
    return best_kappa;
}

}  // namespace execrl
