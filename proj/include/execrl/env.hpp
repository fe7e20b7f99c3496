#pragma once

#include "execrl/error.hpp"
#include "execrl/market_data.hpp"
#include "execrl/matrix.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <vector>

namespace execrl {

inline constexpr std::size_t kPublicFeatures = 6;   // open, high, low, close, avg_price, volume
inline constexpr std::size_t kPrivateFeatures = 2;  // elapsed ratio, remaining inventory ratio

// Remaining inventory at or below this is treated as fulfilled.
inline constexpr double kFulfillTolerance = 1e-12;

inline std::vector<double> default_action_set() { return {0.0, 0.05, 0.10, 0.25, 0.50, 1.00}; }

// Sorted, deduplicated, and checked to lie in [0, 1] and contain 0.
inline std::vector<double> normalize_action_set(std::vector<double> actions) {
    std::sort(actions.begin(), actions.end());
    actions.erase(std::unique(actions.begin(), actions.end()), actions.end());
    if (actions.empty() || actions.front() != 0.0) throw ConfigError("action_set must contain 0");
    if (actions.back() > 1.0) throw ConfigError("action_set proportions must lie in [0, 1]");
    return actions;
}

struct EnvParams {
    int horizon = 8;
    double alpha = 0.01;
    double gamma = 1.0;
    std::vector<double> action_set = default_action_set();
};

// Everything fixed for one episode: the replayed day, the order, and the
// derived window prices and features.
struct EpisodeContext {
    const DayFrame* frame = nullptr;
    Order order;
    int horizon = 0;
    double alpha = 0.0;
    double gamma = 1.0;
    std::vector<double> action_set;
    std::vector<WindowBar> windows;  // horizon + 1 windows
    double p_tilde = 0.0;            // mean execution price over windows 1..horizon
    Matrix history_features;         // row i normalized with information up to window i only
    Matrix full_features;            // whole day, volume normalized by the full-day mean

    // Price the decision at `step` executes at.
    double execution_price(int step) const { return windows[static_cast<std::size_t>(step) + 1].price; }
    std::size_t n_windows() const { return windows.size(); }
};

inline std::array<double, kPublicFeatures> window_features(const WindowBar& w, double anchor, double volume_mean) {
    return {w.open / anchor - 1.0,  w.high / anchor - 1.0,  w.low / anchor - 1.0,
            w.close / anchor - 1.0, w.price / anchor - 1.0,
            volume_mean > 0.0 ? w.volume / volume_mean - 1.0 : 0.0};
}

inline EpisodeContext make_context(const DayFrame& frame, const Order& order, const EnvParams& params) {
    if (order.horizon != params.horizon)
        throw UsageError("make_context: order horizon " + std::to_string(order.horizon) + " != env horizon " +
                         std::to_string(params.horizon));
    if (params.horizon < 2) throw UsageError("make_context: horizon must be >= 2");
    if (params.alpha < 0.0) throw ConfigError("alpha must be >= 0");
    if (!(params.gamma > 0.0 && params.gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
    if (frame.instrument != order.instrument || frame.date != order.date)
        throw UsageError("make_context: frame does not match order " + order.id());

    EpisodeContext ctx;
    ctx.frame = &frame;
    ctx.order = order;
    ctx.horizon = params.horizon;
    ctx.alpha = params.alpha;
    ctx.gamma = params.gamma;
    ctx.action_set = normalize_action_set(params.action_set);
    ctx.windows = decision_windows(frame, params.horizon);

    double sum = 0.0;
    for (int t = 0; t < ctx.horizon; ++t) sum += ctx.execution_price(t);
    ctx.p_tilde = sum / ctx.horizon;

    const double anchor = ctx.windows.front().open;
    double full_volume = 0.0;
    for (const auto& w : ctx.windows) full_volume += w.volume;
    const double full_mean = full_volume / static_cast<double>(ctx.windows.size());

    ctx.history_features = Matrix(ctx.windows.size(), kPublicFeatures);
    ctx.full_features = Matrix(ctx.windows.size(), kPublicFeatures);
    double running_volume = 0.0;
    for (std::size_t i = 0; i < ctx.windows.size(); ++i) {
        running_volume += ctx.windows[i].volume;
        const auto hist = window_features(ctx.windows[i], anchor, running_volume / static_cast<double>(i + 1));
        const auto full = window_features(ctx.windows[i], anchor, full_mean);
        std::copy(hist.begin(), hist.end(), ctx.history_features.row(i).begin());
        std::copy(full.begin(), full.end(), ctx.full_features.row(i).begin());
    }
    return ctx;
}

// History-only state: public features of windows 0..t plus private variables.
struct Observation {
    Matrix public_history;   // [t+1 x 6]
    Matrix private_history;  // [t+1 x 2]
};

// Oracle state: the whole day's public features plus private variables.
struct PerfectObservation {
    Matrix public_full;      // [T+1 x 6]
    Matrix private_history;  // [t+1 x 2]
};

struct StepResult {
    Observation observation;
    PerfectObservation perfect;
    double reward = 0.0;
    bool done = false;
    double proportion = 0.0;  // executed a_t
    double shares = 0.0;      // q_{t+1}
    double price = 0.0;       // p_{t+1}
};

// Per-step reward: signed price advantage of the executed slice minus the
// quadratic impact penalty.
inline double step_reward(double proportion, double price, double p_tilde, double alpha, Side side) {
    const double advantage = side == Side::sell ? price / p_tilde - 1.0 : 1.0 - price / p_tilde;
    return advantage * proportion - alpha * proportion * proportion;
}

class ExecutionEnv {
public:
    explicit ExecutionEnv(const EpisodeContext& ctx) : ctx_(&ctx) { reset(); }

    std::pair<Observation, PerfectObservation> reset() {
        t_ = 0;
        remaining_ = 1.0;
        done_ = false;
        executed_.clear();
        prices_.clear();
        private_rows_ = Matrix();
        append_private_row();
        return {observation(), perfect_observation()};
    }

    StepResult step(std::size_t action_index) {
        if (action_index >= ctx_->action_set.size())
            throw UsageError("step: action index " + std::to_string(action_index) + " out of range");
        return step_proportion(ctx_->action_set[action_index]);
    }

    // Proposes a raw proportion of the order. The cap keeps the cumulative
    // proportion at or below 1 and the final step sells whatever is left.
    StepResult step_proportion(double proposed) {
        if (done_) throw UsageError("step called on a finished episode");
        if (!(proposed >= 0.0)) throw UsageError("step: proposed proportion must be >= 0");
        double executed = std::min(proposed, remaining_);
        if (t_ == ctx_->horizon - 1) executed = std::max(remaining_, executed);
        if (remaining_ - executed <= kFulfillTolerance) executed = remaining_;
        const double price = ctx_->execution_price(t_);

        StepResult r;
        r.proportion = executed;
        r.shares = executed * ctx_->order.quantity;
        r.price = price;
        r.reward = step_reward(executed, price, ctx_->p_tilde, ctx_->alpha, ctx_->order.side);

        executed_.push_back(executed);
        prices_.push_back(price);
        if (executed == remaining_)
            remaining_ = 0.0;
        else
            remaining_ -= executed;
        ++t_;
        done_ = remaining_ == 0.0 || t_ == ctx_->horizon;
        if (!done_) append_private_row();
        r.done = done_;
        r.observation = observation();
        r.perfect = perfect_observation();
        return r;
    }

    Observation observation() const {
        return {ctx_->history_features.head(visible_rows()), private_rows_};
    }
    PerfectObservation perfect_observation() const { return {ctx_->full_features, private_rows_}; }

    int t() const { return t_; }
    bool done() const { return done_; }
    double remaining() const { return remaining_; }
    const EpisodeContext& context() const { return *ctx_; }
    const std::vector<double>& executed() const { return executed_; }
    const std::vector<double>& prices() const { return prices_; }
    const Matrix& private_history() const { return private_rows_; }

private:
    std::size_t visible_rows() const { return private_rows_.rows; }

    void append_private_row() {
        const double row[kPrivateFeatures] = {static_cast<double>(t_) / ctx_->horizon, remaining_};
        private_rows_.append_row(row);
    }

    const EpisodeContext* ctx_;
    int t_ = 0;
    double remaining_ = 1.0;
    bool done_ = false;
    std::vector<double> executed_;
    std::vector<double> prices_;
    Matrix private_rows_;
};

struct EpisodeMetrics {
    double aep = 0.0;     // average execution price
    double pa_bps = 0.0;  // price advantage in basis points
    double total_reward = 0.0;
};

inline EpisodeMetrics episode_metrics(std::span<const double> proportions, std::span<const double> prices,
                                      double p_tilde, double alpha, Side side) {
    if (proportions.size() != prices.size()) throw UsageError("episode_metrics: length mismatch");
    double total = 0.0;
    EpisodeMetrics m;
    for (std::size_t i = 0; i < proportions.size(); ++i) {
        total += proportions[i];
        m.aep += proportions[i] * prices[i];
        m.total_reward += step_reward(proportions[i], prices[i], p_tilde, alpha, side);
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw IntegrityError("episode_metrics: unfulfilled episode (executed " + format_double(total) + ")");
    m.pa_bps = side == Side::sell ? 1e4 * (m.aep / p_tilde - 1.0) : 1e4 * (1.0 - m.aep / p_tilde);
    return m;
}

}  // namespace execrl
