#include "execrl/ppo.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>

using namespace execrl;

namespace {

struct Fixture {
    Dataset ds;
    Splits splits;
    std::vector<EpisodeContext> train, valid;

    explicit Fixture(Regime regime = Regime::ar_predictable, int horizon = 4) {
        SyntheticConfig sc;
        sc.regime = regime;
        sc.n_instruments = 2;
        sc.n_days = 10;
        sc.bars_per_day = 20;
        sc.seed = 5;
        ds = make_orders(gen_synthetic(sc), Side::sell, horizon);
        splits = split_by_fractions(ds, 0.6, 0.2);
        EnvParams p;
        p.horizon = horizon;
        train = build_contexts(splits.train, p);
        valid = build_contexts(splits.valid, p);
    }
};

PolicyConfig small_policy() {
    PolicyConfig c;
    c.public_hidden = 4;
    c.private_hidden = 3;
    c.inference_width = 5;
    return c;
}

TrainConfig small_train(std::size_t steps = 200) {
    TrainConfig c;
    c.total_steps = steps;
    c.episodes_per_iteration = 12;
    c.minibatch_steps = 16;
    c.epochs = 2;
    c.lr = 1e-3;
    c.seed = 3;
    return c;
}

bool same_log(const EpisodeLog& a, const EpisodeLog& b) {
    return a.actions == b.actions && a.proportions == b.proportions && a.rewards == b.rewards && a.values == b.values &&
           a.log_probs == b.log_probs && a.private_rows == b.private_rows;
}

}  // namespace

TEST(Collect, ZeroEpisodesIsEmpty) {
    Fixture fx;
    const PolicyNet net(small_policy(), Role::student, 1);
    EXPECT_TRUE(collect(net, fx.train, 0, 1).empty());
    EXPECT_TRUE(collect(net, {}, 0, 1).empty());
}

TEST(Collect, EmptyPoolIsUsageError) {
    const PolicyNet net(small_policy(), Role::student, 1);
    EXPECT_THROW(collect(net, {}, 3, 1), UsageError);
}

TEST(Collect, WorkerCountDoesNotChangeTrajectories) {
    Fixture fx;
    for (Role role : {Role::student, Role::teacher}) {
        const PolicyNet net(small_policy(), role, 1);
        const auto a = collect(net, fx.train, 25, 9, 2, 1);
        const auto b = collect(net, fx.train, 25, 9, 2, 4);
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_EQ(a[i].context, b[i].context);
            EXPECT_TRUE(same_log(a[i].log, b[i].log)) << i;
        }
    }
}

TEST(Collect, TrajectoriesAreFulfilledAndConsistent) {
    Fixture fx;
    const PolicyNet net(small_policy(), Role::student, 2);
    for (const auto& tr : collect(net, fx.train, 40, 4)) {
        const std::size_t n = tr.length();
        EXPECT_EQ(tr.log.proportions.size(), n);
        EXPECT_EQ(tr.log.rewards.size(), n);
        EXPECT_EQ(tr.log.values.size(), n);
        EXPECT_EQ(tr.log.log_probs.rows, n);
        EXPECT_EQ(tr.log.private_rows.rows, n);
        double s = 0.0;
        for (double a : tr.log.proportions) s += a;
        EXPECT_NEAR(s, 1.0, 1e-12);
        for (double r : tr.log.rewards) EXPECT_TRUE(std::isfinite(r));
    }
}

TEST(Returns, HandExamples) {
    const double r = 0.37;
    const std::vector<double> rewards{0.0, 0.0, r};
    EXPECT_NEAR(compute_returns(rewards, 0.9, ReturnsMode::standard, 3)[0], 0.81 * r, 1e-15);
    EXPECT_NEAR(compute_returns(rewards, 0.9, ReturnsMode::horizon_exponent, 3)[0], r, 1e-15);
}

TEST(Returns, GammaOneCollapsesToSuffixSums) {
    const std::vector<double> rewards{0.1, -0.2, 0.4, 0.05};
    const auto a = compute_returns(rewards, 1.0, ReturnsMode::standard, 4);
    const auto b = compute_returns(rewards, 1.0, ReturnsMode::horizon_exponent, 4);
    for (std::size_t t = 0; t < rewards.size(); ++t) {
        double suffix = 0.0;
        for (std::size_t u = t; u < rewards.size(); ++u) suffix += rewards[u];
        EXPECT_NEAR(a[t], suffix, 1e-15);
        EXPECT_NEAR(b[t], suffix, 1e-15);
    }
}

TEST(Returns, StandardModeMatchesDirectSum) {
    const std::vector<double> rewards{0.3, -0.1, 0.25, 0.4, -0.05};
    const double g = 0.8;
    const auto v = compute_returns(rewards, g, ReturnsMode::standard, 5);
    const auto w = compute_returns(rewards, g, ReturnsMode::horizon_exponent, 5);
    for (std::size_t t = 0; t < rewards.size(); ++t) {
        double s = 0.0, p = 0.0;
        for (std::size_t u = t; u < rewards.size(); ++u) {
            s += std::pow(g, static_cast<double>(u - t)) * rewards[u];
            p += std::pow(g, static_cast<double>(5 - u - 1)) * rewards[u];
        }
        EXPECT_NEAR(v[t], s, 1e-14);
        EXPECT_NEAR(w[t], p, 1e-14);
    }
}

TEST(Advantage, HandExamples) {
    EXPECT_NEAR(advantage({1.0, 0.0}, {2.0, 3.0}, 0.9)[0], 1.7, 1e-15);
    EXPECT_DOUBLE_EQ(advantage({1.0, 0.5}, {2.0, 3.0}, 0.9)[1], 0.5 - 3.0);
    const std::vector<double> rewards{0.2, -0.4, 0.1};
    EXPECT_EQ(advantage(rewards, {0.0, 0.0, 0.0}, 0.7), rewards);
    EXPECT_THROW(advantage({1.0}, {1.0, 2.0}, 1.0), UsageError);
}

TEST(Advantage, NormalizationGivesZeroMeanUnitVariance) {
    Fixture fx;
    const PolicyNet net(small_policy(), Role::student, 2);
    auto batch = collect(net, fx.train, 20, 1);
    TrainConfig cfg;
    cfg.normalize_advantages = true;
    prepare_targets(batch, cfg);
    double s = 0.0, sq = 0.0, n = 0.0;
    for (const auto& tr : batch)
        for (double a : tr.advantages) {
            s += a;
            sq += a * a;
            ++n;
        }
    EXPECT_NEAR(s / n, 0.0, 1e-12);
    EXPECT_NEAR(sq / n, 1.0, 1e-6);
}

TEST(Losses, UnchangedPolicyGivesIdentity) {
    Fixture fx;
    for (Role role : {Role::student, Role::teacher}) {
        const PolicyNet net(small_policy(), role, 3);
        auto batch = collect(net, fx.train, 16, 2);
        prepare_targets(batch, TrainConfig{});
        std::vector<std::size_t> idx(batch.size());
        std::iota(idx.begin(), idx.end(), 0);
        const auto terms = losses(batch, idx, net, 1.7, 0.5, 0.0);
        EXPECT_LT(std::abs(terms.loss_p + terms.mean_advantage), 1e-10);
        EXPECT_LT(std::abs(terms.mean_kl), 1e-12);
    }
}

TEST(Losses, PerfectCriticHasZeroValueLoss) {
    Fixture fx;
    const PolicyNet net(small_policy(), Role::student, 3);
    auto batch = collect(net, fx.train, 8, 2);
    prepare_targets(batch, TrainConfig{});
    for (auto& tr : batch) tr.value_targets = tr.log.values;
    std::vector<std::size_t> idx(batch.size());
    std::iota(idx.begin(), idx.end(), 0);
    EXPECT_LT(losses(batch, idx, net, 1.0, 0.5, 0.0).loss_v, 1e-24);
}

TEST(Losses, ZeroDistillWeightTotalIsPolicyPlusValue) {
    Fixture fx;
    const PolicyNet net(small_policy(), Role::student, 3);
    const PolicyNet teacher(small_policy(), Role::teacher, 4);
    auto batch = collect(net, fx.train, 8, 2);
    prepare_targets(batch, TrainConfig{});
    std::vector<std::size_t> idx(batch.size());
    std::iota(idx.begin(), idx.end(), 0);
    const auto unlabeled = losses(batch, idx, net, 1.0, 0.5, 0.0);
    EXPECT_EQ(unlabeled.total.item(), unlabeled.loss_p + 0.5 * unlabeled.loss_v);
    EXPECT_TRUE(std::isnan(unlabeled.loss_d));
    label_with_teacher(batch, teacher);
    const auto labeled = losses(batch, idx, net, 1.0, 0.5, 0.0);
    EXPECT_EQ(labeled.total.item(), unlabeled.total.item());
    EXPECT_TRUE(std::isfinite(labeled.loss_d));
    const auto distilled = losses(batch, idx, net, 1.0, 0.5, 2.0);
    EXPECT_NEAR(distilled.total.item(), distilled.loss_p + 0.5 * distilled.loss_v + 2.0 * distilled.loss_d, 1e-14);
}

TEST(Losses, MissingLabelsWithDistillationIsUsageError) {
    Fixture fx;
    const PolicyNet net(small_policy(), Role::student, 3);
    auto batch = collect(net, fx.train, 4, 2);
    prepare_targets(batch, TrainConfig{});
    EXPECT_THROW(losses(batch, {0, 1}, net, 1.0, 0.5, 1.0), UsageError);
}

TEST(Beta, AdaptationRule) {
    EXPECT_EQ(adapt_beta(0.01, 1.0, 0.01, 2.0), 1.0);
    EXPECT_EQ(adapt_beta(0.02, 1.0, 0.01, 2.0), 2.0);
    EXPECT_EQ(adapt_beta(0.01 / 3.0, 1.0, 0.01, 2.0), 0.5);
    EXPECT_EQ(adapt_beta(0.015, 1.0, 0.01, 2.0), 1.0);
}

TEST(Beta, ClampedToRange) {
    const auto high = adapt_beta_checked(1.0, kBetaMax, 0.01, 2.0);
    EXPECT_EQ(high.beta, kBetaMax);
    EXPECT_TRUE(high.clamped);
    const auto low = adapt_beta_checked(0.0, kBetaMin, 0.01, 2.0);
    EXPECT_EQ(low.beta, kBetaMin);
    EXPECT_TRUE(low.clamped);
    EXPECT_FALSE(adapt_beta_checked(0.0, 1.0, 0.01, 2.0).clamped);
}

TEST(Beta, StaysInRangeOverLongSequences) {
    double beta = 1.0;
    for (int i = 0; i < 200; ++i) {
        beta = adapt_beta(i < 100 ? 10.0 : 0.0, beta, 0.01);
        EXPECT_GE(beta, kBetaMin);
        EXPECT_LE(beta, kBetaMax);
    }
}

TEST(Minibatches, WholeEpisodesCoverBatchOnce) {
    Fixture fx;
    const PolicyNet net(small_policy(), Role::student, 3);
    const auto batch = collect(net, fx.train, 30, 2);
    auto rng = make_rng(1, {2});
    const auto mbs = make_minibatches(batch, 16, rng);
    std::vector<std::size_t> seen;
    for (std::size_t m = 0; m < mbs.size(); ++m) {
        std::size_t steps = 0;
        for (std::size_t e : mbs[m]) {
            seen.push_back(e);
            steps += batch[e].length();
        }
        if (m + 1 < mbs.size()) {
            EXPECT_GE(steps, 16u);
        }
    }
    std::sort(seen.begin(), seen.end());
    std::vector<std::size_t> all(batch.size());
    std::iota(all.begin(), all.end(), 0);
    EXPECT_EQ(seen, all);
}

TEST(Config, ValidationRejectsBadValues) {
    auto bad = [](auto mutate) {
        TrainConfig c;
        mutate(c);
        return c;
    };
    EXPECT_THROW(bad([](TrainConfig& c) { c.gamma = 0.0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.gamma = 1.5; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.value_weight = -1.0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.distill_weight = -1.0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.beta_init = 0.0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.kl_target = 0.0; }).validate(), ConfigError);
    EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(Train, ZeroStepsReturnsInitialNetwork) {
    Fixture fx;
    const PolicyNet net(small_policy(), Role::teacher, 1);
    TrainInputs in;
    in.train = &fx.train;
    in.valid = &fx.valid;
    const auto r = train(small_train(0), initial_state(net, small_train(0)), in);
    EXPECT_TRUE(r.state.curve.empty());
    EXPECT_TRUE(r.state.best.params().same_values(net.params()));
    EXPECT_TRUE(r.state.current.params().same_values(net.params()));
}

TEST(Train, DeterministicAndIdentityHolds) {
    Fixture fx;
    TrainInputs in;
    in.train = &fx.train;
    in.valid = &fx.valid;
    const auto cfg = small_train(300);
    const PolicyNet net(small_policy(), Role::teacher, 1);
    const auto a = train(cfg, initial_state(net, cfg), in);
    const auto b = train(cfg, initial_state(net, cfg), in);
    EXPECT_EQ(curve_csv(a.state.curve), curve_csv(b.state.curve));
    EXPECT_TRUE(a.state.current.params().same_values(b.state.current.params()));
    EXPECT_GE(a.identity_checks, a.state.curve.size());
    EXPECT_LT(a.max_identity_residual, 1e-10);
    EXPECT_FALSE(a.state.current.params().same_values(net.params()));
    EXPECT_GE(a.state.steps, cfg.total_steps);
}

TEST(Train, WorkerCountDoesNotChangeResult) {
    Fixture fx;
    TrainInputs in;
    in.train = &fx.train;
    in.valid = &fx.valid;
    auto cfg = small_train(150);
    const PolicyNet net(small_policy(), Role::student, 1);
    cfg.distill_weight = 0.0;
    const auto a = train(cfg, initial_state(net, cfg), in);
    cfg.workers = 3;
    const auto b = train(cfg, initial_state(net, cfg), in);
    EXPECT_EQ(curve_csv(a.state.curve), curve_csv(b.state.curve));
    EXPECT_TRUE(a.state.best.params().same_values(b.state.best.params()));
}

TEST(Train, StudentWithoutTeacherIsConfigError) {
    Fixture fx;
    TrainInputs in;
    in.train = &fx.train;
    const PolicyNet net(small_policy(), Role::student, 1);
    const auto cfg = small_train(50);
    EXPECT_THROW(train(cfg, initial_state(net, cfg), in), ConfigError);
    const PolicyNet not_teacher(small_policy(), Role::student, 2);
    in.teacher = &not_teacher;
    EXPECT_THROW(train(cfg, initial_state(net, cfg), in), ConfigError);
}

TEST(Train, ZeroDistillWeightIgnoresTeacher) {
    Fixture fx;
    const PolicyNet teacher(small_policy(), Role::teacher, 7);
    const PolicyNet net(small_policy(), Role::student, 1);
    auto cfg = small_train(150);
    cfg.distill_weight = 0.0;
    TrainInputs in;
    in.train = &fx.train;
    in.valid = &fx.valid;
    const auto plain = train(cfg, initial_state(net, cfg), in);
    in.teacher = &teacher;
    const auto with_teacher = train(cfg, initial_state(net, cfg), in);
    EXPECT_EQ(curve_csv(plain.state.curve), curve_csv(with_teacher.state.curve));
    EXPECT_TRUE(plain.state.current.params().same_values(with_teacher.state.current.params()));
}

TEST(Train, TeacherNeverUsesDistillWeight) {
    Fixture fx;
    const PolicyNet net(small_policy(), Role::teacher, 1);
    auto cfg = small_train(150);
    TrainInputs in;
    in.train = &fx.train;
    cfg.distill_weight = 0.0;
    const auto a = train(cfg, initial_state(net, cfg), in);
    cfg.distill_weight = 5.0;
    const auto b = train(cfg, initial_state(net, cfg), in);
    EXPECT_TRUE(a.state.current.params().same_values(b.state.current.params()));
}

TEST(Train, BestCheckpointTracksBestValidation) {
    Fixture fx(Regime::sinusoid);
    TrainInputs in;
    in.train = &fx.train;
    in.valid = &fx.valid;
    const auto cfg = small_train(600);
    const PolicyNet net(small_policy(), Role::teacher, 2);
    const auto r = train(cfg, initial_state(net, cfg), in);
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> running;
    for (const auto& row : r.state.curve) {
        if (!std::isnan(row.valid_pa)) best = std::max(best, row.valid_pa);
        running.push_back(best);
    }
    EXPECT_TRUE(std::is_sorted(running.begin(), running.end()));
    EXPECT_EQ(r.state.best_valid_pa, best);
    EXPECT_EQ(validate_policy(r.state.best, fx.valid, 1).second, best);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
    Fixture fx;
    TrainInputs in;
    in.train = &fx.train;
    in.valid = &fx.valid;
    const auto cfg = small_train(300);
    const PolicyNet net(small_policy(), Role::teacher, 1);
    const auto full = train(cfg, initial_state(net, cfg), in);
    auto half_cfg = cfg;
    half_cfg.total_steps = 120;
    auto half = train(half_cfg, initial_state(net, cfg), in);
    // Round-trip the state through its serialized form.
    TrainState restored{half.state.current, half.state.best, 0, 0, 0.0, 0.0, 0, {}};
    restored.restore_meta(half.state.meta());
    const auto rest = train(cfg, std::move(restored), in);
    EXPECT_EQ(curve_csv(full.state.curve), curve_csv(rest.state.curve));
    EXPECT_TRUE(full.state.current.params().same_values(rest.state.current.params()));
}

TEST(Curve, RowsRoundTrip) {
    CurveRow r;
    r.iteration = 3;
    r.steps = 120;
    r.train_reward = 0.125;
    r.valid_pa = -1.5;
    r.beta = 0.25;
    const auto back = parse_curve_row(r.csv());
    EXPECT_EQ(back.csv(), r.csv());
    EXPECT_EQ(std::string(kCurveHeader), "iteration,steps,train_reward,valid_reward,valid_pa,mean_kl,beta,loss_p,loss_v,loss_d");
}
