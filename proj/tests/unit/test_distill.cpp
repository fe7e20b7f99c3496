#include "execrl/distill.hpp"
#include "execrl/gradcheck.hpp"
#include "execrl/ppo.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace execrl;

namespace {

struct Fixture {
    Dataset ds;
    Splits splits;
    std::vector<EpisodeContext> train, valid;

    Fixture() {
        SyntheticConfig sc;
        sc.regime = Regime::ar_predictable;
        sc.n_instruments = 2;
        sc.n_days = 12;
        sc.bars_per_day = 20;
        sc.seed = 8;
        ds = make_orders(gen_synthetic(sc), Side::sell, 4);
        splits = split_by_fractions(ds, 0.6, 0.2);
        EnvParams p;
        p.horizon = 4;
        train = build_contexts(splits.train, p);
        valid = build_contexts(splits.valid, p);
    }
};

PolicyConfig small_policy(double actor_gain = 0.01) {
    PolicyConfig c;
    c.public_hidden = 4;
    c.private_hidden = 3;
    c.inference_width = 5;
    c.actor_init_gain = actor_gain;
    return c;
}

}  // namespace

TEST(Labels, DeterministicAndFromPerfectObservation) {
    Fixture fx;
    const PolicyNet student(small_policy(), Role::student, 1);
    const PolicyNet teacher(small_policy(3.0), Role::teacher, 2);
    auto a = collect(student, fx.train, 10, 4);
    auto b = a;
    label_with_teacher(a, teacher);
    label_with_teacher(b, teacher, 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_TRUE(a[i].labeled());
        EXPECT_EQ(a[i].teacher_actions, b[i].teacher_actions);
        for (std::size_t t = 0; t < a[i].length(); ++t) {
            const auto out = teacher.forward(a[i].perfect_observation(t));
            EXPECT_EQ(a[i].teacher_actions[t], act_greedy(out.dist));
        }
    }
}

TEST(Labels, DegenerateTeacherGivesIndexZero) {
    Fixture fx;
    PolicyNet teacher(small_policy(), Role::teacher, 2);
    for (double& w : teacher.params().get("actor.kernel").mutable_values()) w = 0.0;
    auto bias = teacher.params().get("actor.bias").mutable_values();
    for (std::size_t j = 0; j < bias.size(); ++j) bias[j] = j == 0 ? 50.0 : -50.0;
    const PolicyNet student(small_policy(), Role::student, 1);
    auto batch = collect(student, fx.train, 10, 4);
    label_with_teacher(batch, teacher);
    for (const auto& tr : batch)
        for (std::size_t a : tr.teacher_actions) EXPECT_EQ(a, 0u);
}

TEST(Labels, StudentCheckpointIsConfigError) {
    Fixture fx;
    const PolicyNet student(small_policy(), Role::student, 1);
    auto batch = collect(student, fx.train, 2, 4);
    EXPECT_THROW(label_with_teacher(batch, student), ConfigError);
}

TEST(Labels, FuturePerturbationChangesLabelsButNotStudentState) {
    Fixture fx;
    const PolicyNet student(small_policy(), Role::student, 1);
    const PolicyNet teacher(small_policy(3.0), Role::teacher, 2);
    auto batch = collect(student, fx.train, 20, 4);
    label_with_teacher(batch, teacher);
    std::size_t changed = 0;
    for (auto& tr : batch) {
        EpisodeContext shifted = *tr.context;
        // Reverse the order of the execution windows in the full-day matrix.
        for (std::size_t i = 1; i < shifted.full_features.rows; ++i)
            for (std::size_t j = 0; j < kPublicFeatures; ++j)
                shifted.full_features(i, j) = tr.context->full_features(shifted.full_features.rows - i, j);
        Trajectory copy = tr;
        copy.context = &shifted;
        const auto before = copy.observation(0);
        std::vector<Trajectory> one{copy};
        label_with_teacher(one, teacher);
        changed += one[0].teacher_actions != tr.teacher_actions;
        EXPECT_EQ(one[0].observation(0).public_history, before.public_history);
        EXPECT_EQ(one[0].log.private_rows, tr.log.private_rows);
    }
    EXPECT_GT(changed, 0u);
}

TEST(Loss, UniformStudentGivesLogK) {
    const auto logits = nn::Tensor(7, 5, 0.3);
    EXPECT_NEAR(distill_loss(logits, {0, 1, 2, 3, 4, 4, 0}).item(), std::log(5.0), 1e-14);
}

TEST(Loss, PerfectMatchGivesZero) {
    std::vector<double> v(3 * 4, -1e3);
    const std::vector<std::size_t> labels{2, 0, 3};
    for (std::size_t i = 0; i < 3; ++i) v[i * 4 + labels[i]] = 1e3;
    EXPECT_EQ(distill_loss(nn::Tensor::from(3, 4, v), labels).item(), 0.0);
}

TEST(Loss, LabelCountMismatchIsUsageError) {
    EXPECT_THROW(distill_loss(nn::Tensor(3, 4), {0, 1}), UsageError);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
    Fixture fx;
    PolicyNet student(small_policy(1.0), Role::student, 1);
    const PolicyNet teacher(small_policy(3.0), Role::teacher, 2);
    auto batch = collect(student, fx.train, 4, 4);
    label_with_teacher(batch, teacher);
    SequenceInput in;
    std::vector<std::size_t> labels;
    for (const auto& tr : batch) {
        in.public_rows.push_back(&tr.context->history_features);
        in.private_rows.push_back(&tr.log.private_rows);
        in.lengths.push_back(tr.length());
        labels.insert(labels.end(), tr.teacher_actions.begin(), tr.teacher_actions.end());
    }
    std::vector<std::pair<std::string, nn::Tensor>> leaves;
    for (const auto& e : student.params().entries()) leaves.emplace_back(e.name, e.tensor);
    GradCheckReport report;
    check_leaves("L_d", leaves, [&] { return distill_loss(student.forward_sequences(in).logits, labels); }, report);
    EXPECT_TRUE(report.passed()) << report.max_error();
}

TEST(Training, TeacherIsNotModified) {
    Fixture fx;
    const PolicyNet teacher(small_policy(3.0), Role::teacher, 2);
    const PolicyNet frozen = teacher;
    TrainConfig cfg;
    cfg.total_steps = 120;
    cfg.episodes_per_iteration = 10;
    cfg.minibatch_steps = 16;
    cfg.epochs = 2;
    TrainInputs in;
    in.train = &fx.train;
    in.teacher = &teacher;
    const PolicyNet student(small_policy(), Role::student, 1);
    const auto r = train(cfg, initial_state(student, cfg), in);
    EXPECT_TRUE(teacher.params().same_values(frozen.params()));
    for (const auto& e : teacher.params().entries())
        for (double g : e.tensor.grad()) EXPECT_EQ(g, 0.0);
    EXPECT_FALSE(std::isnan(r.state.curve.back().loss_d));
}

TEST(Training, LargeDistillWeightRaisesAgreement) {
    Fixture fx;
    const PolicyNet teacher(small_policy(3.0), Role::teacher, 2);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        // Held-out states from the validation split, labeled once.
        const PolicyNet probe(small_policy(), Role::student, 100 + seed);
        auto held_out = collect(probe, fx.valid, 40, seed);
        label_with_teacher(held_out, teacher);
        auto run = [&](double mu) {
            TrainConfig cfg;
            cfg.total_steps = 1500;
            cfg.episodes_per_iteration = 16;
            cfg.minibatch_steps = 16;
            cfg.lr = 3e-3;
            cfg.seed = seed;
            cfg.distill_weight = mu;
            TrainInputs in;
            in.train = &fx.train;
            in.teacher = &teacher;
            const PolicyNet student(small_policy(), Role::student, seed);
            return agreement_rate(train(cfg, initial_state(student, cfg), in).state.current, held_out);
        };
        const double plain = run(0.0);
        const double distilled = run(100.0);
        EXPECT_GT(distilled, plain) << "seed " << seed;
    }
}

TEST(Training, AgreementRequiresLabels) {
    Fixture fx;
    const PolicyNet student(small_policy(), Role::student, 1);
    const auto batch = collect(student, fx.train, 3, 4);
    EXPECT_THROW(agreement_rate(student, batch), UsageError);
}
