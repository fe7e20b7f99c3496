#include "execrl/eval.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace execrl;

namespace {

OrderRecord record(const std::string& id, double pa, double reward = 0.0) {
    OrderRecord r;
    r.order_id = id;
    r.instrument = "X";
    r.date = "2021-01-04";
    r.pa_bps = pa;
    r.reward = reward;
    r.aep = 10.0;
    r.p_tilde = 10.0;
    return r;
}

struct Fixture {
    Dataset ds;
    std::vector<EpisodeContext> contexts;

    explicit Fixture(Regime regime = Regime::ar_predictable, int days = 6) {
        SyntheticConfig sc;
        sc.regime = regime;
        sc.n_instruments = 2;
        sc.n_days = days;
        sc.bars_per_day = 30;
        sc.seed = 2;
        ds = make_orders(gen_synthetic(sc), Side::sell, 5);
        EnvParams p;
        p.horizon = 5;
        contexts = build_contexts(ds, p);
    }
};

std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("execrl_eval_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST(Backtest, EmptySplitGivesNoRecords) {
    EXPECT_TRUE(run_backtest(as_policy(twap_schedule(5)), {}).empty());
    const PolicyNet net(PolicyConfig{}, Role::student, 1);
    EXPECT_TRUE(run_backtest(net, {}).empty());
}

TEST(Backtest, OrderWithoutFrameIsSkippedWithDiagnostic) {
    Fixture fx;
    Dataset ds = fx.ds;
    ds.orders.push_back(Order{"NOPE", "2021-01-04", Side::sell, 1.0, 5});
    EnvParams p;
    p.horizon = 5;
    std::vector<std::string> diag;
    EXPECT_EQ(build_contexts(ds, p, &diag).size(), fx.contexts.size());
    ASSERT_EQ(diag.size(), 1u);
    EXPECT_NE(diag[0].find("NOPE"), std::string::npos);
}

TEST(Backtest, TwapHasZeroPaAndGlr) {
    Fixture fx;
    const auto records = run_backtest(as_policy(twap_schedule(5)), fx.contexts);
    for (const auto& r : records) EXPECT_NEAR(r.pa_bps, 0.0, 1e-9);
    const auto rep = metrics(records);
    EXPECT_NEAR(rep.mean_pa_bps, 0.0, 1e-9);
    EXPECT_EQ(rep.glr, 0.0);
}

TEST(Backtest, PolicyBacktestIsDeterministicAndMatchesStepwiseAgent) {
    Fixture fx;
    PolicyConfig pc;
    pc.public_hidden = 4;
    pc.private_hidden = 3;
    pc.inference_width = 5;
    pc.actor_init_gain = 2.0;
    for (Role role : {Role::student, Role::teacher}) {
        const PolicyNet net(pc, role, 5);
        const auto a = run_backtest(net, fx.contexts, 1, 3);
        const auto b = run_backtest(net, fx.contexts, 2, 256);
        const auto c = run_backtest(PolicyAgent(net), fx.contexts);
        ASSERT_EQ(a.size(), c.size());
        EXPECT_EQ(a, b);
        for (std::size_t i = 0; i < a.size(); ++i) {
            ASSERT_EQ(a[i].steps.size(), c[i].steps.size());
            for (std::size_t t = 0; t < a[i].steps.size(); ++t)
                EXPECT_EQ(a[i].steps[t].proportion, c[i].steps[t].proportion);
        }
    }
}

TEST(Backtest, RecordsSatisfyRewardIdentity) {
    Fixture fx;
    const PolicyNet net(PolicyConfig{}, Role::student, 3);
    for (const auto& r : run_backtest(net, fx.contexts)) {
        double total = 0.0, sq = 0.0, aep = 0.0;
        for (const auto& s : r.steps) {
            total += s.proportion;
            sq += s.proportion * s.proportion;
            aep += s.proportion * s.price;
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
        EXPECT_NEAR(r.reward + 0.01 * sq, r.pa_bps / 1e4, 1e-12);
        EXPECT_NEAR(r.pa_bps, 1e4 * (aep / r.p_tilde - 1.0), 1e-9);
    }
}

TEST(Metrics, GlrConventions) {
    EXPECT_EQ(metrics({record("a", 0.0), record("b", 0.0)}).glr, 0.0);
    EXPECT_EQ(metrics({record("a", -1.0), record("b", 0.0)}).glr, 0.0);
    EXPECT_TRUE(std::isinf(metrics({record("a", 3.0), record("b", 0.0)}).glr));
    const auto rep = metrics({record("a", 10.0), record("b", -5.0)});
    EXPECT_DOUBLE_EQ(rep.mean_pa_bps, 2.5);
    EXPECT_DOUBLE_EQ(rep.glr, 2.0);
    EXPECT_DOUBLE_EQ(metrics({record("a", 10.0), record("b", 2.0), record("c", -4.0), record("d", -2.0)}).glr, 2.0);
}

TEST(Metrics, SingleRecordReportEqualsRecord) {
    const auto rep = metrics({record("a", 4.5, 0.25)});
    EXPECT_EQ(rep.count, 1u);
    EXPECT_EQ(rep.mean_pa_bps, 4.5);
    EXPECT_EQ(rep.mean_reward, 0.25);
}

TEST(Metrics, EmptyIsUsageError) { EXPECT_THROW(metrics({}), UsageError); }

TEST(Significance, Conventions) {
    const std::vector<OrderRecord> a{record("a", 1.0, 0.1), record("b", 2.0, 0.2)};
    EXPECT_EQ(significance(a, a).p_pa, 1.0);
    EXPECT_EQ(significance(a, a).p_reward, 1.0);
    const std::vector<OrderRecord> b{record("a", 0.0, 0.1), record("b", 1.0, 0.2)};
    const auto s = significance(a, b);
    EXPECT_EQ(s.p_pa, 0.0);
    EXPECT_EQ(s.mean_pa_diff, 1.0);
    EXPECT_EQ(s.p_reward, 1.0);
}

TEST(Significance, MatchesHandComputedTStatistic) {
    // diffs (1, 2, 3, 6): mean 3, sd sqrt(14/3), t = 3 / (sd / 2) with 3 degrees of freedom.
    const std::vector<OrderRecord> a{record("a", 1), record("b", 2), record("c", 3), record("d", 6)};
    const std::vector<OrderRecord> z{record("d", 0), record("c", 0), record("b", 0), record("a", 0)};
    const double t = 3.0 / (std::sqrt(14.0 / 3.0) / 2.0);
    // Two-sided p for Student t with 3 dof: closed form of the CDF.
    const double x = t / std::sqrt(3.0);
    const double cdf_tail = 0.5 - (std::atan(x) + x / (1 + x * x)) / std::numbers::pi;
    EXPECT_NEAR(significance(a, z).p_pa, 2.0 * cdf_tail, 1e-12);
}

TEST(Significance, NullRejectionRateIsCalibrated) {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> normal;
    const int resamples = 1000, n = 40;
    int rejected = 0;
    for (int k = 0; k < resamples; ++k) {
        std::vector<double> d(n);
        for (double& x : d) x = normal(rng);
        rejected += paired_t_pvalue(d) < 0.05;
    }
    const double rate = rejected / static_cast<double>(resamples);
    EXPECT_LT(std::abs(rate - 0.05), 3.0 * std::sqrt(0.05 * 0.95 / resamples)) << rate;
}

TEST(Significance, MisalignedOrdersAreUsageError) {
    const std::vector<OrderRecord> a{record("a", 1), record("b", 2)};
    EXPECT_THROW(significance(a, {record("a", 1)}), UsageError);
    EXPECT_THROW(significance(a, {record("a", 1), record("c", 2)}), UsageError);
    EXPECT_THROW(significance(a, {record("a", 1), record("a", 2)}), UsageError);
}

TEST(Export, CsvRoundTripReproducesMetrics) {
    Fixture fx;
    const auto records = run_backtest(as_policy(ac_schedule(5, 0.5)), fx.contexts);
    const auto dir = temp_dir("csv");
    const auto paths = export_records(records, dir, ExportFormat::csv, true, {{"strategy", "AC"}});
    const auto back = import_records_csv(paths.records, paths.details);
    EXPECT_EQ(back, records);
    EXPECT_EQ(metrics(back), metrics(records));
    const std::string summary = read_text(paths.summary);
    EXPECT_NE(summary.find("strategy,AC"), std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST(Export, JsonRoundTripAndAgreesWithCsv) {
    Fixture fx;
    const auto records = run_backtest(as_policy(ac_schedule(5, 1.0)), fx.contexts);
    const auto dj = temp_dir("json"), dc = temp_dir("csv2");
    const auto pj = export_records(records, dj, ExportFormat::json, true);
    const auto pc = export_records(records, dc, ExportFormat::csv, false);
    EXPECT_EQ(import_records_json(pj.records), records);
    const auto doc = nlohmann::json::parse(read_text(pj.summary));
    std::map<std::string, std::string> csv;
    std::istringstream in(read_text(pc.summary));
    std::string line;
    while (std::getline(in, line)) {
        const auto c = split(line, ',');
        if (c.size() == 2) csv[c[0]] = c[1];
    }
    EXPECT_EQ(parse_double(csv.at("mean_pa_bps"), "x"), doc["summary"]["mean_pa_bps"].get<double>());
    EXPECT_EQ(parse_double(csv.at("mean_reward"), "x"), doc["summary"]["mean_reward"].get<double>());
    EXPECT_EQ(parse_double(csv.at("glr"), "x"), doc["summary"]["glr"].get<double>());
    EXPECT_EQ(std::stoul(csv.at("count")), doc["summary"]["count"].get<std::size_t>());
    // Without details the CSV round trip keeps the order-level fields.
    const auto back = import_records_csv(pc.records);
    EXPECT_EQ(metrics(back), metrics(records));
    std::filesystem::remove_all(dj);
    std::filesystem::remove_all(dc);
}

TEST(Export, InfiniteGlrIsWrittenAsInf) {
    const std::vector<OrderRecord> records{record("a", 3.0)};
    const auto dir = temp_dir("inf");
    const auto pj = export_records(records, dir, ExportFormat::json, false);
    EXPECT_EQ(nlohmann::json::parse(read_text(pj.summary))["summary"]["glr"], "inf");
    const auto pc = export_records(records, dir, ExportFormat::csv, false);
    EXPECT_NE(read_text(pc.summary).find("glr,inf"), std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST(Export, SingleOrderDetailsHaveAtMostHorizonSteps) {
    Fixture fx;
    const PolicyNet net(PolicyConfig{}, Role::student, 3);
    const std::vector<EpisodeContext> one{fx.contexts[0]};
    const auto dir = temp_dir("details");
    const auto paths = export_records(run_backtest(net, one), dir, ExportFormat::csv, true);
    std::istringstream in(read_text(paths.details));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, kDetailsHeader);
    std::size_t rows = 0;
    while (std::getline(in, line)) rows += !line.empty();
    EXPECT_GE(rows, 1u);
    EXPECT_LE(rows, 5u);
    std::filesystem::remove_all(dir);
}

TEST(Export, BadHeaderIsSchemaError) {
    const auto dir = temp_dir("bad");
    std::filesystem::create_directories(dir);
    write_text(dir / "report.csv", "a,b\n");
    EXPECT_THROW(import_records_csv(dir / "report.csv"), SchemaError);
    EXPECT_THROW(read_text(dir / "missing.csv"), ValidationError);
    std::filesystem::remove_all(dir);
}

TEST(Metrics, RoundingResidueIsNeitherGainNorLoss) {
    EXPECT_EQ(metrics({record("a", 1e-12), record("b", -3e-13)}).glr, 0.0);
    EXPECT_TRUE(std::isinf(metrics({record("a", 1.0), record("b", -1e-12)}).glr));
}
