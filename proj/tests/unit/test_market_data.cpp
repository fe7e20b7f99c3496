#include "execrl/market_data.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

using namespace execrl;

namespace {

std::string valid_row(const std::string& inst, const std::string& date, int minute, double p = 10.0, double vol = 100.0) {
    std::ostringstream s;
    s << inst << "," << date << "," << minute << "," << p << "," << p * 1.01 << "," << p * 0.99 << "," << p << "," << p
      << "," << vol;
    return s.str();
}

std::string csv_days(int instruments, int days, int bars) {
    std::string text = std::string(kCsvHeader) + "\n";
    for (int i = 0; i < instruments; ++i)
        for (int d = 0; d < days; ++d)
            for (int m = 0; m < bars; ++m)
                text += valid_row("I" + std::to_string(i), "2021-01-0" + std::to_string(d + 4), m) + "\n";
    return text;
}

LoadResult parse(const std::string& text) {
    std::istringstream in(text);
    return parse_csv(in);
}

SyntheticConfig synth(Regime regime, int instruments, int days, int bars, std::uint64_t seed) {
    SyntheticConfig c;
    c.regime = regime;
    c.n_instruments = instruments;
    c.n_days = days;
    c.bars_per_day = bars;
    c.seed = seed;
    return c;
}

}  // namespace

TEST(Bar, InvariantViolations) {
    Bar ok{10, 11, 9, 10.5, 10.2, 5};
    EXPECT_EQ(bar_violation(ok), "");
    Bar b = ok;
    b.low = 12;
    EXPECT_NE(bar_violation(b), "");
    b = ok;
    b.avg_price = 11.5;
    EXPECT_NE(bar_violation(b), "");
    b = ok;
    b.volume = -1;
    EXPECT_NE(bar_violation(b), "");
    b = ok;
    b.open = 0;
    EXPECT_NE(bar_violation(b), "");
}

TEST(LoadCsv, CountsFrames) {
    const auto r = parse(csv_days(2, 2, 240));
    EXPECT_EQ(r.dataset.frames.size(), 4u);
    EXPECT_EQ(r.dataset.bars_per_day, 240u);
    EXPECT_EQ(r.skipped.count(), 0u);
    for (const auto& f : r.dataset.frames) EXPECT_EQ(f.bars.size(), 240u);
}

TEST(LoadCsv, LowAboveHighRejectsFrame) {
    std::string text = csv_days(1, 2, 10);
    std::istringstream lines(text);
    std::string line, out;
    int n = 0;
    while (std::getline(lines, line)) {
        if (n == 15) line = "I0,2021-01-05,5,10,10.1,10.5,10,10,100";
        out += line + "\n";
        ++n;
    }
    const auto r = parse(out);
    EXPECT_EQ(r.dataset.frames.size(), 1u);
    ASSERT_EQ(r.skipped.count(), 1u);
    EXPECT_EQ(r.skipped.entries[0].date, "2021-01-05");
    EXPECT_FALSE(r.warnings.empty());
}

TEST(LoadCsv, HeaderOnlyGivesEmptyDatasetAndWarning) {
    const auto r = parse(std::string(kCsvHeader) + "\n");
    EXPECT_TRUE(r.dataset.frames.empty());
    EXPECT_FALSE(r.warnings.empty());
}

TEST(LoadCsv, MissingColumnIsSchemaError) {
    EXPECT_THROW(parse("instrument,date,minute,open,high,low,close,volume\n"), SchemaError);
}

TEST(LoadCsv, NonPositivePriceNamesTheRow) {
    std::string text = std::string(kCsvHeader) + "\n" + valid_row("A", "2021-01-04", 0) + "\nA,2021-01-04,1,0,1,1,1,1,5\n";
    try {
        parse(text);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(LoadCsv, RaggedDayIsSkipped) {
    std::string text = csv_days(1, 2, 10);
    text += valid_row("I0", "2021-01-06", 0) + "\n";  // one-bar day
    const auto r = parse(text);
    EXPECT_EQ(r.dataset.frames.size(), 2u);
    ASSERT_EQ(r.skipped.count(), 1u);
    EXPECT_NE(r.skipped.entries[0].reason.find("ragged"), std::string::npos);
}

TEST(LoadCsv, DuplicateMinuteIsSkipped) {
    std::string text = std::string(kCsvHeader) + "\n";
    for (int m = 0; m < 4; ++m) text += valid_row("A", "2021-01-04", m) + "\n";
    for (int m : {0, 1, 1, 3}) text += valid_row("A", "2021-01-05", m) + "\n";
    const auto r = parse(text);
    EXPECT_EQ(r.dataset.frames.size(), 1u);
    EXPECT_EQ(r.skipped.count(), 1u);
}

TEST(LoadCsv, CustomColumnNames) {
    CsvSchema schema;
    schema.columns["avg_price"] = "vwap";
    std::string text = "instrument,date,minute,open,high,low,close,vwap,volume\n" + valid_row("A", "2021-01-04", 0) + "\n";
    std::istringstream in(text);
    const auto r = parse_csv(in, schema);
    ASSERT_EQ(r.dataset.frames.size(), 1u);
    EXPECT_DOUBLE_EQ(r.dataset.frames[0].bars[0].avg_price, 10.0);
}

TEST(LoadCsv, WriteThenReadRoundTripsExactly) {
    const Dataset ds = gen_synthetic(synth(Regime::ar_predictable, 2, 3, 30, 5));
    const auto r = parse(to_csv(ds));
    EXPECT_EQ(r.dataset.frames, ds.frames);
}

TEST(Synthetic, DeterministicBytes) {
    const auto a = to_csv(gen_synthetic(synth(Regime::brownian, 1, 1, 240, 7)));
    const auto b = to_csv(gen_synthetic(synth(Regime::brownian, 1, 1, 240, 7)));
    EXPECT_EQ(a, b);
    const auto c = to_csv(gen_synthetic(synth(Regime::brownian, 1, 1, 240, 8)));
    EXPECT_NE(a, c);
}

TEST(Synthetic, UnknownRegimeIsConfigError) { EXPECT_THROW(parse_regime("jumpy"), ConfigError); }

TEST(Synthetic, BarInvariantsHoldAcrossRegimesAndSeeds) {
    for (Regime regime : {Regime::brownian, Regime::trend, Regime::ar_predictable, Regime::sinusoid})
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const Dataset ds = gen_synthetic(synth(regime, 2, 3, 60, seed));
            ASSERT_EQ(ds.frames.size(), 6u);
            for (const auto& f : ds.frames) {
                ASSERT_EQ(f.bars.size(), 60u);
                for (const auto& b : f.bars) ASSERT_EQ(bar_violation(b), "") << to_string(regime) << " seed " << seed;
            }
        }
}

TEST(Synthetic, SinusoidPeakMatchesWaveFormula) {
    const SyntheticConfig cfg = synth(Regime::sinusoid, 1, 1, 240, 0);
    const Dataset ds = gen_synthetic(cfg);
    // Oracle: evaluate the wave at every bar independently of the generator.
    const double phi = sinusoid_day_phase(cfg, 0, 0);
    int analytic = 0;
    double best = -1e300;
    for (int b = 0; b < 240; ++b) {
        const double v = std::sin(2.0 * std::numbers::pi * cfg.cycles * b / 240.0 + phi);
        if (v > best) {
            best = v;
            analytic = b;
        }
    }
    const auto& bars = ds.frames[0].bars;
    int argmax = 0;
    for (int b = 1; b < 240; ++b)
        if (bars[static_cast<std::size_t>(b)].avg_price > bars[static_cast<std::size_t>(argmax)].avg_price) argmax = b;
    EXPECT_EQ(argmax, analytic);
}

TEST(Synthetic, BrownianDailyLogReturnHasZeroMean) {
    const Dataset ds = gen_synthetic(synth(Regime::brownian, 1, 10000, 240, 3));
    double sum = 0.0, sq = 0.0;
    for (const auto& f : ds.frames) {
        const double r = std::log(f.bars.back().avg_price / f.bars.front().avg_price);
        sum += r;
        sq += r * r;
    }
    const double n = static_cast<double>(ds.frames.size());
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    EXPECT_LT(std::abs(mean), 3.0 * se);
}

TEST(Synthetic, ArPredictableReturnsAreAutocorrelated) {
    SyntheticConfig cfg = synth(Regime::ar_predictable, 1, 200, 240, 4);
    cfg.ar_coef = 0.6;
    const Dataset ds = gen_synthetic(cfg);
    double sxy = 0.0, sxx = 0.0;
    for (const auto& f : ds.frames)
        for (std::size_t b = 2; b < f.bars.size(); ++b) {
            const double r0 = std::log(f.bars[b - 1].avg_price / f.bars[b - 2].avg_price);
            const double r1 = std::log(f.bars[b].avg_price / f.bars[b - 1].avg_price);
            sxy += r0 * r1;
            sxx += r0 * r0;
        }
    EXPECT_NEAR(sxy / sxx, 0.6, 0.02);
}

TEST(Synthetic, TradingDatesSkipWeekends) {
    const auto d = trading_dates("2021-01-01", 3);  // a Friday
    ASSERT_EQ(d.size(), 3u);
    EXPECT_EQ(d[0], "2021-01-01");
    EXPECT_EQ(d[1], "2021-01-04");
    EXPECT_EQ(d[2], "2021-01-05");
}

TEST(Windows, PartitionCoversAllBars) {
    for (std::size_t n : {9, 10, 240, 241})
        for (std::size_t w : {2, 3, 9}) {
            std::size_t next = 0;
            for (std::size_t k = 0; k < w; ++k) {
                auto [a, b] = window_bounds(n, w, k);
                EXPECT_EQ(a, next);
                EXPECT_GT(b, a);
                next = b;
            }
            EXPECT_EQ(next, n);
        }
}

TEST(Windows, PriceIsVolumeWeighted) {
    DayFrame f{"A", "2021-01-04", {{10, 10, 10, 10, 10, 1}, {20, 20, 20, 20, 20, 3}}};
    const WindowBar w = aggregate_window(f, 0, 2);
    EXPECT_DOUBLE_EQ(w.price, 17.5);
    EXPECT_DOUBLE_EQ(w.volume, 4.0);
    EXPECT_DOUBLE_EQ(w.open, 10.0);
    EXPECT_DOUBLE_EQ(w.close, 20.0);
    DayFrame z{"A", "2021-01-04", {{10, 10, 10, 10, 10, 0}, {20, 20, 20, 20, 20, 0}}};
    EXPECT_DOUBLE_EQ(aggregate_window(z, 0, 2).price, 15.0);
}

TEST(Orders, OnePerFrame) {
    const Dataset ds = make_orders(gen_synthetic(synth(Regime::brownian, 2, 2, 20, 1)), Side::buy, 4);
    ASSERT_EQ(ds.orders.size(), 4u);
    for (const auto& o : ds.orders) {
        EXPECT_EQ(o.side, Side::buy);
        EXPECT_EQ(o.horizon, 4);
        EXPECT_NE(ds.find_frame(o), nullptr);
    }
}

TEST(Orders, HorizonLongerThanDayIsRejected) {
    const Dataset ds = gen_synthetic(synth(Regime::brownian, 1, 1, 8, 1));
    EXPECT_THROW(make_orders(ds, Side::sell, 9), UsageError);
    EXPECT_THROW(make_orders(ds, Side::sell, 8), UsageError);  // needs T + 1 windows
    EXPECT_NO_THROW(make_orders(ds, Side::sell, 7));
    EXPECT_THROW(make_orders(ds, Side::sell, 1), UsageError);
}

TEST(Splits, DateRangesAreDisjoint) {
    const Dataset ds = make_orders(gen_synthetic(synth(Regime::brownian, 2, 10, 20, 1)), Side::sell, 4);
    const auto dates = trading_dates("2020-01-01", 10);
    const Splits s = split_by_dates(ds, {dates[0], dates[5]}, {dates[6], dates[7]}, {dates[8], dates[9]});
    EXPECT_EQ(s.train.frames.size(), 12u);
    EXPECT_EQ(s.valid.frames.size(), 4u);
    EXPECT_EQ(s.test.frames.size(), 4u);
    std::set<std::string> seen;
    for (const Dataset* part : {&s.train, &s.valid, &s.test}) {
        std::set<std::string> mine;
        for (const auto& f : part->frames) mine.insert(f.date);
        for (const auto& d : mine) EXPECT_TRUE(seen.insert(d).second) << d;
        EXPECT_EQ(part->orders.size(), part->frames.size());
    }
    EXPECT_THROW(split_by_dates(ds, {dates[0], dates[5]}, {dates[5], dates[7]}, {dates[8], dates[9]}), ConfigError);
}

TEST(Splits, FractionsAreChronological) {
    const Dataset ds = make_orders(gen_synthetic(synth(Regime::brownian, 1, 10, 20, 1)), Side::sell, 4);
    const Splits s = split_by_fractions(ds, 0.6, 0.2);
    EXPECT_EQ(s.train.frames.size(), 6u);
    EXPECT_EQ(s.valid.frames.size(), 2u);
    EXPECT_EQ(s.test.frames.size(), 2u);
    EXPECT_LT(s.train.frames.back().date, s.valid.frames.front().date);
    EXPECT_LT(s.valid.frames.back().date, s.test.frames.front().date);
}

TEST(VolumeProfile, ConstantVolumeIsUniform) {
    SyntheticConfig cfg = synth(Regime::brownian, 1, 3, 45, 2);
    cfg.volume_shape = VolumeShape::flat;
    cfg.volume_noise = 0.0;
    const auto p = volume_profile(gen_synthetic(cfg), 4);
    for (double x : p) EXPECT_NEAR(x, 0.25, 1e-12);
}

TEST(VolumeProfile, ConcentratedVolume) {
    // Five windows of two bars; all volume in the first execution window (window 1).
    DayFrame f{"A", "2021-01-04", {}};
    for (int b = 0; b < 10; ++b) f.bars.push_back({10, 10, 10, 10, 10, b == 2 || b == 3 ? 50.0 : 0.0});
    Dataset ds;
    ds.frames = {f};
    ds.bars_per_day = 10;
    const auto p = volume_profile(ds, 4);
    EXPECT_EQ(p, (std::vector<double>{1.0, 0.0, 0.0, 0.0}));
}

TEST(VolumeProfile, TwoFramesAverage) {
    auto frame = [](std::vector<double> vols) {
        DayFrame f{"A", "2021-01-04", {}};
        for (double v : vols) f.bars.push_back({10, 10, 10, 10, 10, v});
        return f;
    };
    Dataset ds;
    ds.frames = {frame({5, 1, 3}), frame({7, 3, 1})};
    ds.bars_per_day = 3;
    // Hand average over execution windows 1 and 2: (1+3)/2 = 2, (3+1)/2 = 2.
    const auto p = volume_profile(ds, 2);
    EXPECT_NEAR(p[0], 0.5, 1e-15);
    EXPECT_NEAR(p[1], 0.5, 1e-15);
    ds.frames = {frame({5, 1, 3}), frame({7, 5, 1})};
    const auto q = volume_profile(ds, 2);
    EXPECT_NEAR(q[0], 3.0 / 5.0, 1e-15);
    EXPECT_NEAR(q[1], 2.0 / 5.0, 1e-15);
}

TEST(VolumeProfile, AllZeroVolumeWarnsAndIsUniform) {
    DayFrame f{"A", "2021-01-04", {}};
    for (int b = 0; b < 6; ++b) f.bars.push_back({10, 10, 10, 10, 10, 0.0});
    Dataset ds;
    ds.frames = {f};
    ds.bars_per_day = 6;
    std::vector<std::string> warnings;
    const auto p = volume_profile(ds, 3, &warnings);
    EXPECT_EQ(warnings.size(), 1u);
    for (double x : p) EXPECT_DOUBLE_EQ(x, 1.0 / 3.0);
}

TEST(VolumeProfile, SumsToOne) {
    const auto p = volume_profile(gen_synthetic(synth(Regime::ar_predictable, 3, 5, 100, 9)), 7);
    double s = 0.0;
    for (double x : p) s += x;
    EXPECT_NEAR(s, 1.0, 1e-12);
}
