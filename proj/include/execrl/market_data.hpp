#pragma once

#include "execrl/error.hpp"
#include "execrl/util.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace execrl {

enum class Side { sell, buy };

inline std::string to_string(Side side) { return side == Side::sell ? "sell" : "buy"; }

inline Side parse_side(std::string_view text) {
    if (text == "sell") return Side::sell;
    if (text == "buy") return Side::buy;
    throw ConfigError("unknown side '" + std::string(text) + "' (expected sell|buy)");
}

// One minute of market data. avg_price is the price trades execute at.
struct Bar {
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;
    double avg_price = 0.0;
    double volume = 0.0;

    friend bool operator==(const Bar&, const Bar&) = default;
};

// Empty string when the bar satisfies every invariant, otherwise the first violation.
inline std::string bar_violation(const Bar& bar) {
    for (double price : {bar.open, bar.high, bar.low, bar.close, bar.avg_price})
        if (!(price > 0.0) || !std::isfinite(price)) return "non-positive or non-finite price";
    if (!(bar.volume >= 0.0) || !std::isfinite(bar.volume)) return "negative volume";
    if (bar.low > std::min(bar.open, bar.close)) return "low above min(open, close)";
    if (std::max(bar.open, bar.close) > bar.high) return "high below max(open, close)";
    if (bar.low > bar.high) return "low above high";
    if (bar.avg_price < bar.low || bar.avg_price > bar.high) return "avg_price outside [low, high]";
    return {};
}

struct DayFrame {
    std::string instrument;
    std::string date;  // ISO yyyy-mm-dd
    std::vector<Bar> bars;

    friend bool operator==(const DayFrame&, const DayFrame&) = default;
};

struct Order {
    std::string instrument;
    std::string date;
    Side side = Side::sell;
    double quantity = 10000.0;
    int horizon = 0;  // decision steps T

    std::string id() const { return instrument + ":" + date; }
    friend bool operator==(const Order&, const Order&) = default;
};

struct Dataset {
    std::vector<DayFrame> frames;
    std::vector<Order> orders;
    std::size_t bars_per_day = 0;

    const DayFrame* find_frame(const std::string& instrument, const std::string& date) const {
        for (const auto& frame : frames)
            if (frame.instrument == instrument && frame.date == date) return &frame;
        return nullptr;
    }
    const DayFrame* find_frame(const Order& order) const { return find_frame(order.instrument, order.date); }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

// ---------------------------------------------------------------------------
// Decision windows
// ---------------------------------------------------------------------------

// Bars [first, last) of window k when n_bars are cut into n_windows contiguous pieces.
inline std::pair<std::size_t, std::size_t> window_bounds(std::size_t n_bars, std::size_t n_windows,
                                                         std::size_t k) {
    return {k * n_bars / n_windows, (k + 1) * n_bars / n_windows};
}

// A window aggregated to one OHLCV record; `price` is the volume-weighted avg_price.
struct WindowBar {
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;
    double price = 0.0;
    double volume = 0.0;
};

inline WindowBar aggregate_window(const DayFrame& frame, std::size_t first, std::size_t last) {
    if (first >= last || last > frame.bars.size())
        throw UsageError("aggregate_window: empty or out-of-range window");
    WindowBar w;
    w.open = frame.bars[first].open;
    w.close = frame.bars[last - 1].close;
    w.high = frame.bars[first].high;
    w.low = frame.bars[first].low;
    double notional = 0.0;
    double plain = 0.0;
    for (std::size_t i = first; i < last; ++i) {
        const Bar& b = frame.bars[i];
        w.high = std::max(w.high, b.high);
        w.low = std::min(w.low, b.low);
        w.volume += b.volume;
        notional += b.avg_price * b.volume;
        plain += b.avg_price;
    }
    w.price = w.volume > 0.0 ? notional / w.volume : plain / static_cast<double>(last - first);
    return w;
}

// The day cut into `horizon + 1` windows: window 0 is observed before the first
// decision, and the decision at step t executes in window t + 1.
inline std::vector<WindowBar> decision_windows(const DayFrame& frame, int horizon) {
    if (horizon < 1) throw UsageError("decision_windows: horizon must be >= 1");
    const auto n_windows = static_cast<std::size_t>(horizon) + 1;
    if (frame.bars.size() < n_windows)
        throw UsageError("decision_windows: " + std::to_string(frame.bars.size()) + " bars cannot form " +
                         std::to_string(n_windows) + " windows");
    std::vector<WindowBar> out;
    out.reserve(n_windows);
    for (std::size_t k = 0; k < n_windows; ++k) {
        auto [first, last] = window_bounds(frame.bars.size(), n_windows, k);
        out.push_back(aggregate_window(frame, first, last));
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

inline constexpr const char* kCsvHeader = "instrument,date,minute,open,high,low,close,avg_price,volume";

// Maps each logical field to the column name used in the file.
struct CsvSchema {
    std::map<std::string, std::string> columns{
        {"instrument", "instrument"}, {"date", "date"},   {"minute", "minute"},
        {"open", "open"},             {"high", "high"},   {"low", "low"},
        {"close", "close"},           {"avg_price", "avg_price"}, {"volume", "volume"},
    };
    // Expected bars per day; 0 picks the most common day length in the file.
    std::size_t bars_per_day = 0;
};

struct SkipReport {
    struct Entry {
        std::string instrument;
        std::string date;
        std::string reason;
    };
    std::vector<Entry> entries;

    std::size_t count() const { return entries.size(); }
};

struct LoadResult {
    Dataset dataset;
    SkipReport skipped;
    std::vector<std::string> warnings;
};

inline LoadResult parse_csv(std::istream& in, const CsvSchema& schema = {}) {
    LoadResult result;
    std::string line;
    if (!std::getline(in, line)) {
        result.warnings.push_back("empty input: no header");
        return result;
    }
    const std::vector<std::string> header = split(trim(line), ',');
    std::map<std::string, std::size_t> position;
    std::vector<std::string> missing;
    for (const auto& [field, column] : schema.columns) {
        auto it = std::find_if(header.begin(), header.end(), [&](const std::string& h) { return trim(h) == column; });
        if (it == header.end())
            missing.push_back(column);
        else
            position[field] = static_cast<std::size_t>(it - header.begin());
    }
    if (!missing.empty()) {
        std::string names;
        for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
        throw SchemaError("missing column(s): " + names);
    }

    struct RawDay {
        std::vector<std::pair<long long, Bar>> rows;
        std::string problem;
    };
    std::map<std::pair<std::string, std::string>, RawDay> days;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::vector<std::string> cells = split(line, ',');
        if (cells.size() != header.size())
            throw ValidationError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                  " fields, found " + std::to_string(cells.size()));
        const std::string where = "line " + std::to_string(line_no);
        auto cell = [&](const char* field) { return trim(cells[position.at(field)]); };
        Bar bar;
        bar.open = parse_double(cell("open"), where + " open");
        bar.high = parse_double(cell("high"), where + " high");
        bar.low = parse_double(cell("low"), where + " low");
        bar.close = parse_double(cell("close"), where + " close");
        bar.avg_price = parse_double(cell("avg_price"), where + " avg_price");
        bar.volume = parse_double(cell("volume"), where + " volume");
        for (double p : {bar.open, bar.high, bar.low, bar.close, bar.avg_price})
            if (!(p > 0.0)) throw ValidationError(where + ": non-positive price");
        const long long minute = parse_int(cell("minute"), where + " minute");
        RawDay& day = days[{cell("instrument"), cell("date")}];
        if (day.problem.empty()) {
            const std::string violation = bar_violation(bar);
            if (!violation.empty()) day.problem = where + ": " + violation;
        }
        day.rows.emplace_back(minute, bar);
    }

    if (days.empty()) {
        result.warnings.push_back("input has a header but no data rows");
        return result;
    }

    std::size_t expected = schema.bars_per_day;
    if (expected == 0) {
        std::map<std::size_t, std::size_t> histogram;
        for (const auto& [key, day] : days) ++histogram[day.rows.size()];
        expected = std::max_element(histogram.begin(), histogram.end(), [](const auto& a, const auto& b) {
                       return a.second < b.second;
                   })->first;
    }
    result.dataset.bars_per_day = expected;

    for (auto& [key, day] : days) {
        std::sort(day.rows.begin(), day.rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        std::string problem = day.problem;
        if (problem.empty() && day.rows.size() != expected)
            problem = "ragged day: " + std::to_string(day.rows.size()) + " bars, expected " + std::to_string(expected);
        for (std::size_t i = 1; problem.empty() && i < day.rows.size(); ++i)
            if (day.rows[i].first == day.rows[i - 1].first)
                problem = "duplicate minute " + std::to_string(day.rows[i].first);
        if (!problem.empty()) {
            result.skipped.entries.push_back({key.first, key.second, problem});
            continue;
        }
        DayFrame frame{key.first, key.second, {}};
        frame.bars.reserve(day.rows.size());
        for (const auto& [minute, bar] : day.rows) frame.bars.push_back(bar);
        result.dataset.frames.push_back(std::move(frame));
    }
    if (!result.skipped.entries.empty())
        result.warnings.push_back(std::to_string(result.skipped.count()) + " day frame(s) rejected");
    return result;
}

inline LoadResult load_csv(const std::string& path, const CsvSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    return parse_csv(in, schema);
}

inline void write_csv(const Dataset& dataset, std::ostream& out) {
    out << kCsvHeader << '\n';
    for (const auto& frame : dataset.frames)
        for (std::size_t m = 0; m < frame.bars.size(); ++m) {
            const Bar& b = frame.bars[m];
            out << frame.instrument << ',' << frame.date << ',' << m << ',' << format_double(b.open) << ','
                << format_double(b.high) << ',' << format_double(b.low) << ',' << format_double(b.close) << ','
                << format_double(b.avg_price) << ',' << format_double(b.volume) << '\n';
        }
}

inline std::string to_csv(const Dataset& dataset) {
    std::ostringstream out;
    write_csv(dataset, out);
    return out.str();
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

enum class Regime { brownian, trend, ar_predictable, sinusoid };

inline Regime parse_regime(std::string_view name) {
    if (name == "brownian") return Regime::brownian;
    if (name == "trend") return Regime::trend;
    if (name == "ar_predictable") return Regime::ar_predictable;
    if (name == "sinusoid") return Regime::sinusoid;
    throw ConfigError("unknown regime '" + std::string(name) + "' (expected brownian|trend|ar_predictable|sinusoid)");
}

inline std::string to_string(Regime regime) {
    switch (regime) {
        case Regime::brownian: return "brownian";
        case Regime::trend: return "trend";
        case Regime::ar_predictable: return "ar_predictable";
        case Regime::sinusoid: return "sinusoid";
    }
    return "?";
}

enum class VolumeShape { flat, u_shape };

struct SyntheticConfig {
    Regime regime = Regime::brownian;
    int n_instruments = 1;
    int n_days = 1;
    int bars_per_day = 240;
    std::uint64_t seed = 0;
    std::string start_date = "2020-01-01";

    double base_price = 20.0;
    double price_dispersion = 0.5;  // log-spread of per-instrument base prices
    double sigma = 0.0005;          // per-bar log-return volatility (innovation std for ar_predictable)
    double drift = 0.0001;          // per-bar log drift, `trend` only
    double ar_coef = 0.9;           // r_b = ar_coef * r_{b-1} + sigma * eps, `ar_predictable` only
    double amplitude = 0.01;        // relative wave amplitude, `sinusoid` only
    double cycles = 1.0;            // waves per day, `sinusoid` only
    double phase = 0.0;             // wave phase at bar 0, `sinusoid` only
    double phase_jitter = 2.0 * std::numbers::pi;  // per-day uniform phase offset width, `sinusoid` only
    double spread = 0.0005;         // relative high/low excursion around the bar's prices

    VolumeShape volume_shape = VolumeShape::u_shape;
    double base_volume = 10000.0;
    double volume_noise = 0.3;  // lognormal std; ignored for `sinusoid`
};

// Weekday trading dates starting at (or after) start_date.
inline std::vector<std::string> trading_dates(const std::string& start_date, int n) {
    using namespace std::chrono;
    const auto parts = split(start_date, '-');
    if (parts.size() != 3) throw ConfigError("start_date must be yyyy-mm-dd, got '" + start_date + "'");
    const year_month_day ymd{year{static_cast<int>(parse_int(parts[0], "year"))},
                             month{static_cast<unsigned>(parse_int(parts[1], "month"))},
                             day{static_cast<unsigned>(parse_int(parts[2], "day"))}};
    if (!ymd.ok()) throw ConfigError("invalid start_date '" + start_date + "'");
    sys_days d{ymd};
    std::vector<std::string> dates;
    while (static_cast<int>(dates.size()) < n) {
        const weekday wd{d};
        if (wd != Saturday && wd != Sunday) {
            const year_month_day cur{d};
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(cur.year()),
                          static_cast<unsigned>(cur.month()), static_cast<unsigned>(cur.day()));
            dates.emplace_back(buf);
        }
        d += days{1};
    }
    return dates;
}

inline std::string instrument_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "SYN%03d", index);
    return buf;
}

// Wave phase of (instrument, day); pure function of the config so callers can
// reconstruct the generating curve.
inline double sinusoid_day_phase(const SyntheticConfig& cfg, int instrument, int day) {
    auto rng = make_rng(cfg.seed, {0x5A5EULL, static_cast<std::uint64_t>(instrument), static_cast<std::uint64_t>(day)});
    return cfg.phase + cfg.phase_jitter * uniform01(rng);
}

// Deterministic wave value (relative to base) at bar b of a day.
inline double sinusoid_wave(const SyntheticConfig& cfg, double day_phase, int bar) {
    return 1.0 + cfg.amplitude *
                     std::sin(2.0 * std::numbers::pi * cfg.cycles * bar / cfg.bars_per_day + day_phase);
}

inline Dataset gen_synthetic(const SyntheticConfig& cfg) {
    if (cfg.n_instruments < 1 || cfg.n_days < 1 || cfg.bars_per_day < 1)
        throw ConfigError("gen_synthetic: instrument, day and bar counts must be >= 1");
    if (!(cfg.base_price > 0.0) || cfg.sigma < 0.0 || cfg.spread < 0.0 || cfg.base_volume < 0.0)
        throw ConfigError("gen_synthetic: invalid price/volatility/volume parameters");
    if (cfg.regime == Regime::ar_predictable && !(std::abs(cfg.ar_coef) < 1.0))
        throw ConfigError("gen_synthetic: |ar_coef| must be < 1");
    if (cfg.regime == Regime::sinusoid && !(cfg.amplitude >= 0.0 && cfg.amplitude < 1.0))
        throw ConfigError("gen_synthetic: amplitude must be in [0, 1)");

    Dataset ds;
    ds.bars_per_day = static_cast<std::size_t>(cfg.bars_per_day);
    const std::vector<std::string> dates = trading_dates(cfg.start_date, cfg.n_days);
    const int n = cfg.bars_per_day;

    std::vector<double> volume_curve(static_cast<std::size_t>(n), 1.0);
    if (cfg.volume_shape == VolumeShape::u_shape && n > 1) {
        double total = 0.0;
        for (int b = 0; b < n; ++b) {
            const double x = 2.0 * b / (n - 1) - 1.0;
            volume_curve[static_cast<std::size_t>(b)] = 1.0 + 1.5 * x * x;
            total += volume_curve[static_cast<std::size_t>(b)];
        }
        for (double& v : volume_curve) v *= n / total;
    }

    for (int i = 0; i < cfg.n_instruments; ++i) {
        auto inst_rng = make_rng(cfg.seed, {0x1A57ULL, static_cast<std::uint64_t>(i)});
        const double inst_base = cfg.base_price * std::exp(cfg.price_dispersion * (uniform01(inst_rng) - 0.5));
        for (int d = 0; d < cfg.n_days; ++d) {
            auto rng = make_rng(cfg.seed, {0xBA55ULL, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(d)});
            std::normal_distribution<double> normal(0.0, 1.0);
            std::vector<double> mid(static_cast<std::size_t>(n));
            const bool wave = cfg.regime == Regime::sinusoid;
            if (wave) {
                const double phi = sinusoid_day_phase(cfg, i, d);
                for (int b = 0; b < n; ++b) mid[static_cast<std::size_t>(b)] = inst_base * sinusoid_wave(cfg, phi, b);
            } else {
                double log_price = std::log(inst_base);
                double ret = 0.0;
                if (cfg.regime == Regime::ar_predictable)
                    ret = cfg.sigma / std::sqrt(1.0 - cfg.ar_coef * cfg.ar_coef) * normal(rng);
                for (int b = 0; b < n; ++b) {
                    if (b > 0) {
                        switch (cfg.regime) {
                            case Regime::brownian: ret = cfg.sigma * normal(rng); break;
                            case Regime::trend: ret = cfg.drift + cfg.sigma * normal(rng); break;
                            case Regime::ar_predictable: ret = cfg.ar_coef * ret + cfg.sigma * normal(rng); break;
                            case Regime::sinusoid: break;
                        }
                        log_price += ret;
                    }
                    mid[static_cast<std::size_t>(b)] = std::exp(log_price);
                }
            }

            DayFrame frame{instrument_name(i), dates[static_cast<std::size_t>(d)], {}};
            frame.bars.reserve(static_cast<std::size_t>(n));
            for (int b = 0; b < n; ++b) {
                const double p = mid[static_cast<std::size_t>(b)];
                Bar bar;
                bar.avg_price = p;
                bar.open = b == 0 ? p : mid[static_cast<std::size_t>(b - 1)];
                bar.close = p;
                const double hi_ex = wave ? 1.0 : std::abs(normal(rng));
                const double lo_ex = wave ? 1.0 : std::abs(normal(rng));
                bar.high = std::max({bar.open, bar.close, bar.avg_price}) * (1.0 + cfg.spread * hi_ex);
                bar.low = std::min({bar.open, bar.close, bar.avg_price}) * (1.0 - cfg.spread * lo_ex);
                double vol = cfg.base_volume * volume_curve[static_cast<std::size_t>(b)];
                if (!wave && cfg.volume_noise > 0.0)
                    vol *= std::exp(cfg.volume_noise * normal(rng) - 0.5 * cfg.volume_noise * cfg.volume_noise);
                bar.volume = std::round(vol);
                frame.bars.push_back(bar);
            }
            ds.frames.push_back(std::move(frame));
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Orders, splits, volume profile
// ---------------------------------------------------------------------------

inline constexpr double kDefaultQuantity = 10000.0;

inline Dataset make_orders(Dataset dataset, Side side, int horizon, double quantity = kDefaultQuantity) {
    if (horizon < 2) throw UsageError("make_orders: horizon must be >= 2");
    if (static_cast<std::size_t>(horizon) > dataset.bars_per_day ||
        static_cast<std::size_t>(horizon) + 1 > dataset.bars_per_day)
        throw UsageError("make_orders: horizon " + std::to_string(horizon) + " needs " + std::to_string(horizon + 1) +
                         " windows but a day has " + std::to_string(dataset.bars_per_day) + " bars");
    if (!(quantity > 0.0)) throw UsageError("make_orders: quantity must be positive");
    dataset.orders.clear();
    dataset.orders.reserve(dataset.frames.size());
    for (const auto& frame : dataset.frames)
        dataset.orders.push_back(Order{frame.instrument, frame.date, side, quantity, horizon});
    return dataset;
}

struct DateRange {
    std::string first;  // inclusive
    std::string last;   // inclusive

    bool contains(const std::string& date) const { return first <= date && date <= last; }
};

inline DateRange parse_date_range(std::string_view text) {
    const auto pos = text.find("..");
    if (pos == std::string_view::npos) throw ConfigError("date range must be 'first..last', got '" + std::string(text) + "'");
    DateRange r{trim(text.substr(0, pos)), trim(text.substr(pos + 2))};
    if (r.last < r.first) throw ConfigError("date range '" + std::string(text) + "' is reversed");
    return r;
}

struct Splits {
    Dataset train;
    Dataset valid;
    Dataset test;
};

inline Dataset subset_by_dates(const Dataset& all, const std::function<bool(const std::string&)>& keep) {
    Dataset out;
    out.bars_per_day = all.bars_per_day;
    for (const auto& f : all.frames)
        if (keep(f.date)) out.frames.push_back(f);
    for (const auto& o : all.orders)
        if (keep(o.date)) out.orders.push_back(o);
    return out;
}

inline Splits split_by_dates(const Dataset& all, const DateRange& train, const DateRange& valid, const DateRange& test) {
    const DateRange* ranges[] = {&train, &valid, &test};
    for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b)
            if (ranges[a]->first <= ranges[b]->last && ranges[b]->first <= ranges[a]->last)
                throw ConfigError("split date ranges overlap");
    return Splits{subset_by_dates(all, [&](const std::string& d) { return train.contains(d); }),
                  subset_by_dates(all, [&](const std::string& d) { return valid.contains(d); }),
                  subset_by_dates(all, [&](const std::string& d) { return test.contains(d); })};
}

// Chronological split of the distinct dates by fractions (train, valid, rest = test).
inline Splits split_by_fractions(const Dataset& all, double train_fraction, double valid_fraction) {
    if (train_fraction < 0.0 || valid_fraction < 0.0 || train_fraction + valid_fraction > 1.0)
        throw ConfigError("split fractions must be non-negative and sum to at most 1");
    std::vector<std::string> dates;
    for (const auto& f : all.frames) dates.push_back(f.date);
    std::sort(dates.begin(), dates.end());
    dates.erase(std::unique(dates.begin(), dates.end()), dates.end());
    const auto n = dates.size();
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    const auto n_valid = std::min(n - std::min(n, n_train),
                                  static_cast<std::size_t>(std::llround(valid_fraction * static_cast<double>(n))));
    auto index_of = [&](const std::string& d) {
        return static_cast<std::size_t>(std::lower_bound(dates.begin(), dates.end(), d) - dates.begin());
    };
    return Splits{subset_by_dates(all, [&](const std::string& d) { return index_of(d) < n_train; }),
                  subset_by_dates(all, [&](const std::string& d) {
                      const auto i = index_of(d);
                      return i >= n_train && i < n_train + n_valid;
                  }),
                  subset_by_dates(all, [&](const std::string& d) { return index_of(d) >= n_train + n_valid; })};
}

// Expected share of market volume traded in each execution window of a
// `horizon`-step episode, averaged over the training frames.
inline std::vector<double> volume_profile(const Dataset& train, int horizon, std::vector<std::string>* warnings = nullptr) {
    if (train.frames.empty()) throw UsageError("volume_profile: training split is empty");
    if (horizon < 1) throw UsageError("volume_profile: horizon must be >= 1");
    const auto steps = static_cast<std::size_t>(horizon);
    std::vector<double> sums(steps, 0.0);
    for (const auto& frame : train.frames) {
        const auto windows = decision_windows(frame, horizon);
        for (std::size_t k = 0; k < steps; ++k) sums[k] += windows[k + 1].volume;
    }
    double total = 0.0;
    for (double& s : sums) {
        s /= static_cast<double>(train.frames.size());
        total += s;
    }
    if (!(total > 0.0)) {
        if (warnings) warnings->push_back("volume_profile: all training volumes are zero; using a uniform profile");
        return std::vector<double>(steps, 1.0 / static_cast<double>(steps));
    }
    for (double& s : sums) s /= total;
    return sums;
}

}  // namespace execrl
