#ifndef PUMPCAST_TIMESERIES_HPP
#define PUMPCAST_TIMESERIES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pumpcast/linalg.hpp"

namespace pumpcast {

/// Raised for any input that violates a frame or windowing contract.
class TimeSeriesError : public std::runtime_error {
public:
    explicit TimeSeriesError(const std::string& what)
        : std::runtime_error(what) {}
};

/**
 * Aligned level/rainfall records at a fixed step.
 *
 * Invariants, enforced at load: timestamps strictly increasing with constant
 * spacing, equal channel lengths >= 2, all values finite, level >= 0,
 * rainfall >= 0.
 */
struct TimeSeriesFrame {
    std::vector<std::int64_t> timestamps;  // epoch seconds, UTC
    Vector level;                          // m
    Vector rainfall;                       // mm/s
    std::int64_t step_seconds = 300;
    std::string site_id;

    std::size_t size() const { return level.size(); }
};

enum class GapPolicy { Reject, ForwardFill };

/// Per-channel affine map to [0, 1].
struct ScalerParams {
    double level_min = 0.0;
    double level_max = 1.0;
    double rainfall_min = 0.0;
    double rainfall_max = 1.0;
};

struct LagSelection {
    std::vector<int> level_lags;     // steps, each >= 1
    std::vector<int> rainfall_lags;  // steps, each >= 0
    double threshold = 0.2;
    int max_lag = 48;

    int max_selected_lag() const {
        int m = 0;
        for (int l : level_lags) m = std::max(m, l);
        for (int l : rainfall_lags) m = std::max(m, l);
        return m;
    }
};

/**
 * Supervised pairs: one row per reference instant T, inputs drawn from
 * selected lags at T-lag, targets the scaled level at T+1 .. T+H.
 */
struct SupervisedWindowSet {
    Matrix inputs;   // N x D, D = |level_lags| + |rainfall_lags|
    Matrix targets;  // N x H
    ScalerParams scaler;
    LagSelection lags;
    int horizon = 24;

    std::size_t size() const { return inputs.rows; }
    std::size_t input_dim() const { return inputs.cols; }
};

struct ChannelStats {
    double max = 0.0;
    double mean = 0.0;
    double stddev = 0.0;  // population convention (divide by n)
};

struct SummaryStats {
    ChannelStats level;
    ChannelStats rainfall;
    std::size_t count = 0;
};

namespace detail {

inline std::string format_timestamp(std::int64_t epoch_s) {
    std::time_t t = static_cast<std::time_t>(epoch_s);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ",
                  tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                  tm.tm_min, tm.tm_sec);
    return buf;
}

inline std::optional<std::int64_t> parse_timestamp(const std::string& s) {
    // ISO-8601, UTC: YYYY-MM-DDTHH:MM:SS with optional trailing 'Z'.
    int y, mo, d, h, mi, se;
    char sep;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep,
                    &h, &mi, &se) != 7)
        return std::nullopt;
    if (sep != 'T' && sep != ' ') return std::nullopt;
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || se > 60)
        return std::nullopt;
    std::tm tm{};
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = se;
    return static_cast<std::int64_t>(timegm(&tm));
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace detail

struct LoadReport {
    std::size_t rows_read = 0;
    std::size_t rows_filled = 0;  // gap rows synthesized under ForwardFill
};

/**
 * Load `timestamp,level_m,rainfall_mm_s` CSV into a validated frame.
 * Errors cite the 1-based file line of the offending row; gaps name the
 * missing instant.
 */
inline TimeSeriesFrame load_frame(const std::string& path,
                                  std::int64_t step_seconds = 300,
                                  GapPolicy gaps = GapPolicy::Reject,
                                  LoadReport* report = nullptr) {
    if (step_seconds <= 0)
        throw TimeSeriesError("step must be positive, got " +
                              std::to_string(step_seconds));
    std::ifstream in(path);
    if (!in) throw TimeSeriesError("cannot open '" + path + "'");

    TimeSeriesFrame frame;
    frame.step_seconds = step_seconds;
    frame.site_id = path;

    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line))
        throw TimeSeriesError("'" + path + "' is empty");
    ++lineno;
    {
        auto header = detail::split_csv_line(line);
        if (header.size() != 3 || header[0] != "timestamp" ||
            header[1] != "level_m" || header[2] != "rainfall_mm_s")
            throw TimeSeriesError(
                "line 1: expected header 'timestamp,level_m,rainfall_mm_s'");
    }

    LoadReport local;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != 3)
            throw TimeSeriesError("line " + std::to_string(lineno) +
                                  ": expected 3 fields, got " +
                                  std::to_string(fields.size()));
        auto ts = detail::parse_timestamp(fields[0]);
        if (!ts)
            throw TimeSeriesError("line " + std::to_string(lineno) +
                                  ": unparsable timestamp '" + fields[0] + "'");
        double level, rain;
        if (!detail::parse_double(fields[1], level) ||
            !detail::parse_double(fields[2], rain))
            throw TimeSeriesError("line " + std::to_string(lineno) +
                                  ": unparsable numeric field");
        if (!std::isfinite(level) || !std::isfinite(rain))
            throw TimeSeriesError("line " + std::to_string(lineno) +
                                  ": non-finite value");
        if (level < 0.0 || rain < 0.0)
            throw TimeSeriesError("line " + std::to_string(lineno) +
                                  ": negative value");

        if (!frame.timestamps.empty()) {
            const std::int64_t prev = frame.timestamps.back();
            const std::int64_t delta = *ts - prev;
            if (delta <= 0)
                throw TimeSeriesError("line " + std::to_string(lineno) +
                                      ": timestamps not strictly increasing");
            if (delta != step_seconds) {
                if (delta % step_seconds != 0 || gaps == GapPolicy::Reject)
                    throw TimeSeriesError(
                        "line " + std::to_string(lineno) + ": gap, missing " +
                        detail::format_timestamp(prev + step_seconds));
                for (std::int64_t t = prev + step_seconds; t < *ts;
                     t += step_seconds) {
                    frame.timestamps.push_back(t);
                    frame.level.push_back(frame.level.back());
                    frame.rainfall.push_back(frame.rainfall.back());
                    ++local.rows_filled;
                }
            }
        }
        frame.timestamps.push_back(*ts);
        frame.level.push_back(level);
        frame.rainfall.push_back(rain);
        ++local.rows_read;
    }

    if (frame.size() < 2)
        throw TimeSeriesError("'" + path + "' has fewer than 2 data rows");
    if (report) *report = local;
    return frame;
}

inline void save_frame(const TimeSeriesFrame& frame, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw TimeSeriesError("cannot write '" + path + "'");
    out << "timestamp,level_m,rainfall_mm_s\n";
    char buf[80];
    for (std::size_t i = 0; i < frame.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g\n",
                      detail::format_timestamp(frame.timestamps[i]).c_str(),
                      frame.level[i], frame.rainfall[i]);
        out << buf;
    }
}

/// Fit the [0,1] scaler on the leading `fraction` of the frame (1.0 = all of
/// it). Fitting on the training portion only keeps the test split unseen.
inline ScalerParams fit_scale(const TimeSeriesFrame& frame,
                              double fraction = 1.0) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw TimeSeriesError("scaler fit fraction must be in (0, 1]");
    const std::size_t n =
        std::max<std::size_t>(2, static_cast<std::size_t>(
                                     std::floor(frame.size() * fraction)));
    const std::size_t m = std::min(n, frame.size());
    ScalerParams p;
    p.level_min = p.level_max = frame.level[0];
    p.rainfall_min = p.rainfall_max = frame.rainfall[0];
    for (std::size_t i = 1; i < m; ++i) {
        p.level_min = std::min(p.level_min, frame.level[i]);
        p.level_max = std::max(p.level_max, frame.level[i]);
        p.rainfall_min = std::min(p.rainfall_min, frame.rainfall[i]);
        p.rainfall_max = std::max(p.rainfall_max, frame.rainfall[i]);
    }
    if (p.level_max <= p.level_min)
        throw TimeSeriesError("degenerate level channel (constant series)");
    if (p.rainfall_max <= p.rainfall_min)
        throw TimeSeriesError("degenerate rainfall channel (constant series)");
    return p;
}

inline double scale_level(const ScalerParams& p, double v) {
    return (v - p.level_min) / (p.level_max - p.level_min);
}
inline double scale_rainfall(const ScalerParams& p, double v) {
    return (v - p.rainfall_min) / (p.rainfall_max - p.rainfall_min);
}
inline double unscale_level(const ScalerParams& p, double v) {
    return v * (p.level_max - p.level_min) + p.level_min;
}
inline double unscale_rainfall(const ScalerParams& p, double v) {
    return v * (p.rainfall_max - p.rainfall_min) + p.rainfall_min;
}

inline TimeSeriesFrame apply_scale(const ScalerParams& p,
                                   const TimeSeriesFrame& frame) {
    TimeSeriesFrame out = frame;
    for (double& v : out.level) v = scale_level(p, v);
    for (double& v : out.rainfall) v = scale_rainfall(p, v);
    return out;
}

inline TimeSeriesFrame invert_scale(const ScalerParams& p,
                                    const TimeSeriesFrame& frame) {
    TimeSeriesFrame out = frame;
    for (double& v : out.level) v = unscale_level(p, v);
    for (double& v : out.rainfall) v = unscale_rainfall(p, v);
    return out;
}

/**
 * Normalized autocorrelation, lags 0..max_lag. Biased, mean-removed
 * estimator divided by the lag-0 value, so result[0] == 1.
 */
inline Vector autocorrelation(std::span<const double> series, int max_lag) {
    const std::size_t n = series.size();
    if (max_lag < 0) throw TimeSeriesError("max_lag must be >= 0");
    if (n <= static_cast<std::size_t>(max_lag))
        throw TimeSeriesError("series length " + std::to_string(n) +
                              " insufficient for max_lag " +
                              std::to_string(max_lag));
    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(n);
    double c0 = 0.0;
    for (double v : series) c0 += (v - mean) * (v - mean);
    if (c0 <= 0.0)
        throw TimeSeriesError("autocorrelation undefined for constant series");
    Vector out(static_cast<std::size_t>(max_lag) + 1, 0.0);
    for (int k = 0; k <= max_lag; ++k) {
        double ck = 0.0;
        for (std::size_t t = 0; t + k < n; ++t)
            ck += (series[t] - mean) * (series[t + k] - mean);
        out[static_cast<std::size_t>(k)] = ck / c0;
    }
    return out;
}

/**
 * Normalized cross-correlation, lags 0..max_lag, where lag k correlates
 * a at time t against b at time t+k (a leading b by k steps).
 */
inline Vector cross_correlation(std::span<const double> a,
                                std::span<const double> b, int max_lag) {
    if (a.size() != b.size())
        throw TimeSeriesError("cross-correlation inputs differ in length");
    const std::size_t n = a.size();
    if (max_lag < 0) throw TimeSeriesError("max_lag must be >= 0");
    if (n <= static_cast<std::size_t>(max_lag))
        throw TimeSeriesError("series length " + std::to_string(n) +
                              " insufficient for max_lag " +
                              std::to_string(max_lag));
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va <= 0.0 || vb <= 0.0)
        throw TimeSeriesError("cross-correlation undefined for constant series");
    const double norm = std::sqrt(va * vb);
    Vector out(static_cast<std::size_t>(max_lag) + 1, 0.0);
    for (int k = 0; k <= max_lag; ++k) {
        double ck = 0.0;
        for (std::size_t t = 0; t + k < n; ++t)
            ck += (a[t] - ma) * (b[t + k] - mb);
        out[static_cast<std::size_t>(k)] = ck / norm;
    }
    return out;
}

namespace detail {

inline std::vector<int> top_k_by_magnitude(const Vector& corr, int first_lag,
                                           int max_lag, double threshold,
                                           int cap) {
    std::vector<int> candidates;
    for (int k = first_lag; k <= max_lag; ++k)
        if (std::abs(corr[static_cast<std::size_t>(k)]) >= threshold)
            candidates.push_back(k);
    if (static_cast<int>(candidates.size()) > cap) {
        std::stable_sort(candidates.begin(), candidates.end(),
                         [&](int x, int y) {
                             return std::abs(corr[static_cast<std::size_t>(x)]) >
                                    std::abs(corr[static_cast<std::size_t>(y)]);
                         });
        candidates.resize(static_cast<std::size_t>(cap));
    }
    std::sort(candidates.begin(), candidates.end());
    return candidates;
}

}  // namespace detail

/**
 * Pick input lags: level lags (>= 1) where |autocorrelation| clears the
 * threshold, rainfall lags (>= 0) where |rainfall->level cross-correlation|
 * does, each list capped to the top `cap` lags by magnitude.
 */
inline LagSelection select_lags(const TimeSeriesFrame& frame, double threshold,
                                int max_lag, int cap = 8) {
    if (threshold < 0.0)
        throw TimeSeriesError("lag threshold must be >= 0");
    if (max_lag < 1) throw TimeSeriesError("max_lag must be >= 1");
    if (cap < 1) throw TimeSeriesError("lag cap must be >= 1");

    const Vector acf = autocorrelation(frame.level, max_lag);
    const Vector xcf = cross_correlation(frame.rainfall, frame.level, max_lag);

    LagSelection sel;
    sel.threshold = threshold;
    sel.max_lag = max_lag;
    sel.level_lags = detail::top_k_by_magnitude(acf, 1, max_lag, threshold, cap);
    sel.rainfall_lags =
        detail::top_k_by_magnitude(xcf, 0, max_lag, threshold, cap);
    if (sel.level_lags.empty())
        throw TimeSeriesError("no level lag clears threshold " +
                              std::to_string(threshold));
    if (sel.rainfall_lags.empty())
        throw TimeSeriesError("no rainfall lag clears threshold " +
                              std::to_string(threshold));
    return sel;
}

/**
 * Build supervised windows over the whole frame with the given scaler.
 * Row i references instant T = max_lag + i; inputs are scaled values at
 * T-lag (level lags first, then rainfall lags, each ascending), targets the
 * scaled level at T+1 .. T+H. N = len - max_lag - H.
 */
inline SupervisedWindowSet make_windows(const TimeSeriesFrame& frame,
                                        const LagSelection& sel,
                                        int horizon,
                                        const ScalerParams& scaler) {
    if (horizon < 1) throw TimeSeriesError("horizon must be >= 1");
    if (sel.level_lags.empty() && sel.rainfall_lags.empty())
        throw TimeSeriesError("empty lag selection");
    for (int l : sel.level_lags)
        if (l < 1) throw TimeSeriesError("level lag must be >= 1");
    for (int l : sel.rainfall_lags)
        if (l < 0) throw TimeSeriesError("rainfall lag must be >= 0");

    const int max_lag = sel.max_selected_lag();
    const std::int64_t n = static_cast<std::int64_t>(frame.size()) - max_lag -
                           horizon;
    if (n <= 0)
        throw TimeSeriesError(
            "frame too short: need length > max_lag + horizon = " +
            std::to_string(max_lag + horizon));

    const std::size_t d = sel.level_lags.size() + sel.rainfall_lags.size();
    SupervisedWindowSet ws;
    ws.scaler = scaler;
    ws.lags = sel;
    ws.horizon = horizon;
    ws.inputs = Matrix(static_cast<std::size_t>(n), d);
    ws.targets = Matrix(static_cast<std::size_t>(n),
                        static_cast<std::size_t>(horizon));

    for (std::int64_t i = 0; i < n; ++i) {
        const std::size_t t = static_cast<std::size_t>(max_lag + i);
        std::size_t col = 0;
        for (int lag : sel.level_lags)
            ws.inputs(static_cast<std::size_t>(i), col++) =
                scale_level(scaler, frame.level[t - static_cast<std::size_t>(lag)]);
        for (int lag : sel.rainfall_lags)
            ws.inputs(static_cast<std::size_t>(i), col++) = scale_rainfall(
                scaler, frame.rainfall[t - static_cast<std::size_t>(lag)]);
        for (int h = 0; h < horizon; ++h)
            ws.targets(static_cast<std::size_t>(i),
                       static_cast<std::size_t>(h)) =
                scale_level(scaler, frame.level[t + 1 + static_cast<std::size_t>(h)]);
    }
    return ws;
}

/**
 * Split by row order: first floor(N*fraction) rows train, rest test, both
 * clamped non-empty. Never shuffles, so train rows all precede test rows.
 */
inline std::pair<SupervisedWindowSet, SupervisedWindowSet> chronological_split(
    const SupervisedWindowSet& ws, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw TimeSeriesError("train fraction must be in (0, 1)");
    const std::size_t n = ws.size();
    if (n < 2) throw TimeSeriesError("need at least 2 rows to split");
    std::size_t n_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(n) * train_fraction));
    n_train = std::min(std::max<std::size_t>(n_train, 1), n - 1);

    auto take = [&](std::size_t begin, std::size_t count) {
        SupervisedWindowSet part;
        part.scaler = ws.scaler;
        part.lags = ws.lags;
        part.horizon = ws.horizon;
        part.inputs = Matrix(count, ws.inputs.cols);
        part.targets = Matrix(count, ws.targets.cols);
        std::copy_n(ws.inputs.data.begin() + static_cast<std::ptrdiff_t>(
                                                  begin * ws.inputs.cols),
                    count * ws.inputs.cols, part.inputs.data.begin());
        std::copy_n(ws.targets.data.begin() + static_cast<std::ptrdiff_t>(
                                                   begin * ws.targets.cols),
                    count * ws.targets.cols, part.targets.data.begin());
        return part;
    };
    return {take(0, n_train), take(n_train, n - n_train)};
}

inline ChannelStats channel_stats(std::span<const double> v) {
    if (v.empty()) throw TimeSeriesError("stats of empty series");
    ChannelStats s;
    s.max = v[0];
    double sum = 0.0;
    for (double x : v) {
        s.max = std::max(s.max, x);
        sum += x;
    }
    s.mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size()));
    return s;
}

inline SummaryStats summary_stats(const TimeSeriesFrame& frame,
                                  std::size_t begin, std::size_t end) {
    if (begin >= end || end > frame.size())
        throw TimeSeriesError("bad stats range");
    SummaryStats s;
    s.level = channel_stats(
        std::span(frame.level).subspan(begin, end - begin));
    s.rainfall = channel_stats(
        std::span(frame.rainfall).subspan(begin, end - begin));
    s.count = end - begin;
    return s;
}

inline SummaryStats summary_stats(const TimeSeriesFrame& frame) {
    return summary_stats(frame, 0, frame.size());
}

}  // namespace pumpcast

#endif  // PUMPCAST_TIMESERIES_HPP
