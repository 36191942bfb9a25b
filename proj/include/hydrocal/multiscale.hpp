#pragma once

/**
 * @file multiscale.hpp
 * @brief Multi-scale input construction for the post-processing networks:
 *        12-day centered averages, calendar-period means expanded back to
 *        days, and rank matching of asynchronous daily series.
 */

#include <algorithm>
#include <map>
#include <numeric>
#include <vector>

#include "hydrocal/series.hpp"

namespace hydrocal {

/**
 * 12-day centered average: value(t) = mean of valid values in [t-6, t+5]
 * by date, truncated at the series edges. A day whose window holds no valid
 * value is masked.
 */
inline StreamflowSeries centered_average_12(const StreamflowSeries& series) {
    series.validate();
    StreamflowSeries out = series;
    const size_t n = series.size();
    size_t lo = 0, hi = 0;  // window [lo, hi) by index, advanced with t
    for (size_t t = 0; t < n; ++t) {
        const Date from = series.dates[t] - 6, to = series.dates[t] + 5;
        while (lo < n && series.dates[lo] < from) ++lo;
        if (hi < lo) hi = lo;
        while (hi < n && series.dates[hi] <= to) ++hi;
        double sum = 0.0;
        int count = 0;
        for (size_t i = lo; i < hi; ++i) {
            if (!series.valid[i]) continue;
            sum += series.values[i];
            ++count;
        }
        if (count == 0) {
            out.values[t] = 0.0;
            out.valid[t] = 0;
        } else {
            out.values[t] = sum / count;
            out.valid[t] = 1;
        }
    }
    return out;
}

enum class Period { month, year };

/**
 * Replaces each day's value with the mean of valid daily values in its
 * calendar month or year. Periods with no valid day are masked.
 */
inline StreamflowSeries expand_period_mean(const StreamflowSeries& series, Period period) {
    series.validate();
    auto key = [&](const Date& d) {
        return period == Period::month ? d.year() * 100 + int(d.month()) : d.year();
    };
    std::map<int, std::pair<double, int>> sums;
    for (size_t i = 0; i < series.size(); ++i) {
        if (!series.valid[i]) continue;
        auto& [sum, count] = sums[key(series.dates[i])];
        sum += series.values[i];
        ++count;
    }
    StreamflowSeries out = series;
    for (size_t i = 0; i < series.size(); ++i) {
        const auto it = sums.find(key(series.dates[i]));
        if (it == sums.end()) {
            out.values[i] = 0.0;
            out.valid[i] = 0;
        } else {
            out.values[i] = it->second.first / it->second.second;
            out.valid[i] = 1;
        }
    }
    return out;
}

/**
 * Rank matching for asynchronous series: the k-th ranked valid model day
 * receives the k-th ranked observed value, output in the model's original
 * time order. Ties keep first-occurrence (time) order, so the result is
 * deterministic; the target multiset equals the observation multiset.
 */
inline StreamflowSeries rank_match(const StreamflowSeries& model_daily,
                                   const StreamflowSeries& obs_daily) {
    model_daily.validate();
    obs_daily.validate();
    std::vector<size_t> model_idx, obs_idx;
    for (size_t i = 0; i < model_daily.size(); ++i)
        if (model_daily.valid[i]) model_idx.push_back(i);
    for (size_t i = 0; i < obs_daily.size(); ++i)
        if (obs_daily.valid[i]) obs_idx.push_back(i);
    if (model_idx.size() != obs_idx.size())
        throw ShapeError("rank_match: valid day counts differ (" +
                         std::to_string(model_idx.size()) + " vs " +
                         std::to_string(obs_idx.size()) + ")");

    std::stable_sort(model_idx.begin(), model_idx.end(), [&](size_t a, size_t b) {
        return model_daily.values[a] < model_daily.values[b];
    });
    std::stable_sort(obs_idx.begin(), obs_idx.end(), [&](size_t a, size_t b) {
        return obs_daily.values[a] < obs_daily.values[b];
    });

    StreamflowSeries target = model_daily;
    for (size_t k = 0; k < model_idx.size(); ++k)
        target.values[model_idx[k]] = obs_daily.values[obs_idx[k]];
    return target;
}

/// Daily series with its derived channels, all sharing the daily date axis.
struct MultiScaleSeries {
    StreamflowSeries daily;
    StreamflowSeries smoothed_12d;
    StreamflowSeries monthly_mean;
    StreamflowSeries annual_mean;

    static MultiScaleSeries from_daily(const StreamflowSeries& daily) {
        MultiScaleSeries m;
        m.daily = daily;
        m.smoothed_12d = centered_average_12(daily);
        m.monthly_mean = expand_period_mean(daily, Period::month);
        m.annual_mean = expand_period_mean(daily, Period::year);
        return m;
    }

    const StreamflowSeries& channel(int i, int channels) const {
        if (channels == 2) {
            if (i == 0) return daily;
            if (i == 1) return smoothed_12d;
        } else if (channels == 3) {
            if (i == 0) return daily;
            if (i == 1) return monthly_mean;
            if (i == 2) return annual_mean;
        }
        throw InvalidArgument("bad multiscale channel request");
    }
};

}  // namespace hydrocal
