#pragma once

/**
 * @file forcing.hpp
 * @brief Day-of-year climatologies, sinusoidal annual-cycle fits, and the
 *        daily additive/multiplicative adjustments that calibrate model
 *        forcing to a reference.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <string>

#include "hydrocal/series.hpp"

namespace hydrocal {

/// Fixed annual period of the sinusoid fit, in days.
inline constexpr double kAnnualPeriodDays = 365.25;

/// Mean value for each of the 365 folded days of the year.
struct AnnualCycle {
    std::array<double, 365> doy_values{};

    double& operator[](int doy) { return doy_values[doy - 1]; }    // doy in 1..365
    double operator[](int doy) const { return doy_values[doy - 1]; }

    void validate() const {
        for (double v : doy_values)
            if (!std::isfinite(v)) throw InvalidArgument("annual cycle has non-finite entry");
    }
};

/// y(d) = a + b cos(2 pi d / 365.25) + c sin(2 pi d / 365.25), d = day of year.
struct SinusoidFit {
    double mean = 0.0;             // a
    double cos_amplitude = 0.0;    // b
    double sin_amplitude = 0.0;    // c

    double evaluate(double doy) const {
        const double angle = 2.0 * std::numbers::pi * doy / kAnnualPeriodDays;
        return mean + cos_amplitude * std::cos(angle) + sin_amplitude * std::sin(angle);
    }
};

enum class AdjustmentMode { additive, multiplicative };

inline const char* adjustment_mode_name(AdjustmentMode m) {
    return m == AdjustmentMode::additive ? "additive" : "multiplicative";
}

inline AdjustmentMode parse_adjustment_mode(const std::string& name) {
    if (name == "additive" || name == "add") return AdjustmentMode::additive;
    if (name == "multiplicative" || name == "mul") return AdjustmentMode::multiplicative;
    throw InvalidArgument("unknown adjustment mode '" + name + "'");
}

/// Day-of-year offsets (additive) or factors (multiplicative).
struct DailyAdjustment {
    AdjustmentMode mode = AdjustmentMode::additive;
    std::array<double, 365> doy_factors{};

    double factor(int doy) const { return doy_factors[doy - 1]; }

    void validate() const {
        for (double f : doy_factors) {
            if (!std::isfinite(f)) throw InvalidArgument("adjustment has non-finite factor");
            if (mode == AdjustmentMode::multiplicative && !(f > 0))
                throw InvalidArgument("multiplicative factors must be positive");
        }
    }
};

/**
 * Mean of all samples falling on each folded day of the year within
 * [first_year, last_year]. Feb 29 samples fold into day 59.
 * Throws MissingDoy for any day with no samples.
 */
inline AnnualCycle doy_climatology(const ForcingSeries& series, int first_year,
                                   int last_year) {
    series.validate();
    std::array<double, 365> sums{};
    std::array<int, 365> counts{};
    for (size_t i = 0; i < series.size(); ++i) {
        const int y = series.dates[i].year();
        if (y < first_year || y > last_year) continue;
        const int d = series.dates[i].doy365();
        sums[d - 1] += series.values[i];
        counts[d - 1] += 1;
    }
    AnnualCycle cycle;
    for (int d = 1; d <= 365; ++d) {
        if (counts[d - 1] == 0) throw MissingDoy(d);
        cycle[d] = sums[d - 1] / counts[d - 1];
    }
    return cycle;
}

/**
 * Least-squares fit of a single-harmonic sinusoid with fixed annual period.
 * The 3x3 normal equations are accumulated over the 365 cycle entries and
 * solved in closed form (Cramer's rule).
 */
inline SinusoidFit fit_sinusoid(const AnnualCycle& cycle) {
    cycle.validate();
    // Normal equations for basis {1, cos(w d), sin(w d)}.
    double s_cc = 0, s_ss = 0, s_cs = 0, s_c = 0, s_s = 0;
    double s_y = 0, s_yc = 0, s_ys = 0;
    const double w = 2.0 * std::numbers::pi / kAnnualPeriodDays;
    for (int d = 1; d <= 365; ++d) {
        const double cw = std::cos(w * d), sw = std::sin(w * d);
        const double y = cycle[d];
        s_c += cw;
        s_s += sw;
        s_cc += cw * cw;
        s_ss += sw * sw;
        s_cs += cw * sw;
        s_y += y;
        s_yc += y * cw;
        s_ys += y * sw;
    }
    const double n = 365.0;
    // | n    s_c   s_s  | |a|   |s_y |
    // | s_c  s_cc  s_cs | |b| = |s_yc|
    // | s_s  s_cs  s_ss | |c|   |s_ys|
    auto det3 = [](double a11, double a12, double a13, double a21, double a22,
                   double a23, double a31, double a32, double a33) {
        return a11 * (a22 * a33 - a23 * a32) - a12 * (a21 * a33 - a23 * a31) +
               a13 * (a21 * a32 - a22 * a31);
    };
    const double det = det3(n, s_c, s_s, s_c, s_cc, s_cs, s_s, s_cs, s_ss);
    SinusoidFit fit;
    fit.mean = det3(s_y, s_c, s_s, s_yc, s_cc, s_cs, s_ys, s_cs, s_ss) / det;
    fit.cos_amplitude = det3(n, s_y, s_s, s_c, s_yc, s_cs, s_s, s_ys, s_ss) / det;
    fit.sin_amplitude = det3(n, s_c, s_y, s_c, s_cc, s_yc, s_s, s_cs, s_ys) / det;
    return fit;
}

/// Options for deriving multiplicative adjustments.
struct AdjustmentOptions {
    double floor_fraction = 1e-3;   // floor = fraction of the reference mean
    double min_factor = 0.1;
    double max_factor = 10.0;
};

/**
 * Daily adjustment taking the model annual cycle to the reference cycle.
 * Additive: factor(d) = ref(d) - mod(d). Multiplicative:
 * factor(d) = ref(d) / max(mod(d), floor), clamped to [min, max].
 */
inline DailyAdjustment derive_adjustment(const SinusoidFit& reference,
                                         const SinusoidFit& model, AdjustmentMode mode,
                                         const AdjustmentOptions& opts = {}) {
    DailyAdjustment adj;
    adj.mode = mode;
    const double floor = std::max(opts.floor_fraction * std::abs(reference.mean), 1e-12);
    for (int d = 1; d <= 365; ++d) {
        const double ref = reference.evaluate(d);
        const double mod = model.evaluate(d);
        if (mode == AdjustmentMode::additive) {
            adj.doy_factors[d - 1] = ref - mod;
        } else {
            const double f = ref / std::max(mod, floor);
            adj.doy_factors[d - 1] = std::clamp(f, opts.min_factor, opts.max_factor);
        }
    }
    adj.validate();
    return adj;
}

/**
 * Applies a daily adjustment to every sample by its folded day of year.
 * Multiplicative results are clamped at zero; timestamps are untouched.
 * The adjustment mode must match the variable's calibration convention.
 */
inline ForcingSeries apply_adjustment(const ForcingSeries& series,
                                      const DailyAdjustment& adj) {
    series.validate();
    adj.validate();
    if (adjustable_variable(series.variable)) {
        const AdjustmentMode expected = multiplicative_variable(series.variable)
                                            ? AdjustmentMode::multiplicative
                                            : AdjustmentMode::additive;
        if (adj.mode != expected)
            throw InvalidArgument(std::string("adjustment mode mismatch for ") +
                                  variable_name(series.variable));
    } else {
        throw InvalidArgument(std::string(variable_name(series.variable)) +
                              " is a pass-through variable and is never adjusted");
    }
    ForcingSeries out = series;
    for (size_t i = 0; i < out.size(); ++i) {
        const double f = adj.factor(out.dates[i].doy365());
        if (adj.mode == AdjustmentMode::additive)
            out.values[i] += f;
        else
            out.values[i] = std::max(out.values[i] * f, 0.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Adjustment CSV: "# mode: <additive|multiplicative>" comment line, then
// header "doy,factor" and one row per folded day of year.
// ---------------------------------------------------------------------------

inline void write_adjustment_csv(const std::string& path, const DailyAdjustment& adj) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "# mode: " << adjustment_mode_name(adj.mode) << "\n";
    out << "doy,factor\n";
    out.precision(12);
    for (int d = 1; d <= 365; ++d) out << d << ',' << adj.factor(d) << '\n';
}

inline DailyAdjustment read_adjustment_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    DailyAdjustment adj;
    std::string line;
    bool mode_seen = false;
    int rows = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.rfind("# mode:", 0) == 0) {
            std::string name = line.substr(7);
            name.erase(0, name.find_first_not_of(' '));
            adj.mode = parse_adjustment_mode(name);
            mode_seen = true;
            continue;
        }
        if (line.empty() || line[0] == '#' || line.rfind("doy", 0) == 0) continue;
        int doy = 0;
        double factor = 0;
        if (std::sscanf(line.c_str(), "%d,%lf", &doy, &factor) != 2 || doy < 1 || doy > 365)
            throw IoError(path + ": malformed adjustment row '" + line + "'");
        adj.doy_factors[doy - 1] = factor;
        ++rows;
    }
    if (!mode_seen) throw IoError(path + ": missing '# mode:' line");
    if (rows != 365) throw IoError(path + ": expected 365 rows, got " + std::to_string(rows));
    adj.validate();
    return adj;
}

}  // namespace hydrocal
