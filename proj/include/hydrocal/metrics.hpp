#pragma once

/**
 * @file metrics.hpp
 * @brief Streamflow skill metrics (DIFF, NSE, RMSD, BIAS, COR), the
 *        satisfactory-station criterion, and the data-model labels that
 *        classify each comparison.
 */

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hydrocal/multiscale.hpp"

namespace hydrocal {

/// Whether the reference (C) and representation (U) of a comparison carry
/// error: target (reference has error), truth (reference error-free), or
/// truth-truth (both error-free). Metadata only; never affects metrics.
enum class DataModel { target, truth, truth_truth };

inline const char* data_model_name(DataModel m) {
    switch (m) {
        case DataModel::target: return "target";
        case DataModel::truth: return "truth";
        case DataModel::truth_truth: return "truth-truth";
    }
    return "?";
}

/// Label from declared error magnitudes of the two roles.
inline DataModel classify_data_model(double reference_error, double representation_error) {
    if (reference_error != 0.0) return DataModel::target;
    return representation_error == 0.0 ? DataModel::truth_truth : DataModel::truth;
}

/// Aligned reference/representation series pair with its data-model label.
struct ComparisonPair {
    StreamflowSeries reference;        // C
    StreamflowSeries representation;   // U
    DataModel data_model = DataModel::target;
};

enum class Averaging { day, month, year };

inline const char* averaging_name(Averaging a) {
    switch (a) {
        case Averaging::day: return "day";
        case Averaging::month: return "month";
        case Averaging::year: return "year";
    }
    return "?";
}

inline Averaging parse_averaging(const std::string& name) {
    if (name == "day" || name == "daily") return Averaging::day;
    if (name == "month" || name == "monthly") return Averaging::month;
    if (name == "year" || name == "annual") return Averaging::year;
    throw InvalidArgument("unknown averaging '" + name + "'");
}

/// Completeness thresholds for emitting an averaged sample.
struct AveragingOptions {
    int min_days_per_month = 15;
    int min_days_per_year = 300;
};

struct MetricsReport {
    std::optional<double> diff_pct;   // undefined when sum |C| = 0
    std::optional<double> nse;        // undefined when var(C) = 0
    double rmsd = 0.0;                // m^3 s^-1
    double bias = 0.0;                // m^3 s^-1
    std::optional<double> cor;        // undefined when var(C) or var(U) = 0
    int n = 0;
    bool satisfactory = false;        // nse > 0.5 and diff < 15%
    Averaging averaging = Averaging::day;
    DataModel data_model = DataModel::target;
};

namespace detail {

/// Jointly valid (C, U) samples after the requested averaging. Monthly and
/// annual averaging require enough jointly valid days per calendar period.
inline std::pair<std::vector<double>, std::vector<double>> averaged_samples(
    const ComparisonPair& pair, Averaging averaging, const AveragingOptions& opts) {
    const StreamflowSeries& c = pair.reference;
    const StreamflowSeries& u = pair.representation;

    std::vector<double> cs, us;
    if (averaging == Averaging::day) {
        size_t j = 0;
        for (size_t i = 0; i < c.size(); ++i) {
            if (!c.valid[i]) continue;
            while (j < u.size() && u.dates[j] < c.dates[i]) ++j;
            if (j < u.size() && u.dates[j] == c.dates[i] && u.valid[j]) {
                cs.push_back(c.values[i]);
                us.push_back(u.values[j]);
            }
        }
        return {cs, us};
    }

    struct Acc {
        double c_sum = 0, u_sum = 0;
        int n = 0;
    };
    std::map<int, Acc> periods;
    auto key = [&](const Date& d) {
        return averaging == Averaging::month ? d.year() * 100 + int(d.month()) : d.year();
    };
    size_t j = 0;
    for (size_t i = 0; i < c.size(); ++i) {
        if (!c.valid[i]) continue;
        while (j < u.size() && u.dates[j] < c.dates[i]) ++j;
        if (j < u.size() && u.dates[j] == c.dates[i] && u.valid[j]) {
            Acc& a = periods[key(c.dates[i])];
            a.c_sum += c.values[i];
            a.u_sum += u.values[j];
            a.n += 1;
        }
    }
    const int min_days = averaging == Averaging::month ? opts.min_days_per_month
                                                       : opts.min_days_per_year;
    for (const auto& [k, a] : periods) {
        if (a.n < min_days) continue;
        cs.push_back(a.c_sum / a.n);
        us.push_back(a.u_sum / a.n);
    }
    return {cs, us};
}

}  // namespace detail

/**
 * Evaluates the performance suite over the jointly valid samples:
 *   DIFF = sum|U-C| / sum|C| (percent), NSE = 1 - sum(U-C)^2/sum(C-Cbar)^2,
 *   RMSD = sqrt(sum(U-C)^2/n), BIAS = sum(U-C)/n, COR = Pearson correlation.
 * Undefined metrics are reported independently as absent; the others are
 * still computed. Satisfactory means NSE > 0.5 and DIFF < 15%.
 */
inline MetricsReport evaluate(const ComparisonPair& pair, Averaging averaging,
                              const AveragingOptions& opts = {}) {
    pair.reference.validate();
    pair.representation.validate();
    const auto [c, u] = detail::averaged_samples(pair, averaging, opts);
    const int n = int(c.size());
    if (n < 2)
        throw InsufficientData("metrics need at least 2 jointly valid samples, got " +
                               std::to_string(n));

    double c_sum = 0, u_sum = 0;
    for (int i = 0; i < n; ++i) {
        c_sum += c[i];
        u_sum += u[i];
    }
    const double c_bar = c_sum / n, u_bar = u_sum / n;

    double abs_err = 0, abs_c = 0, sq_err = 0, err = 0;
    double c_var = 0, u_var = 0, cov = 0;
    for (int i = 0; i < n; ++i) {
        const double d = u[i] - c[i];
        abs_err += std::abs(d);
        abs_c += std::abs(c[i]);
        sq_err += d * d;
        err += d;
        c_var += (c[i] - c_bar) * (c[i] - c_bar);
        u_var += (u[i] - u_bar) * (u[i] - u_bar);
        cov += (c[i] - c_bar) * (u[i] - u_bar);
    }

    MetricsReport report;
    report.n = n;
    report.averaging = averaging;
    report.data_model = pair.data_model;
    report.rmsd = std::sqrt(sq_err / n);
    report.bias = err / n;
    if (abs_c > 0) report.diff_pct = 100.0 * abs_err / abs_c;
    if (c_var > 0) report.nse = 1.0 - sq_err / c_var;
    if (c_var > 0 && u_var > 0) report.cor = cov / std::sqrt(c_var * u_var);
    report.satisfactory =
        report.nse && report.diff_pct && *report.nse > 0.5 && *report.diff_pct < 15.0;
    return report;
}

/// Per-station aggregate in the style of the summary tables: metric
/// averages, satisfactory count, and count of stations whose NSE improved
/// over a named baseline.
struct StationSummary {
    int stations = 0;
    int satisfactory = 0;
    int improved_nse = 0;   // vs baseline, when given
    std::optional<double> mean_diff_pct, mean_nse, mean_cor;
};

inline StationSummary station_summary(const std::vector<MetricsReport>& reports,
                                      const std::vector<MetricsReport>* baseline = nullptr) {
    if (reports.empty()) throw InsufficientData("station_summary needs at least one report");
    if (baseline && baseline->size() != reports.size())
        throw ShapeError("station_summary: baseline size mismatch");
    StationSummary s;
    s.stations = int(reports.size());
    double diff = 0, nse = 0, cor = 0;
    int n_diff = 0, n_nse = 0, n_cor = 0;
    for (size_t i = 0; i < reports.size(); ++i) {
        const MetricsReport& r = reports[i];
        s.satisfactory += r.satisfactory;
        if (r.diff_pct) {
            diff += *r.diff_pct;
            ++n_diff;
        }
        if (r.nse) {
            nse += *r.nse;
            ++n_nse;
        }
        if (r.cor) {
            cor += *r.cor;
            ++n_cor;
        }
        if (baseline && r.nse && (*baseline)[i].nse && *r.nse > *(*baseline)[i].nse)
            ++s.improved_nse;
    }
    if (n_diff) s.mean_diff_pct = diff / n_diff;
    if (n_nse) s.mean_nse = nse / n_nse;
    if (n_cor) s.mean_cor = cor / n_cor;
    return s;
}

// ---------------------------------------------------------------------------
// Persistence: JSON report plus a CSV table with one row per
// (station, calibration, averaging) in the summary-table column layout.
// ---------------------------------------------------------------------------

inline nlohmann::json report_to_json(const MetricsReport& r) {
    nlohmann::json j = {
        {"n", r.n},
        {"rmsd", r.rmsd},
        {"bias", r.bias},
        {"satisfactory", r.satisfactory},
        {"averaging", averaging_name(r.averaging)},
        {"data_model", data_model_name(r.data_model)},
    };
    j["diff_pct"] = r.diff_pct ? nlohmann::json(*r.diff_pct) : nlohmann::json();
    j["nse"] = r.nse ? nlohmann::json(*r.nse) : nlohmann::json();
    j["cor"] = r.cor ? nlohmann::json(*r.cor) : nlohmann::json();
    return j;
}

struct TableRow {
    std::string station, calibration;
    MetricsReport report;
};

inline void write_metrics_table_csv(const std::string& path,
                                    const std::vector<TableRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "station,calibration,averaging,satisfactory,diff_pct,nse,cor,rmsd,bias,n\n";
    out.precision(10);
    auto opt = [&](const std::optional<double>& v) {
        if (v) out << *v;
    };
    for (const TableRow& row : rows) {
        out << row.station << ',' << row.calibration << ','
            << averaging_name(row.report.averaging) << ','
            << (row.report.satisfactory ? 1 : 0) << ',';
        opt(row.report.diff_pct);
        out << ',';
        opt(row.report.nse);
        out << ',';
        opt(row.report.cor);
        out << ',' << row.report.rmsd << ',' << row.report.bias << ',' << row.report.n
            << '\n';
    }
}

}  // namespace hydrocal
