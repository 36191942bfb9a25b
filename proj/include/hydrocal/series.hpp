#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "hydrocal/dates.hpp"
#include "hydrocal/errors.hpp"

namespace hydrocal {

/// Meteorological forcing variables. Shortwave and longwave radiation are
/// carried but never adjusted.
enum class Variable {
    precipitation,     // mm hr^-1
    temperature,       // degC
    specific_humidity, // g kg^-1
    wind_speed,        // m s^-1
    surface_pressure,  // hPa
    shortwave,         // W m^-2, pass-through
    longwave,          // W m^-2, pass-through
};

inline const char* variable_name(Variable v) {
    switch (v) {
        case Variable::precipitation: return "precipitation";
        case Variable::temperature: return "temperature";
        case Variable::specific_humidity: return "specific_humidity";
        case Variable::wind_speed: return "wind_speed";
        case Variable::surface_pressure: return "surface_pressure";
        case Variable::shortwave: return "shortwave";
        case Variable::longwave: return "longwave";
    }
    return "?";
}

inline Variable parse_variable(const std::string& name) {
    for (Variable v : {Variable::precipitation, Variable::temperature,
                       Variable::specific_humidity, Variable::wind_speed,
                       Variable::surface_pressure, Variable::shortwave,
                       Variable::longwave})
        if (name == variable_name(v)) return v;
    throw InvalidArgument("unknown forcing variable '" + name + "'");
}

/// True for variables whose values cannot be negative.
inline bool non_negative_variable(Variable v) {
    return v == Variable::precipitation || v == Variable::wind_speed ||
           v == Variable::shortwave || v == Variable::longwave;
}

/// True for variables that receive multiplicative rather than additive
/// adjustment (wind speed and precipitation).
inline bool multiplicative_variable(Variable v) {
    return v == Variable::precipitation || v == Variable::wind_speed;
}

/// True for variables the calibration may adjust at all.
inline bool adjustable_variable(Variable v) {
    return v != Variable::shortwave && v != Variable::longwave;
}

/**
 * Dated univariate forcing series. Every value is present and finite;
 * timestamps are strictly increasing (daily series are the common case but
 * gaps are representable).
 */
struct ForcingSeries {
    Variable variable = Variable::precipitation;
    std::vector<Date> dates;
    std::vector<double> values;

    size_t size() const { return dates.size(); }

    void validate() const {
        if (dates.size() != values.size())
            throw ShapeError("forcing series: dates/values length mismatch");
        for (size_t i = 0; i < values.size(); ++i) {
            if (!std::isfinite(values[i]))
                throw InvalidArgument("forcing series: non-finite value at " +
                                      dates[i].to_string());
            if (non_negative_variable(variable) && values[i] < 0)
                throw InvalidArgument(std::string("forcing series: negative ") +
                                      variable_name(variable) + " at " +
                                      dates[i].to_string());
            if (i > 0 && !(dates[i - 1] < dates[i]))
                throw InvalidArgument("forcing series: dates not strictly increasing at " +
                                      dates[i].to_string());
        }
    }
};

/**
 * Daily discharge at a station or outlet, with a per-day validity mask.
 * Masked days keep a placeholder value that must never be read.
 */
struct StreamflowSeries {
    std::string station_id;
    std::vector<Date> dates;
    std::vector<double> values;    // m^3 s^-1
    std::vector<uint8_t> valid;

    size_t size() const { return dates.size(); }

    size_t valid_count() const {
        size_t n = 0;
        for (uint8_t v : valid) n += v != 0;
        return n;
    }

    void validate() const {
        if (dates.size() != values.size() || dates.size() != valid.size())
            throw ShapeError("streamflow series: field length mismatch");
        for (size_t i = 0; i < dates.size(); ++i) {
            if (i > 0 && !(dates[i - 1] < dates[i]))
                throw InvalidArgument("streamflow series: dates not strictly increasing at " +
                                      dates[i].to_string());
            if (valid[i] && (!std::isfinite(values[i]) || values[i] < 0))
                throw InvalidArgument("streamflow series: invalid discharge at " +
                                      dates[i].to_string());
        }
    }

    /// Index of a date, or -1 when absent.
    int index_of(const Date& d) const {
        auto it = std::lower_bound(dates.begin(), dates.end(), d);
        if (it == dates.end() || *it != d) return -1;
        return int(it - dates.begin());
    }
};

/// Builds an all-valid series on a contiguous daily axis.
inline StreamflowSeries make_daily_series(const std::string& id, Date start,
                                          std::vector<double> values) {
    StreamflowSeries s;
    s.station_id = id;
    s.values = std::move(values);
    s.valid.assign(s.values.size(), 1);
    s.dates.reserve(s.values.size());
    for (size_t i = 0; i < s.values.size(); ++i) s.dates.push_back(start + int(i));
    return s;
}

// ---------------------------------------------------------------------------
// CSV I/O: header "date,value", ISO-8601 dates, one row per day. A blank or
// "nan" value marks a masked day in streamflow series.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::pair<Date, std::string>> read_date_value_rows(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::pair<Date, std::string>> rows;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw IoError(path + ": malformed row '" + line + "'");
        std::string date_field = line.substr(0, comma);
        std::string value_field = line.substr(comma + 1);
        if (!header_seen) {
            header_seen = true;
            if (date_field == "date") continue;  // header row
        }
        rows.emplace_back(Date::parse(date_field), value_field);
    }
    return rows;
}

}  // namespace detail

inline ForcingSeries read_forcing_csv(const std::string& path, Variable variable) {
    ForcingSeries s;
    s.variable = variable;
    for (auto& [date, field] : detail::read_date_value_rows(path)) {
        s.dates.push_back(date);
        try {
            s.values.push_back(std::stod(field));
        } catch (const std::exception&) {
            throw IoError(path + ": bad value '" + field + "' on " + date.to_string());
        }
    }
    s.validate();
    return s;
}

inline void write_forcing_csv(const std::string& path, const ForcingSeries& s) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "date,value\n";
    out.precision(12);
    for (size_t i = 0; i < s.size(); ++i)
        out << s.dates[i].to_string() << ',' << s.values[i] << '\n';
}

inline StreamflowSeries read_flow_csv(const std::string& path,
                                      const std::string& station_id = "") {
    StreamflowSeries s;
    s.station_id = station_id;
    for (auto& [date, field] : detail::read_date_value_rows(path)) {
        s.dates.push_back(date);
        if (field.empty() || field == "nan") {
            s.values.push_back(0.0);
            s.valid.push_back(0);
        } else {
            try {
                s.values.push_back(std::stod(field));
            } catch (const std::exception&) {
                throw IoError(path + ": bad value '" + field + "' on " + date.to_string());
            }
            s.valid.push_back(1);
        }
    }
    s.validate();
    return s;
}

inline void write_flow_csv(const std::string& path, const StreamflowSeries& s) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "date,value\n";
    out.precision(12);
    for (size_t i = 0; i < s.size(); ++i) {
        out << s.dates[i].to_string() << ',';
        if (s.valid[i]) out << s.values[i];
        out << '\n';
    }
}

}  // namespace hydrocal
