#pragma once

#include <chrono>
#include <compare>
#include <cstdio>
#include <string>

#include "hydrocal/errors.hpp"

namespace hydrocal {

/**
 * Calendar date on a daily axis.
 *
 * Thin wrapper over a serial day count (days since 1970-01-01) so that
 * arithmetic on daily series is integer arithmetic. Civil-calendar
 * accessors delegate to std::chrono.
 */
class Date {
public:
    Date() = default;

    Date(int year, unsigned month, unsigned day) {
        const std::chrono::year_month_day ymd{std::chrono::year{year},
                                              std::chrono::month{month},
                                              std::chrono::day{day}};
        if (!ymd.ok())
            throw InvalidArgument("invalid date " + std::to_string(year) + "-" +
                                  std::to_string(month) + "-" + std::to_string(day));
        serial_ = std::chrono::sys_days{ymd}.time_since_epoch().count();
    }

    static Date from_serial(int serial) {
        Date d;
        d.serial_ = serial;
        return d;
    }

    /// Parses an ISO-8601 date (YYYY-MM-DD).
    static Date parse(const std::string& text) {
        int y = 0;
        unsigned m = 0, d = 0;
        if (std::sscanf(text.c_str(), "%d-%u-%u", &y, &m, &d) != 3)
            throw IoError("unparseable date '" + text + "'");
        return Date(y, m, d);
    }

    int serial() const { return serial_; }

    int year() const { return int(ymd().year()); }
    unsigned month() const { return unsigned(ymd().month()); }
    unsigned day() const { return unsigned(ymd().day()); }

    /// Day of year, 1-based (Jan 1 = 1; Dec 31 = 365 or 366).
    int day_of_year() const { return serial_ - Date(year(), 1, 1).serial_ + 1; }

    /// Day of year folded onto a 365-day axis: Feb 29 maps to day 59 and all
    /// later leap-year days shift down by one, so March 1 is always day 60.
    int doy365() const {
        const int doy = day_of_year();
        if (!is_leap_year(year()) || doy < 60) return doy;
        return doy == 60 ? 59 : doy - 1;
    }

    static bool is_leap_year(int y) {
        return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    }

    std::string to_string() const {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year(), month(), day());
        return buf;
    }

    Date operator+(int days) const { return from_serial(serial_ + days); }
    Date operator-(int days) const { return from_serial(serial_ - days); }
    int operator-(const Date& other) const { return serial_ - other.serial_; }
    Date& operator++() { ++serial_; return *this; }

    auto operator<=>(const Date&) const = default;

private:
    std::chrono::year_month_day ymd() const {
        return std::chrono::year_month_day{
            std::chrono::sys_days{std::chrono::days{serial_}}};
    }

    int serial_ = 0;
};

/// Inclusive date span.
struct DateRange {
    Date first, last;

    int days() const { return last - first + 1; }
    bool contains(const Date& d) const { return first <= d && d <= last; }
};

/// Month-day window that recurs every year, e.g. May 1 .. Oct 31.
/// Supports windows that wrap the new year (e.g. Nov 1 .. Mar 31).
struct MonthDayWindow {
    unsigned start_month = 1, start_day = 1;
    unsigned end_month = 12, end_day = 31;

    bool contains(const Date& d) const {
        const unsigned key = d.month() * 100 + d.day();
        const unsigned lo = start_month * 100 + start_day;
        const unsigned hi = end_month * 100 + end_day;
        if (lo <= hi) return lo <= key && key <= hi;
        return key >= lo || key <= hi;
    }

    /// Parses "MM-DD:MM-DD".
    static MonthDayWindow parse(const std::string& text) {
        MonthDayWindow w;
        if (std::sscanf(text.c_str(), "%u-%u:%u-%u", &w.start_month, &w.start_day,
                        &w.end_month, &w.end_day) != 4)
            throw IoError("unparseable month-day window '" + text + "'");
        if (w.start_month < 1 || w.start_month > 12 || w.end_month < 1 ||
            w.end_month > 12 || w.start_day < 1 || w.start_day > 31 ||
            w.end_day < 1 || w.end_day > 31)
            throw InvalidArgument("month-day window out of range: " + text);
        return w;
    }

    std::string to_string() const {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%02u-%02u:%02u-%02u", start_month, start_day,
                      end_month, end_day);
        return buf;
    }
};

}  // namespace hydrocal
