#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

namespace cstn {

// Timestamps are naive local time: seconds since 1970-01-01 00:00 with no
// timezone applied anywhere.  Day-of-week therefore falls straight out of the
// civil date.

// Days since 1970-01-01 for a proleptic Gregorian date (Howard Hinnant's
// days_from_civil construction).
inline std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

inline std::int64_t make_time(int y, int mo, int d, int h = 0, int mi = 0, int s = 0) {
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

// 0 = Monday ... 6 = Sunday (1970-01-01 was a Thursday).
inline int day_of_week(std::int64_t time_sec) {
    const std::int64_t days = floor_div(time_sec, 86400);
    return static_cast<int>(((days + 3) % 7 + 7) % 7);
}

inline bool is_weekend(std::int64_t time_sec) { return day_of_week(time_sec) >= 5; }

inline int seconds_of_day(std::int64_t time_sec) {
    return static_cast<int>(time_sec - floor_div(time_sec, 86400) * 86400);
}

// "YYYY-MM-DD HH:MM:SS" (a 'T' separator is tolerated; seconds optional).
inline std::optional<std::int64_t> parse_datetime(const std::string& s) {
    int y, mo, d, h, mi, sec = 0;
    char sep;
    int n = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &sec);
    if (n < 6 || (sep != ' ' && sep != 'T')) return std::nullopt;
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0 || sec > 60)
        return std::nullopt;
    return make_time(y, mo, d, h, mi, sec);
}

inline std::string format_datetime(std::int64_t time_sec) {
    int y, mo, d;
    civil_from_days(floor_div(time_sec, 86400), y, mo, d);
    const int sod = seconds_of_day(time_sec);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d %02d:%02d:%02d", y, mo, d, sod / 3600,
                  (sod % 3600) / 60, sod % 60);
    return std::string(buf);
}

}  // namespace cstn
