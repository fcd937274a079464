#include "gridcast/timestamp.hpp"

#include <cstdio>

namespace gridcast {

namespace {

// Days from 1970-01-01 to year-month-day, proleptic Gregorian.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);             // [0, 399]
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;  // [0, 365]
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;            // [0, 146096]
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
    int year;
    int month;
    int day;
};

CivilDate civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return {static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
    static const int lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap(y)) return 29;
    return lengths[m - 1];
}

}  // namespace

Timestamp Timestamp::from_minutes(std::int64_t minutes_since_epoch) {
    std::int64_t rem = minutes_since_epoch % kStepMinutes;
    if (rem < 0) rem += kStepMinutes;
    if (rem != 0) {
        throw std::invalid_argument("Timestamp: minutes must fall on a 15-minute boundary");
    }
    return Timestamp(minutes_since_epoch);
}

Timestamp Timestamp::from_ymd(int year, int month, int day, int hour, int minute) {
    if (month < 1 || month > 12) throw std::invalid_argument("Timestamp: month out of range");
    if (day < 1 || day > days_in_month(year, month)) throw std::invalid_argument("Timestamp: day out of range");
    if (hour < 0 || hour > 23) throw std::invalid_argument("Timestamp: hour out of range");
    if (minute % kStepMinutes != 0 || minute < 0 || minute > 45) {
        throw std::invalid_argument("Timestamp: minute must be one of {0,15,30,45}");
    }
    return Timestamp(days_from_civil(year, month, day) * 1440 + hour * 60 + minute);
}

Timestamp Timestamp::parse(const std::string& text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    char sep = 0;
    int n = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &s);
    if (n < 6 || (sep != 'T' && sep != ' ')) {
        throw std::invalid_argument("Timestamp: cannot parse '" + text + "'");
    }
    if (n == 7 && s != 0) {
        throw std::invalid_argument("Timestamp: sub-minute precision not supported in '" + text + "'");
    }
    return from_ymd(y, mo, d, h, mi);
}

int Timestamp::year() const { return civil_from_days(days_since_epoch()).year; }
int Timestamp::month() const { return civil_from_days(days_since_epoch()).month; }
int Timestamp::day() const { return civil_from_days(days_since_epoch()).day; }

int Timestamp::day_of_year() const {
    CivilDate c = civil_from_days(days_since_epoch());
    return static_cast<int>(days_since_epoch() - days_from_civil(c.year, 1, 1)) + 1;
}

int Timestamp::day_of_week() const {
    // 1970-01-01 was a Thursday; Monday = 0.
    std::int64_t d = days_since_epoch();
    return static_cast<int>(((d + 3) % 7 + 7) % 7);
}

int Timestamp::hour() const {
    std::int64_t m = minutes_ - days_since_epoch() * 1440;
    return static_cast<int>(m / 60);
}

int Timestamp::minute() const {
    std::int64_t m = minutes_ - days_since_epoch() * 1440;
    return static_cast<int>(m % 60);
}

std::string Timestamp::to_string() const {
    CivilDate c = civil_from_days(days_since_epoch());
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d", c.year, c.month, c.day, hour(), minute());
    return buf;
}

}  // namespace gridcast
