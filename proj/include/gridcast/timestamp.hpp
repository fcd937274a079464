#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gridcast {

/// Calendar date-time at 15-minute resolution, time-zone naive.
/// Stored as whole minutes since 1970-01-01 00:00; the minute component is
/// restricted to {0, 15, 30, 45}.
class Timestamp {
public:
    static constexpr int kStepMinutes = 15;
    static constexpr int kStepsPerHour = 4;
    static constexpr int kStepsPerDay = 96;

    Timestamp() : minutes_(0) {}

    static Timestamp from_minutes(std::int64_t minutes_since_epoch);
    static Timestamp from_ymd(int year, int month, int day, int hour = 0, int minute = 0);

    /// Parses "YYYY-MM-DDTHH:MM" (also accepts a space separator and an
    /// optional ":SS" suffix, which must be zero).
    static Timestamp parse(const std::string& text);

    std::int64_t minutes_since_epoch() const { return minutes_; }
    std::int64_t steps_since_epoch() const { return minutes_ / kStepMinutes; }
    std::int64_t hours_since_epoch() const { return floor_div(minutes_, 60); }
    std::int64_t days_since_epoch() const { return floor_div(minutes_, 1440); }

    int year() const;
    int month() const;        // 1-12
    int day() const;          // 1-31
    int day_of_year() const;  // 1-366
    int day_of_week() const;  // 0-6, Monday = 0
    int hour() const;         // 0-23
    int minute() const;       // 0, 15, 30, 45
    int quarter_of_hour() const { return minute() / kStepMinutes; }

    Timestamp plus_steps(std::int64_t steps) const { return from_minutes(minutes_ + steps * kStepMinutes); }
    Timestamp plus_hours(std::int64_t hours) const { return from_minutes(minutes_ + hours * 60); }
    Timestamp plus_days(std::int64_t days) const { return from_minutes(minutes_ + days * 1440); }
    Timestamp floor_to_hour() const { return from_minutes(floor_div(minutes_, 60) * 60); }

    std::string to_string() const;  // ISO-8601, minute precision

    friend bool operator==(const Timestamp& a, const Timestamp& b) { return a.minutes_ == b.minutes_; }
    friend bool operator!=(const Timestamp& a, const Timestamp& b) { return a.minutes_ != b.minutes_; }
    friend bool operator<(const Timestamp& a, const Timestamp& b) { return a.minutes_ < b.minutes_; }
    friend bool operator<=(const Timestamp& a, const Timestamp& b) { return a.minutes_ <= b.minutes_; }
    friend bool operator>(const Timestamp& a, const Timestamp& b) { return a.minutes_ > b.minutes_; }
    friend bool operator>=(const Timestamp& a, const Timestamp& b) { return a.minutes_ >= b.minutes_; }

    /// Whole 15-minute steps from a to b (b - a).
    friend std::int64_t steps_between(const Timestamp& a, const Timestamp& b) {
        return (b.minutes_ - a.minutes_) / kStepMinutes;
    }

private:
    explicit Timestamp(std::int64_t minutes) : minutes_(minutes) {}

    static std::int64_t floor_div(std::int64_t a, std::int64_t b) {
        std::int64_t q = a / b;
        return (a % b != 0 && (a < 0) != (b < 0)) ? q - 1 : q;
    }

    std::int64_t minutes_;
};

}  // namespace gridcast
