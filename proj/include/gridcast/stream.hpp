#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridcast/timestamp.hpp"

namespace gridcast {

/// One observed sample: the stored value and whether the source actually
/// provided it. Invalid entries keep whatever value was stored (usually 0).
struct SamplePoint {
    double value = 0.0;
    bool valid = false;
};

/// Regularly spaced series at 15-minute or hourly resolution. Timestamps are
/// implicit: entry i lives at start + i * resolution.
class Stream {
public:
    Stream() = default;
    Stream(std::string name, int resolution_minutes, Timestamp start,
           std::vector<double> values, std::vector<std::uint8_t> valid);

    /// All-valid stream from raw values.
    static Stream dense(std::string name, int resolution_minutes, Timestamp start,
                        std::vector<double> values);

    const std::string& name() const { return name_; }
    int resolution_minutes() const { return resolution_; }
    Timestamp start() const { return start_; }
    std::size_t size() const { return values_.size(); }
    Timestamp timestamp_at(std::size_t i) const {
        return Timestamp::from_minutes(start_.minutes_since_epoch() +
                                       static_cast<std::int64_t>(i) * resolution_);
    }
    Timestamp end() const;  // timestamp of the last entry

    /// Index of t in this stream; throws std::out_of_range if t is outside the
    /// span or not on this stream's grid.
    std::size_t index_of(Timestamp t) const;
    bool contains(Timestamp t) const;

    SamplePoint at(std::size_t i) const { return {values_[i], valid_[i] != 0}; }
    double value_at(std::size_t i) const { return values_[i]; }
    bool valid_at(std::size_t i) const { return valid_[i] != 0; }

    const std::vector<double>& values() const { return values_; }
    const std::vector<std::uint8_t>& valid_mask() const { return valid_; }

    std::size_t invalid_count() const;
    double invalid_fraction() const;

private:
    std::string name_;
    int resolution_ = Timestamp::kStepMinutes;
    Timestamp start_;
    std::vector<double> values_;
    std::vector<std::uint8_t> valid_;
};

/// Values at steps t-past_steps ... t+future_steps on the stream's native
/// grid; the step at t itself is present only when include_t is set. The past
/// block therefore ends at t-1 and the future block starts at t.
std::vector<SamplePoint> slice_window(const Stream& stream, Timestamp t, int past_steps,
                                      int future_steps, bool include_t);

/// Value of the hourly stream for the hour enclosing t.
SamplePoint hourly_at(const Stream& stream, Timestamp t);

/// Aligned multi-resolution market record. Real-time price and demand run at
/// 15-minute resolution; demand forecast, day-ahead price and wind are hourly.
/// Every stream covers exactly [span_start, span_end], padded with invalid
/// entries where the source had none.
class MarketDataset {
public:
    MarketDataset() = default;
    MarketDataset(Stream rt_price, Stream rt_demand, Stream demand_forecast, Stream da_price,
                  Stream wind);

    const Stream& rt_price() const { return rt_price_; }
    const Stream& rt_demand() const { return rt_demand_; }
    const Stream& demand_forecast() const { return demand_forecast_; }
    const Stream& da_price() const { return da_price_; }
    const Stream& wind() const { return wind_; }

    Timestamp span_start() const { return rt_price_.start(); }
    Timestamp span_end() const { return rt_price_.end(); }
    std::size_t n_steps() const { return rt_price_.size(); }
    std::size_t n_hours() const { return da_price_.size(); }

    /// Stream lookup by canonical name; throws std::invalid_argument for
    /// unknown names.
    const Stream& stream(const std::string& name) const;
    static const std::vector<std::string>& stream_names();

private:
    Stream rt_price_;
    Stream rt_demand_;
    Stream demand_forecast_;
    Stream da_price_;
    Stream wind_;
};

}  // namespace gridcast
