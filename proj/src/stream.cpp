#include "gridcast/stream.hpp"

#include <algorithm>
#include <stdexcept>

namespace gridcast {

Stream::Stream(std::string name, int resolution_minutes, Timestamp start,
               std::vector<double> values, std::vector<std::uint8_t> valid)
    : name_(std::move(name)),
      resolution_(resolution_minutes),
      start_(start),
      values_(std::move(values)),
      valid_(std::move(valid)) {
    if (resolution_ != 15 && resolution_ != 60) {
        throw std::invalid_argument("Stream '" + name_ + "': resolution must be 15 or 60 minutes");
    }
    if (values_.size() != valid_.size()) {
        throw std::invalid_argument("Stream '" + name_ + "': values/valid length mismatch");
    }
    if (values_.empty()) {
        throw std::invalid_argument("Stream '" + name_ + "': empty");
    }
    if (resolution_ == 60 && start_.minute() != 0) {
        throw std::invalid_argument("Stream '" + name_ + "': hourly stream must start on the hour");
    }
}

Stream Stream::dense(std::string name, int resolution_minutes, Timestamp start,
                     std::vector<double> values) {
    std::vector<std::uint8_t> valid(values.size(), 1);
    return Stream(std::move(name), resolution_minutes, start, std::move(values), std::move(valid));
}

Timestamp Stream::end() const { return timestamp_at(values_.size() - 1); }

bool Stream::contains(Timestamp t) const {
    std::int64_t delta = t.minutes_since_epoch() - start_.minutes_since_epoch();
    if (delta < 0 || delta % resolution_ != 0) return false;
    return static_cast<std::size_t>(delta / resolution_) < values_.size();
}

std::size_t Stream::index_of(Timestamp t) const {
    std::int64_t delta = t.minutes_since_epoch() - start_.minutes_since_epoch();
    if (delta < 0 || delta % resolution_ != 0 ||
        static_cast<std::size_t>(delta / resolution_) >= values_.size()) {
        throw std::out_of_range("Stream '" + name_ + "': " + t.to_string() + " outside span");
    }
    return static_cast<std::size_t>(delta / resolution_);
}

std::size_t Stream::invalid_count() const {
    return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), std::uint8_t{0}));
}

double Stream::invalid_fraction() const {
    return static_cast<double>(invalid_count()) / static_cast<double>(valid_.size());
}

std::vector<SamplePoint> slice_window(const Stream& stream, Timestamp t, int past_steps,
                                      int future_steps, bool include_t) {
    if (past_steps < 0 || future_steps < 0) {
        throw std::invalid_argument("slice_window: negative window width");
    }
    const std::int64_t center = static_cast<std::int64_t>(stream.index_of(t));
    const std::int64_t lo = center - past_steps;
    const std::int64_t hi = center + future_steps;
    if (lo < 0 || hi >= static_cast<std::int64_t>(stream.size())) {
        throw std::out_of_range("slice_window: window [" + std::to_string(lo) + ", " +
                                std::to_string(hi) + "] exceeds stream '" + stream.name() + "'");
    }
    std::vector<SamplePoint> out;
    out.reserve(static_cast<std::size_t>(past_steps + future_steps + (include_t ? 1 : 0)));
    for (std::int64_t i = lo; i <= hi; ++i) {
        if (i == center && !include_t) continue;
        out.push_back(stream.at(static_cast<std::size_t>(i)));
    }
    return out;
}

SamplePoint hourly_at(const Stream& stream, Timestamp t) {
    if (stream.resolution_minutes() != 60) {
        throw std::invalid_argument("hourly_at: stream '" + stream.name() + "' is not hourly");
    }
    return stream.at(stream.index_of(t.floor_to_hour()));
}

MarketDataset::MarketDataset(Stream rt_price, Stream rt_demand, Stream demand_forecast,
                             Stream da_price, Stream wind)
    : rt_price_(std::move(rt_price)),
      rt_demand_(std::move(rt_demand)),
      demand_forecast_(std::move(demand_forecast)),
      da_price_(std::move(da_price)),
      wind_(std::move(wind)) {
    if (rt_price_.resolution_minutes() != 15 || rt_demand_.resolution_minutes() != 15) {
        throw std::invalid_argument("MarketDataset: rt streams must be 15-minute");
    }
    for (const Stream* s : {&demand_forecast_, &da_price_, &wind_}) {
        if (s->resolution_minutes() != 60) {
            throw std::invalid_argument("MarketDataset: stream '" + s->name() + "' must be hourly");
        }
    }
    if (rt_price_.start().minute() != 0) {
        throw std::invalid_argument("MarketDataset: span must start on the hour");
    }
    if (rt_price_.size() % Timestamp::kStepsPerHour != 0) {
        throw std::invalid_argument("MarketDataset: span must cover whole hours");
    }
    const std::size_t hours = rt_price_.size() / Timestamp::kStepsPerHour;
    if (rt_demand_.size() != rt_price_.size() || rt_demand_.start() != rt_price_.start()) {
        throw std::invalid_argument("MarketDataset: rt_demand does not cover the span");
    }
    for (const Stream* s : {&demand_forecast_, &da_price_, &wind_}) {
        if (s->size() != hours || s->start() != rt_price_.start()) {
            throw std::invalid_argument("MarketDataset: stream '" + s->name() +
                                        "' does not cover the span");
        }
    }
}

const std::vector<std::string>& MarketDataset::stream_names() {
    static const std::vector<std::string> names = {"rt_price", "rt_demand", "demand_forecast",
                                                   "da_price", "wind"};
    return names;
}

const Stream& MarketDataset::stream(const std::string& name) const {
    if (name == "rt_price") return rt_price_;
    if (name == "rt_demand") return rt_demand_;
    if (name == "demand_forecast") return demand_forecast_;
    if (name == "da_price") return da_price_;
    if (name == "wind") return wind_;
    throw std::invalid_argument("MarketDataset: unknown stream '" + name + "'");
}

}  // namespace gridcast
