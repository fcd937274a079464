#include "gridcast/features.hpp"

#include <cstdio>
#include <stdexcept>

#include <json.hpp>

namespace gridcast::features {

namespace {

const std::vector<std::string>& known_streams() { return MarketDataset::stream_names(); }

// Fills `out` with the vector for t, returning false when a touched step was
// invalid. Throws out_of_range on insufficient margins.
bool fill_vector(const MarketDataset& ds, Timestamp t, const FeatureSpec& spec,
                 std::vector<double>& out) {
    out.clear();
    bool ok = true;
    if (spec.calendar) {
        out.push_back(t.year());
        out.push_back(t.month());
        out.push_back(t.day_of_year());
        out.push_back(t.day_of_week());
        out.push_back(t.hour());
        out.push_back(t.quarter_of_hour());
    }
    const int lag_steps = Timestamp::kStepsPerHour * spec.w_past_hours;
    for (const char* name : {"rt_price", "rt_demand"}) {
        if (!spec.include.count(name) || lag_steps == 0) continue;
        for (const SamplePoint& p : slice_window(ds.stream(name), t, lag_steps, 0, false)) {
            out.push_back(p.value);
            ok = ok && p.valid;
        }
    }
    const Timestamp hour0 = t.floor_to_hour();
    if (spec.include.count("wind") && spec.w_past_hours > 0) {
        for (const SamplePoint& p : slice_window(ds.wind(), hour0, spec.w_past_hours, 0, false)) {
            out.push_back(p.value);
            ok = ok && p.valid;
        }
    }
    for (const char* name : {"demand_forecast", "da_price"}) {
        if (!spec.include.count(name)) continue;
        const Stream& s = ds.stream(name);
        const std::int64_t h0 = static_cast<std::int64_t>(s.index_of(hour0));
        for (int o = -spec.w_past_hours + 1; o <= spec.w_future_hours; ++o) {
            const std::int64_t h = h0 + o;
            if (h < 0 || h >= static_cast<std::int64_t>(s.size())) {
                throw std::out_of_range("features: hourly offset " + std::to_string(o) +
                                        " from " + t.to_string() + " exceeds stream '" +
                                        s.name() + "'");
            }
            out.push_back(s.value_at(static_cast<std::size_t>(h)));
            ok = ok && s.valid_at(static_cast<std::size_t>(h));
        }
    }
    return ok;
}

}  // namespace

void FeatureSpec::validate() const {
    if (w_past_hours < 0 || w_future_hours < 0) {
        throw std::invalid_argument("FeatureSpec: window widths must be >= 0");
    }
    if (w_future_hours > 24) {
        throw std::invalid_argument(
            "FeatureSpec: w_future_hours > 24 (day-ahead data exists only 24 h out)");
    }
    for (const auto& name : include) {
        bool known = false;
        for (const auto& k : known_streams()) known = known || k == name;
        if (!known) throw std::invalid_argument("FeatureSpec: unknown stream '" + name + "'");
    }
}

std::vector<std::string> FeatureSpec::registry() const {
    validate();
    std::vector<std::string> names;
    char buf[48];
    if (calendar) {
        for (const char* f :
             {"cal_year", "cal_month", "cal_day_of_year", "cal_day_of_week", "cal_hour",
              "cal_quarter"}) {
            names.emplace_back(f);
        }
    }
    const int lag_steps = Timestamp::kStepsPerHour * w_past_hours;
    for (const char* stream : {"rt_price", "rt_demand"}) {
        if (!include.count(stream)) continue;
        for (int lag = lag_steps; lag >= 1; --lag) {
            std::snprintf(buf, sizeof(buf), "%s_lag_%d", stream, lag);
            names.emplace_back(buf);
        }
    }
    if (include.count("wind")) {
        for (int hlag = w_past_hours; hlag >= 1; --hlag) {
            std::snprintf(buf, sizeof(buf), "wind_hlag_%d", hlag);
            names.emplace_back(buf);
        }
    }
    for (const char* stream : {"demand_forecast", "da_price"}) {
        if (!include.count(stream)) continue;
        for (int o = -w_past_hours + 1; o <= w_future_hours; ++o) {
            std::snprintf(buf, sizeof(buf), "%s_h%+d", stream, o);
            names.emplace_back(buf);
        }
    }
    return names;
}

std::string FeatureSpec::registry_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& n : registry()) j.push_back(n);
    return j.dump(1);
}

Timestamp first_usable(const MarketDataset& ds, const FeatureSpec& spec) {
    spec.validate();
    std::int64_t first = 0;
    if ((spec.include.count("rt_price") || spec.include.count("rt_demand") ||
         spec.include.count("wind"))) {
        first = std::max<std::int64_t>(first, 4LL * spec.w_past_hours);
    }
    if (spec.include.count("demand_forecast") || spec.include.count("da_price")) {
        first = std::max<std::int64_t>(first, 4LL * (spec.w_past_hours - 1));
    }
    if (first >= static_cast<std::int64_t>(ds.n_steps())) {
        throw std::out_of_range("features: dataset shorter than the past window");
    }
    return ds.span_start().plus_steps(first);
}

Timestamp last_usable(const MarketDataset& ds, const FeatureSpec& spec) {
    spec.validate();
    std::int64_t last = static_cast<std::int64_t>(ds.n_steps()) - 1;
    if ((spec.include.count("demand_forecast") || spec.include.count("da_price")) &&
        spec.w_future_hours > 0) {
        // hour(t) + W_F must stay inside the hourly span
        last = std::min<std::int64_t>(
            last, 4LL * (static_cast<std::int64_t>(ds.n_hours()) - spec.w_future_hours) - 1);
    }
    if (last < 0) throw std::out_of_range("features: dataset shorter than the future window");
    return ds.span_start().plus_steps(last);
}

std::optional<std::vector<double>> build_vector(const MarketDataset& ds, Timestamp t,
                                                const FeatureSpec& spec) {
    spec.validate();
    ds.rt_price().index_of(t);  // range-checks t itself
    std::vector<double> out;
    if (!fill_vector(ds, t, spec, out)) return std::nullopt;
    return out;
}

FeatureMatrix build_matrix(const MarketDataset& ds, const FeatureSpec& spec, Timestamp from,
                           Timestamp to) {
    spec.validate();
    FeatureMatrix m;
    m.names = spec.registry();
    m.cols = m.names.size();
    if (from > to) return m;

    const std::size_t i0 = ds.rt_price().index_of(from);
    const std::size_t i1 = ds.rt_price().index_of(to);
    const Timestamp lo = first_usable(ds, spec);
    const Timestamp hi = last_usable(ds, spec);
    if (from < lo || to > hi) {
        throw std::out_of_range("features: range [" + from.to_string() + ", " + to.to_string() +
                                "] lacks window margins (usable [" + lo.to_string() + ", " +
                                hi.to_string() + "])");
    }

    std::vector<double> buf;
    for (std::size_t i = i0; i <= i1; ++i) {
        if (!ds.rt_price().valid_at(i)) continue;  // unusable target
        const Timestamp t = ds.rt_price().timestamp_at(i);
        if (!fill_vector(ds, t, spec, buf)) continue;
        m.values.insert(m.values.end(), buf.begin(), buf.end());
        m.targets.push_back(ds.rt_price().value_at(i));
        m.row_timestamps.push_back(t);
    }
    return m;
}

FeatureMatrix subset_rows(const FeatureMatrix& m, std::span<const std::uint32_t> rows) {
    FeatureMatrix out;
    out.names = m.names;
    out.cols = m.cols;
    out.values.reserve(rows.size() * m.cols);
    out.targets.reserve(rows.size());
    const bool with_ts = m.row_timestamps.size() == m.rows();
    if (with_ts) out.row_timestamps.reserve(rows.size());
    for (std::uint32_t r : rows) {
        if (r >= m.rows()) throw std::out_of_range("subset_rows: row index out of range");
        auto row = m.row(r);
        out.values.insert(out.values.end(), row.begin(), row.end());
        out.targets.push_back(m.targets[r]);
        if (with_ts) out.row_timestamps.push_back(m.row_timestamps[r]);
    }
    return out;
}

}  // namespace gridcast::features
