#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gridcast/stream.hpp"
#include "gridcast/timestamp.hpp"

namespace gridcast::features {

/// Windowed feature layout. The registry, and hence the vector layout, is a
/// pure function of this spec: calendar fields of t, then rt_price and
/// rt_demand at the 15-minute steps t-4*W_P .. t-1, then wind at hours
/// hour(t)-W_P .. hour(t)-1, then demand_forecast and da_price at hours
/// hour(t)-W_P+1 .. hour(t)+W_F. Day-ahead products are published in advance,
/// so reading them forward is not leakage; wind is an observation and stays
/// strictly behind the enclosing hour.
struct FeatureSpec {
    int w_past_hours = 8;    // W_P
    int w_future_hours = 4;  // W_F
    std::set<std::string> include = {"rt_price", "rt_demand", "wind", "demand_forecast",
                                     "da_price"};
    bool calendar = true;

    /// Throws std::invalid_argument on negative windows, w_future_hours > 24
    /// (day-ahead data only exists 24 h out) or unknown stream names.
    void validate() const;

    std::vector<std::string> registry() const;
    std::string registry_json() const;  // ordered JSON array of names
};

struct FeatureMatrix {
    std::vector<std::string> names;         // column registry
    std::vector<double> values;             // row-major, rows() * cols
    std::vector<double> targets;            // rt_price at each row's timestamp
    std::vector<Timestamp> row_timestamps;  // time-ordered
    std::size_t cols = 0;

    std::size_t rows() const { return targets.size(); }
    bool empty() const { return targets.empty(); }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(values).subspan(i * cols, cols);
    }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// First/last timestamp with full window margins on both sides. Throws
/// std::out_of_range when the dataset is too short for the spec.
Timestamp first_usable(const MarketDataset& ds, const FeatureSpec& spec);
Timestamp last_usable(const MarketDataset& ds, const FeatureSpec& spec);

/// Feature vector for target time t, in registry order. Returns nullopt when
/// any touched step is masked invalid (the skip-marker); throws
/// std::out_of_range when t lacks window margins.
std::optional<std::vector<double>> build_vector(const MarketDataset& ds, Timestamp t,
                                                const FeatureSpec& spec);

/// One row per 15-minute step in [from, to] whose full window and target are
/// valid. from > to yields an empty matrix (the empty signal); a range without
/// margins throws std::out_of_range.
FeatureMatrix build_matrix(const MarketDataset& ds, const FeatureSpec& spec, Timestamp from,
                           Timestamp to);

/// Copy of the selected rows (indices may repeat), keeping names and column
/// layout. Timestamps are carried over only when the source tracked them.
FeatureMatrix subset_rows(const FeatureMatrix& m, std::span<const std::uint32_t> rows);

}  // namespace gridcast::features
