#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gridcast/stream.hpp"
#include "gridcast/timestamp.hpp"

namespace gridcast::ingest {

/// Data-load error (missing file, malformed row, policy violation).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// How to treat gaps and repeated timestamps in source files. mark-invalid
/// masks the step; it never fabricates a value.
struct GapPolicy {
    enum class Gaps { kMarkInvalid, kFail };
    enum class Dedup { kKeepFirst, kFail };
    Gaps mode = Gaps::kMarkInvalid;
    Dedup dedup = Dedup::kKeepFirst;
};

struct StreamLoadStats {
    std::string stream;
    std::size_t rows = 0;        // rows read from the file
    std::size_t duplicates = 0;  // repeated timestamps dropped
    std::size_t gaps = 0;        // missing grid steps inside the file's own extent
    double invalid_fraction = 0.0;
    std::vector<std::string> warnings;  // e.g. conflicting duplicate values
};

struct LoadReport {
    std::vector<StreamLoadStats> streams;
    double total_invalid_fraction = 0.0;
    std::string to_json() const;
};

/// Load one CSV per stream (keys: rt_price, rt_demand, demand_forecast,
/// da_price, wind) into an aligned dataset covering the union span. Steps
/// absent from or duplicated in a source are masked invalid per policy.
MarketDataset load_csv(const std::map<std::string, std::string>& paths, const GapPolicy& policy,
                       LoadReport* report = nullptr);

/// Write one CSV per stream into `dir` (named <stream>.csv). Invalid entries
/// are omitted, so load_csv(write_csv(ds)) reproduces ds exactly on valid
/// entries and masks the rest.
void write_csv(const MarketDataset& ds, const std::string& dir);

/// Synthetic market generator standing in for real nodal data: seasonal
/// demand, a convex price-demand response with a scarcity ramp above the
/// knee, AR(1) noise and a heavy-tailed multiplicative spike process whose
/// onsets concentrate at high load. Together these reproduce the sticky bulk,
/// peak-hour excursions and max >> mean regime of nodal prices.
struct SyntheticConfig {
    std::uint64_t seed = 42;
    Timestamp start = Timestamp::from_ymd(2014, 1, 1);
    int days = 730;

    double base_price = 5.0;          // USD/MWh at seasonal midpoint
    double price_lin = 0.60;          // linear response to normalized load
    double price_quad = 1.0;          // convex response to normalized load
    double scarcity_scale = 315.0;    // USD/MWh scarcity adder at peak load
    double scarcity_knee = 0.62;      // normalized load where the adder kicks in
    double noise_sd = 1.5;            // marginal SD of AR(1) price noise, USD/MWh
    double noise_rho = 0.93;          // AR(1) coefficient of price noise

    double demand_base = 40000.0;     // MW
    double demand_daily_amp = 9000.0; // MW
    double demand_weekly_amp = 3500.0;// MW
    double demand_noise_sd = 500.0;   // MW

    double spike_rate = 0.0008;       // mean onset probability per 15-min step
    double spike_gate = 0.0;          // load sensitivity of onsets (0 = uniform)
    double spike_scale = 30.0;        // USD/MWh typical spike increment scale
    double spike_shape = 1.5;         // Pareto tail index (smaller = heavier)
    int spike_max_duration = 2;       // steps; duration uniform in [1, max]
    double price_cap = 9000.0;        // system offer cap, truncates spikes

    double forecast_noise_sd = 600.0; // MW, demand forecast error
    double da_noise_sd = 2.0;         // USD/MWh around smoothed hourly price
    double wind_amplitude = 9000.0;   // MW
    double wind_noise_sd = 900.0;     // MW

    void validate() const;
};

struct SyntheticDiagnostics {
    std::size_t spike_onsets = 0;  // realized spike starts
    std::size_t spike_steps = 0;   // steps with an active spike multiplier
};

MarketDataset generate_synthetic(const SyntheticConfig& cfg,
                                 SyntheticDiagnostics* diagnostics = nullptr);

}  // namespace gridcast::ingest
