#include "gridcast/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gridcast/rng.hpp"

namespace gridcast::ingest {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct RawStream {
    std::vector<std::pair<Timestamp, double>> entries;  // file order
    std::size_t rows = 0;
};

int resolution_for(const std::string& stream) {
    return (stream == "rt_price" || stream == "rt_demand") ? 15 : 60;
}

RawStream parse_file(const std::string& stream, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "' for stream " + stream);
    RawStream raw;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    const int res = resolution_for(stream);
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != "timestamp,value") {
                throw DataError(path + ":" + std::to_string(lineno) +
                                ": expected header 'timestamp,value'");
            }
            header_seen = true;
            continue;
        }
        auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw DataError(path + ":" + std::to_string(lineno) + ": missing comma");
        }
        Timestamp ts;
        double value = 0.0;
        try {
            ts = Timestamp::parse(line.substr(0, comma));
            std::size_t pos = 0;
            value = std::stod(line.substr(comma + 1), &pos);
        } catch (const std::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (ts.minutes_since_epoch() % res != 0) {
            throw DataError(path + ":" + std::to_string(lineno) + ": timestamp " +
                            ts.to_string() + " not on the " + std::to_string(res) +
                            "-minute grid");
        }
        raw.entries.emplace_back(ts, value);
        ++raw.rows;
    }
    if (!header_seen) throw DataError(path + ": empty file");
    return raw;
}

}  // namespace

std::string LoadReport::to_json() const {
    nlohmann::ordered_json j;
    j["streams"] = nlohmann::ordered_json::array();
    for (const auto& s : streams) {
        nlohmann::ordered_json e;
        e["stream"] = s.stream;
        e["rows"] = s.rows;
        e["duplicates"] = s.duplicates;
        e["gaps"] = s.gaps;
        e["invalid_fraction"] = s.invalid_fraction;
        if (!s.warnings.empty()) e["warnings"] = s.warnings;
        j["streams"].push_back(e);
    }
    j["total_invalid_fraction"] = total_invalid_fraction;
    return j.dump(2);
}

MarketDataset load_csv(const std::map<std::string, std::string>& paths, const GapPolicy& policy,
                       LoadReport* report) {
    std::map<std::string, RawStream> raws;
    for (const auto& name : MarketDataset::stream_names()) {
        auto it = paths.find(name);
        if (it == paths.end()) throw DataError("no file given for stream " + name);
        raws[name] = parse_file(name, it->second);
        if (raws[name].entries.empty()) throw DataError("stream " + name + " has no data rows");
    }

    // Union span across all streams, aligned to whole hours.
    std::int64_t lo_min = INT64_MAX, hi_min = INT64_MIN;
    for (const auto& [name, raw] : raws) {
        for (const auto& [ts, v] : raw.entries) {
            lo_min = std::min(lo_min, ts.minutes_since_epoch());
            hi_min = std::max(hi_min, ts.minutes_since_epoch());
        }
    }
    lo_min = (lo_min / 60) * 60 - (lo_min < 0 && lo_min % 60 != 0 ? 60 : 0);
    // extend end to the last quarter of its hour
    std::int64_t hi_hour = hi_min >= 0 ? hi_min / 60 : (hi_min - 59) / 60;
    hi_min = hi_hour * 60 + 45;
    const Timestamp start = Timestamp::from_minutes(lo_min);

    LoadReport rep;
    std::map<std::string, Stream> built;
    std::size_t invalid_total = 0, slots_total = 0;
    for (const auto& name : MarketDataset::stream_names()) {
        const RawStream& raw = raws[name];
        const int res = resolution_for(name);
        const std::size_t n = static_cast<std::size_t>((hi_min - lo_min) / res) + 1;
        std::vector<double> values(n, 0.0);
        std::vector<std::uint8_t> valid(n, 0);
        StreamLoadStats stats;
        stats.stream = name;
        stats.rows = raw.rows;

        std::int64_t first_seen = INT64_MAX, last_seen = INT64_MIN;
        for (const auto& [ts, v] : raw.entries) {
            const std::size_t idx =
                static_cast<std::size_t>((ts.minutes_since_epoch() - lo_min) / res);
            if (valid[idx]) {
                ++stats.duplicates;
                if (policy.dedup == GapPolicy::Dedup::kFail) {
                    throw DataError("stream " + name + ": duplicate timestamp " + ts.to_string());
                }
                if (values[idx] != v) {
                    stats.warnings.push_back("conflicting duplicate at " + ts.to_string() +
                                             ": kept " + std::to_string(values[idx]) +
                                             ", dropped " + std::to_string(v));
                }
                continue;  // keep-first
            }
            values[idx] = v;
            valid[idx] = 1;
            first_seen = std::min(first_seen, ts.minutes_since_epoch());
            last_seen = std::max(last_seen, ts.minutes_since_epoch());
        }

        // gaps inside the file's own extent
        if (first_seen <= last_seen) {
            const std::size_t a = static_cast<std::size_t>((first_seen - lo_min) / res);
            const std::size_t b = static_cast<std::size_t>((last_seen - lo_min) / res);
            for (std::size_t i = a; i <= b; ++i) {
                if (!valid[i]) ++stats.gaps;
            }
        }
        if (stats.gaps > 0 && policy.mode == GapPolicy::Gaps::kFail) {
            throw DataError("stream " + name + ": " + std::to_string(stats.gaps) +
                            " missing steps");
        }
        const std::size_t invalid =
            static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{0}));
        stats.invalid_fraction = static_cast<double>(invalid) / static_cast<double>(n);
        invalid_total += invalid;
        slots_total += n;
        rep.streams.push_back(std::move(stats));
        built.emplace(name, Stream(name, res, start, std::move(values), std::move(valid)));
    }
    rep.total_invalid_fraction =
        slots_total ? static_cast<double>(invalid_total) / static_cast<double>(slots_total) : 0.0;
    if (report) *report = rep;
    return MarketDataset(built.at("rt_price"), built.at("rt_demand"), built.at("demand_forecast"),
                         built.at("da_price"), built.at("wind"));
}

void write_csv(const MarketDataset& ds, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& name : MarketDataset::stream_names()) {
        const Stream& s = ds.stream(name);
        std::ofstream out(dir + "/" + name + ".csv");
        if (!out) throw DataError("cannot write " + dir + "/" + name + ".csv");
        out << "timestamp,value\n";
        char buf[40];
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (!s.valid_at(i)) continue;
            std::snprintf(buf, sizeof(buf), "%.17g", s.value_at(i));
            out << s.timestamp_at(i).to_string() << ',' << buf << '\n';
        }
    }
}

void SyntheticConfig::validate() const {
    if (days < 1) throw std::invalid_argument("SyntheticConfig: days must be >= 1");
    if (spike_rate < 0.0 || spike_rate > 1.0) {
        throw std::invalid_argument("SyntheticConfig: spike_rate must be in [0,1]");
    }
    for (double v : {base_price, scarcity_scale, noise_sd, demand_daily_amp, demand_weekly_amp,
                     demand_noise_sd, spike_scale, forecast_noise_sd, da_noise_sd, wind_amplitude,
                     wind_noise_sd}) {
        if (v < 0.0) throw std::invalid_argument("SyntheticConfig: scales must be >= 0");
    }
    if (scarcity_knee < 0.0 || scarcity_knee >= 1.0) {
        throw std::invalid_argument("SyntheticConfig: scarcity_knee must be in [0,1)");
    }
    if (spike_gate < 0.0) {
        throw std::invalid_argument("SyntheticConfig: spike_gate must be >= 0");
    }
    if (spike_shape <= 1.0) throw std::invalid_argument("SyntheticConfig: spike_shape must exceed 1");
    if (spike_max_duration < 1) throw std::invalid_argument("SyntheticConfig: spike_max_duration >= 1");
    if (price_cap <= base_price) throw std::invalid_argument("SyntheticConfig: price_cap must exceed base_price");
    if (start.minute() != 0 || start.hour() != 0) {
        throw std::invalid_argument("SyntheticConfig: start must be midnight");
    }
}

MarketDataset generate_synthetic(const SyntheticConfig& cfg, SyntheticDiagnostics* diagnostics) {
    cfg.validate();
    const std::size_t n = static_cast<std::size_t>(cfg.days) * Timestamp::kStepsPerDay;
    const std::size_t hours = n / Timestamp::kStepsPerHour;

    Rng master(cfg.seed);
    Rng demand_rng = master.sub(1);
    Rng price_rng = master.sub(2);
    Rng spike_rng = master.sub(3);
    Rng forecast_rng = master.sub(4);
    Rng da_rng = master.sub(5);
    Rng wind_rng = master.sub(6);

    const double amp_total = cfg.demand_daily_amp + cfg.demand_weekly_amp;

    // Deterministic seasonal load and its normalized form; demand noise is
    // added on top so the price core stays an exact function of the seasonal.
    std::vector<double> seasonal(n), z(n), demand(n), price(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double daily = std::sin(kTwoPi * static_cast<double>(i % 96) / 96.0);
        const double weekly = std::sin(kTwoPi * static_cast<double>(i % 672) / 672.0);
        const double s = cfg.demand_daily_amp * daily + cfg.demand_weekly_amp * weekly;
        seasonal[i] = cfg.demand_base + s;
        z[i] = amp_total > 0.0 ? s / amp_total : 0.0;
        demand[i] = seasonal[i] + (cfg.demand_noise_sd > 0.0
                                       ? demand_rng.normal(0.0, cfg.demand_noise_sd)
                                       : 0.0);
    }

    // Piecewise price response: smooth convex curve plus a scarcity adder
    // above the knee, mirroring an operating-reserve price ramp.
    const double knee_span = std::max(1e-9, 1.0 - cfg.scarcity_knee);
    auto core_at = [&](double zi) {
        double c = cfg.base_price * (1.0 + cfg.price_lin * zi + cfg.price_quad * zi * zi);
        if (cfg.scarcity_scale > 0.0 && zi > cfg.scarcity_knee) {
            const double x = (zi - cfg.scarcity_knee) / knee_span;
            c += cfg.scarcity_scale * x * x;
        }
        return c;
    };

    // Scarcity gate: onset probability scales with squared positive load
    // deviation, normalized so the mean onset rate stays spike_rate.
    std::vector<double> gate(n);
    long double gate_sum = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        const double excess = std::max(0.0, z[i]);
        gate[i] = 1.0 + cfg.spike_gate * excess * excess;
        gate_sum += gate[i];
    }
    const double gate_norm = static_cast<double>(gate_sum / static_cast<long double>(n));

    // Convex price response + AR(1) noise + multiplicative spikes.
    const double innov_sd = cfg.noise_sd * std::sqrt(std::max(0.0, 1.0 - cfg.noise_rho * cfg.noise_rho));
    double ar = 0.0;
    SyntheticDiagnostics diag;
    int spike_left = 0;
    double spike_mult = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double core = core_at(z[i]);
        double p = core;
        if (cfg.noise_sd > 0.0) {
            ar = cfg.noise_rho * ar + price_rng.normal(0.0, innov_sd);
            p += ar;
        }
        const bool onset_draw =
            cfg.spike_rate > 0.0 &&
            spike_rng.uniform() < cfg.spike_rate * gate[i] / gate_norm;
        if (spike_left == 0 && onset_draw) {
            spike_left = 1 + static_cast<int>(spike_rng.uniform_below(
                                 static_cast<std::uint64_t>(cfg.spike_max_duration)));
            spike_mult = 1.0 + (cfg.spike_scale / cfg.base_price) *
                                   spike_rng.pareto_excess(cfg.spike_shape);
            ++diag.spike_onsets;
        }
        if (spike_left > 0) {
            p = std::min(p * spike_mult, cfg.price_cap);
            --spike_left;
            ++diag.spike_steps;
        }
        price[i] = p;
    }

    // Hourly streams.
    std::vector<double> df(hours), da(hours), wind(hours);
    for (std::size_t h = 0; h < hours; ++h) {
        double core_mean = 0.0, seasonal_mean = 0.0, z_mean = 0.0;
        for (std::size_t q = 0; q < 4; ++q) {
            const std::size_t i = h * 4 + q;
            core_mean += core_at(z[i]);
            seasonal_mean += seasonal[i];
            z_mean += z[i];
        }
        core_mean /= 4.0;
        seasonal_mean /= 4.0;
        z_mean /= 4.0;
        df[h] = seasonal_mean +
                (cfg.forecast_noise_sd > 0.0 ? forecast_rng.normal(0.0, cfg.forecast_noise_sd) : 0.0);
        da[h] = core_mean + (cfg.da_noise_sd > 0.0 ? da_rng.normal(0.0, cfg.da_noise_sd) : 0.0);
        double w = cfg.wind_amplitude *
                   (0.55 - 0.35 * z_mean);  // high load -> low wind -> anti-correlated with price
        if (cfg.wind_noise_sd > 0.0) w += wind_rng.normal(0.0, cfg.wind_noise_sd);
        wind[h] = std::clamp(w, 0.0, 1.2 * cfg.wind_amplitude);
    }

    if (diagnostics) *diagnostics = diag;
    const Timestamp start = cfg.start;
    return MarketDataset(Stream::dense("rt_price", 15, start, std::move(price)),
                         Stream::dense("rt_demand", 15, start, std::move(demand)),
                         Stream::dense("demand_forecast", 60, start, std::move(df)),
                         Stream::dense("da_price", 60, start, std::move(da)),
                         Stream::dense("wind", 60, start, std::move(wind)));
}

}  // namespace gridcast::ingest
