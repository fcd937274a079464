#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gridcast/ingest.hpp"

using namespace gridcast;
using ingest::DataError;
using ingest::GapPolicy;
using ingest::SyntheticConfig;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("gridcast_test_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::map<std::string, std::string> paths_in(const std::filesystem::path& dir) {
    std::map<std::string, std::string> p;
    for (const auto& n : MarketDataset::stream_names()) p[n] = (dir / (n + ".csv")).string();
    return p;
}

SyntheticConfig small_config(int days = 2) {
    SyntheticConfig cfg;
    cfg.days = days;
    cfg.seed = 7;
    return cfg;
}

// drop the line for a given timestamp from a csv file
void drop_line(const std::filesystem::path& file, const std::string& ts_prefix) {
    std::ifstream in(file);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind(ts_prefix, 0) == 0) continue;
        lines.push_back(line);
    }
    in.close();
    std::ofstream out(file, std::ios::trunc);
    for (const auto& l : lines) out << l << '\n';
}

void append_line(const std::filesystem::path& file, const std::string& line) {
    std::ofstream out(file, std::ios::app);
    out << line << '\n';
}

}  // namespace

TEST_CASE("csv round trip is identity on valid entries") {
    auto dir = temp_dir("roundtrip");
    MarketDataset ds = ingest::generate_synthetic(small_config());
    ingest::write_csv(ds, dir.string());

    ingest::LoadReport rep;
    MarketDataset back = ingest::load_csv(paths_in(dir), {}, &rep);
    CHECK(rep.total_invalid_fraction == 0.0);
    for (const auto& name : MarketDataset::stream_names()) {
        const Stream& a = ds.stream(name);
        const Stream& b = back.stream(name);
        REQUIRE(a.size() == b.size());
        CHECK(a.start() == b.start());
        for (std::size_t i = 0; i < a.size(); ++i) {
            REQUIRE(b.valid_at(i));
            REQUIRE(a.value_at(i) == b.value_at(i));  // %.17g survives the trip
        }
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("a single missing row masks only its own step") {
    auto dir = temp_dir("gap");
    MarketDataset ds = ingest::generate_synthetic(small_config());
    ingest::write_csv(ds, dir.string());
    drop_line(dir / "rt_price.csv", "2014-01-01T10:15,");

    ingest::LoadReport rep;
    MarketDataset back = ingest::load_csv(paths_in(dir), {}, &rep);
    const Stream& p = back.rt_price();
    std::size_t i = p.index_of(Timestamp::from_ymd(2014, 1, 1, 10, 15));
    CHECK_FALSE(p.valid_at(i));
    CHECK(p.valid_at(i - 1));
    CHECK(p.valid_at(i + 1));
    CHECK(p.invalid_count() == 1);

    bool found = false;
    for (const auto& s : rep.streams) {
        if (s.stream == "rt_price") {
            found = true;
            CHECK(s.gaps == 1);
            CHECK(s.invalid_fraction == doctest::Approx(1.0 / 192.0));
        } else {
            CHECK(s.gaps == 0);
        }
    }
    CHECK(found);
    CHECK(rep.total_invalid_fraction > 0.0);

    // fail policy rejects the same input
    GapPolicy strict;
    strict.mode = GapPolicy::Gaps::kFail;
    CHECK_THROWS_AS(ingest::load_csv(paths_in(dir), strict), DataError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("duplicate handling follows the dedup policy") {
    auto dir = temp_dir("dup");
    MarketDataset ds = ingest::generate_synthetic(small_config());
    ingest::write_csv(ds, dir.string());

    const Stream& wind = ds.wind();
    std::size_t i = wind.index_of(Timestamp::from_ymd(2014, 1, 1, 5, 0));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "2014-01-01T05:00,%.17g", wind.value_at(i));

    SUBCASE("equal duplicate under keep-first stays valid, no warning") {
        append_line(dir / "wind.csv", buf);
        ingest::LoadReport rep;
        MarketDataset back = ingest::load_csv(paths_in(dir), {}, &rep);
        CHECK(back.wind().valid_at(i));
        CHECK(back.wind().value_at(i) == wind.value_at(i));
        for (const auto& s : rep.streams) {
            if (s.stream == "wind") {
                CHECK(s.duplicates == 1);
                CHECK(s.warnings.empty());
            }
        }
    }
    SUBCASE("conflicting duplicate keeps first and records a warning") {
        append_line(dir / "wind.csv", "2014-01-01T05:00,99999.0");
        ingest::LoadReport rep;
        MarketDataset back = ingest::load_csv(paths_in(dir), {}, &rep);
        CHECK(back.wind().value_at(i) == wind.value_at(i));
        for (const auto& s : rep.streams) {
            if (s.stream == "wind") {
                CHECK(s.duplicates == 1);
                REQUIRE(s.warnings.size() == 1);
                CHECK(s.warnings[0].find("2014-01-01T05:00") != std::string::npos);
            }
        }
    }
    SUBCASE("fail policy rejects duplicates") {
        append_line(dir / "wind.csv", buf);
        GapPolicy strict;
        strict.dedup = GapPolicy::Dedup::kFail;
        CHECK_THROWS_AS(ingest::load_csv(paths_in(dir), strict), DataError);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("malformed rows carry line numbers") {
    auto dir = temp_dir("parse");
    MarketDataset ds = ingest::generate_synthetic(small_config(1));
    ingest::write_csv(ds, dir.string());

    SUBCASE("bad value") {
        append_line(dir / "da_price.csv", "2014-01-01T23:00,not_a_number");
        try {
            ingest::load_csv(paths_in(dir), {});
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find(":26") != std::string::npos);  // header + 24 rows + 1
        }
    }
    SUBCASE("bad header") {
        std::ofstream out(dir / "wind.csv", std::ios::trunc);
        out << "time,val\n2014-01-01T00:00,1\n";
        out.close();
        CHECK_THROWS_AS(ingest::load_csv(paths_in(dir), {}), DataError);
    }
    SUBCASE("off-grid timestamp") {
        append_line(dir / "rt_price.csv", "2014-01-01T07:15:30,3");
        CHECK_THROWS_AS(ingest::load_csv(paths_in(dir), {}), DataError);
    }
    SUBCASE("missing file") {
        auto p = paths_in(dir);
        p["wind"] = (dir / "nope.csv").string();
        CHECK_THROWS_AS(ingest::load_csv(p, {}), DataError);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic generation is deterministic per seed") {
    SyntheticConfig cfg = small_config(3);
    cfg.seed = 1;
    MarketDataset a = ingest::generate_synthetic(cfg);
    MarketDataset b = ingest::generate_synthetic(cfg);
    for (const auto& name : MarketDataset::stream_names()) {
        REQUIRE(a.stream(name).values() == b.stream(name).values());
    }

    cfg.seed = 2;
    MarketDataset c = ingest::generate_synthetic(cfg);
    CHECK(a.rt_price().values() != c.rt_price().values());
}

TEST_CASE("noise-free price matches the closed-form sinusoid moments") {
    SyntheticConfig cfg;
    cfg.days = 14;  // whole weeks make the discrete moments exact
    cfg.noise_sd = 0.0;
    cfg.spike_rate = 0.0;
    cfg.scarcity_scale = 0.0;  // keep the response a pure polynomial
    MarketDataset ds = ingest::generate_synthetic(cfg);
    const auto& price = ds.rt_price().values();

    // price = B(1 + c1 z + c2 z^2), z = a sin(daily) + b sin(weekly);
    // over whole weeks the discrete power sums of the sinusoids are exactly
    // their continuous moments, so mean and SD have closed forms.
    const double B = cfg.base_price, c1 = cfg.price_lin, c2 = cfg.price_quad;
    const double a = cfg.demand_daily_amp / (cfg.demand_daily_amp + cfg.demand_weekly_amp);
    const double b = cfg.demand_weekly_amp / (cfg.demand_daily_amp + cfg.demand_weekly_amp);
    const double m2z = 0.5 * (a * a + b * b);
    const double m4z = 0.375 * a * a * a * a + 1.5 * a * a * b * b + 0.375 * b * b * b * b;
    const double mean_oracle = B * (1.0 + c2 * m2z);
    const double second = B * B * (1.0 + (c1 * c1 + 2.0 * c2) * m2z + c2 * c2 * m4z);
    const double sd_oracle = std::sqrt(second - mean_oracle * mean_oracle);

    long double sum = 0.0L, sq = 0.0L;
    for (double v : price) {
        sum += v;
        sq += (long double)v * v;
    }
    const double n = (double)price.size();
    const double mean = (double)(sum / n);
    const double sd = std::sqrt((double)(sq / n) - mean * mean);

    CHECK(mean == doctest::Approx(mean_oracle).epsilon(1e-9));
    CHECK(sd == doctest::Approx(sd_oracle).epsilon(1e-9));

    // smooth periodicity: week 2 repeats week 1 exactly
    for (std::size_t i = 0; i < 672; ++i) REQUIRE(price[i] == price[i + 672]);
}

TEST_CASE("default calibration hits the target price regime") {
    SyntheticConfig cfg;  // defaults, 730 days
    ingest::SyntheticDiagnostics diag;
    MarketDataset ds = ingest::generate_synthetic(cfg, &diag);
    const auto& price = ds.rt_price().values();

    long double sum = 0.0L, sq = 0.0L;
    double mx = price[0];
    for (double v : price) {
        sum += v;
        sq += (long double)v * v;
        mx = std::max(mx, v);
    }
    const double n = (double)price.size();
    const double mean = (double)(sum / n);
    const double sd = std::sqrt((double)(sq / n) - mean * mean);

    // targets: mean 20.15 +-20%, SD 59.22 +-30%, max at least 20x mean
    CHECK(mean > 20.15 * 0.8);
    CHECK(mean < 20.15 * 1.2);
    CHECK(sd > 59.22 * 0.7);
    CHECK(sd < 59.22 * 1.3);
    CHECK(mx >= 20.0 * mean);
    CHECK(diag.spike_onsets > 0);
}

TEST_CASE("spike onset frequency matches spike_rate") {
    SyntheticConfig cfg;
    cfg.days = 1100;  // > 1e5 steps
    cfg.seed = 99;
    ingest::SyntheticDiagnostics diag;
    ingest::generate_synthetic(cfg, &diag);
    const double n = cfg.days * 96.0;
    const double p = cfg.spike_rate;
    const double se = std::sqrt(p * (1.0 - p) / n);
    const double freq = diag.spike_onsets / n;
    CHECK(std::abs(freq - p) <= 3.0 * se + p * p * cfg.spike_max_duration);
    CHECK(diag.spike_steps >= diag.spike_onsets);
}

TEST_CASE("config validation") {
    SyntheticConfig cfg;
    cfg.spike_rate = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SyntheticConfig{};
    cfg.days = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SyntheticConfig{};
    cfg.noise_sd = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SyntheticConfig{};
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("load report serializes to json") {
    auto dir = temp_dir("json");
    MarketDataset ds = ingest::generate_synthetic(small_config(1));
    ingest::write_csv(ds, dir.string());
    drop_line(dir / "rt_demand.csv", "2014-01-01T03:30,");

    ingest::LoadReport rep;
    ingest::load_csv(paths_in(dir), {}, &rep);
    std::string j = rep.to_json();
    CHECK(j.find("\"stream\": \"rt_demand\"") != std::string::npos);
    CHECK(j.find("\"gaps\": 1") != std::string::npos);
    CHECK(j.find("\"total_invalid_fraction\"") != std::string::npos);
    std::filesystem::remove_all(dir);
}
