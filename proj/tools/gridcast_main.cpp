#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridcast/harness.hpp"
#include "gridcast/ingest.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitMethod = 4;

gridcast::Timestamp parse_start(const std::string& text) {
    const bool date_only =
        text.find('T') == std::string::npos && text.find(' ') == std::string::npos;
    return gridcast::Timestamp::parse(date_only ? text + "T00:00" : text);
}

void print_method_line(const std::string& method, bool ok, const std::string& error,
                       const std::string& protocol, double mae, double rmse, std::size_t n,
                       double persistence_mae, std::size_t persistence_n) {
    if (!ok) {
        std::printf("  %-8s FAILED: %s\n", method.c_str(), error.c_str());
        return;
    }
    std::printf("  %-8s %-18s n=%-6zu MAE=%-10.4f RMSE=%-10.4f", method.c_str(),
                protocol.c_str(), n, mae, rmse);
    if (persistence_n > 0) {
        std::printf(" persistence MAE=%.4f (n=%zu)", persistence_mae, persistence_n);
    }
    std::printf("\n");
}

void print_report(const gridcast::harness::Report& report) {
    std::printf("dataset: %s .. %s, %zu steps, price mean=%.2f sd=%.2f max=%.2f\n",
                report.span_start.c_str(), report.span_end.c_str(), report.n_steps,
                report.price_mean, report.price_sd, report.price_max);
    for (const auto& m : report.methods) {
        print_method_line(m.method, m.ok, m.error, m.protocol, m.eval.mae, m.eval.rmse, m.eval.n,
                          m.persistence_mae, m.persistence_n);
    }
    if (!report.caveat.empty()) std::printf("note: %s\n", report.caveat.c_str());
}

int do_run(const std::string& config_path, const std::string& out_override, bool unified,
           bool parallel) {
    try {
        gridcast::harness::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = gridcast::harness::parse_config_file(config_path);
        if (unified) cfg.unified_eval = true;
        if (parallel) cfg.parallel_methods = true;
        if (!out_override.empty()) cfg.out_dir = out_override;
        if (const char* env = std::getenv("GRIDCAST_SEED")) {
            try {
                std::size_t pos = 0;
                cfg.seed = std::stoull(env, &pos);
                if (pos != std::string(env).size()) throw std::invalid_argument(env);
            } catch (const std::exception&) {
                throw gridcast::harness::ConfigError(
                    std::string("GRIDCAST_SEED must be a non-negative integer, got '") + env +
                    "'");
            }
        }
        const gridcast::harness::Report report = gridcast::harness::run(cfg);
        gridcast::harness::write_outputs(report, cfg.out_dir);
        std::printf("run complete; outputs in %s\n", cfg.out_dir.c_str());
        print_report(report);
        return report.all_ok() ? kExitOk : kExitMethod;
    } catch (const gridcast::harness::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const gridcast::ingest::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

int do_synth(std::uint64_t seed, int days, const std::string& start, const std::string& out_dir) {
    try {
        gridcast::ingest::SyntheticConfig cfg;
        cfg.seed = seed;
        cfg.days = days;
        cfg.start = parse_start(start);
        cfg.validate();
        const gridcast::MarketDataset ds = gridcast::ingest::generate_synthetic(cfg);
        gridcast::ingest::write_csv(ds, out_dir);
        std::printf("wrote %s/{rt_price,rt_demand,demand_forecast,da_price,wind}.csv\n",
                    out_dir.c_str());
        std::printf("span %s .. %s (%zu steps, seed %llu)\n", ds.span_start().to_string().c_str(),
                    ds.span_end().to_string().c_str(), ds.n_steps(),
                    static_cast<unsigned long long>(seed));
        return kExitOk;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const gridcast::ingest::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

int do_report(const std::string& in_dir) {
    const std::string path = (std::filesystem::path(in_dir) / "report.json").string();
    try {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw gridcast::ingest::DataError("cannot read " + path);
        const nlohmann::json j = nlohmann::json::parse(in);
        const auto& d = j.at("dataset");
        std::printf("report %s (config hash %s, seed %llu)\n", path.c_str(),
                    j.at("config_hash").get<std::string>().c_str(),
                    static_cast<unsigned long long>(j.at("seed").get<std::uint64_t>()));
        std::printf("dataset: %s .. %s, %zu steps, price mean=%.2f sd=%.2f max=%.2f\n",
                    d.at("span_start").get<std::string>().c_str(),
                    d.at("span_end").get<std::string>().c_str(),
                    d.at("n_steps").get<std::size_t>(), d.at("price_mean").get<double>(),
                    d.at("price_sd").get<double>(), d.at("price_max").get<double>());
        for (const auto& m : j.at("methods")) {
            const bool ok = m.at("ok").get<bool>();
            print_method_line(
                m.at("method").get<std::string>(), ok, ok ? "" : m.at("error").get<std::string>(),
                ok ? m.at("protocol").get<std::string>() : "",
                ok ? m.at("mae").get<double>() : 0.0, ok ? m.at("rmse").get<double>() : 0.0,
                ok ? m.at("n").get<std::size_t>() : 0,
                ok && !m.at("persistence_mae").is_null() ? m.at("persistence_mae").get<double>()
                                                         : 0.0,
                ok ? m.at("persistence_n").get<std::size_t>() : 0);
        }
        const std::string caveat = j.value("caveat", std::string());
        if (!caveat.empty()) std::printf("note: %s\n", caveat.c_str());
        return kExitOk;
    } catch (const gridcast::ingest::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "data error: malformed report %s: %s\n", path.c_str(), e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gridcast: electricity price forecasting experiments"};
    app.require_subcommand(1);

    auto* run_cmd = app.add_subcommand("run", "run the configured experiment");
    std::string config_path, out_override;
    bool unified = false, parallel = false;
    run_cmd->add_option("--config", config_path, "config file (sectioned key=value)");
    run_cmd->add_option("--out", out_override, "output directory (overrides [run] out_dir)");
    run_cmd->add_flag("--unified-eval", unified,
                      "evaluate every method on shared rolling-origin windows");
    run_cmd->add_flag("--parallel-methods", parallel, "run the methods concurrently");

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset as CSVs");
    std::uint64_t seed = 42;
    int days = 180;
    std::string start = "2014-01-01";
    std::string synth_out = "synth-data";
    synth_cmd->add_option("--seed", seed, "generator seed");
    synth_cmd->add_option("--days", days, "number of simulated days");
    synth_cmd->add_option("--start", start, "first day (YYYY-MM-DD)");
    synth_cmd->add_option("--out", synth_out, "output directory");

    auto* report_cmd = app.add_subcommand("report", "summarize a run directory");
    std::string in_dir;
    report_cmd->add_option("--in", in_dir, "run directory containing report.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    if (run_cmd->parsed()) return do_run(config_path, out_override, unified, parallel);
    if (synth_cmd->parsed()) return do_synth(seed, days, start, synth_out);
    return do_report(in_dir);
}
