#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridcast/arima.hpp"
#include "gridcast/features.hpp"
#include "gridcast/ingest.hpp"
#include "gridcast/metrics.hpp"
#include "gridcast/narx.hpp"
#include "gridcast/trees.hpp"

namespace gridcast::harness {

/// Bad configuration text or invalid effective settings.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything one experiment needs, with a default for every knob. The file
/// format is sectioned key=value text (see parse_config); the canonical dump
/// of this struct is the provenance record the report hashes.
struct ExperimentConfig {
    // [data]
    std::string source = "synthetic";  // synthetic | csv
    std::string csv_dir;               // required when source = csv
    ingest::SyntheticConfig synthetic = default_synthetic();

    // [features]
    features::FeatureSpec features;

    // [run]
    std::vector<std::string> methods = {"arima", "tree", "bagged", "boosted", "narx"};
    std::uint64_t seed = 42;  // master run seed; the data seed lives in [data]
    std::string out_dir = "gridcast-out";
    bool unified_eval = false;     // rolling-origin windows for every method
    bool parallel_methods = false;
    int n_threads = 0;  // 0 = hardware concurrency

    // [arima]
    arima::SubsetArimaSpec arima_spec;
    arima::RollingConfig rolling;

    // [tree]
    trees::TreeParams tree;
    double train_frac = 0.7;
    std::vector<int> cv_min_leaf = {1, 2, 4, 6, 8, 12, 16, 24, 32, 50};
    int cv_folds = 5;  // 0 disables the min-leaf sweep

    // [bagged]
    std::size_t bag_b = 60;
    bool bag_curve = true;  // emit OOB error vs ensemble size

    // [boosted]
    trees::BoostParams boost;
    bool boost_grid = false;  // emit training curves over the (nu, splits) grid
    std::vector<double> boost_grid_nu = {0.1, 0.5, 1.0};
    std::vector<int> boost_grid_msw = {4, 16};

    // [narx]
    narx::NarxConfig narx;  // its seed field is ignored; the run seed is used

    /// 180 simulated days instead of the generator's two-year default: the
    /// benchmark experiment is sized to run in minutes.
    static ingest::SyntheticConfig default_synthetic() {
        ingest::SyntheticConfig s;
        s.days = 180;
        return s;
    }

    /// Throws ConfigError when any setting (own or sub-module) is invalid.
    void validate() const;
};

/// Parses sectioned key=value text. Unknown sections or keys, and values that
/// do not parse, throw ConfigError naming the line. Every key is optional;
/// later assignments override earlier ones. '#' starts a comment.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

/// Effective settings as config text: fixed section and key order, every key
/// present. parse_config(canonical_config(c)) reproduces c exactly.
std::string canonical_config(const ExperimentConfig& cfg);

/// FNV-1a 64-bit hash of canonical_config; the report's provenance hash.
std::uint64_t config_hash(const ExperimentConfig& cfg);

struct BoostTraceCurve {
    double nu = 0.0;
    int max_splits_weak = 0;
    std::vector<trees::BoostStageTrace> trace;
};

struct MethodResult {
    std::string method;
    bool ok = false;
    std::string error;     // populated when !ok
    std::string protocol;  // e.g. "rolling-origin", "random-70/30"
    metrics::EvalResult eval;  // per_point kept, in time order

    // naive persistence (price at t-1) scored on this method's own test
    // points; NaN / 0 when no point has a valid previous step
    double persistence_mae = 0.0;
    std::size_t persistence_n = 0;

    double train_seconds = 0.0;  // wall clock, excluded from the JSON report

    std::string details_json;  // method-specific extras, serialized JSON

    // plot payloads (empty where not applicable)
    std::vector<trees::CvRow> cv_rows;        // tree: min-leaf sweep
    std::vector<double> oob;                  // bagged: OOB MAE vs b
    std::vector<BoostTraceCurve> boost_traces;
    std::string narx_trace_csv;
    std::vector<double> importance;  // split share per registry feature
};

struct Report {
    std::string config_text;  // canonical
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;

    // dataset provenance: price stats over valid real-time steps
    std::size_t n_steps = 0;
    std::size_t n_valid_prices = 0;
    double price_mean = 0.0;
    double price_sd = 0.0;
    double price_max = 0.0;
    std::string span_start, span_end;

    std::vector<std::string> feature_names;
    std::vector<MethodResult> methods;

    // true when every successful method scored the identical timestamp set;
    // otherwise caveat explains that the metrics are not directly comparable
    bool shared_test_points = false;
    std::string caveat;

    bool all_ok() const;
    std::string to_json() const;  // deterministic: no timestamps, no timings
};

/// Loads the data, runs every requested method (failures isolate: the report
/// marks the method failed and the rest proceed), and fills in provenance.
/// Throws ConfigError / ingest::DataError only for problems that precede the
/// first method.
Report run(const ExperimentConfig& cfg);

/// Writes the CSV plot bundle for every successful method into dir:
/// forecast_<m>.csv, error_vs_price_<m>.csv (+ _trimmed, dropping the 10%
/// largest absolute errors), importance_<m>.csv, cv_minleaf.csv,
/// oob_curve.csv, boost_train.csv, narx_trace.csv.
void emit_plot_data(const Report& report, const std::string& dir);

/// report.json plus the plot bundle, creating dir if needed.
void write_outputs(const Report& report, const std::string& dir);

}  // namespace gridcast::harness
