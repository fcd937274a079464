#include "gridcast/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "parallel.hpp"

namespace gridcast::harness {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// ---------------------------------------------------------------- formatting

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

template <typename T, typename Fn>
std::string join(const T& items, Fn&& one) {
    std::string out;
    bool first = true;
    for (const auto& item : items) {
        if (!first) out += ",";
        first = false;
        out += one(item);
    }
    return out;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// ------------------------------------------------------------- value parsing

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("expected a number, got '" + v + "'");
    }
}

long long parse_ll(const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long d = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("expected an integer, got '" + v + "'");
    }
}

int parse_int(const std::string& v) {
    const long long d = parse_ll(v);
    if (d < std::numeric_limits<int>::min() || d > std::numeric_limits<int>::max()) {
        throw std::invalid_argument("integer out of range: " + v);
    }
    return static_cast<int>(d);
}

std::uint64_t parse_u64(const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long d = std::stoull(v, &pos);
        if (pos != v.size() || v.front() == '-') throw std::invalid_argument("");
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> items;
    if (trim(v).empty()) return items;
    std::size_t begin = 0;
    while (true) {
        const std::size_t comma = v.find(',', begin);
        const std::string item = trim(v.substr(begin, comma - begin));
        if (item.empty()) throw std::invalid_argument("empty list item in '" + v + "'");
        items.push_back(item);
        if (comma == std::string::npos) break;
        begin = comma + 1;
    }
    return items;
}

std::vector<int> parse_int_list(const std::string& v) {
    std::vector<int> out;
    for (const auto& item : split_list(v)) out.push_back(parse_int(item));
    return out;
}

std::vector<double> parse_double_list(const std::string& v) {
    std::vector<double> out;
    for (const auto& item : split_list(v)) out.push_back(parse_double(item));
    return out;
}

Timestamp parse_timestamp(const std::string& v) {
    const bool date_only = v.find('T') == std::string::npos && v.find(' ') == std::string::npos;
    return Timestamp::parse(date_only ? v + "T00:00" : v);
}

// --------------------------------------------------------------- key routing

void apply_data(ExperimentConfig& c, const std::string& key, const std::string& v) {
    auto& s = c.synthetic;
    if (key == "source") {
        c.source = v;
    } else if (key == "csv_dir") {
        c.csv_dir = v;
    } else if (key == "seed") {
        s.seed = parse_u64(v);
    } else if (key == "start") {
        s.start = parse_timestamp(v);
    } else if (key == "days") {
        s.days = parse_int(v);
    } else if (key == "base_price") {
        s.base_price = parse_double(v);
    } else if (key == "price_lin") {
        s.price_lin = parse_double(v);
    } else if (key == "price_quad") {
        s.price_quad = parse_double(v);
    } else if (key == "scarcity_scale") {
        s.scarcity_scale = parse_double(v);
    } else if (key == "scarcity_knee") {
        s.scarcity_knee = parse_double(v);
    } else if (key == "noise_sd") {
        s.noise_sd = parse_double(v);
    } else if (key == "noise_rho") {
        s.noise_rho = parse_double(v);
    } else if (key == "demand_base") {
        s.demand_base = parse_double(v);
    } else if (key == "demand_daily_amp") {
        s.demand_daily_amp = parse_double(v);
    } else if (key == "demand_weekly_amp") {
        s.demand_weekly_amp = parse_double(v);
    } else if (key == "demand_noise_sd") {
        s.demand_noise_sd = parse_double(v);
    } else if (key == "spike_rate") {
        s.spike_rate = parse_double(v);
    } else if (key == "spike_gate") {
        s.spike_gate = parse_double(v);
    } else if (key == "spike_scale") {
        s.spike_scale = parse_double(v);
    } else if (key == "spike_shape") {
        s.spike_shape = parse_double(v);
    } else if (key == "spike_max_duration") {
        s.spike_max_duration = parse_int(v);
    } else if (key == "price_cap") {
        s.price_cap = parse_double(v);
    } else if (key == "forecast_noise_sd") {
        s.forecast_noise_sd = parse_double(v);
    } else if (key == "da_noise_sd") {
        s.da_noise_sd = parse_double(v);
    } else if (key == "wind_amplitude") {
        s.wind_amplitude = parse_double(v);
    } else if (key == "wind_noise_sd") {
        s.wind_noise_sd = parse_double(v);
    } else {
        throw std::invalid_argument("unknown key '" + key + "' in [data]");
    }
}

void apply_features(ExperimentConfig& c, const std::string& key, const std::string& v) {
    if (key == "past_hours") {
        c.features.w_past_hours = parse_int(v);
    } else if (key == "future_hours") {
        c.features.w_future_hours = parse_int(v);
    } else if (key == "include") {
        const auto items = split_list(v);
        c.features.include = std::set<std::string>(items.begin(), items.end());
    } else if (key == "calendar") {
        c.features.calendar = parse_bool(v);
    } else {
        throw std::invalid_argument("unknown key '" + key + "' in [features]");
    }
}

void apply_run(ExperimentConfig& c, const std::string& key, const std::string& v) {
    if (key == "methods") {
        c.methods = split_list(v);
    } else if (key == "seed") {
        c.seed = parse_u64(v);
    } else if (key == "out_dir") {
        c.out_dir = v;
    } else if (key == "unified_eval") {
        c.unified_eval = parse_bool(v);
    } else if (key == "parallel_methods") {
        c.parallel_methods = parse_bool(v);
    } else if (key == "threads") {
        c.n_threads = parse_int(v);
    } else {
        throw std::invalid_argument("unknown key '" + key + "' in [run]");
    }
}

void apply_arima(ExperimentConfig& c, const std::string& key, const std::string& v) {
    if (key == "ar_lags") {
        c.arima_spec.ar_lags = parse_int_list(v);
    } else if (key == "ma_lags") {
        c.arima_spec.ma_lags = parse_int_list(v);
    } else if (key == "d") {
        c.arima_spec.d = parse_int(v);
    } else if (key == "train_days") {
        c.rolling.train_days = parse_int(v);
    } else if (key == "test_days") {
        c.rolling.test_days = parse_int(v);
    } else {
        throw std::invalid_argument("unknown key '" + key + "' in [arima]");
    }
}

void apply_tree(ExperimentConfig& c, const std::string& key, const std::string& v) {
    if (key == "min_leaf") {
        c.tree.min_leaf = parse_int(v);
    } else if (key == "max_splits") {
        c.tree.max_splits = v == "unbounded" ? trees::kUnbounded : parse_int(v);
    } else if (key == "train_frac") {
        c.train_frac = parse_double(v);
    } else if (key == "cv_min_leaf") {
        c.cv_min_leaf = parse_int_list(v);
    } else if (key == "cv_folds") {
        c.cv_folds = parse_int(v);
    } else {
        throw std::invalid_argument("unknown key '" + key + "' in [tree]");
    }
}

void apply_bagged(ExperimentConfig& c, const std::string& key, const std::string& v) {
    if (key == "b") {
        const long long b = parse_ll(v);
        if (b < 1) throw std::invalid_argument("b must be >= 1");
        c.bag_b = static_cast<std::size_t>(b);
    } else if (key == "curve") {
        c.bag_curve = parse_bool(v);
    } else {
        throw std::invalid_argument("unknown key '" + key + "' in [bagged]");
    }
}

void apply_boosted(ExperimentConfig& c, const std::string& key, const std::string& v) {
    if (key == "nu") {
        c.boost.nu = parse_double(v);
    } else if (key == "max_splits_weak") {
        c.boost.max_splits_weak = parse_int(v);
    } else if (key == "m") {
        c.boost.m = parse_int(v);
    } else if (key == "min_leaf") {
        c.boost.min_leaf = parse_int(v);
    } else if (key == "grid") {
        c.boost_grid = parse_bool(v);
    } else if (key == "grid_nu") {
        c.boost_grid_nu = parse_double_list(v);
    } else if (key == "grid_msw") {
        c.boost_grid_msw = parse_int_list(v);
    } else {
        throw std::invalid_argument("unknown key '" + key + "' in [boosted]");
    }
}

void apply_narx(ExperimentConfig& c, const std::string& key, const std::string& v) {
    auto& n = c.narx;
    if (key == "w") {
        n.w = parse_int(v);
    } else if (key == "d") {
        n.d = parse_int(v);
    } else if (key == "hidden_layers") {
        n.hidden_layers = parse_int(v);
    } else if (key == "hidden_units") {
        n.hidden_units = parse_int(v);
    } else if (key == "loss") {
        if (v == "mae") {
            n.loss = narx::Loss::kMae;
        } else if (v == "mse") {
            n.loss = narx::Loss::kMse;
        } else {
            throw std::invalid_argument("loss must be mae or mse, got '" + v + "'");
        }
    } else if (key == "patience") {
        n.patience = parse_int(v);
    } else if (key == "max_epochs") {
        n.max_epochs = parse_int(v);
    } else if (key == "learning_rate") {
        n.learning_rate = parse_double(v);
    } else if (key == "momentum") {
        n.momentum = parse_double(v);
    } else if (key == "batch_size") {
        n.batch_size = parse_int(v);
    } else if (key == "lr_plateau_epochs") {
        n.lr_plateau_epochs = parse_int(v);
    } else {
        throw std::invalid_argument("unknown key '" + key + "' in [narx]");
    }
}

void apply(ExperimentConfig& c, const std::string& section, const std::string& key,
           const std::string& v) {
    if (section == "data") {
        apply_data(c, key, v);
    } else if (section == "features") {
        apply_features(c, key, v);
    } else if (section == "run") {
        apply_run(c, key, v);
    } else if (section == "arima") {
        apply_arima(c, key, v);
    } else if (section == "tree") {
        apply_tree(c, key, v);
    } else if (section == "bagged") {
        apply_bagged(c, key, v);
    } else if (section == "boosted") {
        apply_boosted(c, key, v);
    } else if (section == "narx") {
        apply_narx(c, key, v);
    } else {
        throw std::invalid_argument("unknown section [" + section + "]");
    }
}

// ------------------------------------------------------------ method helpers

std::vector<std::string> method_names() { return {"arima", "tree", "bagged", "boosted", "narx"}; }

bool wants(const ExperimentConfig& cfg, const std::string& m) {
    return std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end();
}

MarketDataset load_data(const ExperimentConfig& cfg) {
    if (cfg.source == "synthetic") return ingest::generate_synthetic(cfg.synthetic);
    std::map<std::string, std::string> paths;
    for (const auto& name : MarketDataset::stream_names()) {
        paths[name] = (fs::path(cfg.csv_dir) / (name + ".csv")).string();
    }
    return ingest::load_csv(paths, ingest::GapPolicy{});
}

void fill_dataset_stats(const MarketDataset& ds, Report& report) {
    const Stream& rt = ds.rt_price();
    long double sum = 0.0L, sumsq = 0.0L;
    double maxv = -std::numeric_limits<double>::infinity();
    std::size_t n = 0;
    for (std::size_t i = 0; i < rt.size(); ++i) {
        if (!rt.valid_at(i)) continue;
        const double v = rt.value_at(i);
        sum += v;
        sumsq += static_cast<long double>(v) * v;
        maxv = std::max(maxv, v);
        ++n;
    }
    report.n_steps = ds.n_steps();
    report.n_valid_prices = n;
    report.span_start = ds.span_start().to_string();
    report.span_end = ds.span_end().to_string();
    if (n == 0) return;
    const long double mean = sum / static_cast<long double>(n);
    report.price_mean = static_cast<double>(mean);
    report.price_max = maxv;
    if (n > 1) {
        const long double var = (sumsq - sum * mean) / static_cast<long double>(n - 1);
        report.price_sd = static_cast<double>(std::sqrt(std::max(0.0L, var)));
    }
}

void fill_persistence(const MarketDataset& ds, MethodResult& out) {
    const Stream& rt = ds.rt_price();
    std::vector<metrics::PredictionPair> pairs;
    for (const auto& p : out.eval.per_point) {
        if (!rt.contains(p.timestamp)) continue;
        const std::size_t i = rt.index_of(p.timestamp);
        if (i == 0 || !rt.valid_at(i - 1) || !rt.valid_at(i)) continue;
        pairs.push_back({rt.value_at(i), rt.value_at(i - 1)});
    }
    out.persistence_n = pairs.size();
    out.persistence_mae =
        pairs.empty() ? std::numeric_limits<double>::quiet_NaN() : metrics::mae(pairs);
}

// Mean feature-importance over several models (uniform model weight).
void accumulate_importance(std::vector<double>& acc, const std::vector<double>& one) {
    if (acc.empty()) acc.assign(one.size(), 0.0);
    for (std::size_t i = 0; i < one.size(); ++i) acc[i] += one[i];
}

void finish_importance(std::vector<double>& acc, std::size_t n_models) {
    if (n_models > 1) {
        for (double& v : acc) v /= static_cast<double>(n_models);
    }
}

// OOB MAE of the first b trees without refitting (the model is already fit).
std::vector<double> prefix_oob_curve(const trees::BaggedModel& model,
                                     const features::FeatureMatrix& X) {
    const std::size_t n = X.rows();
    std::vector<long double> sum(n, 0.0L);
    std::vector<std::size_t> cnt(n, 0);
    std::vector<double> curve(model.b(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t b = 0; b < model.b(); ++b) {
        for (std::size_t r = 0; r < n; ++r) {
            if (model.inbag[b][r] != 0) continue;
            sum[r] += trees::predict_tree(model.trees[b], X.row(r));
            ++cnt[r];
        }
        long double ae = 0.0L;
        std::size_t covered = 0;
        for (std::size_t r = 0; r < n; ++r) {
            if (cnt[r] == 0) continue;
            ++covered;
            ae += std::abs(X.targets[r] -
                           static_cast<double>(sum[r] / static_cast<long double>(cnt[r])));
        }
        if (covered > 0) curve[b] = static_cast<double>(ae / static_cast<long double>(covered));
    }
    return curve;
}

std::vector<metrics::PointError> score_rows(const features::FeatureMatrix& X,
                                            std::span<const std::uint32_t> rows,
                                            const std::function<double(std::size_t)>& predict) {
    std::vector<metrics::PointError> points;
    points.reserve(rows.size());
    for (std::uint32_t r : rows) {
        const double pred = predict(r);
        points.push_back({X.row_timestamps[r], X.targets[r], pred,
                          metrics::abs_error(X.targets[r], pred)});
    }
    return points;
}

// Row-index range [lo, hi) of matrix rows with timestamps in [from, to).
std::pair<std::uint32_t, std::uint32_t> row_range(const features::FeatureMatrix& X,
                                                  Timestamp from, Timestamp to) {
    const auto& ts = X.row_timestamps;
    const auto lo = std::lower_bound(ts.begin(), ts.end(), from) - ts.begin();
    const auto hi = std::lower_bound(ts.begin(), ts.end(), to) - ts.begin();
    return {static_cast<std::uint32_t>(lo), static_cast<std::uint32_t>(hi)};
}

std::vector<std::uint32_t> iota_rows(std::uint32_t lo, std::uint32_t hi) {
    std::vector<std::uint32_t> rows(hi - lo);
    std::iota(rows.begin(), rows.end(), lo);
    return rows;
}

Stream cut_stream(const Stream& s, Timestamp from, Timestamp to) {
    const std::size_t i0 = s.index_of(from);
    const std::size_t i1 = s.index_of(to);
    std::vector<double> values(s.values().begin() + static_cast<std::ptrdiff_t>(i0),
                               s.values().begin() + static_cast<std::ptrdiff_t>(i1) + 1);
    std::vector<std::uint8_t> valid(s.valid_mask().begin() + static_cast<std::ptrdiff_t>(i0),
                                    s.valid_mask().begin() + static_cast<std::ptrdiff_t>(i1) + 1);
    return Stream(s.name(), s.resolution_minutes(), from, std::move(values), std::move(valid));
}

// Whole-hour sub-span covering [from, to] (clamped to the dataset span).
MarketDataset slice_dataset(const MarketDataset& ds, Timestamp from, Timestamp to) {
    Timestamp a = std::max(from, ds.span_start()).floor_to_hour();
    if (a < ds.span_start()) a = ds.span_start();
    const Timestamp bh = std::min(to, ds.span_end()).floor_to_hour();
    Timestamp b = bh.plus_steps(Timestamp::kStepsPerHour - 1);
    if (b > ds.span_end()) b = ds.span_end();
    if (b < a) throw std::invalid_argument("slice_dataset: empty range");
    return MarketDataset(cut_stream(ds.rt_price(), a, b), cut_stream(ds.rt_demand(), a, b),
                         cut_stream(ds.demand_forecast(), a, bh),
                         cut_stream(ds.da_price(), a, bh), cut_stream(ds.wind(), a, bh));
}

// ------------------------------------------------------------ method runners

void run_arima_method(const ExperimentConfig& cfg, const MarketDataset& ds, MethodResult& out) {
    out.protocol = "rolling-origin";
    arima::RollingResult rr =
        arima::rolling_evaluate(ds, cfg.arima_spec, cfg.rolling, cfg.n_threads);
    ordered_json windows = ordered_json::array();
    std::size_t skipped = 0;
    for (const auto& w : rr.windows) {
        skipped += w.skipped ? 1 : 0;
        ordered_json jw{{"index", w.index},
                        {"train_start", w.train_start.to_string()},
                        {"test_start", w.test_start.to_string()},
                        {"test_end", w.test_end.to_string()},
                        {"n_scored", w.n_scored},
                        {"mae", w.mae},
                        {"rmse", w.rmse},
                        {"skipped", w.skipped}};
        if (w.skipped) {
            jw["skip_reason"] = w.skip_reason;
        } else {
            jw["alpha"] = w.model.alpha;
            jw["theta"] = w.model.theta;
            jw["sigma2"] = w.model.sigma2;
            jw["converged"] = w.model.fit_report.converged;
        }
        windows.push_back(std::move(jw));
    }
    out.details_json = ordered_json{{"n_windows", rr.windows.size()},
                                    {"n_skipped", skipped},
                                    {"windows", std::move(windows)}}
                           .dump();
    out.eval = std::move(rr.overall);
}

// The three tree-family methods share the matrix and the seeded 70/30 split,
// so their test points coincide.
void run_tree_method(const ExperimentConfig& cfg, const features::FeatureMatrix& X,
                     MethodResult& out) {
    out.protocol = "random-70/30";
    const auto split = trees::train_test_split(X.rows(), cfg.train_frac, cfg.seed);
    const trees::DataView d = trees::DataView::of(X);
    const trees::RegressionTree tree = trees::fit_tree(d, split.train, cfg.tree);
    out.eval = metrics::evaluate(score_rows(
        X, split.test, [&](std::size_t r) { return trees::predict_tree(tree, X.row(r)); }));
    out.importance = trees::feature_importance(tree, X.cols);

    ordered_json details{{"n_train", split.train.size()},
                         {"n_test", split.test.size()},
                         {"n_internal", tree.n_internal()}};
    if (cfg.cv_folds >= 2 && !cfg.cv_min_leaf.empty()) {
        const features::FeatureMatrix Xtrain = features::subset_rows(X, split.train);
        if (Xtrain.rows() >= static_cast<std::size_t>(cfg.cv_folds)) {
            std::vector<trees::TreeParams> grid;
            grid.reserve(cfg.cv_min_leaf.size());
            for (int ml : cfg.cv_min_leaf) grid.push_back({ml, trees::kUnbounded});
            const trees::CvResult cv =
                trees::kfold_cv(Xtrain, grid, cfg.cv_folds, cfg.seed, cfg.n_threads);
            out.cv_rows = cv.rows;
            details["cv_folds"] = cfg.cv_folds;
            details["cv_best_min_leaf"] = cv.best().params.min_leaf;
            details["cv_best_mean_mae"] = cv.best().mean_mae;
        } else {
            details["cv_skipped"] = "fewer training rows than folds";
        }
    }
    out.details_json = details.dump();
}

void run_bagged_method(const ExperimentConfig& cfg, const features::FeatureMatrix& X,
                       MethodResult& out) {
    out.protocol = "random-70/30";
    const auto split = trees::train_test_split(X.rows(), cfg.train_frac, cfg.seed);
    const features::FeatureMatrix Xtrain = features::subset_rows(X, split.train);
    const trees::BaggedModel model =
        trees::fit_bagged(Xtrain, cfg.bag_b, cfg.seed + 1, cfg.n_threads);
    const trees::OobResult oob = trees::oob_error(model, Xtrain);
    out.eval = metrics::evaluate(score_rows(
        X, split.test, [&](std::size_t r) { return trees::predict_bagged(model, X.row(r)); }));
    out.importance = trees::feature_importance(model, X.cols);
    if (cfg.bag_curve) out.oob = prefix_oob_curve(model, Xtrain);
    out.details_json = ordered_json{{"b", model.b()},
                                    {"oob_mae", oob.mae},
                                    {"oob_covered", oob.n_covered},
                                    {"oob_excluded", oob.n_excluded},
                                    {"n_train", split.train.size()},
                                    {"n_test", split.test.size()}}
                           .dump();
}

void run_boosted_method(const ExperimentConfig& cfg, const features::FeatureMatrix& X,
                        MethodResult& out) {
    out.protocol = "random-70/30";
    const auto split = trees::train_test_split(X.rows(), cfg.train_frac, cfg.seed);
    const features::FeatureMatrix Xtrain = features::subset_rows(X, split.train);
    const trees::BoostedModel model = trees::fit_lsboost(Xtrain, cfg.boost);
    out.eval = metrics::evaluate(score_rows(
        X, split.test, [&](std::size_t r) { return trees::predict_boosted(model, X.row(r)); }));
    out.importance = trees::feature_importance(model, X.cols);
    out.boost_traces.push_back({model.nu, model.max_splits_weak, model.trace});
    if (cfg.boost_grid) {
        for (double nu : cfg.boost_grid_nu) {
            for (int msw : cfg.boost_grid_msw) {
                if (nu == cfg.boost.nu && msw == cfg.boost.max_splits_weak) continue;
                trees::BoostParams p{nu, msw, cfg.boost.m, cfg.boost.min_leaf};
                out.boost_traces.push_back({nu, msw, trees::fit_lsboost(Xtrain, p).trace});
            }
        }
    }
    out.details_json = ordered_json{{"m", cfg.boost.m},
                                    {"nu", model.nu},
                                    {"max_splits_weak", model.max_splits_weak},
                                    {"min_leaf", model.min_leaf},
                                    {"f0", model.f0},
                                    {"final_train_mae", model.trace.back().train_mae},
                                    {"final_train_mse", model.trace.back().train_mse},
                                    {"n_train", split.train.size()},
                                    {"n_test", split.test.size()}}
                           .dump();
}

void run_narx_method(const ExperimentConfig& cfg, const MarketDataset& ds, MethodResult& out) {
    out.protocol = "temporal-70/15/15";
    narx::NarxConfig nc = cfg.narx;
    nc.seed = cfg.seed;
    const narx::TrainResult tr = narx::train(ds, nc);
    out.eval = narx::predict_series(tr.net, ds, tr.test_begin, tr.test_end);
    out.narx_trace_csv = tr.trace.to_csv();
    out.details_json = ordered_json{{"stop_reason", tr.trace.stop_reason},
                                    {"best_epoch", tr.trace.best_epoch},
                                    {"n_epochs", tr.trace.train_loss.size()},
                                    {"n_train", tr.n_train},
                                    {"n_val", tr.n_val},
                                    {"n_test", tr.n_test},
                                    {"test_begin", tr.test_begin.to_string()},
                                    {"test_end", tr.test_end.to_string()},
                                    {"input_dim", tr.net.input_dim()},
                                    {"n_parameters", tr.net.n_parameters()}}
                           .dump();
}

// ------------------------------------------------------- unified-eval runners

// Rolling-origin evaluation for a tree-family method: refit per window on the
// window's training rows, score its test rows, pool the points.
void run_tree_family_unified(const std::string& method, const ExperimentConfig& cfg,
                             const MarketDataset& ds, const features::FeatureMatrix& X,
                             MethodResult& out) {
    out.protocol = "rolling-origin";
    const auto windows = arima::enumerate_windows(ds.n_steps(), cfg.rolling);
    const Timestamp t0 = ds.span_start();
    const trees::DataView d = trees::DataView::of(X);
    std::vector<metrics::PointError> points;
    std::vector<double> importance;
    std::size_t used = 0, skipped = 0;
    for (std::size_t wi = 0; wi < windows.size(); ++wi) {
        const auto& w = windows[wi];
        const auto [tr_lo, tr_hi] =
            row_range(X, t0.plus_steps(static_cast<std::int64_t>(w.train_begin)),
                      t0.plus_steps(static_cast<std::int64_t>(w.train_end)));
        const auto [te_lo, te_hi] =
            row_range(X, t0.plus_steps(static_cast<std::int64_t>(w.test_begin)),
                      t0.plus_steps(static_cast<std::int64_t>(w.test_end)));
        const std::size_t n_train = tr_hi - tr_lo;
        if (n_train < 2 || te_hi == te_lo) {
            ++skipped;
            continue;
        }
        const auto train_rows = iota_rows(tr_lo, tr_hi);
        const auto test_rows = iota_rows(te_lo, te_hi);
        std::vector<metrics::PointError> wpoints;
        if (method == "tree") {
            const auto tree = trees::fit_tree(d, train_rows, cfg.tree);
            wpoints = score_rows(X, test_rows,
                                 [&](std::size_t r) { return trees::predict_tree(tree, X.row(r)); });
            accumulate_importance(importance, trees::feature_importance(tree, X.cols));
        } else if (method == "bagged") {
            const features::FeatureMatrix Xw = features::subset_rows(X, train_rows);
            const auto model =
                trees::fit_bagged(Xw, cfg.bag_b, cfg.seed + 1 + wi, cfg.n_threads);
            wpoints = score_rows(X, test_rows, [&](std::size_t r) {
                return trees::predict_bagged(model, X.row(r));
            });
            accumulate_importance(importance, trees::feature_importance(model, X.cols));
        } else {
            const features::FeatureMatrix Xw = features::subset_rows(X, train_rows);
            const auto model = trees::fit_lsboost(Xw, cfg.boost);
            wpoints = score_rows(X, test_rows, [&](std::size_t r) {
                return trees::predict_boosted(model, X.row(r));
            });
            accumulate_importance(importance, trees::feature_importance(model, X.cols));
        }
        points.insert(points.end(), wpoints.begin(), wpoints.end());
        ++used;
    }
    if (points.empty()) throw std::runtime_error(method + ": no scorable rolling window");
    out.eval = metrics::evaluate(std::move(points));
    finish_importance(importance, used);
    out.importance = std::move(importance);
    out.details_json = ordered_json{{"n_windows", windows.size()},
                                    {"n_windows_used", used},
                                    {"n_windows_skipped", skipped}}
                           .dump();
}

void run_narx_unified(const ExperimentConfig& cfg, const MarketDataset& ds, MethodResult& out) {
    out.protocol = "rolling-origin";
    const auto windows = arima::enumerate_windows(ds.n_steps(), cfg.rolling);
    const Timestamp t0 = ds.span_start();
    std::vector<metrics::PointError> points;
    std::size_t used = 0, skipped = 0;
    std::string last_trace;
    for (const auto& w : windows) {
        const Timestamp train_from = t0.plus_steps(static_cast<std::int64_t>(w.train_begin));
        const Timestamp train_to = t0.plus_steps(static_cast<std::int64_t>(w.train_end) - 1);
        const Timestamp test_from = t0.plus_steps(static_cast<std::int64_t>(w.test_begin));
        const Timestamp test_to = t0.plus_steps(static_cast<std::int64_t>(w.test_end) - 1);
        narx::NarxConfig nc = cfg.narx;
        nc.seed = cfg.seed;
        try {
            const MarketDataset train_ds = slice_dataset(ds, train_from, train_to);
            const narx::TrainResult tr = narx::train(train_ds, nc);
            const metrics::EvalResult ev = narx::predict_series(tr.net, ds, test_from, test_to);
            points.insert(points.end(), ev.per_point.begin(), ev.per_point.end());
            last_trace = tr.trace.to_csv();
            ++used;
        } catch (const std::exception&) {
            ++skipped;
        }
    }
    if (points.empty()) throw std::runtime_error("narx: no scorable rolling window");
    out.eval = metrics::evaluate(std::move(points));
    out.narx_trace_csv = std::move(last_trace);
    out.details_json = ordered_json{{"n_windows", windows.size()},
                                    {"n_windows_used", used},
                                    {"n_windows_skipped", skipped}}
                           .dump();
}

// ---------------------------------------------------------------- CSV output

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string forecast_csv(const MethodResult& m) {
    std::string csv = "timestamp,real,predicted,abs_error\n";
    for (const auto& p : m.eval.per_point) {
        csv += p.timestamp.to_string();
        csv += "," + fmt_double(p.real) + "," + fmt_double(p.predicted) + "," +
               fmt_double(p.abs_error) + "\n";
    }
    return csv;
}

std::string scatter_csv(const MethodResult& m, bool trimmed) {
    const auto& pts = m.eval.per_point;
    std::vector<std::size_t> order(pts.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<bool> dropped(pts.size(), false);
    if (trimmed) {
        // drop the 10% largest absolute errors (ties: later timestamp first)
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (pts[a].abs_error != pts[b].abs_error) return pts[a].abs_error > pts[b].abs_error;
            return a > b;
        });
        const std::size_t k = pts.size() / 10;
        for (std::size_t i = 0; i < k; ++i) dropped[order[i]] = true;
    }
    std::string csv = "real,abs_error\n";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (dropped[i]) continue;
        csv += fmt_double(pts[i].real) + "," + fmt_double(pts[i].abs_error) + "\n";
    }
    return csv;
}

std::string cv_csv(const MethodResult& m) {
    std::string csv = "min_leaf,mean_mae,mean_mse\n";
    for (const auto& row : m.cv_rows) {
        csv += std::to_string(row.params.min_leaf) + "," + fmt_double(row.mean_mae) + "," +
               fmt_double(row.mean_mse) + "\n";
    }
    return csv;
}

std::string oob_csv(const MethodResult& m) {
    std::string csv = "b,oob_mae\n";
    for (std::size_t b = 0; b < m.oob.size(); ++b) {
        csv += std::to_string(b + 1) + "," + fmt_double(m.oob[b]) + "\n";
    }
    return csv;
}

std::string boost_csv(const MethodResult& m) {
    std::string csv = "nu,max_splits_weak,stage,train_mae,train_mse\n";
    for (const auto& curve : m.boost_traces) {
        for (std::size_t s = 0; s < curve.trace.size(); ++s) {
            csv += fmt_double(curve.nu) + "," + std::to_string(curve.max_splits_weak) + "," +
                   std::to_string(s + 1) + "," + fmt_double(curve.trace[s].train_mae) + "," +
                   fmt_double(curve.trace[s].train_mse) + "\n";
        }
    }
    return csv;
}

}  // namespace

// ------------------------------------------------------------- public: config

void ExperimentConfig::validate() const {
    auto wrap = [](const char* where, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            throw ConfigError(std::string(where) + ": " + e.what());
        }
    };
    if (source != "synthetic" && source != "csv") {
        throw ConfigError("[data] source must be 'synthetic' or 'csv', got '" + source + "'");
    }
    if (source == "csv" && csv_dir.empty()) {
        throw ConfigError("[data] csv_dir is required when source = csv");
    }
    wrap("[data]", [&] { synthetic.validate(); });
    wrap("[features]", [&] { features.validate(); });

    const auto known = method_names();
    std::set<std::string> seen;
    for (const auto& m : methods) {
        if (std::find(known.begin(), known.end(), m) == known.end()) {
            throw ConfigError("[run] unknown method '" + m + "'");
        }
        if (!seen.insert(m).second) throw ConfigError("[run] duplicate method '" + m + "'");
    }
    if (n_threads < 0) throw ConfigError("[run] threads must be >= 0");

    wrap("[arima]", [&] {
        arima_spec.validate();
        rolling.validate();
    });
    wrap("[tree]", [&] { tree.validate(); });
    if (!(train_frac > 0.0) || !(train_frac < 1.0)) {
        throw ConfigError("[tree] train_frac must be in (0, 1)");
    }
    if (cv_folds != 0 && cv_folds < 2) throw ConfigError("[tree] cv_folds must be 0 or >= 2");
    for (int ml : cv_min_leaf) {
        if (ml < 1) throw ConfigError("[tree] cv_min_leaf entries must be >= 1");
    }
    if (bag_b < 1) throw ConfigError("[bagged] b must be >= 1");
    wrap("[boosted]", [&] { boost.validate(); });
    for (double nu : boost_grid_nu) {
        if (!(nu > 0.0) || nu > 1.0) throw ConfigError("[boosted] grid_nu entries must be in (0, 1]");
    }
    for (int msw : boost_grid_msw) {
        if (msw < 1) throw ConfigError("[boosted] grid_msw entries must be >= 1");
    }
    if (boost_grid && (boost_grid_nu.empty() || boost_grid_msw.empty())) {
        throw ConfigError("[boosted] grid needs non-empty grid_nu and grid_msw");
    }
    wrap("[narx]", [&] { narx.validate(); });
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    std::string section;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        try {
            if (line.front() == '[') {
                if (line.back() != ']') throw std::invalid_argument("unclosed section header");
                section = trim(line.substr(1, line.size() - 2));
                static const std::set<std::string> sections = {
                    "data", "features", "run", "arima", "tree", "bagged", "boosted", "narx"};
                if (!sections.count(section)) {
                    throw std::invalid_argument("unknown section [" + section + "]");
                }
                continue;
            }
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("expected 'key = value'");
            if (section.empty()) throw std::invalid_argument("key before any [section]");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) throw std::invalid_argument("empty key");
            apply(cfg, section, key, value);
        } catch (const std::exception& e) {
            throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string canonical_config(const ExperimentConfig& c) {
    std::string out;
    auto kv = [&](const char* k, const std::string& v) {
        out += k;
        out += " = ";
        out += v;
        out += "\n";
    };
    auto ints = [](const std::vector<int>& v) {
        return join(v, [](int x) { return std::to_string(x); });
    };
    const auto& s = c.synthetic;
    out += "[data]\n";
    kv("source", c.source);
    kv("csv_dir", c.csv_dir);
    kv("seed", std::to_string(s.seed));
    kv("start", s.start.to_string());
    kv("days", std::to_string(s.days));
    kv("base_price", fmt_double(s.base_price));
    kv("price_lin", fmt_double(s.price_lin));
    kv("price_quad", fmt_double(s.price_quad));
    kv("scarcity_scale", fmt_double(s.scarcity_scale));
    kv("scarcity_knee", fmt_double(s.scarcity_knee));
    kv("noise_sd", fmt_double(s.noise_sd));
    kv("noise_rho", fmt_double(s.noise_rho));
    kv("demand_base", fmt_double(s.demand_base));
    kv("demand_daily_amp", fmt_double(s.demand_daily_amp));
    kv("demand_weekly_amp", fmt_double(s.demand_weekly_amp));
    kv("demand_noise_sd", fmt_double(s.demand_noise_sd));
    kv("spike_rate", fmt_double(s.spike_rate));
    kv("spike_gate", fmt_double(s.spike_gate));
    kv("spike_scale", fmt_double(s.spike_scale));
    kv("spike_shape", fmt_double(s.spike_shape));
    kv("spike_max_duration", std::to_string(s.spike_max_duration));
    kv("price_cap", fmt_double(s.price_cap));
    kv("forecast_noise_sd", fmt_double(s.forecast_noise_sd));
    kv("da_noise_sd", fmt_double(s.da_noise_sd));
    kv("wind_amplitude", fmt_double(s.wind_amplitude));
    kv("wind_noise_sd", fmt_double(s.wind_noise_sd));

    out += "\n[features]\n";
    kv("past_hours", std::to_string(c.features.w_past_hours));
    kv("future_hours", std::to_string(c.features.w_future_hours));
    kv("include", join(c.features.include, [](const std::string& v) { return v; }));
    kv("calendar", fmt_bool(c.features.calendar));

    out += "\n[run]\n";
    kv("methods", join(c.methods, [](const std::string& v) { return v; }));
    kv("seed", std::to_string(c.seed));
    kv("out_dir", c.out_dir);
    kv("unified_eval", fmt_bool(c.unified_eval));
    kv("parallel_methods", fmt_bool(c.parallel_methods));
    kv("threads", std::to_string(c.n_threads));

    out += "\n[arima]\n";
    kv("ar_lags", ints(c.arima_spec.ar_lags));
    kv("ma_lags", ints(c.arima_spec.ma_lags));
    kv("d", std::to_string(c.arima_spec.d));
    kv("train_days", std::to_string(c.rolling.train_days));
    kv("test_days", std::to_string(c.rolling.test_days));

    out += "\n[tree]\n";
    kv("min_leaf", std::to_string(c.tree.min_leaf));
    kv("max_splits", c.tree.max_splits == trees::kUnbounded ? "unbounded"
                                                            : std::to_string(c.tree.max_splits));
    kv("train_frac", fmt_double(c.train_frac));
    kv("cv_min_leaf", ints(c.cv_min_leaf));
    kv("cv_folds", std::to_string(c.cv_folds));

    out += "\n[bagged]\n";
    kv("b", std::to_string(c.bag_b));
    kv("curve", fmt_bool(c.bag_curve));

    out += "\n[boosted]\n";
    kv("nu", fmt_double(c.boost.nu));
    kv("max_splits_weak", std::to_string(c.boost.max_splits_weak));
    kv("m", std::to_string(c.boost.m));
    kv("min_leaf", std::to_string(c.boost.min_leaf));
    kv("grid", fmt_bool(c.boost_grid));
    kv("grid_nu", join(c.boost_grid_nu, fmt_double));
    kv("grid_msw", ints(c.boost_grid_msw));

    out += "\n[narx]\n";
    kv("w", std::to_string(c.narx.w));
    kv("d", std::to_string(c.narx.d));
    kv("hidden_layers", std::to_string(c.narx.hidden_layers));
    kv("hidden_units", std::to_string(c.narx.hidden_units));
    kv("loss", c.narx.loss == narx::Loss::kMae ? "mae" : "mse");
    kv("patience", std::to_string(c.narx.patience));
    kv("max_epochs", std::to_string(c.narx.max_epochs));
    kv("learning_rate", fmt_double(c.narx.learning_rate));
    kv("momentum", fmt_double(c.narx.momentum));
    kv("batch_size", std::to_string(c.narx.batch_size));
    kv("lr_plateau_epochs", std::to_string(c.narx.lr_plateau_epochs));
    return out;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    const std::string text = canonical_config(cfg);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

// --------------------------------------------------------------- public: run

bool Report::all_ok() const {
    return std::all_of(methods.begin(), methods.end(),
                       [](const MethodResult& m) { return m.ok; });
}

Report run(const ExperimentConfig& cfg) {
    cfg.validate();
    const MarketDataset ds = load_data(cfg);

    Report report;
    report.config_text = canonical_config(cfg);
    report.config_hash = config_hash(cfg);
    report.seed = cfg.seed;
    report.feature_names = cfg.features.registry();
    fill_dataset_stats(ds, report);

    const bool wants_tree_family =
        wants(cfg, "tree") || wants(cfg, "bagged") || wants(cfg, "boosted");
    features::FeatureMatrix X;
    std::string matrix_error;  // isolates to the tree-family methods
    if (wants_tree_family) {
        try {
            X = features::build_matrix(ds, cfg.features, features::first_usable(ds, cfg.features),
                                       features::last_usable(ds, cfg.features));
        } catch (const std::exception& e) {
            matrix_error = std::string("feature matrix: ") + e.what();
        }
    }

    report.methods.resize(cfg.methods.size());
    auto run_one = [&](std::size_t i) {
        MethodResult& out = report.methods[i];
        out.method = cfg.methods[i];
        const auto t0 = std::chrono::steady_clock::now();
        try {
            if (out.method == "arima") {
                run_arima_method(cfg, ds, out);
            } else if (out.method == "narx") {
                cfg.unified_eval ? run_narx_unified(cfg, ds, out) : run_narx_method(cfg, ds, out);
            } else if (!matrix_error.empty()) {
                throw std::runtime_error(matrix_error);
            } else if (cfg.unified_eval) {
                run_tree_family_unified(out.method, cfg, ds, X, out);
            } else if (out.method == "tree") {
                run_tree_method(cfg, X, out);
            } else if (out.method == "bagged") {
                run_bagged_method(cfg, X, out);
            } else {
                run_boosted_method(cfg, X, out);
            }
            fill_persistence(ds, out);
            out.ok = true;
        } catch (const std::exception& e) {
            out.ok = false;
            out.error = e.what();
        }
        out.train_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    if (cfg.parallel_methods) {
        detail::parallel_for(cfg.methods.size(), cfg.n_threads, run_one);
    } else {
        for (std::size_t i = 0; i < cfg.methods.size(); ++i) run_one(i);
    }

    const MethodResult* first_ok = nullptr;
    bool shared = true;
    for (const auto& m : report.methods) {
        if (!m.ok) continue;
        if (first_ok == nullptr) {
            first_ok = &m;
            continue;
        }
        const auto& a = first_ok->eval.per_point;
        const auto& b = m.eval.per_point;
        if (a.size() != b.size() ||
            !std::equal(a.begin(), a.end(), b.begin(), [](const auto& x, const auto& y) {
                return x.timestamp == y.timestamp;
            })) {
            shared = false;
            break;
        }
    }
    report.shared_test_points = shared;
    if (!shared) {
        report.caveat =
            "methods were evaluated on different test point sets; "
            "MAE/RMSE values are not directly comparable across methods";
    }
    return report;
}

std::string Report::to_json() const {
    ordered_json j;
    j["tool"] = "gridcast";
    j["schema"] = 1;
    j["seed"] = seed;
    j["config_hash"] = hex64(config_hash);
    j["dataset"] = ordered_json{{"span_start", span_start},   {"span_end", span_end},
                                {"n_steps", n_steps},         {"n_valid_prices", n_valid_prices},
                                {"price_mean", price_mean},   {"price_sd", price_sd},
                                {"price_max", price_max}};
    j["shared_test_points"] = shared_test_points;
    j["caveat"] = caveat;
    ordered_json jm = ordered_json::array();
    for (const auto& m : methods) {
        ordered_json one{{"method", m.method}, {"ok", m.ok}};
        if (!m.ok) {
            one["error"] = m.error;
        } else {
            one["protocol"] = m.protocol;
            one["mae"] = m.eval.mae;
            one["rmse"] = m.eval.rmse;
            one["n"] = m.eval.n;
            one["persistence_mae"] = m.persistence_mae;  // NaN serializes as null
            one["persistence_n"] = m.persistence_n;
            one["details"] =
                m.details_json.empty() ? ordered_json::object() : ordered_json::parse(m.details_json);
            if (!m.importance.empty() && m.importance.size() == feature_names.size()) {
                ordered_json imp;
                for (std::size_t f = 0; f < m.importance.size(); ++f) {
                    imp[feature_names[f]] = m.importance[f];
                }
                one["importance"] = std::move(imp);
            }
        }
        jm.push_back(std::move(one));
    }
    j["methods"] = std::move(jm);
    j["config"] = config_text;
    return j.dump(2) + "\n";
}

void emit_plot_data(const Report& report, const std::string& dir) {
    fs::create_directories(dir);
    const fs::path base(dir);
    for (const auto& m : report.methods) {
        if (!m.ok) continue;
        write_file(base / ("forecast_" + m.method + ".csv"), forecast_csv(m));
        write_file(base / ("error_vs_price_" + m.method + ".csv"), scatter_csv(m, false));
        write_file(base / ("error_vs_price_" + m.method + "_trimmed.csv"), scatter_csv(m, true));
        if (!m.importance.empty() && m.importance.size() == report.feature_names.size()) {
            write_file(base / ("importance_" + m.method + ".csv"),
                       trees::importance_csv(report.feature_names, m.importance));
        }
        if (!m.cv_rows.empty()) write_file(base / "cv_minleaf.csv", cv_csv(m));
        if (!m.oob.empty()) write_file(base / "oob_curve.csv", oob_csv(m));
        if (!m.boost_traces.empty()) write_file(base / "boost_train.csv", boost_csv(m));
        if (!m.narx_trace_csv.empty()) write_file(base / "narx_trace.csv", m.narx_trace_csv);
    }
}

void write_outputs(const Report& report, const std::string& dir) {
    fs::create_directories(dir);
    write_file(fs::path(dir) / "report.json", report.to_json());
    emit_plot_data(report, dir);
}

}  // namespace gridcast::harness
