#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridcast/harness.hpp"

using namespace gridcast;
using harness::ConfigError;
using harness::ExperimentConfig;
using harness::MethodResult;
using harness::Report;
using nlohmann::json;

namespace fs = std::filesystem;

namespace {

// Small but fully-populated experiment: every method finishes in well under a
// second on this dataset.
ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.synthetic.seed = 7;
    cfg.synthetic.days = 20;
    cfg.seed = 11;
    cfg.rolling.train_days = 7;
    cfg.rolling.test_days = 3;
    cfg.cv_folds = 0;
    cfg.bag_b = 8;
    cfg.boost.m = 10;
    cfg.narx.w = 2;
    cfg.narx.d = 2;
    cfg.narx.max_epochs = 3;
    cfg.narx.patience = 3;
    return cfg;
}

std::size_t count_lines(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

const MethodResult& method_of(const Report& r, const std::string& name) {
    for (const auto& m : r.methods) {
        if (m.method == name) return m;
    }
    REQUIRE(false);
    return r.methods.front();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("gridcast_test_" + tag)) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("empty config text yields the defaults") {
    const ExperimentConfig cfg = harness::parse_config("");
    const ExperimentConfig def;
    CHECK(harness::canonical_config(cfg) == harness::canonical_config(def));
    CHECK(cfg.synthetic.days == 180);
    CHECK(cfg.seed == 42);
    CHECK(cfg.methods == std::vector<std::string>{"arima", "tree", "bagged", "boosted", "narx"});
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("canonical config round-trips through the parser") {
    ExperimentConfig cfg;
    cfg.source = "csv";
    cfg.csv_dir = "/tmp/data";
    cfg.synthetic.seed = 9;
    cfg.synthetic.days = 33;
    cfg.synthetic.start = Timestamp::from_ymd(2015, 3, 2);
    cfg.synthetic.spike_rate = 0.25;
    cfg.synthetic.spike_gate = 1.5;
    cfg.synthetic.scarcity_scale = 120.0;
    cfg.synthetic.scarcity_knee = 0.4;
    cfg.features.w_past_hours = 3;
    cfg.features.w_future_hours = 2;
    cfg.features.include = {"rt_price", "wind"};
    cfg.features.calendar = false;
    cfg.methods = {"tree", "narx"};
    cfg.seed = 1234567;
    cfg.out_dir = "elsewhere";
    cfg.unified_eval = true;
    cfg.parallel_methods = true;
    cfg.n_threads = 3;
    cfg.arima_spec.ar_lags = {1, 5};
    cfg.arima_spec.ma_lags = {2};
    cfg.arima_spec.d = 0;
    cfg.rolling.train_days = 9;
    cfg.rolling.test_days = 2;
    cfg.tree.min_leaf = 4;
    cfg.tree.max_splits = trees::kUnbounded;
    cfg.train_frac = 0.6;
    cfg.cv_min_leaf = {2, 8};
    cfg.cv_folds = 3;
    cfg.bag_b = 17;
    cfg.bag_curve = false;
    cfg.boost.nu = 0.25;
    cfg.boost.max_splits_weak = 8;
    cfg.boost.m = 64;
    cfg.boost.min_leaf = 2;
    cfg.boost_grid = true;
    cfg.boost_grid_nu = {0.1, 1.0};
    cfg.boost_grid_msw = {4};
    cfg.narx.w = 5;
    cfg.narx.d = 6;
    cfg.narx.hidden_layers = 2;
    cfg.narx.hidden_units = 7;
    cfg.narx.loss = narx::Loss::kMse;
    cfg.narx.patience = 4;
    cfg.narx.max_epochs = 50;
    cfg.narx.learning_rate = 0.012;
    cfg.narx.momentum = 0.5;
    cfg.narx.batch_size = 32;
    cfg.narx.lr_plateau_epochs = 0;

    const std::string text = harness::canonical_config(cfg);
    const ExperimentConfig back = harness::parse_config(text);
    CHECK(harness::canonical_config(back) == text);
    CHECK(back.source == "csv");
    CHECK(back.csv_dir == "/tmp/data");
    CHECK(back.synthetic.start == Timestamp::from_ymd(2015, 3, 2));
    CHECK(back.synthetic.spike_rate == 0.25);
    CHECK(back.synthetic.spike_gate == 1.5);
    CHECK(back.synthetic.scarcity_scale == 120.0);
    CHECK(back.synthetic.scarcity_knee == 0.4);
    CHECK(back.features.include == std::set<std::string>{"rt_price", "wind"});
    CHECK(back.tree.max_splits == trees::kUnbounded);
    CHECK(back.methods == std::vector<std::string>{"tree", "narx"});
    CHECK(back.narx.loss == narx::Loss::kMse);
    CHECK(back.boost_grid_nu == std::vector<double>{0.1, 1.0});
    CHECK(harness::config_hash(back) == harness::config_hash(cfg));
}

TEST_CASE("config parser reads comments, blanks, and later-wins overrides") {
    const std::string text =
        "# leading comment\n"
        "[run]\n"
        "seed = 1   # trailing comment\n"
        "\n"
        "seed = 5\n"
        "methods = tree\n"
        "[data]\n"
        "days = 10\n";
    const ExperimentConfig cfg = harness::parse_config(text);
    CHECK(cfg.seed == 5);
    CHECK(cfg.methods == std::vector<std::string>{"tree"});
    CHECK(cfg.synthetic.days == 10);
}

TEST_CASE("config parser rejects malformed input with the line number") {
    auto message_of = [](const std::string& text) {
        try {
            harness::parse_config(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message_of("[nope]\n").find("config line 1") != std::string::npos);
    CHECK(message_of("[nope]\n").find("unknown section") != std::string::npos);
    CHECK(message_of("[data]\nwhat = 1\n").find("config line 2") != std::string::npos);
    CHECK(message_of("[data]\nwhat = 1\n").find("unknown key") != std::string::npos);
    CHECK(message_of("seed = 1\n").find("before any") != std::string::npos);
    CHECK(message_of("[run]\nseed\n").find("key = value") != std::string::npos);
    CHECK(message_of("[run\nseed = 1\n").find("unclosed") != std::string::npos);
    CHECK(message_of("[run]\nseed = twelve\n").find("non-negative integer") != std::string::npos);
    CHECK(message_of("[boosted]\nnu = fast\n").find("expected a number") != std::string::npos);
    CHECK(message_of("[run]\nunified_eval = maybe\n").find("true/false") != std::string::npos);
    CHECK(message_of("[tree]\ncv_min_leaf = 1,,2\n").find("empty list item") !=
          std::string::npos);
    CHECK(message_of("[bagged]\nb = 0\n").find("b must be >= 1") != std::string::npos);
    CHECK_THROWS_AS(harness::parse_config_file("/nonexistent/gridcast.cfg"), ConfigError);
}

TEST_CASE("config validation wraps sub-module and harness-level errors") {
    auto expect_bad = [](void (*mutate)(ExperimentConfig&)) {
        ExperimentConfig cfg;
        mutate(cfg);
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    };
    expect_bad([](ExperimentConfig& c) { c.source = "oracle"; });
    expect_bad([](ExperimentConfig& c) { c.source = "csv"; });  // csv_dir missing
    expect_bad([](ExperimentConfig& c) { c.methods = {"tree", "svm"}; });
    expect_bad([](ExperimentConfig& c) { c.methods = {"tree", "tree"}; });
    expect_bad([](ExperimentConfig& c) { c.train_frac = 1.0; });
    expect_bad([](ExperimentConfig& c) { c.cv_folds = 1; });
    expect_bad([](ExperimentConfig& c) { c.cv_min_leaf = {1, 0}; });
    expect_bad([](ExperimentConfig& c) { c.n_threads = -1; });
    expect_bad([](ExperimentConfig& c) { c.boost_grid_nu = {1.5}; });
    expect_bad([](ExperimentConfig& c) { c.boost_grid_msw = {0}; });
    expect_bad([](ExperimentConfig& c) { c.boost_grid = true; c.boost_grid_nu.clear(); });
    expect_bad([](ExperimentConfig& c) { c.synthetic.days = 0; });
    expect_bad([](ExperimentConfig& c) { c.synthetic.scarcity_knee = 1.0; });
    expect_bad([](ExperimentConfig& c) { c.synthetic.spike_gate = -0.5; });
    expect_bad([](ExperimentConfig& c) { c.features.w_future_hours = 48; });
    expect_bad([](ExperimentConfig& c) { c.arima_spec.ar_lags = {0}; });
    expect_bad([](ExperimentConfig& c) { c.tree.min_leaf = 0; });
    expect_bad([](ExperimentConfig& c) { c.boost.nu = 0.0; });
    expect_bad([](ExperimentConfig& c) { c.narx.w = 0; });

    ExperimentConfig empty_methods;
    empty_methods.methods.clear();
    CHECK_NOTHROW(empty_methods.validate());
}

TEST_CASE("provenance hash matches a recomputation from the echoed config") {
    ExperimentConfig cfg = small_config();
    cfg.methods = {"tree"};
    const Report report = harness::run(cfg);
    const ExperimentConfig echoed = harness::parse_config(report.config_text);
    CHECK(harness::config_hash(echoed) == report.config_hash);
    ExperimentConfig other = cfg;
    other.seed += 1;
    CHECK(harness::config_hash(other) != report.config_hash);
}

TEST_CASE("run executes every method and records honest comparability") {
    ExperimentConfig cfg = small_config();
    const Report report = harness::run(cfg);
    REQUIRE(report.methods.size() == 5);
    CHECK(report.all_ok());

    const ingest::SyntheticConfig data_cfg = cfg.synthetic;
    const MarketDataset ds = ingest::generate_synthetic(data_cfg);
    CHECK(report.n_steps == ds.n_steps());
    CHECK(report.span_start == ds.span_start().to_string());

    // dataset stats match a direct recomputation over valid steps
    {
        long double sum = 0.0L, sumsq = 0.0L;
        std::size_t n = 0;
        double mx = 0.0;
        const Stream& rt = ds.rt_price();
        for (std::size_t i = 0; i < rt.size(); ++i) {
            if (!rt.valid_at(i)) continue;
            sum += rt.value_at(i);
            sumsq += static_cast<long double>(rt.value_at(i)) * rt.value_at(i);
            mx = std::max(mx, rt.value_at(i));
            ++n;
        }
        REQUIRE(n > 1);
        const double mean = static_cast<double>(sum / static_cast<long double>(n));
        const double sd = std::sqrt(std::max(
            0.0, static_cast<double>((sumsq - sum * (sum / static_cast<long double>(n))) /
                                     static_cast<long double>(n - 1))));
        CHECK(report.n_valid_prices == n);
        CHECK(report.price_mean == doctest::Approx(mean).epsilon(1e-12));
        CHECK(report.price_sd == doctest::Approx(sd).epsilon(1e-9));
        CHECK(report.price_max == mx);
    }

    for (const auto& m : report.methods) {
        REQUIRE(m.ok);
        CHECK(m.eval.n > 0);
        CHECK(m.eval.per_point.size() == m.eval.n);
        CHECK(std::is_sorted(m.eval.per_point.begin(), m.eval.per_point.end(),
                             [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; }));
        for (const auto& p : m.eval.per_point) {
            CHECK(p.abs_error == std::abs(p.real - p.predicted));
        }
        CHECK_FALSE(json::parse(m.details_json).empty());
    }

    // the tree family shares its seeded split, so its test points coincide
    const auto& tree_pts = method_of(report, "tree").eval.per_point;
    const auto& bag_pts = method_of(report, "bagged").eval.per_point;
    const auto& boost_pts = method_of(report, "boosted").eval.per_point;
    REQUIRE(tree_pts.size() == bag_pts.size());
    REQUIRE(tree_pts.size() == boost_pts.size());
    for (std::size_t i = 0; i < tree_pts.size(); ++i) {
        CHECK(tree_pts[i].timestamp == bag_pts[i].timestamp);
        CHECK(tree_pts[i].timestamp == boost_pts[i].timestamp);
    }

    // but arima (rolling) and narx (temporal) do not -> caveat
    CHECK_FALSE(report.shared_test_points);
    CHECK_FALSE(report.caveat.empty());

    // persistence recomputed by hand for the tree method
    {
        const auto& m = method_of(report, "tree");
        const Stream& rt = ds.rt_price();
        std::vector<metrics::PredictionPair> pairs;
        for (const auto& p : m.eval.per_point) {
            const std::size_t i = rt.index_of(p.timestamp);
            if (i == 0 || !rt.valid_at(i - 1) || !rt.valid_at(i)) continue;
            pairs.push_back({rt.value_at(i), rt.value_at(i - 1)});
        }
        REQUIRE(m.persistence_n == pairs.size());
        CHECK(m.persistence_mae == doctest::Approx(metrics::mae(pairs)).epsilon(1e-12));
    }

    // arima details carry the full window bookkeeping
    {
        const auto& m = method_of(report, "arima");
        const json d = json::parse(m.details_json);
        const auto windows = arima::enumerate_windows(ds.n_steps(), cfg.rolling);
        CHECK(d.at("n_windows").get<std::size_t>() == windows.size());
        CHECK(d.at("windows").size() == windows.size());
    }
}

TEST_CASE("identical runs produce byte-identical reports") {
    const ExperimentConfig cfg = small_config();
    const Report a = harness::run(cfg);
    const Report b = harness::run(cfg);
    CHECK(a.to_json() == b.to_json());
}

TEST_CASE("parallel method execution matches the sequential report") {
    ExperimentConfig cfg = small_config();
    const Report seq = harness::run(cfg);
    cfg.parallel_methods = true;
    Report par = harness::run(cfg);
    // the echoed config text differs by the flag itself; the results must not
    par.config_text = seq.config_text;
    par.config_hash = seq.config_hash;
    CHECK(par.to_json() == seq.to_json());
}

TEST_CASE("master seed reruns change stochastic methods but never arima") {
    ExperimentConfig cfg = small_config();
    const Report a = harness::run(cfg);
    cfg.seed += 1;
    const Report b = harness::run(cfg);

    const auto& a_arima = method_of(a, "arima").eval.per_point;
    const auto& b_arima = method_of(b, "arima").eval.per_point;
    REQUIRE(a_arima.size() == b_arima.size());
    for (std::size_t i = 0; i < a_arima.size(); ++i) {
        CHECK(a_arima[i].timestamp == b_arima[i].timestamp);
        CHECK(a_arima[i].predicted == b_arima[i].predicted);
    }

    for (const auto* name : {"tree", "bagged", "boosted", "narx"}) {
        const auto& pa = method_of(a, name).eval.per_point;
        const auto& pb = method_of(b, name).eval.per_point;
        bool any_differ = pa.size() != pb.size();
        for (std::size_t i = 0; !any_differ && i < pa.size(); ++i) {
            any_differ = pa[i].predicted != pb[i].predicted ||
                         pa[i].timestamp != pb[i].timestamp;
        }
        CHECK(any_differ);
    }

    // same data either way: the data seed lives in [data], not [run]
    CHECK(a.price_mean == b.price_mean);
    CHECK(a.price_max == b.price_max);
}

TEST_CASE("a failing method is isolated and the rest proceed") {
    ExperimentConfig cfg = small_config();
    cfg.methods = {"arima", "tree"};
    cfg.rolling.train_days = 40;  // longer than the 20-day span
    const Report report = harness::run(cfg);
    const auto& a = method_of(report, "arima");
    const auto& t = method_of(report, "tree");
    CHECK_FALSE(a.ok);
    CHECK_FALSE(a.error.empty());
    CHECK(t.ok);
    CHECK(t.eval.n > 0);
    CHECK_FALSE(report.all_ok());
    // a lone successful method has nothing to disagree with
    CHECK(report.shared_test_points);
    CHECK(report.caveat.empty());

    const json j = json::parse(report.to_json());
    for (const auto& m : j.at("methods")) {
        if (m.at("method") == "arima") {
            CHECK_FALSE(m.at("ok").get<bool>());
            CHECK_FALSE(m.at("error").get<std::string>().empty());
        } else {
            CHECK(m.at("ok").get<bool>());
        }
    }
}

TEST_CASE("unified evaluation puts every method on rolling-origin windows") {
    ExperimentConfig cfg = small_config();
    cfg.methods = {"arima", "tree", "boosted", "narx"};
    cfg.unified_eval = true;
    cfg.narx.max_epochs = 2;
    const Report report = harness::run(cfg);
    REQUIRE(report.all_ok());
    const MarketDataset ds = ingest::generate_synthetic(cfg.synthetic);
    const auto windows = arima::enumerate_windows(ds.n_steps(), cfg.rolling);
    REQUIRE(!windows.empty());
    for (const auto& m : report.methods) {
        CHECK(m.protocol == "rolling-origin");
        CHECK(m.eval.n > 0);
        CHECK(std::is_sorted(m.eval.per_point.begin(), m.eval.per_point.end(),
                             [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; }));
        // every scored point falls inside some window's test block
        const Timestamp t0 = ds.span_start();
        for (const auto& p : m.eval.per_point) {
            const auto step = static_cast<std::size_t>(steps_between(t0, p.timestamp));
            const bool inside = std::any_of(windows.begin(), windows.end(), [&](const auto& w) {
                return step >= w.test_begin && step < w.test_end;
            });
            CHECK(inside);
        }
        if (m.method != "arima") {
            const json d = json::parse(m.details_json);
            CHECK(d.at("n_windows").get<std::size_t>() == windows.size());
            CHECK(d.at("n_windows_used").get<std::size_t>() > 0);
        }
    }
    // tree-family margins trim at most the matrix edges
    CHECK(method_of(report, "tree").eval.n <= method_of(report, "arima").eval.n);
}

TEST_CASE("plot bundle row counts follow the report") {
    ExperimentConfig cfg = small_config();
    cfg.cv_folds = 2;
    cfg.cv_min_leaf = {1, 8};
    cfg.boost_grid = false;
    const Report report = harness::run(cfg);
    REQUIRE(report.all_ok());

    TempDir tmp("bundle");
    harness::emit_plot_data(report, tmp.path.string());

    for (const auto& m : report.methods) {
        const std::size_t n = m.eval.n;
        CHECK(count_lines(tmp.path / ("forecast_" + m.method + ".csv")) == n + 1);
        CHECK(count_lines(tmp.path / ("error_vs_price_" + m.method + ".csv")) == n + 1);
        CHECK(count_lines(tmp.path / ("error_vs_price_" + m.method + "_trimmed.csv")) ==
              n - n / 10 + 1);
    }
    CHECK(count_lines(tmp.path / "oob_curve.csv") == cfg.bag_b + 1);
    CHECK(count_lines(tmp.path / "cv_minleaf.csv") == cfg.cv_min_leaf.size() + 1);
    CHECK(count_lines(tmp.path / "boost_train.csv") ==
          static_cast<std::size_t>(cfg.boost.m) + 1);
    const auto& narx_m = method_of(report, "narx");
    const json nd = json::parse(narx_m.details_json);
    CHECK(count_lines(tmp.path / "narx_trace.csv") == nd.at("n_epochs").get<std::size_t>() + 1);
    for (const auto* name : {"tree", "bagged", "boosted"}) {
        CHECK(count_lines(tmp.path / (std::string("importance_") + name + ".csv")) ==
              report.feature_names.size() + 1);
    }

    // the trimmed scatter drops the k largest absolute errors
    {
        const auto& pts = method_of(report, "tree").eval.per_point;
        std::vector<double> errs;
        for (const auto& p : pts) errs.push_back(p.abs_error);
        std::sort(errs.begin(), errs.end(), std::greater<>());
        const double worst_kept_bound = errs[pts.size() / 10];
        std::ifstream in(tmp.path / "error_vs_price_tree_trimmed.csv");
        std::string line;
        std::getline(in, line);  // header
        double max_seen = 0.0;
        while (std::getline(in, line)) {
            max_seen = std::max(max_seen, std::stod(line.substr(line.find(',') + 1)));
        }
        CHECK(max_seen <= worst_kept_bound + 1e-12);
    }
}

TEST_CASE("empty method list produces an empty bundle") {
    ExperimentConfig cfg = small_config();
    cfg.methods.clear();
    const Report report = harness::run(cfg);
    CHECK(report.methods.empty());
    CHECK(report.all_ok());

    TempDir tmp("empty");
    harness::write_outputs(report, tmp.path.string());
    std::size_t n_files = 0;
    for (const auto& entry : fs::directory_iterator(tmp.path)) {
        ++n_files;
        CHECK(entry.path().filename() == "report.json");
    }
    CHECK(n_files == 1);
}

TEST_CASE("a perfect predictor stub reports zero error everywhere") {
    Report report;
    report.feature_names = {"f0"};
    MethodResult stub;
    stub.method = "tree";
    stub.ok = true;
    stub.protocol = "random-70/30";
    std::vector<metrics::PointError> pts;
    for (int i = 0; i < 30; ++i) {
        const double v = 10.0 + i;
        pts.push_back({Timestamp::from_ymd(2024, 1, 1).plus_steps(i), v, v, 0.0});
    }
    stub.eval = metrics::evaluate(std::move(pts));
    report.methods.push_back(std::move(stub));

    CHECK(report.methods[0].eval.mae == 0.0);
    CHECK(report.methods[0].eval.rmse == 0.0);
    const json j = json::parse(report.to_json());
    CHECK(j.at("methods")[0].at("mae").get<double>() == 0.0);
    CHECK(j.at("methods")[0].at("rmse").get<double>() == 0.0);

    TempDir tmp("perfect");
    harness::emit_plot_data(report, tmp.path.string());
    CHECK(count_lines(tmp.path / "forecast_tree.csv") == 31);
}

TEST_CASE("report json carries provenance and per-method blocks") {
    ExperimentConfig cfg = small_config();
    cfg.methods = {"tree", "boosted"};
    const Report report = harness::run(cfg);
    const json j = json::parse(report.to_json());
    CHECK(j.at("tool") == "gridcast");
    CHECK(j.at("seed").get<std::uint64_t>() == cfg.seed);
    CHECK(j.at("config_hash").get<std::string>().size() == 16);
    CHECK(j.at("dataset").at("n_steps").get<std::size_t>() == report.n_steps);
    CHECK(j.at("config").get<std::string>() == report.config_text);
    REQUIRE(j.at("methods").size() == 2);
    for (const auto& m : j.at("methods")) {
        CHECK(m.at("ok").get<bool>());
        CHECK(m.at("mae").get<double>() > 0.0);
        CHECK(m.at("n").get<std::size_t>() > 0);
        CHECK(m.at("importance").size() == report.feature_names.size());
        double total = 0.0;
        for (const auto& [name, share] : m.at("importance").items()) {
            total += share.get<double>();
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
    // shared split -> identical test points -> no caveat
    CHECK(j.at("shared_test_points").get<bool>());
    CHECK(j.at("caveat").get<std::string>().empty());
}
