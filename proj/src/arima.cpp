#include "gridcast/arima.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include <Eigen/Dense>
#include <json.hpp>

namespace gridcast::arima {

namespace {

constexpr int kMaxIterations = 200;
constexpr double kRelTolerance = 1e-8;

// Innovation recursion over the centered differenced series, with optional
// per-parameter derivative recursions (rows of the Jacobian). Pre-sample
// values, innovations and derivatives are all zero.
double filter_innovations(std::span<const double> w, const SubsetArimaSpec& spec,
                          std::span<const double> params, std::vector<double>& eps,
                          std::vector<std::vector<double>>* deps) {
    const auto& ar = spec.ar_lags;
    const auto& ma = spec.ma_lags;
    const std::size_t na = ar.size(), nm = ma.size(), n = w.size();
    const double* a = params.data();
    const double* th = params.data() + na;

    eps.assign(n, 0.0);
    if (deps) deps->assign(na + nm, std::vector<double>(n, 0.0));

    double sse = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        double pred = 0.0;
        for (std::size_t i = 0; i < na; ++i) {
            if (t >= static_cast<std::size_t>(ar[i])) pred += a[i] * w[t - ar[i]];
        }
        for (std::size_t j = 0; j < nm; ++j) {
            if (t >= static_cast<std::size_t>(ma[j])) pred += th[j] * eps[t - ma[j]];
        }
        eps[t] = w[t] - pred;
        sse += eps[t] * eps[t];
        if (!deps) continue;
        for (std::size_t k = 0; k < na; ++k) {
            double g = t >= static_cast<std::size_t>(ar[k]) ? -w[t - ar[k]] : 0.0;
            for (std::size_t j = 0; j < nm; ++j) {
                if (t >= static_cast<std::size_t>(ma[j])) g -= th[j] * (*deps)[k][t - ma[j]];
            }
            (*deps)[k][t] = g;
        }
        for (std::size_t l = 0; l < nm; ++l) {
            double g = t >= static_cast<std::size_t>(ma[l]) ? -eps[t - ma[l]] : 0.0;
            for (std::size_t j = 0; j < nm; ++j) {
                if (t >= static_cast<std::size_t>(ma[j])) g -= th[j] * (*deps)[na + l][t - ma[j]];
            }
            (*deps)[na + l][t] = g;
        }
    }
    return sse;
}

std::size_t min_fit_length(const SubsetArimaSpec& spec) {
    return std::max<std::size_t>(3 * static_cast<std::size_t>(spec.max_lag()) + spec.d,
                                 static_cast<std::size_t>(spec.d) + 2);
}

// Longest contiguous run of valid steps within [begin, end) of the stream.
std::pair<std::size_t, std::size_t> longest_valid_run(const Stream& s, std::size_t begin,
                                                      std::size_t end) {
    std::size_t best_b = begin, best_e = begin, run_b = begin;
    for (std::size_t i = begin; i <= end; ++i) {
        if (i == end || !s.valid_at(i)) {
            if (i - run_b > best_e - best_b) {
                best_b = run_b;
                best_e = i;
            }
            run_b = i + 1;
        }
    }
    return {best_b, best_e};
}

}  // namespace

void SubsetArimaSpec::validate() const {
    if (d != 0 && d != 1) throw std::invalid_argument("SubsetArimaSpec: d must be 0 or 1");
    for (const auto* lags : {&ar_lags, &ma_lags}) {
        for (std::size_t i = 0; i < lags->size(); ++i) {
            if ((*lags)[i] < 1) throw std::invalid_argument("SubsetArimaSpec: lags must be >= 1");
            if (i > 0 && (*lags)[i] <= (*lags)[i - 1]) {
                throw std::invalid_argument("SubsetArimaSpec: lags must be sorted and distinct");
            }
        }
    }
}

int SubsetArimaSpec::max_lag() const {
    int m = 0;
    if (!ar_lags.empty()) m = std::max(m, ar_lags.back());
    if (!ma_lags.empty()) m = std::max(m, ma_lags.back());
    return m;
}

void RollingConfig::validate() const {
    if (train_days < 1 || test_days < 1) {
        throw std::invalid_argument("RollingConfig: windows must be at least one day");
    }
}

std::vector<double> difference(std::span<const double> series, int d) {
    if (d < 0) throw std::invalid_argument("difference: d must be >= 0");
    if (series.size() <= static_cast<std::size_t>(d)) {
        throw std::invalid_argument("difference: series shorter than d");
    }
    std::vector<double> out(series.begin(), series.end());
    for (int k = 0; k < d; ++k) {
        for (std::size_t i = 0; i + 1 < out.size(); ++i) out[i] = out[i + 1] - out[i];
        out.pop_back();
    }
    return out;
}

std::vector<double> undifference(std::span<const double> diffed, double initial) {
    std::vector<double> out;
    out.reserve(diffed.size() + 1);
    out.push_back(initial);
    for (double dv : diffed) out.push_back(out.back() + dv);
    return out;
}

double css_objective(std::span<const double> w, const SubsetArimaSpec& spec,
                     std::span<const double> params, std::vector<double>* grad) {
    spec.validate();
    if (params.size() != spec.n_params()) {
        throw std::invalid_argument("css_objective: parameter count mismatch");
    }
    std::vector<double> eps;
    if (!grad) return filter_innovations(w, spec, params, eps, nullptr);
    std::vector<std::vector<double>> deps;
    double sse = filter_innovations(w, spec, params, eps, &deps);
    grad->assign(params.size(), 0.0);
    for (std::size_t p = 0; p < params.size(); ++p) {
        double g = 0.0;
        for (std::size_t t = 0; t < w.size(); ++t) g += 2.0 * eps[t] * deps[p][t];
        (*grad)[p] = g;
    }
    return sse;
}

ArimaModel fit(std::span<const double> series, const SubsetArimaSpec& spec) {
    spec.validate();
    for (double v : series) {
        if (!std::isfinite(v)) throw std::invalid_argument("fit: series contains non-finite values");
    }
    if (series.size() < min_fit_length(spec)) {
        throw std::invalid_argument("fit: series length " + std::to_string(series.size()) +
                                    " below required " + std::to_string(min_fit_length(spec)));
    }

    std::vector<double> w = difference(series, spec.d);
    double mean = 0.0;
    for (double v : w) mean += v;
    mean /= static_cast<double>(w.size());
    for (double& v : w) v -= mean;

    const std::size_t np = spec.n_params();
    std::vector<double> params(np, 0.0);
    std::vector<double> eps;
    std::vector<std::vector<double>> deps;

    ArimaModel model;
    model.spec = spec;
    model.mean = mean;

    double sse = filter_innovations(w, spec, params, eps, &deps);
    // Subset ARMA with shared AR/MA lags has exactly flat common-factor
    // directions (alpha_k = -theta_k reproduces the input unchanged), so the
    // bare CSS minimizer can drift arbitrarily far along them. A weak ridge on
    // the coefficients pins those directions at zero while perturbing
    // identifiable coefficients at the percent level. sigma2 and the
    // reported objective stay penalty-free.
    const double mu = 1e-2 * sse;
    auto penalty = [&](std::span<const double> p) {
        double s = 0.0;
        for (double v : p) s += v * v;
        return mu * s;
    };
    double obj = sse + penalty(params);
    double lambda = 1e-3;
    int iter = 0;
    bool converged = np == 0;
    for (; iter < kMaxIterations && !converged; ++iter) {
        Eigen::MatrixXd jtj = Eigen::MatrixXd::Zero(np, np);
        Eigen::VectorXd jte = Eigen::VectorXd::Zero(np);
        for (std::size_t p = 0; p < np; ++p) {
            for (std::size_t q = p; q < np; ++q) {
                double s = 0.0;
                for (std::size_t t = 0; t < w.size(); ++t) s += deps[p][t] * deps[q][t];
                jtj(p, q) = jtj(q, p) = s;
            }
            double s = 0.0;
            for (std::size_t t = 0; t < w.size(); ++t) s += deps[p][t] * eps[t];
            jtj(p, p) += mu;
            jte(p) = s + mu * params[p];
        }

        bool accepted = false;
        std::vector<double> cand(np);
        double obj_new = obj;
        for (int attempt = 0; attempt < 12; ++attempt) {
            Eigen::MatrixXd damped = jtj;
            damped.diagonal().array() += lambda;
            Eigen::VectorXd delta = damped.ldlt().solve(-jte);
            for (std::size_t p = 0; p < np; ++p) cand[p] = params[p] + delta(p);
            std::vector<double> eps_try;
            obj_new = filter_innovations(w, spec, cand, eps_try, nullptr) + penalty(cand);
            if (std::isfinite(obj_new) && obj_new <= obj) {
                accepted = true;
                lambda = std::max(lambda / 3.0, 1e-12);
                break;
            }
            lambda *= 8.0;
        }
        if (!accepted) {
            // no descent direction left: gradient is numerically zero
            converged = true;
            break;
        }
        params = cand;
        const double improvement = obj - obj_new;
        sse = filter_innovations(w, spec, params, eps, &deps);
        obj = sse + penalty(params);
        if (improvement <= kRelTolerance * std::max(obj, 1e-30)) {
            converged = true;
        }
    }

    model.alpha.assign(params.begin(), params.begin() + spec.ar_lags.size());
    model.theta.assign(params.begin() + spec.ar_lags.size(), params.end());
    model.sigma2 = sse / static_cast<double>(w.size());
    model.fit_report.iterations = iter;
    model.fit_report.objective = sse;
    model.fit_report.converged = converged;
    model.fit_report.diverged = !converged;

    double asum = 0.0, tsum = 0.0;
    for (double v : model.alpha) asum += std::abs(v);
    for (double v : model.theta) tsum += std::abs(v);
    if (asum >= 1.0 / 1.05) {
        model.fit_report.warnings.push_back(
            "sum |alpha| = " + std::to_string(asum) +
            " approaches the unit region; stationarity not guaranteed");
    }
    if (tsum >= 1.0 / 1.05) {
        model.fit_report.warnings.push_back(
            "sum |theta| = " + std::to_string(tsum) +
            " approaches the unit region; invertibility not guaranteed");
    }
    return model;
}

std::string ArimaModel::to_json() const {
    nlohmann::ordered_json j;
    j["spec"] = {{"ar_lags", spec.ar_lags}, {"ma_lags", spec.ma_lags}, {"d", spec.d}};
    j["alpha"] = alpha;
    j["theta"] = theta;
    j["sigma2"] = sigma2;
    j["mean"] = mean;
    j["fit_report"] = {{"iterations", fit_report.iterations},
                       {"objective", fit_report.objective},
                       {"converged", fit_report.converged},
                       {"diverged", fit_report.diverged},
                       {"presample", fit_report.presample},
                       {"method", fit_report.method},
                       {"warnings", fit_report.warnings}};
    return j.dump(2);
}

ArimaFilter::ArimaFilter(const ArimaModel& model, std::span<const double> history)
    : spec_(model.spec),
      alpha_(model.alpha),
      theta_(model.theta),
      mean_(model.mean),
      d_(model.spec.d) {
    spec_.validate();
    if (alpha_.size() != spec_.ar_lags.size() || theta_.size() != spec_.ma_lags.size()) {
        throw std::invalid_argument("ArimaFilter: coefficient counts do not match the spec");
    }
    const std::size_t need = static_cast<std::size_t>(spec_.max_lag()) + d_;
    if (history.size() < std::max<std::size_t>(need, d_)) {
        throw std::invalid_argument("ArimaFilter: history shorter than max lag + d");
    }
    w_.reserve(history.size());
    eps_.reserve(history.size());
    std::size_t i = 0;
    if (d_ == 1) last_price_ = history[i++];
    for (; i < history.size(); ++i) observe(history[i]);
}

double ArimaFilter::predict_centered() const {
    const std::size_t t = w_.size();
    double pred = 0.0;
    for (std::size_t i = 0; i < alpha_.size(); ++i) {
        const auto lag = static_cast<std::size_t>(spec_.ar_lags[i]);
        if (t >= lag) pred += alpha_[i] * w_[t - lag];
    }
    for (std::size_t j = 0; j < theta_.size(); ++j) {
        const auto lag = static_cast<std::size_t>(spec_.ma_lags[j]);
        if (t >= lag) pred += theta_[j] * eps_[t - lag];
    }
    return pred;
}

void ArimaFilter::push(double w_centered) {
    const double pred = predict_centered();
    w_.push_back(w_centered);
    eps_.push_back(w_centered - pred);
}

double ArimaFilter::forecast() const {
    const double pred = predict_centered() + mean_;
    return d_ == 1 ? last_price_ + pred : pred;
}

void ArimaFilter::observe(double price) {
    if (d_ == 1) {
        push(price - last_price_ - mean_);
    } else {
        push(price - mean_);
    }
    last_price_ = price;
}

void ArimaFilter::observe_missing() {
    const double pred = predict_centered();
    w_.push_back(pred);
    eps_.push_back(0.0);
    if (d_ == 1) last_price_ += pred + mean_;
}

double forecast_one(const ArimaModel& model, std::span<const double> history) {
    return ArimaFilter(model, history).forecast();
}

std::vector<WindowIndex> enumerate_windows(std::size_t n_steps, const RollingConfig& cfg) {
    cfg.validate();
    const std::size_t tr = cfg.train_steps(), te = cfg.test_steps();
    std::vector<WindowIndex> out;
    for (std::size_t begin = 0; begin + tr + te <= n_steps; begin += te) {
        out.push_back({begin, begin + tr, begin + tr, begin + tr + te});
    }
    return out;
}

RollingResult rolling_evaluate(const MarketDataset& ds, const SubsetArimaSpec& spec,
                               const RollingConfig& cfg, int n_threads) {
    spec.validate();
    cfg.validate();
    const Stream& price = ds.rt_price();
    const std::vector<WindowIndex> windows = enumerate_windows(ds.n_steps(), cfg);
    if (windows.empty()) {
        throw std::invalid_argument("rolling_evaluate: span shorter than train + test windows");
    }

    struct WindowOut {
        WindowTrace trace;
        std::vector<metrics::PointError> points;
    };
    std::vector<WindowOut> outs(windows.size());

    auto run_window = [&](std::size_t wi) {
        const WindowIndex& win = windows[wi];
        WindowOut& out = outs[wi];
        out.trace.index = wi;
        out.trace.train_start = price.timestamp_at(win.train_begin);
        out.trace.test_start = price.timestamp_at(win.test_begin);
        out.trace.test_end = price.timestamp_at(win.test_end - 1);

        auto [run_b, run_e] = longest_valid_run(price, win.train_begin, win.train_end);
        if (run_e - run_b < min_fit_length(spec)) {
            out.trace.skipped = true;
            out.trace.skip_reason = "longest valid training run has " +
                                    std::to_string(run_e - run_b) + " steps, need " +
                                    std::to_string(min_fit_length(spec));
            return;
        }
        std::span<const double> train(price.values().data() + run_b, run_e - run_b);
        ArimaModel model = fit(train, spec);

        ArimaFilter filter(model, train);
        for (std::size_t i = run_e; i < win.train_end; ++i) {
            if (price.valid_at(i)) {
                filter.observe(price.value_at(i));
            } else {
                filter.observe_missing();
            }
        }
        for (std::size_t i = win.test_begin; i < win.test_end; ++i) {
            const double pred = filter.forecast();
            if (price.valid_at(i)) {
                const double real = price.value_at(i);
                out.points.push_back(
                    {price.timestamp_at(i), real, pred, metrics::abs_error(real, pred)});
                filter.observe(real);
            } else {
                filter.observe_missing();
            }
        }
        out.trace.model = std::move(model);
        out.trace.n_scored = out.points.size();
        if (!out.points.empty()) {
            std::vector<metrics::PredictionPair> pairs;
            pairs.reserve(out.points.size());
            for (const auto& p : out.points) pairs.emplace_back(p.real, p.predicted);
            out.trace.mae = metrics::mae(pairs);
            out.trace.rmse = metrics::rmse(pairs);
        } else if (!out.trace.skipped) {
            out.trace.skipped = true;
            out.trace.skip_reason = "no valid test steps";
        }
    };

    std::size_t workers = n_threads > 0 ? static_cast<std::size_t>(n_threads)
                                        : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, windows.size());
    if (workers <= 1) {
        for (std::size_t wi = 0; wi < windows.size(); ++wi) run_window(wi);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t k = 0; k < workers; ++k) {
            pool.emplace_back([&] {
                for (std::size_t wi = next.fetch_add(1); wi < windows.size();
                     wi = next.fetch_add(1)) {
                    run_window(wi);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    RollingResult result;
    std::vector<metrics::PointError> all_points;
    for (auto& out : outs) {
        all_points.insert(all_points.end(), out.points.begin(), out.points.end());
        result.windows.push_back(std::move(out.trace));
    }
    if (all_points.empty()) {
        throw std::runtime_error("rolling_evaluate: no scorable test steps in any window");
    }
    result.overall = metrics::evaluate(std::move(all_points));
    return result;
}

}  // namespace gridcast::arima
