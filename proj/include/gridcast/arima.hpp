#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gridcast/metrics.hpp"
#include "gridcast/stream.hpp"
#include "gridcast/timestamp.hpp"

namespace gridcast::arima {

/// Subset ARMA lag structure on the d-times differenced series. Lags are in
/// 15-minute steps; the default picks up the last half hour and the same time
/// one day earlier.
struct SubsetArimaSpec {
    std::vector<int> ar_lags = {1, 2, 96};
    std::vector<int> ma_lags = {1, 2, 96};
    int d = 1;

    void validate() const;  // lags positive, sorted, distinct; d in {0, 1}
    int max_lag() const;
    std::size_t n_params() const { return ar_lags.size() + ma_lags.size(); }
};

struct FitReport {
    int iterations = 0;
    double objective = 0.0;  // final conditional sum of squared innovations
    bool converged = false;
    bool diverged = false;  // hit the iteration cap before the tolerance
    std::vector<std::string> warnings;
    // conditional-likelihood convention: pre-sample values and innovations 0
    std::string presample = "zero";
    std::string method = "css-gauss-newton";
};

struct ArimaModel {
    SubsetArimaSpec spec;
    std::vector<double> alpha;  // per ar_lag
    std::vector<double> theta;  // per ma_lag
    double sigma2 = 0.0;        // innovation variance, USD^2/MWh^2
    double mean = 0.0;          // mean of the differenced training series
    FitReport fit_report;

    std::string to_json() const;
};

struct RollingConfig {
    int train_days = 20;
    int test_days = 5;  // windows also advance by this much

    void validate() const;
    std::size_t train_steps() const { return static_cast<std::size_t>(train_days) * 96; }
    std::size_t test_steps() const { return static_cast<std::size_t>(test_days) * 96; }
};

/// d-th order forward difference; [x1, x2, x3] -> [x2-x1, x3-x2] at d=1.
std::vector<double> difference(std::span<const double> series, int d);

/// Inverse of difference(., 1) given the stored initial value.
std::vector<double> undifference(std::span<const double> diffed, double initial);

/// Conditional sum of squared innovations of the centered differenced series
/// `w` under parameters [alpha..., theta...]; optionally its analytic gradient
/// via the innovation recursions. Exposed for gradient verification.
double css_objective(std::span<const double> w, const SubsetArimaSpec& spec,
                     std::span<const double> params, std::vector<double>* grad = nullptr);

/// Estimate coefficients by conditional sum of squares (Levenberg-damped
/// Gauss-Newton, parameters initialized at 0, max 200 iterations, relative
/// tolerance 1e-8). The differenced series is mean-centered before fitting and
/// the mean is restored at forecast time. sigma2 = SSE / N. A weak ridge on
/// the coefficients (1e-2 of the zero-parameter SSE) pins the common-factor
/// directions that shared AR/MA lags leave unidentified; sigma2 and the
/// reported objective exclude it.
/// Throws std::invalid_argument on an invalid spec, non-finite values, or a
/// series shorter than 3 * max_lag + d.
ArimaModel fit(std::span<const double> series, const SubsetArimaSpec& spec);

/// Teacher-forced innovation filter on the original price scale: feed observed
/// prices as they arrive, ask for the one-step-ahead forecast in between.
/// Pre-sample state is zero, matching the fit convention.
class ArimaFilter {
public:
    /// Filters innovations through `history` (original scale, oldest first).
    /// Requires history.size() >= max_lag + d.
    ArimaFilter(const ArimaModel& model, std::span<const double> history);

    /// Point forecast for the next step.
    double forecast() const;

    /// Advance with the realized next price.
    void observe(double price);

    /// Advance past a masked step: the innovation is taken as its conditional
    /// expectation (zero) and the model's own forecast stands in for the
    /// unobserved level. Scoring must skip such steps; this only keeps the
    /// recursion defined.
    void observe_missing();

    std::size_t steps_seen() const { return w_.size(); }

private:
    double predict_centered() const;  // one-step forecast of the centered diff
    void push(double w_centered);

    SubsetArimaSpec spec_;
    std::vector<double> alpha_, theta_;
    double mean_ = 0.0;
    int d_ = 1;
    std::vector<double> w_;    // centered differenced history
    std::vector<double> eps_;  // filtered innovations
    double last_price_ = 0.0;  // undifferencing level
};

/// Convenience: one-step-ahead forecast after filtering through history.
double forecast_one(const ArimaModel& model, std::span<const double> history);

/// Half-open step-index ranges of one rolling-origin window.
struct WindowIndex {
    std::size_t train_begin = 0;
    std::size_t train_end = 0;  // == test_begin
    std::size_t test_begin = 0;
    std::size_t test_end = 0;
};

/// All full train+test windows in a span of n_steps, advancing by the test
/// width. Partial trailing test windows are not emitted.
std::vector<WindowIndex> enumerate_windows(std::size_t n_steps, const RollingConfig& cfg);

struct WindowTrace {
    std::size_t index = 0;
    Timestamp train_start, test_start, test_end;
    std::size_t n_scored = 0;
    double mae = 0.0;
    double rmse = 0.0;
    bool skipped = false;
    std::string skip_reason;
    ArimaModel model;
};

struct RollingResult {
    metrics::EvalResult overall;  // per_point kept, in time order
    std::vector<WindowTrace> windows;
};

/// Rolling-origin evaluation on rt_price: per window, fit on the training
/// block and score teacher-forced one-step forecasts across the test block.
/// Invalid test steps are never scored; training blocks with gaps fall back to
/// their longest valid run (windows whose run is too short are skipped and
/// logged). Windows fit in parallel; results merge in origin order.
RollingResult rolling_evaluate(const MarketDataset& ds, const SubsetArimaSpec& spec,
                               const RollingConfig& cfg, int n_threads = 0);

}  // namespace gridcast::arima
