#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gridcast/timestamp.hpp"

namespace gridcast::metrics {

/// (real, predicted) price pair in USD/MWh.
using PredictionPair = std::pair<double, double>;

struct PointError {
    Timestamp timestamp;
    double real = 0.0;
    double predicted = 0.0;
    double abs_error = 0.0;
};

struct EvalResult {
    double mae = 0.0;
    double rmse = 0.0;
    std::size_t n = 0;
    std::vector<PointError> per_point;  // optional; empty when not tracked
};

double abs_error(double real, double predicted);

/// |real - pred| / |real|; empty when real == 0 (excluded from aggregates).
std::optional<double> abs_pct_error(double real, double predicted);

/// Mean absolute error; throws std::invalid_argument on an empty set.
double mae(std::span<const PredictionPair> pairs);

/// Root mean squared error; throws std::invalid_argument on an empty set.
double rmse(std::span<const PredictionPair> pairs);

EvalResult evaluate(std::span<const PredictionPair> pairs);
EvalResult evaluate(std::vector<PointError> points);

}  // namespace gridcast::metrics
