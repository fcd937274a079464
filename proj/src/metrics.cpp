#include "gridcast/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace gridcast::metrics {

namespace {

// Neumaier compensated sum; two-year 15-minute series mix O(1) and O(10^3)
// magnitudes, so plain accumulation loses digits.
class CompensatedSum {
public:
    void add(double x) {
        double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace

double abs_error(double real, double predicted) { return std::abs(real - predicted); }

std::optional<double> abs_pct_error(double real, double predicted) {
    if (real == 0.0) return std::nullopt;
    return std::abs(real - predicted) / std::abs(real);
}

double mae(std::span<const PredictionPair> pairs) {
    if (pairs.empty()) throw std::invalid_argument("mae: empty pair set");
    CompensatedSum s;
    for (const auto& [real, pred] : pairs) s.add(abs_error(real, pred));
    return s.value() / static_cast<double>(pairs.size());
}

double rmse(std::span<const PredictionPair> pairs) {
    if (pairs.empty()) throw std::invalid_argument("rmse: empty pair set");
    CompensatedSum s;
    for (const auto& [real, pred] : pairs) {
        double e = real - pred;
        s.add(e * e);
    }
    return std::sqrt(s.value() / static_cast<double>(pairs.size()));
}

EvalResult evaluate(std::span<const PredictionPair> pairs) {
    EvalResult r;
    r.mae = mae(pairs);
    r.rmse = rmse(pairs);
    r.n = pairs.size();
    return r;
}

EvalResult evaluate(std::vector<PointError> points) {
    std::vector<PredictionPair> pairs;
    pairs.reserve(points.size());
    for (const auto& p : points) pairs.emplace_back(p.real, p.predicted);
    EvalResult r = evaluate(pairs);
    r.per_point = std::move(points);
    return r;
}

}  // namespace gridcast::metrics
