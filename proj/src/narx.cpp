#include "gridcast/narx.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>
#include <json.hpp>

#include "gridcast/rng.hpp"

namespace gridcast::narx {

namespace {

constexpr std::size_t kExoPerStep = 9;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Eigen::Map;
using Eigen::VectorXd;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Scaled-space forward pass; fills the per-layer activations (acts[0] is the
/// scaled input) for backpropagation.
double forward_scaled(const NarxNetwork& net, const VectorXd& x, std::vector<VectorXd>& acts) {
    const std::size_t n_layers = net.weights.size();
    acts.resize(n_layers + 1);
    acts[0] = x;
    for (std::size_t l = 0; l + 1 < n_layers; ++l) {
        const auto& prev = acts[l];
        Map<const RowMat> w(net.weights[l].data(), (Eigen::Index)net.biases[l].size(),
                            prev.size());
        Map<const VectorXd> b(net.biases[l].data(), (Eigen::Index)net.biases[l].size());
        acts[l + 1] = (w * prev + b).unaryExpr([](double z) { return sigmoid(z); });
    }
    const auto& last = acts[n_layers - 1];
    Map<const RowMat> w(net.weights.back().data(), 1, last.size());
    const double out = (w * last)(0) + net.biases.back()[0];
    acts[n_layers] = VectorXd::Constant(1, out);
    return out;
}

struct ScaledSet {
    std::vector<VectorXd> inputs;
    std::vector<double> targets;  // scaled

    std::size_t size() const { return targets.size(); }
};

ScaledSet scale_batch(const NarxNetwork& net, std::span<const Example> batch) {
    ScaledSet s;
    s.inputs.reserve(batch.size());
    s.targets.reserve(batch.size());
    for (const auto& ex : batch) {
        auto scaled = net.scaling.apply(ex.input);
        s.inputs.emplace_back(Map<const VectorXd>(scaled.data(), (Eigen::Index)scaled.size()));
        s.targets.push_back((ex.target - net.scaling.y_mean) / net.scaling.y_sd);
    }
    return s;
}

double loss_scaled(const NarxNetwork& net, const ScaledSet& set, std::span<const std::uint32_t> idx,
                   Loss kind) {
    if (idx.empty()) throw std::invalid_argument("narx::loss: empty batch");
    std::vector<VectorXd> acts;
    long double acc = 0.0L;
    for (auto i : idx) {
        const double e = forward_scaled(net, set.inputs[i], acts) - set.targets[i];
        acc += kind == Loss::kMae ? std::abs((long double)e) : (long double)e * e;
    }
    return (double)(acc / (long double)idx.size());
}

Gradient zero_gradient(const NarxNetwork& net) {
    Gradient g;
    g.weights.reserve(net.weights.size());
    g.biases.reserve(net.biases.size());
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        g.weights.emplace_back(net.weights[l].size(), 0.0);
        g.biases.emplace_back(net.biases[l].size(), 0.0);
    }
    return g;
}

void gradient_scaled(const NarxNetwork& net, const ScaledSet& set,
                     std::span<const std::uint32_t> idx, Loss kind, Gradient& g) {
    if (idx.empty()) throw std::invalid_argument("narx::gradient: empty batch");
    const std::size_t n_layers = net.weights.size();
    const double inv_n = 1.0 / (double)idx.size();
    std::vector<VectorXd> acts;
    std::vector<VectorXd> deltas(n_layers);
    for (auto i : idx) {
        const double e = forward_scaled(net, set.inputs[i], acts) - set.targets[i];
        double dout;  // d(loss)/d(output), batch-mean convention
        if (kind == Loss::kMae) {
            dout = e > 0.0 ? inv_n : (e < 0.0 ? -inv_n : 0.0);
        } else {
            dout = 2.0 * e * inv_n;
        }
        deltas[n_layers - 1] = VectorXd::Constant(1, dout);
        for (std::size_t l = n_layers - 1; l-- > 0;) {
            Map<const RowMat> w_up(net.weights[l + 1].data(),
                                   (Eigen::Index)net.biases[l + 1].size(),
                                   (Eigen::Index)net.biases[l].size());
            const auto& a = acts[l + 1];  // sigmoid activations of layer l
            deltas[l] = (w_up.transpose() * deltas[l + 1]).cwiseProduct(
                a.cwiseProduct(VectorXd::Ones(a.size()) - a));
        }
        for (std::size_t l = 0; l < n_layers; ++l) {
            Map<RowMat> gw(g.weights[l].data(), (Eigen::Index)net.biases[l].size(),
                           acts[l].size());
            Map<VectorXd> gb(g.biases[l].data(), (Eigen::Index)net.biases[l].size());
            gw.noalias() += deltas[l] * acts[l].transpose();
            gb += deltas[l];
        }
    }
}

}  // namespace

void NarxConfig::validate() const {
    if (w < 1 || d < 1) throw std::invalid_argument("NarxConfig: w and d must be >= 1");
    if (hidden_layers < 1 || hidden_layers > 3) {
        throw std::invalid_argument("NarxConfig: hidden_layers must be 1..3");
    }
    if (hidden_units < 1) throw std::invalid_argument("NarxConfig: hidden_units must be >= 1");
    if (patience < 1) throw std::invalid_argument("NarxConfig: patience must be >= 1");
    if (max_epochs < 1) throw std::invalid_argument("NarxConfig: max_epochs must be >= 1");
    if (!(learning_rate > 0.0)) {
        throw std::invalid_argument("NarxConfig: learning_rate must be positive");
    }
    if (!(momentum >= 0.0) || momentum >= 1.0) {
        throw std::invalid_argument("NarxConfig: momentum must be in [0, 1)");
    }
    if (batch_size < 1) throw std::invalid_argument("NarxConfig: batch_size must be >= 1");
    if (lr_plateau_epochs < 0) {
        throw std::invalid_argument("NarxConfig: lr_plateau_epochs must be >= 0");
    }
}

std::size_t NarxConfig::input_dim() const {
    return kExoPerStep * (std::size_t)w + 2 * (std::size_t)d;
}

const std::vector<std::string>& exo_feature_names() {
    static const std::vector<std::string> names = {
        "cal_year",  "cal_month",    "cal_day_of_year",  "cal_day_of_week", "cal_hour",
        "cal_quarter", "da_price_h0", "demand_forecast_h0", "wind_h-1"};
    return names;
}

std::vector<double> Scaling::apply(std::span<const double> raw) const {
    if (raw.size() != mean.size()) {
        throw std::invalid_argument("Scaling: input length does not match the layout");
    }
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - mean[i]) / sd[i];
    return out;
}

std::size_t NarxNetwork::n_parameters() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
    if (patience < 1) throw std::invalid_argument("EarlyStopper: patience must be >= 1");
}

bool EarlyStopper::update(double val_loss) {
    if (n_seen_ == 0 || val_loss < best_loss_) {
        best_loss_ = val_loss;
        best_ = n_seen_;
    }
    streak_ = (n_seen_ > 0 && val_loss > prev_) ? streak_ + 1 : 0;
    prev_ = val_loss;
    ++n_seen_;
    return streak_ >= patience_;
}

Timestamp first_usable(const MarketDataset& ds, const NarxConfig& cfg) {
    cfg.validate();
    for (Timestamp t = ds.span_start();; t = t.plus_steps(1)) {
        if (t > ds.span_end()) throw std::out_of_range("narx: no step with full margins");
        try {
            (void)assemble_input(ds, t, cfg);
            return t;
        } catch (const std::out_of_range&) {
        }
    }
}

Timestamp last_usable(const MarketDataset& ds, const NarxConfig& cfg) {
    cfg.validate();
    for (Timestamp t = ds.span_end();; t = t.plus_steps(-1)) {
        if (t < ds.span_start()) throw std::out_of_range("narx: no step with full margins");
        try {
            (void)assemble_input(ds, t, cfg);
            return t;
        } catch (const std::out_of_range&) {
        }
    }
}

std::optional<std::vector<double>> assemble_input(const MarketDataset& ds, Timestamp t,
                                                  const NarxConfig& cfg) {
    cfg.validate();
    std::vector<double> out;
    out.reserve(cfg.input_dim());
    bool all_valid = true;
    auto push = [&](SamplePoint p) {
        all_valid = all_valid && p.valid;
        out.push_back(p.value);
    };

    for (int k = cfg.w - 1; k >= 0; --k) {
        const Timestamp s = t.plus_steps(-k);
        if (s < ds.span_start()) throw std::out_of_range("narx: exogenous window before span");
        out.push_back(s.year());
        out.push_back(s.month());
        out.push_back(s.day_of_year());
        out.push_back(s.day_of_week());
        out.push_back(s.hour());
        out.push_back(s.quarter_of_hour());
        push(hourly_at(ds.da_price(), s));
        push(hourly_at(ds.demand_forecast(), s));
        push(hourly_at(ds.wind(), s.plus_hours(-1)));
    }
    for (int k = cfg.d; k >= 1; --k) {
        const Timestamp s = t.plus_steps(-k);
        push(ds.rt_price().at(ds.rt_price().index_of(s)));
    }
    for (int k = cfg.d; k >= 1; --k) {
        const Timestamp s = t.plus_steps(-k);
        push(ds.rt_demand().at(ds.rt_demand().index_of(s)));
    }
    if (!all_valid) return std::nullopt;
    return out;
}

std::vector<Example> collect_examples(const MarketDataset& ds, const NarxConfig& cfg,
                                      Timestamp from, Timestamp to) {
    std::vector<Example> out;
    const auto& price = ds.rt_price();
    for (Timestamp t = from; t <= to; t = t.plus_steps(1)) {
        auto input = assemble_input(ds, t, cfg);
        if (!input) continue;
        const auto target = price.at(price.index_of(t));
        if (!target.valid) continue;
        out.push_back(Example{std::move(*input), target.value, t});
    }
    return out;
}

double forward(const NarxNetwork& net, std::span<const double> raw_input) {
    if (raw_input.size() != net.input_dim()) {
        throw std::invalid_argument("narx::forward: input length does not match the layout");
    }
    auto scaled = net.scaling.apply(raw_input);
    std::vector<VectorXd> acts;
    const double out =
        forward_scaled(net, Map<const VectorXd>(scaled.data(), (Eigen::Index)scaled.size()), acts);
    return net.scaling.y_mean + net.scaling.y_sd * out;
}

double loss(const NarxNetwork& net, std::span<const Example> batch, Loss kind) {
    auto set = scale_batch(net, batch);
    std::vector<std::uint32_t> idx(set.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = (std::uint32_t)i;
    return loss_scaled(net, set, idx, kind);
}

Gradient gradient(const NarxNetwork& net, std::span<const Example> batch, Loss kind) {
    auto set = scale_batch(net, batch);
    std::vector<std::uint32_t> idx(set.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = (std::uint32_t)i;
    Gradient g = zero_gradient(net);
    gradient_scaled(net, set, idx, kind, g);
    return g;
}

TrainResult train(const MarketDataset& ds, const NarxConfig& cfg) {
    cfg.validate();
    const auto examples =
        collect_examples(ds, cfg, first_usable(ds, cfg), last_usable(ds, cfg));
    const std::size_t n = examples.size();
    const std::size_t n_train = (std::size_t)((double)n * 0.70);
    const std::size_t n_val = (std::size_t)((double)n * 0.15);
    const std::size_t n_test = n - n_train - n_val;
    if (n_train < 1 || n_val < 1 || n_test < 1) {
        throw std::runtime_error("narx::train: not enough usable examples to split 70/15/15");
    }

    TrainResult result;
    result.n_train = n_train;
    result.n_val = n_val;
    result.n_test = n_test;
    result.test_begin = examples[n_train + n_val].when;
    result.test_end = examples.back().when;

    NarxNetwork& net = result.net;
    net.config = cfg;

    // scaling from the training block only
    const std::size_t dim = cfg.input_dim();
    net.scaling.mean.assign(dim, 0.0);
    net.scaling.sd.assign(dim, 0.0);
    for (std::size_t i = 0; i < n_train; ++i) {
        for (std::size_t c = 0; c < dim; ++c) net.scaling.mean[c] += examples[i].input[c];
    }
    for (double& m : net.scaling.mean) m /= (double)n_train;
    long double y_acc = 0.0L, y_sq = 0.0L;
    for (std::size_t i = 0; i < n_train; ++i) {
        for (std::size_t c = 0; c < dim; ++c) {
            const double d = examples[i].input[c] - net.scaling.mean[c];
            net.scaling.sd[c] += d * d;
        }
        y_acc += examples[i].target;
    }
    net.scaling.y_mean = (double)(y_acc / (long double)n_train);
    for (std::size_t i = 0; i < n_train; ++i) {
        const long double d = examples[i].target - net.scaling.y_mean;
        y_sq += d * d;
    }
    for (double& s : net.scaling.sd) s = std::max(std::sqrt(s / (double)n_train), 1e-8);
    net.scaling.y_sd = std::max((double)std::sqrt(y_sq / (long double)n_train), 1e-8);

    // fan-in scaled symmetric uniform init
    Rng master(cfg.seed);
    std::vector<std::size_t> widths;
    widths.push_back(dim);
    for (int l = 0; l < cfg.hidden_layers; ++l) widths.push_back((std::size_t)cfg.hidden_units);
    widths.push_back(1);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
        const double scale = 1.0 / std::sqrt((double)fan_in);
        std::vector<double> w(fan_out * fan_in);
        for (double& v : w) v = (2.0 * master.uniform() - 1.0) * scale;
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(fan_out, 0.0);
    }

    auto set = scale_batch(net, examples);
    std::vector<std::uint32_t> train_idx(n_train), val_idx(n_val);
    for (std::size_t i = 0; i < n_train; ++i) train_idx[i] = (std::uint32_t)i;
    for (std::size_t i = 0; i < n_val; ++i) val_idx[i] = (std::uint32_t)(n_train + i);

    Gradient grad = zero_gradient(net);
    Gradient velocity = zero_gradient(net);
    auto best_weights = net.weights;
    auto best_biases = net.biases;
    EarlyStopper stopper(cfg.patience);
    TrainTrace& trace = result.trace;
    double lr = cfg.learning_rate;
    int plateau = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Rng shuffle_rng = master.sub((std::uint64_t)epoch + 1);
        std::vector<std::uint32_t> order = train_idx;
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.uniform_below(i)]);
        }
        for (std::size_t begin = 0; begin < order.size(); begin += (std::size_t)cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + (std::size_t)cfg.batch_size);
            for (auto& layer : grad.weights) std::fill(layer.begin(), layer.end(), 0.0);
            for (auto& layer : grad.biases) std::fill(layer.begin(), layer.end(), 0.0);
            gradient_scaled(net, set, std::span(order).subspan(begin, end - begin), cfg.loss,
                            grad);
            for (std::size_t l = 0; l < net.weights.size(); ++l) {
                for (std::size_t i = 0; i < net.weights[l].size(); ++i) {
                    velocity.weights[l][i] =
                        cfg.momentum * velocity.weights[l][i] - lr * grad.weights[l][i];
                    net.weights[l][i] += velocity.weights[l][i];
                }
                for (std::size_t i = 0; i < net.biases[l].size(); ++i) {
                    velocity.biases[l][i] =
                        cfg.momentum * velocity.biases[l][i] - lr * grad.biases[l][i];
                    net.biases[l][i] += velocity.biases[l][i];
                }
            }
        }

        const double tl = loss_scaled(net, set, train_idx, cfg.loss);
        const double vl = loss_scaled(net, set, val_idx, cfg.loss);
        trace.train_loss.push_back(tl);
        trace.val_loss.push_back(vl);
        if (!std::isfinite(tl) || !std::isfinite(vl)) {
            trace.stop_reason = "divergence";
            break;
        }
        const bool stop = stopper.update(vl);
        if (stopper.best_index() == epoch) {
            best_weights = net.weights;
            best_biases = net.biases;
            plateau = 0;
        } else if (cfg.lr_plateau_epochs > 0 && ++plateau >= cfg.lr_plateau_epochs) {
            lr *= 0.5;
            plateau = 0;
        }
        if (stop) {
            trace.stop_reason = "patience";
            break;
        }
    }
    if (trace.stop_reason.empty()) trace.stop_reason = "max_epochs";
    trace.best_epoch = stopper.best_index();
    net.weights = std::move(best_weights);
    net.biases = std::move(best_biases);
    return result;
}

metrics::EvalResult predict_series(const NarxNetwork& net, const MarketDataset& ds,
                                   Timestamp from, Timestamp to) {
    std::vector<metrics::PointError> points;
    const auto& price = ds.rt_price();
    for (Timestamp t = from; t <= to; t = t.plus_steps(1)) {
        auto input = assemble_input(ds, t, net.config);
        if (!input) continue;
        const auto target = price.at(price.index_of(t));
        if (!target.valid) continue;
        const double pred = forward(net, *input);
        points.push_back({t, target.value, pred, metrics::abs_error(target.value, pred)});
    }
    if (points.empty()) throw std::runtime_error("narx::predict_series: no scorable steps");
    return metrics::evaluate(std::move(points));
}

std::string TrainTrace::to_csv() const {
    std::string out = "epoch,train_loss,val_loss\n";
    char buf[96];
    for (std::size_t e = 0; e < train_loss.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e, train_loss[e], val_loss[e]);
        out += buf;
    }
    return out;
}

std::string NarxNetwork::to_json() const {
    nlohmann::ordered_json j;
    j["w"] = config.w;
    j["d"] = config.d;
    j["hidden_layers"] = config.hidden_layers;
    j["hidden_units"] = config.hidden_units;
    j["loss"] = config.loss == Loss::kMae ? "mae" : "mse";
    j["input_dim"] = input_dim();
    j["scaling"] = {{"mean", scaling.mean},
                    {"sd", scaling.sd},
                    {"y_mean", scaling.y_mean},
                    {"y_sd", scaling.y_sd}};
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const std::size_t rows = biases[l].size();
        layers.push_back({{"rows", rows},
                          {"cols", weights[l].size() / rows},
                          {"weights", weights[l]},
                          {"bias", biases[l]}});
    }
    j["layers"] = std::move(layers);
    return j.dump(2);
}

}  // namespace gridcast::narx
