#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridcast/metrics.hpp"
#include "gridcast/stream.hpp"
#include "gridcast/timestamp.hpp"

namespace gridcast::narx {

enum class Loss { kMae, kMse };

/// Network and training configuration. The input at target time t is the
/// exogenous block for steps t-W+1 .. t (9 features per step: the six
/// calendar fields, day-ahead price and demand forecast for the enclosing
/// hour, wind for the hour before) followed by the true price and demand
/// history at steps t-D .. t-1. Real-time price and demand never appear in
/// the exogenous block.
struct NarxConfig {
    int w = 16;  // exogenous window width, 15-minute steps
    int d = 16;  // history depth, 15-minute steps
    int hidden_layers = 1;
    int hidden_units = 10;
    Loss loss = Loss::kMae;
    int patience = 8;      // epochs of successive validation increase
    int max_epochs = 100;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int batch_size = 64;
    int lr_plateau_epochs = 8;  // halve lr after this many epochs without a
                                // new validation best; 0 disables halving
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument when w/d < 1, hidden_layers outside 1..3,
    /// hidden_units < 1, patience < 1, max_epochs < 1, learning_rate <= 0,
    /// momentum outside [0, 1), batch_size < 1 or lr_plateau_epochs < 0.
    void validate() const;

    std::size_t input_dim() const;
};

/// Names of the per-step exogenous features, in layout order.
const std::vector<std::string>& exo_feature_names();

/// Per-column z-score statistics frozen from the training block. SDs are
/// floored at 1e-8 so constant columns map to 0.
struct Scaling {
    std::vector<double> mean;
    std::vector<double> sd;
    double y_mean = 0.0;
    double y_sd = 1.0;

    std::vector<double> apply(std::span<const double> raw) const;
};

/// Sigmoid hidden layers, one linear output unit. weights[l] is row-major
/// [out x in]; the last layer is the output layer. Inputs are raw feature
/// vectors; scaling is applied inside forward and the output is returned in
/// USD/MWh.
struct NarxNetwork {
    NarxConfig config;
    Scaling scaling;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    std::size_t input_dim() const { return config.input_dim(); }
    std::size_t n_parameters() const;
    std::string to_json() const;
};

/// One supervised example: raw input vector, target in USD/MWh.
struct Example {
    std::vector<double> input;
    double target = 0.0;
    Timestamp when;
};

/// Gradient of a batch loss, shaped like the network weights.
struct Gradient {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
};

/// Patience rule: stop when validation loss has increased (relative to the
/// previous epoch) for `patience` successive epochs.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience);

    /// Feed the next epoch's validation loss; true means stop now.
    bool update(double val_loss);

    int best_index() const { return best_; }
    double best_loss() const { return best_loss_; }

private:
    int patience_;
    int streak_ = 0;
    int n_seen_ = 0;
    int best_ = -1;
    double best_loss_ = 0.0;
    double prev_ = 0.0;
};

struct TrainTrace {
    std::vector<double> train_loss;  // scaled-space loss per epoch
    std::vector<double> val_loss;
    std::string stop_reason;  // "patience", "max_epochs" or "divergence"
    int best_epoch = -1;      // epoch of the returned weight snapshot

    std::string to_csv() const;  // epoch,train_loss,val_loss
};

struct TrainResult {
    NarxNetwork net;  // best-validation snapshot, not the final weights
    TrainTrace trace;
    std::size_t n_train = 0, n_val = 0, n_test = 0;
    Timestamp test_begin, test_end;  // target-time range of the test block
};

/// First/last target time with full margins (history depth, exogenous window
/// and the lagged wind hour). Throws std::out_of_range when no step has them.
Timestamp first_usable(const MarketDataset& ds, const NarxConfig& cfg);
Timestamp last_usable(const MarketDataset& ds, const NarxConfig& cfg);

/// Raw (unscaled) input vector for target time t; nullopt when any touched
/// step is masked invalid. Throws std::out_of_range when t lacks margins.
std::optional<std::vector<double>> assemble_input(const MarketDataset& ds, Timestamp t,
                                                  const NarxConfig& cfg);

/// All usable examples in [from, to]: assembled input plus a valid target.
std::vector<Example> collect_examples(const MarketDataset& ds, const NarxConfig& cfg,
                                      Timestamp from, Timestamp to);

/// One-step prediction in USD/MWh for a raw input vector.
double forward(const NarxNetwork& net, std::span<const double> raw_input);

/// Batch loss in scaled target space.
double loss(const NarxNetwork& net, std::span<const Example> batch, Loss kind);

/// Exact reverse-mode gradient of `loss`. The MAE subgradient at zero error
/// is 0. Throws std::invalid_argument on an empty batch.
Gradient gradient(const NarxNetwork& net, std::span<const Example> batch, Loss kind);

/// Mini-batch gradient descent with momentum on contiguous 70/15/15
/// train/validation/test blocks. Scaling is frozen from the training block;
/// the learning rate halves after lr_plateau_epochs epochs without a new
/// validation best; training stops on patience, max_epochs or divergence and
/// the returned network carries the weights of the best validation epoch.
TrainResult train(const MarketDataset& ds, const NarxConfig& cfg);

/// Open-loop one-step predictions for every usable target in [from, to]. The
/// history block always holds true observed values, never past predictions.
/// Throws std::runtime_error when nothing in the range is scorable.
metrics::EvalResult predict_series(const NarxNetwork& net, const MarketDataset& ds,
                                   Timestamp from, Timestamp to);

}  // namespace gridcast::narx
