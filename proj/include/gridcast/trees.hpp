#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gridcast/features.hpp"

namespace gridcast::trees {

inline constexpr int kUnbounded = -1;

struct TreeParams {
    int min_leaf = 6;
    int max_splits = 50;  // kUnbounded lifts the cap

    void validate() const;
};

/// One node of a regression tree. Internal nodes route by
/// `x[feature] < threshold` (strictly less goes left, equality goes right);
/// leaves predict the mean target of their training subset. count is the
/// number of training rows that reached the node.
struct TreeNode {
    bool is_leaf = true;
    int feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double leaf_mean = 0.0;  // training mean of the subset (kept on all nodes)
    std::size_t count = 0;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;             // nodes[0] is the root
    std::vector<std::int32_t> split_order;   // node ids in best-first insertion order

    std::size_t n_internal() const { return split_order.size(); }
    std::string to_json() const;
};

/// Row-major matrix view with replaceable targets, so ensembles can fit trees
/// to residuals without copying the feature block.
struct DataView {
    const double* values = nullptr;
    const double* y = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;

    static DataView of(const features::FeatureMatrix& m) {
        return {m.values.data(), m.targets.data(), m.rows(), m.cols};
    }
    std::span<const double> row(std::size_t i) const { return {values + i * cols, cols}; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// CART with best-first growth: repeatedly split the frontier leaf offering
/// the greatest SSE reduction, choosing the (feature, threshold) minimizing
/// total child SSE subject to min_leaf. Thresholds are midpoints between
/// consecutive distinct sorted values; ties break to the lowest feature index,
/// then the lowest threshold. Fewer than 2*min_leaf rows (or no admissible
/// split) yields a single-leaf mean predictor. Throws std::invalid_argument
/// on zero rows or invalid params.
RegressionTree fit_tree(const features::FeatureMatrix& X, const TreeParams& params);
RegressionTree fit_tree(const DataView& data, const TreeParams& params);
/// Subset/bootstrap variant: `rows` may repeat indices (weighted rows).
RegressionTree fit_tree(const DataView& data, std::span<const std::uint32_t> rows,
                        const TreeParams& params);

double predict_tree(const RegressionTree& tree, std::span<const double> x);

struct CvRow {
    TreeParams params;
    double mean_mae = 0.0;
    double mean_mse = 0.0;
};

struct CvResult {
    std::vector<CvRow> rows;      // one per grid setting, grid order
    std::size_t best_index = 0;   // argmin mean_mae, ties to the earlier entry
    std::vector<int> fold_of;     // fold id per data row (the seeded partition)

    const CvRow& best() const { return rows[best_index]; }
};

/// k-fold cross-validation over a parameter grid. Rows are shuffled with the
/// seed and dealt round-robin into k folds, so folds are never contiguous
/// blocks. Per setting, the validation MAE/MSE is averaged over folds.
/// Requires 2 <= k <= rows and a nonempty grid.
CvResult kfold_cv(const features::FeatureMatrix& X, std::span<const TreeParams> grid, int k,
                  std::uint64_t seed, int n_threads = 0);

struct BaggedModel {
    std::vector<RegressionTree> trees;
    std::vector<std::vector<std::uint32_t>> inbag;  // per tree: draw count per row
    std::uint64_t seed = 0;

    std::size_t b() const { return trees.size(); }
    std::string to_json(bool include_inbag = false) const;
};

/// Bootstrap-aggregated unbounded trees (min_leaf 1, no split cap): each of
/// the b members is fit on n draws with replacement. Member seeds derive from
/// the master seed, so results do not depend on the parallel schedule.
BaggedModel fit_bagged(const features::FeatureMatrix& X, std::size_t b, std::uint64_t seed,
                       int n_threads = 0);

/// Unweighted mean of member predictions.
double predict_bagged(const BaggedModel& model, std::span<const double> x);

struct OobResult {
    double mae = 0.0;
    std::size_t n_covered = 0;   // rows out-of-bag for at least one tree
    std::size_t n_excluded = 0;  // rows in-bag for every tree (not scored)
};

/// Out-of-bag error: each row is predicted by the average of the trees whose
/// bootstrap excluded it; MAE over coverable rows. Throws std::runtime_error
/// when no row is coverable.
OobResult oob_error(const BaggedModel& model, const features::FeatureMatrix& X);

/// OOB MAE of the first b trees for b = 1..b_max (one bagged fit, prefix
/// evaluation). Entries where no row is coverable yet are NaN.
std::vector<double> oob_curve(const features::FeatureMatrix& X, std::size_t b_max,
                              std::uint64_t seed, int n_threads = 0);

struct BoostParams {
    double nu = 0.1;
    int max_splits_weak = 16;
    int m = 256;  // boosting stages
    int min_leaf = 6;

    void validate() const;  // 0 < nu <= 1, m >= 1
};

struct BoostStageTrace {
    double train_mae = 0.0;  // after applying the stage
    double train_mse = 0.0;
};

struct BoostedModel {
    double f0 = 0.0;  // mean training target
    double nu = 0.1;
    int max_splits_weak = 16;
    int min_leaf = 6;
    std::vector<RegressionTree> stages;
    std::vector<BoostStageTrace> trace;

    std::string to_json(bool include_trace = true) const;
};

/// Least-squares gradient boosting: F_0 = mean(y); stage i fits a weak tree
/// (max_splits_weak) to the residuals y - F_{i-1} and F_i = F_{i-1} + nu*tree.
/// Stage trees predict leaf residual means, so training MSE never increases
/// (the no-split mean tree is the worst case).
BoostedModel fit_lsboost(const features::FeatureMatrix& X, const BoostParams& params);

double predict_boosted(const BoostedModel& model, std::span<const double> x);

/// Share of internal nodes splitting on each feature (sums to 1 when any
/// internal node exists; all zeros otherwise).
std::vector<double> feature_importance(const RegressionTree& tree, std::size_t n_features);
std::vector<double> feature_importance(const BaggedModel& model, std::size_t n_features);
std::vector<double> feature_importance(const BoostedModel& model, std::size_t n_features);

/// "feature,share" CSV, one row per feature in registry order.
std::string importance_csv(std::span<const std::string> names, std::span<const double> shares);

/// Row indices for a seeded random train/test split (shuffle, then the first
/// train_frac of rows train). Both halves are returned in ascending order.
struct SplitIndices {
    std::vector<std::uint32_t> train;
    std::vector<std::uint32_t> test;
};
SplitIndices train_test_split(std::size_t n_rows, double train_frac, std::uint64_t seed);

}  // namespace gridcast::trees
