#include "gridcast/trees.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>

#include <json.hpp>

#include "gridcast/rng.hpp"
#include "parallel.hpp"

namespace gridcast::trees {

namespace {

struct NodeStats {
    long double sum = 0.0L;
    long double sumsq = 0.0L;
    std::size_t n = 0;

    double mean() const { return static_cast<double>(sum / static_cast<long double>(n)); }
    long double sse() const {
        if (n == 0) return 0.0L;
        long double s = sumsq - sum * sum / static_cast<long double>(n);
        return s > 0.0L ? s : 0.0L;
    }
};

NodeStats stats_of(const DataView& d, std::span<const std::uint32_t> rows) {
    NodeStats st;
    st.n = rows.size();
    for (std::uint32_t r : rows) {
        long double y = d.y[r];
        st.sum += y;
        st.sumsq += y * y;
    }
    return st;
}

struct SplitCand {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    long double reduction = 0.0L;
};

// Rows of one frontier node, kept once per feature in (value, row id) order.
// Children inherit the order through a stable partition, so the split search
// is a linear scan per node instead of a sort per node.
struct NodeRows {
    std::vector<std::vector<std::uint32_t>> by_feature;
    std::size_t n = 0;
};

bool value_order(const DataView& d, std::size_t f, std::uint32_t a, std::uint32_t b) {
    const double xa = d.at(a, f), xb = d.at(b, f);
    if (xa != xb) return xa < xb;
    return a < b;
}

// All matrix rows sorted by each feature; shared across bootstrap draws,
// CV folds, and boosting stages, which reorder targets but never values.
std::vector<std::vector<std::uint32_t>> presort_features(const DataView& d) {
    std::vector<std::vector<std::uint32_t>> orders(d.cols);
    for (std::size_t f = 0; f < d.cols; ++f) {
        auto& ord = orders[f];
        ord.resize(d.rows);
        std::iota(ord.begin(), ord.end(), 0u);
        std::sort(ord.begin(), ord.end(),
                  [&](std::uint32_t a, std::uint32_t b) { return value_order(d, f, a, b); });
    }
    return orders;
}

NodeRows root_from_rows(const DataView& d, const std::vector<std::uint32_t>& rows) {
    NodeRows root;
    root.n = rows.size();
    root.by_feature.assign(std::max<std::size_t>(d.cols, 1), rows);
    for (std::size_t f = 0; f < d.cols; ++f) {
        auto& ord = root.by_feature[f];
        std::sort(ord.begin(), ord.end(),
                  [&](std::uint32_t a, std::uint32_t b) { return value_order(d, f, a, b); });
    }
    return root;
}

// Selects a row multiset out of a whole-matrix presort; each id is emitted
// counts[id] times, which matches root_from_rows on the expanded multiset.
NodeRows root_from_counts(const std::vector<std::vector<std::uint32_t>>& presorted,
                          std::span<const std::uint32_t> counts, std::size_t n_rows) {
    NodeRows root;
    root.n = n_rows;
    if (presorted.empty()) {
        auto& ord = root.by_feature.emplace_back();
        ord.reserve(n_rows);
        for (std::size_t r = 0; r < counts.size(); ++r) {
            for (std::uint32_t c = counts[r]; c > 0; --c) {
                ord.push_back(static_cast<std::uint32_t>(r));
            }
        }
        return root;
    }
    root.by_feature.resize(presorted.size());
    for (std::size_t f = 0; f < presorted.size(); ++f) {
        auto& ord = root.by_feature[f];
        ord.reserve(n_rows);
        for (std::uint32_t r : presorted[f]) {
            for (std::uint32_t c = counts[r]; c > 0; --c) ord.push_back(r);
        }
    }
    return root;
}

// Exhaustive (feature x midpoint) search under the min_leaf constraint.
// A split is admissible only if its SSE reduction clears a scale-aware
// epsilon, so numerically-flat targets never split.
SplitCand best_split(const DataView& d, const NodeRows& rows, const NodeStats& parent,
                     int min_leaf) {
    SplitCand best;
    const std::size_t n = rows.n;
    const long double parent_sse = parent.sse();
    const long double eps = 1e-12L * std::max<long double>(1.0L, parent.sumsq);
    for (std::size_t f = 0; f < d.cols; ++f) {
        const std::uint32_t* order = rows.by_feature[f].data();
        long double sy = 0.0L, syy = 0.0L;
        double x_next = d.at(order[0], f);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const long double y = d.y[order[i]];
            sy += y;
            syy += y * y;
            const double x_here = x_next;
            x_next = d.at(order[i + 1], f);
            const std::size_t nl = i + 1, nr = n - nl;
            if (nl < static_cast<std::size_t>(min_leaf) ||
                nr < static_cast<std::size_t>(min_leaf)) {
                continue;
            }
            if (!(x_here < x_next)) continue;
            const double thr = x_here / 2.0 + x_next / 2.0;
            // guard against midpoints that round onto an endpoint
            if (!(x_here < thr) || !(thr <= x_next)) continue;
            const long double lsse = syy - sy * sy / static_cast<long double>(nl);
            const long double rsy = parent.sum - sy, rsyy = parent.sumsq - syy;
            const long double rsse = rsyy - rsy * rsy / static_cast<long double>(nr);
            const long double reduction = parent_sse - (lsse + rsse);
            if (reduction <= eps) continue;
            const bool better =
                !best.found || reduction > best.reduction ||
                (reduction == best.reduction &&
                 (static_cast<int>(f) < best.feature ||
                  (static_cast<int>(f) == best.feature && thr < best.threshold)));
            if (better) {
                best.found = true;
                best.feature = static_cast<int>(f);
                best.threshold = thr;
                best.reduction = reduction;
            }
        }
    }
    return best;
}

RegressionTree fit_root(const DataView& d, NodeRows&& root, const TreeParams& params) {
    RegressionTree tree;
    struct Slot {
        NodeRows rows;
        NodeStats stats;
        SplitCand cand;
    };
    std::vector<Slot> slots;
    struct HeapEntry {
        long double reduction;
        std::int32_t node_id;
        std::size_t slot;
    };
    auto worse = [](const HeapEntry& a, const HeapEntry& b) {
        if (a.reduction != b.reduction) return a.reduction < b.reduction;
        return a.node_id > b.node_id;  // equal gains: split the older leaf first
    };
    std::priority_queue<HeapEntry, std::vector<HeapEntry>, decltype(worse)> frontier(worse);
    std::vector<std::uint8_t> goes_left(d.rows);

    auto add_leaf = [&](NodeRows&& rs) -> std::int32_t {
        NodeStats st = stats_of(d, rs.by_feature.front());
        TreeNode node;
        node.is_leaf = true;
        node.leaf_mean = st.mean();
        node.count = rs.n;
        tree.nodes.push_back(node);
        const auto id = static_cast<std::int32_t>(tree.nodes.size() - 1);
        if (rs.n >= 2 * static_cast<std::size_t>(params.min_leaf)) {
            SplitCand cand = best_split(d, rs, st, params.min_leaf);
            if (cand.found) {
                slots.push_back({std::move(rs), st, cand});
                frontier.push({cand.reduction, id, slots.size() - 1});
            }
        }
        return id;
    };

    add_leaf(std::move(root));
    int splits = 0;
    while (!frontier.empty() &&
           (params.max_splits == kUnbounded || splits < params.max_splits)) {
        const HeapEntry top = frontier.top();
        frontier.pop();
        Slot& slot = slots[top.slot];
        const int feature = slot.cand.feature;
        const double threshold = slot.cand.threshold;
        std::size_t nl = 0;
        for (std::uint32_t r : slot.rows.by_feature.front()) {
            const bool left = d.at(r, static_cast<std::size_t>(feature)) < threshold;
            goes_left[r] = left ? 1 : 0;
            nl += left ? 1 : 0;
        }
        NodeRows lrows, rrows;
        lrows.n = nl;
        rrows.n = slot.rows.n - nl;
        lrows.by_feature.resize(slot.rows.by_feature.size());
        rrows.by_feature.resize(slot.rows.by_feature.size());
        for (std::size_t f = 0; f < slot.rows.by_feature.size(); ++f) {
            auto& src = slot.rows.by_feature[f];
            auto& lf = lrows.by_feature[f];
            auto& rf = rrows.by_feature[f];
            lf.reserve(lrows.n);
            rf.reserve(rrows.n);
            for (std::uint32_t r : src) (goes_left[r] ? lf : rf).push_back(r);
            src.clear();
            src.shrink_to_fit();
        }
        const std::int32_t left = add_leaf(std::move(lrows));
        const std::int32_t right = add_leaf(std::move(rrows));
        TreeNode& node = tree.nodes[top.node_id];  // add_leaf may reallocate
        node.is_leaf = false;
        node.feature = feature;
        node.threshold = threshold;
        node.left = left;
        node.right = right;
        tree.split_order.push_back(top.node_id);
        ++splits;
    }
    return tree;
}

RegressionTree fit_rows(const DataView& d, const std::vector<std::uint32_t>& rows,
                        const TreeParams& params) {
    params.validate();
    if (rows.empty()) throw std::invalid_argument("fit_tree: no rows");
    if (d.values == nullptr || d.y == nullptr) throw std::invalid_argument("fit_tree: empty view");
    return fit_root(d, root_from_rows(d, rows), params);
}

double mean_of(std::span<const double> v) {
    long double s = 0.0L;
    for (double x : v) s += x;
    return static_cast<double>(s / static_cast<long double>(v.size()));
}

nlohmann::ordered_json tree_json(const RegressionTree& t) {
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (const auto& n : t.nodes) {
        if (n.is_leaf) {
            nodes.push_back({{"leaf_mean", n.leaf_mean}, {"count", n.count}});
        } else {
            nodes.push_back({{"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right},
                             {"count", n.count}});
        }
    }
    return {{"nodes", std::move(nodes)}, {"split_order", t.split_order}};
}

void walk_importance(const RegressionTree& t, std::vector<double>& counts, std::size_t& total) {
    for (const auto& n : t.nodes) {
        if (n.is_leaf) continue;
        if (static_cast<std::size_t>(n.feature) >= counts.size()) {
            throw std::invalid_argument("feature_importance: node feature outside registry");
        }
        counts[static_cast<std::size_t>(n.feature)] += 1.0;
        ++total;
    }
}

std::vector<double> finish_importance(std::vector<double> counts, std::size_t total) {
    if (total > 0) {
        for (double& c : counts) c /= static_cast<double>(total);
    }
    return counts;
}

}  // namespace

void TreeParams::validate() const {
    if (min_leaf < 1) throw std::invalid_argument("TreeParams: min_leaf must be >= 1");
    if (max_splits != kUnbounded && max_splits < 1) {
        throw std::invalid_argument("TreeParams: max_splits must be >= 1 or unbounded");
    }
}

void BoostParams::validate() const {
    if (!(nu > 0.0) || nu > 1.0) throw std::invalid_argument("BoostParams: nu must be in (0, 1]");
    if (m < 1) throw std::invalid_argument("BoostParams: m must be >= 1");
    TreeParams{min_leaf, max_splits_weak}.validate();
}

std::string RegressionTree::to_json() const { return tree_json(*this).dump(2); }

RegressionTree fit_tree(const features::FeatureMatrix& X, const TreeParams& params) {
    return fit_tree(DataView::of(X), params);
}

RegressionTree fit_tree(const DataView& data, const TreeParams& params) {
    params.validate();
    if (data.rows == 0) throw std::invalid_argument("fit_tree: no rows");
    if (data.values == nullptr || data.y == nullptr) {
        throw std::invalid_argument("fit_tree: empty view");
    }
    NodeRows root;
    root.n = data.rows;
    root.by_feature = presort_features(data);
    if (root.by_feature.empty()) {
        root.by_feature.resize(1);
        root.by_feature.front().resize(data.rows);
        std::iota(root.by_feature.front().begin(), root.by_feature.front().end(), 0u);
    }
    return fit_root(data, std::move(root), params);
}

RegressionTree fit_tree(const DataView& data, std::span<const std::uint32_t> rows,
                        const TreeParams& params) {
    return fit_rows(data, std::vector<std::uint32_t>(rows.begin(), rows.end()), params);
}

double predict_tree(const RegressionTree& tree, std::span<const double> x) {
    if (tree.nodes.empty()) throw std::invalid_argument("predict_tree: empty tree");
    std::int32_t id = 0;
    while (!tree.nodes[static_cast<std::size_t>(id)].is_leaf) {
        const TreeNode& n = tree.nodes[static_cast<std::size_t>(id)];
        if (static_cast<std::size_t>(n.feature) >= x.size()) {
            throw std::invalid_argument("predict_tree: input shorter than the registry");
        }
        id = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
    }
    return tree.nodes[static_cast<std::size_t>(id)].leaf_mean;
}

CvResult kfold_cv(const features::FeatureMatrix& X, std::span<const TreeParams> grid, int k,
                  std::uint64_t seed, int n_threads) {
    const std::size_t n = X.rows();
    if (grid.empty()) throw std::invalid_argument("kfold_cv: empty parameter grid");
    if (k < 2) throw std::invalid_argument("kfold_cv: k must be >= 2");
    if (static_cast<std::size_t>(k) > n) {
        throw std::invalid_argument("kfold_cv: k exceeds the row count (empty fold)");
    }
    for (const auto& p : grid) p.validate();

    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        std::swap(order[i], order[rng.uniform_below(i + 1)]);
    }
    std::vector<int> fold_of(n);
    for (std::size_t i = 0; i < n; ++i) fold_of[order[i]] = static_cast<int>(i % k);

    const DataView d = DataView::of(X);
    const auto presorted = presort_features(d);
    const std::size_t n_tasks = grid.size() * static_cast<std::size_t>(k);
    std::vector<std::pair<double, double>> fold_metrics(n_tasks);  // (mae, mse)
    detail::parallel_for(n_tasks, n_threads, [&](std::size_t task) {
        const std::size_t g = task / static_cast<std::size_t>(k);
        const int fold = static_cast<int>(task % static_cast<std::size_t>(k));
        std::vector<std::uint32_t> counts(n, 0);
        std::vector<std::uint32_t> val;
        std::size_t n_train = 0;
        for (std::size_t r = 0; r < n; ++r) {
            if (fold_of[r] == fold) {
                val.push_back(static_cast<std::uint32_t>(r));
            } else {
                counts[r] = 1;
                ++n_train;
            }
        }
        const RegressionTree tree =
            fit_root(d, root_from_counts(presorted, counts, n_train), grid[g]);
        long double ae = 0.0L, se = 0.0L;
        for (std::uint32_t r : val) {
            const double err = d.y[r] - predict_tree(tree, d.row(r));
            ae += std::abs(err);
            se += err * err;
        }
        fold_metrics[task] = {static_cast<double>(ae / static_cast<long double>(val.size())),
                              static_cast<double>(se / static_cast<long double>(val.size()))};
    });

    CvResult result;
    result.fold_of = std::move(fold_of);
    result.rows.reserve(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        long double mae = 0.0L, mse = 0.0L;
        for (int f = 0; f < k; ++f) {
            mae += fold_metrics[g * k + f].first;
            mse += fold_metrics[g * k + f].second;
        }
        result.rows.push_back({grid[g], static_cast<double>(mae / k), static_cast<double>(mse / k)});
    }
    result.best_index = 0;
    for (std::size_t g = 1; g < result.rows.size(); ++g) {
        if (result.rows[g].mean_mae < result.rows[result.best_index].mean_mae) {
            result.best_index = g;
        }
    }
    return result;
}

BaggedModel fit_bagged(const features::FeatureMatrix& X, std::size_t b, std::uint64_t seed,
                       int n_threads) {
    if (b < 1) throw std::invalid_argument("fit_bagged: b must be >= 1");
    const std::size_t n = X.rows();
    if (n == 0) throw std::invalid_argument("fit_bagged: no rows");

    BaggedModel model;
    model.seed = seed;
    model.trees.resize(b);
    model.inbag.resize(b);
    const DataView d = DataView::of(X);
    const auto presorted = presort_features(d);
    const Rng master(seed);
    const TreeParams unbounded{1, kUnbounded};
    unbounded.validate();
    detail::parallel_for(b, n_threads, [&](std::size_t t) {
        Rng rng = master.sub(t);
        std::vector<std::uint32_t> counts(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[rng.uniform_below(n)];
        }
        model.trees[t] = fit_root(d, root_from_counts(presorted, counts, n), unbounded);
        model.inbag[t] = std::move(counts);
    });
    return model;
}

double predict_bagged(const BaggedModel& model, std::span<const double> x) {
    if (model.trees.empty()) throw std::invalid_argument("predict_bagged: no trees");
    long double s = 0.0L;
    for (const auto& t : model.trees) s += predict_tree(t, x);
    return static_cast<double>(s / static_cast<long double>(model.trees.size()));
}

OobResult oob_error(const BaggedModel& model, const features::FeatureMatrix& X) {
    const std::size_t n = X.rows();
    for (const auto& counts : model.inbag) {
        if (counts.size() != n) {
            throw std::invalid_argument("oob_error: inbag size does not match the matrix");
        }
    }
    OobResult out;
    long double ae = 0.0L;
    for (std::size_t r = 0; r < n; ++r) {
        long double sum = 0.0L;
        std::size_t cnt = 0;
        for (std::size_t t = 0; t < model.trees.size(); ++t) {
            if (model.inbag[t][r] != 0) continue;
            sum += predict_tree(model.trees[t], X.row(r));
            ++cnt;
        }
        if (cnt == 0) {
            ++out.n_excluded;
            continue;
        }
        ++out.n_covered;
        ae += std::abs(X.targets[r] - static_cast<double>(sum / static_cast<long double>(cnt)));
    }
    if (out.n_covered == 0) throw std::runtime_error("oob_error: no out-of-bag coverage");
    out.mae = static_cast<double>(ae / static_cast<long double>(out.n_covered));
    return out;
}

std::vector<double> oob_curve(const features::FeatureMatrix& X, std::size_t b_max,
                              std::uint64_t seed, int n_threads) {
    const BaggedModel model = fit_bagged(X, b_max, seed, n_threads);
    const std::size_t n = X.rows();
    std::vector<long double> sum(n, 0.0L);
    std::vector<std::size_t> cnt(n, 0);
    std::vector<double> curve(b_max, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t b = 0; b < b_max; ++b) {
        for (std::size_t r = 0; r < n; ++r) {
            if (model.inbag[b][r] != 0) continue;
            sum[r] += predict_tree(model.trees[b], X.row(r));
            ++cnt[r];
        }
        long double ae = 0.0L;
        std::size_t covered = 0;
        for (std::size_t r = 0; r < n; ++r) {
            if (cnt[r] == 0) continue;
            ++covered;
            ae += std::abs(X.targets[r] - static_cast<double>(sum[r] / static_cast<long double>(cnt[r])));
        }
        if (covered > 0) curve[b] = static_cast<double>(ae / static_cast<long double>(covered));
    }
    return curve;
}

BoostedModel fit_lsboost(const features::FeatureMatrix& X, const BoostParams& params) {
    params.validate();
    const std::size_t n = X.rows();
    if (n == 0) throw std::invalid_argument("fit_lsboost: no rows");

    BoostedModel model;
    model.nu = params.nu;
    model.max_splits_weak = params.max_splits_weak;
    model.min_leaf = params.min_leaf;
    model.f0 = mean_of(X.targets);
    model.stages.reserve(static_cast<std::size_t>(params.m));
    model.trace.reserve(static_cast<std::size_t>(params.m));

    std::vector<double> fitted(n, model.f0);
    std::vector<double> resid(n);
    const TreeParams weak{params.min_leaf, params.max_splits_weak};
    DataView d = DataView::of(X);
    d.y = resid.data();
    const auto presorted = presort_features(d);

    for (int stage = 0; stage < params.m; ++stage) {
        for (std::size_t r = 0; r < n; ++r) resid[r] = X.targets[r] - fitted[r];
        NodeRows root;
        root.n = n;
        root.by_feature = presorted;
        if (root.by_feature.empty()) {
            root.by_feature.resize(1);
            root.by_feature.front().resize(n);
            std::iota(root.by_feature.front().begin(), root.by_feature.front().end(), 0u);
        }
        RegressionTree tree = fit_root(d, std::move(root), weak);
        long double ae = 0.0L, se = 0.0L;
        for (std::size_t r = 0; r < n; ++r) {
            fitted[r] += params.nu * predict_tree(tree, X.row(r));
            const double err = X.targets[r] - fitted[r];
            ae += std::abs(err);
            se += err * err;
        }
        model.stages.push_back(std::move(tree));
        model.trace.push_back({static_cast<double>(ae / static_cast<long double>(n)),
                               static_cast<double>(se / static_cast<long double>(n))});
    }
    return model;
}

double predict_boosted(const BoostedModel& model, std::span<const double> x) {
    long double s = model.f0;
    for (const auto& t : model.stages) s += model.nu * predict_tree(t, x);
    return static_cast<double>(s);
}

std::vector<double> feature_importance(const RegressionTree& tree, std::size_t n_features) {
    std::vector<double> counts(n_features, 0.0);
    std::size_t total = 0;
    walk_importance(tree, counts, total);
    return finish_importance(std::move(counts), total);
}

std::vector<double> feature_importance(const BaggedModel& model, std::size_t n_features) {
    std::vector<double> counts(n_features, 0.0);
    std::size_t total = 0;
    for (const auto& t : model.trees) walk_importance(t, counts, total);
    return finish_importance(std::move(counts), total);
}

std::vector<double> feature_importance(const BoostedModel& model, std::size_t n_features) {
    std::vector<double> counts(n_features, 0.0);
    std::size_t total = 0;
    for (const auto& t : model.stages) walk_importance(t, counts, total);
    return finish_importance(std::move(counts), total);
}

std::string importance_csv(std::span<const std::string> names, std::span<const double> shares) {
    if (names.size() != shares.size()) {
        throw std::invalid_argument("importance_csv: names/shares size mismatch");
    }
    std::string out = "feature,share\n";
    char buf[64];
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", shares[i]);
        out += names[i];
        out += ',';
        out += buf;
        out += '\n';
    }
    return out;
}

SplitIndices train_test_split(std::size_t n_rows, double train_frac, std::uint64_t seed) {
    if (!(train_frac > 0.0) || !(train_frac < 1.0)) {
        throw std::invalid_argument("train_test_split: train_frac must be in (0, 1)");
    }
    if (n_rows < 2) throw std::invalid_argument("train_test_split: need at least 2 rows");
    std::vector<std::uint32_t> order(n_rows);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(seed);
    for (std::size_t i = n_rows - 1; i > 0; --i) {
        std::swap(order[i], order[rng.uniform_below(i + 1)]);
    }
    std::size_t n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n_rows)));
    n_train = std::clamp<std::size_t>(n_train, 1, n_rows - 1);
    SplitIndices out;
    out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

std::string BaggedModel::to_json(bool include_inbag) const {
    nlohmann::ordered_json j;
    j["b"] = trees.size();
    j["seed"] = seed;
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& t : trees) arr.push_back(tree_json(t));
    j["trees"] = std::move(arr);
    if (include_inbag) j["inbag"] = inbag;
    return j.dump(2);
}

std::string BoostedModel::to_json(bool include_trace) const {
    nlohmann::ordered_json j;
    j["f0"] = f0;
    j["nu"] = nu;
    j["max_splits_weak"] = max_splits_weak;
    j["min_leaf"] = min_leaf;
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& t : stages) arr.push_back(tree_json(t));
    j["stages"] = std::move(arr);
    if (include_trace) {
        nlohmann::ordered_json tr = nlohmann::ordered_json::array();
        for (const auto& s : trace) tr.push_back({{"train_mae", s.train_mae}, {"train_mse", s.train_mse}});
        j["trace"] = std::move(tr);
    }
    return j.dump(2);
}

}  // namespace gridcast::trees
