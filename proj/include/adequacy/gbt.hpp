#pragma once

// Histogram gradient-boosted regression trees with squared-error loss.
// Features are bucketed into at most 255 quantile bins; trees are grown
// best-first up to a leaf budget. Fitted trees store real-valued split
// thresholds, so prediction never touches the bins.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace adequacy {

struct GbtParams {
    int iterations = 100;
    double learning_rate = 0.1;
    int max_bins = 255;
    int max_leaves = 31;
    int min_samples_leaf = 20;
    double l2_regularization = 0.0;

    void validate() const {
        if (iterations < 1) throw std::invalid_argument("gbt: iterations must be >= 1");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("gbt: learning_rate must be positive");
        if (max_bins < 2 || max_bins > 255) throw std::invalid_argument("gbt: max_bins must be in [2, 255]");
        if (max_leaves < 2) throw std::invalid_argument("gbt: max_leaves must be >= 2");
        if (min_samples_leaf < 1) throw std::invalid_argument("gbt: min_samples_leaf must be >= 1");
        if (l2_regularization < 0.0) throw std::invalid_argument("gbt: l2_regularization must be >= 0");
    }
    friend bool operator==(const GbtParams&, const GbtParams&) = default;
};

/// Flat binary tree; node 0 is the root, a node with feature < 0 is a leaf,
/// and the right child always directly follows the left one.
struct TreeNode {
    int feature = -1;
    int left = -1, right = -1;
    double threshold = 0.0;  // go left when x[feature] <= threshold
    double value = 0.0;      // leaf output
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> x) const {
        const TreeNode* n = nodes.data();
        while (n->feature >= 0) n = nodes.data() + (x[n->feature] <= n->threshold ? n->left : n->right);
        return n->value;
    }
    std::size_t leaf_count() const {
        return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
    }
    friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

/// Row-major dense sample matrix.
struct FeatureMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

struct GbtModel {
    std::size_t n_features = 0;
    double baseline = 0.0;
    double learning_rate = 0.1;
    std::vector<RegressionTree> trees;  // leaf values already scaled by the learning rate
    std::vector<double> train_rmse;     // after each boosting round, index 0 = baseline only
    bool degenerate = false;            // labels vary but no usable split exists

    double predict(std::span<const double> x) const {
        if (x.size() != n_features) throw std::invalid_argument("gbt: feature count mismatch");
        double y = baseline;
        for (const auto& t : trees) y += t.predict(x);
        return y;
    }

    /// Predictions for `rows` samples stored row-major in `x`; identical to
    /// calling predict() on each row, but walks each tree for all rows at once.
    void predict_batch(std::span<const double> x, std::size_t rows, std::span<double> out) const {
        if (x.size() != rows * n_features || out.size() != rows) throw std::invalid_argument("gbt: batch shape mismatch");
        std::fill(out.begin(), out.end(), baseline);
        for (const auto& t : trees)
            for (std::size_t i = 0; i < rows; ++i) out[i] += t.predict(x.subspan(i * n_features, n_features));
    }
};

namespace detail {

/// Bin upper edges per feature: midpoints between distinct values when they
/// fit, otherwise midpoints at evenly spaced quantiles.
inline std::vector<double> bin_edges(std::vector<double> values, int max_bins) {
    std::sort(values.begin(), values.end());
    std::vector<double> distinct;
    for (double v : values)
        if (distinct.empty() || v != distinct.back()) distinct.push_back(v);
    std::vector<double> edges;
    if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
        for (std::size_t i = 0; i + 1 < distinct.size(); ++i) edges.push_back(0.5 * (distinct[i] + distinct[i + 1]));
        return edges;
    }
    const std::size_t n = values.size();
    for (int b = 1; b < max_bins; ++b) {
        const std::size_t idx = std::clamp<std::size_t>(static_cast<std::size_t>(b) * n / static_cast<std::size_t>(max_bins), 1, n - 1);
        const double e = 0.5 * (values[idx - 1] + values[idx]);
        if (edges.empty() || e > edges.back()) edges.push_back(e);
    }
    // Drop edges that do not separate any pair of samples.
    std::vector<double> kept;
    for (double e : edges) {
        auto it = std::upper_bound(distinct.begin(), distinct.end(), e);
        if (it != distinct.begin() && it != distinct.end()) kept.push_back(e);
    }
    return kept;
}

struct SplitCandidate {
    double gain = 0.0;
    int feature = -1;
    int bin = -1;  // samples with bin <= this go left
};

class TreeGrower {
public:
    TreeGrower(const std::vector<std::vector<std::uint8_t>>& binned, const std::vector<std::vector<double>>& edges,
               const GbtParams& p)
        : binned_(binned), edges_(edges), p_(p) {}

    RegressionTree grow(std::span<const double> gradient, double shrink) {
        grad_ = gradient;
        RegressionTree tree;
        std::vector<std::vector<std::uint32_t>> members;
        std::vector<std::uint32_t> all(gradient.size());
        std::iota(all.begin(), all.end(), 0u);

        auto add_leaf = [&](std::vector<std::uint32_t> idx) {
            TreeNode leaf;
            leaf.value = leaf_value(idx);
            tree.nodes.push_back(leaf);
            members.push_back(std::move(idx));
            return static_cast<int>(tree.nodes.size() - 1);
        };

        struct Pending {
            double gain;
            int node;
            SplitCandidate split;
            bool operator<(const Pending& o) const { return gain < o.gain || (gain == o.gain && node > o.node); }
        };
        std::priority_queue<Pending> frontier;
        auto consider = [&](int node) {
            const SplitCandidate s = best_split(members[node]);
            if (s.feature >= 0) frontier.push({s.gain, node, s});
        };

        consider(add_leaf(std::move(all)));
        int leaves = 1;
        while (leaves < p_.max_leaves && !frontier.empty()) {
            const Pending top = frontier.top();
            frontier.pop();
            std::vector<std::uint32_t> lhs, rhs;
            const auto& col = binned_[top.split.feature];
            for (std::uint32_t i : members[top.node]) (col[i] <= top.split.bin ? lhs : rhs).push_back(i);
            members[top.node].clear();
            members[top.node].shrink_to_fit();
            const int l = add_leaf(std::move(lhs));
            const int r = add_leaf(std::move(rhs));
            TreeNode& parent = tree.nodes[top.node];
            parent.feature = top.split.feature;
            parent.threshold = edges_[top.split.feature][top.split.bin];
            parent.left = l;
            parent.right = r;
            parent.value = 0.0;
            ++leaves;
            consider(l);
            consider(r);
        }
        for (auto& n : tree.nodes) n.value *= shrink;
        return tree;
    }

private:
    double leaf_value(const std::vector<std::uint32_t>& idx) const {
        double g = 0.0;
        for (std::uint32_t i : idx) g += grad_[i];
        return -g / (static_cast<double>(idx.size()) + p_.l2_regularization);
    }

    SplitCandidate best_split(const std::vector<std::uint32_t>& idx) const {
        SplitCandidate best;
        const auto n = static_cast<double>(idx.size());
        if (idx.size() < 2 * static_cast<std::size_t>(p_.min_samples_leaf)) return best;
        double g_total = 0.0;
        for (std::uint32_t i : idx) g_total += grad_[i];
        const double lambda = p_.l2_regularization;
        const double parent = g_total * g_total / (n + lambda);
        std::vector<double> g_hist;
        std::vector<std::uint32_t> n_hist;
        for (std::size_t f = 0; f < binned_.size(); ++f) {
            const std::size_t n_bins = edges_[f].size() + 1;
            if (n_bins < 2) continue;
            g_hist.assign(n_bins, 0.0);
            n_hist.assign(n_bins, 0);
            const auto& col = binned_[f];
            for (std::uint32_t i : idx) {
                g_hist[col[i]] += grad_[i];
                ++n_hist[col[i]];
            }
            double g_left = 0.0;
            std::uint32_t n_left = 0;
            for (std::size_t b = 0; b + 1 < n_bins; ++b) {
                g_left += g_hist[b];
                n_left += n_hist[b];
                const std::uint32_t n_right = static_cast<std::uint32_t>(idx.size()) - n_left;
                if (n_left < static_cast<std::uint32_t>(p_.min_samples_leaf)) continue;
                if (n_right < static_cast<std::uint32_t>(p_.min_samples_leaf)) break;
                const double g_right = g_total - g_left;
                const double gain = g_left * g_left / (n_left + lambda) + g_right * g_right / (n_right + lambda) - parent;
                if (gain > best.gain * (1.0 + 1e-12) + 1e-12) {
                    best = {gain, static_cast<int>(f), static_cast<int>(b)};
                }
            }
        }
        return best;
    }

    const std::vector<std::vector<std::uint8_t>>& binned_;
    const std::vector<std::vector<double>>& edges_;
    const GbtParams& p_;
    std::span<const double> grad_;
};

inline double rmse_of(std::span<const double> residual) {
    double s = 0.0;
    for (double r : residual) s += r * r;
    return std::sqrt(s / static_cast<double>(residual.size()));
}

}  // namespace detail

inline GbtModel train_gbt(const FeatureMatrix& x, std::span<const double> y, const GbtParams& p = {}) {
    p.validate();
    if (x.rows < 2) throw std::invalid_argument("gbt: need at least 2 samples");
    if (y.size() != x.rows) throw std::invalid_argument("gbt: label count mismatch");

    std::vector<std::vector<double>> edges(x.cols);
    std::vector<std::vector<std::uint8_t>> binned(x.cols, std::vector<std::uint8_t>(x.rows));
    for (std::size_t f = 0; f < x.cols; ++f) {
        std::vector<double> col(x.rows);
        for (std::size_t i = 0; i < x.rows; ++i) col[i] = x(i, f);
        edges[f] = detail::bin_edges(col, p.max_bins);
        for (std::size_t i = 0; i < x.rows; ++i)
            binned[f][i] = static_cast<std::uint8_t>(std::lower_bound(edges[f].begin(), edges[f].end(), col[i]) - edges[f].begin());
    }

    GbtModel m;
    m.n_features = x.cols;
    m.learning_rate = p.learning_rate;
    m.baseline = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    std::vector<double> pred(x.rows, m.baseline), grad(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) grad[i] = pred[i] - y[i];
    m.train_rmse.push_back(detail::rmse_of(grad));

    detail::TreeGrower grower(binned, edges, p);
    for (int it = 0; it < p.iterations; ++it) {
        RegressionTree tree = grower.grow(grad, p.learning_rate);
        if (tree.nodes.size() == 1) {
            m.degenerate = m.trees.empty() && m.train_rmse.front() > 0.0;
            break;
        }
        for (std::size_t i = 0; i < x.rows; ++i) {
            pred[i] += tree.predict(x.row(i));
            grad[i] = pred[i] - y[i];
        }
        m.trees.push_back(std::move(tree));
        m.train_rmse.push_back(detail::rmse_of(grad));
    }
    return m;
}

inline constexpr int gbt_format_version = 1;

inline nlohmann::json to_json(const GbtModel& m) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : m.trees) {
        nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(), left = nlohmann::json::array(),
                       right = nlohmann::json::array(), value = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            feature.push_back(n.feature);
            threshold.push_back(n.threshold);
            left.push_back(n.left);
            right.push_back(n.right);
            value.push_back(n.value);
        }
        trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"value", value}});
    }
    return {{"format", "gbt"},
            {"version", gbt_format_version},
            {"n_features", m.n_features},
            {"baseline", m.baseline},
            {"learning_rate", m.learning_rate},
            {"degenerate", m.degenerate},
            {"train_rmse", m.train_rmse},
            {"trees", trees}};
}

inline GbtModel gbt_from_json(const nlohmann::json& j) {
    if (j.at("format") != "gbt") throw std::runtime_error("not a gbt model");
    if (j.at("version").get<int>() != gbt_format_version)
        throw std::runtime_error("unsupported gbt model version " + j.at("version").dump());
    GbtModel m;
    m.n_features = j.at("n_features").get<std::size_t>();
    m.baseline = j.at("baseline").get<double>();
    m.learning_rate = j.at("learning_rate").get<double>();
    m.degenerate = j.at("degenerate").get<bool>();
    m.train_rmse = j.at("train_rmse").get<std::vector<double>>();
    for (const auto& t : j.at("trees")) {
        const auto feature = t.at("feature").get<std::vector<int>>();
        const auto threshold = t.at("threshold").get<std::vector<double>>();
        const auto left = t.at("left").get<std::vector<int>>();
        const auto right = t.at("right").get<std::vector<int>>();
        const auto value = t.at("value").get<std::vector<double>>();
        const std::size_t n = feature.size();
        if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n || value.size() != n)
            throw std::runtime_error("malformed gbt tree");
        RegressionTree tree;
        for (std::size_t k = 0; k < n; ++k) {
            const int self = static_cast<int>(k), size = static_cast<int>(n);
            if (feature[k] >= 0 && (feature[k] >= static_cast<int>(m.n_features) || left[k] <= self ||
                                    right[k] != left[k] + 1 || right[k] >= size))
                throw std::runtime_error("malformed gbt tree");
            tree.nodes.push_back({feature[k], left[k], right[k], threshold[k], value[k]});
        }
        m.trees.push_back(std::move(tree));
    }
    return m;
}

}  // namespace adequacy
