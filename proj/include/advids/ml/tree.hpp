#pragma once

// Binary decision trees with exact (presorted) split search.
//
// One builder serves two criteria: weighted Gini for classification trees
// and the second-order gradient gain used by the boosted ensemble. Each
// criterion supplies an accumulator and a node score; a split's gain is
// score(left) + score(right) - score(parent).

#include "advids/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace advids::ml {

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0;
    int left = -1;
    int right = -1;
    std::vector<double> value;

    bool is_leaf() const { return feature < 0; }
    bool operator==(const TreeNode&) const = default;
};

class Tree {
public:
    Tree() = default;
    explicit Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

    const std::vector<double>& leaf_value(std::span<const double> x) const {
        int i = 0;
        while (!nodes_[static_cast<std::size_t>(i)].is_leaf()) {
            const auto& n = nodes_[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes_[static_cast<std::size_t>(i)].value;
    }

    const std::vector<TreeNode>& nodes() const { return nodes_; }
    std::size_t depth() const { return depth_from(0); }

    bool operator==(const Tree&) const = default;

private:
    std::size_t depth_from(int i) const {
        const auto& n = nodes_[static_cast<std::size_t>(i)];
        if (n.is_leaf()) return 0;
        return 1 + std::max(depth_from(n.left), depth_from(n.right));
    }

    std::vector<TreeNode> nodes_;
};

// Row-major feature matrix view.
struct Matrix {
    std::span<const double> data;
    std::size_t rows = 0;
    std::size_t cols = 0;

    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return data.subspan(r * cols, cols); }
};

struct GrowParams {
    int max_depth = 0;          // 0 = unlimited
    int min_samples_split = 2;
    int min_samples_leaf = 1;
    int max_features = 0;       // features examined per node, 0 = all
};

// ---------------------------------------------------------------------------
// Criteria

class GiniCriterion {
public:
    struct Acc {
        std::vector<double> counts;
        double weight = 0;
        std::size_t n = 0;
    };

    GiniCriterion(std::span<const int> labels, std::span<const double> weights, int n_classes)
        : labels_(labels), weights_(weights), k_(n_classes) {}

    Acc zero() const { return {std::vector<double>(static_cast<std::size_t>(k_), 0.0), 0.0, 0}; }

    void add(Acc& a, std::size_t row) const {
        a.counts[static_cast<std::size_t>(labels_[row])] += weights_[row];
        a.weight += weights_[row];
        ++a.n;
    }

    Acc minus(const Acc& total, const Acc& part) const {
        Acc r = total;
        for (std::size_t k = 0; k < r.counts.size(); ++k) r.counts[k] -= part.counts[k];
        r.weight -= part.weight;
        r.n -= part.n;
        return r;
    }

    // Sum of squared class weights over node weight; impurity decrease is
    // the change in this quantity.
    double score(const Acc& a) const {
        if (a.weight <= 0) return 0;
        double s = 0;
        for (double c : a.counts) s += c * c;
        return s / a.weight;
    }

    bool is_pure(const Acc& a) const {
        int nonzero = 0;
        for (double c : a.counts) nonzero += c > 0;
        return nonzero <= 1;
    }

    bool admissible(const Acc& l, const Acc& r, const GrowParams& p) const {
        return l.n >= static_cast<std::size_t>(p.min_samples_leaf) &&
               r.n >= static_cast<std::size_t>(p.min_samples_leaf) && l.weight > 0 && r.weight > 0;
    }

    std::vector<double> leaf_value(const Acc& a) const {
        std::vector<double> v(a.counts.size(), 0.0);
        if (a.weight > 0)
            for (std::size_t k = 0; k < v.size(); ++k) v[k] = a.counts[k] / a.weight;
        return v;
    }

private:
    std::span<const int> labels_;
    std::span<const double> weights_;
    int k_;
};

class GradientCriterion {
public:
    struct Acc {
        double g = 0;
        double h = 0;
        std::size_t n = 0;
    };

    GradientCriterion(std::span<const double> grad, std::span<const double> hess, double lambda,
                      double min_child_weight)
        : grad_(grad), hess_(hess), lambda_(lambda), min_child_weight_(min_child_weight) {}

    Acc zero() const { return {}; }
    void add(Acc& a, std::size_t row) const {
        a.g += grad_[row];
        a.h += hess_[row];
        ++a.n;
    }
    Acc minus(const Acc& t, const Acc& p) const { return {t.g - p.g, t.h - p.h, t.n - p.n}; }
    double score(const Acc& a) const { return a.g * a.g / (a.h + lambda_); }
    bool is_pure(const Acc&) const { return false; }
    bool admissible(const Acc& l, const Acc& r, const GrowParams& p) const {
        return l.h >= min_child_weight_ && r.h >= min_child_weight_ &&
               l.n >= static_cast<std::size_t>(p.min_samples_leaf) &&
               r.n >= static_cast<std::size_t>(p.min_samples_leaf);
    }
    std::vector<double> leaf_value(const Acc& a) const { return {-a.g / (a.h + lambda_)}; }

private:
    std::span<const double> grad_;
    std::span<const double> hess_;
    double lambda_;
    double min_child_weight_;
};

// ---------------------------------------------------------------------------
// Builder

template <class Criterion>
class TreeBuilder {
public:
    TreeBuilder(Matrix x, const Criterion& crit, GrowParams params, std::uint64_t seed)
        : x_(x), crit_(crit), params_(params), rng_(seed) {}

    // rows: distinct row indices taking part in this tree.
    Tree build(std::span<const std::size_t> rows) {
        const std::size_t d = x_.cols;
        n_ = rows.size();
        order_.assign(d, {});
        for (std::size_t f = 0; f < d; ++f) {
            auto& o = order_[f];
            o.assign(rows.begin(), rows.end());
            std::stable_sort(o.begin(), o.end(),
                             [&](std::size_t a, std::size_t b) { return x_.at(a, f) < x_.at(b, f); });
        }
        goes_left_.assign(x_.rows, 0);
        scratch_.resize(n_);
        features_.resize(d);
        std::iota(features_.begin(), features_.end(), std::size_t{0});
        nodes_.clear();
        grow(0, n_, 0);
        return Tree(std::move(nodes_));
    }

private:
    int grow(std::size_t begin, std::size_t end, int depth) {
        const int id = static_cast<int>(nodes_.size());
        nodes_.emplace_back();

        auto total = crit_.zero();
        for (std::size_t i = begin; i < end; ++i) crit_.add(total, order_[0][i]);

        const std::size_t n = end - begin;
        bool stop = crit_.is_pure(total) || n < static_cast<std::size_t>(std::max(2, params_.min_samples_split)) ||
                    (params_.max_depth > 0 && depth >= params_.max_depth);

        int best_f = -1;
        double best_thr = 0;
        std::size_t best_pos = 0;
        if (!stop) {
            const double parent = crit_.score(total);
            double best_gain = 1e-12 * std::max(1.0, std::abs(parent));
            for (std::size_t f : candidate_features()) {
                const auto& o = order_[f];
                auto left = crit_.zero();
                for (std::size_t i = begin; i + 1 < end; ++i) {
                    crit_.add(left, o[i]);
                    const double v = x_.at(o[i], f);
                    const double next = x_.at(o[i + 1], f);
                    if (!(v < next)) continue;
                    auto right = crit_.minus(total, left);
                    if (!crit_.admissible(left, right, params_)) continue;
                    double gain = crit_.score(left) + crit_.score(right) - parent;
                    if (gain > best_gain) {
                        best_gain = gain;
                        best_f = static_cast<int>(f);
                        best_thr = v + (next - v) / 2;
                        best_pos = i + 1;
                    }
                }
            }
        }

        if (best_f < 0) {
            nodes_[static_cast<std::size_t>(id)].value = crit_.leaf_value(total);
            return id;
        }

        const auto& split_order = order_[static_cast<std::size_t>(best_f)];
        for (std::size_t i = begin; i < end; ++i) goes_left_[split_order[i]] = i < best_pos;
        for (auto& o : order_) stable_partition_range(o, begin, end);

        const std::size_t mid = best_pos;
        int l = grow(begin, mid, depth + 1);
        int r = grow(mid, end, depth + 1);
        auto& node = nodes_[static_cast<std::size_t>(id)];
        node.feature = best_f;
        node.threshold = best_thr;
        node.left = l;
        node.right = r;
        return id;
    }

    void stable_partition_range(std::vector<std::size_t>& o, std::size_t begin, std::size_t end) {
        std::size_t w = begin, s = 0;
        for (std::size_t i = begin; i < end; ++i) {
            if (goes_left_[o[i]])
                o[w++] = o[i];
            else
                scratch_[s++] = o[i];
        }
        std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(s), o.begin() + static_cast<std::ptrdiff_t>(w));
    }

    std::span<const std::size_t> candidate_features() {
        const std::size_t d = features_.size();
        std::size_t m = params_.max_features > 0 ? std::min<std::size_t>(static_cast<std::size_t>(params_.max_features), d) : d;
        if (m == d) {
            std::iota(features_.begin(), features_.end(), std::size_t{0});
            return features_;
        }
        // Partial Fisher-Yates, then ascending order for deterministic tie-breaks.
        std::iota(features_.begin(), features_.end(), std::size_t{0});
        for (std::size_t i = 0; i < m; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, d - 1);
            std::swap(features_[i], features_[pick(rng_)]);
        }
        std::sort(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(m));
        return std::span<const std::size_t>(features_).first(m);
    }

    Matrix x_;
    const Criterion& crit_;
    GrowParams params_;
    std::mt19937_64 rng_;
    std::size_t n_ = 0;
    std::vector<std::vector<std::size_t>> order_;
    std::vector<char> goes_left_;
    std::vector<std::size_t> scratch_;
    std::vector<std::size_t> features_;
    std::vector<TreeNode> nodes_;
};

} // namespace advids::ml
