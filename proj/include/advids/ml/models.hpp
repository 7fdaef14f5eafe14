#pragma once

// The four classifier families used as NIDS and as attacker substitutes:
// k-nearest neighbours, decision tree, random forest and gradient-boosted
// trees with softmax loss.

#include "advids/error.hpp"
#include "advids/ml/tree.hpp"
#include "advids/preprocessing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace advids::ml {

// Flattened training data shared by every family.
struct TrainingData {
    std::vector<double> x;
    std::vector<int> y;
    std::size_t rows = 0;
    std::size_t cols = 0;
    int n_classes = 0;

    Matrix matrix() const { return {x, rows, cols}; }

    static TrainingData from(std::span<const EncodedInstance> data, int n_classes = 0) {
        if (data.empty()) throw Error(ErrorKind::DegenerateData, "training set is empty");
        TrainingData t;
        t.rows = data.size();
        t.cols = data.front().x.size();
        t.x.reserve(t.rows * t.cols);
        int max_label = -1;
        for (const auto& e : data) {
            if (e.x.size() != t.cols) throw Error(ErrorKind::DimensionMismatch, "ragged training instances");
            if (e.label < 0) throw Error(ErrorKind::DegenerateData, "negative class label");
            t.x.insert(t.x.end(), e.x.begin(), e.x.end());
            t.y.push_back(e.label);
            max_label = std::max(max_label, e.label);
        }
        t.n_classes = std::max(n_classes, max_label + 1);
        std::vector<char> present(static_cast<std::size_t>(t.n_classes), 0);
        for (int y : t.y) present[static_cast<std::size_t>(y)] = 1;
        if (std::count(present.begin(), present.end(), 1) < 2)
            throw Error(ErrorKind::DegenerateData, "training set contains a single class");
        return t;
    }
};

inline int argmax_lowest(std::span<const double> p) {
    int best = 0;
    for (std::size_t k = 1; k < p.size(); ++k)
        if (p[k] > p[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
    return best;
}

inline void check_dim(std::span<const double> x, std::size_t expected) {
    if (x.size() != expected)
        throw Error(ErrorKind::DimensionMismatch,
                    "expected " + std::to_string(expected) + " features, got " + std::to_string(x.size()));
}

// ---------------------------------------------------------------------------

struct KnnParams {
    int k = 5;
    bool operator==(const KnnParams&) const = default;
};

class KnnModel {
public:
    KnnModel() = default;
    KnnModel(KnnParams p, std::vector<double> x, std::vector<int> y, std::size_t cols, int n_classes)
        : params_(p), x_(std::move(x)), y_(std::move(y)), cols_(cols), n_classes_(n_classes) {}

    static KnnModel fit(const KnnParams& p, const TrainingData& d) {
        if (p.k < 1) throw Error(ErrorKind::InvalidHyperparams, "knn k must be >= 1");
        return KnnModel(p, d.x, d.y, d.cols, d.n_classes);
    }

    // Euclidean distance; equal distances resolve to the earlier training row.
    std::vector<double> predict_proba(std::span<const double> q) const {
        check_dim(q, cols_);
        const std::size_t n = y_.size();
        std::vector<std::pair<double, std::size_t>> dist(n);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0;
            const double* row = &x_[i * cols_];
            for (std::size_t j = 0; j < cols_; ++j) {
                double d = row[j] - q[j];
                s += d * d;
            }
            dist[i] = {s, i};
        }
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(params_.k), n);
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        std::vector<double> p(static_cast<std::size_t>(n_classes_), 0.0);
        for (std::size_t i = 0; i < k; ++i) p[static_cast<std::size_t>(y_[dist[i].second])] += 1.0;
        for (auto& v : p) v /= static_cast<double>(k);
        return p;
    }

    const KnnParams& params() const { return params_; }
    const std::vector<double>& points() const { return x_; }
    const std::vector<int>& labels() const { return y_; }
    std::size_t n_features() const { return cols_; }
    int n_classes() const { return n_classes_; }
    bool operator==(const KnnModel&) const = default;

private:
    KnnParams params_;
    std::vector<double> x_;
    std::vector<int> y_;
    std::size_t cols_ = 0;
    int n_classes_ = 0;
};

// ---------------------------------------------------------------------------

struct TreeParams {
    int max_depth = 8;
    int min_samples_split = 2;
    int min_samples_leaf = 1;
    int max_features = 0; // 0 = all
    bool operator==(const TreeParams&) const = default;
};

class DecisionTreeModel {
public:
    DecisionTreeModel() = default;
    DecisionTreeModel(Tree t, std::size_t cols, int n_classes) : tree_(std::move(t)), cols_(cols), n_classes_(n_classes) {}

    static DecisionTreeModel fit(const TreeParams& p, const TrainingData& d, std::uint64_t seed,
                                 std::span<const double> sample_weights = {}) {
        if (p.max_depth < 0 || p.min_samples_leaf < 1 || p.max_features < 0)
            throw Error(ErrorKind::InvalidHyperparams, "invalid decision tree parameters");
        std::vector<double> w(d.rows, 1.0);
        if (!sample_weights.empty()) {
            if (sample_weights.size() != d.rows) throw Error(ErrorKind::DimensionMismatch, "sample weight count");
            w.assign(sample_weights.begin(), sample_weights.end());
        }
        std::vector<std::size_t> rows(d.rows);
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        GiniCriterion crit(d.y, w, d.n_classes);
        GrowParams gp{p.max_depth, p.min_samples_split, p.min_samples_leaf, p.max_features};
        TreeBuilder<GiniCriterion> b(d.matrix(), crit, gp, seed);
        return DecisionTreeModel(b.build(rows), d.cols, d.n_classes);
    }

    std::vector<double> predict_proba(std::span<const double> x) const {
        check_dim(x, cols_);
        return tree_.leaf_value(x);
    }

    const Tree& tree() const { return tree_; }
    std::size_t n_features() const { return cols_; }
    int n_classes() const { return n_classes_; }
    bool operator==(const DecisionTreeModel&) const = default;

private:
    Tree tree_;
    std::size_t cols_ = 0;
    int n_classes_ = 0;
};

// ---------------------------------------------------------------------------

struct ForestParams {
    int n_trees = 50;
    int max_depth = 0;
    int min_samples_leaf = 1;
    int max_features = -1; // -1 = sqrt(d), 0 = all
    bool bootstrap = true;
    bool operator==(const ForestParams&) const = default;
};

inline std::uint64_t tree_seed(std::uint64_t seed, std::size_t i) {
    return seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(i);
}

class RandomForestModel {
public:
    RandomForestModel() = default;
    RandomForestModel(std::vector<Tree> trees, std::size_t cols, int n_classes)
        : trees_(std::move(trees)), cols_(cols), n_classes_(n_classes) {}

    static RandomForestModel fit(const ForestParams& p, const TrainingData& d, std::uint64_t seed,
                                 std::span<const double> sample_weights = {}) {
        if (p.n_trees < 1 || p.max_depth < 0 || p.min_samples_leaf < 1 || p.max_features < -1)
            throw Error(ErrorKind::InvalidHyperparams, "invalid random forest parameters");
        int mf = p.max_features;
        if (mf == -1) mf = std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(d.cols)))));
        GrowParams gp{p.max_depth, 2, p.min_samples_leaf, mf};

        std::vector<double> base(d.rows, 1.0);
        if (!sample_weights.empty()) base.assign(sample_weights.begin(), sample_weights.end());

        std::vector<Tree> trees;
        trees.reserve(static_cast<std::size_t>(p.n_trees));
        for (int t = 0; t < p.n_trees; ++t) {
            const auto s = tree_seed(seed, static_cast<std::size_t>(t));
            std::vector<double> w = base;
            std::vector<std::size_t> rows;
            if (p.bootstrap) {
                // Bootstrap multiplicities become sample weights.
                std::mt19937_64 rng(s);
                std::uniform_int_distribution<std::size_t> pick(0, d.rows - 1);
                std::vector<int> mult(d.rows, 0);
                for (std::size_t i = 0; i < d.rows; ++i) ++mult[pick(rng)];
                for (std::size_t i = 0; i < d.rows; ++i) {
                    w[i] *= mult[i];
                    if (mult[i] > 0) rows.push_back(i);
                }
            } else {
                rows.resize(d.rows);
                std::iota(rows.begin(), rows.end(), std::size_t{0});
            }
            GiniCriterion crit(d.y, w, d.n_classes);
            TreeBuilder<GiniCriterion> b(d.matrix(), crit, gp, s);
            trees.push_back(b.build(rows));
        }
        return RandomForestModel(std::move(trees), d.cols, d.n_classes);
    }

    std::vector<double> predict_proba(std::span<const double> x) const {
        check_dim(x, cols_);
        std::vector<double> p(static_cast<std::size_t>(n_classes_), 0.0);
        for (const auto& t : trees_) {
            const auto& v = t.leaf_value(x);
            for (std::size_t k = 0; k < p.size(); ++k) p[k] += v[k];
        }
        for (auto& v : p) v /= static_cast<double>(trees_.size());
        return p;
    }

    const std::vector<Tree>& trees() const { return trees_; }
    std::size_t n_features() const { return cols_; }
    int n_classes() const { return n_classes_; }
    bool operator==(const RandomForestModel&) const = default;

private:
    std::vector<Tree> trees_;
    std::size_t cols_ = 0;
    int n_classes_ = 0;
};

// ---------------------------------------------------------------------------
// Gradient-boosted trees, softmax loss, Newton leaf values -G/(H + lambda).

struct BoostParams {
    int rounds = 100;
    double learning_rate = 0.1;
    int max_depth = 3;
    double lambda = 1.0;
    double min_child_weight = 1e-6;
    bool operator==(const BoostParams&) const = default;
};

class GradientBoostingModel {
public:
    GradientBoostingModel() = default;
    GradientBoostingModel(std::vector<double> base, std::vector<Tree> trees, double lr, std::size_t cols)
        : base_(std::move(base)), trees_(std::move(trees)), learning_rate_(lr), cols_(cols) {}

    static GradientBoostingModel fit(const BoostParams& p, const TrainingData& d, std::uint64_t seed) {
        if (p.rounds < 0 || !(p.learning_rate >= 0) || p.max_depth < 1 || !(p.lambda >= 0))
            throw Error(ErrorKind::InvalidHyperparams, "invalid boosting parameters");
        const auto k = static_cast<std::size_t>(d.n_classes);
        const std::size_t n = d.rows;

        std::vector<double> prior(k, 0.0);
        for (int y : d.y) prior[static_cast<std::size_t>(y)] += 1.0;
        std::vector<double> base(k);
        for (std::size_t c = 0; c < k; ++c) base[c] = std::log(std::max(prior[c] / static_cast<double>(n), 1e-12));

        std::vector<double> f(n * k);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < k; ++c) f[i * k + c] = base[c];

        std::vector<std::size_t> rows(n);
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        std::vector<Tree> trees;
        trees.reserve(static_cast<std::size_t>(p.rounds) * k);
        std::vector<double> prob(n * k), g(n), h(n);
        GrowParams gp{p.max_depth, 2, 1, 0};

        for (int r = 0; r < p.rounds; ++r) {
            for (std::size_t i = 0; i < n; ++i) softmax(std::span<const double>(&f[i * k], k), std::span<double>(&prob[i * k], k));
            for (std::size_t c = 0; c < k; ++c) {
                for (std::size_t i = 0; i < n; ++i) {
                    double pc = prob[i * k + c];
                    g[i] = pc - (static_cast<std::size_t>(d.y[i]) == c ? 1.0 : 0.0);
                    h[i] = std::max(pc * (1.0 - pc), 1e-16);
                }
                GradientCriterion crit(g, h, p.lambda, p.min_child_weight);
                TreeBuilder<GradientCriterion> b(d.matrix(), crit, gp, tree_seed(seed, static_cast<std::size_t>(r) * k + c));
                Tree t = b.build(rows);
                for (std::size_t i = 0; i < n; ++i) f[i * k + c] += p.learning_rate * t.leaf_value(d.matrix().row(i))[0];
                trees.push_back(std::move(t));
            }
        }
        return GradientBoostingModel(std::move(base), std::move(trees), p.learning_rate, d.cols);
    }

    std::vector<double> raw_scores(std::span<const double> x) const {
        check_dim(x, cols_);
        const std::size_t k = base_.size();
        std::vector<double> f = base_;
        for (std::size_t t = 0; t < trees_.size(); ++t) f[t % k] += learning_rate_ * trees_[t].leaf_value(x)[0];
        return f;
    }

    std::vector<double> predict_proba(std::span<const double> x) const {
        auto f = raw_scores(x);
        std::vector<double> p(f.size());
        softmax(f, p);
        return p;
    }

    static void softmax(std::span<const double> f, std::span<double> out) {
        double m = *std::max_element(f.begin(), f.end());
        double s = 0;
        for (std::size_t c = 0; c < f.size(); ++c) s += out[c] = std::exp(f[c] - m);
        for (auto& v : out) v /= s;
    }

    const std::vector<double>& base_scores() const { return base_; }
    const std::vector<Tree>& trees() const { return trees_; }
    double learning_rate() const { return learning_rate_; }
    std::size_t n_features() const { return cols_; }
    int n_classes() const { return static_cast<int>(base_.size()); }
    bool operator==(const GradientBoostingModel&) const = default;

private:
    std::vector<double> base_;
    std::vector<Tree> trees_; // round-major, one tree per class per round
    double learning_rate_ = 0;
    std::size_t cols_ = 0;
};

} // namespace advids::ml
