#pragma once

#include "advids/error.hpp"
#include "advids/ml/models.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace advids::ml {

enum class Family { KNN, DT, RF, GBT };

inline constexpr std::array<Family, 4> kFamilies = {Family::KNN, Family::RF, Family::DT, Family::GBT};

constexpr std::string_view family_name(Family f) {
    switch (f) {
    case Family::KNN: return "KNN";
    case Family::DT: return "DT";
    case Family::RF: return "RF";
    case Family::GBT: return "GBT";
    }
    return "?";
}

inline std::optional<Family> family_from_name(std::string_view s) {
    for (auto f : {Family::KNN, Family::DT, Family::RF, Family::GBT})
        if (family_name(f) == s) return f;
    return std::nullopt;
}

using Hyperparams = std::variant<KnnParams, TreeParams, ForestParams, BoostParams>;

inline Family family_of(const Hyperparams& hp) {
    return std::visit(
        [](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, KnnParams>) return Family::KNN;
            else if constexpr (std::is_same_v<P, TreeParams>) return Family::DT;
            else if constexpr (std::is_same_v<P, ForestParams>) return Family::RF;
            else return Family::GBT;
        },
        hp);
}

class Classifier {
public:
    using Model = std::variant<KnnModel, DecisionTreeModel, RandomForestModel, GradientBoostingModel>;

    Classifier() = default;
    Classifier(Model m, Hyperparams hp) : model_(std::move(m)), params_(hp) {}

    Family family() const { return family_of(params_); }
    const Hyperparams& hyperparams() const { return params_; }
    const Model& model() const { return model_; }

    std::size_t n_features() const {
        return std::visit([](const auto& m) { return m.n_features(); }, model_);
    }
    int n_classes() const {
        return std::visit([](const auto& m) { return m.n_classes(); }, model_);
    }

    std::vector<double> predict_proba(std::span<const double> x) const {
        return std::visit([&](const auto& m) { return m.predict_proba(x); }, model_);
    }

    // Argmax of predict_proba, ties to the lowest class index.
    int predict(std::span<const double> x) const {
        auto p = predict_proba(x);
        return argmax_lowest(p);
    }

    bool operator==(const Classifier&) const = default;

private:
    Model model_;
    Hyperparams params_;
};

inline Classifier train(const Hyperparams& hp, const TrainingData& data, std::uint64_t seed) {
    return std::visit(
        [&](const auto& p) -> Classifier {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, KnnParams>) return {KnnModel::fit(p, data), hp};
            else if constexpr (std::is_same_v<P, TreeParams>) return {DecisionTreeModel::fit(p, data, seed), hp};
            else if constexpr (std::is_same_v<P, ForestParams>) return {RandomForestModel::fit(p, data, seed), hp};
            else return {GradientBoostingModel::fit(p, data, seed), hp};
        },
        hp);
}

inline Classifier train(const Hyperparams& hp, std::span<const EncodedInstance> data, std::uint64_t seed,
                        int n_classes = 0) {
    return train(hp, TrainingData::from(data, n_classes), seed);
}

// ---------------------------------------------------------------------------
// Serialization: versioned JSON, exact round trip (doubles are written with
// enough digits to reproduce every bit).

inline constexpr const char* kModelFormat = "advids-model";
inline constexpr int kModelVersion = 1;

using nlohmann::json;

inline json to_json(const Hyperparams& hp) {
    return std::visit(
        [](const auto& p) -> json {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, KnnParams>) return {{"k", p.k}};
            else if constexpr (std::is_same_v<P, TreeParams>)
                return {{"max_depth", p.max_depth},
                        {"min_samples_split", p.min_samples_split},
                        {"min_samples_leaf", p.min_samples_leaf},
                        {"max_features", p.max_features}};
            else if constexpr (std::is_same_v<P, ForestParams>)
                return {{"n_trees", p.n_trees},
                        {"max_depth", p.max_depth},
                        {"min_samples_leaf", p.min_samples_leaf},
                        {"max_features", p.max_features},
                        {"bootstrap", p.bootstrap}};
            else
                return {{"rounds", p.rounds},
                        {"learning_rate", p.learning_rate},
                        {"max_depth", p.max_depth},
                        {"lambda", p.lambda},
                        {"min_child_weight", p.min_child_weight}};
        },
        hp);
}

inline Hyperparams hyperparams_from_json(Family f, const json& j) {
    switch (f) {
    case Family::KNN: return KnnParams{j.value("k", 5)};
    case Family::DT: {
        TreeParams p;
        p.max_depth = j.value("max_depth", p.max_depth);
        p.min_samples_split = j.value("min_samples_split", p.min_samples_split);
        p.min_samples_leaf = j.value("min_samples_leaf", p.min_samples_leaf);
        p.max_features = j.value("max_features", p.max_features);
        return p;
    }
    case Family::RF: {
        ForestParams p;
        p.n_trees = j.value("n_trees", p.n_trees);
        p.max_depth = j.value("max_depth", p.max_depth);
        p.min_samples_leaf = j.value("min_samples_leaf", p.min_samples_leaf);
        p.max_features = j.value("max_features", p.max_features);
        p.bootstrap = j.value("bootstrap", p.bootstrap);
        return p;
    }
    case Family::GBT: {
        BoostParams p;
        p.rounds = j.value("rounds", p.rounds);
        p.learning_rate = j.value("learning_rate", p.learning_rate);
        p.max_depth = j.value("max_depth", p.max_depth);
        p.lambda = j.value("lambda", p.lambda);
        p.min_child_weight = j.value("min_child_weight", p.min_child_weight);
        return p;
    }
    }
    throw Error(ErrorKind::InvalidHyperparams, "unknown family");
}

inline json to_json(const Tree& t) {
    json nodes = json::array();
    for (const auto& n : t.nodes())
        nodes.push_back(n.is_leaf() ? json{{"value", n.value}}
                                    : json{{"f", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}});
    return nodes;
}

inline Tree tree_from_json(const json& j) {
    std::vector<TreeNode> nodes;
    for (const auto& n : j) {
        TreeNode t;
        if (n.contains("value")) {
            t.value = n.at("value").get<std::vector<double>>();
        } else {
            t.feature = n.at("f").get<int>();
            t.threshold = n.at("t").get<double>();
            t.left = n.at("l").get<int>();
            t.right = n.at("r").get<int>();
        }
        nodes.push_back(std::move(t));
    }
    return Tree(std::move(nodes));
}

inline json to_json(const Classifier& c) {
    json j = {{"format", kModelFormat},
              {"version", kModelVersion},
              {"family", family_name(c.family())},
              {"n_features", c.n_features()},
              {"n_classes", c.n_classes()},
              {"params", to_json(c.hyperparams())}};
    std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, KnnModel>) {
                j["state"] = {{"points", m.points()}, {"labels", m.labels()}};
            } else if constexpr (std::is_same_v<M, DecisionTreeModel>) {
                j["state"] = {{"tree", to_json(m.tree())}};
            } else if constexpr (std::is_same_v<M, RandomForestModel>) {
                json ts = json::array();
                for (const auto& t : m.trees()) ts.push_back(to_json(t));
                j["state"] = {{"trees", ts}};
            } else {
                json ts = json::array();
                for (const auto& t : m.trees()) ts.push_back(to_json(t));
                j["state"] = {{"base", m.base_scores()}, {"learning_rate", m.learning_rate()}, {"trees", ts}};
            }
        },
        c.model());
    return j;
}

inline Classifier classifier_from_json(const json& j) {
    if (j.value("format", "") != kModelFormat) throw Error(ErrorKind::InvalidConfig, "not an advids model file");
    if (j.value("version", 0) != kModelVersion)
        throw Error(ErrorKind::InvalidConfig, "unsupported model version " + std::to_string(j.value("version", 0)));
    auto fam = family_from_name(j.at("family").get<std::string>());
    if (!fam) throw Error(ErrorKind::InvalidConfig, "unknown model family");
    const auto hp = hyperparams_from_json(*fam, j.at("params"));
    const auto cols = j.at("n_features").get<std::size_t>();
    const int k = j.at("n_classes").get<int>();
    const auto& s = j.at("state");
    switch (*fam) {
    case Family::KNN:
        return {KnnModel(std::get<KnnParams>(hp), s.at("points").get<std::vector<double>>(),
                         s.at("labels").get<std::vector<int>>(), cols, k),
                hp};
    case Family::DT: return {DecisionTreeModel(tree_from_json(s.at("tree")), cols, k), hp};
    case Family::RF: {
        std::vector<Tree> ts;
        for (const auto& t : s.at("trees")) ts.push_back(tree_from_json(t));
        return {RandomForestModel(std::move(ts), cols, k), hp};
    }
    case Family::GBT: {
        std::vector<Tree> ts;
        for (const auto& t : s.at("trees")) ts.push_back(tree_from_json(t));
        return {GradientBoostingModel(s.at("base").get<std::vector<double>>(), std::move(ts),
                                      s.at("learning_rate").get<double>(), cols),
                hp};
    }
    }
    throw Error(ErrorKind::InvalidConfig, "unknown model family");
}

inline void save_model(const Classifier& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path);
    out << to_json(c).dump() << '\n';
}

inline Classifier load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::UnreadableFile, "cannot read " + path);
    return classifier_from_json(json::parse(in));
}

} // namespace advids::ml
