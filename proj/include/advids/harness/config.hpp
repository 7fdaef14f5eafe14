#pragma once

// Experiment configuration: everything a run depends on besides the seed.

#include "advids/attack.hpp"
#include "advids/defense.hpp"
#include "advids/error.hpp"
#include "advids/harness/csv.hpp"
#include "advids/harness/synthetic.hpp"
#include "advids/ml/classifier.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace advids::harness {

// Candidate hyperparameters per family; selection picks one per family.
struct ModelGrid {
    std::vector<ml::KnnParams> knn = {{3}, {5}, {7}};
    std::vector<ml::TreeParams> dt = {{4, 2, 1, 0}, {8, 2, 1, 0}, {16, 2, 1, 0}};
    std::vector<ml::ForestParams> rf = {{25, 0, 1, -1, true}, {50, 0, 1, -1, true}, {100, 0, 1, -1, true}};
    std::vector<ml::BoostParams> gbt = {
        {50, 0.1, 3, 1.0, 1e-6}, {50, 0.3, 3, 1.0, 1e-6}, {100, 0.1, 3, 1.0, 1e-6}, {100, 0.3, 3, 1.0, 1e-6}};

    std::vector<ml::Hyperparams> candidates(ml::Family f) const {
        std::vector<ml::Hyperparams> out;
        switch (f) {
        case ml::Family::KNN: out.assign(knn.begin(), knn.end()); break;
        case ml::Family::DT: out.assign(dt.begin(), dt.end()); break;
        case ml::Family::RF: out.assign(rf.begin(), rf.end()); break;
        case ml::Family::GBT: out.assign(gbt.begin(), gbt.end()); break;
        }
        return out;
    }

    void validate() const {
        if (knn.empty() || dt.empty() || rf.empty() || gbt.empty())
            throw Error(ErrorKind::InvalidConfig, "every model family needs at least one grid entry");
    }

    bool operator==(const ModelGrid&) const = default;
};

struct DatasetSource {
    enum class Kind { Synthetic, Csv };
    Kind kind = Kind::Synthetic;
    SyntheticSpec synthetic = default_synthetic_spec();
    std::string csv_path;
    ColumnMapping mapping = canonical_mapping();

    bool operator==(const DatasetSource&) const = default;
};

struct DefenseSettings {
    std::vector<FusionRule> rules = {FusionRule::Bayesian, FusionRule::DempsterShafer};
    double calibration_fraction = 0.2;
    SubDetectorParams subdetector;
    int baseline_trees = 50;

    bool operator==(const DefenseSettings&) const = default;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    DatasetSource dataset;
    ModelGrid defender_grid;
    ModelGrid attacker_grid;
    double validation_fraction = 0.2; // grid-search holdout
    AttackConfig attack;
    DefenseSettings defense;
    std::string output_dir = "advids-out";

    void validate() const {
        defender_grid.validate();
        attacker_grid.validate();
        attack.validate();
        if (!(validation_fraction > 0 && validation_fraction < 1))
            throw Error(ErrorKind::InvalidConfig, "validation_fraction must be in (0, 1)");
        if (!(defense.calibration_fraction > 0 && defense.calibration_fraction < 1))
            throw Error(ErrorKind::InvalidConfig, "calibration_fraction must be in (0, 1)");
        if (defense.rules.empty()) throw Error(ErrorKind::InvalidConfig, "at least one fusion rule is required");
        if (defense.subdetector.max_depth < 1) throw Error(ErrorKind::InvalidConfig, "sub-detector depth must be >= 1");
        if (defense.baseline_trees < 1) throw Error(ErrorKind::InvalidConfig, "baseline_trees must be >= 1");
        if (dataset.kind == DatasetSource::Kind::Csv && dataset.csv_path.empty())
            throw Error(ErrorKind::InvalidConfig, "csv dataset needs a path");
        if (dataset.kind == DatasetSource::Kind::Synthetic) dataset.synthetic.validate();
    }
};

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const ModelGrid& g) {
    auto list = [](const auto& v) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& p : v) a.push_back(ml::to_json(ml::Hyperparams(p)));
        return a;
    };
    return {{"KNN", list(g.knn)}, {"DT", list(g.dt)}, {"RF", list(g.rf)}, {"GBT", list(g.gbt)}};
}

inline ModelGrid grid_from_json(const nlohmann::json& j) {
    ModelGrid g;
    auto read = [&](const char* key, ml::Family f, auto& dst) {
        if (!j.contains(key)) return;
        using P = typename std::decay_t<decltype(dst)>::value_type;
        dst.clear();
        for (const auto& e : j.at(key)) dst.push_back(std::get<P>(ml::hyperparams_from_json(f, e)));
    };
    read("KNN", ml::Family::KNN, g.knn);
    read("DT", ml::Family::DT, g.dt);
    read("RF", ml::Family::RF, g.rf);
    read("GBT", ml::Family::GBT, g.gbt);
    return g;
}

inline nlohmann::json to_json(const AttackConfig& a) {
    return {{"c", a.c},
            {"t_max", a.t_max},
            {"mask_order", a.mask_order},
            {"target_class", a.target_class},
            {"schedule", a.schedule == StepSchedule::Linear ? "linear" : "cumulative"},
            {"project", a.project}};
}

inline AttackConfig attack_from_json(const nlohmann::json& j) {
    AttackConfig a;
    a.c = j.value("c", a.c);
    a.t_max = j.value("t_max", a.t_max);
    if (j.contains("mask_order")) a.mask_order = j.at("mask_order").get<std::array<int, 7>>();
    a.target_class = j.value("target_class", a.target_class);
    const auto sched = j.value("schedule", std::string("linear"));
    if (sched == "linear") a.schedule = StepSchedule::Linear;
    else if (sched == "cumulative") a.schedule = StepSchedule::Cumulative;
    else throw Error(ErrorKind::InvalidConfig, "unknown schedule '" + sched + "'");
    a.project = j.value("project", a.project);
    return a;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json ds;
    if (c.dataset.kind == DatasetSource::Kind::Synthetic) {
        ds = {{"kind", "synthetic"}, {"synthetic", to_json(c.dataset.synthetic)}};
    } else {
        ds = {{"kind", "csv"}, {"path", c.dataset.csv_path}, {"mapping", to_json(c.dataset.mapping)}};
    }
    nlohmann::json rules = nlohmann::json::array();
    for (auto r : c.defense.rules) rules.push_back(rule_name(r));
    return {{"seed", c.seed},
            {"dataset", ds},
            {"grids", {{"defender", to_json(c.defender_grid)}, {"attacker", to_json(c.attacker_grid)}}},
            {"validation_fraction", c.validation_fraction},
            {"attack", to_json(c.attack)},
            {"defense",
             {{"rules", rules},
              {"calibration_fraction", c.defense.calibration_fraction},
              {"subdetector_max_depth", c.defense.subdetector.max_depth},
              {"weighting", weighting_name(c.defense.subdetector.weighting)},
              {"baseline_trees", c.defense.baseline_trees}}},
            {"output_dir", c.output_dir}};
}

inline FusionRule rule_from_name(const std::string& s) {
    if (s == rule_name(FusionRule::Bayesian)) return FusionRule::Bayesian;
    if (s == rule_name(FusionRule::DempsterShafer)) return FusionRule::DempsterShafer;
    throw Error(ErrorKind::InvalidConfig, "unknown fusion rule '" + s + "'");
}

inline Weighting weighting_from_name(const std::string& s) {
    for (auto w : {Weighting::Uniform, Weighting::Label, Weighting::Provenance})
        if (weighting_name(w) == s) return w;
    throw Error(ErrorKind::InvalidConfig, "unknown weighting '" + s + "'");
}

// `base_dir` resolves relative csv and mapping paths.
inline ExperimentConfig config_from_json(const nlohmann::json& j, const std::string& base_dir = "") {
    auto resolve = [&](const std::string& p) {
        if (p.empty() || p.front() == '/' || base_dir.empty()) return p;
        return base_dir + "/" + p;
    };
    try {
        ExperimentConfig c;
        c.seed = j.value("seed", c.seed);
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            const auto kind = d.value("kind", std::string("synthetic"));
            if (kind == "synthetic") {
                c.dataset.kind = DatasetSource::Kind::Synthetic;
                if (d.contains("synthetic")) c.dataset.synthetic = synthetic_spec_from_json(d.at("synthetic"));
            } else if (kind == "csv") {
                c.dataset.kind = DatasetSource::Kind::Csv;
                c.dataset.csv_path = resolve(d.at("path").get<std::string>());
                if (d.contains("mapping")) {
                    const auto& m = d.at("mapping");
                    c.dataset.mapping = m.is_string() ? load_mapping(resolve(m.get<std::string>())) : mapping_from_json(m);
                }
            } else {
                throw Error(ErrorKind::InvalidConfig, "unknown dataset kind '" + kind + "'");
            }
        }
        if (j.contains("grids")) {
            const auto& g = j.at("grids");
            if (g.contains("defender")) c.defender_grid = grid_from_json(g.at("defender"));
            if (g.contains("attacker")) c.attacker_grid = grid_from_json(g.at("attacker"));
        }
        c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
        if (j.contains("attack")) c.attack = attack_from_json(j.at("attack"));
        if (j.contains("defense")) {
            const auto& d = j.at("defense");
            if (d.contains("rules")) {
                c.defense.rules.clear();
                for (const auto& r : d.at("rules")) c.defense.rules.push_back(rule_from_name(r.get<std::string>()));
            }
            c.defense.calibration_fraction = d.value("calibration_fraction", c.defense.calibration_fraction);
            c.defense.subdetector.max_depth = d.value("subdetector_max_depth", c.defense.subdetector.max_depth);
            if (d.contains("weighting")) c.defense.subdetector.weighting = weighting_from_name(d.at("weighting").get<std::string>());
            c.defense.baseline_trees = d.value("baseline_trees", c.defense.baseline_trees);
        }
        c.output_dir = resolve(j.value("output_dir", c.output_dir));
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("config: ") + e.what());
    }
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InvalidConfig, "cannot read config " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::InvalidConfig, "config " + path + ": " + e.what());
    }
    const auto slash = path.find_last_of('/');
    return config_from_json(j, slash == std::string::npos ? "" : path.substr(0, slash));
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Hash of the canonical JSON without output_dir, which does not affect results.
inline std::string config_hash(const ExperimentConfig& c) {
    auto j = to_json(c);
    j.erase("output_dir");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

} // namespace advids::harness
