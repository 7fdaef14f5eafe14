#pragma once

// Adversarial-traffic filter placed in front of the NIDS.
//
// Thirteen one-feature sub-detectors each estimate P(adversarial) for a
// flow. Their outputs are weighted by normalized validation recall and
// fused either by the weighted opinion pool
//
//     P_a = sum_i w_i P_ai / (sum_i w_i P_ai + sum_i w_i P_ci)
//
// or by Dempster's rule over {adversarial, clean} after discounting each
// source by its weight (mass w*P on singletons, 1 - w on the full frame),
// followed by the pignistic transform.

#include "advids/attack.hpp"
#include "advids/error.hpp"
#include "advids/flow.hpp"
#include "advids/ml/classifier.hpp"
#include "advids/preprocessing.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace advids {

// ---------------------------------------------------------------------------
// Evidence

struct MassFunction {
    double adversarial = 0;
    double clean = 0;
    double omega = 1;

    static constexpr MassFunction vacuous() { return {0, 0, 1}; }
    double total() const { return adversarial + clean + omega; }
    bool operator==(const MassFunction&) const = default;
};

inline MassFunction discount(double p_adv, double p_clean, double w) {
    return {w * p_adv, w * p_clean, 1.0 - w};
}

inline MassFunction ds_combine(const MassFunction& m1, const MassFunction& m2) {
    const double conflict = m1.adversarial * m2.clean + m1.clean * m2.adversarial;
    if (conflict >= 1.0) throw Error(ErrorKind::TotalConflict, "sources are in total conflict");
    const double a = m1.adversarial * m2.adversarial + m1.adversarial * m2.omega + m1.omega * m2.adversarial;
    const double c = m1.clean * m2.clean + m1.clean * m2.omega + m1.omega * m2.clean;
    const double o = m1.omega * m2.omega;
    const double k = 1.0 / (1.0 - conflict);
    return {a * k, c * k, o * k};
}

// Divided by the total so rounding in long folds cannot tip symmetric
// evidence past 0.5.
inline double pignistic_adversarial(const MassFunction& m) { return (m.adversarial + m.omega / 2) / m.total(); }

enum class FusionRule { Bayesian, DempsterShafer };

constexpr std::string_view rule_name(FusionRule r) {
    return r == FusionRule::Bayesian ? "bayesian" : "dempster";
}

enum class DefenseLabel { Clean = 0, Adversarial = 1 };

struct DetectorOutput {
    double p_adv = 0;
    double p_clean = 0;
};

struct FusionVerdict {
    double p_adv = 0;
    double p_clean = 0;
    DefenseLabel decision = DefenseLabel::Clean;
    FusionRule rule = FusionRule::Bayesian;
};

// Ties at 0.5 go to clean.
inline DefenseLabel decide(double p_adv) { return p_adv > 0.5 ? DefenseLabel::Adversarial : DefenseLabel::Clean; }

inline FusionVerdict fuse_bayesian(std::span<const DetectorOutput> outs, std::span<const double> w) {
    if (outs.size() != w.size()) throw Error(ErrorKind::DimensionMismatch, "detector/weight count");
    double sa = 0, sc = 0;
    for (std::size_t i = 0; i < outs.size(); ++i) {
        sa += outs[i].p_adv * w[i];
        sc += outs[i].p_clean * w[i];
    }
    const double den = sa + sc;
    if (!(den > 0)) throw Error(ErrorKind::DegenerateDenominator, "all weighted probabilities are zero");
    FusionVerdict v;
    v.p_adv = sa / den;
    v.p_clean = sc / den;
    v.decision = decide(v.p_adv);
    v.rule = FusionRule::Bayesian;
    return v;
}

inline MassFunction fold_masses(std::span<const MassFunction> masses) {
    if (masses.empty()) return MassFunction::vacuous();
    MassFunction acc = masses.front();
    for (std::size_t i = 1; i < masses.size(); ++i) acc = ds_combine(acc, masses[i]);
    return acc;
}

inline FusionVerdict fuse_dempster(std::span<const DetectorOutput> outs, std::span<const double> w) {
    if (outs.size() != w.size()) throw Error(ErrorKind::DimensionMismatch, "detector/weight count");
    std::vector<MassFunction> masses;
    masses.reserve(outs.size());
    for (std::size_t i = 0; i < outs.size(); ++i) masses.push_back(discount(outs[i].p_adv, outs[i].p_clean, w[i]));
    const MassFunction m = fold_masses(masses);
    FusionVerdict v;
    v.p_adv = pignistic_adversarial(m);
    v.p_clean = 1.0 - v.p_adv;
    v.decision = decide(v.p_adv);
    v.rule = FusionRule::DempsterShafer;
    return v;
}

inline FusionVerdict fuse(FusionRule rule, std::span<const DetectorOutput> outs, std::span<const double> w) {
    return rule == FusionRule::Bayesian ? fuse_bayesian(outs, w) : fuse_dempster(outs, w);
}

// r_i / sum r_j, or uniform when every recall is zero.
inline std::vector<double> normalize_recalls(std::span<const double> recalls) {
    const double s = std::accumulate(recalls.begin(), recalls.end(), 0.0);
    std::vector<double> w(recalls.size());
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = s > 0 ? recalls[i] / s : 1.0 / static_cast<double>(recalls.size());
    return w;
}

// ---------------------------------------------------------------------------
// Defense dataset

enum class Provenance { BenignClean, MaliciousClean, D2tcAdversarial };

constexpr std::string_view provenance_name(Provenance p) {
    switch (p) {
    case Provenance::BenignClean: return "benign-clean";
    case Provenance::MaliciousClean: return "malicious-clean";
    case Provenance::D2tcAdversarial: return "d2tc-adversarial";
    }
    return "?";
}

struct DefenseInstance {
    FlowRecord flow;
    DefenseLabel label = DefenseLabel::Clean;
    Provenance provenance = Provenance::BenignClean;
};

struct DefenseDataset {
    std::vector<DefenseInstance> instances;

    std::size_t count(DefenseLabel l) const {
        return static_cast<std::size_t>(std::count_if(instances.begin(), instances.end(),
                                                      [l](const auto& i) { return i.label == l; }));
    }
};

// Evaded traces that actually moved (steps_used >= 1) become adversarial
// instances; a step-0 trace is an untouched flow and is left out.
inline DefenseDataset build_defense_dataset(std::span<const FlowRecord> clean, const std::string& benign_label,
                                            std::span<const AdversarialTrace> traces) {
    DefenseDataset d;
    for (const auto& tr : traces)
        if (tr.outcome == Outcome::Evaded && tr.steps_used >= 1)
            d.instances.push_back({tr.final, DefenseLabel::Adversarial, Provenance::D2tcAdversarial});
    if (d.instances.empty()) throw Error(ErrorKind::NoAdversarialInstances, "no trace evaded the substitute");
    std::vector<DefenseInstance> c;
    for (const auto& f : clean)
        c.push_back({f, DefenseLabel::Clean,
                     f.label == benign_label ? Provenance::BenignClean : Provenance::MaliciousClean});
    d.instances.insert(d.instances.begin(), c.begin(), c.end());
    return d;
}

// Stratified by defense label; eval gets round(frac * n_label) of each label.
inline std::pair<DefenseDataset, DefenseDataset> split_defense(const DefenseDataset& d, double eval_fraction,
                                                               std::uint64_t seed) {
    std::array<std::vector<std::size_t>, 2> by_label;
    for (std::size_t i = 0; i < d.instances.size(); ++i)
        by_label[static_cast<std::size_t>(d.instances[i].label)].push_back(i);
    std::mt19937_64 rng(seed);
    DefenseDataset train, eval;
    for (auto& idx : by_label) {
        std::shuffle(idx.begin(), idx.end(), rng);
        auto n_eval = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(idx.size())));
        std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_eval));
        std::sort(idx.begin() + static_cast<std::ptrdiff_t>(n_eval), idx.end());
        for (std::size_t k = 0; k < idx.size(); ++k)
            (k < n_eval ? eval : train).instances.push_back(d.instances[idx[k]]);
    }
    return {std::move(train), std::move(eval)};
}

// ---------------------------------------------------------------------------
// Sub-detectors

struct SubDetector {
    Feature feature = Feature::Dur;
    ml::DecisionTreeModel model;
    double weight = 0;
    double recall = 0; // on the calibration set
};

// How training instances are weighted. Provenance gives benign-clean,
// malicious-clean and adversarial instances equal total weight, so the
// small benign population is not swamped by benign-looking adversarial
// flows.
enum class Weighting { Uniform, Label, Provenance };

constexpr std::string_view weighting_name(Weighting w) {
    switch (w) {
    case Weighting::Uniform: return "uniform";
    case Weighting::Label: return "label";
    case Weighting::Provenance: return "provenance";
    }
    return "?";
}

struct SubDetectorParams {
    int max_depth = 3;
    Weighting weighting = Weighting::Provenance;
    bool operator==(const SubDetectorParams&) const = default;
};

class DefenseEnsemble {
public:
    DefenseEnsemble() = default;
    DefenseEnsemble(Vocabulary protos, std::vector<SubDetector> detectors)
        : protos_(std::move(protos)), detectors_(std::move(detectors)) {}

    // Raw feature value as seen by a sub-detector; protocols map to their
    // vocabulary slot.
    double feature_input(const FlowRecord& r, Feature f) const {
        return f == Feature::Proto ? static_cast<double>(protos_.slot(r.proto)) : numeric_value(r, f);
    }

    DetectorOutput query(std::size_t i, const FlowRecord& r) const {
        const double x = feature_input(r, detectors_[i].feature);
        auto p = detectors_[i].model.predict_proba(std::span<const double>(&x, 1));
        return {p[static_cast<std::size_t>(DefenseLabel::Adversarial)], p[static_cast<std::size_t>(DefenseLabel::Clean)]};
    }

    std::vector<DetectorOutput> query_all(const FlowRecord& r) const {
        std::vector<DetectorOutput> out;
        out.reserve(detectors_.size());
        for (std::size_t i = 0; i < detectors_.size(); ++i) out.push_back(query(i, r));
        return out;
    }

    std::vector<double> weights() const {
        std::vector<double> w;
        for (const auto& d : detectors_) w.push_back(d.weight);
        return w;
    }

    const std::vector<SubDetector>& detectors() const { return detectors_; }
    std::vector<SubDetector>& detectors() { return detectors_; }
    const Vocabulary& protos() const { return protos_; }

private:
    Vocabulary protos_;
    std::vector<SubDetector> detectors_;
};

namespace detail {
// Equal total weight per group present; groups are small non-negative ids.
inline std::vector<double> balanced_weights(std::span<const int> groups) {
    std::array<double, 3> n{};
    for (int g : groups) n[static_cast<std::size_t>(g)] += 1;
    const double present = static_cast<double>(std::count_if(n.begin(), n.end(), [](double c) { return c > 0; }));
    std::vector<double> w;
    w.reserve(groups.size());
    for (int g : groups) w.push_back(static_cast<double>(groups.size()) / (present * n[static_cast<std::size_t>(g)]));
    return w;
}

inline std::vector<double> instance_weights(const DefenseDataset& d, Weighting how) {
    std::vector<int> groups;
    groups.reserve(d.instances.size());
    for (const auto& i : d.instances)
        groups.push_back(how == Weighting::Provenance ? static_cast<int>(i.provenance) : static_cast<int>(i.label));
    return how == Weighting::Uniform ? std::vector<double>(groups.size(), 1.0) : balanced_weights(groups);
}

inline std::vector<FlowRecord> flows_of(const DefenseDataset& d) {
    std::vector<FlowRecord> f;
    f.reserve(d.instances.size());
    for (const auto& i : d.instances) f.push_back(i.flow);
    return f;
}
} // namespace detail

// One depth-limited tree per feature, uniform initial weights.
inline DefenseEnsemble train_subdetectors(const DefenseDataset& train, const SubDetectorParams& params,
                                          std::uint64_t seed) {
    if (train.count(DefenseLabel::Clean) == 0 || train.count(DefenseLabel::Adversarial) == 0)
        throw Error(ErrorKind::DegenerateLabels, "defense training set needs clean and adversarial instances");
    auto flows = detail::flows_of(train);
    Vocabulary protos = Vocabulary::fit(flows);
    DefenseEnsemble proto_view(protos, {});

    std::vector<int> y;
    for (const auto& i : train.instances) y.push_back(static_cast<int>(i.label));
    const auto w = detail::instance_weights(train, params.weighting);

    std::vector<SubDetector> dets;
    ml::TreeParams tp;
    tp.max_depth = params.max_depth;
    for (auto f : kAllFeatures) {
        ml::TrainingData td;
        td.rows = flows.size();
        td.cols = 1;
        td.n_classes = 2;
        td.y = y;
        for (const auto& r : flows) td.x.push_back(proto_view.feature_input(r, f));
        SubDetector sd;
        sd.feature = f;
        sd.model = ml::DecisionTreeModel::fit(tp, td, ml::tree_seed(seed, index_of(f)), w);
        sd.weight = 1.0 / static_cast<double>(kFeatureCount);
        dets.push_back(std::move(sd));
    }
    return DefenseEnsemble(std::move(protos), std::move(dets));
}

// Recall of each detector on the adversarial part of `eval`; a detector
// flags a flow when P_a > P_c.
inline std::vector<double> subdetector_recalls(const DefenseEnsemble& e, const DefenseDataset& eval) {
    std::vector<double> hits(e.detectors().size(), 0.0);
    std::size_t n_adv = 0;
    for (const auto& inst : eval.instances) {
        if (inst.label != DefenseLabel::Adversarial) continue;
        ++n_adv;
        for (std::size_t i = 0; i < hits.size(); ++i) {
            auto o = e.query(i, inst.flow);
            hits[i] += o.p_adv > o.p_clean;
        }
    }
    if (n_adv == 0) throw Error(ErrorKind::NoAdversarialInstances, "calibration set has no adversarial instances");
    for (auto& h : hits) h /= static_cast<double>(n_adv);
    return hits;
}

inline DefenseEnsemble calibrate_weights(DefenseEnsemble e, const DefenseDataset& eval) {
    auto r = subdetector_recalls(e, eval);
    auto w = normalize_recalls(r);
    for (std::size_t i = 0; i < w.size(); ++i) {
        e.detectors()[i].recall = r[i];
        e.detectors()[i].weight = w[i];
    }
    return e;
}

inline FusionVerdict filter(const FlowRecord& flow, const DefenseEnsemble& e, FusionRule rule) {
    return fuse(rule, e.query_all(flow), e.weights());
}

// ---------------------------------------------------------------------------
// Baseline: one classifier over all thirteen raw features.

class MonolithicDetector {
public:
    static MonolithicDetector fit(const DefenseDataset& train, std::uint64_t seed, int n_trees = 50,
                                  Weighting weighting = Weighting::Provenance) {
        if (train.count(DefenseLabel::Clean) == 0 || train.count(DefenseLabel::Adversarial) == 0)
            throw Error(ErrorKind::DegenerateLabels, "baseline detector needs both labels");
        MonolithicDetector m;
        auto flows = detail::flows_of(train);
        m.protos_ = Vocabulary::fit(flows);
        ml::TrainingData td;
        td.rows = flows.size();
        td.cols = kFeatureCount;
        td.n_classes = 2;
        for (const auto& i : train.instances) td.y.push_back(static_cast<int>(i.label));
        for (const auto& r : flows) {
            auto x = m.features(r);
            td.x.insert(td.x.end(), x.begin(), x.end());
        }
        ml::ForestParams fp;
        fp.n_trees = n_trees;
        m.model_ = ml::RandomForestModel::fit(fp, td, seed, detail::instance_weights(train, weighting));
        return m;
    }

    DefenseLabel classify(const FlowRecord& r) const {
        auto x = features(r);
        auto p = model_.predict_proba(x);
        return p[1] > p[0] ? DefenseLabel::Adversarial : DefenseLabel::Clean;
    }

private:
    std::array<double, kFeatureCount> features(const FlowRecord& r) const {
        std::array<double, kFeatureCount> x{};
        for (auto f : kAllFeatures)
            x[index_of(f)] = f == Feature::Proto ? static_cast<double>(protos_.slot(r.proto)) : numeric_value(r, f);
        return x;
    }

    Vocabulary protos_;
    ml::RandomForestModel model_;
};

// ---------------------------------------------------------------------------
// Serialization

inline constexpr const char* kDefenseFormat = "advids-defense";
inline constexpr int kDefenseVersion = 1;

inline nlohmann::json to_json(const DefenseEnsemble& e, FusionRule rule) {
    nlohmann::json dets = nlohmann::json::array();
    for (const auto& d : e.detectors())
        dets.push_back({{"feature", feature_name(d.feature)},
                        {"weight", d.weight},
                        {"recall", d.recall},
                        {"tree", ml::to_json(d.model.tree())}});
    return {{"format", kDefenseFormat},
            {"version", kDefenseVersion},
            {"rule", rule_name(rule)},
            {"protos", e.protos().protos},
            {"detectors", dets}};
}

inline std::pair<DefenseEnsemble, FusionRule> defense_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != kDefenseFormat) throw Error(ErrorKind::InvalidConfig, "not an advids defense file");
    if (j.value("version", 0) != kDefenseVersion) throw Error(ErrorKind::InvalidConfig, "unsupported defense version");
    const auto rule_s = j.at("rule").get<std::string>();
    FusionRule rule;
    if (rule_s == rule_name(FusionRule::Bayesian)) rule = FusionRule::Bayesian;
    else if (rule_s == rule_name(FusionRule::DempsterShafer)) rule = FusionRule::DempsterShafer;
    else throw Error(ErrorKind::InvalidConfig, "unknown fusion rule " + rule_s);
    std::vector<SubDetector> dets;
    for (const auto& d : j.at("detectors")) {
        auto f = feature_from_name(d.at("feature").get<std::string>());
        if (!f) throw Error(ErrorKind::InvalidConfig, "unknown feature in defense file");
        SubDetector sd;
        sd.feature = *f;
        sd.weight = d.at("weight").get<double>();
        sd.recall = d.at("recall").get<double>();
        sd.model = ml::DecisionTreeModel(ml::tree_from_json(d.at("tree")), 1, 2);
        dets.push_back(std::move(sd));
    }
    if (dets.size() != kFeatureCount) throw Error(ErrorKind::InvalidConfig, "defense file must hold 13 detectors");
    return {DefenseEnsemble(Vocabulary{j.at("protos").get<std::vector<std::string>>()}, std::move(dets)), rule};
}

} // namespace advids
