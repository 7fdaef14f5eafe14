#pragma once

// Attack and defense experiments over one dataset: partition, per-side
// preprocessing and model selection, D2TC against every substitute, then
// the filtered pipeline against the same adversarial traffic.

#include "advids/attack.hpp"
#include "advids/defense.hpp"
#include "advids/error.hpp"
#include "advids/flow.hpp"
#include "advids/harness/config.hpp"
#include "advids/harness/csv.hpp"
#include "advids/harness/synthetic.hpp"
#include "advids/ml/classifier.hpp"
#include "advids/ml/metrics.hpp"
#include "advids/preprocessing.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace advids::harness {

inline constexpr std::size_t kFamilyCount = ml::kFamilies.size();

inline std::size_t family_slot(ml::Family f) {
    for (std::size_t i = 0; i < kFamilyCount; ++i)
        if (ml::kFamilies[i] == f) return i;
    return 0;
}

// Independent stream per purpose so adding a stage never shifts another.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace stream {
inline constexpr std::uint64_t kDefenderModels = 100;
inline constexpr std::uint64_t kAttackerModels = 200;
inline constexpr std::uint64_t kDefenseSplit = 300;
inline constexpr std::uint64_t kSubdetectors = 301;
inline constexpr std::uint64_t kBaseline = 302;
} // namespace stream

inline std::vector<FlowRecord> load_dataset(const DatasetSource& src, std::uint64_t seed, IngestStats* stats = nullptr) {
    if (src.kind == DatasetSource::Kind::Csv) return ingest_csv(src.csv_path, src.mapping, stats);
    auto flows = generate_synthetic(src.synthetic, seed);
    IngestStats st;
    st.rows = flows.size();
    CleanStats cs;
    auto out = clean(flows, &cs);
    st.duplicates = cs.duplicates_removed;
    st.repaired = cs.repaired;
    if (stats) *stats = st;
    return out;
}

// Stratified holdout: round(frac * n_class) per class, largest remainder.
inline std::pair<std::vector<FlowRecord>, std::vector<FlowRecord>>
stratified_holdout(std::span<const FlowRecord> flows, double frac, std::uint64_t seed) {
    std::vector<std::size_t> all(flows.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    auto groups = advids::detail::group_by_label(flows, all);
    std::mt19937_64 rng(seed);
    for (auto& [_, v] : groups) std::shuffle(v.begin(), v.end(), rng);
    auto share = advids::detail::apportion(groups, frac);
    std::vector<FlowRecord> fit, hold;
    for (const auto& [label, v] : groups)
        for (std::size_t k = 0; k < v.size(); ++k) (k < share[label] ? hold : fit).push_back(flows[v[k]]);
    return {std::move(fit), std::move(hold)};
}

struct Selection {
    ml::Classifier model;
    std::size_t candidate = 0;
    double validation_macro_f1 = 0;
};

// Grid search on a stratified holdout by macro-F1, then a refit on all of
// `train`. Equal scores go to the earliest candidate in a seeded order.
inline Selection select_model(ml::Family family, const ModelGrid& grid, std::span<const FlowRecord> train,
                              const Encoder& enc, const ClassList& classes, double validation_fraction,
                              std::uint64_t seed) {
    const auto cands = grid.candidates(family);
    std::vector<std::size_t> order(cands.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    Selection s;
    s.candidate = order.front();
    s.validation_macro_f1 = -1;
    if (cands.size() > 1) {
        auto [fit, hold] = stratified_holdout(train, validation_fraction, derive_seed(seed, 1));
        if (!hold.empty()) {
            const auto fit_enc = enc.encode_all(fit, classes);
            const auto hold_enc = enc.encode_all(hold, classes);
            for (auto i : order) {
                auto m = ml::train(cands[i], fit_enc, derive_seed(seed, 2), classes.size());
                const double f1 = ml::evaluate(m, hold_enc).macro_f1;
                if (f1 > s.validation_macro_f1) {
                    s.validation_macro_f1 = f1;
                    s.candidate = i;
                }
            }
        }
    }
    s.model = ml::train(cands[s.candidate], enc.encode_all(train, classes), derive_seed(seed, 3), classes.size());
    return s;
}

// One participant's half of the data and everything derived from it.
struct Side {
    std::vector<FlowRecord> train, test;
    Encoder encoder;
    AttackContext ctx;
    std::array<Selection, kFamilyCount> models;
    std::array<ml::EvalReport, kFamilyCount> test_report;

    const ml::Classifier& model(ml::Family f) const { return models[family_slot(f)].model; }
    EncodedPredictor predictor(std::size_t slot) const { return {models[slot].model, encoder}; }
};

inline Side build_side(std::vector<FlowRecord> train, std::vector<FlowRecord> test, const ClassList& classes,
                       const ModelGrid& grid, const ExperimentConfig& cfg, std::uint64_t model_stream) {
    Side s;
    s.train = std::move(train);
    s.test = std::move(test);
    s.encoder = Encoder::fit(s.train);

    // Bounds cover every flow this side holds, so its own attack inputs are
    // always feasible.
    std::vector<FlowRecord> held = s.train;
    held.insert(held.end(), s.test.begin(), s.test.end());
    s.ctx.schema = fit_bounds(held);
    s.ctx.norm = s.encoder.params();
    s.ctx.target_index = classes.index_of(cfg.attack.target_class);
    std::vector<FlowRecord> target;
    for (const auto& r : s.train)
        if (r.label == cfg.attack.target_class) target.push_back(r);
    s.ctx.centroid = benign_centroid(target);

    const auto test_enc = s.encoder.encode_all(s.test, classes);
    for (std::size_t i = 0; i < kFamilyCount; ++i) {
        s.models[i] = select_model(ml::kFamilies[i], grid, s.train, s.encoder, classes, cfg.validation_fraction,
                                   derive_seed(cfg.seed, model_stream + i));
        s.test_report[i] = ml::evaluate(s.models[i].model, test_enc);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Attack experiment

struct DetectionCell {
    std::size_t n = 0;
    std::size_t before = 0; // clean malicious flows classified as their true class
    std::size_t after = 0;  // adversarial versions classified as their true class

    double before_rate() const { return n ? static_cast<double>(before) / static_cast<double>(n) : 0; }
    double after_rate() const { return n ? static_cast<double>(after) / static_cast<double>(n) : 0; }
    bool operator==(const DetectionCell&) const = default;
};

// Per attack class (index into the class list; benign row stays empty) and
// pooled over all traces.
struct DetectionTable {
    std::vector<DetectionCell> per_class;
    DetectionCell total;
};

template <FlowPredictor P>
DetectionTable detection_table(const P& nids, std::span<const AdversarialTrace> traces, const ClassList& classes) {
    DetectionTable t;
    t.per_class.assign(static_cast<std::size_t>(classes.size()), {});
    for (const auto& tr : traces) {
        const int truth = classes.index_of(tr.original.label);
        auto& cell = t.per_class[static_cast<std::size_t>(truth)];
        const bool b = static_cast<int>(nids(tr.original)) == truth;
        const bool a = static_cast<int>(nids(tr.final)) == truth;
        for (auto* c : {&cell, &t.total}) {
            ++c->n;
            c->before += b;
            c->after += a;
        }
    }
    return t;
}

struct AttackExperiment {
    ExperimentConfig config;
    IngestStats ingest;
    std::size_t n_flows = 0;
    ClassList classes;
    Side defender, attacker;
    std::vector<FlowRecord> attack_inputs; // malicious flows of the attacker's test quarter
    std::array<std::vector<AdversarialTrace>, kFamilyCount> traces; // by substitute family
    // detection[defender slot][attacker slot]
    std::array<std::array<DetectionTable, kFamilyCount>, kFamilyCount> detection;

    double mean_before() const {
        double s = 0;
        for (const auto& row : detection)
            for (const auto& c : row) s += c.total.before_rate();
        return s / static_cast<double>(kFamilyCount * kFamilyCount);
    }
    double mean_after() const {
        double s = 0;
        for (const auto& row : detection)
            for (const auto& c : row) s += c.total.after_rate();
        return s / static_cast<double>(kFamilyCount * kFamilyCount);
    }
};

inline AttackExperiment run_attack_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    AttackExperiment x;
    x.config = cfg;
    auto flows = load_dataset(cfg.dataset, cfg.seed, &x.ingest);
    x.n_flows = flows.size();
    if (flows.empty()) throw Error(ErrorKind::EmptyDataset, "dataset is empty");
    x.classes = ClassList::from_flows(flows, cfg.attack.target_class);
    auto parts = partition(flows, cfg.seed);

    x.defender = build_side(std::move(parts.defender_train), std::move(parts.defender_test), x.classes,
                            cfg.defender_grid, cfg, stream::kDefenderModels);
    x.attacker = build_side(std::move(parts.attacker_train), std::move(parts.attacker_test), x.classes,
                            cfg.attacker_grid, cfg, stream::kAttackerModels);

    for (const auto& r : x.attacker.test)
        if (r.label != cfg.attack.target_class) x.attack_inputs.push_back(r);
    if (x.attack_inputs.empty()) throw Error(ErrorKind::EmptyDataset, "attacker test split has no malicious flows");

    for (std::size_t a = 0; a < kFamilyCount; ++a)
        x.traces[a] = attack_dataset(x.attack_inputs, x.attacker.predictor(a), x.attacker.ctx, cfg.attack);
    for (std::size_t d = 0; d < kFamilyCount; ++d)
        for (std::size_t a = 0; a < kFamilyCount; ++a)
            x.detection[d][a] = detection_table(x.defender.predictor(d), x.traces[a], x.classes);
    return x;
}

// ---------------------------------------------------------------------------
// Defense experiment

struct TransferabilityMatrix {
    std::string name;
    std::array<std::array<double, kFamilyCount>, kFamilyCount> cells{}; // [defender][attacker]
    std::array<double, kFamilyCount> row_average{};
    double average = 0;

    void finalize() {
        average = 0;
        for (std::size_t d = 0; d < kFamilyCount; ++d) {
            double s = 0;
            for (double v : cells[d]) s += v;
            row_average[d] = s / static_cast<double>(kFamilyCount);
            average += row_average[d];
        }
        average /= static_cast<double>(kFamilyCount);
    }
};

// Outcome of one flow through filter then NIDS.
struct PipelineVerdict {
    bool filtered = false;
    std::optional<FusionVerdict> filter;
    std::optional<int> nids_class; // absent when the filter removed the flow
    std::vector<double> nids_proba;
};

template <class Filter>
PipelineVerdict run_pipeline(const FlowRecord& flow, const Filter* filter_fn, const ml::Classifier& nids,
                             const Encoder& enc) {
    PipelineVerdict v;
    if (filter_fn) {
        v.filter = (*filter_fn)(flow);
        v.filtered = v.filter->decision == DefenseLabel::Adversarial;
        if (v.filtered) return v;
    }
    v.nids_proba = nids.predict_proba(enc.encode(flow));
    v.nids_class = ml::argmax_lowest(v.nids_proba);
    return v;
}

// Share of clean test flows a detector flags, benign and malicious apart.
struct CleanFlagRates {
    double benign = 0;
    double malicious = 0;
};

template <class Flags>
CleanFlagRates clean_flag_rates(std::span<const FlowRecord> flows, const std::string& benign, const Flags& flags) {
    std::array<std::size_t, 2> n{}, hit{};
    for (const auto& r : flows) {
        const std::size_t k = r.label == benign ? 0 : 1;
        ++n[k];
        hit[k] += flags(r);
    }
    auto rate = [](std::size_t h, std::size_t t) { return t ? static_cast<double>(h) / static_cast<double>(t) : 0.0; };
    return {rate(hit[0], n[0]), rate(hit[1], n[1])};
}

struct FilterStats {
    FusionRule rule = FusionRule::Bayesian;
    std::array<double, kFamilyCount> adversarial_flag_rate{}; // by attacker family, over all traces
    CleanFlagRates clean_flag_rate;                           // on the defender's test quarter
    bool passthrough_identical = true;
    std::array<std::vector<FusionVerdict>, kFamilyCount> verdicts; // per trace, by attacker family
};

struct DefenseExperiment {
    std::size_t dataset_clean = 0;
    std::size_t dataset_adversarial = 0;
    std::size_t train_size = 0;
    std::size_t calibration_size = 0;
    std::array<std::size_t, kFamilyCount> defender_traces_evaded{};
    DefenseEnsemble ensemble;
    TransferabilityMatrix no_defense;
    std::vector<TransferabilityMatrix> with_defense; // one per configured rule
    std::vector<FilterStats> filters;
    TransferabilityMatrix baseline;
    CleanFlagRates baseline_clean_flag_rate;
};

// Cell (d, a): share of attacker a's adversarial flows that are either
// stopped by `stopped(a, i)` or classified as their true class by NIDS d.
template <class Stopped>
TransferabilityMatrix pipeline_matrix(const AttackExperiment& x, std::string name, const Stopped& stopped) {
    TransferabilityMatrix m;
    m.name = std::move(name);
    for (std::size_t d = 0; d < kFamilyCount; ++d) {
        const auto pred = x.defender.predictor(d);
        for (std::size_t a = 0; a < kFamilyCount; ++a) {
            const auto& traces = x.traces[a];
            std::size_t hit = 0;
            for (std::size_t i = 0; i < traces.size(); ++i)
                hit += stopped(a, i) || pred(traces[i].final) == x.classes.index_of(traces[i].original.label);
            m.cells[d][a] = traces.empty() ? 0 : static_cast<double>(hit) / static_cast<double>(traces.size());
        }
    }
    m.finalize();
    return m;
}

inline DefenseExperiment run_defense_experiment(const AttackExperiment& x) {
    const auto& cfg = x.config;
    const auto& def = x.defender;
    const auto& benign = cfg.attack.target_class;
    DefenseExperiment out;

    // The defender attacks its own models to learn what adversarial flows
    // look like.
    std::vector<FlowRecord> own_malicious;
    for (const auto& r : def.train)
        if (r.label != benign) own_malicious.push_back(r);
    std::vector<AdversarialTrace> pool;
    for (std::size_t d = 0; d < kFamilyCount; ++d) {
        auto tr = attack_dataset(own_malicious, def.predictor(d), def.ctx, cfg.attack);
        for (const auto& t : tr) out.defender_traces_evaded[d] += t.outcome == Outcome::Evaded && t.steps_used >= 1;
        pool.insert(pool.end(), tr.begin(), tr.end());
    }
    const auto dataset = build_defense_dataset(def.train, benign, pool);
    out.dataset_clean = dataset.count(DefenseLabel::Clean);
    out.dataset_adversarial = dataset.count(DefenseLabel::Adversarial);
    auto [train, calib] =
        split_defense(dataset, cfg.defense.calibration_fraction, derive_seed(cfg.seed, stream::kDefenseSplit));
    out.train_size = train.instances.size();
    out.calibration_size = calib.instances.size();
    out.ensemble = calibrate_weights(
        train_subdetectors(train, cfg.defense.subdetector, derive_seed(cfg.seed, stream::kSubdetectors)), calib);
    const auto mono =
        MonolithicDetector::fit(train, derive_seed(cfg.seed, stream::kBaseline), cfg.defense.baseline_trees,
                                cfg.defense.subdetector.weighting);

    out.no_defense = pipeline_matrix(x, "none", [](std::size_t, std::size_t) { return false; });

    for (auto rule : cfg.defense.rules) {
        FilterStats fs;
        fs.rule = rule;
        const auto& ens = out.ensemble;
        auto filt = [&ens, rule](const FlowRecord& f) { return filter(f, ens, rule); };
        auto flags = [&](const FlowRecord& f) { return filt(f).decision == DefenseLabel::Adversarial; };

        for (std::size_t a = 0; a < kFamilyCount; ++a) {
            std::size_t flagged = 0;
            for (const auto& tr : x.traces[a]) {
                fs.verdicts[a].push_back(filt(tr.final));
                flagged += fs.verdicts[a].back().decision == DefenseLabel::Adversarial;
            }
            fs.adversarial_flag_rate[a] =
                x.traces[a].empty() ? 0 : static_cast<double>(flagged) / static_cast<double>(x.traces[a].size());
        }
        fs.clean_flag_rate = clean_flag_rates(def.test, benign, flags);

        // Flows the filter lets through must reach the NIDS untouched.
        for (std::size_t d = 0; d < kFamilyCount; ++d) {
            const auto& nids = def.models[d].model;
            for (const auto& r : def.test) {
                const auto with = run_pipeline(r, &filt, nids, def.encoder);
                if (with.filtered) continue;
                const auto without = run_pipeline<decltype(filt)>(r, nullptr, nids, def.encoder);
                const bool same = with.nids_class == without.nids_class &&
                                  with.nids_proba.size() == without.nids_proba.size() &&
                                  std::memcmp(with.nids_proba.data(), without.nids_proba.data(),
                                              with.nids_proba.size() * sizeof(double)) == 0;
                fs.passthrough_identical = fs.passthrough_identical && same;
            }
        }

        out.with_defense.push_back(pipeline_matrix(x, std::string(rule_name(rule)), [&](std::size_t a, std::size_t i) {
            return fs.verdicts[a][i].decision == DefenseLabel::Adversarial;
        }));
        out.filters.push_back(std::move(fs));
    }

    out.baseline = pipeline_matrix(x, "monolithic", [&](std::size_t a, std::size_t i) {
        return mono.classify(x.traces[a][i].final) == DefenseLabel::Adversarial;
    });
    out.baseline_clean_flag_rate = clean_flag_rates(
        def.test, benign, [&](const FlowRecord& r) { return mono.classify(r) == DefenseLabel::Adversarial; });
    return out;
}

struct RunResults {
    AttackExperiment attack;
    std::optional<DefenseExperiment> defense;
};

inline RunResults run_all(const ExperimentConfig& cfg) {
    RunResults r{run_attack_experiment(cfg), std::nullopt};
    r.defense = run_defense_experiment(r.attack);
    return r;
}

} // namespace advids::harness
