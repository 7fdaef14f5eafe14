#pragma once

#include "advids/error.hpp"
#include "advids/flow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace advids {

// ---------------------------------------------------------------------------
// Cleaning

struct CleanStats {
    std::size_t duplicates_removed = 0;
    std::size_t repaired = 0;
};

namespace detail {
struct FlowHash {
    std::size_t operator()(const FlowRecord& r) const noexcept {
        std::size_t h = 0;
        auto mix = [&h](std::size_t v) { h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2); };
        std::hash<double> hd;
        for (double v : {r.dur, r.spkts, r.sbytes, r.dpkts, r.dbytes, r.pkts, r.bytes, r.rate, r.srate, r.drate})
            mix(hd(v));
        mix(std::hash<std::string>{}(r.proto));
        mix(std::hash<int>{}(r.sport));
        mix(std::hash<int>{}(r.dport));
        mix(std::hash<std::string>{}(r.label));
        return h;
    }
};
} // namespace detail

// Repairs dependent features that disagree with their formulas, then drops
// exact duplicates keeping the first occurrence.
inline std::vector<FlowRecord> clean(std::span<const FlowRecord> flows, CleanStats* stats = nullptr) {
    CleanStats local;
    std::vector<FlowRecord> out;
    out.reserve(flows.size());
    std::unordered_set<FlowRecord, detail::FlowHash> seen;
    for (const auto& f : flows) {
        FlowRecord r = f;
        if (!is_consistent(r)) {
            r = recompute_dependents(r);
            ++local.repaired;
        }
        if (!seen.insert(r).second) {
            ++local.duplicates_removed;
            continue;
        }
        out.push_back(std::move(r));
    }
    if (stats) *stats = local;
    return out;
}

// ---------------------------------------------------------------------------
// Port categories

enum class PortCategory : std::uint8_t { WellKnown, Registered, DynamicPrivate };

inline constexpr std::size_t kPortCategoryCount = 3;

inline PortCategory categorize_port(int port) {
    if (port < 0 || port > kMaxPort) throw Error(ErrorKind::OutOfRange, "port " + std::to_string(port));
    if (port <= 1023) return PortCategory::WellKnown;
    if (port <= 49151) return PortCategory::Registered;
    return PortCategory::DynamicPrivate;
}

// ---------------------------------------------------------------------------
// Class labels. Benign is always index 0 so lowest-index tie-breaking favours it.

class ClassList {
public:
    ClassList() = default;
    ClassList(std::string benign, std::vector<std::string> attacks) : names_{std::move(benign)} {
        std::sort(attacks.begin(), attacks.end());
        attacks.erase(std::unique(attacks.begin(), attacks.end()), attacks.end());
        for (auto& a : attacks)
            if (a != names_.front()) names_.push_back(std::move(a));
    }

    static ClassList from_flows(std::span<const FlowRecord> flows, const std::string& benign) {
        std::vector<std::string> labels;
        for (const auto& f : flows) labels.push_back(f.label);
        return ClassList(benign, std::move(labels));
    }

    static constexpr int benign_index() { return 0; }
    int size() const { return static_cast<int>(names_.size()); }
    const std::string& name(int i) const { return names_.at(static_cast<std::size_t>(i)); }
    const std::vector<std::string>& names() const { return names_; }

    int index_of(const std::string& label) const {
        auto it = std::find(names_.begin(), names_.end(), label);
        if (it == names_.end()) throw Error(ErrorKind::OutOfRange, "unknown class label '" + label + "'");
        return static_cast<int>(it - names_.begin());
    }
    bool contains(const std::string& label) const {
        return std::find(names_.begin(), names_.end(), label) != names_.end();
    }

    bool operator==(const ClassList&) const = default;

private:
    std::vector<std::string> names_;
};

// ---------------------------------------------------------------------------
// Min-max normalization over the ten numeric features. Ports are one-hot
// encoded by category instead.

inline constexpr std::array<Feature, 10> kNormalizedFeatures = {
    Feature::Dur,   Feature::Spkts, Feature::Sbytes, Feature::Pkts,  Feature::Bytes,
    Feature::Rate,  Feature::Srate, Feature::Drate,  Feature::Dpkts, Feature::Dbytes,
};

struct NormalizationParams {
    std::array<double, kFeatureCount> min{};
    std::array<double, kFeatureCount> max{};

    double range(Feature f) const { return max[index_of(f)] - min[index_of(f)]; }
    bool is_constant(Feature f) const { return !(range(f) > 0); }

    // Constant features map to 0. Values outside the fitted range are not clamped.
    double normalize(Feature f, double v) const {
        if (is_constant(f)) return 0.0;
        return (v - min[index_of(f)]) / range(f);
    }
    double denormalize(Feature f, double u) const { return min[index_of(f)] + u * range(f); }

    bool operator==(const NormalizationParams&) const = default;
};

inline NormalizationParams fit_normalizer(std::span<const FlowRecord> train) {
    if (train.empty()) throw Error(ErrorKind::EmptyDataset, "fit_normalizer needs training data");
    NormalizationParams p;
    for (auto f : kNormalizedFeatures) {
        double lo = numeric_value(train.front(), f), hi = lo;
        for (const auto& r : train) {
            double v = numeric_value(r, f);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        p.min[index_of(f)] = lo;
        p.max[index_of(f)] = hi;
    }
    return p;
}

// ---------------------------------------------------------------------------
// Encoding

inline constexpr const char* kOtherProto = "OTHER";

// Protocols seen in training (sorted) plus a trailing OTHER slot.
struct Vocabulary {
    std::vector<std::string> protos;

    static Vocabulary fit(std::span<const FlowRecord> train) {
        std::vector<std::string> p;
        for (const auto& r : train) p.push_back(r.proto);
        std::sort(p.begin(), p.end());
        p.erase(std::unique(p.begin(), p.end()), p.end());
        p.erase(std::remove(p.begin(), p.end(), std::string(kOtherProto)), p.end());
        p.emplace_back(kOtherProto);
        return {std::move(p)};
    }

    std::size_t slot(const std::string& proto) const {
        auto it = std::find(protos.begin(), protos.end(), proto);
        if (it == protos.end()) return protos.size() - 1;
        return static_cast<std::size_t>(it - protos.begin());
    }

    bool operator==(const Vocabulary&) const = default;
};

struct EncodedInstance {
    std::vector<double> x;
    int label = -1;
};

class Encoder {
public:
    Encoder() = default;
    Encoder(NormalizationParams params, Vocabulary vocab) : params_(params), vocab_(std::move(vocab)) {}

    static Encoder fit(std::span<const FlowRecord> train) {
        return Encoder(fit_normalizer(train), Vocabulary::fit(train));
    }

    std::size_t dim() const { return kNormalizedFeatures.size() + vocab_.protos.size() + 2 * kPortCategoryCount; }

    void encode_into(const FlowRecord& r, std::vector<double>& out) const {
        out.assign(dim(), 0.0);
        std::size_t i = 0;
        for (auto f : kNormalizedFeatures) out[i++] = params_.normalize(f, numeric_value(r, f));
        out[i + vocab_.slot(r.proto)] = 1.0;
        i += vocab_.protos.size();
        out[i + static_cast<std::size_t>(categorize_port(r.sport))] = 1.0;
        i += kPortCategoryCount;
        out[i + static_cast<std::size_t>(categorize_port(r.dport))] = 1.0;
    }

    std::vector<double> encode(const FlowRecord& r) const {
        std::vector<double> out;
        encode_into(r, out);
        return out;
    }

    EncodedInstance encode(const FlowRecord& r, const ClassList& classes) const {
        return {encode(r), classes.index_of(r.label)};
    }

    std::vector<EncodedInstance> encode_all(std::span<const FlowRecord> flows, const ClassList& classes) const {
        std::vector<EncodedInstance> out;
        out.reserve(flows.size());
        for (const auto& r : flows) out.push_back(encode(r, classes));
        return out;
    }

    const NormalizationParams& params() const { return params_; }
    const Vocabulary& vocab() const { return vocab_; }

    bool operator==(const Encoder&) const = default;

private:
    NormalizationParams params_;
    Vocabulary vocab_;
};

// ---------------------------------------------------------------------------
// Partitioning: stratified halves for defender and attacker, each split
// 75:25 into train and test.

struct PartitionedData {
    std::vector<FlowRecord> defender_train;
    std::vector<FlowRecord> defender_test;
    std::vector<FlowRecord> attacker_train;
    std::vector<FlowRecord> attacker_test;
};

inline constexpr double kTestFraction = 0.25;

namespace detail {

inline std::map<std::string, std::vector<std::size_t>> group_by_label(std::span<const FlowRecord> flows,
                                                                      std::span<const std::size_t> idx) {
    std::map<std::string, std::vector<std::size_t>> g;
    for (auto i : idx) g[flows[i].label].push_back(i);
    return g;
}

// Per-class test counts by largest remainder so the total is round(n * frac).
inline std::map<std::string, std::size_t>
apportion(const std::map<std::string, std::vector<std::size_t>>& groups, double frac) {
    std::size_t n = 0;
    for (const auto& [_, v] : groups) n += v.size();
    const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(n) * frac));
    std::map<std::string, std::size_t> share;
    std::vector<std::pair<double, std::string>> rema;
    std::size_t assigned = 0;
    for (const auto& [label, v] : groups) {
        double exact = static_cast<double>(v.size()) * frac;
        auto base = static_cast<std::size_t>(std::floor(exact));
        share[label] = base;
        assigned += base;
        rema.emplace_back(exact - static_cast<double>(base), label);
    }
    std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < target && k < rema.size(); ++k, ++assigned) ++share[rema[k].second];
    return share;
}

inline void split_train_test(std::span<const FlowRecord> flows, std::span<const std::size_t> half,
                             std::vector<FlowRecord>& train, std::vector<FlowRecord>& test) {
    auto groups = group_by_label(flows, half);
    auto share = apportion(groups, kTestFraction);
    for (const auto& [label, v] : groups) {
        std::size_t n_test = share[label];
        for (std::size_t k = 0; k < v.size(); ++k) (k < n_test ? test : train).push_back(flows[v[k]]);
    }
}

} // namespace detail

inline PartitionedData partition(std::span<const FlowRecord> flows, std::uint64_t seed) {
    if (flows.size() < 8) throw Error(ErrorKind::TooFewInstances, "partition needs at least 8 flows");
    std::vector<std::size_t> all(flows.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    auto groups = detail::group_by_label(flows, all);
    for (const auto& [label, v] : groups)
        if (v.size() < 2) throw Error(ErrorKind::TooFewInstances, "class '" + label + "' has fewer than 2 flows");

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> def_idx, att_idx;
    bool odd_to_defender = true;
    for (auto& [label, v] : groups) {
        std::shuffle(v.begin(), v.end(), rng);
        std::size_t half = v.size() / 2;
        if (v.size() % 2 == 1) {
            if (odd_to_defender) ++half;
            odd_to_defender = !odd_to_defender;
        }
        def_idx.insert(def_idx.end(), v.begin(), v.begin() + static_cast<std::ptrdiff_t>(half));
        att_idx.insert(att_idx.end(), v.begin() + static_cast<std::ptrdiff_t>(half), v.end());
    }

    PartitionedData out;
    detail::split_train_test(flows, def_idx, out.defender_train, out.defender_test);
    detail::split_train_test(flows, att_idx, out.attacker_train, out.attacker_test);
    return out;
}

} // namespace advids
