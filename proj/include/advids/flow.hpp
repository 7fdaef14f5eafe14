#pragma once

// Flow record, feature taxonomy and the validity predicate shared by the
// attack projection and the invariant tests.
//
// Features fall into three groups:
//   modifiable      dur, spkts, sbytes          (attacker controls directly)
//   dependent       pkts, bytes, rate, srate, drate (recomputed, never perturbed)
//   non-modifiable  dpkts, dbytes, proto, sport, dport

#include "advids/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace advids {

inline constexpr double kDurEpsilon = 1e-6;
inline constexpr int kMaxPort = 65535;

enum class Feature : std::uint8_t {
    Dur,
    Spkts,
    Sbytes,
    Pkts,
    Bytes,
    Rate,
    Srate,
    Drate,
    Dpkts,
    Dbytes,
    Proto,
    Sport,
    Dport,
};

inline constexpr std::size_t kFeatureCount = 13;

inline constexpr std::array<Feature, kFeatureCount> kAllFeatures = {
    Feature::Dur,   Feature::Spkts, Feature::Sbytes, Feature::Pkts,  Feature::Bytes,
    Feature::Rate,  Feature::Srate, Feature::Drate,  Feature::Dpkts, Feature::Dbytes,
    Feature::Proto, Feature::Sport, Feature::Dport,
};

inline constexpr std::array<Feature, 3> kModifiable = {Feature::Dur, Feature::Spkts, Feature::Sbytes};
inline constexpr std::array<Feature, 5> kDependent = {Feature::Pkts, Feature::Bytes, Feature::Rate,
                                                      Feature::Srate, Feature::Drate};
inline constexpr std::array<Feature, 5> kNonModifiable = {Feature::Dpkts, Feature::Dbytes, Feature::Proto,
                                                          Feature::Sport, Feature::Dport};

enum class FeatureGroup { Modifiable, Dependent, NonModifiable };

constexpr std::size_t index_of(Feature f) { return static_cast<std::size_t>(f); }

constexpr FeatureGroup group_of(Feature f) {
    for (auto m : kModifiable)
        if (m == f) return FeatureGroup::Modifiable;
    for (auto d : kDependent)
        if (d == f) return FeatureGroup::Dependent;
    return FeatureGroup::NonModifiable;
}

constexpr bool is_numeric(Feature f) { return f != Feature::Proto; }

// Integer-valued on the wire; rounded during projection.
constexpr bool is_integral(Feature f) {
    switch (f) {
    case Feature::Dur:
    case Feature::Rate:
    case Feature::Srate:
    case Feature::Drate:
    case Feature::Proto:
        return false;
    default:
        return true;
    }
}

constexpr std::string_view feature_name(Feature f) {
    constexpr std::array<std::string_view, kFeatureCount> names = {
        "dur", "spkts", "sbytes", "pkts", "bytes", "rate", "srate",
        "drate", "dpkts", "dbytes", "proto", "sport", "dport",
    };
    return names[index_of(f)];
}

inline std::optional<Feature> feature_from_name(std::string_view name) {
    for (auto f : kAllFeatures)
        if (feature_name(f) == name) return f;
    return std::nullopt;
}

struct FlowRecord {
    double dur = 0;
    double spkts = 0;
    double sbytes = 0;
    double dpkts = 0;
    double dbytes = 0;
    double pkts = 0;
    double bytes = 0;
    double rate = 0;
    double srate = 0;
    double drate = 0;
    std::string proto;
    int sport = 0;
    int dport = 0;
    std::string label;

    bool operator==(const FlowRecord&) const = default;
};

// Numeric view of a feature. Proto has no numeric value and returns 0.
inline double numeric_value(const FlowRecord& r, Feature f) {
    switch (f) {
    case Feature::Dur: return r.dur;
    case Feature::Spkts: return r.spkts;
    case Feature::Sbytes: return r.sbytes;
    case Feature::Pkts: return r.pkts;
    case Feature::Bytes: return r.bytes;
    case Feature::Rate: return r.rate;
    case Feature::Srate: return r.srate;
    case Feature::Drate: return r.drate;
    case Feature::Dpkts: return r.dpkts;
    case Feature::Dbytes: return r.dbytes;
    case Feature::Sport: return r.sport;
    case Feature::Dport: return r.dport;
    case Feature::Proto: return 0;
    }
    return 0;
}

inline double& modifiable_ref(FlowRecord& r, Feature f) {
    switch (f) {
    case Feature::Dur: return r.dur;
    case Feature::Spkts: return r.spkts;
    case Feature::Sbytes: return r.sbytes;
    default: throw Error(ErrorKind::InvariantViolation, "feature is not modifiable");
    }
}

inline FlowRecord recompute_dependents(FlowRecord flow) {
    const double d = std::max(flow.dur, kDurEpsilon);
    flow.pkts = flow.spkts + flow.dpkts;
    flow.bytes = flow.sbytes + flow.dbytes;
    flow.rate = flow.pkts / d;
    flow.srate = flow.spkts / d;
    flow.drate = flow.dpkts / d;
    return flow;
}

struct Interval {
    double lo = 0;
    double hi = 0;

    bool contains(double v) const { return v >= lo && v <= hi; }
    double clamp(double v) const { return std::clamp(v, lo, hi); }
    bool operator==(const Interval&) const = default;
};

// Bounds are indexed by Feature; the Proto slot is unused.
struct FeatureSchema {
    std::array<Interval, kFeatureCount> bounds{};

    const Interval& bound(Feature f) const { return bounds[index_of(f)]; }
    Interval& bound(Feature f) { return bounds[index_of(f)]; }

    bool operator==(const FeatureSchema&) const = default;
};

// Dependent-feature bounds implied by the bounds of their inputs. Every
// recompute_dependents output with in-bounds inputs lands inside these.
inline void derive_dependent_bounds(FeatureSchema& s) {
    const auto& dur = s.bound(Feature::Dur);
    const double dlo = std::max(dur.lo, kDurEpsilon);
    const double dhi = std::max(dur.hi, kDurEpsilon);
    const auto& sp = s.bound(Feature::Spkts);
    const auto& dp = s.bound(Feature::Dpkts);
    const auto& sb = s.bound(Feature::Sbytes);
    const auto& db = s.bound(Feature::Dbytes);
    s.bound(Feature::Pkts) = {sp.lo + dp.lo, sp.hi + dp.hi};
    s.bound(Feature::Bytes) = {sb.lo + db.lo, sb.hi + db.hi};
    const auto& pk = s.bound(Feature::Pkts);
    s.bound(Feature::Rate) = {pk.lo / dhi, pk.hi / dlo};
    s.bound(Feature::Srate) = {sp.lo / dhi, sp.hi / dlo};
    s.bound(Feature::Drate) = {dp.lo / dhi, dp.hi / dlo};
}

inline FeatureSchema fit_bounds(std::span<const FlowRecord> flows) {
    if (flows.empty()) throw Error(ErrorKind::EmptyDataset, "fit_bounds needs at least one flow");
    FeatureSchema s;
    for (auto f : kAllFeatures) {
        if (!is_numeric(f) || group_of(f) == FeatureGroup::Dependent) continue;
        auto [mn, mx] = std::minmax_element(flows.begin(), flows.end(), [f](const auto& a, const auto& b) {
            return numeric_value(a, f) < numeric_value(b, f);
        });
        double lo = std::max(0.0, numeric_value(*mn, f));
        double hi = std::max(lo, numeric_value(*mx, f));
        s.bound(f) = {lo, hi};
    }
    auto& dur = s.bound(Feature::Dur);
    dur.lo = std::max(dur.lo, kDurEpsilon);
    dur.hi = std::max(dur.hi, dur.lo);
    derive_dependent_bounds(s);
    return s;
}

namespace detail {
inline bool rel_equal(double a, double b, double tol = 1e-9) {
    return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}
} // namespace detail

// FlowRecord invariants only (no bounds).
inline bool is_consistent(const FlowRecord& f) {
    for (auto feat : kAllFeatures) {
        if (!is_numeric(feat)) continue;
        double v = numeric_value(f, feat);
        if (!std::isfinite(v) || v < 0) return false;
    }
    if (f.sport > kMaxPort || f.dport > kMaxPort) return false;
    if (f.pkts != f.spkts + f.dpkts) return false;
    if (f.bytes != f.sbytes + f.dbytes) return false;
    const double d = std::max(f.dur, kDurEpsilon);
    return detail::rel_equal(f.rate, f.pkts / d) && detail::rel_equal(f.srate, f.spkts / d) &&
           detail::rel_equal(f.drate, f.dpkts / d);
}

inline bool is_valid(const FlowRecord& f, const FeatureSchema& schema) {
    if (!is_consistent(f)) return false;
    for (auto feat : kAllFeatures) {
        if (!is_numeric(feat)) continue;
        if (!schema.bound(feat).contains(numeric_value(f, feat))) return false;
    }
    return true;
}

} // namespace advids
