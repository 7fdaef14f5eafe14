#pragma once

// Distance-to-target-centre (D2TC) adversarial flow generator.
//
// A malicious flow x0 is pushed toward the benign centroid along the sign
// pattern of (centroid - x0). At step t every masked modifiable feature f
// moves by
//
//     sign(M_b(f) - x0(f)) * c * t * m
//
// where m is the Euclidean distance between x0 and the centroid over the
// modifiable features. Distances and steps live in min-max normalized
// space and are mapped back to raw units per feature before projection.
// The step is always taken from x0, never from the previous candidate.

#include "advids/error.hpp"
#include "advids/flow.hpp"
#include "advids/ml/classifier.hpp"
#include "advids/preprocessing.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace advids {

// bit0 = dur, bit1 = spkts, bit2 = sbytes
struct Mask {
    int id = 0;
    unsigned bits = 0;

    bool selects(std::size_t modifiable_index) const { return (bits >> modifiable_index) & 1u; }
    int popcount() const { return static_cast<int>((bits & 1u) + ((bits >> 1) & 1u) + ((bits >> 2) & 1u)); }
    bool operator==(const Mask&) const = default;
};

inline constexpr std::array<Mask, 7> kMasks = {{
    {1, 0b001},
    {2, 0b010},
    {3, 0b100},
    {4, 0b011},
    {5, 0b101},
    {6, 0b110},
    {7, 0b111},
}};

inline const Mask& mask_by_id(int id) {
    if (id < 1 || id > 7) throw Error(ErrorKind::OutOfRange, "mask id " + std::to_string(id));
    return kMasks[static_cast<std::size_t>(id - 1)];
}

enum class StepSchedule {
    Linear,     // c * t, anchored at x0
    Cumulative, // c * t(t+1)/2, the summed-steps reading; for study only
};

struct AttackConfig {
    double c = 0.1;
    int t_max = 10;
    std::array<int, 7> mask_order = {1, 2, 3, 4, 5, 6, 7};
    std::string target_class = "benign";
    StepSchedule schedule = StepSchedule::Linear;
    bool project = true; // disabling is only meaningful for invariant studies

    void validate() const {
        if (!(c > 0) || !std::isfinite(c)) throw Error(ErrorKind::InvalidConfig, "attack c must be > 0");
        if (t_max < 1) throw Error(ErrorKind::InvalidConfig, "attack t_max must be >= 1");
        auto sorted = mask_order;
        std::sort(sorted.begin(), sorted.end());
        for (int i = 0; i < 7; ++i)
            if (sorted[static_cast<std::size_t>(i)] != i + 1)
                throw Error(ErrorKind::InvalidConfig, "mask_order must be a permutation of 1..7");
    }

    double step_scale(int t) const {
        const double td = t;
        return schedule == StepSchedule::Linear ? c * td : c * td * (td + 1) / 2;
    }
};

// Mean of the modifiable features over benign flows, in raw units.
struct BenignCentroid {
    std::array<double, 3> mean{};

    double operator[](std::size_t i) const { return mean[i]; }
    bool operator==(const BenignCentroid&) const = default;
};

inline BenignCentroid benign_centroid(std::span<const FlowRecord> benign) {
    if (benign.empty()) throw Error(ErrorKind::EmptyDataset, "benign centroid needs benign flows");
    BenignCentroid c;
    for (std::size_t i = 0; i < kModifiable.size(); ++i) {
        double s = 0;
        for (const auto& r : benign) s += numeric_value(r, kModifiable[i]);
        c.mean[i] = s / static_cast<double>(benign.size());
    }
    return c;
}

// Everything the attacker derives from its own data.
struct AttackContext {
    BenignCentroid centroid;
    FeatureSchema schema;
    NormalizationParams norm;
    int target_index = ClassList::benign_index();
};

inline constexpr double sign_of(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

// Distance between x0 and the centroid over the modifiable features, in
// normalized units.
inline double centroid_distance(const FlowRecord& x0, const AttackContext& ctx) {
    double s = 0;
    for (std::size_t i = 0; i < kModifiable.size(); ++i) {
        const Feature f = kModifiable[i];
        const double d = ctx.norm.normalize(f, ctx.centroid[i]) - ctx.norm.normalize(f, numeric_value(x0, f));
        s += d * d;
    }
    return std::sqrt(s);
}

// Clamp modifiables into bounds, round integral ones, restore dependents.
inline FlowRecord project(FlowRecord r, const FeatureSchema& schema) {
    for (auto f : kModifiable) {
        double& v = modifiable_ref(r, f);
        const auto& b = schema.bound(f);
        v = b.clamp(v);
        if (is_integral(f)) {
            v = std::round(v);
            v = std::clamp(v, std::ceil(b.lo), std::max(std::ceil(b.lo), std::floor(b.hi)));
        }
    }
    return recompute_dependents(std::move(r));
}

inline FlowRecord perturb(const FlowRecord& x0, const AttackContext& ctx, int t, const Mask& mask,
                          const AttackConfig& config) {
    const double m = centroid_distance(x0, ctx);
    const double scale = config.step_scale(t) * m;
    FlowRecord cand = x0;
    for (std::size_t i = 0; i < kModifiable.size(); ++i) {
        if (!mask.selects(i)) continue;
        const Feature f = kModifiable[i];
        const double x = numeric_value(x0, f);
        const double dir = sign_of(ctx.centroid[i] - x);
        modifiable_ref(cand, f) = x + dir * scale * ctx.norm.range(f);
    }
    return config.project ? project(std::move(cand), ctx.schema) : recompute_dependents(std::move(cand));
}

// ---------------------------------------------------------------------------

template <class P>
concept FlowPredictor = requires(const P& p, const FlowRecord& f) {
    { p(f) } -> std::convertible_to<int>;
};

// Substitute model seen through the attacker's encoder.
class EncodedPredictor {
public:
    EncodedPredictor(const ml::Classifier& model, const Encoder& encoder) : model_(&model), encoder_(&encoder) {}

    int operator()(const FlowRecord& f) const {
        thread_local std::vector<double> buf;
        encoder_->encode_into(f, buf);
        return model_->predict(buf);
    }

private:
    const ml::Classifier* model_;
    const Encoder* encoder_;
};

enum class Outcome { Evaded, Failed };

struct AdversarialTrace {
    FlowRecord original;
    FlowRecord final;
    Outcome outcome = Outcome::Failed;
    int steps_used = 0;
    std::optional<Mask> mask_used;
    std::array<double, 3> delta{}; // final - original for dur, spkts, sbytes
    double gen_time_s = 0;
    int probes = 0; // candidate evaluations by the substitute
};

template <FlowPredictor P>
AdversarialTrace craft(const FlowRecord& x, const P& substitute, const AttackContext& ctx,
                       const AttackConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    AdversarialTrace tr;
    tr.original = x;
    tr.final = x;

    auto finish = [&]() {
        for (std::size_t i = 0; i < kModifiable.size(); ++i)
            tr.delta[i] = numeric_value(tr.final, kModifiable[i]) - numeric_value(tr.original, kModifiable[i]);
        tr.gen_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return tr;
    };

    if (static_cast<int>(substitute(x)) == ctx.target_index) {
        tr.outcome = Outcome::Evaded;
        return finish();
    }
    for (int t = 1; t <= config.t_max; ++t) {
        for (int id : config.mask_order) {
            const Mask& mask = mask_by_id(id);
            FlowRecord cand = perturb(x, ctx, t, mask, config);
            ++tr.probes;
            if (static_cast<int>(substitute(cand)) == ctx.target_index) {
                tr.outcome = Outcome::Evaded;
                tr.final = std::move(cand);
                tr.steps_used = t;
                tr.mask_used = mask;
                return finish();
            }
        }
    }
    tr.outcome = Outcome::Failed;
    tr.steps_used = config.t_max;
    return finish();
}

struct AttackSummary {
    std::size_t count = 0;
    std::size_t evaded = 0;
    double evasion_rate = 0;
    std::array<std::size_t, 8> mask_histogram{}; // index = mask id, 0 = no mask (step 0)
    std::vector<std::size_t> step_histogram;     // Evaded traces by steps_used, 0..t_max
    std::array<double, 3> mean_abs_delta{};      // over Evaded traces
    double mean_gen_time_s = 0;
};

inline AttackSummary summarize(std::span<const AdversarialTrace> traces, int t_max) {
    AttackSummary s;
    s.step_histogram.assign(static_cast<std::size_t>(t_max) + 1, 0);
    s.count = traces.size();
    for (const auto& tr : traces) {
        s.mean_gen_time_s += tr.gen_time_s;
        if (tr.outcome != Outcome::Evaded) continue;
        ++s.evaded;
        ++s.mask_histogram[tr.mask_used ? static_cast<std::size_t>(tr.mask_used->id) : 0];
        ++s.step_histogram[static_cast<std::size_t>(tr.steps_used)];
        for (std::size_t i = 0; i < 3; ++i) s.mean_abs_delta[i] += std::abs(tr.delta[i]);
    }
    if (s.count > 0) {
        s.evasion_rate = static_cast<double>(s.evaded) / static_cast<double>(s.count);
        s.mean_gen_time_s /= static_cast<double>(s.count);
    }
    if (s.evaded > 0)
        for (auto& d : s.mean_abs_delta) d /= static_cast<double>(s.evaded);
    return s;
}

template <FlowPredictor P>
std::vector<AdversarialTrace> attack_dataset(std::span<const FlowRecord> malicious, const P& substitute,
                                             const AttackContext& ctx, const AttackConfig& config) {
    config.validate();
    std::vector<AdversarialTrace> out;
    out.reserve(malicious.size());
    for (const auto& x : malicious) out.push_back(craft(x, substitute, ctx, config));
    return out;
}

} // namespace advids
