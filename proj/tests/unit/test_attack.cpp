#include "advids/attack.hpp"

#include "support/generators.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace advids;
using namespace advids::testing;

namespace {

struct Setup {
    std::vector<FlowRecord> flows;
    AttackContext ctx;
};

Setup random_setup(std::mt19937_64& rng, std::size_t n = 60) {
    Setup s;
    s.flows = random_flows(rng, n, {"benign", "attack"});
    std::vector<FlowRecord> benign;
    for (const auto& f : s.flows)
        if (f.label == "benign") benign.push_back(f);
    if (benign.empty()) benign.push_back(s.flows.front());
    s.ctx.centroid = benign_centroid(benign);
    s.ctx.schema = fit_bounds(s.flows);
    s.ctx.norm = fit_normalizer(s.flows);
    return s;
}

// Duration-only world: spkts and sbytes sit at the centroid, so only dur
// can move. Bounds and normalization span [0, 100] in dur.
AttackContext dur_world(double centroid_dur) {
    AttackContext ctx;
    ctx.centroid.mean = {centroid_dur, 10, 1000};
    FlowRecord lo, hi;
    lo.dur = 0;
    lo.spkts = 10;
    lo.sbytes = 1000;
    lo.dpkts = 5;
    lo.dbytes = 500;
    hi = lo;
    hi.dur = 100;
    std::vector<FlowRecord> span = {recompute_dependents(lo), recompute_dependents(hi)};
    ctx.schema = fit_bounds(span);
    ctx.norm = fit_normalizer(span);
    return ctx;
}

FlowRecord dur_flow(double dur) {
    FlowRecord f;
    f.dur = dur;
    f.spkts = 10;
    f.sbytes = 1000;
    f.dpkts = 5;
    f.dbytes = 500;
    f.proto = "tcp";
    f.sport = 50000;
    f.dport = 80;
    f.label = "attack";
    return recompute_dependents(f);
}

// Benign (class 0) iff dur >= theta.
struct ThresholdModel {
    double theta;
    int operator()(const FlowRecord& f) const { return f.dur >= theta ? 0 : 1; }
};

struct NeverBenign {
    int operator()(const FlowRecord&) const { return 1; }
};

struct AlwaysBenign {
    int operator()(const FlowRecord&) const { return 0; }
};

// Benign for every flow except the one it was built with.
struct BenignUnlessOriginal {
    FlowRecord original;
    int operator()(const FlowRecord& f) const { return f == original ? 1 : 0; }
};

bool non_modifiables_identical(const FlowRecord& a, const FlowRecord& b) {
    return a.dpkts == b.dpkts && a.dbytes == b.dbytes && a.proto == b.proto && a.sport == b.sport &&
           a.dport == b.dport && a.label == b.label;
}

} // namespace

TEST(Masks, MatchBitTable) {
    const std::array<unsigned, 7> bits = {0b001, 0b010, 0b100, 0b011, 0b101, 0b110, 0b111};
    for (int id = 1; id <= 7; ++id) {
        EXPECT_EQ(mask_by_id(id).id, id);
        EXPECT_EQ(mask_by_id(id).bits, bits[static_cast<std::size_t>(id - 1)]);
    }
    EXPECT_TRUE(mask_by_id(1).selects(0));
    EXPECT_FALSE(mask_by_id(1).selects(1));
    EXPECT_THROW(mask_by_id(0), Error);
    EXPECT_THROW(mask_by_id(8), Error);
}

TEST(AttackConfig, Validation) {
    AttackConfig ok;
    EXPECT_NO_THROW(ok.validate());
    auto bad = ok;
    bad.c = 0;
    EXPECT_THROW(bad.validate(), Error);
    bad = ok;
    bad.t_max = 0;
    EXPECT_THROW(bad.validate(), Error);
    bad = ok;
    bad.mask_order = {1, 1, 3, 4, 5, 6, 7};
    EXPECT_THROW(bad.validate(), Error);
}

TEST(AttackConfig, StepSchedules) {
    AttackConfig c;
    EXPECT_DOUBLE_EQ(c.step_scale(4), 0.4);
    c.schedule = StepSchedule::Cumulative;
    EXPECT_DOUBLE_EQ(c.step_scale(4), 1.0);
}

TEST(BenignCentroid, Mean) {
    std::vector<FlowRecord> flows = {dur_flow(1), dur_flow(3)};
    EXPECT_DOUBLE_EQ(benign_centroid(flows)[0], 2);
}

TEST(BenignCentroid, SingleFlow) {
    std::mt19937_64 rng(51);
    std::vector<FlowRecord> one = {random_flow(rng)};
    auto c = benign_centroid(one);
    EXPECT_EQ(c[0], one[0].dur);
    EXPECT_EQ(c[1], one[0].spkts);
    EXPECT_EQ(c[2], one[0].sbytes);
}

TEST(BenignCentroid, Empty) {
    std::vector<FlowRecord> none;
    EXPECT_THROW(benign_centroid(none), Error);
}

TEST(BenignCentroid, MatchesStreamingMean) {
    std::mt19937_64 rng(52);
    auto flows = random_flows(rng, 500, {"benign"});
    auto c = benign_centroid(flows);
    for (std::size_t i = 0; i < 3; ++i) {
        std::vector<double> xs;
        for (const auto& f : flows) xs.push_back(numeric_value(f, kModifiable[i]));
        EXPECT_NEAR(c[i], oracle::streaming_mean(xs), 1e-9 * std::max(1.0, std::abs(c[i])));
    }
}

TEST(BenignCentroidProperty, WithinBenignRange) {
    std::mt19937_64 rng(53);
    for (int i = 0; i < kPropertyCases; ++i) {
        auto flows = random_flows(rng, static_cast<std::size_t>(uniform_int(rng, 1, 40)), {"benign"});
        auto c = benign_centroid(flows);
        auto mm = oracle::minmax_scan(flows);
        for (std::size_t k = 0; k < 3; ++k) {
            const auto f = index_of(kModifiable[k]);
            EXPECT_GE(c[k], mm[f].first * (1 - 1e-12));
            EXPECT_LE(c[k], mm[f].second * (1 + 1e-12));
        }
    }
}

TEST(Perturb, AtCentroidNothingMoves) {
    std::mt19937_64 rng(54);
    auto s = random_setup(rng);
    auto x0 = s.flows.front();
    s.ctx.centroid.mean = {x0.dur, x0.spkts, x0.sbytes};
    AttackConfig cfg;
    for (int t = 1; t <= 10; ++t)
        for (const auto& m : kMasks) EXPECT_EQ(perturb(x0, s.ctx, t, m, cfg), recompute_dependents(x0));
}

TEST(Perturb, SingleFeatureMaskMovesOnlyDuration) {
    std::mt19937_64 rng(55);
    auto s = random_setup(rng);
    AttackConfig cfg;
    for (const auto& x0 : s.flows) {
        auto y = perturb(x0, s.ctx, 3, mask_by_id(1), cfg);
        EXPECT_EQ(y.spkts, x0.spkts);
        EXPECT_EQ(y.sbytes, x0.sbytes);
    }
}

TEST(Perturb, FullStepReachesCentroidInOneDimension) {
    auto ctx = dur_world(40);
    AttackConfig cfg;
    auto y = perturb(dur_flow(10), ctx, 10, mask_by_id(1), cfg);
    EXPECT_NEAR(y.dur, 40, 1e-12 * 100);
    y = perturb(dur_flow(70), ctx, 10, mask_by_id(7), cfg);
    EXPECT_NEAR(y.dur, 40, 1e-12 * 100);
}

TEST(Craft, AlreadyBenignShortCircuits) {
    auto ctx = dur_world(40);
    auto tr = craft(dur_flow(10), AlwaysBenign{}, ctx, AttackConfig{});
    EXPECT_EQ(tr.outcome, Outcome::Evaded);
    EXPECT_EQ(tr.steps_used, 0);
    EXPECT_FALSE(tr.mask_used.has_value());
    EXPECT_EQ(tr.final, tr.original);
    EXPECT_EQ(tr.probes, 0);
}

TEST(Craft, FirstProbeWinsWhenEveryCandidateIsBenign) {
    auto ctx = dur_world(40);
    AttackConfig cfg;
    const auto x0 = dur_flow(10);
    auto tr = craft(x0, BenignUnlessOriginal{x0}, ctx, cfg);
    EXPECT_EQ(tr.outcome, Outcome::Evaded);
    EXPECT_EQ(tr.steps_used, 1);
    ASSERT_TRUE(tr.mask_used.has_value());
    EXPECT_EQ(tr.mask_used->id, 1);
    // First step covers c of the way to the centroid.
    EXPECT_NEAR(tr.delta[0], 0.1 * 30, 1e-12 * 100);
    EXPECT_EQ(tr.delta[1], 0);
    EXPECT_EQ(tr.delta[2], 0);
}

TEST(Craft, ExhaustionAfterSevenProbesPerStep) {
    std::mt19937_64 rng(56);
    auto s = random_setup(rng);
    for (int t_max : {1, 4, 10}) {
        AttackConfig cfg;
        cfg.t_max = t_max;
        auto tr = craft(s.flows.front(), NeverBenign{}, s.ctx, cfg);
        EXPECT_EQ(tr.outcome, Outcome::Failed);
        EXPECT_EQ(tr.probes, 7 * t_max);
        EXPECT_EQ(tr.final, tr.original);
        EXPECT_FALSE(tr.mask_used.has_value());
    }
}

TEST(Craft, ClosedFormThresholdSteps) {
    std::mt19937_64 rng(57);
    AttackConfig cfg;
    int checked = 0;
    while (checked < kPropertyCases) {
        const double centroid = uniform(rng, 20, 90);
        const double dur0 = uniform(rng, 0.5, centroid - 1);
        const double theta = uniform(rng, dur0 + 1e-3, centroid - 1e-6);
        const double ratio = (theta - dur0) / (cfg.c * (centroid - dur0));
        if (std::abs(ratio - std::round(ratio)) < 1e-6) continue; // too close to a step boundary
        auto ctx = dur_world(centroid);
        auto tr = craft(dur_flow(dur0), ThresholdModel{theta}, ctx, cfg);
        ASSERT_EQ(tr.outcome, Outcome::Evaded);
        EXPECT_EQ(tr.steps_used, oracle::threshold_steps(theta, dur0, cfg.c, centroid - dur0))
            << "theta " << theta << " dur0 " << dur0 << " centroid " << centroid;
        EXPECT_EQ(tr.mask_used->id, 1);
        ++checked;
    }
}

TEST(AttackDataset, EmptyInput) {
    auto ctx = dur_world(40);
    std::vector<FlowRecord> none;
    auto traces = attack_dataset(none, NeverBenign{}, ctx, AttackConfig{});
    EXPECT_TRUE(traces.empty());
    auto s = summarize(traces, 10);
    EXPECT_EQ(s.count, 0u);
    EXPECT_EQ(s.evaded, 0u);
    for (auto v : s.mask_histogram) EXPECT_EQ(v, 0u);
    for (auto v : s.step_histogram) EXPECT_EQ(v, 0u);
}

TEST(AttackDataset, AllAlreadyBenign) {
    std::mt19937_64 rng(58);
    auto s = random_setup(rng);
    auto traces = attack_dataset(s.flows, AlwaysBenign{}, s.ctx, AttackConfig{});
    auto sum = summarize(traces, 10);
    EXPECT_EQ(sum.evasion_rate, 1.0);
    for (const auto& t : traces) EXPECT_EQ(t.steps_used, 0);
    EXPECT_EQ(sum.step_histogram[0], s.flows.size());
}

TEST(AttackDataset, HistogramsMatchClosedForm) {
    std::mt19937_64 rng(59);
    const double centroid = 60, theta = 45;
    auto ctx = dur_world(centroid);
    AttackConfig cfg;
    std::vector<FlowRecord> flows;
    std::vector<std::size_t> expected_steps(11, 0);
    while (flows.size() < 200) {
        const double dur0 = uniform(rng, 0, 40);
        const double ratio = (theta - dur0) / (cfg.c * (centroid - dur0));
        if (std::abs(ratio - std::round(ratio)) < 1e-6) continue;
        flows.push_back(dur_flow(dur0));
        ++expected_steps[static_cast<std::size_t>(oracle::threshold_steps(theta, dur0, cfg.c, centroid - dur0))];
    }
    auto traces = attack_dataset(flows, ThresholdModel{theta}, ctx, cfg);
    ASSERT_EQ(traces.size(), flows.size());
    for (std::size_t i = 0; i < flows.size(); ++i) EXPECT_EQ(traces[i].original, flows[i]);
    auto s = summarize(traces, cfg.t_max);
    EXPECT_EQ(s.step_histogram, expected_steps);
    EXPECT_EQ(s.mask_histogram[1], 200u);
    std::size_t total = 0;
    for (auto v : s.mask_histogram) total += v;
    EXPECT_EQ(total, s.evaded);
}

TEST(CraftProperty, EvadedTracesAreBenignValidAndConstrained) {
    std::mt19937_64 rng(60);
    for (int i = 0; i < kPropertyCases; ++i) {
        auto s = random_setup(rng, 40);
        const auto& x0 = s.flows[static_cast<std::size_t>(uniform_int(rng, 0, 39))];
        ThresholdModel model{uniform(rng, 0, 10)};
        auto tr = craft(x0, model, s.ctx, AttackConfig{});
        if (tr.outcome == Outcome::Evaded) {
            EXPECT_EQ(model(tr.final), 0);
        }
        EXPECT_TRUE(is_valid(tr.final, s.ctx.schema)) << "case " << i;
        EXPECT_TRUE(non_modifiables_identical(tr.final, x0));
        EXPECT_EQ(tr.final, recompute_dependents(tr.final));
    }
}

TEST(PerturbProperty, DirectionAndNoOvershoot) {
    std::mt19937_64 rng(61);
    AttackConfig cfg;
    for (int i = 0; i < kPropertyCases; ++i) {
        auto s = random_setup(rng, 30);
        const auto& x0 = s.flows[static_cast<std::size_t>(uniform_int(rng, 0, 29))];
        const int t = uniform_int(rng, 1, 10);
        const auto& mask = mask_by_id(uniform_int(rng, 1, 7));
        auto y = perturb(x0, s.ctx, t, mask, cfg);
        const double m = centroid_distance(x0, s.ctx);
        for (std::size_t k = 0; k < 3; ++k) {
            const Feature f = kModifiable[k];
            const double d = numeric_value(y, f) - numeric_value(x0, f);
            const double to_centroid = s.ctx.centroid[k] - numeric_value(x0, f);
            if (!mask.selects(k)) {
                EXPECT_EQ(d, 0);
                continue;
            }
            EXPECT_GE(d * sign_of(to_centroid), 0) << "case " << i << " " << feature_name(f);
            if (sign_of(to_centroid) == 0) {
                EXPECT_EQ(d, 0);
            }
            const double gap = std::abs(s.ctx.norm.normalize(f, s.ctx.centroid[k]) -
                                        s.ctx.norm.normalize(f, numeric_value(x0, f)));
            // Rounding to whole packets or bytes may add up to half a unit.
            if (cfg.step_scale(t) * m <= gap) {
                EXPECT_LE(std::abs(d), std::abs(to_centroid) * (1 + 1e-12) + (is_integral(f) ? 0.5 : 0.0))
                    << "case " << i << " " << feature_name(f);
            }
        }
    }
}

TEST(PerturbProperty, CollinearAndLinearWithoutProjection) {
    std::mt19937_64 rng(62);
    AttackConfig cfg;
    cfg.project = false;
    for (int i = 0; i < kPropertyCases; ++i) {
        auto s = random_setup(rng, 30);
        const auto& x0 = s.flows[static_cast<std::size_t>(uniform_int(rng, 0, 29))];
        const double m = centroid_distance(x0, s.ctx);
        std::array<double, 3> dir{};
        for (std::size_t k = 0; k < 3; ++k)
            dir[k] = sign_of(s.ctx.centroid[k] - numeric_value(x0, kModifiable[k])) *
                     s.ctx.norm.range(kModifiable[k]);
        auto d1 = perturb(x0, s.ctx, 1, mask_by_id(7), cfg);
        for (int t = 1; t <= 10; ++t) {
            auto y = perturb(x0, s.ctx, t, mask_by_id(7), cfg);
            for (std::size_t k = 0; k < 3; ++k) {
                const Feature f = kModifiable[k];
                const double delta = numeric_value(y, f) - numeric_value(x0, f);
                const double expect = cfg.c * t * m * dir[k];
                const double scale = std::max(1.0, std::abs(numeric_value(x0, f)) + std::abs(expect));
                EXPECT_NEAR(delta, expect, 1e-12 * scale) << "case " << i << " t " << t;
                const double first = numeric_value(d1, f) - numeric_value(x0, f);
                EXPECT_NEAR(delta, t * first, 1e-11 * scale);
            }
        }
    }
}

TEST(PerturbProperty, AnchoredAtOriginal) {
    std::mt19937_64 rng(63);
    AttackConfig cfg;
    for (int i = 0; i < kPropertyCases; ++i) {
        auto s = random_setup(rng, 30);
        const auto& x0 = s.flows[static_cast<std::size_t>(uniform_int(rng, 0, 29))];
        const int t = uniform_int(rng, 1, 10);
        const auto& mask = mask_by_id(uniform_int(rng, 1, 7));
        auto a = perturb(x0, s.ctx, t, mask, cfg);
        // Same call after other steps have been tried gives the same candidate.
        for (int u = 1; u <= 10; ++u) (void)perturb(x0, s.ctx, u, mask, cfg);
        EXPECT_EQ(perturb(x0, s.ctx, t, mask, cfg), a);
    }
}

TEST(CraftProperty, FailedProbeCount) {
    std::mt19937_64 rng(64);
    for (int i = 0; i < kPropertyCases; ++i) {
        auto s = random_setup(rng, 20);
        AttackConfig cfg;
        cfg.t_max = uniform_int(rng, 1, 12);
        auto tr = craft(s.flows[static_cast<std::size_t>(i % 20)], NeverBenign{}, s.ctx, cfg);
        EXPECT_EQ(tr.probes, 7 * cfg.t_max);
    }
}
