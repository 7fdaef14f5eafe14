#include "advids/preprocessing.hpp"

#include "support/generators.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>

using namespace advids;
using namespace advids::testing;

namespace {

FlowRecord flow_with(double dur, const std::string& label) {
    FlowRecord f;
    f.dur = dur;
    f.spkts = 2;
    f.dpkts = 1;
    f.proto = "tcp";
    f.sport = 50000;
    f.dport = 80;
    f.label = label;
    return recompute_dependents(f);
}

std::map<std::string, std::size_t> label_counts(const std::vector<FlowRecord>& v) {
    std::map<std::string, std::size_t> m;
    for (const auto& r : v) ++m[r.label];
    return m;
}

bool less_flow(const FlowRecord& a, const FlowRecord& b) {
    return std::tie(a.dur, a.spkts, a.sbytes, a.dpkts, a.dbytes, a.proto, a.sport, a.dport, a.label) <
           std::tie(b.dur, b.spkts, b.sbytes, b.dpkts, b.dbytes, b.proto, b.sport, b.dport, b.label);
}

} // namespace

TEST(Clean, RemovesDuplicatesKeepingFirst) {
    auto f = flow_with(1, "a"), g = flow_with(2, "b");
    std::vector<FlowRecord> in = {f, f, g};
    CleanStats st;
    auto out = clean(in, &st);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0], f);
    EXPECT_EQ(out[1], g);
    EXPECT_EQ(st.duplicates_removed, 1u);
}

TEST(Clean, RepairsDependentFormula) {
    FlowRecord f;
    f.spkts = 10;
    f.dpkts = 5;
    f.dur = 1;
    f = recompute_dependents(f);
    f.pkts = 99;
    std::vector<FlowRecord> in = {f};
    CleanStats st;
    auto out = clean(in, &st);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].pkts, 15);
    EXPECT_EQ(st.repaired, 1u);
}

TEST(Clean, DuplicateCountMatchesSetOracle) {
    std::mt19937_64 rng(21);
    auto base = random_flows(rng, 900);
    std::vector<FlowRecord> in = base;
    for (int i = 0; i < 100; ++i) in.push_back(base[static_cast<std::size_t>(uniform_int(rng, 0, 899))]);
    std::shuffle(in.begin(), in.end(), rng);
    auto out = clean(in);
    EXPECT_EQ(out.size(), oracle::distinct_count(in));
}

TEST(CategorizePort, Boundaries) {
    EXPECT_EQ(categorize_port(80), PortCategory::WellKnown);
    EXPECT_EQ(categorize_port(0), PortCategory::WellKnown);
    EXPECT_EQ(categorize_port(1023), PortCategory::WellKnown);
    EXPECT_EQ(categorize_port(1024), PortCategory::Registered);
    EXPECT_EQ(categorize_port(49151), PortCategory::Registered);
    EXPECT_EQ(categorize_port(49152), PortCategory::DynamicPrivate);
    EXPECT_EQ(categorize_port(65535), PortCategory::DynamicPrivate);
}

TEST(CategorizePort, OutOfRange) {
    for (int p : {-1, 65536}) {
        try {
            categorize_port(p);
            FAIL() << p;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::OutOfRange);
        }
    }
}

TEST(Normalizer, Midpoint) {
    std::vector<FlowRecord> train = {flow_with(2, "a"), flow_with(4, "a"), flow_with(6, "a")};
    auto p = fit_normalizer(train);
    EXPECT_EQ(p.min[index_of(Feature::Dur)], 2);
    EXPECT_EQ(p.max[index_of(Feature::Dur)], 6);
    EXPECT_DOUBLE_EQ(p.normalize(Feature::Dur, 4), 0.5);
}

TEST(Normalizer, ConstantFeatureMapsToZero) {
    std::vector<FlowRecord> train = {flow_with(5, "a"), flow_with(5, "a")};
    auto p = fit_normalizer(train);
    EXPECT_TRUE(p.is_constant(Feature::Dur));
    EXPECT_EQ(p.normalize(Feature::Dur, 5), 0);
    EXPECT_EQ(p.normalize(Feature::Dur, 9), 0);
}

TEST(Normalizer, EmptyIsAnError) {
    std::vector<FlowRecord> none;
    EXPECT_THROW(fit_normalizer(none), Error);
}

TEST(Normalizer, MatchesScanOracle) {
    std::mt19937_64 rng(22);
    auto flows = random_flows(rng, 200);
    auto p = fit_normalizer(flows);
    auto mm = oracle::minmax_scan(flows);
    for (auto f : kNormalizedFeatures) {
        EXPECT_EQ(p.min[index_of(f)], mm[index_of(f)].first) << feature_name(f);
        EXPECT_EQ(p.max[index_of(f)], mm[index_of(f)].second) << feature_name(f);
    }
}

TEST(Normalizer, TestValuesAreNotClamped) {
    std::vector<FlowRecord> train = {flow_with(2, "a"), flow_with(4, "a")};
    auto p = fit_normalizer(train);
    EXPECT_DOUBLE_EQ(p.normalize(Feature::Dur, 6), 2.0);
    EXPECT_DOUBLE_EQ(p.normalize(Feature::Dur, 0), -1.0);
}

TEST(NormalizerProperty, RoundTrip) {
    std::mt19937_64 rng(23);
    for (int i = 0; i < kPropertyCases; ++i) {
        auto flows = random_flows(rng, 10);
        auto p = fit_normalizer(flows);
        for (auto f : kNormalizedFeatures) {
            if (p.is_constant(f)) continue;
            const double v = uniform(rng, p.min[index_of(f)], p.max[index_of(f)]);
            const double back = p.denormalize(f, p.normalize(f, v));
            EXPECT_NEAR(back, v, 1e-12 * std::max(1.0, std::abs(v))) << feature_name(f);
        }
    }
}

TEST(Encoder, TrainingExtremesMapToZeroAndOne) {
    std::mt19937_64 rng(21);
    auto train = random_flows(rng, 30);
    auto enc = Encoder::fit(train);
    for (std::size_t k = 0; k < kNormalizedFeatures.size(); ++k) {
        const Feature f = kNormalizedFeatures[k];
        if (enc.params().is_constant(f)) continue;
        auto [lo, hi] = std::minmax_element(train.begin(), train.end(), [f](const auto& a, const auto& b) {
            return numeric_value(a, f) < numeric_value(b, f);
        });
        EXPECT_EQ(enc.encode(*lo)[k], 0) << feature_name(f);
        EXPECT_NEAR(enc.encode(*hi)[k], 1, 1e-12) << feature_name(f);
    }
}

TEST(Encoder, ProtocolOneHot) {
    std::vector<FlowRecord> train = {flow_with(1, "a"), flow_with(2, "a")};
    train[1].proto = "udp";
    auto enc = Encoder::fit(train);
    ASSERT_EQ(enc.vocab().protos, (std::vector<std::string>{"tcp", "udp", kOtherProto}));
    auto x = enc.encode(train[0]);
    const std::size_t base = kNormalizedFeatures.size();
    EXPECT_EQ(x[base], 1);
    EXPECT_EQ(x[base + 1], 0);
    EXPECT_EQ(x[base + 2], 0);
}

TEST(Encoder, UnseenProtocolGoesToOther) {
    std::vector<FlowRecord> train = {flow_with(1, "a"), flow_with(2, "a")};
    auto enc = Encoder::fit(train);
    auto f = train[0];
    f.proto = "icmpv6";
    auto x = enc.encode(f);
    const std::size_t base = kNormalizedFeatures.size();
    EXPECT_EQ(x[base + enc.vocab().protos.size() - 1], 1);
}

TEST(EncoderProperty, OneHotBlocksSumToOneAndNumericIsAffine) {
    std::mt19937_64 rng(24);
    for (int i = 0; i < kPropertyCases; ++i) {
        auto train = random_flows(rng, 20);
        auto enc = Encoder::fit(train);
        auto f = random_flow(rng);
        auto x = enc.encode(f);
        ASSERT_EQ(x.size(), enc.dim());
        EXPECT_EQ(x, enc.encode(f));
        std::size_t i0 = kNormalizedFeatures.size();
        const std::size_t np = enc.vocab().protos.size();
        auto block_sum = [&](std::size_t from, std::size_t n) {
            return std::accumulate(x.begin() + static_cast<std::ptrdiff_t>(from),
                                   x.begin() + static_cast<std::ptrdiff_t>(from + n), 0.0);
        };
        EXPECT_EQ(block_sum(i0, np), 1);
        EXPECT_EQ(block_sum(i0 + np, kPortCategoryCount), 1);
        EXPECT_EQ(block_sum(i0 + np + kPortCategoryCount, kPortCategoryCount), 1);
        // Increasing in dur whenever dur is not constant.
        auto g = f;
        g.dur += 1;
        auto y = enc.encode(recompute_dependents(g));
        if (!enc.params().is_constant(Feature::Dur)) {
            EXPECT_GT(y[0], x[0]);
        }
        for (const auto& t : train)
            for (std::size_t k = 0; k < kNormalizedFeatures.size(); ++k) {
                const double v = enc.encode(t)[k];
                EXPECT_GE(v, 0);
                EXPECT_LE(v, 1);
            }
    }
}

TEST(Partition, SmallestCase) {
    std::vector<FlowRecord> flows;
    for (int i = 0; i < 4; ++i) flows.push_back(flow_with(i + 1, "a"));
    for (int i = 0; i < 4; ++i) flows.push_back(flow_with(i + 10, "b"));
    auto p = partition(flows, 1);
    // Each half holds two flows per class; one of its four goes to test.
    for (const auto* q : {&p.defender_train, &p.attacker_train}) {
        EXPECT_EQ(q->size(), 3u);
        EXPECT_EQ(label_counts(*q).size(), 2u);
    }
    EXPECT_EQ(p.defender_test.size(), 1u);
    EXPECT_EQ(p.attacker_test.size(), 1u);
}

TEST(Partition, Deterministic) {
    std::mt19937_64 rng(25);
    auto flows = random_flows(rng, 300, {"benign", "x", "y"});
    auto a = partition(flows, 42), b = partition(flows, 42);
    EXPECT_EQ(a.defender_train, b.defender_train);
    EXPECT_EQ(a.defender_test, b.defender_test);
    EXPECT_EQ(a.attacker_train, b.attacker_train);
    EXPECT_EQ(a.attacker_test, b.attacker_test);
}

TEST(Partition, TooFewInstances) {
    std::vector<FlowRecord> flows;
    for (int i = 0; i < 7; ++i) flows.push_back(flow_with(i + 1, i < 4 ? "a" : "b"));
    EXPECT_THROW(partition(flows, 1), Error);
    flows.push_back(flow_with(20, "c"));
    EXPECT_THROW(partition(flows, 1), Error);
}

TEST(Partition, ClassProportionsWithinTwoPercent) {
    std::mt19937_64 rng(26);
    std::vector<FlowRecord> flows;
    const std::vector<std::pair<std::string, int>> sizes = {{"benign", 4000}, {"a", 3000}, {"b", 2000}, {"c", 1000}};
    for (const auto& [label, n] : sizes)
        for (int i = 0; i < n; ++i) flows.push_back(random_flow(rng, {label}));
    auto p = partition(flows, 7);
    for (const auto* q : {&p.defender_train, &p.defender_test, &p.attacker_train, &p.attacker_test}) {
        auto c = label_counts(*q);
        for (const auto& [label, n] : sizes) {
            const double global = n / 10000.0;
            const double local = static_cast<double>(c[label]) / static_cast<double>(q->size());
            EXPECT_NEAR(local, global, 0.02) << label;
        }
    }
}

TEST(PartitionProperty, DisjointCoverAndSizes) {
    std::mt19937_64 rng(27);
    for (int i = 0; i < kPropertyCases; ++i) {
        const int n = uniform_int(rng, 8, 120);
        std::vector<FlowRecord> flows;
        for (int k = 0; k < n; ++k) flows.push_back(random_flow(rng, {"benign", "a", "b"}));
        // Guarantee at least two of every present class.
        for (const auto& l : {"benign", "a", "b"})
            for (int k = 0; k < 2; ++k) flows.push_back(random_flow(rng, {l}));
        const auto seed = static_cast<std::uint64_t>(i);
        auto p = partition(flows, seed);

        std::vector<FlowRecord> all;
        for (const auto* q : {&p.defender_train, &p.defender_test, &p.attacker_train, &p.attacker_test})
            all.insert(all.end(), q->begin(), q->end());
        auto a = all, b = flows;
        std::sort(a.begin(), a.end(), less_flow);
        std::sort(b.begin(), b.end(), less_flow);
        EXPECT_EQ(a, b) << "case " << i;

        const auto def = p.defender_train.size() + p.defender_test.size();
        const auto att = p.attacker_train.size() + p.attacker_test.size();
        // Odd classes alternate their extra flow, so the halves differ by at most one.
        EXPECT_LE(std::max(def, att) - std::min(def, att), 1u) << "case " << i;
        for (auto [tr, te] : {std::pair{&p.defender_train, &p.defender_test}, {&p.attacker_train, &p.attacker_test}}) {
            const double total = static_cast<double>(tr->size() + te->size());
            EXPECT_LE(std::abs(static_cast<double>(te->size()) - 0.25 * total), 1.0) << "case " << i;
        }
    }
}
