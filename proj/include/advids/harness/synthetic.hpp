#pragma once

// Seeded synthetic flow corpus standing in for the IoT datasets.

#include "advids/error.hpp"
#include "advids/flow.hpp"
#include "advids/preprocessing.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace advids::harness {

struct Distribution {
    enum class Kind { Normal, LogNormal };
    Kind kind = Kind::Normal;
    double loc = 0;   // mean (Normal) or mean of log (LogNormal)
    double scale = 1; // standard deviation in the same space

    bool operator==(const Distribution&) const = default;
};

struct ClassSpec {
    std::string name;
    int count = 0;
    Distribution dur, spkts, sbytes, dpkts, dbytes;
    std::vector<std::pair<std::string, double>> protos;
    std::array<double, 3> sport_categories{0, 0, 1}; // WellKnown, Registered, DynamicPrivate weights
    std::array<double, 3> dport_categories{1, 0, 0};
    // When set, dur and sbytes describe one source packet (gap, size) and
    // are scaled by spkts; dbytes likewise by dpkts.
    bool per_packet = false;

    bool operator==(const ClassSpec&) const = default;
};

struct SyntheticSpec {
    std::string benign = "benign";
    std::vector<ClassSpec> classes;

    void validate() const {
        if (classes.size() < 2) throw Error(ErrorKind::InvalidSpec, "synthetic spec needs at least two classes");
        bool has_benign = false;
        for (const auto& c : classes) {
            has_benign |= c.name == benign;
            if (c.count < 2) throw Error(ErrorKind::InvalidSpec, "class '" + c.name + "' needs count >= 2");
            for (const auto* d : {&c.dur, &c.spkts, &c.sbytes, &c.dpkts, &c.dbytes})
                if (!(d->scale > 0)) throw Error(ErrorKind::InvalidSpec, "class '" + c.name + "' has scale <= 0");
            if (c.protos.empty()) throw Error(ErrorKind::InvalidSpec, "class '" + c.name + "' has no protocols");
            for (const auto& [_, w] : c.protos)
                if (!(w >= 0)) throw Error(ErrorKind::InvalidSpec, "negative protocol weight");
            for (const auto* cats : {&c.sport_categories, &c.dport_categories})
                if ((*cats)[0] + (*cats)[1] + (*cats)[2] <= 0)
                    throw Error(ErrorKind::InvalidSpec, "port category weights must not all be zero");
        }
        if (!has_benign) throw Error(ErrorKind::InvalidSpec, "benign class '" + benign + "' missing");
    }
};

namespace detail {

inline double draw(const Distribution& d, std::mt19937_64& rng) {
    std::normal_distribution<double> n(d.loc, d.scale);
    double v = n(rng);
    if (d.kind == Distribution::Kind::LogNormal) v = std::exp(v);
    return std::max(0.0, v);
}

inline int draw_port(const std::array<double, 3>& weights, std::mt19937_64& rng) {
    std::discrete_distribution<int> cat({weights[0], weights[1], weights[2]});
    static constexpr std::array<std::pair<int, int>, 3> ranges = {{{0, 1023}, {1024, 49151}, {49152, 65535}}};
    const auto [lo, hi] = ranges[static_cast<std::size_t>(cat(rng))];
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

} // namespace detail

// Classes are generated in spec order; counts and bytes are rounded to
// integers, duration stays real.
inline std::vector<FlowRecord> generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    std::vector<FlowRecord> out;
    for (const auto& c : spec.classes) {
        std::vector<double> pw;
        for (const auto& [_, w] : c.protos) pw.push_back(w);
        std::discrete_distribution<std::size_t> proto(pw.begin(), pw.end());
        for (int i = 0; i < c.count; ++i) {
            FlowRecord r;
            r.dur = detail::draw(c.dur, rng);
            r.spkts = std::round(detail::draw(c.spkts, rng));
            r.sbytes = detail::draw(c.sbytes, rng);
            r.dpkts = std::round(detail::draw(c.dpkts, rng));
            r.dbytes = detail::draw(c.dbytes, rng);
            if (c.per_packet) {
                r.spkts = std::max(1.0, r.spkts);
                r.dur *= r.spkts;
                r.sbytes *= r.spkts;
                r.dbytes *= r.dpkts;
            }
            r.sbytes = std::round(r.sbytes);
            r.dbytes = std::round(r.dbytes);
            r.proto = c.protos[proto(rng)].first;
            r.sport = detail::draw_port(c.sport_categories, rng);
            r.dport = detail::draw_port(c.dport_categories, rng);
            r.label = c.name;
            out.push_back(recompute_dependents(std::move(r)));
        }
    }
    return out;
}

// Five classes, 2,000 flows. Attack classes differ from benign mostly in
// the attacker-controlled features; the receiver-side features overlap.
// Durations and sizes are drawn per packet, so a flow's rates reflect its
// class.
inline SyntheticSpec default_synthetic_spec() {
    using K = Distribution::Kind;
    auto ln = [](double median, double sigma) { return Distribution{K::LogNormal, std::log(median), sigma}; };
    auto nm = [](double mean, double sd) { return Distribution{K::Normal, mean, sd}; };
    const std::array<double, 3> client{0.0, 0.1, 0.9};
    const std::array<double, 3> service{0.85, 0.15, 0.0};
    SyntheticSpec s;
    s.benign = "benign";
    s.classes = {
        {"benign", 400, ln(0.1, 0.3), nm(20, 3.5), ln(90, 0.3), nm(16, 4), ln(150, 0.3),
         {{"tcp", 0.7}, {"udp", 0.3}}, client, service, true},
        {"ddos", 400, ln(0.003, 0.4), nm(55, 7.5), ln(90, 0.3), nm(14, 4), ln(140, 0.3),
         {{"udp", 0.6}, {"tcp", 0.4}}, client, service, true},
        {"dos", 400, ln(0.016, 0.35), nm(38, 6), ln(100, 0.3), nm(18, 4), ln(145, 0.3),
         {{"tcp", 0.8}, {"udp", 0.2}}, client, service, true},
        {"scanning", 400, ln(0.05, 0.4), nm(8, 2.8), ln(60, 0.3), nm(12, 3.5), ln(150, 0.3),
         {{"tcp", 0.9}, {"icmp", 0.1}}, client, service, true},
        {"backdoor", 400, ln(0.3, 0.35), nm(30, 5.5), ln(30, 0.3), nm(20, 4.5), ln(150, 0.3),
         {{"tcp", 1.0}}, client, service, true},
    };
    return s;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const Distribution& d) {
    return {{"kind", d.kind == Distribution::Kind::Normal ? "normal" : "lognormal"}, {"loc", d.loc}, {"scale", d.scale}};
}

inline Distribution distribution_from_json(const nlohmann::json& j) {
    Distribution d;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "normal") d.kind = Distribution::Kind::Normal;
    else if (kind == "lognormal") d.kind = Distribution::Kind::LogNormal;
    else throw Error(ErrorKind::InvalidSpec, "unknown distribution kind '" + kind + "'");
    d.loc = j.at("loc").get<double>();
    d.scale = j.at("scale").get<double>();
    return d;
}

inline nlohmann::json to_json(const SyntheticSpec& s) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& c : s.classes) {
        nlohmann::json protos = nlohmann::json::array();
        for (const auto& [p, w] : c.protos) protos.push_back({p, w});
        classes.push_back({{"name", c.name},
                           {"count", c.count},
                           {"dur", to_json(c.dur)},
                           {"spkts", to_json(c.spkts)},
                           {"sbytes", to_json(c.sbytes)},
                           {"dpkts", to_json(c.dpkts)},
                           {"dbytes", to_json(c.dbytes)},
                           {"protos", protos},
                           {"sport_categories", c.sport_categories},
                           {"dport_categories", c.dport_categories},
                           {"per_packet", c.per_packet}});
    }
    return {{"benign", s.benign}, {"classes", classes}};
}

inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
    try {
        SyntheticSpec s;
        s.benign = j.value("benign", s.benign);
        for (const auto& c : j.at("classes")) {
            ClassSpec cs;
            cs.name = c.at("name").get<std::string>();
            cs.count = c.at("count").get<int>();
            cs.dur = distribution_from_json(c.at("dur"));
            cs.spkts = distribution_from_json(c.at("spkts"));
            cs.sbytes = distribution_from_json(c.at("sbytes"));
            cs.dpkts = distribution_from_json(c.at("dpkts"));
            cs.dbytes = distribution_from_json(c.at("dbytes"));
            for (const auto& p : c.at("protos")) cs.protos.emplace_back(p.at(0).get<std::string>(), p.at(1).get<double>());
            if (c.contains("sport_categories")) cs.sport_categories = c.at("sport_categories").get<std::array<double, 3>>();
            if (c.contains("dport_categories")) cs.dport_categories = c.at("dport_categories").get<std::array<double, 3>>();
            cs.per_packet = c.value("per_packet", false);
            s.classes.push_back(std::move(cs));
        }
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidSpec, e.what());
    }
}

} // namespace advids::harness
