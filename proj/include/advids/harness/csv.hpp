#pragma once

// Flow CSV ingestion through a column mapping, plus the canonical writer.

#include "advids/error.hpp"
#include "advids/flow.hpp"
#include "advids/preprocessing.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace advids::harness {

// Maps canonical feature names to source column names. Dependent features
// may be left unmapped; they are then computed from their inputs.
struct ColumnMapping {
    std::string name = "canonical";
    char delimiter = ',';
    std::string label_column = "label";
    std::string benign_value = "benign"; // source label rewritten to "benign"
    std::map<std::string, std::string> columns;

    bool operator==(const ColumnMapping&) const = default;
};

inline ColumnMapping canonical_mapping() {
    ColumnMapping m;
    for (auto f : kAllFeatures) m.columns[std::string(feature_name(f))] = std::string(feature_name(f));
    return m;
}

inline nlohmann::json to_json(const ColumnMapping& m) {
    return {{"name", m.name},
            {"delimiter", std::string(1, m.delimiter)},
            {"label_column", m.label_column},
            {"benign_value", m.benign_value},
            {"columns", m.columns}};
}

inline ColumnMapping mapping_from_json(const nlohmann::json& j) {
    try {
        ColumnMapping m;
        m.name = j.value("name", m.name);
        const auto delim = j.value("delimiter", std::string(","));
        if (delim.size() != 1) throw Error(ErrorKind::InvalidConfig, "delimiter must be one character");
        m.delimiter = delim[0];
        m.label_column = j.value("label_column", m.label_column);
        m.benign_value = j.value("benign_value", m.benign_value);
        for (const auto& [k, v] : j.at("columns").items()) {
            if (!feature_from_name(k)) throw Error(ErrorKind::InvalidConfig, "unknown feature '" + k + "' in mapping");
            if (!v.is_null()) m.columns[k] = v.get<std::string>();
        }
        for (auto f : kAllFeatures)
            if (group_of(f) != FeatureGroup::Dependent && !m.columns.contains(std::string(feature_name(f))))
                throw Error(ErrorKind::InvalidConfig, "mapping lacks feature '" + std::string(feature_name(f)) + "'");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("mapping: ") + e.what());
    }
}

inline ColumnMapping load_mapping(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::UnreadableFile, "cannot read mapping " + path);
    try {
        return mapping_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::InvalidConfig, "mapping " + path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Parsing

// Splits one record; double quotes group fields and "" escapes a quote.
inline std::vector<std::string> split_csv_line(std::string_view line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == delim) {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    double v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

// Decimal or 0x-prefixed hexadecimal.
inline std::optional<int> parse_port(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        s.remove_prefix(2);
        base = 16;
    }
    long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (ec != std::errc{} || p != s.data() + s.size() || v < 0 || v > kMaxPort) return std::nullopt;
    return static_cast<int>(v);
}

struct IngestStats {
    std::size_t rows = 0;
    std::size_t skipped = 0;    // failed type parsing
    std::size_t repaired = 0;   // supplied dependents disagreed with their inputs
    std::size_t duplicates = 0; // removed by clean()
};

inline constexpr double kRepairTolerance = 1e-6;

inline bool dependents_disagree(const FlowRecord& supplied, const FlowRecord& computed,
                                const std::vector<Feature>& present) {
    for (auto f : present) {
        const double a = numeric_value(supplied, f), b = numeric_value(computed, f);
        if (std::abs(a - b) > kRepairTolerance * std::max({1.0, std::abs(a), std::abs(b)})) return true;
    }
    return false;
}

inline std::vector<FlowRecord> ingest_csv(std::istream& in, const ColumnMapping& mapping, IngestStats* stats = nullptr) {
    IngestStats st;
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::EmptyDataset, "CSV has no header row");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split_csv_line(line, mapping.delimiter);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col.emplace(std::string(trim(header[i])), i);

    auto locate = [&](const std::string& name) {
        auto it = col.find(name);
        if (it == col.end()) throw Error(ErrorKind::MissingColumn, "CSV lacks column '" + name + "'");
        return it->second;
    };
    std::array<std::optional<std::size_t>, kFeatureCount> where;
    std::vector<Feature> supplied_dependents;
    for (auto f : kAllFeatures) {
        auto it = mapping.columns.find(std::string(feature_name(f)));
        if (it == mapping.columns.end()) {
            if (group_of(f) != FeatureGroup::Dependent)
                throw Error(ErrorKind::MissingColumn, "mapping lacks feature '" + std::string(feature_name(f)) + "'");
            continue;
        }
        where[index_of(f)] = locate(it->second);
        if (group_of(f) == FeatureGroup::Dependent) supplied_dependents.push_back(f);
    }
    const std::size_t label_col = locate(mapping.label_column);

    std::vector<FlowRecord> parsed;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++st.rows;
        const auto cells = split_csv_line(line, mapping.delimiter);
        auto cell = [&](std::size_t i) -> std::string_view { return i < cells.size() ? std::string_view(cells[i]) : ""; };

        FlowRecord r;
        bool ok = label_col < cells.size();
        for (auto f : kAllFeatures) {
            if (!ok) break;
            const auto& w = where[index_of(f)];
            if (!w) continue;
            const auto text = cell(*w);
            if (f == Feature::Proto) {
                r.proto = std::string(trim(text));
                ok = !r.proto.empty();
            } else if (f == Feature::Sport || f == Feature::Dport) {
                auto p = parse_port(text);
                ok = p.has_value();
                if (ok) (f == Feature::Sport ? r.sport : r.dport) = *p;
            } else {
                auto v = parse_number(text);
                ok = v.has_value() && *v >= 0;
                if (ok) {
                    switch (f) {
                    case Feature::Dur: r.dur = *v; break;
                    case Feature::Spkts: r.spkts = *v; break;
                    case Feature::Sbytes: r.sbytes = *v; break;
                    case Feature::Pkts: r.pkts = *v; break;
                    case Feature::Bytes: r.bytes = *v; break;
                    case Feature::Rate: r.rate = *v; break;
                    case Feature::Srate: r.srate = *v; break;
                    case Feature::Drate: r.drate = *v; break;
                    case Feature::Dpkts: r.dpkts = *v; break;
                    case Feature::Dbytes: r.dbytes = *v; break;
                    default: break;
                    }
                }
            }
        }
        if (!ok) {
            ++st.skipped;
            continue;
        }
        const auto label = std::string(trim(cell(label_col)));
        r.label = label == mapping.benign_value ? "benign" : label;
        FlowRecord fixed = recompute_dependents(r);
        if (dependents_disagree(r, fixed, supplied_dependents)) ++st.repaired;
        parsed.push_back(std::move(fixed));
    }

    CleanStats cs;
    auto out = clean(parsed, &cs);
    st.duplicates = cs.duplicates_removed;
    if (stats) *stats = st;
    return out;
}

inline std::vector<FlowRecord> ingest_csv(const std::string& path, const ColumnMapping& mapping,
                                          IngestStats* stats = nullptr) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::UnreadableFile, "cannot read " + path);
    return ingest_csv(in, mapping, stats);
}

// ---------------------------------------------------------------------------
// Canonical CSV: the 13 features in declaration order plus label, doubles at
// round-trip precision.

inline std::string format_double(double v) {
    char buf[32];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc{} ? std::string(buf, p) : std::string("nan");
}

inline std::string csv_escape(const std::string& s, char delim) {
    if (s.find_first_of(std::string{'"', delim, '\n', '\r'}) == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + '"';
}

inline void write_canonical_csv(std::ostream& out, std::span<const FlowRecord> flows) {
    for (auto f : kAllFeatures) out << feature_name(f) << ',';
    out << "label\n";
    for (const auto& r : flows) {
        for (auto f : kAllFeatures) {
            if (f == Feature::Proto) out << csv_escape(r.proto, ',');
            else if (f == Feature::Sport) out << r.sport;
            else if (f == Feature::Dport) out << r.dport;
            else out << format_double(numeric_value(r, f));
            out << ',';
        }
        out << csv_escape(r.label, ',') << '\n';
    }
}

inline void write_canonical_csv(const std::string& path, std::span<const FlowRecord> flows) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path);
    write_canonical_csv(out, flows);
    if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path);
}

} // namespace advids::harness
