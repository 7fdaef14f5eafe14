#pragma once

// Run artifacts. Everything except timing.json / timing.txt /
// plots/timing.csv is a pure function of (config, seed).
//
//   manifest.json         format, config hash, seed, file list
//   config.json           resolved configuration
//   results.json          all non-timing results; summary.txt is rendered from it
//   summary.txt           fixed-width tables
//   traces/<FAMILY>.jsonl one record per crafted flow
//   verdicts/<rule>.jsonl one filter verdict per adversarial flow
//   plots/*.csv           long-format columns for plotting
//   timing.json, timing.txt, plots/timing.csv

#include "advids/attack.hpp"
#include "advids/defense.hpp"
#include "advids/error.hpp"
#include "advids/harness/config.hpp"
#include "advids/harness/csv.hpp"
#include "advids/harness/experiment.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace advids::harness {

inline constexpr const char* kResultsFormat = "advids-results";
inline constexpr const char* kManifestFormat = "advids-run";
inline constexpr int kReportVersion = 1;

using nlohmann::json;

namespace detail {

inline json flow_json(const FlowRecord& r) {
    json j = json::object();
    for (auto f : kAllFeatures) {
        const std::string k(feature_name(f));
        if (f == Feature::Proto) j[k] = r.proto;
        else if (f == Feature::Sport) j[k] = r.sport;
        else if (f == Feature::Dport) j[k] = r.dport;
        else j[k] = numeric_value(r, f);
    }
    j["label"] = r.label;
    return j;
}

inline json delta_json(const std::array<double, 3>& d) {
    return {{"dur", d[0]}, {"spkts", d[1]}, {"sbytes", d[2]}};
}

inline json summary_json(const AttackSummary& s) {
    return {{"count", s.count},
            {"evaded", s.evaded},
            {"evasion_rate", s.evasion_rate},
            {"mask_histogram", s.mask_histogram},
            {"step_histogram", s.step_histogram},
            {"mean_abs_delta", delta_json(s.mean_abs_delta)}};
}

inline json report_json(const ml::EvalReport& r, const ClassList& classes) {
    json per = json::array();
    for (int c = 0; c < classes.size(); ++c) {
        const auto k = static_cast<std::size_t>(c);
        per.push_back({{"class", classes.name(c)},
                       {"precision", r.precision[k]},
                       {"recall", r.recall[k]},
                       {"f1", r.f1[k]},
                       {"support", r.support(c)}});
    }
    return {{"macro_precision", r.macro_precision},
            {"macro_recall", r.macro_recall},
            {"macro_f1", r.macro_f1},
            {"accuracy", r.accuracy},
            {"per_class", per}};
}

inline json family_names() {
    json a = json::array();
    for (auto f : ml::kFamilies) a.push_back(ml::family_name(f));
    return a;
}

inline json matrix_json(const TransferabilityMatrix& m) {
    json rows = json::array();
    for (std::size_t d = 0; d < kFamilyCount; ++d)
        rows.push_back({{"defender", ml::family_name(ml::kFamilies[d])},
                        {"cells", m.cells[d]},
                        {"average", m.row_average[d]}});
    return {{"name", m.name}, {"attackers", family_names()}, {"rows", rows}, {"average", m.average}};
}

template <class Pred>
std::vector<AdversarialTrace> traces_where(std::span<const AdversarialTrace> all, Pred p) {
    std::vector<AdversarialTrace> out;
    for (const auto& t : all)
        if (p(t)) out.push_back(t);
    return out;
}

} // namespace detail

inline json results_json(const RunResults& run) {
    const auto& x = run.attack;
    const auto& cfg = x.config;
    json j;
    j["format"] = kResultsFormat;
    j["version"] = kReportVersion;
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.seed;
    j["dataset"] = {{"flows", x.n_flows},
                    {"rows", x.ingest.rows},
                    {"skipped", x.ingest.skipped},
                    {"repaired", x.ingest.repaired},
                    {"duplicates", x.ingest.duplicates}};
    j["classes"] = x.classes.names();
    j["partition"] = {{"defender_train", x.defender.train.size()},
                      {"defender_test", x.defender.test.size()},
                      {"attacker_train", x.attacker.train.size()},
                      {"attacker_test", x.attacker.test.size()}};

    json models = json::array();
    for (const auto* side : {&x.defender, &x.attacker}) {
        for (std::size_t i = 0; i < kFamilyCount; ++i) {
            const auto& sel = side->models[i];
            models.push_back({{"side", side == &x.defender ? "defender" : "attacker"},
                              {"family", ml::family_name(ml::kFamilies[i])},
                              {"params", ml::to_json(sel.model.hyperparams())},
                              {"validation_macro_f1", sel.validation_macro_f1},
                              {"test", detail::report_json(side->test_report[i], x.classes)}});
        }
    }
    j["models"] = models;

    const int t_max = cfg.attack.t_max;
    json subs = json::array();
    for (std::size_t a = 0; a < kFamilyCount; ++a) {
        json s = detail::summary_json(summarize(x.traces[a], t_max));
        s["family"] = ml::family_name(ml::kFamilies[a]);
        json by_class = json::array();
        for (int c = 0; c < x.classes.size(); ++c) {
            if (c == x.defender.ctx.target_index) continue;
            const auto& name = x.classes.name(c);
            auto sub = detail::traces_where(x.traces[a], [&](const auto& t) { return t.original.label == name; });
            json cs = detail::summary_json(summarize(sub, t_max));
            cs["class"] = name;
            by_class.push_back(cs);
        }
        s["by_class"] = by_class;
        subs.push_back(s);
    }
    json detection = json::array();
    for (std::size_t d = 0; d < kFamilyCount; ++d) {
        for (std::size_t a = 0; a < kFamilyCount; ++a) {
            const auto& t = x.detection[d][a];
            json by_class = json::array();
            for (int c = 0; c < x.classes.size(); ++c) {
                const auto& cell = t.per_class[static_cast<std::size_t>(c)];
                if (cell.n == 0) continue;
                by_class.push_back(
                    {{"class", x.classes.name(c)}, {"n", cell.n}, {"before", cell.before}, {"after", cell.after}});
            }
            detection.push_back({{"defender", ml::family_name(ml::kFamilies[d])},
                                 {"attacker", ml::family_name(ml::kFamilies[a])},
                                 {"n", t.total.n},
                                 {"before", t.total.before},
                                 {"after", t.total.after},
                                 {"before_rate", t.total.before_rate()},
                                 {"after_rate", t.total.after_rate()},
                                 {"by_class", by_class}});
        }
    }
    j["attack"] = {{"inputs", x.attack_inputs.size()},
                   {"t_max", t_max},
                   {"substitutes", subs},
                   {"detection", detection},
                   {"mean_before", x.mean_before()},
                   {"mean_after", x.mean_after()},
                   {"mean_drop", x.mean_before() - x.mean_after()}};

    if (run.defense) {
        const auto& dx = *run.defense;
        json dets = json::array();
        for (const auto& sd : dx.ensemble.detectors())
            dets.push_back({{"feature", feature_name(sd.feature)}, {"recall", sd.recall}, {"weight", sd.weight}});
        json matrices = json::array({detail::matrix_json(dx.no_defense)});
        for (const auto& m : dx.with_defense) matrices.push_back(detail::matrix_json(m));
        matrices.push_back(detail::matrix_json(dx.baseline));
        json filters = json::array();
        for (const auto& fs : dx.filters)
            filters.push_back({{"rule", rule_name(fs.rule)},
                               {"adversarial_flag_rate", fs.adversarial_flag_rate},
                               {"benign_flag_rate", fs.clean_flag_rate.benign},
                               {"malicious_flag_rate", fs.clean_flag_rate.malicious},
                               {"passthrough_identical", fs.passthrough_identical}});
        j["defense"] = {{"dataset",
                         {{"clean", dx.dataset_clean},
                          {"adversarial", dx.dataset_adversarial},
                          {"train", dx.train_size},
                          {"calibration", dx.calibration_size}}},
                        {"defender_traces_evaded", dx.defender_traces_evaded},
                        {"subdetectors", dets},
                        {"matrices", matrices},
                        {"filters", filters},
                        {"baseline",
                         {{"benign_flag_rate", dx.baseline_clean_flag_rate.benign},
                          {"malicious_flag_rate", dx.baseline_clean_flag_rate.malicious}}}};
    }
    return j;
}

// Mean generation time per (substitute family, attack class).
inline json timing_json(const AttackExperiment& x) {
    json rows = json::array();
    for (std::size_t a = 0; a < kFamilyCount; ++a) {
        for (int c = 0; c < x.classes.size(); ++c) {
            if (c == x.defender.ctx.target_index) continue;
            const auto& name = x.classes.name(c);
            auto sub = detail::traces_where(x.traces[a], [&](const auto& t) { return t.original.label == name; });
            if (sub.empty()) continue;
            rows.push_back({{"attacker", ml::family_name(ml::kFamilies[a])},
                            {"class", name},
                            {"mean_gen_time_s", summarize(sub, x.config.attack.t_max).mean_gen_time_s}});
        }
    }
    return {{"format", "advids-timing"}, {"version", kReportVersion}, {"mean_gen_time", rows}};
}

// ---------------------------------------------------------------------------
// Text rendering

namespace detail {

inline std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

inline std::string pad(std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
}

inline std::string rpad(const std::string& s, std::size_t w) {
    return s.size() < w ? std::string(w - s.size(), ' ') + s : s;
}

inline void render_matrix(std::ostream& out, const json& m) {
    out << "[transferability: " << m.at("name").get<std::string>() << "]\n";
    out << pad("defender\\attacker", 18);
    for (const auto& a : m.at("attackers")) out << rpad(a.get<std::string>(), 8);
    out << rpad("Average", 9) << '\n';
    for (const auto& r : m.at("rows")) {
        out << pad(r.at("defender").get<std::string>(), 18);
        for (const auto& v : r.at("cells")) out << rpad(fmt("%.4f", v.get<double>()), 8);
        out << rpad(fmt("%.4f", r.at("average").get<double>()), 9) << '\n';
    }
    out << pad("overall", 18) << fmt("%.4f", m.at("average").get<double>()) << "\n\n";
}

} // namespace detail

inline std::string render_summary(const json& r) {
    using detail::fmt;
    using detail::pad;
    using detail::rpad;
    std::ostringstream out;
    out << "advids run  config " << r.at("config_hash").get<std::string>() << "  seed " << r.at("seed").get<std::uint64_t>()
        << "\n\n";
    const auto& ds = r.at("dataset");
    out << "[dataset]\n"
        << "flows " << ds.at("flows") << "  rows " << ds.at("rows") << "  skipped " << ds.at("skipped") << "  repaired "
        << ds.at("repaired") << "  duplicates " << ds.at("duplicates") << "\nclasses";
    for (const auto& c : r.at("classes")) out << ' ' << c.get<std::string>();
    const auto& p = r.at("partition");
    out << "\npartition  defender " << p.at("defender_train") << '/' << p.at("defender_test") << "  attacker "
        << p.at("attacker_train") << '/' << p.at("attacker_test") << "  (train/test)\n\n";

    out << "[models]\n"
        << pad("side", 10) << pad("family", 8) << rpad("val_f1", 8) << rpad("test_f1", 9) << rpad("test_acc", 9)
        << "  params\n";
    for (const auto& m : r.at("models")) {
        out << pad(m.at("side").get<std::string>(), 10) << pad(m.at("family").get<std::string>(), 8)
            << rpad(fmt("%.4f", m.at("validation_macro_f1").get<double>()), 8)
            << rpad(fmt("%.4f", m.at("test").at("macro_f1").get<double>()), 9)
            << rpad(fmt("%.4f", m.at("test").at("accuracy").get<double>()), 9) << "  " << m.at("params").dump() << '\n';
    }
    out << '\n';

    const auto& at = r.at("attack");
    out << "[attack]\ninputs " << at.at("inputs") << "  t_max " << at.at("t_max") << "\n"
        << pad("substitute", 12) << rpad("evaded", 8) << rpad("rate", 8) << "  masks 0..7 | steps 0..t_max\n";
    for (const auto& s : at.at("substitutes")) {
        out << pad(s.at("family").get<std::string>(), 12) << rpad(std::to_string(s.at("evaded").get<int>()), 8)
            << rpad(fmt("%.4f", s.at("evasion_rate").get<double>()), 8) << " ";
        for (const auto& v : s.at("mask_histogram")) out << ' ' << v;
        out << " |";
        for (const auto& v : s.at("step_histogram")) out << ' ' << v;
        out << '\n';
    }
    out << '\n' << "[mask usage by attack class]\n" << pad("substitute", 12) << pad("class", 12);
    for (int m = 0; m <= 7; ++m) out << rpad("m" + std::to_string(m), 6);
    out << '\n';
    for (const auto& s : at.at("substitutes"))
        for (const auto& c : s.at("by_class")) {
            out << pad(s.at("family").get<std::string>(), 12) << pad(c.at("class").get<std::string>(), 12);
            for (const auto& v : c.at("mask_histogram")) out << rpad(std::to_string(v.get<int>()), 6);
            out << '\n';
        }
    out << '\n' << "[mean |delta| over evaded flows]\n"
        << pad("substitute", 12) << pad("class", 12) << rpad("dur", 12) << rpad("spkts", 12) << rpad("sbytes", 12)
        << '\n';
    for (const auto& s : at.at("substitutes"))
        for (const auto& c : s.at("by_class")) {
            const auto& d = c.at("mean_abs_delta");
            out << pad(s.at("family").get<std::string>(), 12) << pad(c.at("class").get<std::string>(), 12)
                << rpad(fmt("%.4f", d.at("dur").get<double>()), 12) << rpad(fmt("%.2f", d.at("spkts").get<double>()), 12)
                << rpad(fmt("%.2f", d.at("sbytes").get<double>()), 12) << '\n';
        }

    out << '\n' << "[detection before -> after attack]\n" << pad("defender\\attacker", 18);
    for (const auto& a : detail::family_names()) out << rpad(a.get<std::string>(), 15);
    out << '\n';
    for (std::size_t d = 0; d < kFamilyCount; ++d) {
        out << pad(std::string(ml::family_name(ml::kFamilies[d])), 18);
        for (std::size_t a = 0; a < kFamilyCount; ++a) {
            const auto& cell = at.at("detection").at(d * kFamilyCount + a);
            out << rpad(fmt("%.3f", cell.at("before_rate").get<double>()) + "->" +
                            fmt("%.3f", cell.at("after_rate").get<double>()),
                        15);
        }
        out << '\n';
    }
    out << "mean before " << fmt("%.4f", at.at("mean_before").get<double>()) << "  after "
        << fmt("%.4f", at.at("mean_after").get<double>()) << "  drop " << fmt("%.4f", at.at("mean_drop").get<double>())
        << "\n\n";

    out << "[detection by attack class, defender x substitute pooled]\n"
        << pad("class", 12) << rpad("n", 8) << rpad("before", 9) << rpad("after", 9) << '\n';
    std::vector<std::string> order;
    std::map<std::string, std::array<std::size_t, 3>> pooled;
    for (const auto& cell : at.at("detection"))
        for (const auto& c : cell.at("by_class")) {
            const auto name = c.at("class").get<std::string>();
            if (!pooled.contains(name)) order.push_back(name);
            auto& v = pooled[name];
            v[0] += c.at("n").get<std::size_t>();
            v[1] += c.at("before").get<std::size_t>();
            v[2] += c.at("after").get<std::size_t>();
        }
    for (const auto& name : order) {
        const auto& v = pooled[name];
        out << pad(name, 12) << rpad(std::to_string(v[0]), 8)
            << rpad(fmt("%.4f", static_cast<double>(v[1]) / static_cast<double>(v[0])), 9)
            << rpad(fmt("%.4f", static_cast<double>(v[2]) / static_cast<double>(v[0])), 9) << '\n';
    }
    out << '\n';

    if (r.contains("defense")) {
        const auto& df = r.at("defense");
        const auto& dd = df.at("dataset");
        out << "[defense dataset]\nclean " << dd.at("clean") << "  adversarial " << dd.at("adversarial") << "  train "
            << dd.at("train") << "  calibration " << dd.at("calibration") << "\n\n";
        out << "[sub-detectors]\n" << pad("feature", 10) << rpad("recall", 9) << rpad("weight", 9) << '\n';
        for (const auto& s : df.at("subdetectors"))
            out << pad(s.at("feature").get<std::string>(), 10) << rpad(fmt("%.4f", s.at("recall").get<double>()), 9)
                << rpad(fmt("%.4f", s.at("weight").get<double>()), 9) << '\n';
        out << '\n';
        for (const auto& m : df.at("matrices")) detail::render_matrix(out, m);
        out << "[filter]\n"
            << pad("rule", 12) << pad("flagged adversarial KNN/RF/DT/GBT", 36) << rpad("benign_fp", 10)
            << rpad("malicious", 10) << "  passthrough\n";
        for (const auto& f : df.at("filters")) {
            std::string flags;
            for (const auto& v : f.at("adversarial_flag_rate")) flags += fmt("%.3f ", v.get<double>());
            out << pad(f.at("rule").get<std::string>(), 12) << pad(flags, 36)
                << rpad(fmt("%.4f", f.at("benign_flag_rate").get<double>()), 10)
                << rpad(fmt("%.4f", f.at("malicious_flag_rate").get<double>()), 10) << "  "
                << (f.at("passthrough_identical").get<bool>() ? "identical" : "DIFFERS") << '\n';
        }
        const auto& b = df.at("baseline");
        out << pad("monolithic", 12) << pad("", 36) << rpad(fmt("%.4f", b.at("benign_flag_rate").get<double>()), 10)
            << rpad(fmt("%.4f", b.at("malicious_flag_rate").get<double>()), 10) << '\n';
    }
    return out.str();
}

inline std::string render_timing(const json& t) {
    std::ostringstream out;
    out << "[mean generation time per flow, seconds]\n"
        << detail::pad("substitute", 12) << detail::pad("class", 12) << detail::rpad("mean_s", 12) << '\n';
    for (const auto& row : t.at("mean_gen_time"))
        out << detail::pad(row.at("attacker").get<std::string>(), 12) << detail::pad(row.at("class").get<std::string>(), 12)
            << detail::rpad(detail::fmt("%.6f", row.at("mean_gen_time_s").get<double>()), 12) << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// Files

class ReportWriter {
public:
    explicit ReportWriter(std::filesystem::path root) : root_(std::move(root)) {}

    void write(const std::string& rel, const std::string& content) {
        const auto path = root_ / rel;
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + path.parent_path().string());
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
        out << content;
        if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
        files_.push_back(rel);
    }

    const std::vector<std::string>& files() const { return files_; }

private:
    std::filesystem::path root_;
    std::vector<std::string> files_;
};

inline std::string csv_num(double v) { return format_double(v); }

// `extra_files` are paths relative to out_dir written by the caller; they
// are listed in the manifest.
inline void emit_report(const RunResults& run, const std::string& out_dir,
                        const std::vector<std::string>& extra_files = {}) {
    const auto& x = run.attack;
    const auto& cfg = x.config;
    ReportWriter w(out_dir);

    const json results = results_json(run);
    w.write("config.json", to_json(cfg).dump(2) + "\n");
    w.write("results.json", results.dump(2) + "\n");
    w.write("summary.txt", render_summary(results));

    for (std::size_t a = 0; a < kFamilyCount; ++a) {
        std::string lines;
        for (std::size_t i = 0; i < x.traces[a].size(); ++i) {
            const auto& t = x.traces[a][i];
            json rec = {{"index", i},
                        {"class", t.original.label},
                        {"outcome", t.outcome == Outcome::Evaded ? "evaded" : "failed"},
                        {"steps", t.steps_used},
                        {"mask", t.mask_used ? json(t.mask_used->id) : json(nullptr)},
                        {"probes", t.probes},
                        {"delta", detail::delta_json(t.delta)},
                        {"original", detail::flow_json(t.original)},
                        {"final", detail::flow_json(t.final)}};
            lines += rec.dump() + "\n";
        }
        w.write("traces/" + std::string(ml::family_name(ml::kFamilies[a])) + ".jsonl", lines);
    }

    std::string detection = "defender,attacker,class,n,before,after,before_rate,after_rate\n";
    std::string masks = "attacker,class,mask,count\n";
    std::string steps = "attacker,class,step,count\n";
    std::string deltas = "attacker,class,dur,spkts,sbytes\n";
    for (std::size_t d = 0; d < kFamilyCount; ++d)
        for (std::size_t a = 0; a < kFamilyCount; ++a) {
            const auto& t = x.detection[d][a];
            for (int c = 0; c < x.classes.size(); ++c) {
                const auto& cell = t.per_class[static_cast<std::size_t>(c)];
                if (cell.n == 0) continue;
                detection += std::string(ml::family_name(ml::kFamilies[d])) + "," +
                             std::string(ml::family_name(ml::kFamilies[a])) + "," + x.classes.name(c) + "," +
                             std::to_string(cell.n) + "," + std::to_string(cell.before) + "," +
                             std::to_string(cell.after) + "," + csv_num(cell.before_rate()) + "," +
                             csv_num(cell.after_rate()) + "\n";
            }
        }
    for (std::size_t a = 0; a < kFamilyCount; ++a) {
        const std::string fam(ml::family_name(ml::kFamilies[a]));
        for (int c = 0; c < x.classes.size(); ++c) {
            if (c == x.defender.ctx.target_index) continue;
            const auto& name = x.classes.name(c);
            auto sub = detail::traces_where(x.traces[a], [&](const auto& t) { return t.original.label == name; });
            const auto s = summarize(sub, cfg.attack.t_max);
            for (std::size_t m = 0; m < s.mask_histogram.size(); ++m)
                masks += fam + "," + name + "," + std::to_string(m) + "," + std::to_string(s.mask_histogram[m]) + "\n";
            for (std::size_t k = 0; k < s.step_histogram.size(); ++k)
                steps += fam + "," + name + "," + std::to_string(k) + "," + std::to_string(s.step_histogram[k]) + "\n";
            deltas += fam + "," + name + "," + csv_num(s.mean_abs_delta[0]) + "," + csv_num(s.mean_abs_delta[1]) + "," +
                      csv_num(s.mean_abs_delta[2]) + "\n";
        }
    }
    w.write("plots/detection.csv", detection);
    w.write("plots/masks.csv", masks);
    w.write("plots/steps.csv", steps);
    w.write("plots/delta.csv", deltas);

    std::string models = "side,family,validation_macro_f1,test_macro_f1,test_accuracy\n";
    for (const auto& m : results.at("models"))
        models += m.at("side").get<std::string>() + "," + m.at("family").get<std::string>() + "," +
                  csv_num(m.at("validation_macro_f1").get<double>()) + "," +
                  csv_num(m.at("test").at("macro_f1").get<double>()) + "," +
                  csv_num(m.at("test").at("accuracy").get<double>()) + "\n";
    w.write("plots/models.csv", models);

    if (run.defense) {
        const auto& dx = *run.defense;
        std::string matrices = "matrix,defender,attacker,value\n";
        auto add = [&](const TransferabilityMatrix& m) {
            for (std::size_t d = 0; d < kFamilyCount; ++d) {
                const std::string def(ml::family_name(ml::kFamilies[d]));
                for (std::size_t a = 0; a < kFamilyCount; ++a)
                    matrices += m.name + "," + def + "," + std::string(ml::family_name(ml::kFamilies[a])) + "," +
                                csv_num(m.cells[d][a]) + "\n";
                matrices += m.name + "," + def + ",average," + csv_num(m.row_average[d]) + "\n";
            }
        };
        add(dx.no_defense);
        for (const auto& m : dx.with_defense) add(m);
        add(dx.baseline);
        w.write("plots/matrices.csv", matrices);

        std::string subs = "feature,recall,weight\n";
        for (const auto& sd : dx.ensemble.detectors())
            subs += std::string(feature_name(sd.feature)) + "," + csv_num(sd.recall) + "," + csv_num(sd.weight) + "\n";
        w.write("plots/subdetectors.csv", subs);

        for (const auto& fs : dx.filters) {
            std::string lines;
            for (std::size_t a = 0; a < kFamilyCount; ++a)
                for (std::size_t i = 0; i < fs.verdicts[a].size(); ++i) {
                    const auto& v = fs.verdicts[a][i];
                    json rec = {{"attacker", ml::family_name(ml::kFamilies[a])},
                                {"index", i},
                                {"class", x.traces[a][i].original.label},
                                {"p_adv", v.p_adv},
                                {"p_clean", v.p_clean},
                                {"decision", v.decision == DefenseLabel::Adversarial ? "adversarial" : "clean"}};
                    lines += rec.dump() + "\n";
                }
            w.write("verdicts/" + std::string(rule_name(fs.rule)) + ".jsonl", lines);
        }
        w.write("defense.json", to_json(dx.ensemble, cfg.defense.rules.front()).dump() + "\n");
    }

    const json timing = timing_json(x);
    w.write("timing.json", timing.dump(2) + "\n");
    w.write("timing.txt", render_timing(timing));
    std::string tcsv = "attacker,class,mean_gen_time_s\n";
    for (const auto& row : timing.at("mean_gen_time"))
        tcsv += row.at("attacker").get<std::string>() + "," + row.at("class").get<std::string>() + "," +
                csv_num(row.at("mean_gen_time_s").get<double>()) + "\n";
    w.write("plots/timing.csv", tcsv);

    auto files = w.files();
    files.insert(files.end(), extra_files.begin(), extra_files.end());
    files.push_back("manifest.json");
    std::sort(files.begin(), files.end());
    json manifest = {{"format", kManifestFormat},
                     {"version", kReportVersion},
                     {"config_hash", config_hash(cfg)},
                     {"seed", cfg.seed},
                     {"files", files},
                     {"timing_files", {"plots/timing.csv", "timing.json", "timing.txt"}}};
    w.write("manifest.json", manifest.dump(2) + "\n");
}

inline json load_results(const std::string& out_dir) {
    const auto path = std::filesystem::path(out_dir) / "results.json";
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::UnreadableFile, "cannot read " + path.string());
    try {
        auto j = json::parse(in);
        if (j.value("format", "") != kResultsFormat) throw Error(ErrorKind::InvalidConfig, "not an advids results file");
        return j;
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::UnreadableFile, path.string() + ": " + e.what());
    }
}

} // namespace advids::harness
