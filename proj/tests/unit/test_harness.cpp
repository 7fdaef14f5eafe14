#include "advids/harness/config.hpp"
#include "advids/harness/csv.hpp"
#include "advids/harness/experiment.hpp"
#include "advids/harness/report.hpp"
#include "advids/harness/synthetic.hpp"

#include "support/generators.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using namespace advids;
using namespace advids::harness;
using namespace advids::testing;
namespace fs = std::filesystem;

namespace {

ExperimentConfig quick_config(std::uint64_t seed) {
    ExperimentConfig c;
    c.seed = seed;
    c.dataset.synthetic = small_spec(60);
    for (auto* g : {&c.defender_grid, &c.attacker_grid}) {
        g->knn = {{5}};
        g->dt = {{8, 2, 1, 0}};
        g->rf = {{10, 0, 1, -1, true}};
        g->gbt = {{20, 0.3, 3, 1.0, 1e-6}};
    }
    c.defense.baseline_trees = 10;
    return c;
}

const RunResults& quick_run() {
    static const RunResults r = run_all(quick_config(7));
    return r;
}

fs::path scratch_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("advids_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string first_line(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

struct AlwaysBenign {
    int operator()(const FlowRecord&) const { return 0; }
};

} // namespace

TEST(IngestCsv, CanonicalRoundTrip) {
    std::mt19937_64 rng(101);
    auto flows = random_flows(rng, 3);
    std::stringstream ss;
    write_canonical_csv(ss, flows);
    IngestStats st;
    auto back = ingest_csv(ss, canonical_mapping(), &st);
    EXPECT_EQ(back, flows);
    EXPECT_EQ(st.rows, 3u);
    EXPECT_EQ(st.skipped, 0u);
    EXPECT_EQ(st.repaired, 0u);
}

TEST(IngestCsv, NonNumericRowIsSkipped) {
    std::mt19937_64 rng(102);
    auto flows = random_flows(rng, 3);
    std::stringstream ss;
    write_canonical_csv(ss, flows);
    auto text = ss.str();
    const auto second = text.find('\n') + 1;
    text.replace(second, text.find(',', second) - second, "abc");
    std::stringstream in(text);
    IngestStats st;
    auto back = ingest_csv(in, canonical_mapping(), &st);
    EXPECT_EQ(st.skipped, 1u);
    EXPECT_EQ(back.size(), 2u);
}

TEST(IngestCsv, RepairCountMatchesRowScan) {
    std::mt19937_64 rng(103);
    auto flows = random_flows(rng, 50);
    std::size_t expect = 0;
    for (std::size_t i = 0; i < flows.size(); ++i) {
        if (i % 3 == 0) {
            flows[i].pkts += 1;
            ++expect;
        } else if (i % 7 == 0) {
            flows[i].srate *= 2;
            expect += flows[i].srate != 0;
        }
    }
    std::stringstream ss;
    write_canonical_csv(ss, flows);
    IngestStats st;
    auto back = ingest_csv(ss, canonical_mapping(), &st);
    EXPECT_EQ(st.repaired, expect);
    for (const auto& r : back) EXPECT_TRUE(is_consistent(r));
}

TEST(IngestCsv, MappedColumnsAndBenignValue) {
    ColumnMapping m = canonical_mapping();
    m.columns["dur"] = "duration";
    m.columns.erase("rate");
    m.label_column = "type";
    m.benign_value = "normal";
    std::stringstream in(
        "duration,spkts,sbytes,pkts,bytes,srate,drate,dpkts,dbytes,proto,sport,dport,type\n"
        "2,10,500,15,700,5,2.5,5,200,tcp,51000,80,normal\n"
        "1,4,100,6,160,4,2,2,60,udp,52000,53,ddos\n");
    auto flows = ingest_csv(in, m);
    ASSERT_EQ(flows.size(), 2u);
    EXPECT_EQ(flows[0].label, "benign");
    EXPECT_EQ(flows[1].label, "ddos");
    EXPECT_DOUBLE_EQ(flows[0].rate, 7.5);
}

TEST(IngestCsv, MissingColumn) {
    std::stringstream in("dur,spkts\n1,2\n");
    try {
        ingest_csv(in, canonical_mapping());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MissingColumn);
        EXPECT_EQ(exit_code(e.kind()), 2);
    }
}

TEST(IngestCsv, UnreadableFile) {
    try {
        ingest_csv(std::string("/nonexistent/flows.csv"), canonical_mapping());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::UnreadableFile);
    }
}

TEST(Synthetic, MeanWithinThreeStandardErrors) {
    SyntheticSpec s = small_spec(2);
    s.classes[0].count = 100;
    s.classes[0].per_packet = false;
    s.classes[0].dur = {Distribution::Kind::Normal, 2.0, 0.5};
    auto flows = generate_synthetic(s, 5);
    std::vector<double> durs;
    for (const auto& f : flows)
        if (f.label == s.classes[0].name) durs.push_back(f.dur);
    ASSERT_EQ(durs.size(), 100u);
    EXPECT_NEAR(oracle::streaming_mean(durs), 2.0, 3 * 0.5 / 10);
}

TEST(Synthetic, DeterministicPerSeed) {
    auto s = small_spec(20);
    EXPECT_EQ(generate_synthetic(s, 9), generate_synthetic(s, 9));
    EXPECT_NE(generate_synthetic(s, 9), generate_synthetic(s, 10));
}

TEST(Synthetic, SmallestClassesStillPartition) {
    auto s = small_spec(2);
    auto flows = generate_synthetic(s, 3);
    for (const auto& f : flows) EXPECT_TRUE(is_consistent(f));
    EXPECT_NO_THROW(partition(flows, 1));
}

TEST(Synthetic, InvalidSpec) {
    auto s = small_spec(10);
    s.classes[1].count = 1;
    EXPECT_THROW(s.validate(), Error);
    s = small_spec(10);
    s.benign = "normal";
    EXPECT_THROW(s.validate(), Error);
}

TEST(Config, JsonRoundTrip) {
    auto c = quick_config(11);
    c.attack.t_max = 6;
    c.defense.rules = {FusionRule::DempsterShafer};
    auto back = config_from_json(nlohmann::json::parse(to_json(c).dump()));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_EQ(config_hash(back), config_hash(c));
    auto moved = c;
    moved.output_dir = "elsewhere";
    EXPECT_EQ(config_hash(moved), config_hash(c));
    moved.seed = 12;
    EXPECT_NE(config_hash(moved), config_hash(c));
}

TEST(Config, Errors) {
    auto expect_config_error = [](const nlohmann::json& j) {
        try {
            config_from_json(j);
            ADD_FAILURE() << j.dump();
        } catch (const Error& e) {
            EXPECT_EQ(exit_code(e.kind()), 1) << j.dump();
        }
    };
    expect_config_error({{"attack", {{"c", 0}}}});
    expect_config_error({{"attack", {{"t_max", 0}}}});
    expect_config_error({{"defense", {{"rules", {"majority"}}}}});
    expect_config_error({{"dataset", {{"kind", "parquet"}}}});
    expect_config_error({{"validation_fraction", 1.5}});
    expect_config_error({{"seed", "one"}});
}

TEST(DetectionTable, AlwaysBenignSubstituteLeavesDetectionUnchanged) {
    const auto& x = quick_run().attack;
    auto traces = attack_dataset(x.attack_inputs, AlwaysBenign{}, x.attacker.ctx, x.config.attack);
    for (std::size_t d = 0; d < kFamilyCount; ++d) {
        auto t = detection_table(x.defender.predictor(d), traces, x.classes);
        EXPECT_EQ(t.total.before, t.total.after);
        EXPECT_EQ(t.total.n, x.attack_inputs.size());
    }
}

TEST(DetectionTable, CellsMatchDirectCount) {
    const auto& x = quick_run().attack;
    for (std::size_t d = 0; d < kFamilyCount; ++d)
        for (std::size_t a = 0; a < kFamilyCount; ++a) {
            const auto pred = x.defender.predictor(d);
            std::size_t before = 0, after = 0;
            for (const auto& t : x.traces[a]) {
                const int truth = x.classes.index_of(t.original.label);
                before += pred(t.original) == truth;
                after += pred(t.final) == truth;
            }
            EXPECT_EQ(x.detection[d][a].total.before, before);
            EXPECT_EQ(x.detection[d][a].total.after, after);
            EXPECT_EQ(x.detection[d][a].total.n, x.traces[a].size());
        }
}

TEST(Experiment, AttackInputsAreAttackerSideMalicious) {
    const auto& x = quick_run().attack;
    EXPECT_FALSE(x.attack_inputs.empty());
    for (const auto& f : x.attack_inputs) EXPECT_NE(f.label, "benign");
    for (std::size_t a = 0; a < kFamilyCount; ++a) {
        ASSERT_EQ(x.traces[a].size(), x.attack_inputs.size());
        for (const auto& t : x.traces[a]) {
            EXPECT_TRUE(is_valid(t.final, x.attacker.ctx.schema));
            if (t.outcome == Outcome::Evaded) {
                EXPECT_EQ(x.attacker.predictor(a)(t.final), x.attacker.ctx.target_index);
            }
        }
    }
}

TEST(Experiment, HistogramsConserveCounts) {
    const auto& x = quick_run().attack;
    for (std::size_t a = 0; a < kFamilyCount; ++a) {
        auto s = summarize(x.traces[a], x.config.attack.t_max);
        std::size_t masks = 0, steps = 0, evaded = 0;
        for (auto v : s.mask_histogram) masks += v;
        for (auto v : s.step_histogram) steps += v;
        for (const auto& t : x.traces[a]) evaded += t.outcome == Outcome::Evaded;
        EXPECT_EQ(masks, evaded);
        EXPECT_EQ(steps, evaded);
        EXPECT_EQ(s.evaded, evaded);
    }
}

TEST(Experiment, MatricesRecomputeFromVerdicts) {
    const auto& run = quick_run();
    const auto& x = run.attack;
    const auto& dx = *run.defense;
    for (std::size_t d = 0; d < kFamilyCount; ++d)
        for (std::size_t a = 0; a < kFamilyCount; ++a) {
            EXPECT_EQ(dx.no_defense.cells[d][a], x.detection[d][a].total.after_rate());
            for (std::size_t r = 0; r < dx.filters.size(); ++r) {
                const auto pred = x.defender.predictor(d);
                std::size_t hit = 0;
                for (std::size_t i = 0; i < x.traces[a].size(); ++i) {
                    const auto& t = x.traces[a][i];
                    const auto v = filter(t.final, dx.ensemble, dx.filters[r].rule);
                    EXPECT_EQ(v.p_adv, dx.filters[r].verdicts[a][i].p_adv);
                    hit += v.decision == DefenseLabel::Adversarial ||
                           pred(t.final) == x.classes.index_of(t.original.label);
                }
                EXPECT_DOUBLE_EQ(dx.with_defense[r].cells[d][a],
                                 static_cast<double>(hit) / static_cast<double>(x.traces[a].size()));
                EXPECT_GE(dx.with_defense[r].cells[d][a], dx.no_defense.cells[d][a]);
            }
        }
    for (const auto& f : dx.filters) EXPECT_TRUE(f.passthrough_identical);
}

TEST(Report, DeterministicOutputs) {
    auto a = scratch_dir("det_a"), b = scratch_dir("det_b");
    emit_report(run_all(quick_config(3)), a.string());
    emit_report(run_all(quick_config(3)), b.string());
    auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
    std::set<std::string> timing;
    for (const auto& t : manifest.at("timing_files")) timing.insert(t.get<std::string>());
    std::size_t compared = 0;
    for (const auto& f : manifest.at("files")) {
        const auto rel = f.get<std::string>();
        ASSERT_TRUE(fs::exists(a / rel)) << rel;
        if (timing.contains(rel)) continue;
        EXPECT_EQ(slurp(a / rel), slurp(b / rel)) << rel;
        ++compared;
    }
    EXPECT_GT(compared, 10u);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Report, FileSchemas) {
    auto dir = scratch_dir("schema");
    emit_report(quick_run(), dir.string());
    EXPECT_EQ(first_line(dir / "plots/detection.csv"), "defender,attacker,class,n,before,after,before_rate,after_rate");
    EXPECT_EQ(first_line(dir / "plots/masks.csv"), "attacker,class,mask,count");
    EXPECT_EQ(first_line(dir / "plots/steps.csv"), "attacker,class,step,count");
    EXPECT_EQ(first_line(dir / "plots/delta.csv"), "attacker,class,dur,spkts,sbytes");
    EXPECT_EQ(first_line(dir / "plots/models.csv"), "side,family,validation_macro_f1,test_macro_f1,test_accuracy");
    EXPECT_EQ(first_line(dir / "plots/matrices.csv"), "matrix,defender,attacker,value");
    EXPECT_EQ(first_line(dir / "plots/subdetectors.csv"), "feature,recall,weight");
    EXPECT_EQ(first_line(dir / "plots/timing.csv"), "attacker,class,mean_gen_time_s");

    const std::set<std::string> trace_keys = {"index", "class", "outcome", "steps", "mask",
                                              "probes", "delta", "original", "final"};
    for (auto fam : ml::kFamilies) {
        auto rec = nlohmann::json::parse(first_line(dir / "traces" / (std::string(ml::family_name(fam)) + ".jsonl")));
        std::set<std::string> keys;
        for (const auto& [k, _] : rec.items()) keys.insert(k);
        EXPECT_EQ(keys, trace_keys);
        EXPECT_EQ(rec.at("final").size(), kFeatureCount + 1);
    }
    for (const char* rule : {"bayesian", "dempster"}) {
        auto rec = nlohmann::json::parse(first_line(dir / "verdicts" / (std::string(rule) + ".jsonl")));
        std::set<std::string> keys;
        for (const auto& [k, _] : rec.items()) keys.insert(k);
        EXPECT_EQ(keys, (std::set<std::string>{"attacker", "index", "class", "p_adv", "p_clean", "decision"}));
    }
    auto results = load_results(dir.string());
    EXPECT_TRUE(results.contains("attack"));
    auto [ens, rule] = defense_from_json(nlohmann::json::parse(slurp(dir / "defense.json")));
    EXPECT_EQ(ens.detectors().size(), kFeatureCount);
    fs::remove_all(dir);
}

#ifdef ADVIDS_CLI
namespace {
int run_cli(const std::string& args) {
    const int status = std::system((std::string(ADVIDS_CLI) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
} // namespace

TEST(Cli, ExitCodes) {
    auto dir = scratch_dir("cli");
    std::ofstream(dir / "bad.json") << R"({"attack": {"c": -1}})";
    EXPECT_EQ(run_cli("attack --config " + (dir / "bad.json").string()), 1);
    std::ofstream(dir / "missing.json") << R"({"dataset": {"kind": "csv", "path": "/nonexistent.csv"}})";
    EXPECT_EQ(run_cli("ingest --config " + (dir / "missing.json").string()), 2);
    EXPECT_NE(run_cli("no-such-command"), 0);
    std::ofstream(dir / "ok.json") << to_json(quick_config(1)).dump();
    EXPECT_EQ(run_cli("synth --config " + (dir / "ok.json").string() + " --out " + (dir / "s.csv").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "s.csv"));
    fs::remove_all(dir);
}
#endif
