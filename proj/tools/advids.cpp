// advids: synthetic data, ingestion, training, D2TC attack and filtered
// defense experiments from one config file.

#include "advids/error.hpp"
#include "advids/harness/config.hpp"
#include "advids/harness/csv.hpp"
#include "advids/harness/experiment.hpp"
#include "advids/harness/report.hpp"
#include "advids/harness/synthetic.hpp"
#include "advids/ml/classifier.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace advids;
using namespace advids::harness;

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config, "Experiment config (JSON); defaults apply when omitted");
    cmd->add_option("--seed", o.seed, "Override the config seed");
    cmd->add_option("--out-dir", o.out_dir, "Override the config output directory");
}

ExperimentConfig resolve(const CommonOptions& o) {
    ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (!o.out_dir.empty()) cfg.output_dir = o.out_dir;
    cfg.validate();
    return cfg;
}

void print_ingest(const IngestStats& st, std::size_t kept) {
    std::cerr << "rows " << st.rows << "  kept " << kept << "  skipped " << st.skipped << "  repaired " << st.repaired
              << "  duplicates " << st.duplicates << '\n';
}

int cmd_synth(const CommonOptions& o, const std::string& out) {
    const auto cfg = resolve(o);
    const auto flows = generate_synthetic(cfg.dataset.synthetic, cfg.seed);
    const std::string path = out.empty() ? (std::filesystem::path(cfg.output_dir) / "synthetic.csv").string() : out;
    std::filesystem::create_directories(std::filesystem::path(path).parent_path().empty()
                                            ? std::filesystem::path(".")
                                            : std::filesystem::path(path).parent_path());
    write_canonical_csv(path, flows);
    std::cerr << "wrote " << flows.size() << " flows to " << path << '\n';
    return 0;
}

int cmd_ingest(const CommonOptions& o, const std::string& csv, const std::string& mapping, const std::string& out) {
    auto cfg = resolve(o);
    if (!csv.empty()) {
        cfg.dataset.kind = DatasetSource::Kind::Csv;
        cfg.dataset.csv_path = csv;
    }
    if (!mapping.empty()) cfg.dataset.mapping = load_mapping(mapping);
    IngestStats st;
    const auto flows = load_dataset(cfg.dataset, cfg.seed, &st);
    print_ingest(st, flows.size());
    const std::string path = out.empty() ? (std::filesystem::path(cfg.output_dir) / "flows.csv").string() : out;
    std::filesystem::create_directories(std::filesystem::path(path).parent_path().empty()
                                            ? std::filesystem::path(".")
                                            : std::filesystem::path(path).parent_path());
    write_canonical_csv(path, flows);
    std::cerr << "wrote " << path << '\n';
    return 0;
}

// Returns the written paths relative to `root`.
std::vector<std::string> save_models(const Side& side, const std::filesystem::path& root, const std::string& name) {
    std::filesystem::create_directories(root / "models");
    std::vector<std::string> rel;
    for (std::size_t i = 0; i < kFamilyCount; ++i) {
        rel.push_back("models/" + name + "_" + std::string(ml::family_name(ml::kFamilies[i])) + ".json");
        ml::save_model(side.models[i].model, (root / rel.back()).string());
    }
    return rel;
}

int cmd_train(const CommonOptions& o) {
    const auto cfg = resolve(o);
    IngestStats st;
    auto flows = load_dataset(cfg.dataset, cfg.seed, &st);
    print_ingest(st, flows.size());
    const auto classes = ClassList::from_flows(flows, cfg.attack.target_class);
    auto parts = partition(flows, cfg.seed);
    const std::filesystem::path root(cfg.output_dir);
    std::cout << "side      family  test_macro_f1\n";
    auto run_side = [&](const char* name, std::vector<FlowRecord> train, std::vector<FlowRecord> test,
                        const ModelGrid& grid, std::uint64_t stream) {
        const auto side = build_side(std::move(train), std::move(test), classes, grid, cfg, stream);
        for (std::size_t i = 0; i < kFamilyCount; ++i) {
            const std::string fam(ml::family_name(ml::kFamilies[i]));
            std::cout << harness::detail::pad(name, 10) << harness::detail::pad(fam, 8)
                      << harness::detail::fmt("%.4f", side.test_report[i].macro_f1) << '\n';
        }
        save_models(side, root, name);
    };
    run_side("defender", std::move(parts.defender_train), std::move(parts.defender_test), cfg.defender_grid,
             stream::kDefenderModels);
    run_side("attacker", std::move(parts.attacker_train), std::move(parts.attacker_test), cfg.attacker_grid,
             stream::kAttackerModels);
    std::cerr << "models in " << (root / "models").string() << '\n';
    return 0;
}

// `everything` adds the cleaned dataset and the trained models to the report.
int cmd_experiment(const CommonOptions& o, bool defend, bool everything) {
    const auto cfg = resolve(o);
    RunResults run{run_attack_experiment(cfg), std::nullopt};
    if (defend) run.defense = run_defense_experiment(run.attack);
    std::vector<std::string> extra;
    if (everything) {
        const std::filesystem::path root(cfg.output_dir);
        std::filesystem::create_directories(root);
        write_canonical_csv((root / "flows.csv").string(), load_dataset(cfg.dataset, cfg.seed));
        extra.push_back("flows.csv");
        for (const auto* side : {&run.attack.defender, &run.attack.attacker}) {
            auto rel = save_models(*side, root, side == &run.attack.defender ? "defender" : "attacker");
            extra.insert(extra.end(), rel.begin(), rel.end());
        }
    }
    emit_report(run, cfg.output_dir, extra);
    std::cout << render_summary(results_json(run));
    std::cerr << "report in " << cfg.output_dir << '\n';
    return 0;
}

int cmd_report(const CommonOptions& o) {
    const auto cfg = resolve(o);
    const auto results = load_results(cfg.output_dir);
    const auto text = render_summary(results);
    ReportWriter(cfg.output_dir).write("summary.txt", text);
    std::cout << text;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial evasion and ensemble defense experiments for flow-based NIDS"};
    app.require_subcommand(1);

    CommonOptions synth_o, ingest_o, train_o, attack_o, defend_o, report_o, all_o;
    std::string synth_out, ingest_csv_path, ingest_mapping, ingest_out;

    auto* synth = app.add_subcommand("synth", "Generate the synthetic corpus as canonical CSV");
    add_common(synth, synth_o);
    synth->add_option("--out", synth_out, "Output CSV (default <out-dir>/synthetic.csv)");

    auto* ingest = app.add_subcommand("ingest", "Load, repair and deduplicate a dataset; write canonical CSV");
    add_common(ingest, ingest_o);
    ingest->add_option("--csv", ingest_csv_path, "Input CSV (overrides the config dataset)");
    ingest->add_option("--mapping", ingest_mapping, "Column mapping JSON");
    ingest->add_option("--out", ingest_out, "Output CSV (default <out-dir>/flows.csv)");

    auto* train = app.add_subcommand("train", "Select and train defender and attacker models");
    add_common(train, train_o);
    auto* attack = app.add_subcommand("attack", "Run the D2TC attack experiment and write its report");
    add_common(attack, attack_o);
    auto* defend = app.add_subcommand("defend", "Run attack and defense experiments and write the report");
    add_common(defend, defend_o);
    auto* report = app.add_subcommand("report", "Re-render summary.txt from results.json");
    add_common(report, report_o);
    auto* all = app.add_subcommand("run-all", "Attack and defense report plus the cleaned dataset and models");
    add_common(all, all_o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_o, synth_out);
        if (ingest->parsed()) return cmd_ingest(ingest_o, ingest_csv_path, ingest_mapping, ingest_out);
        if (train->parsed()) return cmd_train(train_o);
        if (attack->parsed()) return cmd_experiment(attack_o, false, false);
        if (defend->parsed()) return cmd_experiment(defend_o, true, false);
        if (report->parsed()) return cmd_report(report_o);
        if (all->parsed()) return cmd_experiment(all_o, true, true);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error (io): " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
