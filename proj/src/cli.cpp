#include "odxu/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <random>

#include "odxu/config.hpp"
#include "odxu/payload.hpp"
#include "odxu/pipeline.hpp"
#include "odxu/serialize.hpp"

namespace odxu {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

PayloadDataset load_payloads(const std::string& path) {
    const bool binary = path.size() >= 4 && path.substr(path.size() - 4) == ".bin";
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw IoError("cannot open dataset '" + path + "'");
    return binary ? read_payload_bin(in) : read_payload_csv(in);
}

void store_payloads(const std::string& path, const PayloadDataset& data) {
    const bool binary = path.size() >= 4 && path.substr(path.size() - 4) == ".bin";
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw IoError("cannot write dataset '" + path + "'");
    if (binary)
        write_payload_bin(out, data);
    else
        write_payload_csv(out, data);
    if (!out) throw IoError("short write to '" + path + "'");
}

std::array<std::uint8_t, 16> parse_ipv4(const std::string& dotted) {
    std::array<std::uint8_t, 16> out{};
    unsigned a, b, c, d;
    if (std::sscanf(dotted.c_str(), "%u.%u.%u.%u", &a, &b, &c, &d) != 4 || a > 255 || b > 255 ||
        c > 255 || d > 255)
        throw FormatError("rules: bad IPv4 address '" + dotted + "'");
    out[0] = static_cast<std::uint8_t>(a);
    out[1] = static_cast<std::uint8_t>(b);
    out[2] = static_cast<std::uint8_t>(c);
    out[3] = static_cast<std::uint8_t>(d);
    return out;
}

std::vector<LabelRule> load_rules(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open rules file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw FormatError("rules file '" + path + "': " + e.what());
    }
    std::vector<LabelRule> rules;
    for (const auto& r : j) {
        LabelRule rule;
        if (r.contains("src_ip")) rule.src_ip = parse_ipv4(r.at("src_ip").get<std::string>());
        if (r.contains("dst_ip")) rule.dst_ip = parse_ipv4(r.at("dst_ip").get<std::string>());
        if (r.contains("src_port")) rule.src_port = r.at("src_port").get<std::uint16_t>();
        if (r.contains("dst_port")) rule.dst_port = r.at("dst_port").get<std::uint16_t>();
        if (r.contains("protocol")) rule.protocol = r.at("protocol").get<std::uint8_t>();
        rule.label = r.at("label").get<std::string>();
        rules.push_back(std::move(rule));
    }
    return rules;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << text;
    if (!out) throw IoError("short write to '" + path + "'");
}

// Writes the manifest after recording every artifact's digest so reruns can
// be audited end to end.
void finish_manifest(json manifest, const std::string& out_dir,
                     const std::vector<std::string>& artifact_paths) {
    json artifacts = json::array();
    for (const auto& p : artifact_paths)
        artifacts.push_back({{"path", p}, {"digest", digest_hex(file_digest(p))}});
    manifest["artifacts"] = std::move(artifacts);
    write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
}

// Applies the configured target->source label renames before a transfer run.
Dataset apply_label_map(const Dataset& data, const std::map<std::string, std::string>& label_map) {
    if (label_map.empty()) return data;
    Dataset out;
    out.X = data.X;
    std::vector<int> remap(data.labels.size());
    for (std::size_t id = 0; id < data.labels.size(); ++id) {
        const std::string& name = data.labels.name(id);
        const auto it = label_map.find(name);
        remap[id] = static_cast<int>(out.labels.intern(it == label_map.end() ? name : it->second));
    }
    for (int y : data.y) out.y.push_back(remap[static_cast<std::size_t>(y)]);
    return out;
}

struct GlobalArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir = ".";
};

PipelineConfig make_config(const GlobalArgs& g) {
    PipelineConfig cfg = g.config_path.empty() ? default_config() : load_config_file(g.config_path);
    if (g.seed_set) cfg.seed = g.seed;
    cfg.propagate_seed();
    return cfg;
}

int cmd_extract(const std::string& in_path, const std::string& out_path,
                const std::string& bin_path, const std::string& rules_path) {
    std::ifstream in(in_path, std::ios::binary);
    if (!in) throw IoError("cannot open capture '" + in_path + "'");
    const auto rules = rules_path.empty() ? std::vector<LabelRule>{} : load_rules(rules_path);
    ExtractStats stats;
    const PayloadDataset data = ingest_pcap(in, rules, &stats);
    if (!out_path.empty()) store_payloads(out_path, data);
    if (!bin_path.empty()) store_payloads(bin_path, data);
    std::cout << "packets " << stats.packets << ", payloads " << stats.emitted
              << ", skipped_no_payload " << stats.skipped_no_payload << ", skipped_unsupported "
              << stats.skipped_unsupported << "\n";
    return 0;
}

int cmd_resample(const std::string& in_path, const std::string& out_path,
                 const std::string& plan_path, std::uint64_t seed) {
    PayloadDataset data = load_payloads(in_path);
    std::ifstream plan_in(plan_path);
    if (!plan_in) throw IoError("cannot open plan '" + plan_path + "'");
    json plan_json;
    try {
        plan_in >> plan_json;
    } catch (const json::parse_error& e) {
        throw FormatError("plan file '" + plan_path + "': " + e.what());
    }
    ResamplePlan plan;
    for (const auto& [name, mult] : plan_json.items()) {
        const int id = data.labels.find(name);
        if (id < 0) throw DataError("resample plan names unknown class '" + name + "'");
        plan.rates.emplace_back(static_cast<std::uint16_t>(id), mult.get<double>());
    }
    const PayloadDataset out = resample(data, plan, seed);
    store_payloads(out_path, out);
    std::cout << "rows " << data.rows.size() << " -> " << out.rows.size() << "\n";
    return 0;
}

int cmd_train_dec(const std::string& in_path, const GlobalArgs& g) {
    const PipelineConfig cfg = make_config(g);
    Dataset data = normalize_dataset(load_payloads(in_path));
    fs::create_directories(g.out_dir);

    AutoencoderSpec spec = cfg.ae;
    spec.input_dim = data.cols();
    std::mt19937_64 rng(cfg.ae_train.seed);
    Autoencoder ae = make_autoencoder(spec, rng);
    const EpochLossTrace ae_trace = train_autoencoder(ae, data.X, cfg.ae_train, cfg.ae_stop);
    const DecTrainResult dec = train_dec(ae, data, cfg.dec_train, cfg.cluster_stop);

    const std::string ae_path = g.out_dir + "/ae.bin";
    const std::string dec_path = g.out_dir + "/dec.bin";
    save_autoencoder_file(ae_path, ae);
    save_dec_model_file(dec_path, dec.model);

    json manifest;
    manifest["kind"] = "train_dec";
    manifest["config"] = config_to_json(cfg);
    manifest["ae_epochs"] = ae_trace.valid.size();
    manifest["dec_epochs"] = dec.trace.valid.size();
    manifest["digests"] = {{"train", digest_strings(data.X)}};
    finish_manifest(std::move(manifest), g.out_dir, {ae_path, dec_path});
    std::cout << "ae epochs " << ae_trace.valid.size() << ", dec epochs " << dec.trace.valid.size()
              << "\n";
    return 0;
}

int cmd_train_clf(const std::string& in_path, const std::string& dec_path,
                  const std::string& family, const GlobalArgs& g) {
    const PipelineConfig cfg = make_config(g);
    Dataset data = normalize_dataset(load_payloads(in_path));
    fs::create_directories(g.out_dir);

    json manifest;
    manifest["kind"] = "train_clf";
    manifest["family"] = family;
    manifest["config"] = config_to_json(cfg);
    std::vector<std::string> artifacts;

    if (family == "fcnn") {
        std::vector<Eigen::Index> layers(cfg.fcnn_hidden);
        layers.push_back(static_cast<Eigen::Index>(data.labels.size()));
        const FcnnClassifier clf = train_fcnn(data, layers, cfg.fcnn_train);
        const std::string path = g.out_dir + "/fcnn.bin";
        save_fcnn_file(path, clf);
        artifacts.push_back(path);
    } else if (family == "gbdt") {
        const DecModel dec = load_dec_model_file(dec_path);
        const Dataset latents = transform(dec, data);
        const TreeEnsemble clf = train_gbdt(latents, cfg.gbdt);
        const std::string path = g.out_dir + "/clf.bin";
        save_ensemble_file(path, clf);
        artifacts.push_back(path);
        manifest["digests"] = {{"train_latents", digest_strings(latents.X)}};
    } else {
        throw DataError("train-clf: unknown family '" + family + "' (gbdt or fcnn)");
    }
    finish_manifest(std::move(manifest), g.out_dir, artifacts);
    return 0;
}

int cmd_train_meta(const std::string& in_path, const std::string& dec_path,
                   const std::string& clf_path, const std::string& variant_name,
                   const std::string& dump_csv, const GlobalArgs& g) {
    const PipelineConfig cfg = make_config(g);
    Dataset data = normalize_dataset(load_payloads(in_path));
    const DecModel dec = load_dec_model_file(dec_path);
    const TreeEnsemble clf = load_ensemble_file(clf_path);
    fs::create_directories(g.out_dir);

    MetaOptions opts;
    if (variant_name == "prob")
        opts.variant = MetaVariant::Prob;
    else if (variant_name == "shap")
        opts.variant = MetaVariant::Shap;
    else if (variant_name == "ig")
        opts.variant = MetaVariant::Ig;
    else
        throw DataError("train-meta: unknown variant '" + variant_name + "'");
    opts.ratio = cfg.meta_ratio;
    opts.seed = cfg.seed + 4;

    const Dataset latents = transform(dec, data);
    if (opts.variant == MetaVariant::Shap) {
        std::mt19937_64 rng(cfg.seed + 6);
        const auto rows = static_cast<Eigen::Index>(std::min<std::size_t>(
            static_cast<std::size_t>(latents.rows()), cfg.shap_background_rows));
        std::vector<int> pick(static_cast<std::size_t>(latents.rows()));
        std::iota(pick.begin(), pick.end(), 0);
        std::shuffle(pick.begin(), pick.end(), rng);
        opts.background.resize(rows, latents.cols());
        for (Eigen::Index i = 0; i < rows; ++i)
            opts.background.row(i) = latents.X.row(pick[static_cast<std::size_t>(i)]);
    }

    const MetaDataset md = build_meta_dataset(clf, latents, opts);
    const TreeEnsemble meta = train_metamodel(md, cfg.meta);
    const std::string path = g.out_dir + "/meta_" + variant_name + ".bin";
    save_ensemble_file(path, meta);
    if (!dump_csv.empty()) {
        std::ofstream out(dump_csv);
        if (!out) throw IoError("cannot write '" + dump_csv + "'");
        write_augmented_csv(out, md);
    }

    json manifest;
    manifest["kind"] = "train_meta";
    manifest["variant"] = variant_name;
    manifest["config"] = config_to_json(cfg);
    manifest["meta_rows"] = md.y_meta.size();
    finish_manifest(std::move(manifest), g.out_dir, {path});
    std::cout << "meta rows " << md.y_meta.size() << "\n";
    return 0;
}

int cmd_eval(const std::string& in_path, const std::string& dec_path, const std::string& clf_path,
             const std::string& report_path, const std::string& roc_path, const GlobalArgs& g) {
    const PipelineConfig cfg = make_config(g);
    Dataset data = normalize_dataset(load_payloads(in_path));
    const DecModel dec = load_dec_model_file(dec_path);
    const TreeEnsemble clf = load_ensemble_file(clf_path);

    const Dataset latents = transform(dec, data);
    const int benign = resolve_benign_label(data.labels, cfg.benign_label);
    const EvalFrame frame = frame_from_predictions(clf, latents, benign);
    const json report = metrics_report(frame);
    write_text(report_path, report.dump(2) + "\n");

    if (!roc_path.empty()) {
        // Attack-vs-benign sweep: score is the probability mass off the
        // benign class.
        std::vector<double> scores;
        std::vector<int> labels;
        for (Eigen::Index i = 0; i < latents.rows(); ++i) {
            scores.push_back(1.0 - clf.predict_proba(latents.X.row(i))[benign]);
            labels.push_back(latents.y[static_cast<std::size_t>(i)] != benign);
        }
        std::ofstream out(roc_path);
        if (!out) throw IoError("cannot write '" + roc_path + "'");
        write_roc_csv(out, roc_curve(scores, labels));
    }
    std::cout << report.dump(2) << "\n";
    return 0;
}

int cmd_transfer(const std::string& source_dir, const std::string& target_path, int case_num,
                 double portion, bool grid, const GlobalArgs& g) {
    const PipelineConfig cfg = make_config(g);
    SourceModels source;
    source.ae = load_autoencoder_file(source_dir + "/ae.bin");
    source.dec = load_dec_model_file(source_dir + "/dec.bin");
    source.clf = load_ensemble_file(source_dir + "/clf.bin");

    Dataset target = apply_label_map(normalize_dataset(load_payloads(target_path)), cfg.label_map);
    fs::create_directories(g.out_dir);

    if (grid) {
        const GridResult result = run_transfer_grid(source, target, cfg);
        std::ostringstream csv;
        write_grid_csv(csv, result);
        const std::string csv_path = g.out_dir + "/transfer_grid.csv";
        write_text(csv_path, csv.str());
        finish_manifest(result.manifest, g.out_dir, {csv_path});
        std::cout << csv.str();
        return 0;
    }

    ScenarioConfig sc = table_case(case_num);
    sc.portion = portion;
    sc.ae_stop = cfg.ae_stop;
    sc.cluster_stop = cfg.cluster_stop;
    const ScenarioResult result = run_scenario(sc, source, target, cfg);
    const std::string dec_path = g.out_dir + "/dec_transfer.bin";
    const std::string clf_path = g.out_dir + "/clf_transfer.bin";
    save_dec_model_file(dec_path, result.dec);
    save_ensemble_file(clf_path, result.clf);
    finish_manifest(result.manifest, g.out_dir, {dec_path, clf_path});
    std::cout << result.metrics.dump(2) << "\n";
    return 0;
}

int write_uq_outputs(const UqTaskReport& report, const GlobalArgs& g, const std::string& stem) {
    fs::create_directories(g.out_dir);
    std::ostringstream table, dist;
    write_uq_report_csv(table, report);
    write_score_distribution_csv(dist, report);
    const std::string table_path = g.out_dir + "/" + stem + "_report.csv";
    const std::string dist_path = g.out_dir + "/" + stem + "_scores.csv";
    write_text(table_path, table.str());
    write_text(dist_path, dist.str());
    finish_manifest(report.manifest, g.out_dir, {table_path, dist_path});
    std::cout << table.str();
    return 0;
}

int cmd_osr(const std::string& in_path, const std::string& unknown, const GlobalArgs& g) {
    const PipelineConfig cfg = make_config(g);
    const Dataset corpus = normalize_dataset(load_payloads(in_path));
    OsrSpec spec;
    spec.unknown_label = unknown;
    spec.seed = cfg.seed;
    return write_uq_outputs(run_osr(spec, corpus, cfg), g, "osr");
}

int cmd_misclf(const std::string& in_path, const GlobalArgs& g) {
    const PipelineConfig cfg = make_config(g);
    const Dataset corpus = normalize_dataset(load_payloads(in_path));
    return write_uq_outputs(run_misclassification(corpus, cfg), g, "misclf");
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"ODXU neurosymbolic intrusion-detection pipeline"};
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--config", g.config_path, "JSON config with per-stage blocks");
    app.add_option("--seed", g.seed, "global seed override")->each([&](const std::string&) {
        g.seed_set = true;
    });
    app.add_option("--out", g.out_dir, "output directory for runner subcommands");

    // extract
    auto* extract = app.add_subcommand("extract", "pcap to 1500-byte payload rows");
    std::string ex_in, ex_out, ex_bin, ex_rules;
    extract->add_option("--in", ex_in, "libpcap capture")->required();
    extract->add_option("--out", ex_out, "payload csv (or .bin) path");
    extract->add_option("--bin", ex_bin, "extra binary output path");
    extract->add_option("--rules", ex_rules, "labeling rules json");

    // resample
    auto* resample_cmd = app.add_subcommand("resample", "class rebalancing by multiplier plan");
    std::string rs_in, rs_out, rs_plan;
    resample_cmd->add_option("--in", rs_in)->required();
    resample_cmd->add_option("--out", rs_out)->required();
    resample_cmd->add_option("--plan", rs_plan, "json map class -> multiplier")->required();

    // train-dec
    auto* train_dec_cmd = app.add_subcommand("train-dec", "phase I + II on a payload dataset");
    std::string td_in;
    train_dec_cmd->add_option("--in", td_in)->required();

    // train-clf
    auto* train_clf_cmd = app.add_subcommand("train-clf", "classifier over DEC latents");
    std::string tc_in, tc_dec, tc_family = "gbdt";
    train_clf_cmd->add_option("--in", tc_in)->required();
    train_clf_cmd->add_option("--dec", tc_dec, "dec model (required for gbdt)");
    train_clf_cmd->add_option("--family", tc_family, "gbdt | fcnn");

    // train-meta
    auto* train_meta_cmd = app.add_subcommand("train-meta", "correctness metamodel");
    std::string tm_in, tm_dec, tm_clf, tm_variant = "prob", tm_csv;
    train_meta_cmd->add_option("--in", tm_in)->required();
    train_meta_cmd->add_option("--dec", tm_dec)->required();
    train_meta_cmd->add_option("--clf", tm_clf)->required();
    train_meta_cmd->add_option("--variant", tm_variant, "prob | shap | ig");
    train_meta_cmd->add_option("--dump-csv", tm_csv, "write the augmented rows");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "attack-recognition metrics report");
    std::string ev_in, ev_dec, ev_clf, ev_report, ev_roc;
    eval_cmd->add_option("--in", ev_in)->required();
    eval_cmd->add_option("--dec", ev_dec)->required();
    eval_cmd->add_option("--clf", ev_clf)->required();
    eval_cmd->add_option("--report", ev_report, "metrics json path")->required();
    eval_cmd->add_option("--roc", ev_roc, "roc csv path");

    // transfer
    auto* transfer_cmd = app.add_subcommand("transfer", "table-of-cases transfer runs");
    std::string tr_source, tr_target;
    int tr_case = 6;
    double tr_portion = 0.5;
    bool tr_grid = false;
    transfer_cmd->add_option("--source-dir", tr_source, "dir with ae.bin, dec.bin, clf.bin")
        ->required();
    transfer_cmd->add_option("--target", tr_target, "target payload dataset")->required();
    transfer_cmd->add_option("--case", tr_case, "case number 1..6");
    transfer_cmd->add_option("--portion", tr_portion, "fraction of DEC-Train used");
    transfer_cmd->add_flag("--grid", tr_grid, "full 6x4 portion grid");

    // osr
    auto* osr_cmd = app.add_subcommand("osr", "open-set recognition evaluation");
    std::string osr_in, osr_unknown;
    osr_cmd->add_option("--in", osr_in)->required();
    osr_cmd->add_option("--unknown", osr_unknown, "label held out as unknown")->required();

    // misclf
    auto* misclf_cmd = app.add_subcommand("misclf", "misclassification-detection evaluation");
    std::string mc_in;
    misclf_cmd->add_option("--in", mc_in)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (extract->parsed()) return cmd_extract(ex_in, ex_out, ex_bin, ex_rules);
        if (resample_cmd->parsed()) return cmd_resample(rs_in, rs_out, rs_plan, g.seed);
        if (train_dec_cmd->parsed()) return cmd_train_dec(td_in, g);
        if (train_clf_cmd->parsed()) {
            if (tc_family == "gbdt" && tc_dec.empty()) {
                std::cerr << "train-clf: --dec is required for the gbdt family\n";
                return 1;
            }
            return cmd_train_clf(tc_in, tc_dec, tc_family, g);
        }
        if (train_meta_cmd->parsed())
            return cmd_train_meta(tm_in, tm_dec, tm_clf, tm_variant, tm_csv, g);
        if (eval_cmd->parsed()) return cmd_eval(ev_in, ev_dec, ev_clf, ev_report, ev_roc, g);
        if (transfer_cmd->parsed())
            return cmd_transfer(tr_source, tr_target, tr_case, tr_portion, tr_grid, g);
        if (osr_cmd->parsed()) return cmd_osr(osr_in, osr_unknown, g);
        if (misclf_cmd->parsed()) return cmd_misclf(mc_in, g);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

} // namespace odxu
