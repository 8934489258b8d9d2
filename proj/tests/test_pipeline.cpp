#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "odxu/cli.hpp"
#include "odxu/pipeline.hpp"
#include "odxu/serialize.hpp"
#include "packet_builder.hpp"
#include "synthetic.hpp"

using namespace odxu;
namespace fs = std::filesystem;

namespace {

// A small but non-trivial source/target pair: three classes, the target
// shifted away from the source.
Dataset small_corpus(double shift, int rows_per_class, std::uint64_t seed) {
    const std::size_t w = 40;
    std::vector<testutil::BlobClass> classes;
    const char* names[3] = {"Benign", "DoS Hulk", "Port Scan"};
    for (int c = 0; c < 3; ++c) {
        testutil::BlobClass cls;
        cls.label = names[c];
        cls.center = testutil::random_center(w, 100 + c);
        cls.center.array() += shift;
        cls.center = cls.center.cwiseMin(255.0).cwiseMax(0.0);
        cls.rows = rows_per_class;
        cls.sigma = 18.0;
        classes.push_back(cls);
    }
    return testutil::blob_feature_corpus(classes, seed);
}

PipelineConfig small_config(std::uint64_t seed) {
    PipelineConfig cfg = default_config();
    cfg.ae.input_dim = 40;
    cfg.ae.hidden = {16};
    cfg.ae.latent_dim = 12;
    cfg.ae.corruption_rate = 0.05;
    cfg.ae_train.max_epochs = 12;
    cfg.ae_train.batch_size = 32;
    cfg.ae_train.learning_rate = 2e-3;
    cfg.ae_stop = {4, 1e-4};
    cfg.dec_train.max_epochs = 15;
    cfg.dec_train.batch_size = 32;
    cfg.dec_train.learning_rate = 1e-3;
    cfg.cluster_stop = {4, 1e-3};
    cfg.gbdt.rounds = 15;
    cfg.gbdt.min_child_hessian = 0.1;
    cfg.meta.rounds = 10;
    cfg.meta.min_child_hessian = 0.05;
    cfg.clf_finetune_rounds = 5;
    cfg.shap_background_rows = 8;
    cfg.fcnn_hidden = {16};
    cfg.fcnn_train.max_epochs = 15;
    cfg.seed = seed;
    cfg.propagate_seed();
    return cfg;
}

SourceModels train_source(const Dataset& corpus, const PipelineConfig& cfg) {
    auto fitted = run_attack_recognition(corpus, cfg);
    return SourceModels{std::move(fitted.ae), std::move(fitted.dec), std::move(fitted.clf)};
}

std::set<std::string> to_set(const nlohmann::json& arr) {
    std::set<std::string> out;
    for (const auto& v : arr) out.insert(v.get<std::string>());
    return out;
}

bool disjoint(const std::set<std::string>& a, const std::set<std::string>& b) {
    for (const auto& v : a)
        if (b.count(v)) return false;
    return true;
}

} // namespace

TEST_CASE("model containers round-trip to identical predictions") {
    std::mt19937_64 rng(5);
    const Dataset corpus = small_corpus(0.0, 60, 9);
    const PipelineConfig cfg = small_config(31);
    auto fitted = run_attack_recognition(corpus, cfg);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd probes(100, 40);
    for (Eigen::Index i = 0; i < probes.size(); ++i) probes.data()[i] = unit(rng);
    Eigen::MatrixXd latent_probes(100, 12);
    for (Eigen::Index i = 0; i < latent_probes.size(); ++i)
        latent_probes.data()[i] = unit(rng) * 4.0 - 2.0;

    // Autoencoder.
    std::stringstream ae_buf(std::ios::in | std::ios::out | std::ios::binary);
    save_autoencoder(ae_buf, fitted.ae);
    const Autoencoder ae2 = load_autoencoder(ae_buf);
    for (int i = 0; i < 100; ++i) {
        const Eigen::VectorXd x = probes.row(i).transpose();
        REQUIRE(encode(fitted.ae, x) == encode(ae2, x));
        REQUIRE(forward(fitted.ae.decoder, encode(fitted.ae, x)) ==
                forward(ae2.decoder, encode(ae2, x)));
    }

    // DEC model.
    std::stringstream dec_buf(std::ios::in | std::ios::out | std::ios::binary);
    save_dec_model(dec_buf, fitted.dec);
    const DecModel dec2 = load_dec_model(dec_buf);
    REQUIRE(dec2.centroids.u == fitted.dec.centroids.u);
    for (int i = 0; i < 100; ++i) {
        const Eigen::VectorXd x = probes.row(i).transpose();
        REQUIRE(forward(fitted.dec.encoder, x) == forward(dec2.encoder, x));
    }

    // Tree ensemble.
    std::stringstream gb_buf(std::ios::in | std::ios::out | std::ios::binary);
    save_ensemble(gb_buf, fitted.clf);
    const TreeEnsemble clf2 = load_ensemble(gb_buf);
    for (int i = 0; i < 100; ++i)
        REQUIRE(fitted.clf.predict_proba(latent_probes.row(i)) ==
                clf2.predict_proba(latent_probes.row(i)));

    // Serialization is deterministic byte-for-byte.
    std::stringstream gb_again(std::ios::in | std::ios::out | std::ios::binary);
    save_ensemble(gb_again, fitted.clf);
    REQUIRE(gb_again.str() == gb_buf.str());

    // FcNN container.
    auto baseline = run_fcnn_baseline(corpus, cfg);
    std::stringstream fc_buf(std::ios::in | std::ios::out | std::ios::binary);
    save_fcnn(fc_buf, baseline.clf);
    const FcnnClassifier fc2 = load_fcnn(fc_buf);
    for (int i = 0; i < 100; ++i) {
        const Eigen::VectorXd x = probes.row(i).transpose();
        REQUIRE(baseline.clf.predict_proba(x) == fc2.predict_proba(x));
    }
}

TEST_CASE("loaders reject corrupted magics and cross-kind files") {
    const Dataset corpus = small_corpus(0.0, 40, 11);
    const PipelineConfig cfg = small_config(32);
    auto fitted = run_attack_recognition(corpus, cfg);

    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    save_ensemble(buf, fitted.clf);
    std::string bytes = buf.str();
    bytes[0] ^= 0x40; // corrupt one magic byte
    std::stringstream bad(bytes, std::ios::in | std::ios::binary);
    CHECK_THROWS_AS(load_ensemble(bad), FormatError);

    // An AE file is not a GBDT and vice versa.
    std::stringstream ae_buf(std::ios::in | std::ios::out | std::ios::binary);
    save_autoencoder(ae_buf, fitted.ae);
    CHECK_THROWS_AS(load_ensemble(ae_buf), FormatError);
    std::stringstream gb_buf(std::ios::in | std::ios::out | std::ios::binary);
    save_ensemble(gb_buf, fitted.clf);
    CHECK_THROWS_AS(load_autoencoder(gb_buf), FormatError);

    // Subtype confusion inside the network container family.
    std::stringstream fc_buf(std::ios::in | std::ios::out | std::ios::binary);
    FcnnClassifier clf;
    clf.class_count = 2;
    std::mt19937_64 rng(3);
    clf.net = make_network(4, {2}, {Activation::Softmax}, rng);
    save_fcnn(fc_buf, clf);
    CHECK_THROWS_AS(load_autoencoder(fc_buf), FormatError);
}

TEST_CASE("stratified split properties") {
    std::vector<int> labels;
    LabelTable names;
    names.intern("a");
    names.intern("b");
    for (int i = 0; i < 100; ++i) labels.push_back(i % 2);

    SplitSpec spec;
    spec.fractions = {0.5, 0.5};
    spec.seed = 77;
    const auto parts = split_indices(labels, names, spec);
    REQUIRE(parts.size() == 2);
    CHECK(parts[0].size() == 50);
    CHECK(parts[1].size() == 50);

    std::map<int, int> counts0;
    for (int i : parts[0]) counts0[labels[static_cast<std::size_t>(i)]]++;
    CHECK(std::abs(counts0[0] - 25) <= 1);
    CHECK(std::abs(counts0[1] - 25) <= 1);

    std::set<int> seen(parts[0].begin(), parts[0].end());
    for (int i : parts[1]) REQUIRE_FALSE(seen.count(i));

    const auto again = split_indices(labels, names, spec);
    CHECK(parts == again);

    // A class smaller than the partition count fails by name.
    std::vector<int> tiny_labels = {0, 0, 0, 1};
    LabelTable tiny_names;
    tiny_names.intern("big");
    tiny_names.intern("rare");
    SplitSpec three;
    three.fractions = {0.4, 0.3, 0.3};
    try {
        split_indices(tiny_labels, tiny_names, three);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("rare") != std::string::npos);
    }
}

TEST_CASE("exactly six of the eight mode triples are valid") {
    int valid = 0, invalid = 0;
    for (AeMode ae : {AeMode::AsIs, AeMode::FineTune}) {
        for (ClusterMode cl : {ClusterMode::FineTune, ClusterMode::Train}) {
            for (ClfMode clf : {ClfMode::Train, ClfMode::FineTune}) {
                ScenarioConfig sc;
                sc.ae_mode = ae;
                sc.cluster_mode = cl;
                sc.clf_mode = clf;
                if (scenario_valid(sc)) {
                    ++valid;
                    CHECK(case_number(sc) >= 1);
                } else {
                    ++invalid;
                    CHECK(ae == AeMode::FineTune);
                    CHECK(cl == ClusterMode::FineTune);
                }
            }
        }
    }
    CHECK(valid == 6);
    CHECK(invalid == 2);

    // Case 6 is as-is / train / fine-tune.
    const ScenarioConfig six = table_case(6);
    CHECK(six.ae_mode == AeMode::AsIs);
    CHECK(six.cluster_mode == ClusterMode::Train);
    CHECK(six.clf_mode == ClfMode::FineTune);
}

TEST_CASE("scenario runs honor modes and audit cleanly") {
    const Dataset source_corpus = small_corpus(0.0, 60, 21);
    const Dataset target_corpus = small_corpus(25.0, 60, 22);
    const PipelineConfig cfg = small_config(41);
    const SourceModels source = train_source(source_corpus, cfg);

    // Invalid combination is rejected before any training happens.
    ScenarioConfig bad;
    bad.ae_mode = AeMode::FineTune;
    bad.cluster_mode = ClusterMode::FineTune;
    bad.clf_mode = ClfMode::Train;
    CHECK_THROWS_AS(run_scenario(bad, source, target_corpus, cfg), DataError);

    // Case 3 and case 6 share the AE/cluster stages for equal seeds; only
    // the classifier differs.
    ScenarioConfig c3 = table_case(3);
    ScenarioConfig c6 = table_case(6);
    c3.portion = c6.portion = 0.75;
    auto r3 = run_scenario(c3, source, target_corpus, cfg);
    auto r6 = run_scenario(c6, source, target_corpus, cfg);
    CHECK(r3.dec.centroids.u == r6.dec.centroids.u);
    for (std::size_t l = 0; l < r3.dec.encoder.layers.size(); ++l)
        CHECK(r3.dec.encoder.layers[l].weights == r6.dec.encoder.layers[l].weights);
    CHECK(r3.clf.trees.size() != r6.clf.trees.size());

    // Fine-tuned classifier extends the source ensemble.
    CHECK(r6.clf.trees.size() == source.clf.trees.size() +
                                     static_cast<std::size_t>(cfg.clf_finetune_rounds) * 3);

    // Leakage audit: training and evaluation digests never intersect.
    const auto& digests = r6.manifest["digests"];
    CHECK(disjoint(to_set(digests["xgb_train"]), to_set(digests["xgb_test"])));
    CHECK(r6.manifest["metrics"]["multiclass_accuracy"].get<double>() > 0.5);
}

TEST_CASE("transfer grid is deterministic") {
    const Dataset source_corpus = small_corpus(0.0, 40, 31);
    const Dataset target_corpus = small_corpus(20.0, 40, 32);
    PipelineConfig cfg = small_config(51);
    cfg.ae_train.max_epochs = 6;
    cfg.dec_train.max_epochs = 8;
    const SourceModels source = train_source(source_corpus, cfg);

    const std::vector<double> portions = {0.5, 0.75};
    auto a = run_transfer_grid(source, target_corpus, cfg, portions);
    auto b = run_transfer_grid(source, target_corpus, cfg, portions);
    CHECK(a.accuracy == b.accuracy);

    std::ostringstream csv_a, csv_b;
    write_grid_csv(csv_a, a);
    write_grid_csv(csv_b, b);
    CHECK(csv_a.str() == csv_b.str());
    CHECK(csv_a.str().rfind("portion,case1,case2,case3,case4,case5,case6", 0) == 0);
}

TEST_CASE("misclassification task reports five methods") {
    // Overlapping classes so the base model actually errs.
    const std::size_t w = 40;
    std::vector<testutil::BlobClass> classes;
    const Eigen::VectorXd a = testutil::random_center(w, 301);
    Eigen::VectorXd b = a;
    b.array() += 12.0;
    const Eigen::VectorXd c = testutil::random_center(w, 303);
    classes.push_back({"Benign", a, 120, 22.0});
    classes.push_back({"DoS Hulk", b, 120, 22.0});
    classes.push_back({"Port Scan", c, 120, 18.0});
    const Dataset corpus = testutil::blob_feature_corpus(classes, 71);

    const PipelineConfig cfg = small_config(61);
    const UqTaskReport report = run_misclassification(corpus, cfg);

    REQUIRE(report.auroc.size() == 5);
    REQUIRE(report.tp_at_tn95.size() == 5);
    for (const auto& [name, value] : report.auroc) {
        CHECK(value >= 0.0);
        CHECK(value <= 1.0);
        CHECK(report.manifest["results"].contains(name));
    }

    // Score-based methods never train a metamodel.
    CHECK(report.manifest["methods"]["confidence"]["metamodel_stages"].get<int>() == 0);
    CHECK(report.manifest["methods"]["entropy"]["metamodel_stages"].get<int>() == 0);
    CHECK(report.manifest["methods"]["meta_prob"]["metamodel_stages"].get<int>() == 1);

    // Metamodel training rows never appear in the evaluation slice.
    CHECK(disjoint(to_set(report.manifest["digests"]["meta_train"]),
                   to_set(report.manifest["digests"]["meta_test"])));
}

TEST_CASE("osr holdout never leaks into training") {
    const std::size_t w = 40;
    const Eigen::VectorXd a = testutil::random_center(w, 401);
    Eigen::VectorXd b = a;
    b.array() += 14.0;
    const Eigen::VectorXd c = testutil::random_center(w, 403);
    const Eigen::VectorXd unknown = 0.5 * (a + b);
    std::vector<testutil::BlobClass> classes;
    classes.push_back({"Benign", a, 120, 20.0});
    classes.push_back({"DoS Hulk", b, 120, 20.0});
    classes.push_back({"Port Scan", c, 120, 16.0});
    classes.push_back({"Slowloris", unknown, 80, 24.0});
    const Dataset corpus = testutil::blob_feature_corpus(classes, 73);

    const PipelineConfig cfg = small_config(62);
    OsrSpec spec;
    spec.unknown_label = "Slowloris";
    const UqTaskReport report = run_osr(spec, corpus, cfg);

    REQUIRE(report.auroc.size() == 5);
    const auto holdout = to_set(report.manifest["digests"]["holdout"]);
    CHECK(disjoint(holdout, to_set(report.manifest["digests"]["dec_train"])));

    const auto unknown_rows = report.manifest["mix"]["unknown_rows"].get<int>();
    const auto known_rows = report.manifest["mix"]["known_rows"].get<int>();
    CHECK(std::abs(unknown_rows - known_rows) <= 1);

    OsrSpec missing;
    missing.unknown_label = "NoSuchClass";
    CHECK_THROWS_AS(run_osr(missing, corpus, cfg), DataError);
}

TEST_CASE("config json round-trips") {
    PipelineConfig cfg = small_config(77);
    cfg.label_map = {{"Slowloris", "DoS Hulk"}};
    const nlohmann::json j = config_to_json(cfg);
    const PipelineConfig back = config_from_json(j);
    CHECK(back.ae.hidden == cfg.ae.hidden);
    CHECK(back.ae_train.learning_rate == cfg.ae_train.learning_rate);
    CHECK(back.cluster_stop.eta == cfg.cluster_stop.eta);
    CHECK(back.cluster_stop.delta == cfg.cluster_stop.delta);
    CHECK(back.gbdt.rounds == cfg.gbdt.rounds);
    CHECK(back.meta_ratio == cfg.meta_ratio);
    CHECK(back.label_map == cfg.label_map);
    CHECK(back.seed == cfg.seed);
}

TEST_CASE("cli: extract, round-trip, eval, exit codes") {
    const fs::path dir = fs::temp_directory_path() / "odxu_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);

    // Hand-built two-packet capture.
    testutil::FrameSpec web;
    web.payload = {'G', 'E', 'T', ' ', '/'};
    web.dst_port = 80;
    testutil::FrameSpec dns;
    dns.protocol = 17;
    dns.dst_port = 53;
    dns.payload = {0x42, 0x42};
    const auto capture = testutil::build_pcap({{10, 0, testutil::build_ipv4_frame(web)},
                                               {11, 5, testutil::build_ipv4_frame(dns)}});
    const std::string pcap_path = (dir / "two.pcap").string();
    std::ofstream(pcap_path, std::ios::binary)
        .write(reinterpret_cast<const char*>(capture.data()),
               static_cast<std::streamsize>(capture.size()));

    const std::string csv_path = (dir / "two.csv").string();
    std::vector<const char*> argv = {"odxu", "extract", "--in", pcap_path.c_str(), "--out",
                                     csv_path.c_str()};
    CHECK(run_cli(static_cast<int>(argv.size()), argv.data()) == 0);

    std::ifstream csv(csv_path);
    std::string line;
    int rows = 0;
    std::getline(csv, line);
    CHECK(line.rfind("b0,b1,", 0) == 0);
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);

    // Resample through the CLI with a seeded plan.
    const std::string plan_path = (dir / "plan.json").string();
    std::ofstream(plan_path) << "{\"DoS Hulk\": 3.0}";
    const std::string resampled_path = (dir / "resampled.csv").string();
    LabelRule rule80;
    rule80.dst_port = 80;
    rule80.label = "DoS Hulk";
    {
        // Re-extract with a rule so the plan has a class to hit.
        std::istringstream in(testutil::to_string_bytes(capture));
        auto labeled = ingest_pcap(in, {rule80});
        std::ofstream out(csv_path);
        write_payload_csv(out, labeled);
    }
    std::vector<const char*> rs = {"odxu", "--seed", "5", "resample", "--in", csv_path.c_str(),
                                   "--out", resampled_path.c_str(), "--plan", plan_path.c_str()};
    CHECK(run_cli(static_cast<int>(rs.size()), rs.data()) == 0);
    {
        std::ifstream in(resampled_path);
        auto back = read_payload_csv(in);
        int hulk = 0;
        for (const auto& row : back.rows)
            hulk += back.labels.name(row.label) == "DoS Hulk";
        CHECK(hulk == 3); // one matching packet tripled
        CHECK(back.rows.size() == 4);
    }

    // Unknown subcommand: usage error.
    std::vector<const char*> bad = {"odxu", "frobnicate"};
    CHECK(run_cli(static_cast<int>(bad.size()), bad.data()) == 1);

    // Missing file: data error.
    std::vector<const char*> missing = {"odxu", "extract", "--in", "/nonexistent.pcap"};
    CHECK(run_cli(static_cast<int>(missing.size()), missing.data()) == 2);

    fs::remove_all(dir);
}

TEST_CASE("cli: transfer and train-meta wiring") {
    const fs::path dir = fs::temp_directory_path() / "odxu_cli_transfer";
    fs::remove_all(dir);
    fs::create_directories(dir);

    // Overlapping two-class corpora so the classifier errs somewhere.
    auto corpus_at = [&](double shift, std::uint64_t seed) {
        std::vector<testutil::BlobClass> classes;
        testutil::BlobClass a, b;
        a.label = "Benign";
        a.center = testutil::random_center(1500, 700);
        a.center.array() += shift;
        a.rows = 70;
        a.sigma = 24.0;
        b.label = "DoS Hulk";
        b.center = a.center;
        b.center.array() += 1.2; // heavy class overlap
        b.rows = 70;
        b.sigma = 24.0;
        classes.push_back(a);
        classes.push_back(b);
        return testutil::blob_payload_corpus(classes, seed);
    };
    const std::string source_path = (dir / "source.bin").string();
    const std::string target_path = (dir / "target.bin").string();
    {
        std::ofstream out(source_path, std::ios::binary);
        write_payload_bin(out, corpus_at(0.0, 903));
        std::ofstream out2(target_path, std::ios::binary);
        write_payload_bin(out2, corpus_at(6.0, 904));
    }

    nlohmann::json cj = config_to_json(small_config(88));
    cj["ae"]["input_dim"] = 1500;
    cj["ae"]["hidden"] = {16};
    cj["ae"]["train"]["max_epochs"] = 3;
    cj["dec"]["train"]["max_epochs"] = 4;
    cj["gbdt"]["rounds"] = 8;
    cj["meta"]["rounds"] = 5;
    const std::string cfg_path = (dir / "config.json").string();
    std::ofstream(cfg_path) << cj.dump(2);

    const std::string model_dir = (dir / "models").string();
    const std::string dec_path = model_dir + "/dec.bin";
    const std::string clf_path = model_dir + "/clf.bin";

    std::vector<const char*> td = {"odxu", "--config", cfg_path.c_str(), "--out",
                                   model_dir.c_str(), "train-dec", "--in", source_path.c_str()};
    REQUIRE(run_cli(static_cast<int>(td.size()), td.data()) == 0);
    std::vector<const char*> tc = {"odxu", "--config", cfg_path.c_str(), "--out",
                                   model_dir.c_str(), "train-clf", "--in", source_path.c_str(),
                                   "--dec", dec_path.c_str()};
    REQUIRE(run_cli(static_cast<int>(tc.size()), tc.data()) == 0);

    // train-meta against a fresh sample of the same distribution.
    const std::string meta_dir = (dir / "meta").string();
    std::vector<const char*> tm = {"odxu", "--config", cfg_path.c_str(), "--out",
                                   meta_dir.c_str(), "train-meta", "--in", target_path.c_str(),
                                   "--dec", dec_path.c_str(), "--clf", clf_path.c_str(),
                                   "--variant", "prob"};
    REQUIRE(run_cli(static_cast<int>(tm.size()), tm.data()) == 0);
    REQUIRE(fs::exists(meta_dir + "/meta_prob.bin"));
    CHECK(peek_model_kind(meta_dir + "/meta_prob.bin") == ModelKind::Gbdt);

    // Single-case transfer run writes metrics, models, and a manifest.
    const std::string run_dir = (dir / "run").string();
    std::vector<const char*> tr = {"odxu", "--config", cfg_path.c_str(), "--out",
                                   run_dir.c_str(), "transfer", "--source-dir", model_dir.c_str(),
                                   "--target", target_path.c_str(), "--case", "6",
                                   "--portion", "0.75"};
    REQUIRE(run_cli(static_cast<int>(tr.size()), tr.data()) == 0);
    REQUIRE(fs::exists(run_dir + "/manifest.json"));
    nlohmann::json manifest;
    std::ifstream(run_dir + "/manifest.json") >> manifest;
    CHECK(manifest["case"].get<int>() == 6);
    CHECK(manifest["metrics"].contains("multiclass_accuracy"));

    // Invalid case number is a usage-style data error (exit 2).
    std::vector<const char*> bad = {"odxu", "--config", cfg_path.c_str(), "--out",
                                    run_dir.c_str(), "transfer", "--source-dir",
                                    model_dir.c_str(), "--target", target_path.c_str(),
                                    "--case", "9"};
    CHECK(run_cli(static_cast<int>(bad.size()), bad.data()) == 2);

    fs::remove_all(dir);
}

TEST_CASE("cli: train, eval, manifest artifact audit") {
    const fs::path dir = fs::temp_directory_path() / "odxu_cli_train";
    fs::remove_all(dir);
    fs::create_directories(dir);

    // A small payload corpus on the full 1500-byte format.
    std::vector<testutil::BlobClass> classes;
    for (int c = 0; c < 2; ++c) {
        testutil::BlobClass cls;
        cls.label = c == 0 ? "Benign" : "DoS Hulk";
        cls.center = testutil::random_center(1500, 500 + c);
        cls.rows = 60;
        cls.sigma = 18.0;
        classes.push_back(cls);
    }
    const PayloadDataset corpus = testutil::blob_payload_corpus(classes, 91);
    const std::string data_path = (dir / "data.bin").string();
    {
        std::ofstream out(data_path, std::ios::binary);
        write_payload_bin(out, corpus);
    }

    // Tiny config so the CLI run stays fast.
    nlohmann::json cj = config_to_json(small_config(87));
    cj["ae"]["input_dim"] = 1500;
    cj["ae"]["hidden"] = {24};
    cj["ae"]["train"]["max_epochs"] = 4;
    cj["dec"]["train"]["max_epochs"] = 5;
    const std::string cfg_path = (dir / "config.json").string();
    std::ofstream(cfg_path) << cj.dump(2);

    const std::string model_dir = (dir / "models").string();
    std::vector<const char*> train_dec_argv = {"odxu",      "--config", cfg_path.c_str(),
                                               "--out",     model_dir.c_str(), "train-dec",
                                               "--in",      data_path.c_str()};
    REQUIRE(run_cli(static_cast<int>(train_dec_argv.size()), train_dec_argv.data()) == 0);
    REQUIRE(fs::exists(model_dir + "/ae.bin"));
    REQUIRE(fs::exists(model_dir + "/dec.bin"));

    std::vector<const char*> train_clf_argv = {
        "odxu", "--config", cfg_path.c_str(), "--out", model_dir.c_str(),
        "train-clf", "--in", data_path.c_str(), "--dec", (model_dir + "/dec.bin").c_str()};
    std::string dec_path = model_dir + "/dec.bin";
    train_clf_argv[9] = dec_path.c_str();
    REQUIRE(run_cli(static_cast<int>(train_clf_argv.size()), train_clf_argv.data()) == 0);
    REQUIRE(fs::exists(model_dir + "/clf.bin"));

    // Manifest records every artifact with a digest that still matches.
    nlohmann::json manifest;
    std::ifstream(model_dir + "/manifest.json") >> manifest;
    REQUIRE(manifest.contains("artifacts"));
    for (const auto& artifact : manifest["artifacts"]) {
        const std::string path = artifact["path"].get<std::string>();
        REQUIRE(fs::exists(path));
        CHECK(digest_hex(file_digest(path)) == artifact["digest"].get<std::string>());
    }

    const std::string report_path = (dir / "report.json").string();
    const std::string roc_path = (dir / "roc.csv").string();
    std::string clf_path = model_dir + "/clf.bin";
    std::vector<const char*> eval_argv = {"odxu", "--config", cfg_path.c_str(),
                                          "eval", "--in", data_path.c_str(),
                                          "--dec", dec_path.c_str(), "--clf", clf_path.c_str(),
                                          "--report", report_path.c_str(), "--roc",
                                          roc_path.c_str()};
    REQUIRE(run_cli(static_cast<int>(eval_argv.size()), eval_argv.data()) == 0);
    nlohmann::json report;
    std::ifstream(report_path) >> report;
    CHECK(report.contains("multiclass_accuracy"));
    CHECK(report.contains("competence"));
    std::ifstream roc(roc_path);
    std::string header;
    std::getline(roc, header);
    CHECK(header == "threshold,fpr,tpr");

    fs::remove_all(dir);
}
