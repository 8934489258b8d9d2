#include "odxu/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>

namespace odxu {

using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

std::uint64_t fnv1a(const unsigned char* data, std::size_t n, std::uint64_t h = kFnvOffset) {
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= kFnvPrime;
    }
    return h;
}

} // namespace

std::uint64_t row_digest(const Eigen::RowVectorXd& row) {
    std::uint64_t h = kFnvOffset;
    for (Eigen::Index i = 0; i < row.size(); ++i) {
        unsigned char bytes[8];
        const double v = row[i];
        std::memcpy(bytes, &v, 8);
        h = fnv1a(bytes, 8, h);
    }
    return h;
}

std::string digest_hex(std::uint64_t digest) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
    return buf;
}

std::vector<std::string> digest_strings(const Eigen::MatrixXd& X) {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) out.push_back(digest_hex(row_digest(X.row(i))));
    std::sort(out.begin(), out.end());
    return out;
}

std::uint64_t file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("file_digest: cannot open '" + path + "'");
    std::uint64_t h = kFnvOffset;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = fnv1a(reinterpret_cast<unsigned char*>(buf), static_cast<std::size_t>(in.gcount()), h);
    return h;
}

bool scenario_valid(const ScenarioConfig& sc) {
    return !(sc.ae_mode == AeMode::FineTune && sc.cluster_mode == ClusterMode::FineTune);
}

ScenarioConfig table_case(int number) {
    ScenarioConfig sc;
    switch (number) {
    case 1: sc.ae_mode = AeMode::FineTune; sc.cluster_mode = ClusterMode::Train; sc.clf_mode = ClfMode::Train; break;
    case 2: sc.ae_mode = AeMode::AsIs; sc.cluster_mode = ClusterMode::FineTune; sc.clf_mode = ClfMode::Train; break;
    case 3: sc.ae_mode = AeMode::AsIs; sc.cluster_mode = ClusterMode::Train; sc.clf_mode = ClfMode::Train; break;
    case 4: sc.ae_mode = AeMode::FineTune; sc.cluster_mode = ClusterMode::Train; sc.clf_mode = ClfMode::FineTune; break;
    case 5: sc.ae_mode = AeMode::AsIs; sc.cluster_mode = ClusterMode::FineTune; sc.clf_mode = ClfMode::FineTune; break;
    case 6: sc.ae_mode = AeMode::AsIs; sc.cluster_mode = ClusterMode::Train; sc.clf_mode = ClfMode::FineTune; break;
    default: throw DataError("table_case: case number must lie in 1..6");
    }
    return sc;
}

int case_number(const ScenarioConfig& sc) {
    for (int n = 1; n <= 6; ++n) {
        const ScenarioConfig c = table_case(n);
        if (c.ae_mode == sc.ae_mode && c.cluster_mode == sc.cluster_mode &&
            c.clf_mode == sc.clf_mode)
            return n;
    }
    return 0;
}

std::string scenario_name(const ScenarioConfig& sc) {
    std::string s;
    s += sc.ae_mode == AeMode::AsIs ? "as_is" : "fine_tune";
    s += "/";
    s += sc.cluster_mode == ClusterMode::Train ? "train" : "fine_tune";
    s += "/";
    s += sc.clf_mode == ClfMode::Train ? "train" : "fine_tune";
    return s;
}

int resolve_benign_label(const LabelTable& labels, const std::string& name) {
    const int id = labels.find(name);
    return id >= 0 ? id : 0; // synthetic corpora may have no benign class; use id 0
}

EvalFrame frame_from_predictions(const TreeEnsemble& clf, const Dataset& test, int benign_label) {
    EvalFrame frame;
    frame.benign_label = benign_label;
    frame.y_true = test.y;
    frame.certainty.emplace();
    for (Eigen::Index i = 0; i < test.rows(); ++i) {
        const Eigen::VectorXd p = clf.predict_proba(test.X.row(i));
        Eigen::Index arg;
        p.maxCoeff(&arg);
        frame.y_pred.push_back(static_cast<int>(arg));
        frame.certainty->push_back(confidence_score(p));
    }
    return frame;
}

nlohmann::json metrics_report(const EvalFrame& frame) {
    json out;
    out["multiclass_accuracy"] = multiclass_accuracy(frame);
    out["binary_accuracy"] = binary_accuracy(frame);
    try {
        out["misclassified_positive_rate"] = misclassified_positive_rate(frame);
    } catch (const DataError&) {
        out["misclassified_positive_rate"] = nullptr; // no attacks in the frame
    }
    try {
        out["false_omission_rate"] = false_omission_rate(frame);
    } catch (const DataError&) {
        out["false_omission_rate"] = nullptr; // nothing predicted benign
    }
    out["f1_binary"] = f1_binary(frame);
    try {
        out["competence"] = competence(frame);
    } catch (const DataError&) {
        out["competence"] = nullptr; // no predicted positives
    }
    return out;
}

namespace {

// The shared evaluation carve-up: 50/50 DEC halves, then the DEC-Test half
// again 50/50 for the classifier. Indices are into the corpus.
struct ProtocolSplits {
    std::vector<int> dec_train;
    std::vector<int> xgb_train;
    std::vector<int> xgb_test;
};

ProtocolSplits protocol_splits(const Dataset& corpus, std::uint64_t seed) {
    SplitSpec half;
    half.fractions = {0.5, 0.5};
    half.seed = seed;
    const auto dec_parts = split_indices(corpus.y, corpus.labels, half);

    std::vector<int> dec_test_labels;
    for (int i : dec_parts[1]) dec_test_labels.push_back(corpus.y[static_cast<std::size_t>(i)]);
    SplitSpec again;
    again.fractions = {0.5, 0.5};
    again.seed = seed + 1;
    const auto xgb_parts = split_indices(dec_test_labels, corpus.labels, again);

    ProtocolSplits out;
    out.dec_train = dec_parts[0];
    for (int rel : xgb_parts[0]) out.xgb_train.push_back(dec_parts[1][static_cast<std::size_t>(rel)]);
    for (int rel : xgb_parts[1]) out.xgb_test.push_back(dec_parts[1][static_cast<std::size_t>(rel)]);
    return out;
}

json digests_of(const Dataset& d) {
    return digest_strings(d.X);
}

} // namespace

ScenarioResult run_scenario(const ScenarioConfig& sc, const SourceModels& source,
                            const Dataset& target, const PipelineConfig& cfg) {
    if (!scenario_valid(sc))
        throw DataError("invalid scenario combination: a fine-tuned autoencoder invalidates the "
                        "pre-trained clustering checkpoint");

    json manifest;
    manifest["kind"] = "scenario";
    manifest["scenario"] = scenario_name(sc);
    manifest["case"] = case_number(sc);
    manifest["portion"] = sc.portion;
    manifest["config"] = config_to_json(cfg);
    manifest["stops"] = {{"ae", {{"eta", sc.ae_stop.eta}, {"delta", sc.ae_stop.delta}}},
                         {"cluster",
                          {{"eta", sc.cluster_stop.eta}, {"delta", sc.cluster_stop.delta}}}};

    const auto parts = protocol_splits(target, cfg.seed);
    Dataset dec_train_full = take_rows(target, parts.dec_train);
    const auto portion_idx =
        portion_indices(dec_train_full.y, dec_train_full.labels, sc.portion, cfg.seed + 11);
    Dataset dec_train = take_rows(dec_train_full, portion_idx);
    Dataset xgb_train_rows = take_rows(target, parts.xgb_train);
    Dataset xgb_test_rows = take_rows(target, parts.xgb_test);

    json stages;

    // Stage 1: autoencoder.
    auto t0 = std::chrono::steady_clock::now();
    Autoencoder ae = source.ae;
    if (sc.ae_mode == AeMode::FineTune) {
        TrainConfig ft = cfg.ae_train;
        ft.learning_rate *= cfg.finetune_lr_scale;
        train_autoencoder(ae, dec_train.X, ft, sc.ae_stop);
    }
    stages["ae"] = seconds_since(t0);

    // Stage 2: clustering.
    t0 = std::chrono::steady_clock::now();
    DecModel dec;
    if (sc.cluster_mode == ClusterMode::Train) {
        dec = train_dec(ae, dec_train, cfg.dec_train, sc.cluster_stop).model;
    } else {
        TrainConfig ft = cfg.dec_train;
        ft.learning_rate *= cfg.finetune_lr_scale;
        dec = continue_dec(source.dec, dec_train, ft, sc.cluster_stop).model;
    }
    stages["cluster"] = seconds_since(t0);

    // Stage 3: classifier over the transformed DEC-Test halves.
    t0 = std::chrono::steady_clock::now();
    Dataset xgb_train = transform(dec, xgb_train_rows);
    Dataset xgb_test = transform(dec, xgb_test_rows);
    TreeEnsemble clf;
    if (sc.clf_mode == ClfMode::Train) {
        clf = train_gbdt(xgb_train, cfg.gbdt);
    } else {
        clf = continue_training(source.clf, xgb_train, source.clf.params,
                                cfg.clf_finetune_rounds);
    }
    stages["clf"] = seconds_since(t0);
    manifest["stages"] = stages;

    const int benign = resolve_benign_label(target.labels, cfg.benign_label);
    EvalFrame frame = frame_from_predictions(clf, xgb_test, benign);

    ScenarioResult result;
    result.metrics = metrics_report(frame);
    result.accuracy = result.metrics["multiclass_accuracy"].get<double>();
    manifest["metrics"] = result.metrics;
    manifest["seeds"] = {{"global", cfg.seed},
                         {"ae", cfg.ae_train.seed},
                         {"dec", cfg.dec_train.seed}};
    manifest["digests"] = {{"dec_train", digests_of(dec_train)},
                           {"xgb_train", digests_of(xgb_train)},
                           {"xgb_test", digests_of(xgb_test)}};
    result.manifest = std::move(manifest);
    result.dec = std::move(dec);
    result.clf = std::move(clf);
    return result;
}

GridResult run_transfer_grid(const SourceModels& source, const Dataset& target,
                             const PipelineConfig& cfg, const std::vector<double>& portions) {
    GridResult grid;
    grid.portions = portions;
    grid.cases = {1, 2, 3, 4, 5, 6};
    grid.accuracy.resize(static_cast<Eigen::Index>(portions.size()), 6);
    grid.manifest["kind"] = "transfer_grid";
    grid.manifest["config"] = config_to_json(cfg);
    grid.manifest["cells"] = json::array();
    for (std::size_t pi = 0; pi < portions.size(); ++pi) {
        for (int c = 1; c <= 6; ++c) {
            ScenarioConfig sc = table_case(c);
            sc.portion = portions[pi];
            sc.ae_stop = cfg.ae_stop;
            sc.cluster_stop = cfg.cluster_stop;
            ScenarioResult r = run_scenario(sc, source, target, cfg);
            grid.accuracy(static_cast<Eigen::Index>(pi), c - 1) = r.accuracy;
            json cell;
            cell["portion"] = portions[pi];
            cell["case"] = c;
            cell["metrics"] = r.metrics;
            grid.manifest["cells"].push_back(std::move(cell));
        }
    }
    return grid;
}

void write_grid_csv(std::ostream& out, const GridResult& grid) {
    out << "portion";
    for (int c : grid.cases) out << ",case" << c;
    out << "\n";
    for (std::size_t pi = 0; pi < grid.portions.size(); ++pi) {
        out << grid.portions[pi];
        for (Eigen::Index c = 0; c < grid.accuracy.cols(); ++c)
            out << ',' << grid.accuracy(static_cast<Eigen::Index>(pi), c);
        out << "\n";
    }
}

AttackRecognitionResult run_attack_recognition(const Dataset& corpus, const PipelineConfig& cfg) {
    const auto parts = protocol_splits(corpus, cfg.seed);
    Dataset dec_train = take_rows(corpus, parts.dec_train);
    Dataset xgb_train_rows = take_rows(corpus, parts.xgb_train);
    Dataset xgb_test_rows = take_rows(corpus, parts.xgb_test);

    json manifest;
    manifest["kind"] = "attack_recognition";
    manifest["config"] = config_to_json(cfg);
    json stages;

    auto t0 = std::chrono::steady_clock::now();
    AutoencoderSpec spec = cfg.ae;
    spec.input_dim = corpus.cols();
    std::mt19937_64 init_rng(cfg.ae_train.seed);
    Autoencoder ae = make_autoencoder(spec, init_rng);
    train_autoencoder(ae, dec_train.X, cfg.ae_train, cfg.ae_stop);
    stages["ae"] = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    DecModel dec = train_dec(ae, dec_train, cfg.dec_train, cfg.cluster_stop).model;
    stages["dec"] = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    Dataset xgb_train = transform(dec, xgb_train_rows);
    Dataset xgb_test = transform(dec, xgb_test_rows);
    TreeEnsemble clf = train_gbdt(xgb_train, cfg.gbdt);
    stages["clf"] = seconds_since(t0);
    manifest["stages"] = stages;

    const int benign = resolve_benign_label(corpus.labels, cfg.benign_label);
    EvalFrame frame = frame_from_predictions(clf, xgb_test, benign);

    AttackRecognitionResult result;
    result.metrics = metrics_report(frame);
    manifest["metrics"] = result.metrics;
    manifest["digests"] = {{"dec_train", digests_of(dec_train)},
                           {"xgb_train", digests_of(xgb_train)},
                           {"xgb_test", digests_of(xgb_test)}};
    result.manifest = std::move(manifest);
    result.ae = std::move(ae);
    result.dec = std::move(dec);
    result.clf = std::move(clf);
    result.xgb_train = std::move(xgb_train);
    result.xgb_test = std::move(xgb_test);
    result.frame = std::move(frame);
    return result;
}

BaselineResult run_fcnn_baseline(const Dataset& corpus, const PipelineConfig& cfg) {
    const auto parts = protocol_splits(corpus, cfg.seed);

    std::vector<int> train_rows(parts.dec_train);
    train_rows.insert(train_rows.end(), parts.xgb_train.begin(), parts.xgb_train.end());
    std::sort(train_rows.begin(), train_rows.end());
    Dataset train = take_rows(corpus, train_rows);
    Dataset test = take_rows(corpus, parts.xgb_test);

    const int classes = static_cast<int>(corpus.labels.size());
    std::vector<Eigen::Index> layers(cfg.fcnn_hidden);
    layers.push_back(classes);
    FcnnClassifier clf = train_fcnn(train, layers, cfg.fcnn_train);

    EvalFrame frame;
    frame.benign_label = resolve_benign_label(corpus.labels, cfg.benign_label);
    frame.y_true = test.y;
    frame.certainty.emplace();
    const Eigen::MatrixXd proba = clf.predict_proba_batch(test.X);
    for (Eigen::Index i = 0; i < proba.rows(); ++i) {
        Eigen::Index arg;
        proba.row(i).maxCoeff(&arg);
        frame.y_pred.push_back(static_cast<int>(arg));
        frame.certainty->push_back(confidence_score(proba.row(i).transpose()));
    }

    BaselineResult result;
    result.metrics = metrics_report(frame);
    result.accuracy = result.metrics["multiclass_accuracy"].get<double>();
    result.clf = std::move(clf);
    return result;
}

namespace {

// Re-interns labels so ids are dense over the classes that actually occur.
Dataset compact_labels(const Dataset& data) {
    Dataset out;
    out.X = data.X;
    std::map<int, int> remap;
    for (int old_id : data.y)
        if (!remap.count(old_id)) remap.emplace(old_id, 0);
    for (auto& [old_id, new_id] : remap)
        new_id = static_cast<int>(out.labels.intern(data.labels.name(static_cast<std::size_t>(old_id))));
    out.y.reserve(data.y.size());
    for (int old_id : data.y) out.y.push_back(remap.at(old_id));
    return out;
}

struct FittedPipeline {
    Autoencoder ae;
    DecModel dec;
    TreeEnsemble clf;
    Dataset xgb_train;
    Dataset xgb_test;
    json stages;
    json train_digests;
};

FittedPipeline fit_pipeline(const Dataset& corpus, const PipelineConfig& cfg) {
    const auto parts = protocol_splits(corpus, cfg.seed);
    Dataset dec_train = take_rows(corpus, parts.dec_train);
    Dataset xgb_train_rows = take_rows(corpus, parts.xgb_train);
    Dataset xgb_test_rows = take_rows(corpus, parts.xgb_test);

    FittedPipeline fit;
    auto t0 = std::chrono::steady_clock::now();
    AutoencoderSpec spec = cfg.ae;
    spec.input_dim = corpus.cols();
    std::mt19937_64 init_rng(cfg.ae_train.seed);
    fit.ae = make_autoencoder(spec, init_rng);
    train_autoencoder(fit.ae, dec_train.X, cfg.ae_train, cfg.ae_stop);
    fit.stages["ae"] = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    fit.dec = train_dec(fit.ae, dec_train, cfg.dec_train, cfg.cluster_stop).model;
    fit.stages["dec"] = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    fit.xgb_train = transform(fit.dec, xgb_train_rows);
    fit.xgb_test = transform(fit.dec, xgb_test_rows);
    fit.clf = train_gbdt(fit.xgb_train, cfg.gbdt);
    fit.stages["clf"] = seconds_since(t0);

    fit.train_digests = {{"dec_train", digests_of(dec_train)},
                         {"xgb_train", digests_of(fit.xgb_train)}};
    return fit;
}

struct MetaSplitBundle {
    std::vector<int> kept;   // rows of xgb_test in the meta dataset
    std::vector<int> y_meta; // per kept row
    std::vector<int> train_part, test_part; // indices into kept
    Eigen::MatrixXd background;
    std::map<MetaVariant, Eigen::MatrixXd> augmented; // over kept rows
    std::map<MetaVariant, TreeEnsemble> metamodels;
    Eigen::MatrixXd latents_test_part; // base-space rows of the test part
    std::vector<int> y_meta_test;
};

MetaSplitBundle build_meta_bundle(const FittedPipeline& fit, const PipelineConfig& cfg) {
    MetaSplitBundle bundle;

    MetaOptions probe;
    probe.variant = MetaVariant::Prob;
    probe.ratio = cfg.meta_ratio;
    probe.seed = cfg.seed + 4;
    MetaDataset base = build_meta_dataset(fit.clf, fit.xgb_test, probe);
    bundle.kept = base.source_rows;
    bundle.y_meta = base.y_meta;

    // Stratified 80/20 over the kept rows (5:1 ratio preserved inside each
    // side by stratification on y_meta).
    LabelTable meta_names;
    meta_names.intern("correct");
    meta_names.intern("misclassified");
    SplitSpec split80;
    split80.fractions = {0.8, 0.2};
    split80.seed = cfg.seed + 5;
    const auto meta_parts = split_indices(bundle.y_meta, meta_names, split80);
    bundle.train_part = meta_parts[0];
    bundle.test_part = meta_parts[1];

    // Background rows for the shap variant: sampled from the metamodel
    // training split's base-space rows.
    Eigen::MatrixXd train_latents(static_cast<Eigen::Index>(bundle.train_part.size()),
                                  fit.xgb_test.cols());
    for (std::size_t i = 0; i < bundle.train_part.size(); ++i)
        train_latents.row(static_cast<Eigen::Index>(i)) =
            fit.xgb_test.X.row(bundle.kept[static_cast<std::size_t>(bundle.train_part[i])]);
    std::mt19937_64 bg_rng(cfg.seed + 6);
    const auto bg_rows = static_cast<Eigen::Index>(
        std::min<std::size_t>(bundle.train_part.size(), cfg.shap_background_rows));
    std::vector<int> bg_pick(bundle.train_part.size());
    std::iota(bg_pick.begin(), bg_pick.end(), 0);
    std::shuffle(bg_pick.begin(), bg_pick.end(), bg_rng);
    bundle.background.resize(bg_rows, fit.xgb_test.cols());
    for (Eigen::Index i = 0; i < bg_rows; ++i)
        bundle.background.row(i) = train_latents.row(bg_pick[static_cast<std::size_t>(i)]);

    // Augmented matrices over every kept row, one per variant.
    Eigen::MatrixXd kept_latents(static_cast<Eigen::Index>(bundle.kept.size()),
                                 fit.xgb_test.cols());
    for (std::size_t i = 0; i < bundle.kept.size(); ++i)
        kept_latents.row(static_cast<Eigen::Index>(i)) = fit.xgb_test.X.row(bundle.kept[i]);
    bundle.augmented[MetaVariant::Prob] = prob_augment(fit.clf, kept_latents);
    bundle.augmented[MetaVariant::Shap] = shap_augment(fit.clf, kept_latents, bundle.background);
    bundle.augmented[MetaVariant::Ig] = ig_augment(fit.clf, kept_latents);

    for (const auto& [variant, rows] : bundle.augmented) {
        Dataset md;
        md.labels = meta_names;
        md.X.resize(static_cast<Eigen::Index>(bundle.train_part.size()), rows.cols());
        for (std::size_t i = 0; i < bundle.train_part.size(); ++i) {
            md.X.row(static_cast<Eigen::Index>(i)) = rows.row(bundle.train_part[i]);
            md.y.push_back(bundle.y_meta[static_cast<std::size_t>(bundle.train_part[i])]);
        }
        bundle.metamodels.emplace(variant, train_gbdt(md, cfg.meta));
    }

    bundle.latents_test_part.resize(static_cast<Eigen::Index>(bundle.test_part.size()),
                                    fit.xgb_test.cols());
    for (std::size_t i = 0; i < bundle.test_part.size(); ++i) {
        bundle.latents_test_part.row(static_cast<Eigen::Index>(i)) =
            kept_latents.row(bundle.test_part[i]);
        bundle.y_meta_test.push_back(bundle.y_meta[static_cast<std::size_t>(bundle.test_part[i])]);
    }
    return bundle;
}

const TreeEnsemble* metamodel_for(const MetaSplitBundle& bundle, UqMethod method) {
    switch (method) {
    case UqMethod::MetaProb: return &bundle.metamodels.at(MetaVariant::Prob);
    case UqMethod::MetaShap: return &bundle.metamodels.at(MetaVariant::Shap);
    case UqMethod::MetaIg: return &bundle.metamodels.at(MetaVariant::Ig);
    default: return nullptr;
    }
}

void score_all_methods(UqTaskReport& report, const MetaSplitBundle& bundle,
                       const TreeEnsemble& base, const Eigen::MatrixXd& X,
                       const std::vector<int>& labels) {
    report.eval_labels = labels;
    json method_manifest;
    for (UqMethod method : kAllUqMethods) {
        const TreeEnsemble* meta = metamodel_for(bundle, method);
        const auto scores = score_with(method, base, X, meta, &bundle.background);
        report.auroc[uq_method_name(method)] = auroc(scores, labels);
        report.tp_at_tn95[uq_method_name(method)] = tp_at_tn(scores, labels, 0.95).value;
        report.scores[uq_method_name(method)] = scores;
        method_manifest[uq_method_name(method)] = {
            {"metamodel_trained", meta != nullptr},
            {"metamodel_stages", meta != nullptr ? 1 : 0}};
    }
    report.manifest["methods"] = method_manifest;
}

} // namespace

UqTaskReport run_osr(const OsrSpec& spec, const Dataset& corpus, const PipelineConfig& cfg) {
    const int unknown_id = corpus.labels.find(spec.unknown_label);
    if (unknown_id < 0)
        throw DataError("osr: unknown class '" + spec.unknown_label + "' is not in the label table");

    std::vector<int> known_idx, holdout_idx;
    for (std::size_t i = 0; i < corpus.y.size(); ++i)
        (corpus.y[i] == unknown_id ? holdout_idx : known_idx).push_back(static_cast<int>(i));
    if (holdout_idx.empty())
        throw DataError("osr: unknown class '" + spec.unknown_label + "' has no rows");

    Dataset known = compact_labels(take_rows(corpus, known_idx));
    Dataset holdout = take_rows(corpus, holdout_idx);

    FittedPipeline fit = fit_pipeline(known, cfg);
    MetaSplitBundle bundle = build_meta_bundle(fit, cfg);

    const Eigen::MatrixXd holdout_latents = encode_batch(fit.dec.encoder, holdout.X);

    // Equal mix of holdout and metamodel-test rows.
    const auto mix_each = std::min<Eigen::Index>(holdout_latents.rows(),
                                                 bundle.latents_test_part.rows());
    if (mix_each == 0) throw DataError("osr: empty mix (no metamodel-test rows)");
    std::mt19937_64 mix_rng(spec.seed + cfg.seed + 7);
    auto sample_rows = [&](const Eigen::MatrixXd& X, Eigen::Index n) {
        std::vector<int> idx(static_cast<std::size_t>(X.rows()));
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), mix_rng);
        idx.resize(static_cast<std::size_t>(n));
        std::sort(idx.begin(), idx.end());
        Eigen::MatrixXd out(n, X.cols());
        for (Eigen::Index i = 0; i < n; ++i) out.row(i) = X.row(idx[static_cast<std::size_t>(i)]);
        return out;
    };
    const Eigen::MatrixXd mix_unknown = sample_rows(holdout_latents, mix_each);
    const Eigen::MatrixXd mix_known = sample_rows(bundle.latents_test_part, mix_each);

    Eigen::MatrixXd mix(2 * mix_each, mix_unknown.cols());
    mix.topRows(mix_each) = mix_unknown;
    mix.bottomRows(mix_each) = mix_known;
    std::vector<int> mix_labels(static_cast<std::size_t>(2 * mix_each), 0);
    for (Eigen::Index i = 0; i < mix_each; ++i) mix_labels[static_cast<std::size_t>(i)] = 1;

    UqTaskReport report;
    report.manifest["kind"] = "osr";
    report.manifest["unknown_class"] = spec.unknown_label;
    report.manifest["config"] = config_to_json(cfg);
    report.manifest["stages"] = fit.stages;
    report.manifest["mix"] = {{"unknown_rows", mix_each}, {"known_rows", mix_each}};
    report.manifest["digests"] = fit.train_digests;
    report.manifest["digests"]["holdout"] = digest_strings(holdout.X);
    report.manifest["digests"]["mix_latents"] = digest_strings(mix);

    score_all_methods(report, bundle, fit.clf, mix, mix_labels);
    for (UqMethod method : kAllUqMethods) {
        const char* name = uq_method_name(method);
        report.manifest["results"][name] = {{"auroc", report.auroc[name]},
                                            {"tp_at_tn95", report.tp_at_tn95[name]}};
    }
    return report;
}

UqTaskReport run_misclassification(const Dataset& corpus, const PipelineConfig& cfg) {
    FittedPipeline fit = fit_pipeline(corpus, cfg);
    MetaSplitBundle bundle = build_meta_bundle(fit, cfg);

    UqTaskReport report;
    report.manifest["kind"] = "misclassification";
    report.manifest["config"] = config_to_json(cfg);
    report.manifest["stages"] = fit.stages;
    report.manifest["digests"] = fit.train_digests;

    // Metamodel training rows never appear in the evaluation slice.
    Eigen::MatrixXd meta_train_rows(static_cast<Eigen::Index>(bundle.train_part.size()),
                                    bundle.latents_test_part.cols());
    for (std::size_t i = 0; i < bundle.train_part.size(); ++i)
        meta_train_rows.row(static_cast<Eigen::Index>(i)) =
            fit.xgb_test.X.row(bundle.kept[static_cast<std::size_t>(bundle.train_part[i])]);
    report.manifest["digests"]["meta_train"] = digest_strings(meta_train_rows);
    report.manifest["digests"]["meta_test"] = digest_strings(bundle.latents_test_part);

    score_all_methods(report, bundle, fit.clf, bundle.latents_test_part, bundle.y_meta_test);
    for (UqMethod method : kAllUqMethods) {
        const char* name = uq_method_name(method);
        report.manifest["results"][name] = {{"auroc", report.auroc[name]},
                                            {"tp_at_tn95", report.tp_at_tn95[name]}};
    }
    return report;
}

void write_uq_report_csv(std::ostream& out, const UqTaskReport& report) {
    out << "method,auroc,tp_at_tn95\n";
    for (const auto& [name, value] : report.auroc)
        out << name << ',' << value << ',' << report.tp_at_tn95.at(name) << "\n";
}

void write_score_distribution_csv(std::ostream& out, const UqTaskReport& report) {
    out << "method,score,label\n";
    for (const auto& [name, scores] : report.scores)
        for (std::size_t i = 0; i < scores.size(); ++i)
            out << name << ',' << scores[i] << ',' << report.eval_labels[i] << "\n";
}

void write_roc_csv(std::ostream& out, const std::vector<RocPoint>& curve) {
    out << "threshold,fpr,tpr\n";
    for (const auto& pt : curve) out << pt.threshold << ',' << pt.fpr << ',' << pt.tpr << "\n";
}

} // namespace odxu
