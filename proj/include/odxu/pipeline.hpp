#pragma once

#include <json.hpp>
#include <optional>
#include <string>

#include "odxu/config.hpp"
#include "odxu/dec.hpp"
#include "odxu/gbdt.hpp"
#include "odxu/metrics.hpp"
#include "odxu/net.hpp"
#include "odxu/split.hpp"
#include "odxu/uq.hpp"

namespace odxu {

enum class AeMode { AsIs, FineTune };
enum class ClusterMode { FineTune, Train };
enum class ClfMode { Train, FineTune };

struct ScenarioConfig {
    AeMode ae_mode = AeMode::AsIs;
    ClusterMode cluster_mode = ClusterMode::Train;
    ClfMode clf_mode = ClfMode::Train;
    double portion = 0.5; // fraction of DEC-Train actually used
    EarlyStop ae_stop{20, 5e-4};
    EarlyStop cluster_stop{20, 5e-3};
};

// A fine-tuned AE invalidates the pre-trained clustering checkpoint, so
// (FineTune, FineTune, *) is rejected. Exactly 6 of the 8 triples survive.
bool scenario_valid(const ScenarioConfig& sc);

// Mode triple for one column of the six-case table (1-based).
ScenarioConfig table_case(int number);
int case_number(const ScenarioConfig& sc); // 1..6, or 0 if invalid
std::string scenario_name(const ScenarioConfig& sc);

struct SourceModels {
    Autoencoder ae;
    DecModel dec;
    TreeEnsemble clf;
};

// 64-bit FNV-1a over the row's little-endian doubles; manifests store these
// per split so leakage audits can intersect them.
std::uint64_t row_digest(const Eigen::RowVectorXd& row);
std::vector<std::string> digest_strings(const Eigen::MatrixXd& X);

// The six attack-recognition metrics evaluated on a frame, as JSON.
nlohmann::json metrics_report(const EvalFrame& frame);
EvalFrame frame_from_predictions(const TreeEnsemble& clf, const Dataset& test, int benign_label);

int resolve_benign_label(const LabelTable& labels, const std::string& name);

struct ScenarioResult {
    DecModel dec;
    TreeEnsemble clf;
    double accuracy = 0.0;
    nlohmann::json metrics;
    nlohmann::json manifest;
};

// One transfer run: 50/50 DEC split, portioned DEC-Train, the three staged
// modes, classifier train/eval on the transformed DEC-Test halves, and the
// metric sweep on XGBoost-Test.
ScenarioResult run_scenario(const ScenarioConfig& sc, const SourceModels& source,
                            const Dataset& target, const PipelineConfig& cfg);

struct GridResult {
    std::vector<double> portions;
    std::vector<int> cases;
    Eigen::MatrixXd accuracy; // portions x cases
    nlohmann::json manifest;
};

GridResult run_transfer_grid(const SourceModels& source, const Dataset& target,
                             const PipelineConfig& cfg,
                             const std::vector<double>& portions = {0.10, 0.25, 0.50, 0.75});
void write_grid_csv(std::ostream& out, const GridResult& grid);

// From-scratch attack recognition on one corpus (Phase I + II + classifier).
struct AttackRecognitionResult {
    Autoencoder ae;
    DecModel dec;
    TreeEnsemble clf;
    Dataset xgb_train;
    Dataset xgb_test;
    EvalFrame frame;
    nlohmann::json metrics;
    nlohmann::json manifest;
};
AttackRecognitionResult run_attack_recognition(const Dataset& corpus, const PipelineConfig& cfg);

// FcNN baseline on the same protocol: trained on DEC-Train + XGBoost-Train
// rows in payload space, evaluated on the XGBoost-Test rows.
struct BaselineResult {
    FcnnClassifier clf;
    nlohmann::json metrics;
    double accuracy = 0.0;
};
BaselineResult run_fcnn_baseline(const Dataset& corpus, const PipelineConfig& cfg);

struct UqTaskReport {
    // method name -> metric value over the task's evaluation set
    std::map<std::string, double> auroc;
    std::map<std::string, double> tp_at_tn95;
    // raw per-sample uncertainty per method plus the binary labels, for
    // ROC curves and score-density exports
    std::map<std::string, std::vector<double>> scores;
    std::vector<int> eval_labels;
    nlohmann::json manifest;
};

struct OsrSpec {
    std::string unknown_label;
    std::uint64_t seed = 0;
};

// Holds out the unknown class before any training, runs the whole pipeline
// on the remaining classes, then scores an equal mix of holdout and
// metamodel-test rows with all five methods (unknown = positive).
UqTaskReport run_osr(const OsrSpec& spec, const Dataset& corpus, const PipelineConfig& cfg);

// Misclassification detection: metamodel labels on XGBoost-Test, 5:1
// subsample, stratified 80/20, all five methods scored on Metamodel-Test.
UqTaskReport run_misclassification(const Dataset& corpus, const PipelineConfig& cfg);

void write_uq_report_csv(std::ostream& out, const UqTaskReport& report);
void write_score_distribution_csv(std::ostream& out, const UqTaskReport& report);
void write_roc_csv(std::ostream& out, const std::vector<RocPoint>& curve);

// FNV-1a over a file's bytes, for manifest artifact records.
std::uint64_t file_digest(const std::string& path);
std::string digest_hex(std::uint64_t digest);

} // namespace odxu
