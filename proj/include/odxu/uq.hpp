#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "odxu/dataset.hpp"
#include "odxu/gbdt.hpp"

namespace odxu {

// Gap between the two largest class probabilities.
double confidence_score(const Eigen::VectorXd& p);

// Shannon entropy, natural log, 0*log(0) = 0.
double entropy_score(const Eigen::VectorXd& p);

struct ShapRow {
    Eigen::VectorXd phi;     // one contribution per feature
    double base_value = 0.0; // value of the empty coalition
};

// What the coalition value function reads off the model. Probability is the
// class probability (the augmentation default); Margin is the pre-softmax
// score, which is additive across trees.
enum class ShapOutput { Probability, Margin };

// Exact subset enumeration of the Shapley sum (d <= 16). The value of a
// coalition S is the mean over background rows of the model output on x with
// the features outside S replaced by the background row's values.
ShapRow exact_shap(const TreeEnsemble& model, const Eigen::RowVectorXd& x,
                   const Eigen::MatrixXd& background, int class_index,
                   ShapOutput output = ShapOutput::Probability);

// [x, phi for the argmax predicted class]; width 2d.
Eigen::MatrixXd shap_augment(const TreeEnsemble& model, const Eigen::MatrixXd& X,
                             const Eigen::MatrixXd& background);

// [x, class probabilities sorted descending, confidence]; width d + K + 1.
Eigen::MatrixXd prob_augment(const TreeEnsemble& model, const Eigen::MatrixXd& X);

// [x, sorted class probabilities, per-feature cumulative gain]; width 2d + K.
// Every row carries the identical gain block.
Eigen::MatrixXd ig_augment(const TreeEnsemble& model, const Eigen::MatrixXd& X);

enum class MetaVariant : std::uint8_t { Prob = 0, Shap = 1, Ig = 2 };

const char* meta_variant_name(MetaVariant v);
std::vector<std::string> augmented_column_names(MetaVariant v, int d, int k);

struct MetaDataset {
    Eigen::MatrixXd X_meta;
    std::vector<int> y_meta;      // 0 = base model correct, 1 = misclassified
    std::vector<int> pred_class;  // stored base predictions for the kept rows
    std::vector<int> source_rows; // row indices into the source dataset
    MetaVariant variant = MetaVariant::Prob;
    std::vector<std::string> column_names;
};

struct MetaOptions {
    MetaVariant variant = MetaVariant::Prob;
    double ratio = 5.0; // correct rows kept per misclassified row
    std::uint64_t seed = 0;
    Eigen::MatrixXd background; // required by the shap variant
};

// Labels per the correctness rule (0 correct / 1 wrong), subsamples the
// correct class down to ratio * (#wrong) without replacement, then augments
// the surviving rows. Deterministic given seed.
MetaDataset build_meta_dataset(const TreeEnsemble& model, const Dataset& data,
                               const MetaOptions& opts);

// Binary GBDT over the augmented rows.
TreeEnsemble train_metamodel(const MetaDataset& md, const BoostParams& params);

// Certainty z: predicted probability that the base model is correct.
double metamodel_certainty(const TreeEnsemble& meta, const Eigen::RowVectorXd& meta_row);

enum class UqMethod : std::uint8_t { Confidence = 0, Entropy, MetaProb, MetaShap, MetaIg };

UqMethod parse_uq_method(const std::string& name);
const char* uq_method_name(UqMethod m);
inline constexpr UqMethod kAllUqMethods[] = {UqMethod::Confidence, UqMethod::Entropy,
                                             UqMethod::MetaProb, UqMethod::MetaShap,
                                             UqMethod::MetaIg};

// Per-sample uncertainty, normalized so larger always means less certain:
// entropy as-is, 1-confidence, 1-z for the metamodels.
std::vector<double> score_with(UqMethod method, const TreeEnsemble& base, const Eigen::MatrixXd& X,
                               const TreeEnsemble* metamodel = nullptr,
                               const Eigen::MatrixXd* background = nullptr);

void write_augmented_csv(std::ostream& out, const MetaDataset& md);

} // namespace odxu
