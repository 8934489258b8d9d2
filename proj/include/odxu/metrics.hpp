#pragma once

#include <optional>
#include <vector>

namespace odxu {

// Predictions paired with ground truth for one evaluation pass. The binary
// collapse treats every label other than benign_label as "attack".
struct EvalFrame {
    std::vector<int> y_true;
    std::vector<int> y_pred;
    int benign_label = 0;
    std::optional<std::vector<double>> certainty; // per-sample z in [0,1]
};

double multiclass_accuracy(const EvalFrame& f);
double binary_accuracy(const EvalFrame& f);

// Among true attacks: flagged as an attack but assigned the wrong attack type.
double misclassified_positive_rate(const EvalFrame& f);

// Among predicted-benign samples: how many were actually attacks.
double false_omission_rate(const EvalFrame& f);

double f1_binary(const EvalFrame& f);

// (sum z over binary TP - sum z over binary FP) / (#TP + #FP).
double competence(const EvalFrame& f);

// Mann-Whitney rank statistic; ties receive the average rank. labels are 0/1
// with 1 = positive; higher score must indicate the positive class.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

struct TpAtTnResult {
    double value = 0.0;
    double threshold = 0.0;
    bool low_negative_support = false; // fewer than 20 negatives: quantile ill-resolved
};

// tau = smallest observed score with >= tn_target of negatives strictly below;
// returns the fraction of positives scoring >= tau.
TpAtTnResult tp_at_tn(const std::vector<double>& scores, const std::vector<int>& labels,
                      double tn_target = 0.95);

struct RocPoint {
    double threshold;
    double fpr;
    double tpr;
};

// Operating points swept over descending thresholds (predict positive at
// score >= threshold); tpr and fpr are non-decreasing along the sweep.
std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

} // namespace odxu
