#include "odxu/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "odxu/errors.hpp"

namespace odxu {

namespace {

void check_frame(const EvalFrame& f) {
    if (f.y_true.size() != f.y_pred.size())
        throw ShapeError("eval frame: y_true and y_pred lengths differ");
    if (f.y_true.empty()) throw DataError("eval frame: empty");
    if (f.certainty && f.certainty->size() != f.y_true.size())
        throw ShapeError("eval frame: certainty length differs from labels");
}

void check_scores(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ShapeError("scores and labels lengths differ");
    if (scores.empty()) throw DataError("empty score set");
}

} // namespace

double multiclass_accuracy(const EvalFrame& f) {
    check_frame(f);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < f.y_true.size(); ++i)
        hits += f.y_true[i] == f.y_pred[i];
    return static_cast<double>(hits) / static_cast<double>(f.y_true.size());
}

double binary_accuracy(const EvalFrame& f) {
    check_frame(f);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < f.y_true.size(); ++i) {
        const bool t = f.y_true[i] != f.benign_label;
        const bool p = f.y_pred[i] != f.benign_label;
        hits += t == p;
    }
    return static_cast<double>(hits) / static_cast<double>(f.y_true.size());
}

double misclassified_positive_rate(const EvalFrame& f) {
    check_frame(f);
    std::size_t attacks = 0, flagged_wrong_type = 0;
    for (std::size_t i = 0; i < f.y_true.size(); ++i) {
        const bool t = f.y_true[i] != f.benign_label;
        const bool p = f.y_pred[i] != f.benign_label;
        if (!t) continue;
        ++attacks;
        if (p && f.y_pred[i] != f.y_true[i]) ++flagged_wrong_type;
    }
    if (attacks == 0) throw DataError("misclassified_positive_rate: no attack samples");
    return static_cast<double>(flagged_wrong_type) / static_cast<double>(attacks);
}

double false_omission_rate(const EvalFrame& f) {
    check_frame(f);
    std::size_t predicted_benign = 0, missed_attacks = 0;
    for (std::size_t i = 0; i < f.y_true.size(); ++i) {
        const bool t = f.y_true[i] != f.benign_label;
        const bool p = f.y_pred[i] != f.benign_label;
        if (p) continue;
        ++predicted_benign;
        if (t) ++missed_attacks;
    }
    if (predicted_benign == 0) throw DataError("false_omission_rate: no predicted-benign samples");
    return static_cast<double>(missed_attacks) / static_cast<double>(predicted_benign);
}

double f1_binary(const EvalFrame& f) {
    check_frame(f);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < f.y_true.size(); ++i) {
        const bool t = f.y_true[i] != f.benign_label;
        const bool p = f.y_pred[i] != f.benign_label;
        tp += t && p;
        fp += !t && p;
        fn += t && !p;
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    if (denom == 0.0) return 0.0; // no positives anywhere, by convention
    return 2.0 * static_cast<double>(tp) / denom;
}

double competence(const EvalFrame& f) {
    check_frame(f);
    if (!f.certainty) throw DataError("competence: certainty scores missing");
    const auto& z = *f.certainty;
    double tp_mass = 0.0, fp_mass = 0.0;
    std::size_t predicted_positive = 0;
    for (std::size_t i = 0; i < f.y_true.size(); ++i) {
        const bool t = f.y_true[i] != f.benign_label;
        const bool p = f.y_pred[i] != f.benign_label;
        if (!p) continue;
        ++predicted_positive;
        if (t)
            tp_mass += z[i];
        else
            fp_mass += z[i];
    }
    if (predicted_positive == 0) throw DataError("competence: no predicted positives");
    return (tp_mass - fp_mass) / static_cast<double>(predicted_positive);
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_scores(scores, labels);
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += l != 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("auroc: needs both classes present");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Average ranks over tie groups (1-based ranks).
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }

    double rank_sum_pos = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        if (labels[k] != 0) rank_sum_pos += rank[k];

    const double u = rank_sum_pos - static_cast<double>(n_pos) * static_cast<double>(n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

TpAtTnResult tp_at_tn(const std::vector<double>& scores, const std::vector<int>& labels,
                      double tn_target) {
    check_scores(scores, labels);
    std::vector<double> neg, pos;
    for (std::size_t k = 0; k < scores.size(); ++k)
        (labels[k] != 0 ? pos : neg).push_back(scores[k]);
    if (neg.empty() || pos.empty()) throw DataError("tp_at_tn: needs both classes present");

    std::sort(neg.begin(), neg.end());
    const auto n0 = static_cast<double>(neg.size());
    const auto need = static_cast<std::size_t>(std::ceil(tn_target * n0 - 1e-9));

    std::vector<double> candidates(scores);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    double tau = std::numeric_limits<double>::infinity();
    for (double c : candidates) {
        const auto below =
            static_cast<std::size_t>(std::lower_bound(neg.begin(), neg.end(), c) - neg.begin());
        if (below >= need) {
            tau = c;
            break;
        }
    }

    std::size_t detected = 0;
    for (double s : pos) detected += s >= tau;

    TpAtTnResult r;
    r.value = static_cast<double>(detected) / static_cast<double>(pos.size());
    r.threshold = tau;
    r.low_negative_support = neg.size() < 20;
    return r;
}

std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_scores(scores, labels);
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += l != 0;
    const std::size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("roc_curve: needs both classes present");

    std::vector<double> thresholds(scores);
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    std::vector<RocPoint> out;
    out.reserve(thresholds.size() + 1);
    out.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    for (double tau : thresholds) {
        std::size_t tp = 0, fp = 0;
        for (std::size_t k = 0; k < scores.size(); ++k) {
            if (scores[k] >= tau) {
                if (labels[k] != 0)
                    ++tp;
                else
                    ++fp;
            }
        }
        out.push_back({tau, static_cast<double>(fp) / static_cast<double>(n_neg),
                       static_cast<double>(tp) / static_cast<double>(n_pos)});
    }
    return out;
}

} // namespace odxu
