#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "odxu/dataset.hpp"

namespace odxu {

struct BoostParams {
    double lambda = 1.0;        // L2 regularizer on leaf weights
    double gamma = 0.0;         // per-split penalty
    double learning_rate = 0.3; // shrinkage, folded into stored leaf weights
    int max_depth = 6;
    int rounds = 50;
    double min_child_hessian = 1.0;
    std::uint64_t seed = 0;
};

struct TreeNode {
    bool leaf = true;
    // Internal-node fields.
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
    int left = -1;
    int right = -1;
    // Leaf value, shrinkage included.
    double weight = 0.0;
    // Sums over the samples that reached this node; kept on every node so a
    // stored gain can be re-derived from its children.
    double g_sum = 0.0;
    double h_sum = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes; // preorder, root at index 0
    double shrinkage = 0.3;      // learning rate this tree was built with

    double predict(const Eigen::RowVectorXd& x) const;
};

// Per-sample-per-class gradients and Hessians of softmax cross-entropy:
// g = p - onehot(y), h = p(1-p).
struct GradHess {
    Eigen::MatrixXd g; // N x K
    Eigen::MatrixXd h;
};

GradHess softmax_grad_hess(const std::vector<int>& labels, const Eigen::MatrixXd& margins);

// 0.5 [GL^2/(HL+l) + GR^2/(HR+l) - (GL+GR)^2/(HL+HR+l)] - gamma.
double split_gain(double gl, double hl, double gr, double hr, const BoostParams& p);

// Exhaustive scan over every feature and every midpoint between consecutive
// distinct sorted values; ties break to the lowest feature then lowest
// threshold. Children must each carry min_child_hessian of Hessian mass and
// the gain must be positive, otherwise the node stays a leaf with weight
// -G/(H+lambda) * learning_rate.
Tree build_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& g, const Eigen::VectorXd& h,
                const BoostParams& p);

struct TreeEnsemble {
    std::vector<std::pair<int, Tree>> trees; // (class index, tree), round-major
    int class_count = 0;
    int feature_count = 0;
    double base_score = 0.0;
    BoostParams params;

    Eigen::VectorXd predict_margins(const Eigen::RowVectorXd& x) const;
    Eigen::VectorXd predict_proba(const Eigen::RowVectorXd& x) const;
    Eigen::MatrixXd predict_proba_batch(const Eigen::MatrixXd& X) const;
    int predict_class(const Eigen::RowVectorXd& x) const;
};

// `rounds` boosting rounds, one tree per class per round. Labels must be
// dense in [0, class_count) with at least two classes present.
TreeEnsemble train_gbdt(const Dataset& latents, const BoostParams& p);

// Appends extra_rounds rounds starting from the loaded model's margins on the
// new data. Feature and class schema must match; lambda and gamma must equal
// the loaded model's so stored gains stay consistent.
TreeEnsemble continue_training(const TreeEnsemble& model, const Dataset& latents,
                               const BoostParams& p, int extra_rounds);

// Cumulative stored gain per feature across every split in the ensemble.
std::vector<double> feature_gain(const TreeEnsemble& model);

// Mean softmax cross-entropy of the ensemble on a dataset.
double gbdt_log_loss(const TreeEnsemble& model, const Dataset& data);

} // namespace odxu
