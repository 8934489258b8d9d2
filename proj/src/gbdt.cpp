#include "odxu/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "odxu/errors.hpp"

namespace odxu {

GradHess softmax_grad_hess(const std::vector<int>& labels, const Eigen::MatrixXd& margins) {
    const Eigen::Index n = margins.rows();
    const Eigen::Index k = margins.cols();
    if (static_cast<Eigen::Index>(labels.size()) != n)
        throw ShapeError("softmax_grad_hess: label count mismatch");

    GradHess gh;
    gh.g.resize(n, k);
    gh.h.resize(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = margins.row(i).maxCoeff();
        Eigen::RowVectorXd p = (margins.row(i).array() - m).exp();
        p /= p.sum();
        for (Eigen::Index c = 0; c < k; ++c) {
            const double pc = p[c];
            gh.g(i, c) = pc - (labels[static_cast<std::size_t>(i)] == static_cast<int>(c) ? 1.0 : 0.0);
            gh.h(i, c) = pc * (1.0 - pc);
        }
    }
    return gh;
}

double split_gain(double gl, double hl, double gr, double hr, const BoostParams& p) {
    const double gp = gl + gr;
    const double hp = hl + hr;
    return 0.5 * (gl * gl / (hl + p.lambda) + gr * gr / (hr + p.lambda) -
                  gp * gp / (hp + p.lambda)) -
           p.gamma;
}

namespace {

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
    double gl = 0.0, hl = 0.0, gr = 0.0, hr = 0.0;
};

SplitChoice best_split(const Eigen::MatrixXd& X, const Eigen::VectorXd& g,
                       const Eigen::VectorXd& h, const std::vector<int>& rows,
                       const BoostParams& p) {
    SplitChoice best;
    const double g_total = [&] {
        double s = 0.0;
        for (int r : rows) s += g[r];
        return s;
    }();
    const double h_total = [&] {
        double s = 0.0;
        for (int r : rows) s += h[r];
        return s;
    }();

    std::vector<int> order(rows);
    for (int f = 0; f < X.cols(); ++f) {
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return X(a, f) < X(b, f); });
        double gl = 0.0, hl = 0.0;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            gl += g[order[i]];
            hl += h[order[i]];
            const double lo = X(order[i], f);
            const double hi = X(order[i + 1], f);
            if (lo == hi) continue;
            const double thr = 0.5 * (lo + hi);
            if (!(lo < thr) || !(thr <= hi)) continue; // fp-degenerate midpoint
            const double gr = g_total - gl;
            const double hr = h_total - hl;
            if (hl < p.min_child_hessian || hr < p.min_child_hessian) continue;
            const double gain = split_gain(gl, hl, gr, hr, p);
            // Strict > keeps the first candidate on ties: lowest feature
            // index, then lowest threshold, in scan order.
            if (gain > 0.0 && gain > best.gain)
                best = SplitChoice{true, f, thr, gain, gl, hl, gr, hr};
        }
    }
    return best;
}

int grow(Tree& tree, const Eigen::MatrixXd& X, const Eigen::VectorXd& g, const Eigen::VectorXd& h,
         std::vector<int> rows, const BoostParams& p, int depth) {
    double g_sum = 0.0, h_sum = 0.0;
    for (int r : rows) {
        g_sum += g[r];
        h_sum += h[r];
    }

    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[index].g_sum = g_sum;
    tree.nodes[index].h_sum = h_sum;

    SplitChoice split;
    if (depth < p.max_depth && rows.size() >= 2) split = best_split(X, g, h, rows, p);

    if (!split.found) {
        tree.nodes[index].leaf = true;
        tree.nodes[index].weight = -g_sum / (h_sum + p.lambda) * p.learning_rate;
        return index;
    }

    std::vector<int> left_rows, right_rows;
    for (int r : rows) (X(r, split.feature) < split.threshold ? left_rows : right_rows).push_back(r);

    tree.nodes[index].leaf = false;
    tree.nodes[index].feature = split.feature;
    tree.nodes[index].threshold = split.threshold;
    tree.nodes[index].gain = split.gain;
    rows.clear();
    rows.shrink_to_fit();
    const int left = grow(tree, X, g, h, std::move(left_rows), p, depth + 1);
    const int right = grow(tree, X, g, h, std::move(right_rows), p, depth + 1);
    tree.nodes[index].left = left;
    tree.nodes[index].right = right;
    return index;
}

} // namespace

Tree build_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& g, const Eigen::VectorXd& h,
                const BoostParams& p) {
    if (X.rows() == 0) throw DataError("build_tree: empty sample set");
    if (g.size() != X.rows() || h.size() != X.rows())
        throw ShapeError("build_tree: gradient length mismatch");
    Tree tree;
    tree.shrinkage = p.learning_rate;
    std::vector<int> rows(static_cast<std::size_t>(X.rows()));
    std::iota(rows.begin(), rows.end(), 0);
    grow(tree, X, g, h, std::move(rows), p, 0);
    return tree;
}

double Tree::predict(const Eigen::RowVectorXd& x) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].leaf) {
        const auto& n = nodes[static_cast<std::size_t>(i)];
        i = x[n.feature] < n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].weight;
}

Eigen::VectorXd TreeEnsemble::predict_margins(const Eigen::RowVectorXd& x) const {
    if (x.size() != feature_count) throw ShapeError("predict: feature width mismatch");
    Eigen::VectorXd margins = Eigen::VectorXd::Constant(class_count, base_score);
    for (const auto& [cls, tree] : trees) margins[cls] += tree.predict(x);
    return margins;
}

Eigen::VectorXd TreeEnsemble::predict_proba(const Eigen::RowVectorXd& x) const {
    Eigen::VectorXd m = predict_margins(x);
    const double mx = m.maxCoeff();
    Eigen::VectorXd p = (m.array() - mx).exp();
    return p / p.sum();
}

Eigen::MatrixXd TreeEnsemble::predict_proba_batch(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd out(X.rows(), class_count);
    for (Eigen::Index i = 0; i < X.rows(); ++i) out.row(i) = predict_proba(X.row(i)).transpose();
    return out;
}

int TreeEnsemble::predict_class(const Eigen::RowVectorXd& x) const {
    Eigen::Index arg;
    predict_margins(x).maxCoeff(&arg);
    return static_cast<int>(arg);
}

namespace {

void boost_rounds(TreeEnsemble& model, const Eigen::MatrixXd& X, const std::vector<int>& y,
                  Eigen::MatrixXd& margins, const BoostParams& p, int rounds) {
    for (int round = 0; round < rounds; ++round) {
        const GradHess gh = softmax_grad_hess(y, margins);
        for (int c = 0; c < model.class_count; ++c) {
            Tree tree = build_tree(X, gh.g.col(c), gh.h.col(c), p);
            for (Eigen::Index i = 0; i < X.rows(); ++i) margins(i, c) += tree.predict(X.row(i));
            model.trees.emplace_back(c, std::move(tree));
        }
    }
}

void check_labels(const std::vector<int>& y, int class_count) {
    if (class_count < 2) throw DataError("gbdt: need at least two classes");
    for (int label : y)
        if (label < 0 || label >= class_count)
            throw DataError("gbdt: label outside [0, class_count)");
}

} // namespace

TreeEnsemble train_gbdt(const Dataset& latents, const BoostParams& p) {
    if (latents.rows() == 0) throw DataError("train_gbdt: empty dataset");
    const int class_count =
        latents.y.empty() ? 0 : *std::max_element(latents.y.begin(), latents.y.end()) + 1;
    if (distinct_class_count(latents.y) < 2)
        throw DataError("train_gbdt: single-class data");
    check_labels(latents.y, class_count);

    TreeEnsemble model;
    model.class_count = class_count;
    model.feature_count = static_cast<int>(latents.cols());
    model.base_score = 0.0;
    model.params = p;

    Eigen::MatrixXd margins =
        Eigen::MatrixXd::Constant(latents.rows(), class_count, model.base_score);
    boost_rounds(model, latents.X, latents.y, margins, p, p.rounds);
    return model;
}

TreeEnsemble continue_training(const TreeEnsemble& model, const Dataset& latents,
                               const BoostParams& p, int extra_rounds) {
    if (latents.cols() != model.feature_count)
        throw ShapeError("continue_training: feature count does not match the loaded model");
    const int max_label =
        latents.y.empty() ? -1 : *std::max_element(latents.y.begin(), latents.y.end());
    if (max_label >= model.class_count)
        throw DataError("continue_training: labels exceed the loaded model's class space");
    if (p.lambda != model.params.lambda || p.gamma != model.params.gamma)
        throw DataError("continue_training: lambda/gamma must match the loaded model");
    if (extra_rounds < 0) throw DataError("continue_training: extra_rounds must be >= 0");

    TreeEnsemble out = model;
    if (extra_rounds == 0) return out;
    if (latents.rows() == 0) throw DataError("continue_training: empty dataset");

    Eigen::MatrixXd margins(latents.rows(), model.class_count);
    for (Eigen::Index i = 0; i < latents.rows(); ++i)
        margins.row(i) = model.predict_margins(latents.X.row(i)).transpose();

    BoostParams rounds_params = p;
    boost_rounds(out, latents.X, latents.y, margins, rounds_params, extra_rounds);
    out.params.rounds = model.params.rounds + extra_rounds;
    out.params.learning_rate = p.learning_rate;
    return out;
}

std::vector<double> feature_gain(const TreeEnsemble& model) {
    std::vector<double> gain(static_cast<std::size_t>(model.feature_count), 0.0);
    for (const auto& [cls, tree] : model.trees)
        for (const auto& node : tree.nodes)
            if (!node.leaf) gain[static_cast<std::size_t>(node.feature)] += node.gain;
    return gain;
}

double gbdt_log_loss(const TreeEnsemble& model, const Dataset& data) {
    if (data.rows() == 0) throw DataError("gbdt_log_loss: empty dataset");
    double total = 0.0;
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        const Eigen::VectorXd p = model.predict_proba(data.X.row(i));
        total -= std::log(p[data.y[static_cast<std::size_t>(i)]] + 1e-12);
    }
    return total / static_cast<double>(data.rows());
}

} // namespace odxu
