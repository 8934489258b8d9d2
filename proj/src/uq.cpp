#include "odxu/uq.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "odxu/errors.hpp"

namespace odxu {

double confidence_score(const Eigen::VectorXd& p) {
    if (p.size() < 2) throw DataError("confidence_score: needs at least two classes");
    double top = -1.0, second = -1.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] > top) {
            second = top;
            top = p[i];
        } else if (p[i] > second) {
            second = p[i];
        }
    }
    return top - second;
}

double entropy_score(const Eigen::VectorXd& p) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    return h;
}

namespace {

constexpr int kMaxShapFeatures = 16;

// Adds one tree's leaf weight to the margin slot of every coalition mask the
// leaf serves: the branch at each split follows x when the feature is in the
// coalition and the background row otherwise. Descending once and fanning out
// over the free features touches each mask exactly once, so the per-mask
// additions are the same ones a per-mask tree walk would produce, in the same
// tree order.
void add_masked_tree(const Tree& tree, const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& bg,
                     std::uint32_t full, double* margins, int stride) {
    struct Frame {
        int node;
        std::uint32_t need_x;
        std::uint32_t need_bg;
    };
    std::vector<Frame> stack = {{0, 0, 0}};
    while (!stack.empty()) {
        const Frame f = stack.back();
        stack.pop_back();
        const TreeNode& n = tree.nodes[static_cast<std::size_t>(f.node)];
        if (n.leaf) {
            const std::uint32_t free = full & ~(f.need_x | f.need_bg);
            std::uint32_t sub = free;
            while (true) {
                margins[(f.need_x | sub) * static_cast<std::uint32_t>(stride)] += n.weight;
                if (sub == 0) break;
                sub = (sub - 1) & free;
            }
            continue;
        }
        const auto bit = std::uint32_t{1} << n.feature;
        const int x_dir = x[n.feature] < n.threshold ? n.left : n.right;
        const int bg_dir = bg[n.feature] < n.threshold ? n.left : n.right;
        if (f.need_x & bit) {
            stack.push_back({x_dir, f.need_x, f.need_bg});
        } else if (f.need_bg & bit) {
            stack.push_back({bg_dir, f.need_x, f.need_bg});
        } else if (x_dir == bg_dir) {
            stack.push_back({x_dir, f.need_x, f.need_bg});
        } else {
            stack.push_back({x_dir, f.need_x | bit, f.need_bg});
            stack.push_back({bg_dir, f.need_x, f.need_bg | bit});
        }
    }
}

} // namespace

ShapRow exact_shap(const TreeEnsemble& model, const Eigen::RowVectorXd& x,
                   const Eigen::MatrixXd& background, int class_index, ShapOutput output) {
    const int d = static_cast<int>(x.size());
    if (d > kMaxShapFeatures)
        throw CapacityError("exact_shap: " + std::to_string(d) +
                            " features exceed the enumeration bound of 16");
    if (background.rows() == 0) throw DataError("exact_shap: empty background set");
    if (background.cols() != d) throw ShapeError("exact_shap: background width mismatch");
    if (class_index < 0 || class_index >= model.class_count)
        throw DataError("exact_shap: class index out of range");

    // Coalition values for every mask; bit j set means feature j takes x's
    // value, clear means the background row's value. Margins accumulate per
    // mask in ensemble order, exactly as predict_proba would compute them on
    // the composed vector.
    const std::size_t n_masks = std::size_t{1} << d;
    const auto k = static_cast<std::size_t>(model.class_count);
    std::vector<double> value(n_masks, 0.0);
    std::vector<double> margins(n_masks * k);
    Eigen::VectorXd m(model.class_count);
    for (Eigen::Index r = 0; r < background.rows(); ++r) {
        std::fill(margins.begin(), margins.end(), model.base_score);
        for (const auto& [cls, tree] : model.trees)
            add_masked_tree(tree, x, background.row(r), static_cast<std::uint32_t>(n_masks - 1),
                            margins.data() + cls, static_cast<int>(k));
        for (std::size_t mask = 0; mask < n_masks; ++mask) {
            if (output == ShapOutput::Margin) {
                value[mask] += margins[mask * k + static_cast<std::size_t>(class_index)];
                continue;
            }
            for (std::size_t c = 0; c < k; ++c)
                m[static_cast<Eigen::Index>(c)] = margins[mask * k + c];
            const double mx = m.maxCoeff();
            Eigen::VectorXd p = (m.array() - mx).exp();
            p /= p.sum();
            value[mask] += p[class_index];
        }
    }
    for (std::size_t mask = 0; mask < n_masks; ++mask)
        value[mask] /= static_cast<double>(background.rows());

    double fact[kMaxShapFeatures + 1];
    fact[0] = 1.0;
    for (int i = 1; i <= kMaxShapFeatures; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);

    ShapRow row;
    row.base_value = value[0];
    row.phi = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) {
        const std::size_t bit = std::size_t{1} << i;
        double phi = 0.0;
        for (std::size_t mask = 0; mask < n_masks; ++mask) {
            if (mask & bit) continue;
            const int s = std::popcount(mask);
            const double w = fact[s] * fact[d - s - 1] / fact[d];
            phi += w * (value[mask | bit] - value[mask]);
        }
        row.phi[i] = phi;
    }
    return row;
}

Eigen::MatrixXd shap_augment(const TreeEnsemble& model, const Eigen::MatrixXd& X,
                             const Eigen::MatrixXd& background) {
    const Eigen::Index d = X.cols();
    Eigen::MatrixXd out(X.rows(), 2 * d);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const int predicted = model.predict_class(X.row(i));
        const ShapRow row = exact_shap(model, X.row(i), background, predicted);
        out.row(i).head(d) = X.row(i);
        out.row(i).tail(d) = row.phi.transpose();
    }
    return out;
}

namespace {

Eigen::RowVectorXd sorted_descending(const Eigen::VectorXd& p) {
    std::vector<double> v(p.data(), p.data() + p.size());
    std::sort(v.begin(), v.end(), std::greater<>());
    return Eigen::Map<Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace

Eigen::MatrixXd prob_augment(const TreeEnsemble& model, const Eigen::MatrixXd& X) {
    const Eigen::Index d = X.cols();
    const Eigen::Index k = model.class_count;
    Eigen::MatrixXd out(X.rows(), d + k + 1);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const Eigen::VectorXd p = model.predict_proba(X.row(i));
        out.row(i).head(d) = X.row(i);
        out.row(i).segment(d, k) = sorted_descending(p);
        out(i, d + k) = confidence_score(p);
    }
    return out;
}

Eigen::MatrixXd ig_augment(const TreeEnsemble& model, const Eigen::MatrixXd& X) {
    const Eigen::Index d = X.cols();
    const Eigen::Index k = model.class_count;
    const std::vector<double> gains = feature_gain(model);
    if (static_cast<Eigen::Index>(gains.size()) != d)
        throw ShapeError("ig_augment: model feature count differs from data width");
    const Eigen::RowVectorXd ig_row =
        Eigen::Map<const Eigen::RowVectorXd>(gains.data(), static_cast<Eigen::Index>(gains.size()));

    Eigen::MatrixXd out(X.rows(), 2 * d + k);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const Eigen::VectorXd p = model.predict_proba(X.row(i));
        out.row(i).head(d) = X.row(i);
        out.row(i).segment(d, k) = sorted_descending(p);
        out.row(i).tail(d) = ig_row;
    }
    return out;
}

const char* meta_variant_name(MetaVariant v) {
    switch (v) {
    case MetaVariant::Prob: return "prob";
    case MetaVariant::Shap: return "shap";
    case MetaVariant::Ig: return "ig";
    }
    return "?";
}

std::vector<std::string> augmented_column_names(MetaVariant v, int d, int k) {
    std::vector<std::string> names;
    for (int i = 0; i < d; ++i) names.push_back("x" + std::to_string(i));
    switch (v) {
    case MetaVariant::Prob:
        for (int i = 0; i < k; ++i) names.push_back("p_sorted_" + std::to_string(i));
        names.push_back("z_conf");
        break;
    case MetaVariant::Shap:
        for (int i = 0; i < d; ++i) names.push_back("phi_" + std::to_string(i));
        break;
    case MetaVariant::Ig:
        for (int i = 0; i < k; ++i) names.push_back("p_sorted_" + std::to_string(i));
        for (int i = 0; i < d; ++i) names.push_back("ig_" + std::to_string(i));
        break;
    }
    return names;
}

MetaDataset build_meta_dataset(const TreeEnsemble& model, const Dataset& data,
                               const MetaOptions& opts) {
    if (data.rows() == 0) throw DataError("build_meta_dataset: empty dataset");
    if (!(opts.ratio > 0.0)) throw DataError("build_meta_dataset: ratio must be positive");

    std::vector<int> pred(static_cast<std::size_t>(data.rows()));
    std::vector<int> correct_rows, wrong_rows;
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        pred[static_cast<std::size_t>(i)] = model.predict_class(data.X.row(i));
        if (pred[static_cast<std::size_t>(i)] == data.y[static_cast<std::size_t>(i)])
            correct_rows.push_back(static_cast<int>(i));
        else
            wrong_rows.push_back(static_cast<int>(i));
    }
    if (wrong_rows.empty())
        throw DataError("build_meta_dataset: the base model makes no errors here; "
                        "a correctness metamodel cannot be trained");

    const auto target = static_cast<std::size_t>(
        std::llround(opts.ratio * static_cast<double>(wrong_rows.size())));
    if (correct_rows.size() > target) {
        std::mt19937_64 rng(opts.seed);
        std::vector<int> pool(correct_rows);
        for (std::size_t k = 0; k < target; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
            std::swap(pool[k], pool[pick(rng)]);
        }
        pool.resize(target);
        std::sort(pool.begin(), pool.end());
        correct_rows = std::move(pool);
    }

    std::vector<int> kept;
    kept.reserve(correct_rows.size() + wrong_rows.size());
    std::merge(correct_rows.begin(), correct_rows.end(), wrong_rows.begin(), wrong_rows.end(),
               std::back_inserter(kept));

    Dataset sub = take_rows(data, kept);

    MetaDataset md;
    md.variant = opts.variant;
    md.source_rows = kept;
    switch (opts.variant) {
    case MetaVariant::Prob:
        md.X_meta = prob_augment(model, sub.X);
        break;
    case MetaVariant::Shap:
        if (opts.background.rows() == 0)
            throw DataError("build_meta_dataset: shap variant needs a background set");
        md.X_meta = shap_augment(model, sub.X, opts.background);
        break;
    case MetaVariant::Ig:
        md.X_meta = ig_augment(model, sub.X);
        break;
    }
    md.column_names = augmented_column_names(opts.variant, static_cast<int>(data.cols()),
                                             model.class_count);
    for (int row : kept) {
        md.pred_class.push_back(pred[static_cast<std::size_t>(row)]);
        md.y_meta.push_back(pred[static_cast<std::size_t>(row)] !=
                                    data.y[static_cast<std::size_t>(row)]
                                ? 1
                                : 0);
    }
    return md;
}

TreeEnsemble train_metamodel(const MetaDataset& md, const BoostParams& params) {
    Dataset d;
    d.X = md.X_meta;
    d.y = md.y_meta;
    d.labels.intern("correct");
    d.labels.intern("misclassified");
    return train_gbdt(d, params); // rejects a single-class meta dataset
}

double metamodel_certainty(const TreeEnsemble& meta, const Eigen::RowVectorXd& meta_row) {
    return meta.predict_proba(meta_row)[0];
}

UqMethod parse_uq_method(const std::string& name) {
    if (name == "confidence") return UqMethod::Confidence;
    if (name == "entropy") return UqMethod::Entropy;
    if (name == "meta_prob") return UqMethod::MetaProb;
    if (name == "meta_shap") return UqMethod::MetaShap;
    if (name == "meta_ig") return UqMethod::MetaIg;
    throw DataError("unknown uq method '" + name + "'");
}

const char* uq_method_name(UqMethod m) {
    switch (m) {
    case UqMethod::Confidence: return "confidence";
    case UqMethod::Entropy: return "entropy";
    case UqMethod::MetaProb: return "meta_prob";
    case UqMethod::MetaShap: return "meta_shap";
    case UqMethod::MetaIg: return "meta_ig";
    }
    return "?";
}

std::vector<double> score_with(UqMethod method, const TreeEnsemble& base, const Eigen::MatrixXd& X,
                               const TreeEnsemble* metamodel, const Eigen::MatrixXd* background) {
    std::vector<double> scores;
    scores.reserve(static_cast<std::size_t>(X.rows()));

    switch (method) {
    case UqMethod::Confidence:
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            scores.push_back(1.0 - confidence_score(base.predict_proba(X.row(i))));
        return scores;
    case UqMethod::Entropy:
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            scores.push_back(entropy_score(base.predict_proba(X.row(i))));
        return scores;
    default:
        break;
    }

    if (metamodel == nullptr) throw DataError("score_with: metamodel variant needs a metamodel");
    Eigen::MatrixXd rows;
    if (method == UqMethod::MetaProb) {
        rows = prob_augment(base, X);
    } else if (method == UqMethod::MetaIg) {
        rows = ig_augment(base, X);
    } else {
        if (background == nullptr || background->rows() == 0)
            throw DataError("score_with: shap variant needs a background set");
        rows = shap_augment(base, X, *background);
    }
    if (rows.cols() != metamodel->feature_count)
        throw ShapeError("score_with: metamodel was trained on a different layout");
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
        scores.push_back(1.0 - metamodel_certainty(*metamodel, rows.row(i)));
    return scores;
}

void write_augmented_csv(std::ostream& out, const MetaDataset& md) {
    for (const auto& name : md.column_names) out << name << ',';
    out << "y_meta\n";
    for (Eigen::Index i = 0; i < md.X_meta.rows(); ++i) {
        for (Eigen::Index c = 0; c < md.X_meta.cols(); ++c) out << md.X_meta(i, c) << ',';
        out << md.y_meta[static_cast<std::size_t>(i)] << '\n';
    }
}

} // namespace odxu
