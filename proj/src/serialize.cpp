#include "odxu/serialize.hpp"

#include <fstream>

#include "wire.hpp"

namespace odxu {

namespace {

using namespace wire;

constexpr char kNetMagic[8] = "ODXUNN1";
constexpr char kDecMagic[8] = "ODXUDC1";
constexpr char kGbdtMagic[8] = "ODXUGB1";

constexpr std::uint8_t kSubtypePlain = 0;
constexpr std::uint8_t kSubtypeAutoencoder = 1;
constexpr std::uint8_t kSubtypeFcnn = 2;

void put_network_blob(std::ostream& out, const Network& net) {
    put_u32(out, static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& layer : net.layers) {
        put_u32(out, static_cast<std::uint32_t>(layer.weights.cols()));
        put_u32(out, static_cast<std::uint32_t>(layer.weights.rows()));
        put_u8(out, static_cast<std::uint8_t>(layer.activation));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) put_f64(out, layer.weights(r, c));
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) put_f64(out, layer.bias[r]);
    }
}

Network get_network_blob(std::istream& in) {
    Network net;
    const std::uint32_t layers = get_u32(in);
    if (layers == 0 || layers > 64) throw FormatError("network blob: implausible layer count");
    for (std::uint32_t l = 0; l < layers; ++l) {
        const std::uint32_t in_size = get_u32(in);
        const std::uint32_t out_size = get_u32(in);
        if (in_size == 0 || out_size == 0 || in_size > 1000000 || out_size > 1000000)
            throw FormatError("network blob: implausible layer shape");
        const std::uint8_t act = get_u8(in);
        if (act > 2) throw FormatError("network blob: unknown activation code");
        DenseLayer layer;
        layer.activation = static_cast<Activation>(act);
        layer.weights.resize(out_size, in_size);
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = get_f64(in);
        layer.bias.resize(out_size);
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = get_f64(in);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

std::uint8_t expect_net_subtype(std::istream& in, std::uint8_t want, const char* what) {
    expect_magic(in, kNetMagic, "ODXUNN1");
    const std::uint8_t subtype = get_u8(in);
    if (subtype != want)
        throw FormatError(std::string("model container: this ODXUNN1 file is not a ") + what);
    return subtype;
}

} // namespace

void save_network(std::ostream& out, const Network& net) {
    put_magic(out, kNetMagic);
    put_u8(out, kSubtypePlain);
    put_network_blob(out, net);
}

Network load_network(std::istream& in) {
    expect_net_subtype(in, kSubtypePlain, "plain network");
    return get_network_blob(in);
}

void save_autoencoder(std::ostream& out, const Autoencoder& ae) {
    put_magic(out, kNetMagic);
    put_u8(out, kSubtypeAutoencoder);
    put_f64(out, ae.corruption_rate);
    put_network_blob(out, ae.encoder);
    put_network_blob(out, ae.decoder);
}

Autoencoder load_autoencoder(std::istream& in) {
    expect_net_subtype(in, kSubtypeAutoencoder, "autoencoder");
    Autoencoder ae;
    ae.corruption_rate = get_f64(in);
    ae.encoder = get_network_blob(in);
    ae.decoder = get_network_blob(in);
    return ae;
}

void save_fcnn(std::ostream& out, const FcnnClassifier& clf) {
    put_magic(out, kNetMagic);
    put_u8(out, kSubtypeFcnn);
    put_u32(out, static_cast<std::uint32_t>(clf.class_count));
    put_network_blob(out, clf.net);
}

FcnnClassifier load_fcnn(std::istream& in) {
    expect_net_subtype(in, kSubtypeFcnn, "fcnn classifier");
    FcnnClassifier clf;
    clf.class_count = static_cast<int>(get_u32(in));
    clf.net = get_network_blob(in);
    if (clf.net.output_size() != clf.class_count)
        throw FormatError("fcnn container: class count does not match the final layer");
    return clf;
}

void save_dec_model(std::ostream& out, const DecModel& model) {
    put_magic(out, kDecMagic);
    put_u32(out, static_cast<std::uint32_t>(model.class_count));
    put_u32(out, static_cast<std::uint32_t>(model.centroids.count()));
    put_u32(out, static_cast<std::uint32_t>(model.centroids.dim()));
    for (Eigen::Index r = 0; r < model.centroids.count(); ++r)
        for (Eigen::Index c = 0; c < model.centroids.dim(); ++c)
            put_f64(out, model.centroids.u(r, c));
    put_network_blob(out, model.encoder);
}

DecModel load_dec_model(std::istream& in) {
    expect_magic(in, kDecMagic, "ODXUDC1");
    DecModel model;
    model.class_count = static_cast<int>(get_u32(in));
    const std::uint32_t n_c = get_u32(in);
    const std::uint32_t dim = get_u32(in);
    if (n_c == 0 || n_c > 65536 || dim == 0 || dim > 65536)
        throw FormatError("dec container: implausible centroid shape");
    model.centroids.u.resize(n_c, dim);
    for (Eigen::Index r = 0; r < model.centroids.count(); ++r)
        for (Eigen::Index c = 0; c < model.centroids.dim(); ++c)
            model.centroids.u(r, c) = get_f64(in);
    model.encoder = get_network_blob(in);
    if (model.encoder.output_size() != model.centroids.dim())
        throw FormatError("dec container: encoder output does not match centroid dimension");
    return model;
}

void save_ensemble(std::ostream& out, const TreeEnsemble& model) {
    put_magic(out, kGbdtMagic);
    put_f64(out, model.params.lambda);
    put_f64(out, model.params.gamma);
    put_f64(out, model.params.learning_rate);
    put_u32(out, static_cast<std::uint32_t>(model.params.max_depth));
    put_u32(out, static_cast<std::uint32_t>(model.params.rounds));
    put_f64(out, model.params.min_child_hessian);
    put_u64(out, model.params.seed);

    put_u32(out, static_cast<std::uint32_t>(model.class_count));
    put_u32(out, static_cast<std::uint32_t>(model.feature_count));
    put_f64(out, model.base_score);
    put_u32(out, static_cast<std::uint32_t>(model.trees.size()));
    for (const auto& [cls, tree] : model.trees) {
        put_u32(out, static_cast<std::uint32_t>(cls));
        put_f64(out, tree.shrinkage);
        put_u32(out, static_cast<std::uint32_t>(tree.nodes.size()));
        for (const auto& n : tree.nodes) {
            put_u8(out, n.leaf ? 1 : 0);
            put_i32(out, n.feature);
            put_f64(out, n.threshold);
            put_f64(out, n.gain);
            put_i32(out, n.left);
            put_i32(out, n.right);
            put_f64(out, n.weight);
            put_f64(out, n.g_sum);
            put_f64(out, n.h_sum);
        }
    }
}

TreeEnsemble load_ensemble(std::istream& in) {
    expect_magic(in, kGbdtMagic, "ODXUGB1");
    TreeEnsemble model;
    model.params.lambda = get_f64(in);
    model.params.gamma = get_f64(in);
    model.params.learning_rate = get_f64(in);
    model.params.max_depth = static_cast<int>(get_u32(in));
    model.params.rounds = static_cast<int>(get_u32(in));
    model.params.min_child_hessian = get_f64(in);
    model.params.seed = get_u64(in);

    model.class_count = static_cast<int>(get_u32(in));
    model.feature_count = static_cast<int>(get_u32(in));
    model.base_score = get_f64(in);
    const std::uint32_t n_trees = get_u32(in);
    if (n_trees > 10000000) throw FormatError("gbdt container: implausible tree count");
    for (std::uint32_t t = 0; t < n_trees; ++t) {
        const int cls = static_cast<int>(get_u32(in));
        if (cls < 0 || cls >= model.class_count)
            throw FormatError("gbdt container: tree class index out of range");
        Tree tree;
        tree.shrinkage = get_f64(in);
        const std::uint32_t n_nodes = get_u32(in);
        if (n_nodes == 0 || n_nodes > 100000000)
            throw FormatError("gbdt container: implausible node count");
        tree.nodes.resize(n_nodes);
        for (auto& n : tree.nodes) {
            n.leaf = get_u8(in) != 0;
            n.feature = get_i32(in);
            n.threshold = get_f64(in);
            n.gain = get_f64(in);
            n.left = get_i32(in);
            n.right = get_i32(in);
            n.weight = get_f64(in);
            n.g_sum = get_f64(in);
            n.h_sum = get_f64(in);
            if (!n.leaf) {
                const auto count = static_cast<int>(n_nodes);
                if (n.left < 0 || n.left >= count || n.right < 0 || n.right >= count)
                    throw FormatError("gbdt container: child index out of range");
                if (n.feature < 0 || n.feature >= model.feature_count)
                    throw FormatError("gbdt container: split feature out of range");
            }
        }
        model.trees.emplace_back(cls, std::move(tree));
    }
    return model;
}

const char* model_kind_name(ModelKind k) {
    switch (k) {
    case ModelKind::PlainNetwork: return "network";
    case ModelKind::Autoencoder: return "autoencoder";
    case ModelKind::Fcnn: return "fcnn";
    case ModelKind::Dec: return "dec";
    case ModelKind::Gbdt: return "gbdt";
    }
    return "?";
}

ModelKind peek_model_kind(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file '" + path + "'");
    char magic[7];
    in.read(magic, 7);
    if (in.gcount() != 7) throw FormatError("model file '" + path + "' is too short");
    const std::string m(magic, 7);
    if (m == "ODXUDC1") return ModelKind::Dec;
    if (m == "ODXUGB1") return ModelKind::Gbdt;
    if (m == "ODXUNN1") {
        const int subtype = in.get();
        if (subtype == kSubtypePlain) return ModelKind::PlainNetwork;
        if (subtype == kSubtypeAutoencoder) return ModelKind::Autoencoder;
        if (subtype == kSubtypeFcnn) return ModelKind::Fcnn;
        throw FormatError("model file '" + path + "' has an unknown ODXUNN1 subtype");
    }
    throw FormatError("model file '" + path + "' has an unrecognized magic '" + m + "'");
}

namespace {

template <typename Saver, typename Model>
void save_to_path(const std::string& path, const Model& model, Saver saver) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write model file '" + path + "'");
    saver(out, model);
    out.flush();
    if (!out) throw IoError("short write to model file '" + path + "'");
}

template <typename Loader>
auto load_from_path(const std::string& path, Loader loader) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file '" + path + "'");
    return loader(in);
}

} // namespace

void save_autoencoder_file(const std::string& path, const Autoencoder& ae) {
    save_to_path(path, ae, [](std::ostream& o, const Autoencoder& m) { save_autoencoder(o, m); });
}
Autoencoder load_autoencoder_file(const std::string& path) {
    return load_from_path(path, [](std::istream& i) { return load_autoencoder(i); });
}
void save_fcnn_file(const std::string& path, const FcnnClassifier& clf) {
    save_to_path(path, clf, [](std::ostream& o, const FcnnClassifier& m) { save_fcnn(o, m); });
}
FcnnClassifier load_fcnn_file(const std::string& path) {
    return load_from_path(path, [](std::istream& i) { return load_fcnn(i); });
}
void save_dec_model_file(const std::string& path, const DecModel& model) {
    save_to_path(path, model, [](std::ostream& o, const DecModel& m) { save_dec_model(o, m); });
}
DecModel load_dec_model_file(const std::string& path) {
    return load_from_path(path, [](std::istream& i) { return load_dec_model(i); });
}
void save_ensemble_file(const std::string& path, const TreeEnsemble& model) {
    save_to_path(path, model, [](std::ostream& o, const TreeEnsemble& m) { save_ensemble(o, m); });
}
TreeEnsemble load_ensemble_file(const std::string& path) {
    return load_from_path(path, [](std::istream& i) { return load_ensemble(i); });
}

} // namespace odxu
