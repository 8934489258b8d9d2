#include "odxu/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace odxu {

namespace {

void apply_activation(Activation act, Eigen::MatrixXd& z) {
    switch (act) {
    case Activation::Relu:
        z = z.cwiseMax(0.0);
        break;
    case Activation::Linear:
        break;
    case Activation::Softmax:
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
            auto col = z.col(c);
            const double m = col.maxCoeff();
            col = (col.array() - m).exp();
            col /= col.sum();
        }
        break;
    }
}

} // namespace

Network make_network(Eigen::Index input, const std::vector<Eigen::Index>& sizes,
                     const std::vector<Activation>& acts, std::mt19937_64& rng) {
    if (sizes.empty() || sizes.size() != acts.size())
        throw ShapeError("make_network: sizes and activations must align and be nonempty");
    Network net;
    Eigen::Index in = input;
    for (std::size_t l = 0; l < sizes.size(); ++l) {
        if (acts[l] == Activation::Softmax && l + 1 != sizes.size())
            throw ShapeError("make_network: softmax is only valid on the final layer");
        DenseLayer layer;
        const Eigen::Index out = sizes[l];
        const double a = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> unif(-a, a);
        layer.weights.resize(out, in);
        for (Eigen::Index i = 0; i < out; ++i)
            for (Eigen::Index j = 0; j < in; ++j) layer.weights(i, j) = unif(rng);
        layer.bias = Eigen::VectorXd::Zero(out);
        layer.activation = acts[l];
        net.layers.push_back(std::move(layer));
        in = out;
    }
    return net;
}

Eigen::MatrixXd forward_batch(const Network& net, const Eigen::MatrixXd& X) {
    if (X.rows() != net.input_size())
        throw ShapeError("forward: input has " + std::to_string(X.rows()) +
                         " rows, network expects " + std::to_string(net.input_size()));
    Eigen::MatrixXd a = X;
    for (const auto& layer : net.layers) {
        Eigen::MatrixXd z = layer.weights * a;
        z.colwise() += layer.bias;
        apply_activation(layer.activation, z);
        a = std::move(z);
    }
    return a;
}

Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& x) {
    return forward_batch(net, x);
}

double mse_loss(const Eigen::VectorXd& xhat, const Eigen::VectorXd& x) {
    if (xhat.size() != x.size()) throw ShapeError("mse_loss: length mismatch");
    return (xhat - x).squaredNorm() / static_cast<double>(x.size());
}

ForwardTrace forward_trace(const Network& net, const Eigen::MatrixXd& X) {
    if (X.rows() != net.input_size()) throw ShapeError("forward_trace: input row mismatch");
    ForwardTrace t;
    Eigen::MatrixXd a = X;
    for (const auto& layer : net.layers) {
        t.inputs.push_back(a);
        Eigen::MatrixXd z = layer.weights * a;
        z.colwise() += layer.bias;
        t.preacts.push_back(z);
        apply_activation(layer.activation, z);
        a = std::move(z);
    }
    t.output = std::move(a);
    return t;
}

Gradients zero_gradients(const Network& net) {
    Gradients g;
    for (const auto& layer : net.layers) {
        g.dw.emplace_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
        g.db.emplace_back(Eigen::VectorXd::Zero(layer.bias.size()));
    }
    return g;
}

Eigen::MatrixXd backward(const Network& net, const ForwardTrace& trace, const Eigen::MatrixXd& dout,
                         Gradients& grads) {
    Eigen::MatrixXd delta = dout; // dL/d(activation)
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const auto& layer = net.layers[l];
        Eigen::MatrixXd dz;
        switch (layer.activation) {
        case Activation::Relu:
            dz = (trace.preacts[l].array() > 0.0).select(delta, 0.0);
            break;
        case Activation::Linear:
            dz = delta;
            break;
        case Activation::Softmax: {
            // dz = p .* (delta - sum(delta .* p)) column-wise
            Eigen::MatrixXd p = trace.preacts[l];
            apply_activation(Activation::Softmax, p);
            dz.resize(delta.rows(), delta.cols());
            for (Eigen::Index c = 0; c < delta.cols(); ++c) {
                const double dot = delta.col(c).dot(p.col(c));
                dz.col(c) = p.col(c).cwiseProduct((delta.col(c).array() - dot).matrix());
            }
            break;
        }
        }
        grads.dw[l] += dz * trace.inputs[l].transpose();
        grads.db[l] += dz.rowwise().sum();
        delta = layer.weights.transpose() * dz; // dL/d(input) once l reaches 0
    }
    return delta;
}

Optimizer::Optimizer(const OptimizerConfig& cfg, double learning_rate)
    : cfg_(cfg), lr_(learning_rate) {
    if (!(lr_ > 0)) throw DataError("optimizer: learning rate must be positive");
}

void Optimizer::ensure_slot(std::size_t slot, Eigen::Index rows, Eigen::Index cols) {
    if (m_.size() <= slot) {
        m_.resize(slot + 1);
        v_.resize(slot + 1);
    }
    if (m_[slot].size() == 0) {
        m_[slot] = Eigen::MatrixXd::Zero(rows, cols);
        v_[slot] = Eigen::MatrixXd::Zero(rows, cols);
    }
}

void Optimizer::apply(std::size_t slot, Eigen::Ref<Eigen::MatrixXd> param,
                      const Eigen::MatrixXd& grad) {
    if (cfg_.kind == OptimizerConfig::Kind::Sgd) {
        param -= lr_ * grad;
        return;
    }
    ensure_slot(slot, param.rows(), param.cols());
    auto& m = m_[slot];
    auto& v = v_[slot];
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
    const double bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    param -= (lr_ / bias1) *
             (m.array() / ((v.array() / bias2).sqrt() + cfg_.eps)).matrix();
}

void Optimizer::apply_vec(std::size_t slot, Eigen::Ref<Eigen::VectorXd> param,
                          const Eigen::VectorXd& grad) {
    if (cfg_.kind == OptimizerConfig::Kind::Sgd) {
        param -= lr_ * grad;
        return;
    }
    ensure_slot(slot, param.rows(), 1);
    auto& m = m_[slot];
    auto& v = v_[slot];
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad).eval();
    const double bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    param -= (lr_ / bias1) *
             (m.col(0).array() / ((v.col(0).array() / bias2).sqrt() + cfg_.eps)).matrix();
}

Autoencoder make_autoencoder(const AutoencoderSpec& spec, std::mt19937_64& rng) {
    if (spec.latent_dim < 1 || spec.input_dim < 1)
        throw ShapeError("autoencoder: dimensions must be positive");
    if (spec.corruption_rate < 0.0 || spec.corruption_rate >= 1.0)
        throw DataError("autoencoder: corruption rate must lie in [0, 1)");

    std::vector<Eigen::Index> enc_sizes(spec.hidden);
    enc_sizes.push_back(spec.latent_dim);
    std::vector<Activation> enc_acts(spec.hidden.size(), Activation::Relu);
    enc_acts.push_back(Activation::Linear);

    std::vector<Eigen::Index> dec_sizes(spec.hidden.rbegin(), spec.hidden.rend());
    dec_sizes.push_back(spec.input_dim);
    std::vector<Activation> dec_acts(spec.hidden.size(), Activation::Relu);
    dec_acts.push_back(Activation::Linear);

    Autoencoder ae;
    ae.encoder = make_network(spec.input_dim, enc_sizes, enc_acts, rng);
    ae.decoder = make_network(spec.latent_dim, dec_sizes, dec_acts, rng);
    ae.corruption_rate = spec.corruption_rate;
    return ae;
}

void corrupt_inplace(Eigen::MatrixXd& batch, double rate, std::mt19937_64& rng) {
    if (rate <= 0.0) return;
    std::bernoulli_distribution drop(rate);
    for (Eigen::Index c = 0; c < batch.cols(); ++c)
        for (Eigen::Index r = 0; r < batch.rows(); ++r)
            if (drop(rng)) batch(r, c) = 0.0;
}

namespace {

// Shared 75/25 split: returns (train, valid) index lists. A one-sample corpus
// keeps everything in train.
std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>>
train_valid_split(Eigen::Index n, std::mt19937_64& rng) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    Eigen::Index n_valid = n / 4;
    if (n_valid == 0 && n >= 2) n_valid = 1;
    std::vector<Eigen::Index> valid(idx.begin(), idx.begin() + n_valid);
    std::vector<Eigen::Index> train(idx.begin() + n_valid, idx.end());
    return {train, valid};
}

Eigen::MatrixXd gather_cols(const Eigen::MatrixXd& cols, const std::vector<Eigen::Index>& idx,
                            std::size_t offset, std::size_t count) {
    Eigen::MatrixXd out(cols.rows(), static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i)
        out.col(static_cast<Eigen::Index>(i)) = cols.col(idx[offset + i]);
    return out;
}

} // namespace

EpochLossTrace train_autoencoder(Autoencoder& ae, const Eigen::MatrixXd& X, const TrainConfig& cfg,
                                 const EarlyStop& stop) {
    if (X.rows() == 0) throw DataError("train_autoencoder: empty dataset");
    if (cfg.batch_size < 1) throw DataError("train_autoencoder: batch_size must be >= 1");
    if (X.cols() != ae.encoder.input_size())
        throw ShapeError("train_autoencoder: feature width mismatch");

    const Eigen::MatrixXd cols = X.transpose(); // samples become columns
    std::mt19937_64 rng(cfg.seed);
    auto [train_idx, valid_idx] = train_valid_split(cols.cols(), rng);

    const Eigen::MatrixXd valid_cols =
        valid_idx.empty() ? Eigen::MatrixXd()
                          : gather_cols(cols, valid_idx, 0, valid_idx.size());

    Optimizer opt(cfg.optimizer, cfg.learning_rate);
    EarlyStopMonitor monitor(stop);
    EpochLossTrace trace;

    const std::size_t enc_layers = ae.encoder.layers.size();
    const std::size_t dec_layers = ae.decoder.layers.size();

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        double loss_sum = 0.0;

        for (std::size_t start = 0; start < train_idx.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t m =
                std::min<std::size_t>(cfg.batch_size, train_idx.size() - start);
            Eigen::MatrixXd clean = gather_cols(cols, train_idx, start, m);
            Eigen::MatrixXd corrupted = clean;
            corrupt_inplace(corrupted, ae.corruption_rate, rng);

            auto enc_trace = forward_trace(ae.encoder, corrupted);
            auto dec_trace = forward_trace(ae.decoder, enc_trace.output);

            const Eigen::MatrixXd resid = dec_trace.output - clean;
            const double denom = static_cast<double>(resid.size());
            loss_sum += resid.squaredNorm() / denom * static_cast<double>(m);

            Gradients enc_g = zero_gradients(ae.encoder);
            Gradients dec_g = zero_gradients(ae.decoder);
            const Eigen::MatrixXd dlatent =
                backward(ae.decoder, dec_trace, (2.0 / denom) * resid, dec_g);
            backward(ae.encoder, enc_trace, dlatent, enc_g);

            opt.begin_step();
            for (std::size_t l = 0; l < enc_layers; ++l) {
                opt.apply(2 * l, ae.encoder.layers[l].weights, enc_g.dw[l]);
                opt.apply_vec(2 * l + 1, ae.encoder.layers[l].bias, enc_g.db[l]);
            }
            for (std::size_t l = 0; l < dec_layers; ++l) {
                opt.apply(2 * (enc_layers + l), ae.decoder.layers[l].weights, dec_g.dw[l]);
                opt.apply_vec(2 * (enc_layers + l) + 1, ae.decoder.layers[l].bias, dec_g.db[l]);
            }
        }

        const double train_loss = loss_sum / static_cast<double>(train_idx.size());
        double valid_loss = train_loss;
        if (valid_cols.cols() > 0) {
            const Eigen::MatrixXd recon = forward_batch(ae.decoder, forward_batch(ae.encoder, valid_cols));
            valid_loss = (recon - valid_cols).squaredNorm() / static_cast<double>(valid_cols.size());
        }
        trace.train.push_back(train_loss);
        trace.valid.push_back(valid_loss);
        if (monitor.observe(valid_loss)) break;
    }
    return trace;
}

Eigen::VectorXd encode(const Autoencoder& ae, const Eigen::VectorXd& x) {
    return forward(ae.encoder, x);
}

Eigen::MatrixXd encode_batch(const Network& encoder, const Eigen::MatrixXd& X) {
    return forward_batch(encoder, X.transpose()).transpose();
}

Eigen::VectorXd FcnnClassifier::predict_proba(const Eigen::VectorXd& x) const {
    return forward(net, x);
}

Eigen::MatrixXd FcnnClassifier::predict_proba_batch(const Eigen::MatrixXd& X) const {
    return forward_batch(net, X.transpose()).transpose();
}

FcnnClassifier train_fcnn(const Dataset& data, const std::vector<Eigen::Index>& layer_sizes,
                          const TrainConfig& cfg, EpochLossTrace* trace) {
    if (data.rows() == 0) throw DataError("train_fcnn: empty dataset");
    if (layer_sizes.empty()) throw ShapeError("train_fcnn: need at least one layer");
    const auto classes = static_cast<int>(layer_sizes.back());
    for (int label : data.y)
        if (label < 0 || label >= classes)
            throw DataError("train_fcnn: label " + std::to_string(label) +
                            " outside [0, " + std::to_string(classes) + ")");

    std::mt19937_64 rng(cfg.seed);
    std::vector<Activation> acts(layer_sizes.size() - 1, Activation::Relu);
    acts.push_back(Activation::Softmax);

    FcnnClassifier clf;
    clf.class_count = classes;
    clf.net = make_network(data.cols(), layer_sizes, acts, rng);

    const Eigen::MatrixXd cols = data.X.transpose();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(cols.cols()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});

    Optimizer opt(cfg.optimizer, cfg.learning_rate);
    constexpr double kEps = 1e-12;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(idx.begin(), idx.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < idx.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t m = std::min<std::size_t>(cfg.batch_size, idx.size() - start);
            Eigen::MatrixXd batch = gather_cols(cols, idx, start, m);
            auto ft = forward_trace(clf.net, batch);

            Eigen::MatrixXd dout = Eigen::MatrixXd::Zero(classes, static_cast<Eigen::Index>(m));
            double batch_loss = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const int label = data.y[static_cast<std::size_t>(idx[start + i])];
                const double p = ft.output(label, static_cast<Eigen::Index>(i));
                batch_loss -= std::log(p + kEps);
                dout(label, static_cast<Eigen::Index>(i)) =
                    -1.0 / ((p + kEps) * static_cast<double>(m));
            }
            loss_sum += batch_loss;

            Gradients g = zero_gradients(clf.net);
            backward(clf.net, ft, dout, g);
            opt.begin_step();
            for (std::size_t l = 0; l < clf.net.layers.size(); ++l) {
                opt.apply(2 * l, clf.net.layers[l].weights, g.dw[l]);
                opt.apply_vec(2 * l + 1, clf.net.layers[l].bias, g.db[l]);
            }
        }
        if (trace) {
            trace->train.push_back(loss_sum / static_cast<double>(idx.size()));
            trace->valid.push_back(trace->train.back());
        }
    }
    return clf;
}

} // namespace odxu
