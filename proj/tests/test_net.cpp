#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "odxu/net.hpp"

using namespace odxu;

namespace {

std::vector<double*> parameter_view(Network& net) {
    std::vector<double*> out;
    for (auto& layer : net.layers) {
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i)
            out.push_back(layer.weights.data() + i);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) out.push_back(layer.bias.data() + i);
    }
    return out;
}

std::vector<double> flatten_grads(const Gradients& g) {
    std::vector<double> out;
    for (std::size_t l = 0; l < g.dw.size(); ++l) {
        for (Eigen::Index i = 0; i < g.dw[l].size(); ++i) out.push_back(g.dw[l].data()[i]);
        for (Eigen::Index i = 0; i < g.db[l].size(); ++i) out.push_back(g.db[l][i]);
    }
    return out;
}

double relative_error(double a, double b) {
    return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-6);
}

constexpr double kCeEps = 1e-12;

// Scalar losses used by the finite-difference probes.
double mse_of(const Network& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& T) {
    const Eigen::MatrixXd out = forward_batch(net, X);
    return (out - T).squaredNorm() / static_cast<double>(out.size());
}

double ce_of(const Network& net, const Eigen::MatrixXd& X, const std::vector<int>& y) {
    const Eigen::MatrixXd out = forward_batch(net, X);
    double loss = 0.0;
    for (Eigen::Index c = 0; c < out.cols(); ++c)
        loss -= std::log(out(y[static_cast<std::size_t>(c)], c) + kCeEps);
    return loss / static_cast<double>(out.cols());
}

} // namespace

TEST_CASE("forward basics") {
    Network net;
    DenseLayer id;
    id.weights = Eigen::MatrixXd::Identity(2, 2);
    id.bias = Eigen::VectorXd::Zero(2);
    id.activation = Activation::Linear;
    net.layers.push_back(id);

    Eigen::VectorXd x(2);
    x << 1, 2;
    CHECK(forward(net, x) == x);

    net.layers[0].activation = Activation::Relu;
    x << -1, 3;
    Eigen::VectorXd r = forward(net, x);
    CHECK(r[0] == 0.0);
    CHECK(r[1] == 3.0);

    net.layers[0].activation = Activation::Softmax;
    x << 0, 0;
    Eigen::VectorXd s = forward(net, x);
    CHECK(s[0] == doctest::Approx(0.5));
    CHECK(s[1] == doctest::Approx(0.5));

    Eigen::VectorXd wrong(3);
    wrong.setZero();
    CHECK_THROWS_AS(forward(net, wrong), ShapeError);
}

TEST_CASE("mse examples") {
    Eigen::VectorXd a(2), b(2);
    a << 1, 1;
    b << 1, 1;
    CHECK(mse_loss(a, b) == 0.0);
    b << 0, 0;
    CHECK(mse_loss(b, a) == doctest::Approx(1.0));
    Eigen::VectorXd c(1), d(1);
    c << 0.5;
    d << 0.0;
    CHECK(mse_loss(c, d) == doctest::Approx(0.25));
    CHECK_THROWS_AS(mse_loss(a, c), ShapeError);
}

TEST_CASE("gradient check: every layer type, both losses") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const double step = 1e-5;

    struct Case {
        std::vector<Eigen::Index> sizes;
        std::vector<Activation> acts;
        bool cross_entropy;
    };
    // All parameter counts stay <= 20.
    const std::vector<Case> cases = {
        {{2}, {Activation::Linear}, false},                                   // 3->2 linear, mse
        {{2, 2}, {Activation::Relu, Activation::Linear}, false},              // relu stack, mse
        {{2, 2}, {Activation::Relu, Activation::Softmax}, true},              // softmax head, ce
        {{3}, {Activation::Softmax}, true},                                   // direct softmax, ce
    };

    for (const auto& tc : cases) {
        Network net = make_network(3, tc.sizes, tc.acts, rng);
        const Eigen::Index m = 4;
        Eigen::MatrixXd X(3, m);
        for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = unit(rng);

        Eigen::MatrixXd T(net.output_size(), m);
        std::vector<int> y;
        for (Eigen::Index i = 0; i < T.size(); ++i) T.data()[i] = unit(rng);
        for (Eigen::Index c = 0; c < m; ++c)
            y.push_back(static_cast<int>(c) % static_cast<int>(net.output_size()));

        // Analytic gradient.
        auto ft = forward_trace(net, X);
        Gradients g = zero_gradients(net);
        if (tc.cross_entropy) {
            Eigen::MatrixXd dout = Eigen::MatrixXd::Zero(net.output_size(), m);
            for (Eigen::Index c = 0; c < m; ++c) {
                const double p = ft.output(y[static_cast<std::size_t>(c)], c);
                dout(y[static_cast<std::size_t>(c)], c) =
                    -1.0 / ((p + kCeEps) * static_cast<double>(m));
            }
            backward(net, ft, dout, g);
        } else {
            backward(net, ft, (2.0 / static_cast<double>(ft.output.size())) * (ft.output - T), g);
        }
        const auto analytic = flatten_grads(g);

        // Central finite differences.
        auto params = parameter_view(net);
        REQUIRE(params.size() <= 20);
        REQUIRE(params.size() == analytic.size());
        for (std::size_t k = 0; k < params.size(); ++k) {
            const double saved = *params[k];
            *params[k] = saved + step;
            const double up = tc.cross_entropy ? ce_of(net, X, y) : mse_of(net, X, T);
            *params[k] = saved - step;
            const double down = tc.cross_entropy ? ce_of(net, X, y) : mse_of(net, X, T);
            *params[k] = saved;
            const double numeric = (up - down) / (2.0 * step);
            REQUIRE(relative_error(analytic[k], numeric) <= 1e-4);
        }
    }
}

TEST_CASE("softmax output is a probability row") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unit(-3.0, 3.0);
    Network net = make_network(5, {4, 3}, {Activation::Relu, Activation::Softmax}, rng);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd x(5);
        for (int i = 0; i < 5; ++i) x[i] = unit(rng);
        Eigen::VectorXd p = forward(net, x);
        CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
        for (int i = 0; i < 3; ++i) {
            CHECK(p[i] > 0.0);
            CHECK(p[i] < 1.0);
        }
    }
}

TEST_CASE("softmax only allowed on the final layer") {
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(make_network(3, {2, 2}, {Activation::Softmax, Activation::Linear}, rng),
                    ShapeError);
}

TEST_CASE("identity autoencoder reconstructs perfectly at epoch 0") {
    const Eigen::Index d = 6;
    Autoencoder ae;
    DenseLayer id;
    id.weights = Eigen::MatrixXd::Identity(d, d);
    id.bias = Eigen::VectorXd::Zero(d);
    id.activation = Activation::Linear;
    ae.encoder.layers = {id};
    ae.decoder.layers = {id};
    ae.corruption_rate = 0.0;

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd X(8, d);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = unit(rng);

    TrainConfig cfg;
    cfg.max_epochs = 1;
    cfg.seed = 5;
    auto trace = train_autoencoder(ae, X, cfg, EarlyStop{1, 1e-9});
    REQUIRE(trace.valid.size() == 1); // max_epochs bound respected
    CHECK(trace.valid[0] == 0.0);
}

TEST_CASE("denoising autoencoder improves on a two-cluster corpus") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> noise(0.0, 0.05);
    const Eigen::Index d = 12;
    Eigen::MatrixXd X(200, d);
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        const double base = r % 2 == 0 ? 0.2 : 0.8;
        for (Eigen::Index c = 0; c < d; ++c)
            X(r, c) = std::clamp(base + noise(rng), 0.0, 1.0);
    }

    AutoencoderSpec spec;
    spec.input_dim = d;
    spec.hidden = {8};
    spec.latent_dim = 2;
    spec.corruption_rate = 0.1;
    std::mt19937_64 init_rng(21);
    Autoencoder ae = make_autoencoder(spec, init_rng);

    TrainConfig cfg;
    cfg.learning_rate = 5e-3;
    cfg.batch_size = 16;
    cfg.max_epochs = 60;
    cfg.seed = 77;
    auto trace = train_autoencoder(ae, X, cfg, EarlyStop{10, 1e-6});
    REQUIRE(trace.valid.size() >= 2);
    CHECK(trace.valid.back() < trace.valid.front());

    CHECK_THROWS_AS(train_autoencoder(ae, Eigen::MatrixXd(), cfg, EarlyStop{}), DataError);
}

TEST_CASE("training is bitwise reproducible for a fixed seed") {
    std::mt19937_64 rng_a(9), rng_b(9);
    AutoencoderSpec spec;
    spec.input_dim = 10;
    spec.hidden = {6};
    spec.latent_dim = 3;
    Autoencoder a = make_autoencoder(spec, rng_a);
    Autoencoder b = make_autoencoder(spec, rng_b);

    Eigen::MatrixXd X(40, 10);
    std::mt19937_64 data_rng(13);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = unit(data_rng);

    TrainConfig cfg;
    cfg.max_epochs = 8;
    cfg.seed = 4242;
    train_autoencoder(a, X, cfg, EarlyStop{20, 1e-9});
    train_autoencoder(b, X, cfg, EarlyStop{20, 1e-9});

    for (std::size_t l = 0; l < a.encoder.layers.size(); ++l) {
        REQUIRE(a.encoder.layers[l].weights == b.encoder.layers[l].weights);
        REQUIRE(a.encoder.layers[l].bias == b.encoder.layers[l].bias);
    }
    for (std::size_t l = 0; l < a.decoder.layers.size(); ++l)
        REQUIRE(a.decoder.layers[l].weights == b.decoder.layers[l].weights);
}

TEST_CASE("encode: determinism, zero propagation, default latent width") {
    std::mt19937_64 rng(15);
    AutoencoderSpec spec; // default 1500 -> 512 -> 64 -> 12
    Autoencoder ae = make_autoencoder(spec, rng);

    Eigen::VectorXd zero = Eigen::VectorXd::Zero(1500);
    Eigen::VectorXd z = encode(ae, zero);
    CHECK(z.size() == 12);
    CHECK(z.cwiseAbs().maxCoeff() == 0.0); // zero bias init keeps zero input at zero

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::VectorXd x(1500);
    for (int i = 0; i < 1500; ++i) x[i] = unit(rng);
    CHECK(encode(ae, x) == encode(ae, x));
}

TEST_CASE("corruption leaves the expected fraction untouched") {
    std::mt19937_64 rng(31);
    const double rate = 0.1;
    const int draws = 10000;
    const Eigen::Index d = 20;
    long long untouched = 0;
    for (int i = 0; i < draws; ++i) {
        Eigen::MatrixXd v = Eigen::MatrixXd::Ones(d, 1);
        corrupt_inplace(v, rate, rng);
        untouched += (v.array() != 0.0).count();
    }
    const double n = static_cast<double>(draws) * static_cast<double>(d);
    const double expect = (1.0 - rate) * n;
    const double sigma = std::sqrt(n * rate * (1.0 - rate));
    CHECK(std::abs(static_cast<double>(untouched) - expect) <= 3.0 * sigma);
}

TEST_CASE("fcnn learns separable blobs") {
    std::mt19937_64 rng(55);
    std::normal_distribution<double> noise(0.0, 0.08);
    Dataset data;
    data.X.resize(100, 4);
    data.labels.intern("a");
    data.labels.intern("b");
    for (int r = 0; r < 100; ++r) {
        const int cls = r % 2;
        for (int c = 0; c < 4; ++c) data.X(r, c) = (cls ? 0.75 : 0.25) + noise(rng);
        data.y.push_back(cls);
    }

    TrainConfig cfg;
    cfg.learning_rate = 5e-3;
    cfg.max_epochs = 60;
    cfg.batch_size = 16;
    cfg.seed = 8;
    auto clf = train_fcnn(data, {8, 2}, cfg);

    const Eigen::MatrixXd proba = clf.predict_proba_batch(data.X);
    int hits = 0;
    for (int r = 0; r < 100; ++r) {
        Eigen::Index arg;
        proba.row(r).maxCoeff(&arg);
        hits += static_cast<int>(arg) == data.y[static_cast<std::size_t>(r)];
        CHECK(std::abs(proba.row(r).sum() - 1.0) <= 1e-9);
    }
    CHECK(hits >= 95);
}

TEST_CASE("fcnn on single-class data predicts that class everywhere") {
    Dataset data;
    data.X = Eigen::MatrixXd::Random(30, 3);
    data.labels.intern("only");
    data.labels.intern("other");
    data.y.assign(30, 1);

    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.max_epochs = 40;
    cfg.seed = 2;
    auto clf = train_fcnn(data, {4, 2}, cfg);
    const Eigen::MatrixXd proba = clf.predict_proba_batch(data.X);
    for (int r = 0; r < 30; ++r) {
        Eigen::Index arg;
        proba.row(r).maxCoeff(&arg);
        REQUIRE(arg == 1);
    }

    data.y[0] = 5;
    CHECK_THROWS_AS(train_fcnn(data, {4, 2}, cfg), DataError);
}
