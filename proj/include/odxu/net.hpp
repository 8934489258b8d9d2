#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <vector>

#include "odxu/dataset.hpp"
#include "odxu/stopping.hpp"

namespace odxu {

enum class Activation : std::uint8_t { Relu = 0, Linear = 1, Softmax = 2 };

struct DenseLayer {
    Eigen::MatrixXd weights; // out x in
    Eigen::VectorXd bias;    // out
    Activation activation = Activation::Linear;
};

// Sequential dense stack. Batches are column-major: one sample per column.
struct Network {
    std::vector<DenseLayer> layers;

    Eigen::Index input_size() const { return layers.front().weights.cols(); }
    Eigen::Index output_size() const { return layers.back().weights.rows(); }
};

// Uniform(-a, a) init with a = sqrt(6 / (fan_in + fan_out)). Softmax is only
// accepted on the final layer.
Network make_network(Eigen::Index input, const std::vector<Eigen::Index>& sizes,
                     const std::vector<Activation>& acts, std::mt19937_64& rng);

Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& x);
Eigen::MatrixXd forward_batch(const Network& net, const Eigen::MatrixXd& X);

double mse_loss(const Eigen::VectorXd& xhat, const Eigen::VectorXd& x);

// Per-layer caches needed by the backward pass.
struct ForwardTrace {
    std::vector<Eigen::MatrixXd> inputs;  // input to layer l
    std::vector<Eigen::MatrixXd> preacts; // W*input + b at layer l
    Eigen::MatrixXd output;
};

ForwardTrace forward_trace(const Network& net, const Eigen::MatrixXd& X);

struct Gradients {
    std::vector<Eigen::MatrixXd> dw;
    std::vector<Eigen::VectorXd> db;
};

Gradients zero_gradients(const Network& net);

// dout is dLoss/d(output); returns dLoss/d(input) and accumulates into grads.
Eigen::MatrixXd backward(const Network& net, const ForwardTrace& trace, const Eigen::MatrixXd& dout,
                         Gradients& grads);

struct OptimizerConfig {
    enum class Kind : std::uint8_t { Sgd = 0, Adam = 1 };
    Kind kind = Kind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 32;
    int max_epochs = 100;
    std::uint64_t seed = 0;
    OptimizerConfig optimizer;
};

// One optimizer instance drives any number of parameter tensors, addressed by
// slot. Adam keeps per-slot moment buffers; a shared step counter advances via
// begin_step().
class Optimizer {
public:
    Optimizer(const OptimizerConfig& cfg, double learning_rate);

    void begin_step() { ++t_; }
    void apply(std::size_t slot, Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad);
    void apply_vec(std::size_t slot, Eigen::Ref<Eigen::VectorXd> param, const Eigen::VectorXd& grad);

private:
    OptimizerConfig cfg_;
    double lr_;
    long t_ = 0;
    std::vector<Eigen::MatrixXd> m_, v_;
    void ensure_slot(std::size_t slot, Eigen::Index rows, Eigen::Index cols);
};

struct EpochLossTrace {
    std::vector<double> train;
    std::vector<double> valid;
};

struct AutoencoderSpec {
    Eigen::Index input_dim = 1500;
    std::vector<Eigen::Index> hidden = {512, 64};
    Eigen::Index latent_dim = 12;
    double corruption_rate = 0.1;
};

// Denoising autoencoder: relu hidden layers, linear latent and output,
// decoder mirrors the encoder.
struct Autoencoder {
    Network encoder;
    Network decoder;
    double corruption_rate = 0.1;
};

Autoencoder make_autoencoder(const AutoencoderSpec& spec, std::mt19937_64& rng);

// Zeroes each entry independently with probability rate.
void corrupt_inplace(Eigen::MatrixXd& batch, double rate, std::mt19937_64& rng);

// Trains toward reconstructing clean inputs from corrupted ones on a 75/25
// train/validation split. X has one sample per row. Mutates ae in place so
// fine-tuning a loaded model is the same call.
EpochLossTrace train_autoencoder(Autoencoder& ae, const Eigen::MatrixXd& X, const TrainConfig& cfg,
                                 const EarlyStop& stop);

Eigen::VectorXd encode(const Autoencoder& ae, const Eigen::VectorXd& x);
Eigen::MatrixXd encode_batch(const Network& encoder, const Eigen::MatrixXd& X); // rows in, rows out

struct FcnnClassifier {
    Network net;
    int class_count = 0;

    Eigen::VectorXd predict_proba(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd predict_proba_batch(const Eigen::MatrixXd& X) const; // rows are samples
};

// layer_sizes lists every layer including the final class-count layer,
// e.g. {1024, 512, 68}. Minimizes multiclass cross-entropy.
FcnnClassifier train_fcnn(const Dataset& data, const std::vector<Eigen::Index>& layer_sizes,
                          const TrainConfig& cfg, EpochLossTrace* trace = nullptr);

} // namespace odxu
