#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "odxu/dataset.hpp"
#include "odxu/net.hpp"
#include "odxu/stopping.hpp"

namespace odxu {

struct Centroids {
    Eigen::MatrixXd u; // n_c x dim, pairwise distinct rows

    Eigen::Index count() const { return u.rows(); }
    Eigen::Index dim() const { return u.cols(); }
};

// k-means++ seeding then Lloyd iterations to tolerance 1e-6 (max 100).
// Duplicate centroids after convergence trigger one re-seed, then an error.
Centroids init_centroids(const Eigen::MatrixXd& latents, int k, std::uint64_t seed);

// Student-t kernel with alpha = 1: q_j ~ (1 + ||z - u_j||^2)^-1, normalized.
Eigen::VectorXd soft_assign(const Eigen::VectorXd& z, const Centroids& c);
Eigen::MatrixXd soft_assign_batch(const Eigen::MatrixXd& latents, const Centroids& c);

// p_ij = (q_ij^2 / f_j) / sum_j' (q_ij'^2 / f_j') with f_j the column sums.
Eigen::MatrixXd target_distribution(const Eigen::MatrixXd& Q);

// Mean over rows of KL(P_row || Q_row), natural log, 0*log(0/q) = 0.
double kl_loss(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q);

// n_c(n_c-1) / sum over ordered pairs of centroid distances.
double contrastive_loss(const Centroids& c);

// -(1/N) sum_i log(yhat[i][y_i] + 1e-12); yhat rows are probability rows.
double ce_loss(const std::vector<int>& y, const Eigen::MatrixXd& yhat);

// Unweighted sum of the three terms, with yhat := Q.
double dec_total_loss(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q, const Centroids& c,
                      const std::vector<int>& y, const Eigen::MatrixXd& yhat);

// One loss-and-gradient evaluation over a batch of latents. Q and yhat are
// recomputed internally; P stays fixed (it is refreshed once per epoch).
struct DecBatchGrads {
    double loss = 0.0;
    Eigen::MatrixXd dlatents;   // N x dim
    Eigen::MatrixXd dcentroids; // n_c x dim
};
DecBatchGrads dec_loss_gradients(const Eigen::MatrixXd& latents, const Centroids& c,
                                 const Eigen::MatrixXd& P, const std::vector<int>& y);

struct DecModel {
    Network encoder;
    Centroids centroids;
    int class_count = 0;
};

struct DecTrainResult {
    DecModel model;
    EpochLossTrace trace;
};

// Phase II from a pretrained autoencoder: drops the decoder, initializes
// centroids by k-means over encoded training rows, then jointly refines the
// encoder and centroids. Labels must be dense in [0, class_count).
DecTrainResult train_dec(const Autoencoder& ae, const Dataset& data, const TrainConfig& cfg,
                         const EarlyStop& stop);

// Continues Phase II from an existing model (centroids kept, no re-init).
DecTrainResult continue_dec(const DecModel& warm, const Dataset& data, const TrainConfig& cfg,
                            const EarlyStop& stop);

// Encodes every row; labels ride along.
Dataset transform(const DecModel& m, const Dataset& data);

} // namespace odxu
