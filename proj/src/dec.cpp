#include "odxu/dec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace odxu {

namespace {

constexpr double kCeEps = 1e-12;
constexpr double kCoincidentTol = 1e-12;

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& U) {
    // ||z_i - u_j||^2 = |z_i|^2 + |u_j|^2 - 2 z_i . u_j
    Eigen::MatrixXd d2 = -2.0 * Z * U.transpose();
    d2.colwise() += Z.rowwise().squaredNorm();
    d2.rowwise() += U.rowwise().squaredNorm().transpose();
    return d2.cwiseMax(0.0);
}

// Ordered-pair distance sum; throws on coincident centroids.
double pairwise_distance_sum(const Eigen::MatrixXd& U) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < U.rows(); ++j) {
            const double d = (U.row(i) - U.row(j)).norm();
            if (d < kCoincidentTol)
                throw DataError("contrastive loss: coincident centroids " + std::to_string(i) +
                                " and " + std::to_string(j));
            sum += 2.0 * d;
        }
    }
    return sum;
}

struct KmeansRun {
    Eigen::MatrixXd centers;
    bool has_duplicates = false;
};

KmeansRun kmeans_once(const Eigen::MatrixXd& X, int k, std::mt19937_64& rng) {
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd centers(k, X.cols());

    // k-means++ seeding.
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centers.row(0) = X.row(first(rng));
    Eigen::VectorXd d2 = (X.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index chosen = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> unit(0.0, total);
            double r = unit(rng);
            for (Eigen::Index i = 0; i < n; ++i) {
                r -= d2[i];
                if (r <= 0.0) {
                    chosen = i;
                    break;
                }
                chosen = i;
            }
        } else {
            // All remaining mass sits on already-chosen points; take the
            // first row not yet selected.
            for (Eigen::Index i = 0; i < n; ++i) {
                bool used = false;
                for (int cc = 0; cc < c; ++cc)
                    if ((X.row(i) - centers.row(cc)).squaredNorm() == 0.0) used = true;
                if (!used) {
                    chosen = i;
                    break;
                }
            }
        }
        centers.row(c) = X.row(chosen);
        d2 = d2.cwiseMin((X.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }

    // Lloyd iterations.
    std::vector<int> assign(static_cast<std::size_t>(n), 0);
    for (int iter = 0; iter < 100; ++iter) {
        const Eigen::MatrixXd dist = squared_distances(X, centers);
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index arg;
            dist.row(i).minCoeff(&arg);
            assign[static_cast<std::size_t>(i)] = static_cast<int>(arg);
        }
        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, X.cols());
        Eigen::VectorXd count = Eigen::VectorXd::Zero(k);
        for (Eigen::Index i = 0; i < n; ++i) {
            next.row(assign[static_cast<std::size_t>(i)]) += X.row(i);
            count[assign[static_cast<std::size_t>(i)]] += 1.0;
        }
        double shift = 0.0;
        for (int c = 0; c < k; ++c) {
            if (count[c] > 0.0) {
                next.row(c) /= count[c];
            } else {
                next.row(c) = centers.row(c); // empty cluster keeps its spot
            }
            shift = std::max(shift, (next.row(c) - centers.row(c)).norm());
        }
        centers = next;
        if (shift < 1e-6) break;
    }

    KmeansRun run;
    run.centers = centers;
    for (int i = 0; i < k && !run.has_duplicates; ++i)
        for (int j = i + 1; j < k; ++j)
            if ((centers.row(i) - centers.row(j)).norm() < kCoincidentTol) {
                run.has_duplicates = true;
                break;
            }
    return run;
}

} // namespace

Centroids init_centroids(const Eigen::MatrixXd& latents, int k, std::uint64_t seed) {
    if (k < 1) throw DataError("init_centroids: k must be positive");
    if (static_cast<Eigen::Index>(k) > latents.rows())
        throw DataError("init_centroids: k exceeds the number of points");

    std::mt19937_64 rng(seed);
    KmeansRun run = kmeans_once(latents, k, rng);
    if (run.has_duplicates) {
        std::mt19937_64 retry(seed + 1);
        run = kmeans_once(latents, k, retry);
        if (run.has_duplicates)
            throw DataError("init_centroids: duplicate centroids after re-seed "
                            "(points do not support k distinct clusters)");
    }
    return Centroids{run.centers};
}

Eigen::MatrixXd soft_assign_batch(const Eigen::MatrixXd& latents, const Centroids& c) {
    if (latents.cols() != c.dim()) throw ShapeError("soft_assign: dimension mismatch");
    Eigen::MatrixXd q = (1.0 + squared_distances(latents, c.u).array()).inverse().matrix();
    for (Eigen::Index i = 0; i < q.rows(); ++i) q.row(i) /= q.row(i).sum();
    return q;
}

Eigen::VectorXd soft_assign(const Eigen::VectorXd& z, const Centroids& c) {
    return soft_assign_batch(z.transpose(), c).row(0).transpose();
}

Eigen::MatrixXd target_distribution(const Eigen::MatrixXd& Q) {
    const Eigen::VectorXd f = Q.colwise().sum();
    Eigen::MatrixXd P = Q.array().square().matrix();
    for (Eigen::Index j = 0; j < P.cols(); ++j) P.col(j) /= f[j];
    for (Eigen::Index i = 0; i < P.rows(); ++i) P.row(i) /= P.row(i).sum();
    return P;
}

double kl_loss(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q) {
    if (P.rows() != Q.rows() || P.cols() != Q.cols()) throw ShapeError("kl_loss: shape mismatch");
    double total = 0.0;
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        for (Eigen::Index j = 0; j < P.cols(); ++j) {
            const double p = P(i, j);
            if (p <= 0.0) continue;
            const double q = Q(i, j);
            if (q <= 0.0) throw DataError("kl_loss: q is zero where p is positive");
            total += p * std::log(p / q);
        }
    }
    return total / static_cast<double>(P.rows());
}

double contrastive_loss(const Centroids& c) {
    const Eigen::Index n = c.count();
    if (n < 2) throw DataError("contrastive loss: need at least two centroids");
    const double ordered_pairs = static_cast<double>(n) * static_cast<double>(n - 1);
    return ordered_pairs / pairwise_distance_sum(c.u);
}

double ce_loss(const std::vector<int>& y, const Eigen::MatrixXd& yhat) {
    if (static_cast<Eigen::Index>(y.size()) != yhat.rows())
        throw ShapeError("ce_loss: label count mismatch");
    double total = 0.0;
    for (Eigen::Index i = 0; i < yhat.rows(); ++i) {
        const int label = y[static_cast<std::size_t>(i)];
        if (label < 0 || label >= yhat.cols()) throw DataError("ce_loss: label out of range");
        total -= std::log(yhat(i, label) + kCeEps);
    }
    return total / static_cast<double>(yhat.rows());
}

double dec_total_loss(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q, const Centroids& c,
                      const std::vector<int>& y, const Eigen::MatrixXd& yhat) {
    return kl_loss(P, Q) + contrastive_loss(c) + ce_loss(y, yhat);
}

DecBatchGrads dec_loss_gradients(const Eigen::MatrixXd& latents, const Centroids& c,
                                 const Eigen::MatrixXd& P, const std::vector<int>& y) {
    const Eigen::Index n = latents.rows();
    const Eigen::Index k = c.count();
    if (P.rows() != n || P.cols() != k) throw ShapeError("dec gradients: P shape mismatch");
    if (static_cast<Eigen::Index>(y.size()) != n)
        throw ShapeError("dec gradients: label count mismatch");

    const Eigen::MatrixXd d2 = squared_distances(latents, c.u);
    const Eigen::MatrixXd s = (1.0 + d2.array()).inverse().matrix();
    const Eigen::VectorXd srow = s.rowwise().sum();
    Eigen::MatrixXd q = s;
    for (Eigen::Index i = 0; i < n; ++i) q.row(i) /= srow[i];

    const double invn = 1.0 / static_cast<double>(n);

    // dL/dq for the KL and CE terms.
    Eigen::MatrixXd gq = -invn * (P.array() / q.array()).matrix();
    for (Eigen::Index i = 0; i < n; ++i) {
        const int label = y[static_cast<std::size_t>(i)];
        gq(i, label) -= invn / (q(i, label) + kCeEps);
    }

    const Eigen::VectorXd a = (gq.array() * q.array()).rowwise().sum();
    // T = dL/d(d^2): -s^2 (gq - a_i) / srow_i
    Eigen::MatrixXd t = gq;
    t.colwise() -= a;
    t.array() *= -s.array().square();
    for (Eigen::Index i = 0; i < n; ++i) t.row(i) /= srow[i];

    DecBatchGrads out;
    const Eigen::VectorXd trow = t.rowwise().sum();
    const Eigen::VectorXd tcol = t.colwise().sum();
    out.dlatents = 2.0 * (trow.asDiagonal() * latents - t * c.u);
    out.dcentroids = -2.0 * (t.transpose() * latents - tcol.asDiagonal() * c.u);

    // Contrastive term and its centroid gradient.
    const double dist_sum = pairwise_distance_sum(c.u);
    const double numer = static_cast<double>(k) * static_cast<double>(k - 1);
    const double l_con = numer / dist_sum;
    const double scale = -numer / (dist_sum * dist_sum);
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            if (i == j) continue;
            const Eigen::RowVectorXd diff = c.u.row(i) - c.u.row(j);
            out.dcentroids.row(i) += scale * 2.0 * diff / diff.norm();
        }
    }

    out.loss = kl_loss(P, q) + l_con + ce_loss(y, q);
    return out;
}

namespace {

DecTrainResult run_phase2(Network encoder, Centroids centroids, int class_count,
                          const Dataset& data, const TrainConfig& cfg, const EarlyStop& stop,
                          bool init_from_kmeans) {
    const Eigen::Index n = data.rows();
    if (n == 0) throw DataError("train_dec: empty dataset");
    if (static_cast<Eigen::Index>(data.y.size()) != n)
        throw ShapeError("train_dec: label count does not match row count");
    if (class_count < 2) throw DataError("train_dec: need at least two classes");
    if (cfg.batch_size < 1) throw DataError("train_dec: batch_size must be >= 1");
    for (int label : data.y)
        if (label < 0 || label >= class_count)
            throw DataError("train_dec: labels must be dense in [0, class_count)");

    std::mt19937_64 rng(cfg.seed);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    Eigen::Index n_valid = n / 4;
    if (n_valid == 0 && n >= 2) n_valid = 1;
    const std::vector<Eigen::Index> valid_idx(idx.begin(), idx.begin() + n_valid);
    std::vector<Eigen::Index> train_idx(idx.begin() + n_valid, idx.end());

    auto gather = [&](const std::vector<Eigen::Index>& rows) {
        Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), data.X.cols());
        std::vector<int> labels(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            x.row(static_cast<Eigen::Index>(i)) = data.X.row(rows[i]);
            labels[i] = data.y[static_cast<std::size_t>(rows[i])];
        }
        return std::make_pair(std::move(x), std::move(labels));
    };

    auto [train_x, train_y] = gather(train_idx);
    auto [valid_x, valid_y] = gather(valid_idx);

    if (init_from_kmeans) {
        const Eigen::MatrixXd z0 = encode_batch(encoder, train_x);
        centroids = init_centroids(z0, class_count, cfg.seed);

        // The class-probability reading of the soft assignment ties cluster
        // index j to class j, so permute the k-means output to the class each
        // cluster mostly contains (greedy on the vote matrix).
        Eigen::MatrixXi votes = Eigen::MatrixXi::Zero(class_count, class_count);
        const Eigen::MatrixXd q0 = soft_assign_batch(z0, centroids);
        for (Eigen::Index i = 0; i < q0.rows(); ++i) {
            Eigen::Index cluster;
            q0.row(i).maxCoeff(&cluster);
            votes(cluster, train_y[static_cast<std::size_t>(i)])++;
        }
        std::vector<int> cluster_for_class(static_cast<std::size_t>(class_count), -1);
        std::vector<bool> cluster_used(static_cast<std::size_t>(class_count), false);
        std::vector<bool> class_used(static_cast<std::size_t>(class_count), false);
        for (int round = 0; round < class_count; ++round) {
            int best_cluster = -1, best_class = -1, best_votes = -1;
            for (int cl = 0; cl < class_count; ++cl) {
                if (cluster_used[static_cast<std::size_t>(cl)]) continue;
                for (int cs = 0; cs < class_count; ++cs) {
                    if (class_used[static_cast<std::size_t>(cs)]) continue;
                    if (votes(cl, cs) > best_votes) {
                        best_votes = votes(cl, cs);
                        best_cluster = cl;
                        best_class = cs;
                    }
                }
            }
            cluster_for_class[static_cast<std::size_t>(best_class)] = best_cluster;
            cluster_used[static_cast<std::size_t>(best_cluster)] = true;
            class_used[static_cast<std::size_t>(best_class)] = true;
        }
        Eigen::MatrixXd aligned(class_count, centroids.dim());
        for (int cs = 0; cs < class_count; ++cs)
            aligned.row(cs) = centroids.u.row(cluster_for_class[static_cast<std::size_t>(cs)]);
        centroids.u = std::move(aligned);
    }

    Optimizer opt(cfg.optimizer, cfg.learning_rate);
    EarlyStopMonitor monitor(stop);
    EpochLossTrace trace;
    const std::size_t layer_count = encoder.layers.size();
    const std::size_t centroid_slot = 2 * layer_count;

    std::vector<std::size_t> order(train_idx.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        // Target refresh: P recomputed once per epoch over the training rows.
        const Eigen::MatrixXd z_all = encode_batch(encoder, train_x);
        const Eigen::MatrixXd p_all = target_distribution(soft_assign_batch(z_all, centroids));

        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t m = std::min<std::size_t>(cfg.batch_size, order.size() - start);
            Eigen::MatrixXd bx(static_cast<Eigen::Index>(m), train_x.cols());
            Eigen::MatrixXd bp(static_cast<Eigen::Index>(m), class_count);
            std::vector<int> by(m);
            for (std::size_t i = 0; i < m; ++i) {
                const auto row = static_cast<Eigen::Index>(order[start + i]);
                bx.row(static_cast<Eigen::Index>(i)) = train_x.row(row);
                bp.row(static_cast<Eigen::Index>(i)) = p_all.row(row);
                by[i] = train_y[order[start + i]];
            }

            auto ft = forward_trace(encoder, bx.transpose());
            const Eigen::MatrixXd z = ft.output.transpose();
            DecBatchGrads g = dec_loss_gradients(z, centroids, bp, by);
            loss_sum += g.loss * static_cast<double>(m);

            Gradients eg = zero_gradients(encoder);
            backward(encoder, ft, g.dlatents.transpose(), eg);

            opt.begin_step();
            for (std::size_t l = 0; l < layer_count; ++l) {
                opt.apply(2 * l, encoder.layers[l].weights, eg.dw[l]);
                opt.apply_vec(2 * l + 1, encoder.layers[l].bias, eg.db[l]);
            }
            opt.apply(centroid_slot, centroids.u, g.dcentroids);
        }

        trace.train.push_back(loss_sum / static_cast<double>(order.size()));

        double valid_loss = trace.train.back();
        if (valid_x.rows() > 0) {
            const Eigen::MatrixXd zv = encode_batch(encoder, valid_x);
            const Eigen::MatrixXd qv = soft_assign_batch(zv, centroids);
            const Eigen::MatrixXd pv = target_distribution(qv);
            valid_loss = dec_total_loss(pv, qv, centroids, valid_y, qv);
        }
        trace.valid.push_back(valid_loss);
        if (monitor.observe(valid_loss)) break;
    }

    DecTrainResult result;
    result.model = DecModel{std::move(encoder), std::move(centroids), class_count};
    result.trace = std::move(trace);
    return result;
}

} // namespace

DecTrainResult train_dec(const Autoencoder& ae, const Dataset& data, const TrainConfig& cfg,
                         const EarlyStop& stop) {
    const int class_count = data.y.empty() ? 0 : *std::max_element(data.y.begin(), data.y.end()) + 1;
    return run_phase2(ae.encoder, Centroids{}, class_count, data, cfg, stop,
                      /*init_from_kmeans=*/true);
}

DecTrainResult continue_dec(const DecModel& warm, const Dataset& data, const TrainConfig& cfg,
                            const EarlyStop& stop) {
    if (warm.centroids.count() != warm.class_count)
        throw ShapeError("continue_dec: centroid count does not match class count");
    return run_phase2(warm.encoder, warm.centroids, warm.class_count, data, cfg, stop,
                      /*init_from_kmeans=*/false);
}

Dataset transform(const DecModel& m, const Dataset& data) {
    Dataset out;
    out.labels = data.labels;
    out.y = data.y;
    out.X = encode_batch(m.encoder, data.X);
    return out;
}

} // namespace odxu
