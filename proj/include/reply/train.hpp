#pragma once

#include "reply/encoder.hpp"
#include "reply/random.hpp"
#include "reply/types.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace reply {

enum class LossKind { multiple_negatives, sigmoid };

// ---------------------------------------------------------------------------
// Losses

// J = -(1/K) sum_i [ S_ii - log sum_j exp(S_ij) ], log-sum-exp stabilized by
// row-max subtraction. The other responses in the batch act as negatives.
template <class S>
S multiple_negatives_loss(const Mat<S>& scores) {
    if (scores.rows() != scores.cols())
        throw std::invalid_argument("multiple_negatives_loss: matrix must be square");
    const Eigen::Index k = scores.rows();
    S total = S(0);
    for (Eigen::Index i = 0; i < k; ++i) {
        const S row_max = scores.row(i).maxCoeff();
        const S lse = row_max + std::log((scores.row(i).array() - row_max).exp().sum());
        total += lse - scores(i, i);
    }
    return total / static_cast<S>(k);
}

// Loss plus dJ/dS = (softmax_row - I) / K.
template <class S>
S multiple_negatives_loss_grad(const Mat<S>& scores, Mat<S>& d_scores) {
    if (scores.rows() != scores.cols())
        throw std::invalid_argument("multiple_negatives_loss: matrix must be square");
    const Eigen::Index k = scores.rows();
    d_scores.resize(k, k);
    S total = S(0);
    for (Eigen::Index i = 0; i < k; ++i) {
        const S row_max = scores.row(i).maxCoeff();
        const auto shifted = (scores.row(i).array() - row_max).exp();
        const S z = shifted.sum();
        total += row_max + std::log(z) - scores(i, i);
        d_scores.row(i) = (shifted / z).matrix();
        d_scores(i, i) -= S(1);
    }
    d_scores /= static_cast<S>(k);
    return total / static_cast<S>(k);
}

template <class S>
S total_multiloss(S final_loss, const std::vector<S>& per_feature) {
    return std::accumulate(per_feature.begin(), per_feature.end(), final_loss);
}

namespace detail {
// log(1 + exp(x)) without overflow.
template <class S>
S softplus(S x) {
    return std::max(x, S(0)) + std::log1p(std::exp(-std::abs(x)));
}
}  // namespace detail

// Mean binary cross-entropy of (score, label) pairs under a sigmoid.
template <class S>
S sigmoid_classifier_loss(const std::vector<std::pair<S, int>>& scored) {
    if (scored.empty())
        throw std::invalid_argument("sigmoid_classifier_loss: empty input");
    S total = S(0);
    for (const auto& [s, label] : scored) {
        total += detail::softplus(label ? -s : s);
    }
    return total / static_cast<S>(scored.size());
}

// Matrix layout used during training: the diagonal entries are the K
// positives, all off-diagonal entries the K(K-1) negatives, so both losses
// see identical pairings.
template <class S>
S sigmoid_matrix_loss_grad(const Mat<S>& scores, Mat<S>& d_scores) {
    const Eigen::Index k = scores.rows();
    const S inv = S(1) / static_cast<S>(scores.size());
    d_scores.resize(k, scores.cols());
    S total = S(0);
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < scores.cols(); ++j) {
            const S s = scores(i, j);
            const S label = (i == j) ? S(1) : S(0);
            total += detail::softplus(label > S(0) ? -s : s);
            const S sig = S(1) / (S(1) + std::exp(-s));
            d_scores(i, j) = (sig - label) * inv;
        }
    }
    return total * inv;
}

template <class S>
S matrix_loss_grad(LossKind kind, const Mat<S>& scores, Mat<S>& d_scores) {
    return kind == LossKind::multiple_negatives
                   ? multiple_negatives_loss_grad(scores, d_scores)
                   : sigmoid_matrix_loss_grad(scores, d_scores);
}

// ---------------------------------------------------------------------------
// Parameter traversal

template <class S, class F>
void for_each_param(Tower<S>& t, F&& f) {
    for (auto& l : t.layers) {
        f(l.weight);
        f(l.bias);
    }
}

template <class S, class F>
void for_each_param(DotEncoder<S>& m, F&& f) {
    f(m.input_embeddings);
    f(m.response_embeddings);
    for (auto& t : m.input_towers) for_each_param(t, f);
    for (auto& t : m.response_towers) for_each_param(t, f);
    for_each_param(m.input_fusion, f);
    for_each_param(m.response_fusion, f);
}

template <class S, class F>
void for_each_param(JointScorer<S>& m, F&& f) {
    f(m.input_embeddings);
    f(m.response_embeddings);
    for (auto& t : m.towers) for_each_param(t, f);
    for (auto& w : m.head_weights) f(w);
    f(m.head_biases);
    for_each_param(m.final_tower, f);
    f(m.final_weight);
    f(m.final_bias);
}

template <class Model>
Model zeros_like(const Model& m) {
    Model z = m;
    for_each_param(z, [](auto& p) { p.setZero(); });
    return z;
}

// ---------------------------------------------------------------------------
// Batch gradients

struct BatchLoss {
    double total = 0.0;
    double final_loss = 0.0;
    std::vector<double> per_feature;
};

// Forward + exact reverse-mode gradients of the multi-loss objective for one
// batch of the dot-product model. Gradients are accumulated into `grad`
// (same shape as the model, caller zeroes it).
template <class S>
BatchLoss dot_batch_gradients(const DotEncoder<S>& m,
                              const std::vector<const FeaturizedPair*>& batch, LossKind kind,
                              DotEncoder<S>& grad) {
    const int features = m.num_features();
    const auto k = static_cast<Eigen::Index>(batch.size());
    const S inv_m = S(1) / static_cast<S>(features);

    std::vector<const FeatureBag*> bags_y(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) bags_y[i] = &batch[i]->y;
    const Mat<S> psi_y = embed_bags(bags_y, m.response_embeddings);

    std::vector<std::vector<const FeatureBag*>> bags_x(static_cast<std::size_t>(features));
    std::vector<std::vector<Mat<S>>> in_acts, resp_acts;
    for (int f = 0; f < features; ++f) {
        auto& bags = bags_x[static_cast<std::size_t>(f)];
        bags.resize(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i)
            bags[i] = &batch[i]->x[static_cast<std::size_t>(f)];
        in_acts.push_back(m.input_towers[static_cast<std::size_t>(f)].forward_cached(
                embed_bags(bags, m.input_embeddings)));
        resp_acts.push_back(
                m.response_towers[static_cast<std::size_t>(f)].forward_cached(psi_y));
    }

    const int feat_dim = m.input_towers.front().output_dim();
    Mat<S> mean_in = Mat<S>::Zero(k, feat_dim);
    Mat<S> mean_resp = Mat<S>::Zero(k, feat_dim);
    for (int f = 0; f < features; ++f) {
        mean_in += in_acts[static_cast<std::size_t>(f)].back();
        mean_resp += resp_acts[static_cast<std::size_t>(f)].back();
    }
    mean_in *= inv_m;
    mean_resp *= inv_m;

    const auto fusion_in = m.input_fusion.forward_cached(mean_in);
    const auto fusion_resp = m.response_fusion.forward_cached(mean_resp);
    const Mat<S>& hx = fusion_in.back();
    const Mat<S>& hy = fusion_resp.back();

    // Losses and score-matrix gradients.
    BatchLoss report;
    Mat<S> d_final;
    report.final_loss = static_cast<double>(matrix_loss_grad(kind, Mat<S>(hx * hy.transpose()), d_final));
    std::vector<Mat<S>> d_feature(static_cast<std::size_t>(features));
    for (int f = 0; f < features; ++f) {
        const auto idx = static_cast<std::size_t>(f);
        const Mat<S> s_f = in_acts[idx].back() * resp_acts[idx].back().transpose();
        report.per_feature.push_back(
                static_cast<double>(matrix_loss_grad(kind, s_f, d_feature[idx])));
    }
    report.total = report.final_loss;
    for (double l : report.per_feature) report.total += l;
    if (!std::isfinite(report.total))
        throw std::runtime_error("dot_batch_gradients: non-finite loss");

    // Backward through the fusion towers to the per-feature means.
    const Mat<S> d_mean_in =
            m.input_fusion.backward(fusion_in, d_final * hy, grad.input_fusion) * inv_m;
    const Mat<S> d_mean_resp =
            m.response_fusion.backward(fusion_resp, d_final.transpose() * hx,
                                       grad.response_fusion) * inv_m;

    Mat<S> d_psi_y = Mat<S>::Zero(k, m.embedding_dim());
    for (int f = 0; f < features; ++f) {
        const auto idx = static_cast<std::size_t>(f);
        const Mat<S> d_in = d_feature[idx] * resp_acts[idx].back() + d_mean_in;
        const Mat<S> d_x = m.input_towers[idx].backward(in_acts[idx], d_in,
                                                        grad.input_towers[idx]);
        embed_bags_backward(bags_x[idx], d_x, grad.input_embeddings);
        const Mat<S> d_resp = d_feature[idx].transpose() * in_acts[idx].back() + d_mean_resp;
        d_psi_y += m.response_towers[idx].backward(resp_acts[idx], d_resp,
                                                   grad.response_towers[idx]);
    }
    embed_bags_backward(bags_y, d_psi_y, grad.response_embeddings);
    return report;
}

// Joint-model version. Every (x_i, y_j) pairing requires its own forward
// pass, so rows are laid out as r = i * K + j.
template <class S>
BatchLoss joint_batch_gradients(const JointScorer<S>& m,
                                const std::vector<const FeaturizedPair*>& batch, LossKind kind,
                                JointScorer<S>& grad) {
    const int features = m.num_features();
    const int d = m.embedding_dim();
    const int h = m.towers.front().output_dim();
    const auto k = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index pairs = k * k;

    std::vector<const FeatureBag*> bags_y(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) bags_y[i] = &batch[i]->y;
    const Mat<S> psi_y = embed_bags(bags_y, m.response_embeddings);

    std::vector<std::vector<const FeatureBag*>> bags_x(static_cast<std::size_t>(features));
    std::vector<Mat<S>> psi_x(static_cast<std::size_t>(features));
    std::vector<std::vector<Mat<S>>> acts(static_cast<std::size_t>(features));
    Mat<S> concat(pairs, features * h);
    for (int f = 0; f < features; ++f) {
        const auto idx = static_cast<std::size_t>(f);
        auto& bags = bags_x[idx];
        bags.resize(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i)
            bags[i] = &batch[i]->x[static_cast<std::size_t>(f)];
        psi_x[idx] = embed_bags(bags, m.input_embeddings);
        Mat<S> z(pairs, 2 * d);
        for (Eigen::Index i = 0; i < k; ++i) {
            z.block(i * k, 0, k, d).rowwise() = psi_x[idx].row(i);
            z.block(i * k, d, k, d) = psi_y;
        }
        acts[idx] = m.towers[idx].forward_cached(std::move(z));
        concat.middleCols(f * h, h) = acts[idx].back();
    }

    const auto final_acts = m.final_tower.forward_cached(concat);
    Vec<S> s_final = final_acts.back() * m.final_weight;
    s_final.array() += m.final_bias(0);

    // Score vectors are row-major flattenings of the K x K grid (row = input
    // index, column = response index), so fold them back explicitly.
    const auto to_grid = [k](const Vec<S>& flat) {
        Mat<S> grid(k, k);
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < k; ++j) grid(i, j) = flat(i * k + j);
        return grid;
    };
    const auto to_flat = [k](const Mat<S>& grid) {
        Vec<S> flat(grid.size());
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < k; ++j) flat(i * k + j) = grid(i, j);
        return flat;
    };

    BatchLoss report;
    Mat<S> d_final_scores;
    report.final_loss =
            static_cast<double>(matrix_loss_grad(kind, to_grid(s_final), d_final_scores));
    std::vector<Mat<S>> d_feat_scores(static_cast<std::size_t>(features));
    for (int f = 0; f < features; ++f) {
        const auto idx = static_cast<std::size_t>(f);
        Vec<S> s_f = acts[idx].back() * m.head_weights[idx];
        s_f.array() += m.head_biases(f);
        report.per_feature.push_back(
                static_cast<double>(matrix_loss_grad(kind, to_grid(s_f), d_feat_scores[idx])));
    }
    report.total = report.final_loss;
    for (double l : report.per_feature) report.total += l;
    if (!std::isfinite(report.total))
        throw std::runtime_error("joint_batch_gradients: non-finite loss");

    // Backward. Score vectors are row-major flattenings of the K x K grids.
    const Vec<S> ds_final = to_flat(d_final_scores);
    grad.final_weight += final_acts.back().transpose() * ds_final;
    grad.final_bias(0) += ds_final.sum();
    Mat<S> d_final_out = ds_final * m.final_weight.transpose();
    const Mat<S> d_concat = m.final_tower.backward(final_acts, std::move(d_final_out),
                                                   grad.final_tower);

    Mat<S> d_psi_y = Mat<S>::Zero(k, d);
    for (int f = 0; f < features; ++f) {
        const auto idx = static_cast<std::size_t>(f);
        const Vec<S> ds_f = to_flat(d_feat_scores[idx]);
        grad.head_weights[idx] += acts[idx].back().transpose() * ds_f;
        grad.head_biases(f) += ds_f.sum();
        Mat<S> d_h = d_concat.middleCols(f * h, h);
        d_h.noalias() += ds_f * m.head_weights[idx].transpose();
        const Mat<S> d_z = m.towers[idx].backward(acts[idx], std::move(d_h), grad.towers[idx]);
        Mat<S> d_x = Mat<S>::Zero(k, d);
        for (Eigen::Index i = 0; i < k; ++i) {
            d_x.row(i) = d_z.block(i * k, 0, k, d).colwise().sum();
            d_psi_y += d_z.block(i * k, d, k, d);
        }
        embed_bags_backward(bags_x[idx], d_x, grad.input_embeddings);
    }
    embed_bags_backward(bags_y, d_psi_y, grad.response_embeddings);
    return report;
}

template <class S>
BatchLoss compute_gradients(const DotEncoder<S>& m, const std::vector<const FeaturizedPair*>& b,
                            LossKind kind, DotEncoder<S>& grad) {
    return dot_batch_gradients(m, b, kind, grad);
}

template <class S>
BatchLoss compute_gradients(const JointScorer<S>& m, const std::vector<const FeaturizedPair*>& b,
                            LossKind kind, JointScorer<S>& grad) {
    return joint_batch_gradients(m, b, kind, grad);
}

// Pairwise visitation of (model param, grad param); both models must share a
// structure so the two traversals line up.
template <class Model, class F>
void apply_update(Model& model, Model& grad, F&& f) {
    std::vector<void*> grads;
    for_each_param(grad, [&](auto& p) { grads.push_back(static_cast<void*>(&p)); });
    std::size_t i = 0;
    for_each_param(model, [&](auto& p) {
        using P = std::decay_t<decltype(p)>;
        f(p, *static_cast<P*>(grads[i++]));
    });
}

// ---------------------------------------------------------------------------
// SGD trainer

struct TrainConfig {
    int batch_size = 32;  // K
    int epochs = 10;
    double lr = 0.01;
    std::uint64_t lr_decay_step = 10000;
    double lr_decayed = 0.001;
    std::uint64_t seed = 1;
    LossKind loss = LossKind::multiple_negatives;
};

struct LossReport {
    std::uint64_t step = 0;
    double loss = 0.0;
    std::vector<double> per_feature;
    double grad_norm = 0.0;
    double lr = 0.0;
};

// Epoch-shuffled plain SGD. The last partial batch of an epoch is dropped so
// every batch has exactly K examples. Deterministic for a given seed.
template <class Model>
std::vector<LossReport> train(Model& model, const std::vector<FeaturizedPair>& data,
                              const TrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");

    Rng rng(cfg.seed);
    Model grad = zeros_like(model);
    std::vector<LossReport> curve;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<const FeaturizedPair*> batch(static_cast<std::size_t>(cfg.batch_size));

    std::uint64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        const std::size_t num_batches = data.size() / static_cast<std::size_t>(cfg.batch_size);
        for (std::size_t b = 0; b < num_batches; ++b) {
            for (std::size_t i = 0; i < batch.size(); ++i)
                batch[i] = &data[order[b * batch.size() + i]];
            for_each_param(grad, [](auto& p) { p.setZero(); });
            BatchLoss loss = compute_gradients(model, batch, cfg.loss, grad);

            const double lr = step < cfg.lr_decay_step ? cfg.lr : cfg.lr_decayed;
            double sq_norm = 0.0;
            for_each_param(grad, [&](auto& p) { sq_norm += static_cast<double>(p.squaredNorm()); });
            using Scalar = std::decay_t<decltype(model.input_embeddings(0, 0))>;
            const auto rate = static_cast<Scalar>(lr);
            {
                // Single writer: apply the update pairwise over parameters.
                auto apply = [&](auto& p, const auto& g) { p -= rate * g; };
                apply_update(model, grad, apply);
            }
            ++step;
            curve.push_back({step, loss.total, std::move(loss.per_feature), std::sqrt(sq_norm), lr});
        }
    }
    return curve;
}

}  // namespace reply
