#pragma once

#include "reply/random.hpp"
#include "reply/types.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace reply {

// ---------------------------------------------------------------------------
// Embedding bags

// Sum of count-weighted embedding rows; the empty bag maps to the zero
// vector. Throws if an id is out of range.
template <class S>
Vec<S> embed_bag(const FeatureBag& bag, const Mat<S>& table) {
    Vec<S> out = Vec<S>::Zero(table.cols());
    for (const auto& [id, count] : bag.items) {
        if (id >= static_cast<NGramId>(table.rows()))
            throw std::out_of_range("embed_bag: ngram id " + std::to_string(id) +
                                    " out of range");
        out += static_cast<S>(count) * table.row(id).transpose();
    }
    return out;
}

// One bag per row.
template <class S>
Mat<S> embed_bags(const std::vector<const FeatureBag*>& bags, const Mat<S>& table) {
    Mat<S> out = Mat<S>::Zero(static_cast<Eigen::Index>(bags.size()), table.cols());
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        for (const auto& [id, count] : bags[static_cast<std::size_t>(r)]->items) {
            if (id >= static_cast<NGramId>(table.rows()))
                throw std::out_of_range("embed_bags: ngram id out of range");
            out.row(r) += static_cast<S>(count) * table.row(id);
        }
    }
    return out;
}

// Scatter the row gradients of an embedded batch back into the table
// gradient. Rows untouched by any bag stay zero.
template <class S>
void embed_bags_backward(const std::vector<const FeatureBag*>& bags, const Mat<S>& d_rows,
                         Mat<S>& d_table) {
    for (Eigen::Index r = 0; r < d_rows.rows(); ++r) {
        for (const auto& [id, count] : bags[static_cast<std::size_t>(r)]->items) {
            d_table.row(id) += static_cast<S>(count) * d_rows.row(r);
        }
    }
}

// ---------------------------------------------------------------------------
// Tanh towers

template <class S>
struct DenseLayer {
    Mat<S> weight;  // out x in
    Vec<S> bias;    // out
};

// Stack of dense layers with tanh on every layer, applied row-wise to a
// batch. Outputs therefore lie componentwise in (-1, 1).
template <class S>
struct Tower {
    std::vector<DenseLayer<S>> layers;

    int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
    int output_dim() const { return static_cast<int>(layers.back().weight.rows()); }

    Mat<S> forward(Mat<S> x) const {
        for (const auto& l : layers) {
            if (x.cols() != l.weight.cols())
                throw std::invalid_argument("tower: dimension mismatch");
            Mat<S> z = x * l.weight.transpose();
            z.rowwise() += l.bias.transpose();
            x = z.array().tanh();
        }
        return x;
    }

    Vec<S> forward(const Vec<S>& v) const {
        Mat<S> row = v.transpose();
        return forward(std::move(row)).row(0).transpose();
    }

    // Activations [input, layer1, ..., layerL] for backprop.
    std::vector<Mat<S>> forward_cached(Mat<S> x) const {
        std::vector<Mat<S>> acts;
        acts.reserve(layers.size() + 1);
        acts.push_back(std::move(x));
        for (const auto& l : layers) {
            if (acts.back().cols() != l.weight.cols())
                throw std::invalid_argument("tower: dimension mismatch");
            Mat<S> z = acts.back() * l.weight.transpose();
            z.rowwise() += l.bias.transpose();
            acts.emplace_back(z.array().tanh());
        }
        return acts;
    }

    // Accumulates parameter gradients into `grad` (same shape as *this) and
    // returns the gradient w.r.t. the tower input.
    Mat<S> backward(const std::vector<Mat<S>>& acts, Mat<S> d_out, Tower<S>& grad) const {
        for (std::size_t l = layers.size(); l-- > 0;) {
            const Mat<S>& h = acts[l + 1];
            Mat<S> dz = d_out.array() * (S(1) - h.array().square());
            grad.layers[l].weight.noalias() += dz.transpose() * acts[l];
            grad.layers[l].bias += dz.colwise().sum().transpose();
            d_out.noalias() = dz * layers[l].weight;
        }
        return d_out;
    }
};

// ---------------------------------------------------------------------------
// Scoring

template <class S>
S score_dot(const Vec<S>& hx, const Vec<S>& hy) {
    if (hx.size() != hy.size())
        throw std::invalid_argument("score_dot: dimension mismatch");
    return hx.dot(hy);
}

// Entry (i, j) = hx_i . hy_j.
template <class S>
Mat<S> batch_score_matrix(const Mat<S>& hx, const Mat<S>& hy) {
    if (hx.cols() != hy.cols())
        throw std::invalid_argument("batch_score_matrix: dimension mismatch");
    return hx * hy.transpose();
}

// ---------------------------------------------------------------------------
// Model configuration

enum class ModelKind : std::uint32_t { dot_product = 0, joint = 1 };

struct EncoderConfig {
    int embedding_dim = 64;
    int num_features = 1;                        // M
    std::vector<int> feature_layers = {64, 64, 64};
    std::vector<int> fusion_layers = {64, 64};   // dot-product model only
    std::vector<int> final_layers = {64, 64, 64};  // joint model only

    static EncoderConfig desk(int num_features = 1) {
        EncoderConfig c;
        c.num_features = num_features;
        return c;
    }
    // Full-scale configuration; desk tests do not exercise it.
    static EncoderConfig paper_dot(int num_features = 1) {
        return {320, num_features, {300, 300, 500}, {500, 500}, {}};
    }
    static EncoderConfig paper_joint(int num_features = 1) {
        return {320, num_features, {500, 300, 100}, {}, {500, 300, 100}};
    }
};

// ---------------------------------------------------------------------------
// Dot-product model (two-tower, multi-feature)

template <class S>
struct DotEncoder {
    Mat<S> input_embeddings;     // vocab x d
    Mat<S> response_embeddings;  // vocab x d
    std::vector<Tower<S>> input_towers;     // one per feature
    std::vector<Tower<S>> response_towers;  // one per feature
    Tower<S> input_fusion;
    Tower<S> response_fusion;

    int num_features() const { return static_cast<int>(input_towers.size()); }
    int embedding_dim() const { return static_cast<int>(input_embeddings.cols()); }
    int output_dim() const { return input_fusion.output_dim(); }

    template <class T>
    DotEncoder<T> cast() const {
        DotEncoder<T> out;
        out.input_embeddings = input_embeddings.template cast<T>();
        out.response_embeddings = response_embeddings.template cast<T>();
        auto cast_tower = [](const Tower<S>& t) {
            Tower<T> r;
            for (const auto& l : t.layers)
                r.layers.push_back({l.weight.template cast<T>(), l.bias.template cast<T>()});
            return r;
        };
        for (const auto& t : input_towers) out.input_towers.push_back(cast_tower(t));
        for (const auto& t : response_towers) out.response_towers.push_back(cast_tower(t));
        out.input_fusion = cast_tower(input_fusion);
        out.response_fusion = cast_tower(response_fusion);
        return out;
    }
};

// Joint scorer: per-feature subnetworks consume the concatenated input and
// response bags, a final subnetwork consumes the concatenated hidden
// representations. Scalar heads are linear so scores are unbounded.
template <class S>
struct JointScorer {
    Mat<S> input_embeddings;
    Mat<S> response_embeddings;
    std::vector<Tower<S>> towers;  // one per feature, input dim 2d
    std::vector<Vec<S>> head_weights;
    Vec<S> head_biases;  // one per feature
    Tower<S> final_tower;  // input dim M * h
    Vec<S> final_weight;
    Vec<S> final_bias;  // single entry

    int num_features() const { return static_cast<int>(towers.size()); }
    int embedding_dim() const { return static_cast<int>(input_embeddings.cols()); }

    template <class T>
    JointScorer<T> cast() const {
        JointScorer<T> out;
        out.input_embeddings = input_embeddings.template cast<T>();
        out.response_embeddings = response_embeddings.template cast<T>();
        auto cast_tower = [](const Tower<S>& t) {
            Tower<T> r;
            for (const auto& l : t.layers)
                r.layers.push_back({l.weight.template cast<T>(), l.bias.template cast<T>()});
            return r;
        };
        for (const auto& t : towers) out.towers.push_back(cast_tower(t));
        for (const auto& w : head_weights) out.head_weights.push_back(w.template cast<T>());
        out.head_biases = head_biases.template cast<T>();
        out.final_tower = cast_tower(final_tower);
        out.final_weight = final_weight.template cast<T>();
        out.final_bias = final_bias.template cast<T>();
        return out;
    }
};

// ---------------------------------------------------------------------------
// Initialization (uniform +-sqrt(6 / (fan_in + fan_out)), zero biases)

template <class S>
Mat<S> init_matrix(Eigen::Index rows, Eigen::Index cols, int fan_in, int fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Mat<S> m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            m(i, j) = static_cast<S>(rng.uniform(-limit, limit));
    return m;
}

template <class S>
Tower<S> make_tower(int input_dim, const std::vector<int>& layer_sizes, Rng& rng) {
    if (layer_sizes.empty()) throw std::invalid_argument("make_tower: no layers");
    Tower<S> t;
    int in = input_dim;
    for (int out : layer_sizes) {
        DenseLayer<S> l;
        l.weight = init_matrix<S>(out, in, in, out, rng);
        l.bias = Vec<S>::Zero(out);
        t.layers.push_back(std::move(l));
        in = out;
    }
    return t;
}

template <class S>
DotEncoder<S> make_dot_encoder(const EncoderConfig& cfg, Eigen::Index vocab_size, Rng& rng) {
    DotEncoder<S> m;
    const int d = cfg.embedding_dim;
    m.input_embeddings = init_matrix<S>(vocab_size, d, d, d, rng);
    m.response_embeddings = init_matrix<S>(vocab_size, d, d, d, rng);
    for (int i = 0; i < cfg.num_features; ++i)
        m.input_towers.push_back(make_tower<S>(d, cfg.feature_layers, rng));
    for (int i = 0; i < cfg.num_features; ++i)
        m.response_towers.push_back(make_tower<S>(d, cfg.feature_layers, rng));
    const int feat_out = cfg.feature_layers.back();
    m.input_fusion = make_tower<S>(feat_out, cfg.fusion_layers, rng);
    m.response_fusion = make_tower<S>(feat_out, cfg.fusion_layers, rng);
    return m;
}

template <class S>
JointScorer<S> make_joint_scorer(const EncoderConfig& cfg, Eigen::Index vocab_size, Rng& rng) {
    JointScorer<S> m;
    const int d = cfg.embedding_dim;
    m.input_embeddings = init_matrix<S>(vocab_size, d, d, d, rng);
    m.response_embeddings = init_matrix<S>(vocab_size, d, d, d, rng);
    const int h = cfg.feature_layers.back();
    for (int i = 0; i < cfg.num_features; ++i) {
        m.towers.push_back(make_tower<S>(2 * d, cfg.feature_layers, rng));
        m.head_weights.push_back(init_matrix<S>(h, 1, h, 1, rng).col(0));
    }
    m.head_biases = Vec<S>::Zero(cfg.num_features);
    m.final_tower = make_tower<S>(cfg.num_features * h, cfg.final_layers, rng);
    const int fh = cfg.final_layers.back();
    m.final_weight = init_matrix<S>(fh, 1, fh, 1, rng).col(0);
    m.final_bias = Vec<S>::Zero(1);
    return m;
}

// ---------------------------------------------------------------------------
// Inference-path encoding

template <class S>
struct Encoding {
    Vec<S> fused;                       // h_x or h_y
    std::vector<Vec<S>> per_feature;    // h^i
};

// h^i = tower_i(embed(x^i)); fused = fusion(mean_i h^i). Missing optional
// features are passed as empty bags.
template <class S>
Encoding<S> encode_input(const std::vector<FeatureBag>& features, const DotEncoder<S>& m) {
    if (static_cast<int>(features.size()) != m.num_features())
        throw std::invalid_argument("encode_input: expected one bag per feature");
    Encoding<S> e;
    Vec<S> mean = Vec<S>::Zero(m.input_towers.front().output_dim());
    for (int i = 0; i < m.num_features(); ++i) {
        Vec<S> psi = embed_bag(features[static_cast<std::size_t>(i)], m.input_embeddings);
        e.per_feature.push_back(m.input_towers[static_cast<std::size_t>(i)].forward(psi));
        mean += e.per_feature.back();
    }
    mean /= static_cast<S>(m.num_features());
    e.fused = m.input_fusion.forward(mean);
    return e;
}

// The single response bag feeds all M response-side towers.
template <class S>
Encoding<S> encode_response(const FeatureBag& bag, const DotEncoder<S>& m) {
    Encoding<S> e;
    const Vec<S> psi = embed_bag(bag, m.response_embeddings);
    Vec<S> mean = Vec<S>::Zero(m.response_towers.front().output_dim());
    for (int i = 0; i < m.num_features(); ++i) {
        e.per_feature.push_back(m.response_towers[static_cast<std::size_t>(i)].forward(psi));
        mean += e.per_feature.back();
    }
    mean /= static_cast<S>(m.num_features());
    e.fused = m.response_fusion.forward(mean);
    return e;
}

// Batched response encoding, one response bag per row of the result.
template <class S>
Mat<S> encode_responses(const std::vector<const FeatureBag*>& bags, const DotEncoder<S>& m) {
    const Mat<S> psi = embed_bags(bags, m.response_embeddings);
    Mat<S> mean = Mat<S>::Zero(psi.rows(), m.response_towers.front().output_dim());
    for (const auto& tower : m.response_towers) mean += tower.forward(psi);
    mean /= static_cast<S>(m.num_features());
    return m.response_fusion.forward(std::move(mean));
}

template <class S>
struct JointScore {
    S final = S(0);
    std::vector<S> per_feature;
};

// Scores one (x, y) pair through every subnetwork and the final network.
template <class S>
JointScore<S> score_joint(const std::vector<FeatureBag>& x_features, const FeatureBag& y,
                          const JointScorer<S>& m) {
    if (static_cast<int>(x_features.size()) != m.num_features())
        throw std::invalid_argument("score_joint: expected one bag per feature");
    const int d = m.embedding_dim();
    const Vec<S> psi_y = embed_bag(y, m.response_embeddings);
    JointScore<S> out;
    Vec<S> concat(m.num_features() * m.towers.front().output_dim());
    for (int i = 0; i < m.num_features(); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        Vec<S> z(2 * d);
        z.head(d) = embed_bag(x_features[idx], m.input_embeddings);
        z.tail(d) = psi_y;
        const Vec<S> h = m.towers[idx].forward(z);
        out.per_feature.push_back(m.head_weights[idx].dot(h) + m.head_biases(i));
        concat.segment(i * m.towers.front().output_dim(), m.towers.front().output_dim()) = h;
    }
    const Vec<S> hf = m.final_tower.forward(concat);
    out.final = m.final_weight.dot(hf) + m.final_bias(0);
    return out;
}

// Final joint scores of one input against many responses, batched row-wise.
template <class S>
Vec<S> score_joint_batch(const std::vector<FeatureBag>& x_features,
                         const std::vector<const FeatureBag*>& ys, const JointScorer<S>& m) {
    const int d = m.embedding_dim();
    const int h = m.towers.front().output_dim();
    const auto n = static_cast<Eigen::Index>(ys.size());
    const Mat<S> psi_y = embed_bags(ys, m.response_embeddings);
    Mat<S> concat(n, m.num_features() * h);
    for (int i = 0; i < m.num_features(); ++i) {
        Mat<S> z(n, 2 * d);
        z.leftCols(d).rowwise() =
            embed_bag(x_features[static_cast<std::size_t>(i)], m.input_embeddings).transpose();
        z.rightCols(d) = psi_y;
        concat.middleCols(i * h, h) = m.towers[static_cast<std::size_t>(i)].forward(std::move(z));
    }
    Vec<S> scores = m.final_tower.forward(std::move(concat)) * m.final_weight;
    scores.array() += m.final_bias(0);
    return scores;
}

}  // namespace reply
