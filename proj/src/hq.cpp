#include "reply/hq.hpp"

#include "reply/random.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace reply {

void HqConfig::validate() const {
    if (d <= 0 || vq_size <= 0 || pq_size <= 0 || num_subspaces <= 0)
        throw std::invalid_argument("hq: sizes must be positive");
    if (d % num_subspaces != 0)
        throw std::invalid_argument("hq: num_subspaces must divide d");
    if (vq_size > 65536) throw std::invalid_argument("hq: vq_size exceeds 16-bit codes");
    if (pq_size > 256) throw std::invalid_argument("hq: pq_size exceeds 8-bit codes");
}

namespace {

constexpr Eigen::Index kAssignBlock = 4096;

// argmin_j ||x_i - c_j||^2 per row; ties to the lowest index. Uses the
// expansion ||x||^2 - 2 x.c + ||c||^2 so the bulk is one GEMM per block.
template <class S>
void assign_clusters(const Mat<S>& data, const Mat<S>& centers, std::vector<int>& out) {
    const Eigen::Index n = data.rows();
    const Eigen::Index k = centers.rows();
    const Vec<S> cn = centers.rowwise().squaredNorm();
    out.resize(static_cast<std::size_t>(n));
    Mat<S> g;
    for (Eigen::Index b = 0; b < n; b += kAssignBlock) {
        const Eigen::Index len = std::min(kAssignBlock, n - b);
        g.noalias() = data.middleRows(b, len) * centers.transpose();
        for (Eigen::Index r = 0; r < len; ++r) {
            S best = std::numeric_limits<S>::infinity();
            int best_j = 0;
            for (Eigen::Index j = 0; j < k; ++j) {
                const S v = cn(j) - S(2) * g(r, j);
                if (v < best) {
                    best = v;
                    best_j = static_cast<int>(j);
                }
            }
            out[static_cast<std::size_t>(b + r)] = best_j;
        }
    }
}

// One or more Lloyd iterations from the given centers; clusters that lose
// all their points keep the previous center.
void lloyd_iterate(const Matd& data, Matd& centers, int iters, std::vector<int>& assign) {
    const Eigen::Index k = centers.rows();
    Matd sums(k, data.cols());
    std::vector<std::int64_t> counts(static_cast<std::size_t>(k));
    for (int it = 0; it < iters; ++it) {
        assign_clusters(data, centers, assign);
        sums.setZero();
        std::fill(counts.begin(), counts.end(), 0);
        for (Eigen::Index i = 0; i < data.rows(); ++i) {
            sums.row(assign[static_cast<std::size_t>(i)]) += data.row(i);
            ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
        }
        for (Eigen::Index j = 0; j < k; ++j)
            if (counts[static_cast<std::size_t>(j)] > 0)
                centers.row(j) = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
    }
}

Matd kmeanspp_init(const Matd& data, int k, Rng& rng) {
    const Eigen::Index n = data.rows();
    Matd centers(k, data.cols());
    const Vecd dn = data.rowwise().squaredNorm();
    centers.row(0) = data.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
    Vecd min_d2 =
            (dn.array() - 2.0 * (data * centers.row(0).transpose()).array() +
             centers.row(0).squaredNorm())
                    .max(0.0);
    for (int c = 1; c < k; ++c) {
        const double total = min_d2.sum();
        Eigen::Index pick;
        if (total <= 0.0) {
            pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        } else {
            const double r = rng.next_double() * total;
            double acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += min_d2(i);
                if (acc > r) {
                    pick = i;
                    break;
                }
            }
        }
        centers.row(c) = data.row(pick);
        min_d2 = min_d2.cwiseMin(
                (dn.array() - 2.0 * (data * centers.row(c).transpose()).array() +
                 centers.row(c).squaredNorm())
                        .max(0.0)
                        .matrix());
    }
    return centers;
}

// Gathers the selected PQ centers of every row into an n x d matrix living
// in rotated-residual space.
void gather_pq(const std::vector<Matd>& cpq, const std::vector<std::vector<int>>& codes,
               Matd& q) {
    const int num_k = static_cast<int>(cpq.size());
    const Eigen::Index s = cpq.front().cols();
    for (int k = 0; k < num_k; ++k) {
        const auto& code_k = codes[static_cast<std::size_t>(k)];
        for (Eigen::Index i = 0; i < q.rows(); ++i)
            q.block(i, k * s, 1, s) =
                    cpq[static_cast<std::size_t>(k)].row(code_k[static_cast<std::size_t>(i)]);
    }
}

HqTraining train_alternating(const Matd& x, const HqConfig& cfg, Rng& rng) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    const int num_k = cfg.num_subspaces;
    const Eigen::Index s = d / num_k;

    Matd cvq = kmeanspp_init(x, cfg.vq_size, rng);
    std::vector<int> assign;
    lloyd_iterate(x, cvq, cfg.kmeans_iters, assign);
    assign_clusters(x, cvq, assign);

    Matd u(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        u.row(i) = x.row(i) - cvq.row(assign[static_cast<std::size_t>(i)]);

    Matd rot = Matd::Identity(d, d);
    std::vector<Matd> cpq(static_cast<std::size_t>(num_k));
    std::vector<std::vector<int>> codes(static_cast<std::size_t>(num_k));
    Matd v(n, d), q(n, d);
    HqTraining out;
    for (int round = 0; round < cfg.outer_iters; ++round) {
        v.noalias() = u * rot.transpose();
        for (int k = 0; k < num_k; ++k) {
            const Matd block = v.middleCols(k * s, s);
            auto& books_k = cpq[static_cast<std::size_t>(k)];
            if (round == 0) {
                books_k = kmeanspp_init(block, cfg.pq_size, rng);
                lloyd_iterate(block, books_k, cfg.kmeans_iters, codes[static_cast<std::size_t>(k)]);
            } else {
                lloyd_iterate(block, books_k, cfg.inner_pq_iters, codes[static_cast<std::size_t>(k)]);
            }
            assign_clusters(block, books_k, codes[static_cast<std::size_t>(k)]);
        }
        gather_pq(cpq, codes, q);

        // Procrustes update: R = V U^T from the SVD of sum_i u_i q_i^T
        // maximizes tr(R M), minimizing sum ||R u_i - q_i||^2 at fixed codes.
        const Matd m = u.transpose() * q;
        Eigen::JacobiSVD<Matd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
        rot = svd.matrixV() * svd.matrixU().transpose();

        out.mse_history.push_back((u * rot.transpose() - q).squaredNorm() /
                                  static_cast<double>(n));
    }

    out.books.vq = cvq.cast<float>();
    out.books.rotation = rot.cast<float>();
    for (const auto& b : cpq) out.books.pq.push_back(b.cast<float>());
    return out;
}

// Unique, deterministically ordered sample of k distinct row indices.
std::vector<Eigen::Index> sample_rows(Eigen::Index n, int k, Rng& rng) {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    rng.shuffle(all);
    all.resize(static_cast<std::size_t>(k));
    return all;
}

int nearest_row(const Matd& centers, const Eigen::Ref<const Vecd>& v) {
    double best = std::numeric_limits<double>::infinity();
    int best_j = 0;
    for (Eigen::Index j = 0; j < centers.rows(); ++j) {
        const double dist = (centers.row(j).transpose() - v).squaredNorm();
        if (dist < best) {
            best = dist;
            best_j = static_cast<int>(j);
        }
    }
    return best_j;
}

HqTraining train_sgd(const Matd& x, const HqConfig& cfg, Rng& rng) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    const int num_k = cfg.num_subspaces;
    const Eigen::Index s = d / num_k;

    Matd cvq(cfg.vq_size, d);
    {
        const auto rows = sample_rows(n, cfg.vq_size, rng);
        for (int j = 0; j < cfg.vq_size; ++j) cvq.row(j) = x.row(rows[static_cast<std::size_t>(j)]);
    }
    Matd rot = Matd::Identity(d, d);
    std::vector<Matd> cpq(static_cast<std::size_t>(num_k), Matd(cfg.pq_size, s));
    {
        // Seed PQ centers from the residual subvectors of a random sample.
        const auto rows = sample_rows(n, cfg.pq_size, rng);
        for (int j = 0; j < cfg.pq_size; ++j) {
            const Eigen::Index i = rows[static_cast<std::size_t>(j)];
            const Vecd u = x.row(i).transpose() -
                           cvq.row(nearest_row(cvq, x.row(i).transpose())).transpose();
            for (int k = 0; k < num_k; ++k)
                cpq[static_cast<std::size_t>(k)].row(j) = u.segment(k * s, s).transpose();
        }
    }

    Matd g_cvq(cfg.vq_size, d);
    std::vector<Matd> g_cpq(static_cast<std::size_t>(num_k), Matd(cfg.pq_size, s));
    Matd g_rot(d, d);
    std::vector<int> pq_code(static_cast<std::size_t>(num_k));
    HqTraining out;
    out.mse_history.reserve(static_cast<std::size_t>(cfg.sgd_steps));
    const double lr = cfg.sgd_lr / cfg.sgd_batch;
    for (int step = 0; step < cfg.sgd_steps; ++step) {
        g_cvq.setZero();
        g_rot.setZero();
        for (auto& g : g_cpq) g.setZero();
        double batch_err = 0.0;
        for (int b = 0; b < cfg.sgd_batch; ++b) {
            const Eigen::Index i =
                    static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
            const int a = nearest_row(cvq, x.row(i).transpose());
            const Vecd u = x.row(i).transpose() - cvq.row(a).transpose();
            const Vecd v = rot * u;
            Vecd q(d);
            for (int k = 0; k < num_k; ++k) {
                const int c = nearest_row(cpq[static_cast<std::size_t>(k)], v.segment(k * s, s));
                pq_code[static_cast<std::size_t>(k)] = c;
                q.segment(k * s, s) = cpq[static_cast<std::size_t>(k)].row(c).transpose();
            }
            const Vecd e = u - rot.transpose() * q;
            batch_err += e.squaredNorm();

            g_cvq.row(a) -= 2.0 * e.transpose();
            g_rot.noalias() -= 2.0 * q * e.transpose();
            const Vecd re = rot * e;
            for (int k = 0; k < num_k; ++k)
                g_cpq[static_cast<std::size_t>(k)].row(pq_code[static_cast<std::size_t>(k)]) -=
                        2.0 * re.segment(k * s, s).transpose();
        }
        out.mse_history.push_back(batch_err / cfg.sgd_batch);

        cvq -= lr * g_cvq;
        for (int k = 0; k < num_k; ++k)
            cpq[static_cast<std::size_t>(k)] -= lr * g_cpq[static_cast<std::size_t>(k)];
        rot -= lr * g_rot;
        // Project back to the orthogonal group; fixing the sign of the
        // triangular factor's diagonal makes the decomposition unique.
        Eigen::HouseholderQR<Matd> qr(rot);
        Matd qmat = qr.householderQ();
        const Matd rmat = qr.matrixQR();
        for (Eigen::Index j = 0; j < d; ++j)
            if (rmat(j, j) < 0.0) qmat.col(j) = -qmat.col(j);
        rot = qmat;
    }

    out.books.vq = cvq.cast<float>();
    out.books.rotation = rot.cast<float>();
    for (const auto& b : cpq) out.books.pq.push_back(b.cast<float>());
    return out;
}

}  // namespace

Matd kmeans(const Matd& data, int k, int iters, std::uint64_t seed) {
    if (data.rows() < k) throw std::invalid_argument("kmeans: fewer points than centers");
    Rng rng(seed);
    Matd centers = kmeanspp_init(data, k, rng);
    std::vector<int> assign;
    lloyd_iterate(data, centers, iters, assign);
    return centers;
}

HqTraining train_hq(const Matf& vectors, const HqConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (vectors.cols() != cfg.d) throw std::invalid_argument("train_hq: dimension mismatch");
    if (vectors.rows() < cfg.vq_size || vectors.rows() < cfg.pq_size)
        throw std::invalid_argument("train_hq: fewer vectors than codebook entries");
    const Matd x = vectors.cast<double>();
    Rng rng(seed);
    return cfg.mode == HqMode::alternating ? train_alternating(x, cfg, rng)
                                           : train_sgd(x, cfg, rng);
}

int vq_assign(const Vecf& h, const Matf& vq) {
    float best = std::numeric_limits<float>::infinity();
    int best_j = 0;
    for (Eigen::Index j = 0; j < vq.rows(); ++j) {
        const float dist = (vq.row(j).transpose() - h).squaredNorm();
        if (dist < best) {
            best = dist;
            best_j = static_cast<int>(j);
        }
    }
    return best_j;
}

void quantize(const Vecf& h, const HqCodebooks& books, std::uint16_t& vq_code,
              std::uint8_t* pq_codes) {
    const int num_k = books.num_subspaces();
    const Eigen::Index s = books.subspace_dim();
    const int a = vq_assign(h, books.vq);
    vq_code = static_cast<std::uint16_t>(a);
    const Vecf v = books.rotation * (h - books.vq.row(a).transpose());
    for (int k = 0; k < num_k; ++k) {
        const auto& book = books.pq[static_cast<std::size_t>(k)];
        float best = std::numeric_limits<float>::infinity();
        int best_c = 0;
        for (Eigen::Index c = 0; c < book.rows(); ++c) {
            const float dist = (book.row(c).transpose() - v.segment(k * s, s)).squaredNorm();
            if (dist < best) {
                best = dist;
                best_c = static_cast<int>(c);
            }
        }
        pq_codes[k] = static_cast<std::uint8_t>(best_c);
    }
}

HqCodes quantize_all(const Matf& vectors, const HqCodebooks& books) {
    const Eigen::Index n = vectors.rows();
    const int num_k = books.num_subspaces();
    const Eigen::Index s = books.subspace_dim();
    HqCodes codes;
    codes.num_subspaces = num_k;
    codes.vq.resize(static_cast<std::size_t>(n));
    codes.pq.resize(static_cast<std::size_t>(n) * num_k);

    std::vector<int> va;
    assign_clusters(vectors, books.vq, va);
    Matf v;
    std::vector<int> pa;
    for (Eigen::Index b = 0; b < n; b += kAssignBlock) {
        const Eigen::Index len = std::min(kAssignBlock, n - b);
        Matf u(len, vectors.cols());
        for (Eigen::Index r = 0; r < len; ++r) {
            const auto i = static_cast<std::size_t>(b + r);
            codes.vq[i] = static_cast<std::uint16_t>(va[i]);
            u.row(r) = vectors.row(b + r) - books.vq.row(va[i]);
        }
        v.noalias() = u * books.rotation.transpose();
        for (int k = 0; k < num_k; ++k) {
            assign_clusters(Matf(v.middleCols(k * s, s)), books.pq[static_cast<std::size_t>(k)],
                            pa);
            for (Eigen::Index r = 0; r < len; ++r)
                codes.pq[static_cast<std::size_t>(b + r) * num_k + k] =
                        static_cast<std::uint8_t>(pa[static_cast<std::size_t>(r)]);
        }
    }
    return codes;
}

Vecf reconstruct(const HqCodebooks& books, std::uint16_t vq_code, const std::uint8_t* pq_codes) {
    const int num_k = books.num_subspaces();
    const Eigen::Index s = books.subspace_dim();
    if (vq_code >= books.vq.rows()) throw std::out_of_range("reconstruct: vq code out of range");
    Vecf q(books.dim());
    for (int k = 0; k < num_k; ++k) {
        const auto& book = books.pq[static_cast<std::size_t>(k)];
        if (pq_codes[k] >= book.rows())
            throw std::out_of_range("reconstruct: pq code out of range");
        q.segment(k * s, s) = book.row(pq_codes[k]).transpose();
    }
    return books.vq.row(vq_code).transpose() + books.rotation.transpose() * q;
}

LookupTables build_tables(const Vecf& h_x, const HqCodebooks& books, float alpha) {
    LookupTables t;
    t.num_subspaces = books.num_subspaces();
    t.pq_size = static_cast<int>(books.pq.front().rows());
    t.alpha = alpha;
    t.vq_table.resize(static_cast<std::size_t>(books.vq.rows()));
    Eigen::Map<Vecf>(t.vq_table.data(), books.vq.rows()).noalias() = books.vq * h_x;
    const Vecf rq = books.rotation * h_x;
    const Eigen::Index s = books.subspace_dim();
    t.pq_tables.resize(static_cast<std::size_t>(t.num_subspaces) * t.pq_size);
    for (int k = 0; k < t.num_subspaces; ++k)
        Eigen::Map<Vecf>(t.pq_tables.data() + static_cast<std::size_t>(k) * t.pq_size,
                         t.pq_size)
                .noalias() = books.pq[static_cast<std::size_t>(k)] * rq.segment(k * s, s);
    return t;
}

float adc_score(const LookupTables& tables, std::uint16_t vq_code,
                const std::uint8_t* pq_codes) {
    float s = tables.vq_table[vq_code];
    for (int k = 0; k < tables.num_subspaces; ++k)
        s += tables.pq_tables[static_cast<std::size_t>(k) * tables.pq_size + pq_codes[k]];
    return s;
}

namespace {

template <bool with_bias>
void scan_codes(const LookupTables& t, const HqCodes& codes, const float* bias,
                TopK<float>& top) {
    const std::size_t n = codes.size();
    // restrict matters: heap stores are float stores, and without it the
    // compiler must assume they alias the tables and reload entries per row.
    const float* __restrict vqt = t.vq_table.data();
    const float* __restrict pqt = t.pq_tables.data();
    const std::uint16_t* __restrict vc = codes.vq.data();
    const std::uint8_t* __restrict pc = codes.pq.data();
    const float* __restrict bias_p = bias;
    const float alpha = t.alpha;

    // Candidates strictly below the current worst kept score cannot enter
    // the heap, so the hot loop tests against a local threshold and calls
    // push only on ties or improvements (push re-checks id order exactly).
    float threshold = -std::numeric_limits<float>::infinity();
    const auto offer = [&](std::size_t i, float s) {
        if (s < threshold) return;
        top.push(static_cast<std::uint32_t>(i), s);
        if (top.full()) threshold = top.worst_score();
    };

    // Fixed-width fast paths for byte-sized codebooks. Each row's sum is a
    // serial float-add chain (the left-to-right order is part of the
    // contract); four rows in flight give the core independent chains to
    // overlap, and one block-max test replaces four threshold branches in
    // the common case where nothing in the block can enter the heap.
    const auto scan_fixed = [&](auto row_score) {
        std::size_t i = 0;
        for (; i + 4 <= n; i += 4) {
            const float s0 = row_score(i);
            const float s1 = row_score(i + 1);
            const float s2 = row_score(i + 2);
            const float s3 = row_score(i + 3);
            const float mx = std::max(std::max(s0, s1), std::max(s2, s3));
            if (mx < threshold) continue;
            offer(i, s0);
            offer(i + 1, s1);
            offer(i + 2, s2);
            offer(i + 3, s3);
        }
        for (; i < n; ++i) offer(i, row_score(i));
    };
    if (codes.num_subspaces == 8 && t.pq_size == 256) {
        scan_fixed([&](std::size_t i) {
            const std::uint8_t* __restrict c = pc + i * 8;
            float s = vqt[vc[i]] + pqt[c[0]] + pqt[256 + c[1]] + pqt[512 + c[2]] +
                      pqt[768 + c[3]] + pqt[1024 + c[4]] + pqt[1280 + c[5]] +
                      pqt[1536 + c[6]] + pqt[1792 + c[7]];
            if constexpr (with_bias) s += alpha * bias_p[i];
            return s;
        });
        return;
    }
    if (codes.num_subspaces == 4 && t.pq_size == 256) {
        scan_fixed([&](std::size_t i) {
            const std::uint8_t* __restrict c = pc + i * 4;
            float s = vqt[vc[i]] + pqt[c[0]] + pqt[256 + c[1]] + pqt[512 + c[2]] +
                      pqt[768 + c[3]];
            if constexpr (with_bias) s += alpha * bias_p[i];
            return s;
        });
        return;
    }
    if (codes.num_subspaces == 2 && t.pq_size == 256) {
        scan_fixed([&](std::size_t i) {
            const std::uint8_t* __restrict c = pc + i * 2;
            float s = vqt[vc[i]] + pqt[c[0]] + pqt[256 + c[1]];
            if constexpr (with_bias) s += alpha * bias_p[i];
            return s;
        });
        return;
    }
    const int num_k = codes.num_subspaces;
    const std::size_t stride = static_cast<std::size_t>(t.pq_size);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* __restrict c = pc + i * num_k;
        float s = vqt[vc[i]];
        for (int k = 0; k < num_k; ++k) s += pqt[k * stride + c[k]];
        if constexpr (with_bias) s += alpha * bias_p[i];
        offer(i, s);
    }
}

}  // namespace

std::vector<Scored<float>> adc_scan(const LookupTables& tables, const HqCodes& codes,
                                    const float* bias, std::size_t m) {
    TopK<float> top(m);
    if (tables.alpha != 0.0f && bias != nullptr)
        scan_codes<true>(tables, codes, bias, top);
    else
        scan_codes<false>(tables, codes, bias, top);
    return top.take_sorted();
}

HqIndex build_index(const Matf& vectors, const Vecf& bias, const HqConfig& cfg,
                    std::uint64_t seed, bool store_vectors, std::uint64_t response_hash,
                    std::vector<double>* mse_history) {
    if (bias.size() != 0 && bias.size() != vectors.rows())
        throw std::invalid_argument("build_index: bias length mismatch");
    HqTraining trained = train_hq(vectors, cfg, seed);
    if (mse_history != nullptr) *mse_history = trained.mse_history;
    HqIndex index;
    index.books = std::move(trained.books);
    index.codes = quantize_all(vectors, index.books);
    index.bias = bias.size() != 0 ? bias : Vecf(Vecf::Zero(vectors.rows()));
    if (store_vectors) index.vectors = vectors;
    index.response_hash = response_hash;
    return index;
}

std::vector<Scored<float>> hq_search(const HqIndex& index, const Vecf& h_x, std::size_t n_top,
                                     std::size_t retrieve_m, bool rerank, float alpha) {
    if (n_top == 0) throw std::invalid_argument("hq_search: n_top must be >= 1");
    const std::size_t n = index.size();
    const std::size_t m = std::min(n, std::max(retrieve_m, n_top));
    const LookupTables tables = build_tables(h_x, index.books, alpha);
    std::vector<Scored<float>> cands = adc_scan(tables, index.codes, index.bias.data(), m);
    if (!rerank) {
        if (cands.size() > n_top) cands.resize(n_top);
        return cands;
    }
    if (index.vectors.rows() != static_cast<Eigen::Index>(n))
        throw std::invalid_argument("hq_search: rerank requires stored vectors");
    // Exact re-scoring in ascending id order so scores are bitwise identical
    // to an exhaustive id-ordered scan over the same rows.
    std::sort(cands.begin(), cands.end(),
              [](const Scored<float>& a, const Scored<float>& b) { return a.id < b.id; });
    TopK<float> top(n_top);
    for (const auto& c : cands) {
        const float exact = index.vectors.row(c.id).dot(h_x) + alpha * index.bias(c.id);
        top.push(c.id, exact);
    }
    return top.take_sorted();
}

}  // namespace reply
