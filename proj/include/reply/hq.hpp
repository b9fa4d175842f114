#pragma once

#include "reply/topk.hpp"
#include "reply/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace reply {

enum class HqMode { alternating, sgd };

struct HqConfig {
    int d = 64;
    int vq_size = 256;
    int num_subspaces = 8;  // must divide d
    int pq_size = 256;      // <= 256 so codes fit one byte
    HqMode mode = HqMode::alternating;

    // Alternating mode: k-means Lloyd iterations for C_VQ, then outer rounds
    // of {PQ Lloyd refinement, Procrustes rotation update}.
    int kmeans_iters = 15;
    int outer_iters = 10;
    int inner_pq_iters = 2;

    // SGD mode.
    int sgd_steps = 20000;
    int sgd_batch = 32;
    double sgd_lr = 0.02;

    // Search-time defaults.
    int retrieve_m = 100;
    bool rerank = true;

    void validate() const;
};

struct HqCodebooks {
    Matf vq;                // vq_size x d
    Matf rotation;          // d x d, orthogonal (r = R u with u a residual)
    std::vector<Matf> pq;   // num_subspaces codebooks, each pq_size x sub_d

    int dim() const { return static_cast<int>(vq.cols()); }
    int num_subspaces() const { return static_cast<int>(pq.size()); }
    int subspace_dim() const { return static_cast<int>(pq.front().cols()); }
};

struct HqCodes {
    std::vector<std::uint16_t> vq;  // one per vector
    std::vector<std::uint8_t> pq;   // n x num_subspaces, row-major
    int num_subspaces = 0;

    std::size_t size() const { return vq.size(); }
};

// Per-query lookup tables for asymmetric scoring: vq_table[j] = h_x . C_VQ[j]
// and pq_tables[k][c] = (R h_x)^(k) . C_PQ^(k)[c].
struct LookupTables {
    std::vector<float> vq_table;
    std::vector<float> pq_tables;  // flat, [k * pq_size + c]
    int pq_size = 0;
    int num_subspaces = 0;
    float alpha = 0.0f;
};

struct HqTraining {
    HqCodebooks books;
    std::vector<double> mse_history;  // per outer round / per SGD step
};

// Seeded k-means (k-means++ init, Lloyd refinement, empty clusters keep
// their previous center, assignment ties to the lowest index).
Matd kmeans(const Matd& data, int k, int iters, std::uint64_t seed);

// Learns C_VQ, R and the PQ codebooks minimizing mean ||h - HQ(h)||^2.
// Internally double precision; returned codebooks are single precision.
HqTraining train_hq(const Matf& vectors, const HqConfig& cfg, std::uint64_t seed);

// Index of the nearest VQ center (ties to the lowest index).
int vq_assign(const Vecf& h, const Matf& vq);

// (vq_code, pq codes) for one vector.
void quantize(const Vecf& h, const HqCodebooks& books, std::uint16_t& vq_code,
              std::uint8_t* pq_codes);
HqCodes quantize_all(const Matf& vectors, const HqCodebooks& books);

// C_VQ[vq] + R^T concat(C_PQ^(k)[pq_k]).
Vecf reconstruct(const HqCodebooks& books, std::uint16_t vq_code, const std::uint8_t* pq_codes);

LookupTables build_tables(const Vecf& h_x, const HqCodebooks& books, float alpha);

// vq_table[vq] + sum_k pq_tables[k][pq_k]; the caller adds any bias term.
float adc_score(const LookupTables& tables, std::uint16_t vq_code, const std::uint8_t* pq_codes);

// Scans all codes, adding alpha * bias[i] when tables.alpha != 0, and keeps
// the top m by ADC score (ties to the lowest id).
std::vector<Scored<float>> adc_scan(const LookupTables& tables, const HqCodes& codes,
                                    const float* bias, std::size_t m);

// A built index over one response set. `vectors` is empty unless the index
// was stored with full-precision rows for re-ranking.
struct HqIndex {
    HqCodebooks books;
    HqCodes codes;
    Vecf bias;     // per-response log P_LM(y), zeros when unused
    Matf vectors;  // n x d or 0 x 0
    std::uint64_t response_hash = 0;

    std::size_t size() const { return codes.size(); }
};

HqIndex build_index(const Matf& vectors, const Vecf& bias, const HqConfig& cfg,
                    std::uint64_t seed, bool store_vectors, std::uint64_t response_hash,
                    std::vector<double>* mse_history = nullptr);

// Top-N maximum-dot-product search. ADC-scans all codes, keeps retrieve_m
// candidates, optionally re-scores them with exact dots against the stored
// vectors (score = h . h_x + alpha * bias), and returns the top N.
std::vector<Scored<float>> hq_search(const HqIndex& index, const Vecf& h_x, std::size_t n_top,
                                     std::size_t retrieve_m, bool rerank, float alpha);

}  // namespace reply
