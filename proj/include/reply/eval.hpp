#pragma once

#include "reply/encoder.hpp"
#include "reply/hq.hpp"
#include "reply/io.hpp"
#include "reply/train.hpp"
#include "reply/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace reply {

struct EvalConfig {
    int num_candidates = 100;  // true response + 99 distractors
    std::uint64_t seed = 1;
};

// Disjoint, union-complete index split, deterministic per seed.
void split_dataset(std::size_t n, double train_ratio, std::uint64_t seed,
                   std::vector<std::size_t>& train, std::vector<std::size_t>& test);

struct PAtOne {
    double strict = 0.0;       // ties among candidates count as failures
    double random_ties = 0.0;  // expected value when ties break uniformly
    bool sampled_with_replacement = false;
};

// Scores one test pair's input against candidate responses identified by
// their test-set row; returns one score per candidate, aligned.
using CandidateScorer =
        std::function<Vecf(std::size_t pair_index, const std::vector<std::uint32_t>& candidates)>;

// Candidate 0 is the true response; distractors are sampled from the other
// test responses (distinct when possible, with replacement plus a flag when
// the pool is too small).
PAtOne p_at_1(const CandidateScorer& scorer, std::size_t num_test_pairs, const EvalConfig& cfg);

// Dot-product scorer: encodes all test responses once; optional per-response
// log-probabilities enable the alpha-weighted bias.
CandidateScorer make_dot_candidate_scorer(const DotEncoder<float>& model,
                                          const std::vector<FeaturizedPair>& test,
                                          float alpha = 0.0f, const Vecf* cand_logprob = nullptr);

CandidateScorer make_joint_candidate_scorer(const JointScorer<float>& model,
                                            const std::vector<FeaturizedPair>& test);

// Trains one dot-product model per (loss, batch size, seed) combination and
// reports held-out P@1 for each.
std::vector<AblationRow> ablation_report(const std::vector<FeaturizedPair>& train_set,
                                         const std::vector<FeaturizedPair>& test_set,
                                         const EncoderConfig& arch, std::size_t vocab_size,
                                         const std::vector<LossKind>& losses,
                                         const std::vector<int>& batch_sizes,
                                         const std::vector<std::uint64_t>& seeds,
                                         const TrainConfig& base, const EvalConfig& eval_cfg);

struct AlphaPoint {
    double alpha = 0.0;
    double p_at_1 = 0.0;
};

// Grid search for the bias weight; best = highest strict P@1, ties to the
// smaller alpha.
std::vector<AlphaPoint> alpha_sweep(const DotEncoder<float>& model,
                                    const std::vector<FeaturizedPair>& test,
                                    const Vecf& cand_logprob, const std::vector<double>& grid,
                                    const EvalConfig& cfg);

// Seeded mixture-of-Gaussians vectors (row-wise) for index benchmarks.
Matf gaussian_mixture(std::size_t n, int d, int components, double center_scale,
                      double noise_scale, std::uint64_t seed);

// |retrieved ∩ truth| / |truth|.
double recall_fraction(const std::vector<Scored<float>>& retrieved,
                       const std::vector<std::uint32_t>& truth_ids);

struct BenchProtocol {
    int top_n = 30;
    int warmup = 100;
    int reps = 3;  // median of reps timed passes
};

// Fig.-5-style sweep: measures exhaustive GEMV search once, then HQ search
// with re-ranking at every retrieve_m in the sweep, reporting recall@top_n
// against the exhaustive oracle, speedup, and queries/second. The index must
// carry full-precision vectors.
std::vector<BenchPoint> speed_recall_bench(const HqIndex& index, const Matf& queries,
                                           const std::vector<int>& sweep,
                                           const BenchProtocol& proto,
                                           double* exhaustive_qps = nullptr);

}  // namespace reply
