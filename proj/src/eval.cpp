#include "reply/eval.hpp"

#include "reply/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace reply {

void split_dataset(std::size_t n, double train_ratio, std::uint64_t seed,
                   std::vector<std::size_t>& train, std::vector<std::size_t>& test) {
    if (n == 0) throw std::invalid_argument("split_dataset: empty dataset");
    if (train_ratio < 0.0 || train_ratio > 1.0)
        throw std::invalid_argument("split_dataset: ratio must be in [0, 1]");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    const auto n_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(n)));
    train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
}

PAtOne p_at_1(const CandidateScorer& scorer, std::size_t num_test_pairs, const EvalConfig& cfg) {
    if (num_test_pairs == 0) throw std::invalid_argument("p_at_1: no test pairs");
    if (cfg.num_candidates < 2) throw std::invalid_argument("p_at_1: need >= 2 candidates");
    const auto wanted = static_cast<std::size_t>(cfg.num_candidates - 1);
    const bool with_replacement = num_test_pairs - 1 < wanted;

    Rng rng(cfg.seed);
    PAtOne out;
    out.sampled_with_replacement = with_replacement;
    std::vector<std::uint32_t> candidates;
    std::unordered_set<std::uint32_t> seen;
    for (std::size_t i = 0; i < num_test_pairs; ++i) {
        candidates.clear();
        candidates.push_back(static_cast<std::uint32_t>(i));
        if (with_replacement) {
            while (candidates.size() < wanted + 1) {
                const auto j = static_cast<std::uint32_t>(rng.below(num_test_pairs));
                if (j != i) candidates.push_back(j);
            }
        } else {
            seen.clear();
            while (candidates.size() < wanted + 1) {
                const auto j = static_cast<std::uint32_t>(rng.below(num_test_pairs));
                if (j != i && seen.insert(j).second) candidates.push_back(j);
            }
        }
        const Vecf scores = scorer(i, candidates);
        if (scores.size() != static_cast<Eigen::Index>(candidates.size()))
            throw std::runtime_error("p_at_1: scorer returned wrong count");
        const float true_score = scores(0);
        bool beaten = false;
        int tied = 1;  // the true response itself
        for (Eigen::Index c = 1; c < scores.size(); ++c) {
            if (scores(c) > true_score) {
                beaten = true;
                break;
            }
            if (scores(c) == true_score) ++tied;
        }
        if (!beaten) {
            if (tied == 1) out.strict += 1.0;
            out.random_ties += 1.0 / tied;
        }
    }
    out.strict /= static_cast<double>(num_test_pairs);
    out.random_ties /= static_cast<double>(num_test_pairs);
    return out;
}

CandidateScorer make_dot_candidate_scorer(const DotEncoder<float>& model,
                                          const std::vector<FeaturizedPair>& test, float alpha,
                                          const Vecf* cand_logprob) {
    std::vector<const FeatureBag*> bags(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) bags[i] = &test[i].y;
    auto encodings = std::make_shared<Matf>(encode_responses(bags, model));
    std::shared_ptr<Vecf> logp;
    if (alpha != 0.0f) {
        if (cand_logprob == nullptr || cand_logprob->size() != encodings->rows())
            throw std::invalid_argument("dot scorer: alpha set but log-probs missing");
        logp = std::make_shared<Vecf>(*cand_logprob);
    }
    return [&model, &test, encodings, logp, alpha](
                   std::size_t pair_index, const std::vector<std::uint32_t>& candidates) {
        const Encoding<float> enc = encode_input(test[pair_index].x, model);
        Vecf scores(static_cast<Eigen::Index>(candidates.size()));
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            float s = encodings->row(candidates[c]).dot(enc.fused);
            if (logp) s += alpha * (*logp)(candidates[c]);
            scores(static_cast<Eigen::Index>(c)) = s;
        }
        return scores;
    };
}

CandidateScorer make_joint_candidate_scorer(const JointScorer<float>& model,
                                            const std::vector<FeaturizedPair>& test) {
    return [&model, &test](std::size_t pair_index, const std::vector<std::uint32_t>& candidates) {
        std::vector<const FeatureBag*> bags(candidates.size());
        for (std::size_t c = 0; c < candidates.size(); ++c) bags[c] = &test[candidates[c]].y;
        return score_joint_batch(test[pair_index].x, bags, model);
    };
}

std::vector<AblationRow> ablation_report(const std::vector<FeaturizedPair>& train_set,
                                         const std::vector<FeaturizedPair>& test_set,
                                         const EncoderConfig& arch, std::size_t vocab_size,
                                         const std::vector<LossKind>& losses,
                                         const std::vector<int>& batch_sizes,
                                         const std::vector<std::uint64_t>& seeds,
                                         const TrainConfig& base, const EvalConfig& eval_cfg) {
    std::vector<AblationRow> rows;
    for (const LossKind loss : losses) {
        for (const int k : batch_sizes) {
            for (const std::uint64_t seed : seeds) {
                Rng init_rng(seed);
                DotEncoder<float> model = make_dot_encoder<float>(
                        arch, static_cast<Eigen::Index>(vocab_size), init_rng);
                TrainConfig cfg = base;
                cfg.loss = loss;
                cfg.batch_size = k;
                cfg.seed = seed;
                train(model, train_set, cfg);
                const auto scorer = make_dot_candidate_scorer(model, test_set);
                const PAtOne p = p_at_1(scorer, test_set.size(), eval_cfg);
                rows.push_back({"dot",
                                loss == LossKind::multiple_negatives ? "multiple_negatives"
                                                                     : "sigmoid",
                                k, seed, p.strict});
            }
        }
    }
    return rows;
}

std::vector<AlphaPoint> alpha_sweep(const DotEncoder<float>& model,
                                    const std::vector<FeaturizedPair>& test,
                                    const Vecf& cand_logprob, const std::vector<double>& grid,
                                    const EvalConfig& cfg) {
    std::vector<AlphaPoint> points;
    for (const double alpha : grid) {
        const auto scorer = make_dot_candidate_scorer(model, test, static_cast<float>(alpha),
                                                      alpha != 0.0 ? &cand_logprob : nullptr);
        points.push_back({alpha, p_at_1(scorer, test.size(), cfg).strict});
    }
    return points;
}

Matf gaussian_mixture(std::size_t n, int d, int components, double center_scale,
                      double noise_scale, std::uint64_t seed) {
    Rng rng(seed);
    Matd centers(components, d);
    for (Eigen::Index i = 0; i < centers.rows(); ++i)
        for (Eigen::Index j = 0; j < d; ++j) centers(i, j) = center_scale * rng.gaussian();
    Matf out(static_cast<Eigen::Index>(n), d);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const auto c = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(components)));
        for (Eigen::Index j = 0; j < d; ++j)
            out(i, j) = static_cast<float>(centers(c, j) + noise_scale * rng.gaussian());
    }
    return out;
}

double recall_fraction(const std::vector<Scored<float>>& retrieved,
                       const std::vector<std::uint32_t>& truth_ids) {
    std::unordered_set<std::uint32_t> truth(truth_ids.begin(), truth_ids.end());
    std::size_t hits = 0;
    for (const auto& r : retrieved) hits += truth.count(r.id);
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

namespace {

using Clock = std::chrono::steady_clock;

double median3(double a, double b, double c) {
    return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

}  // namespace

std::vector<BenchPoint> speed_recall_bench(const HqIndex& index, const Matf& queries,
                                           const std::vector<int>& sweep,
                                           const BenchProtocol& proto, double* exhaustive_qps) {
    const auto nq = queries.rows();
    if (nq == 0) throw std::invalid_argument("bench: no queries");
    if (index.vectors.rows() != static_cast<Eigen::Index>(index.size()))
        throw std::invalid_argument("bench: index lacks stored vectors");
    const auto top_n = static_cast<std::size_t>(proto.top_n);

    // Exhaustive oracle: ground-truth ids per query (untimed).
    std::vector<std::vector<std::uint32_t>> truth(static_cast<std::size_t>(nq));
    {
        Vecf scores(index.vectors.rows());
        for (Eigen::Index q = 0; q < nq; ++q) {
            scores.noalias() = index.vectors * queries.row(q).transpose();
            const auto ranked = top_k_of(scores.data(), static_cast<std::size_t>(scores.size()),
                                         top_n);
            auto& t = truth[static_cast<std::size_t>(q)];
            t.reserve(ranked.size());
            for (const auto& r : ranked) t.push_back(r.id);
        }
    }

    // Timed exhaustive baseline: GEMV scoring plus bounded-heap selection.
    std::uint64_t sink = 0;
    const auto run_exhaustive = [&](Eigen::Index count) {
        Vecf scores(index.vectors.rows());
        for (Eigen::Index q = 0; q < count; ++q) {
            scores.noalias() = index.vectors * queries.row(q % nq).transpose();
            const auto ranked = top_k_of(scores.data(), static_cast<std::size_t>(scores.size()),
                                         top_n);
            sink += ranked.front().id;
        }
    };
    run_exhaustive(std::min<Eigen::Index>(proto.warmup, nq));
    std::vector<double> times;
    for (int rep = 0; rep < proto.reps; ++rep) {
        const auto start = Clock::now();
        run_exhaustive(nq);
        times.push_back(std::chrono::duration<double>(Clock::now() - start).count());
    }
    const double exh_time = times.size() >= 3 ? median3(times[0], times[1], times[2])
                                              : *std::min_element(times.begin(), times.end());
    if (exhaustive_qps != nullptr) *exhaustive_qps = static_cast<double>(nq) / exh_time;

    std::vector<BenchPoint> points;
    for (const int m : sweep) {
        const auto run_hq = [&](Eigen::Index count, bool collect, double* recall_sum) {
            for (Eigen::Index q = 0; q < count; ++q) {
                const Vecf hx = queries.row(q % nq).transpose();
                const auto got = hq_search(index, hx, top_n, static_cast<std::size_t>(m), true,
                                           0.0f);
                sink += got.front().id;
                if (collect)
                    *recall_sum += recall_fraction(got, truth[static_cast<std::size_t>(q % nq)]);
            }
        };
        run_hq(std::min<Eigen::Index>(proto.warmup, nq), false, nullptr);
        times.clear();
        double recall_sum = 0.0;
        for (int rep = 0; rep < proto.reps; ++rep) {
            recall_sum = 0.0;
            const auto start = Clock::now();
            run_hq(nq, true, &recall_sum);
            times.push_back(std::chrono::duration<double>(Clock::now() - start).count());
        }
        const double hq_time = times.size() >= 3 ? median3(times[0], times[1], times[2])
                                                 : *std::min_element(times.begin(), times.end());
        BenchPoint p;
        p.retrieve_m = m;
        p.recall_at_30 = recall_sum / static_cast<double>(nq);
        p.speedup = exh_time / hq_time;
        p.qps = static_cast<double>(nq) / hq_time;
        points.push_back(p);
    }
    if (sink == 0xffffffffffffffffull) throw std::runtime_error("unreachable");
    return points;
}

}  // namespace reply
