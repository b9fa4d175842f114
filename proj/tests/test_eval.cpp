// Tests for evaluation utilities: the dataset split, precision@1 with its
// tie-handling, candidate scorers, ablations, and the benchmark helpers.
#include <doctest.h>

#include "reply/corpus.hpp"
#include "reply/eval.hpp"
#include "reply/random.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

using namespace reply;

namespace {

// Shared featurized test set built from a small synthetic corpus.
struct EvalFixture {
    NGramVocabulary vocab;
    DotEncoder<float> dot;
    JointScorer<float> joint;
    std::vector<FeaturizedPair> pairs;
};

const EvalFixture& eval_fixture() {
    static const EvalFixture f = [] {
        EvalFixture fx;
        SyntheticConfig sc;
        sc.num_pairs = 160;
        sc.num_topics = 8;
        sc.words_per_topic = 10;
        sc.filler_words = 30;
        sc.entity_words = 60;
        const auto raw = synthetic_pairs(sc, 55);
        FeaturizeOptions fo;
        fx.vocab = build_vocabulary(vocabulary_texts(raw, fo), 2, 3000, 1);
        fx.pairs = featurize_pairs(raw, fx.vocab, fo);

        EncoderConfig ec;
        ec.embedding_dim = 16;
        ec.feature_layers = {16};
        ec.fusion_layers = {16};
        ec.final_layers = {16};
        Rng rng(88);
        fx.dot = make_dot_encoder<float>(ec, static_cast<Eigen::Index>(fx.vocab.size()), rng);
        fx.joint = make_joint_scorer<float>(ec, static_cast<Eigen::Index>(fx.vocab.size()), rng);
        return fx;
    }();
    return f;
}

}  // namespace

TEST_CASE("split_dataset: sizes, disjointness, determinism") {
    std::vector<std::size_t> train, test;

    split_dataset(100, 0.95, 1, train, test);
    CHECK(train.size() == 95);
    CHECK(test.size() == 5);

    std::set<std::size_t> all(train.begin(), train.end());
    all.insert(test.begin(), test.end());
    CHECK(all.size() == 100);
    CHECK(*all.begin() == 0);
    CHECK(*all.rbegin() == 99);

    split_dataset(100, 1.0, 1, train, test);
    CHECK(train.size() == 100);
    CHECK(test.empty());

    std::vector<std::size_t> train2, test2;
    split_dataset(100, 0.95, 1, train2, test2);
    split_dataset(100, 0.95, 1, train, test);
    CHECK(train == train2);
    CHECK(test == test2);

    split_dataset(100, 0.95, 2, train2, test2);
    CHECK(train != train2);

    CHECK_THROWS_AS(split_dataset(0, 0.5, 1, train, test), std::invalid_argument);
    CHECK_THROWS_AS(split_dataset(10, 1.5, 1, train, test), std::invalid_argument);
}

TEST_CASE("p_at_1: oracle scorer scores a perfect 1.0") {
    const CandidateScorer oracle = [](std::size_t, const std::vector<std::uint32_t>& cands) {
        Vecf s = Vecf::Zero(static_cast<Eigen::Index>(cands.size()));
        s(0) = 1.0f;
        return s;
    };
    EvalConfig cfg;
    cfg.num_candidates = 20;
    const PAtOne r = p_at_1(oracle, 200, cfg);
    CHECK(r.strict == 1.0);
    CHECK(r.random_ties == 1.0);
    CHECK_FALSE(r.sampled_with_replacement);
}

TEST_CASE("p_at_1: constant scorer ties everything") {
    const CandidateScorer flat = [](std::size_t, const std::vector<std::uint32_t>& cands) {
        return Vecf(Vecf::Constant(static_cast<Eigen::Index>(cands.size()), 0.5f));
    };
    EvalConfig cfg;
    cfg.num_candidates = 25;
    const PAtOne r = p_at_1(flat, 150, cfg);
    CHECK(r.strict == 0.0);
    CHECK(r.random_ties == doctest::Approx(1.0 / 25.0).epsilon(1e-12));
}

TEST_CASE("p_at_1: invariant under an exact monotone rescaling") {
    const auto& fx = eval_fixture();
    const auto scorer = make_dot_candidate_scorer(fx.dot, fx.pairs);
    // Multiplying by 4 is exact in floating point, so comparisons (and even
    // ties) are bit-for-bit preserved.
    const CandidateScorer scaled = [&scorer](std::size_t i,
                                             const std::vector<std::uint32_t>& cands) {
        Vecf s = scorer(i, cands);
        return Vecf(4.0f * s);
    };
    EvalConfig cfg;
    cfg.num_candidates = 30;
    const PAtOne a = p_at_1(scorer, fx.pairs.size(), cfg);
    const PAtOne b = p_at_1(scaled, fx.pairs.size(), cfg);
    CHECK(a.strict == b.strict);
    CHECK(a.random_ties == b.random_ties);
}

TEST_CASE("p_at_1: tiny candidate pools fall back to replacement") {
    const CandidateScorer flat = [](std::size_t, const std::vector<std::uint32_t>& cands) {
        return Vecf(Vecf::Zero(static_cast<Eigen::Index>(cands.size())));
    };
    EvalConfig cfg;
    cfg.num_candidates = 100;
    const PAtOne r = p_at_1(flat, 5, cfg);
    CHECK(r.sampled_with_replacement);
    CHECK_THROWS_AS(p_at_1(flat, 0, cfg), std::invalid_argument);
    cfg.num_candidates = 1;
    CHECK_THROWS_AS(p_at_1(flat, 5, cfg), std::invalid_argument);
}

TEST_CASE("make_dot_candidate_scorer: scores equal encoding dot products") {
    const auto& fx = eval_fixture();
    const auto scorer = make_dot_candidate_scorer(fx.dot, fx.pairs);

    std::vector<const FeatureBag*> bags(fx.pairs.size());
    for (std::size_t i = 0; i < fx.pairs.size(); ++i) bags[i] = &fx.pairs[i].y;
    const Matf encodings = encode_responses(bags, fx.dot);

    const std::vector<std::uint32_t> cands = {4, 0, 17, 9};
    const Vecf got = scorer(2, cands);
    REQUIRE(got.size() == 4);
    const Encoding<float> enc = encode_input(fx.pairs[2].x, fx.dot);
    for (std::size_t c = 0; c < cands.size(); ++c) {
        const float expect = encodings.row(cands[c]).dot(enc.fused);
        CHECK(got(static_cast<Eigen::Index>(c)) == doctest::Approx(expect).epsilon(1e-5));
    }
}

TEST_CASE("make_dot_candidate_scorer: alpha requires log-probabilities") {
    const auto& fx = eval_fixture();
    CHECK_THROWS_AS(make_dot_candidate_scorer(fx.dot, fx.pairs, 0.5f, nullptr),
                    std::invalid_argument);

    Vecf logp(static_cast<Eigen::Index>(fx.pairs.size()));
    Rng rng(89);
    for (Eigen::Index i = 0; i < logp.size(); ++i)
        logp(i) = static_cast<float>(rng.uniform(-20.0, 0.0));

    const auto plain = make_dot_candidate_scorer(fx.dot, fx.pairs);
    const auto biased = make_dot_candidate_scorer(fx.dot, fx.pairs, 0.5f, &logp);
    const std::vector<std::uint32_t> cands = {1, 5, 3};
    const Vecf p = plain(0, cands);
    const Vecf b = biased(0, cands);
    for (std::size_t c = 0; c < cands.size(); ++c)
        CHECK(b(static_cast<Eigen::Index>(c)) ==
              doctest::Approx(p(static_cast<Eigen::Index>(c)) + 0.5f * logp(cands[c]))
                      .epsilon(1e-5));
}

TEST_CASE("make_joint_candidate_scorer: agrees with one-at-a-time scoring") {
    const auto& fx = eval_fixture();
    const auto scorer = make_joint_candidate_scorer(fx.joint, fx.pairs);
    const std::vector<std::uint32_t> cands = {7, 2, 11, 0, 30};
    const Vecf got = scorer(5, cands);
    REQUIRE(got.size() == 5);
    for (std::size_t c = 0; c < cands.size(); ++c) {
        const float expect = score_joint(fx.pairs[5].x, fx.pairs[cands[c]].y, fx.joint).final;
        CHECK(got(static_cast<Eigen::Index>(c)) == doctest::Approx(expect).epsilon(1e-4));
    }
}

TEST_CASE("ablation_report: one row per combination, deterministic") {
    const auto& fx = eval_fixture();
    std::vector<FeaturizedPair> train_set(fx.pairs.begin(), fx.pairs.begin() + 64);
    std::vector<FeaturizedPair> test_set(fx.pairs.begin() + 64, fx.pairs.begin() + 96);

    EncoderConfig arch;
    arch.embedding_dim = 8;
    arch.feature_layers = {8};
    arch.fusion_layers = {8};
    TrainConfig base;
    base.epochs = 1;
    EvalConfig ec;
    ec.num_candidates = 16;

    const auto rows = ablation_report(train_set, test_set, arch, fx.vocab.size(),
                                      {LossKind::multiple_negatives, LossKind::sigmoid}, {8},
                                      {1, 2}, base, ec);
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) {
        CHECK(r.model == "dot");
        CHECK((r.loss == "multiple_negatives" || r.loss == "sigmoid"));
        CHECK(r.k == 8);
        CHECK((r.seed == 1 || r.seed == 2));
        CHECK(r.p_at_1 >= 0.0);
        CHECK(r.p_at_1 <= 1.0);
    }

    const auto again = ablation_report(train_set, test_set, arch, fx.vocab.size(),
                                       {LossKind::multiple_negatives, LossKind::sigmoid}, {8},
                                       {1, 2}, base, ec);
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].p_at_1 == again[i].p_at_1);
}

TEST_CASE("alpha_sweep: evaluates the grid in order") {
    const auto& fx = eval_fixture();
    Vecf logp(static_cast<Eigen::Index>(fx.pairs.size()));
    Rng rng(90);
    for (Eigen::Index i = 0; i < logp.size(); ++i)
        logp(i) = static_cast<float>(rng.uniform(-20.0, 0.0));

    EvalConfig ec;
    ec.num_candidates = 16;
    const auto points = alpha_sweep(fx.dot, fx.pairs, logp, {0.0, 0.25, 1.0}, ec);
    REQUIRE(points.size() == 3);
    CHECK(points[0].alpha == 0.0);
    CHECK(points[1].alpha == 0.25);
    CHECK(points[2].alpha == 1.0);
    for (const auto& p : points) {
        CHECK(p.p_at_1 >= 0.0);
        CHECK(p.p_at_1 <= 1.0);
    }

    // alpha = 0 must agree with the unbiased scorer.
    const auto plain = make_dot_candidate_scorer(fx.dot, fx.pairs);
    const PAtOne direct = p_at_1(plain, fx.pairs.size(), ec);
    CHECK(points[0].p_at_1 == direct.strict);
}

TEST_CASE("gaussian_mixture: deterministic, seeded, correctly shaped") {
    const Matf a = gaussian_mixture(200, 8, 4, 5.0, 0.5, 42);
    const Matf b = gaussian_mixture(200, 8, 4, 5.0, 0.5, 42);
    const Matf c = gaussian_mixture(200, 8, 4, 5.0, 0.5, 43);
    REQUIRE(a.rows() == 200);
    REQUIRE(a.cols() == 8);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0f);
    CHECK((a - c).cwiseAbs().maxCoeff() > 0.0f);
    // Wide centers and narrow noise leave plainly visible cluster structure.
    CHECK(a.cwiseAbs().maxCoeff() > 1.0f);
}

TEST_CASE("recall_fraction: full, empty and partial overlap") {
    const std::vector<Scored<float>> retrieved = {{0, 1.0f}, {1, 0.9f}, {2, 0.8f}, {3, 0.7f}};
    CHECK(recall_fraction(retrieved, {0, 1, 2, 3}) == 1.0);
    CHECK(recall_fraction(retrieved, {7, 8, 9, 10}) == 0.0);
    CHECK(recall_fraction(retrieved, {1, 3, 9, 11}) == 0.5);
}

TEST_CASE("speed_recall_bench: smoke run with exact tail point") {
    const Matf all = gaussian_mixture(1020, 16, 8, 3.0, 1.0, 7);
    const Matf vectors = all.topRows(1000);
    const Matf queries = all.bottomRows(20);

    HqConfig hc;
    hc.d = 16;
    hc.vq_size = 16;
    hc.num_subspaces = 4;
    hc.pq_size = 16;
    const HqIndex index = build_index(vectors, Vecf::Zero(1000), hc, 3, true, 0);

    BenchProtocol proto;
    proto.top_n = 30;
    proto.warmup = 5;
    proto.reps = 3;
    double exhaustive_qps = 0.0;
    const auto points = speed_recall_bench(index, queries, {30, 200, 1000}, proto,
                                           &exhaustive_qps);
    REQUIRE(points.size() == 3);
    CHECK(exhaustive_qps > 0.0);

    double prev = -1.0;
    for (const auto& p : points) {
        CHECK(p.recall_at_30 >= prev);
        prev = p.recall_at_30;
        CHECK(p.qps > 0.0);
        CHECK(p.speedup > 0.0);
    }
    // Re-ranking every vector reproduces the exhaustive ranking exactly.
    CHECK(points.back().retrieve_m == 1000);
    CHECK(points.back().recall_at_30 == 1.0);
}
