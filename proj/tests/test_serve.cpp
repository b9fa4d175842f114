// Tests for the serving paths: response precomputation, the three suggest
// modes, and their oracle equivalences.
#include <doctest.h>

#include "reply/corpus.hpp"
#include "reply/serve.hpp"
#include "reply/train.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

using namespace reply;

namespace {

// One shared fixture: a small synthetic corpus, an untrained dot encoder and
// joint scorer over its vocabulary, a bigram LM, and a built index.
struct Fixture {
    NGramVocabulary vocab;
    DotEncoder<float> dot;
    JointScorer<float> joint;
    BigramLm lm;
    std::vector<std::string> responses;
    std::vector<FeatureBag> bags;
    ResponseSet rs;
    HqIndex index;

    ServeContext context() const {
        ServeContext ctx;
        ctx.vocab = &vocab;
        ctx.dot = &dot;
        ctx.joint = &joint;
        ctx.responses = &rs;
        ctx.response_bags = &bags;
        ctx.index = &index;
        ctx.response_set_hash = index.response_hash;
        return ctx;
    }
};

const Fixture& fixture() {
    static const Fixture f = [] {
        Fixture fx;
        SyntheticConfig sc;
        sc.num_pairs = 300;
        sc.num_topics = 10;
        sc.words_per_topic = 12;
        sc.filler_words = 40;
        sc.entity_words = 80;
        const auto pairs = synthetic_pairs(sc, 77);

        FeaturizeOptions fo;
        fx.vocab = build_vocabulary(vocabulary_texts(pairs, fo), 2, 4000, 1);

        EncoderConfig ec;
        ec.embedding_dim = 16;
        ec.feature_layers = {16};
        ec.fusion_layers = {16};
        ec.final_layers = {16};
        Rng rng(101);
        fx.dot = make_dot_encoder<float>(ec, static_cast<Eigen::Index>(fx.vocab.size()), rng);
        fx.joint = make_joint_scorer<float>(ec, static_cast<Eigen::Index>(fx.vocab.size()), rng);

        fx.responses = unique_responses(pairs);
        if (fx.responses.size() > 60) fx.responses.resize(60);
        fx.lm = train_lm(fx.responses, 0.1);
        for (const auto& r : fx.responses) fx.bags.push_back(featurize(r, fx.vocab));
        fx.rs = precompute_responses(fx.responses, fx.vocab, fx.dot, &fx.lm);

        HqConfig hc;
        hc.d = 16;
        hc.vq_size = 8;
        hc.num_subspaces = 4;
        hc.pq_size = 8;
        fx.index = build_index(fx.rs.encodings, fx.rs.lm_logprob, hc, 5, true, 9001);
        return fx;
    }();
    return f;
}

bool same_ranking(const std::vector<Suggestion>& a, const std::vector<Suggestion>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].id != b[i].id) return false;
        if (a[i].final_score != b[i].final_score) return false;
        if (a[i].model_score != b[i].model_score) return false;
        if (a[i].bias != b[i].bias) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("parse_suggest_mode round-trips and rejects junk") {
    for (SuggestMode m : {SuggestMode::exhaustive, SuggestMode::two_pass,
                          SuggestMode::single_pass})
        CHECK(parse_suggest_mode(suggest_mode_name(m)) == m);
    CHECK_THROWS_AS(parse_suggest_mode("fast"), std::invalid_argument);
}

TEST_CASE("precompute_responses: rows match single-response encoding") {
    const auto& fx = fixture();
    REQUIRE(fx.rs.size() == fx.responses.size());
    REQUIRE(fx.rs.encodings.rows() == static_cast<Eigen::Index>(fx.responses.size()));

    for (std::size_t i : {std::size_t{0}, fx.responses.size() / 2, fx.responses.size() - 1}) {
        const Encoding<float> single = encode_response(fx.bags[i], fx.dot);
        const Vecf row = fx.rs.encodings.row(static_cast<Eigen::Index>(i)).transpose();
        CHECK((row - single.fused).norm() < 1e-5 * (1.0f + single.fused.norm()));
    }

    // A one-element set reduces to the single-response encoder.
    const ResponseSet one =
            precompute_responses({fx.responses[0]}, fx.vocab, fx.dot, &fx.lm);
    const Encoding<float> single = encode_response(fx.bags[0], fx.dot);
    CHECK((one.encodings.row(0).transpose() - single.fused).norm() <
          1e-5 * (1.0f + single.fused.norm()));
    CHECK(one.lm_logprob(0) ==
          doctest::Approx(lm_logprob(fx.responses[0], fx.lm)).epsilon(1e-6));
}

TEST_CASE("precompute_responses: duplicates encode identically, no LM zeroes bias") {
    const auto& fx = fixture();
    const std::vector<std::string> dup = {fx.responses[0], fx.responses[1], fx.responses[0]};
    const ResponseSet rs = precompute_responses(dup, fx.vocab, fx.dot, nullptr);
    CHECK((rs.encodings.row(0) - rs.encodings.row(2)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(rs.lm_logprob.cwiseAbs().maxCoeff() == 0.0f);
    CHECK_THROWS_AS(precompute_responses({}, fx.vocab, fx.dot, nullptr),
                    std::invalid_argument);
}

TEST_CASE("featurize_query: strips quoted text and honours the feature count") {
    const auto& fx = fixture();
    const std::string body = "are we still on\n> earlier quoted line";
    const auto bags = featurize_query(body, "", fx.vocab, 1);
    REQUIRE(bags.size() == 1);
    const FeatureBag expected = featurize(strip_quoted(body), fx.vocab);
    CHECK(bags[0].items == expected.items);

    const auto two = featurize_query(body, "meeting", fx.vocab, 2);
    REQUIRE(two.size() == 2);
    CHECK(two[1].items == featurize("meeting", fx.vocab).items);

    CHECK_THROWS_AS(featurize_query(body, "", fx.vocab, 3), std::invalid_argument);
}

TEST_CASE("rank_by_dot: matches a dense score loop, bias included") {
    const auto& fx = fixture();
    Rng rng(102);
    Vecf h(16);
    for (int j = 0; j < 16; ++j) h(j) = static_cast<float>(rng.gaussian());

    for (float alpha : {0.0f, 0.3f}) {
        std::vector<float> scores(fx.rs.size());
        for (std::size_t i = 0; i < scores.size(); ++i)
            scores[i] = fx.rs.encodings.row(static_cast<Eigen::Index>(i)).dot(h) +
                        alpha * fx.rs.lm_logprob(static_cast<Eigen::Index>(i));
        const auto expected = top_k_of(scores.data(), scores.size(), 10);
        const auto got = rank_by_dot(fx.rs, h, alpha, 10);
        REQUIRE(got.size() == 10);
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].id == expected[i].id);
            CHECK(got[i].score == expected[i].score);
        }
    }

    CHECK(rank_by_dot(fx.rs, h, 0.0f, fx.rs.size() + 50).size() == fx.rs.size());
}

TEST_CASE("suggest_exhaustive: agrees with one-at-a-time joint scoring") {
    const auto& fx = fixture();
    ServeContext ctx = fx.context();
    ctx.alpha = 0.2f;

    SuggestRequest req;
    req.body = "did you manage to print the document";
    req.mode = SuggestMode::exhaustive;
    req.n = 10;
    const SuggestResult got = suggest(req, ctx);
    REQUIRE(got.items.size() == 10);

    // Naive oracle: score every response separately, sort, cut to n.
    const auto x_bags = featurize_query(req.body, req.subject, fx.vocab, 1);
    std::vector<Scored<double>> oracle;
    for (std::size_t i = 0; i < fx.bags.size(); ++i) {
        const double s = static_cast<double>(score_joint(x_bags, fx.bags[i], fx.joint).final) +
                         0.2 * fx.rs.lm_logprob(static_cast<Eigen::Index>(i));
        oracle.push_back({static_cast<std::uint32_t>(i), s});
    }
    std::sort(oracle.begin(), oracle.end(), ranks_before<double>);

    for (std::size_t i = 0; i < got.items.size(); ++i) {
        CHECK(got.items[i].id == oracle[i].id);
        CHECK(got.items[i].final_score ==
              doctest::Approx(oracle[i].score).epsilon(1e-4));
    }
}

TEST_CASE("suggest_two_pass: full first pass equals exhaustive, narrow pass equals oracle") {
    const auto& fx = fixture();
    ServeContext ctx = fx.context();
    ctx.alpha = 0.1f;

    SuggestRequest req;
    req.body = "see you at the meeting on monday";
    req.n = 8;

    SUBCASE("M = |R| makes two_pass identical to exhaustive") {
        req.mode = SuggestMode::two_pass;
        req.m = static_cast<int>(fx.rs.size());
        const SuggestResult two = suggest(req, ctx);
        req.mode = SuggestMode::exhaustive;
        const SuggestResult ex = suggest(req, ctx);
        CHECK(same_ranking(two.items, ex.items));
    }

    SUBCASE("narrow M matches the naive two-stage oracle") {
        req.mode = SuggestMode::two_pass;
        req.m = 15;
        const SuggestResult got = suggest(req, ctx);
        REQUIRE(got.items.size() == 8);

        const auto x_bags = featurize_query(req.body, req.subject, fx.vocab, 1);
        const Encoding<float> enc = encode_input(x_bags, fx.dot);
        const auto first = rank_by_dot(fx.rs, enc.fused, ctx.alpha, 15);
        std::vector<Scored<double>> oracle;
        for (const auto& c : first) {
            const double s =
                    static_cast<double>(score_joint(x_bags, fx.bags[c.id], fx.joint).final) +
                    static_cast<double>(ctx.alpha) *
                            fx.rs.lm_logprob(static_cast<Eigen::Index>(c.id));
            oracle.push_back({c.id, s});
        }
        std::sort(oracle.begin(), oracle.end(), ranks_before<double>);
        for (std::size_t i = 0; i < got.items.size(); ++i) {
            CHECK(got.items[i].id == oracle[i].id);
            CHECK(got.items[i].final_score == doctest::Approx(oracle[i].score).epsilon(1e-4));
        }
    }

    SUBCASE("M < N is rejected") {
        req.mode = SuggestMode::two_pass;
        req.m = 4;
        CHECK_THROWS_AS(suggest(req, ctx), std::invalid_argument);
    }
}

TEST_CASE("suggest_single_pass: reranking everything equals the exhaustive dot ranking") {
    const auto& fx = fixture();
    ServeContext ctx = fx.context();
    ctx.alpha = 0.25f;
    ctx.retrieve_m = static_cast<int>(fx.rs.size());
    ctx.rerank = true;

    SuggestRequest req;
    req.body = "thanks for the update";
    req.mode = SuggestMode::single_pass;
    req.n = 12;
    const SuggestResult got = suggest(req, ctx);
    REQUIRE(got.items.size() == 12);

    const auto x_bags = featurize_query(req.body, req.subject, fx.vocab, 1);
    const Encoding<float> enc = encode_input(x_bags, fx.dot);
    const auto expected = rank_by_dot(fx.rs, enc.fused, ctx.alpha, 12);
    for (std::size_t i = 0; i < got.items.size(); ++i) {
        CHECK(got.items[i].id == expected[i].id);
        CHECK(static_cast<float>(got.items[i].final_score) == expected[i].score);
    }
}

TEST_CASE("suggest_single_pass: detects an index built from another response set") {
    const auto& fx = fixture();
    ServeContext ctx = fx.context();
    ctx.response_set_hash = fx.index.response_hash + 1;

    SuggestRequest req;
    req.body = "hello";
    req.mode = SuggestMode::single_pass;
    req.n = 3;
    CHECK_THROWS_WITH_AS(suggest(req, ctx),
                         "stale artifact: index was built from a different response set",
                         std::runtime_error);

    // A zero hash on either side disables the check.
    ctx.response_set_hash = 0;
    CHECK_NOTHROW(suggest(req, ctx));
}

TEST_CASE("suggest: bias shifts which responses win") {
    const auto& fx = fixture();
    ServeContext ctx = fx.context();

    SuggestRequest req;
    req.body = "can you send the report";
    req.mode = SuggestMode::two_pass;
    req.n = static_cast<int>(fx.rs.size());
    req.m = static_cast<int>(fx.rs.size());

    ctx.alpha = 0.0f;
    const SuggestResult plain = suggest(req, ctx);
    for (const auto& item : plain.items) CHECK(item.bias == 0.0);

    ctx.alpha = 5.0f;  // exaggerated so the LM term dominates
    const SuggestResult biased = suggest(req, ctx);
    bool reordered = false;
    for (std::size_t i = 0; i < plain.items.size(); ++i)
        reordered = reordered || plain.items[i].id != biased.items[i].id;
    CHECK(reordered);
    for (const auto& item : biased.items)
        CHECK(item.final_score == doctest::Approx(item.model_score + item.bias));
}

TEST_CASE("suggest: phase timings add up to the total") {
    // A deliberately larger workload so the timed phases dominate overhead.
    SyntheticConfig sc;
    sc.num_pairs = 2500;
    sc.num_topics = 25;
    const auto pairs = synthetic_pairs(sc, 78);
    FeaturizeOptions fo;
    const auto vocab = build_vocabulary(vocabulary_texts(pairs, fo), 2, 8000, 1);

    EncoderConfig ec;
    ec.embedding_dim = 32;
    ec.feature_layers = {32};
    ec.fusion_layers = {32};
    ec.final_layers = {32};
    Rng rng(103);
    const auto dot = make_dot_encoder<float>(ec, static_cast<Eigen::Index>(vocab.size()), rng);
    const auto joint = make_joint_scorer<float>(ec, static_cast<Eigen::Index>(vocab.size()), rng);

    auto responses = unique_responses(pairs);
    std::vector<FeatureBag> bags;
    for (const auto& r : responses) bags.push_back(featurize(r, vocab));
    const ResponseSet rs = precompute_responses(responses, vocab, dot, nullptr);

    ServeContext ctx;
    ctx.vocab = &vocab;
    ctx.dot = &dot;
    ctx.joint = &joint;
    ctx.responses = &rs;
    ctx.response_bags = &bags;

    SuggestRequest req;
    req.body = "lets sync about the plan tomorrow afternoon if that works";
    req.mode = SuggestMode::two_pass;
    req.n = 30;
    req.m = static_cast<int>(rs.size());

    // Median of several runs to shield against scheduler noise.
    double best_gap = 1e9;
    for (int run = 0; run < 5; ++run) {
        const SuggestResult r = suggest(req, ctx);
        const auto sum = r.timing.encode_us + r.timing.search_us + r.timing.rescore_us;
        REQUIRE(r.timing.total_us > 0);
        const double gap = std::abs(static_cast<double>(r.timing.total_us - sum)) /
                           static_cast<double>(r.timing.total_us);
        best_gap = std::min(best_gap, gap);
    }
    CHECK(best_gap < 0.05);
}
