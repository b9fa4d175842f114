#include "reply/serve.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

namespace reply {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t us_since(Clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - start).count();
}

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("suggest: missing ") + what);
}

// Joint-scores the given candidates (densely, one batch) and returns the
// biased top n. Candidate ids must be sorted ascending so scoring order is
// independent of how the candidates were chosen.
std::vector<Scored<float>> joint_rank(const std::vector<std::uint32_t>& ids,
                                      const std::vector<FeatureBag>& x_bags,
                                      const ServeContext& ctx, std::size_t n_top) {
    const auto& all_bags = *ctx.response_bags;
    std::vector<const FeatureBag*> bags(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) bags[i] = &all_bags[ids[i]];
    const Vecf scores = score_joint_batch(x_bags, bags, *ctx.joint);
    TopK<float> top(n_top);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const float biased = scores(static_cast<Eigen::Index>(i)) +
                             ctx.alpha * ctx.responses->lm_logprob(ids[i]);
        top.push(ids[i], biased);
    }
    return top.take_sorted();
}

std::vector<Suggestion> materialize(const std::vector<Scored<float>>& ranked,
                                    const ServeContext& ctx) {
    std::vector<Suggestion> items;
    items.reserve(ranked.size());
    for (const auto& r : ranked) {
        Suggestion s;
        s.id = r.id;
        s.response = ctx.responses->responses[r.id];
        s.bias = static_cast<double>(ctx.alpha) * ctx.responses->lm_logprob(r.id);
        s.final_score = static_cast<double>(r.score);
        s.model_score = s.final_score - s.bias;
        items.push_back(std::move(s));
    }
    return items;
}

}  // namespace

ResponseSet precompute_responses(const std::vector<std::string>& responses,
                                 const NGramVocabulary& vocab, const DotEncoder<float>& model,
                                 const BigramLm* lm) {
    if (responses.empty()) throw std::invalid_argument("precompute_responses: empty response set");
    std::vector<FeatureBag> bags;
    bags.reserve(responses.size());
    for (const auto& r : responses) bags.push_back(featurize(r, vocab));
    std::vector<const FeatureBag*> ptrs(bags.size());
    for (std::size_t i = 0; i < bags.size(); ++i) ptrs[i] = &bags[i];

    ResponseSet rs;
    rs.responses = responses;
    rs.encodings = encode_responses(ptrs, model);
    rs.lm_logprob = Vecf::Zero(static_cast<Eigen::Index>(responses.size()));
    if (lm != nullptr)
        for (std::size_t i = 0; i < responses.size(); ++i)
            rs.lm_logprob(static_cast<Eigen::Index>(i)) =
                    static_cast<float>(lm_logprob(responses[i], *lm));
    return rs;
}

SuggestMode parse_suggest_mode(const std::string& name) {
    if (name == "exhaustive") return SuggestMode::exhaustive;
    if (name == "two_pass") return SuggestMode::two_pass;
    if (name == "single_pass") return SuggestMode::single_pass;
    throw std::invalid_argument("unknown suggest mode: " + name);
}

std::string suggest_mode_name(SuggestMode mode) {
    switch (mode) {
        case SuggestMode::exhaustive: return "exhaustive";
        case SuggestMode::two_pass: return "two_pass";
        case SuggestMode::single_pass: return "single_pass";
    }
    return "?";
}

std::vector<FeatureBag> featurize_query(const std::string& body, const std::string& subject,
                                        const NGramVocabulary& vocab, int num_features) {
    std::vector<FeatureBag> bags;
    bags.push_back(featurize(strip_quoted(body), vocab));
    if (num_features == 2) bags.push_back(featurize(subject, vocab));
    if (static_cast<int>(bags.size()) != num_features)
        throw std::invalid_argument("featurize_query: unsupported feature count");
    return bags;
}

std::vector<Scored<float>> rank_by_dot(const ResponseSet& rs, const Vecf& h_x, float alpha,
                                       std::size_t n_top) {
    TopK<float> top(n_top);
    const auto n = static_cast<Eigen::Index>(rs.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const float s = rs.encodings.row(i).dot(h_x) + alpha * rs.lm_logprob(i);
        top.push(static_cast<std::uint32_t>(i), s);
    }
    return top.take_sorted();
}

SuggestResult suggest_exhaustive(const SuggestRequest& req, const ServeContext& ctx) {
    require(ctx.vocab && ctx.joint && ctx.responses && ctx.response_bags, "joint model");
    const auto start = Clock::now();
    SuggestResult out;

    auto t0 = Clock::now();
    const auto x_bags =
            featurize_query(req.body, req.subject, *ctx.vocab, ctx.joint->num_features());
    out.timing.encode_us = us_since(t0);

    t0 = Clock::now();
    std::vector<std::uint32_t> ids(ctx.responses->size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::uint32_t>(i);
    const auto ranked = joint_rank(ids, x_bags, ctx, static_cast<std::size_t>(req.n));
    out.timing.search_us = us_since(t0);

    out.items = materialize(ranked, ctx);
    out.timing.total_us = us_since(start);
    return out;
}

SuggestResult suggest_two_pass(const SuggestRequest& req, const ServeContext& ctx) {
    require(ctx.vocab && ctx.dot && ctx.joint && ctx.responses && ctx.response_bags,
            "dot and joint models");
    if (req.m < req.n) throw std::invalid_argument("suggest: two_pass requires M >= N");
    const auto start = Clock::now();
    SuggestResult out;

    auto t0 = Clock::now();
    const auto x_bags = featurize_query(req.body, req.subject, *ctx.vocab,
                                        ctx.dot->num_features());
    const Encoding<float> enc = encode_input(x_bags, *ctx.dot);
    out.timing.encode_us = us_since(t0);

    t0 = Clock::now();
    const auto first = rank_by_dot(*ctx.responses, enc.fused, ctx.alpha,
                                   static_cast<std::size_t>(req.m));
    out.timing.search_us = us_since(t0);

    t0 = Clock::now();
    std::vector<std::uint32_t> ids(first.size());
    for (std::size_t i = 0; i < first.size(); ++i) ids[i] = first[i].id;
    std::sort(ids.begin(), ids.end());
    const auto joint_bags =
            featurize_query(req.body, req.subject, *ctx.vocab, ctx.joint->num_features());
    const auto ranked = joint_rank(ids, joint_bags, ctx, static_cast<std::size_t>(req.n));
    out.timing.rescore_us = us_since(t0);

    out.items = materialize(ranked, ctx);
    out.timing.total_us = us_since(start);
    return out;
}

SuggestResult suggest_single_pass(const SuggestRequest& req, const ServeContext& ctx) {
    require(ctx.vocab && ctx.dot && ctx.responses && ctx.index, "dot model and index");
    if (ctx.index->response_hash != 0 && ctx.response_set_hash != 0 &&
        ctx.index->response_hash != ctx.response_set_hash)
        throw std::runtime_error("stale artifact: index was built from a different response set");
    const auto start = Clock::now();
    SuggestResult out;

    auto t0 = Clock::now();
    const auto x_bags = featurize_query(req.body, req.subject, *ctx.vocab,
                                        ctx.dot->num_features());
    const Encoding<float> enc = encode_input(x_bags, *ctx.dot);
    out.timing.encode_us = us_since(t0);

    t0 = Clock::now();
    const std::size_t m = std::max<std::size_t>(static_cast<std::size_t>(ctx.retrieve_m),
                                                static_cast<std::size_t>(req.n));
    const auto ranked = hq_search(*ctx.index, enc.fused, static_cast<std::size_t>(req.n), m,
                                  ctx.rerank, ctx.alpha);
    out.timing.search_us = us_since(t0);

    out.items = materialize(ranked, ctx);
    out.timing.total_us = us_since(start);
    return out;
}

SuggestResult suggest(const SuggestRequest& req, const ServeContext& ctx) {
    switch (req.mode) {
        case SuggestMode::exhaustive: return suggest_exhaustive(req, ctx);
        case SuggestMode::two_pass: return suggest_two_pass(req, ctx);
        case SuggestMode::single_pass: return suggest_single_pass(req, ctx);
    }
    throw std::invalid_argument("suggest: bad mode");
}

}  // namespace reply
