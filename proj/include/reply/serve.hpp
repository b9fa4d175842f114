#pragma once

#include "reply/corpus.hpp"
#include "reply/encoder.hpp"
#include "reply/hq.hpp"
#include "reply/lm.hpp"
#include "reply/text.hpp"
#include "reply/topk.hpp"
#include "reply/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace reply {

// The fixed candidate set R with precomputed dot-product encodings and LM
// log-probabilities, row-aligned with `responses`.
struct ResponseSet {
    std::vector<std::string> responses;
    Matf encodings;   // n x d
    Vecf lm_logprob;  // zeros when no LM was supplied
    std::uint64_t vocab_hash = 0;
    std::uint64_t model_hash = 0;
    std::uint64_t lm_hash = 0;

    std::size_t size() const { return responses.size(); }
};

// Encodes every response through the response-side towers and scores it
// under the LM (when given).
ResponseSet precompute_responses(const std::vector<std::string>& responses,
                                 const NGramVocabulary& vocab, const DotEncoder<float>& model,
                                 const BigramLm* lm);

enum class SuggestMode { exhaustive, two_pass, single_pass };

SuggestMode parse_suggest_mode(const std::string& name);
std::string suggest_mode_name(SuggestMode mode);

struct SuggestRequest {
    std::string body;
    std::string subject;
    SuggestMode mode = SuggestMode::two_pass;
    int n = 100;   // results wanted
    int m = 500;   // first-pass width (two_pass only)
};

struct Suggestion {
    std::uint32_t id = 0;
    std::string response;
    double model_score = 0.0;  // S_m
    double bias = 0.0;         // alpha * log P_LM(y)
    double final_score = 0.0;  // S_f
};

struct SuggestTiming {
    std::int64_t encode_us = 0;
    std::int64_t search_us = 0;
    std::int64_t rescore_us = 0;
    std::int64_t total_us = 0;
};

struct SuggestResult {
    std::vector<Suggestion> items;
    SuggestTiming timing;
};

// Everything a request needs; members the chosen mode does not use may be
// null. `response_bags` is row-aligned with the response set and required
// for the joint-scoring modes.
struct ServeContext {
    const NGramVocabulary* vocab = nullptr;
    const DotEncoder<float>* dot = nullptr;
    const JointScorer<float>* joint = nullptr;
    const ResponseSet* responses = nullptr;
    const std::vector<FeatureBag>* response_bags = nullptr;
    const HqIndex* index = nullptr;
    std::uint64_t response_set_hash = 0;  // for index staleness checks
    float alpha = 0.0f;
    int retrieve_m = 100;  // single_pass candidate width
    bool rerank = true;
};

// Input-side feature bags for a query under a model with M features.
std::vector<FeatureBag> featurize_query(const std::string& body, const std::string& subject,
                                        const NGramVocabulary& vocab, int num_features);

// Exhaustive dot-product ranking: score_dot over every row in id order plus
// the bias term, top n by (score desc, id asc). Shared by the two-pass first
// stage and by oracle checks against single-pass search.
std::vector<Scored<float>> rank_by_dot(const ResponseSet& rs, const Vecf& h_x, float alpha,
                                       std::size_t n_top);

SuggestResult suggest_exhaustive(const SuggestRequest& req, const ServeContext& ctx);
SuggestResult suggest_two_pass(const SuggestRequest& req, const ServeContext& ctx);
SuggestResult suggest_single_pass(const SuggestRequest& req, const ServeContext& ctx);

// Dispatch on req.mode.
SuggestResult suggest(const SuggestRequest& req, const ServeContext& ctx);

}  // namespace reply
