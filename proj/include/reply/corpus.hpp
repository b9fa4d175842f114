#pragma once

#include "reply/text.hpp"
#include "reply/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace reply {

struct MessagePair {
    std::string body;
    std::string subject;  // may be empty
    std::string response;
};

// JSON-lines corpus: one object per line with fields body (required),
// subject (optional), response (required).
std::vector<MessagePair> load_jsonl(const std::string& path);
void save_jsonl(const std::vector<MessagePair>& pairs, const std::string& path);

// Seeded topic-clustered generator. Every topic owns disjoint message and
// response word sets; pairs mix topic words with shared filler words, and
// message/response share a few "entity" words so responses within one topic
// stay distinguishable.
struct SyntheticConfig {
    int num_pairs = 20000;
    int num_topics = 50;
    int words_per_topic = 30;   // per side
    int filler_words = 200;
    int entity_words = 1200;
    int min_body_words = 8, max_body_words = 15;
    int min_response_words = 5, max_response_words = 10;
    int min_entities = 2, max_entities = 3;
    int topical_percent = 70;  // remaining draws come from the filler pool
    bool with_subject = false;
};

std::vector<MessagePair> synthetic_pairs(const SyntheticConfig& cfg, std::uint64_t seed);

struct FeaturizeOptions {
    int num_features = 1;       // 1: body only; 2: body + subject
    bool strip_quotes = true;   // drop quoted reply lines from the body
};

// Input-side bags (body [, subject]) plus the response bag.
FeaturizedPair featurize_pair(const MessagePair& pair, const NGramVocabulary& vocab,
                              const FeaturizeOptions& opts);
std::vector<FeaturizedPair> featurize_pairs(const std::vector<MessagePair>& pairs,
                                            const NGramVocabulary& vocab,
                                            const FeaturizeOptions& opts);

// Distinct response strings in first-seen order (the candidate set R).
std::vector<std::string> unique_responses(const std::vector<MessagePair>& pairs);

// Raw text fields used for vocabulary building, in corpus order.
std::vector<std::string> vocabulary_texts(const std::vector<MessagePair>& pairs,
                                          const FeaturizeOptions& opts);

}  // namespace reply
