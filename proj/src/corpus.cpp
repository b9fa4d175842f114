#include "reply/corpus.hpp"

#include "reply/random.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>
#include <unordered_set>

namespace reply {

using nlohmann::json;

std::vector<MessagePair> load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus: " + path);
    std::vector<MessagePair> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad JSON: " +
                                     e.what());
        }
        MessagePair p;
        if (!j.contains("body") || !j.contains("response"))
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": missing body or response");
        p.body = j.at("body").get<std::string>();
        p.response = j.at("response").get<std::string>();
        if (j.contains("subject")) p.subject = j.at("subject").get<std::string>();
        pairs.push_back(std::move(p));
    }
    return pairs;
}

void save_jsonl(const std::vector<MessagePair>& pairs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write corpus: " + path);
    for (const auto& p : pairs) {
        json j;
        j["body"] = p.body;
        if (!p.subject.empty()) j["subject"] = p.subject;
        j["response"] = p.response;
        out << j.dump() << '\n';
    }
}

namespace {

std::vector<std::string> make_words(const std::string& prefix, int count) {
    std::vector<std::string> words(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) words[static_cast<std::size_t>(i)] = prefix + std::to_string(i);
    return words;
}

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i > 0) out += ' ';
        out += words[i];
    }
    return out;
}

}  // namespace

std::vector<MessagePair> synthetic_pairs(const SyntheticConfig& cfg, std::uint64_t seed) {
    if (cfg.num_pairs < 1 || cfg.num_topics < 1)
        throw std::invalid_argument("synthetic_pairs: bad configuration");
    Rng rng(seed);
    std::vector<std::vector<std::string>> topic_msg, topic_resp;
    for (int t = 0; t < cfg.num_topics; ++t) {
        topic_msg.push_back(make_words("qq" + std::to_string(t) + "w", cfg.words_per_topic));
        topic_resp.push_back(make_words("rr" + std::to_string(t) + "w", cfg.words_per_topic));
    }
    const auto filler = make_words("ff", cfg.filler_words);
    const auto entities = make_words("ee", cfg.entity_words);

    auto draw_words = [&](const std::vector<std::string>& topical, int lo, int hi) {
        const int n = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
        std::vector<std::string> words(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) {
            const bool from_topic = rng.below(100) < static_cast<std::uint64_t>(cfg.topical_percent);
            const auto& pool = from_topic ? topical : filler;
            words[static_cast<std::size_t>(j)] =
                    pool[static_cast<std::size_t>(rng.below(pool.size()))];
        }
        return words;
    };
    auto insert_at_random = [&](std::vector<std::string>& words, const std::string& w) {
        const auto pos = static_cast<std::ptrdiff_t>(rng.below(words.size() + 1));
        words.insert(words.begin() + pos, w);
    };

    std::vector<MessagePair> pairs;
    pairs.reserve(static_cast<std::size_t>(cfg.num_pairs));
    for (int i = 0; i < cfg.num_pairs; ++i) {
        const auto t = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(cfg.num_topics)));
        auto body = draw_words(topic_msg[t], cfg.min_body_words, cfg.max_body_words);
        auto resp = draw_words(topic_resp[t], cfg.min_response_words, cfg.max_response_words);
        const int ne = cfg.min_entities +
                       static_cast<int>(rng.below(
                               static_cast<std::uint64_t>(cfg.max_entities - cfg.min_entities + 1)));
        for (int e = 0; e < ne; ++e) {
            const auto& word = entities[static_cast<std::size_t>(rng.below(entities.size()))];
            insert_at_random(body, word);
            insert_at_random(resp, word);
        }
        MessagePair p;
        p.body = join_words(body);
        p.response = join_words(resp);
        if (cfg.with_subject) {
            std::vector<std::string> subj = {
                    topic_msg[t][static_cast<std::size_t>(rng.below(topic_msg[t].size()))],
                    topic_msg[t][static_cast<std::size_t>(rng.below(topic_msg[t].size()))]};
            p.subject = join_words(subj);
        }
        pairs.push_back(std::move(p));
    }
    return pairs;
}

FeaturizedPair featurize_pair(const MessagePair& pair, const NGramVocabulary& vocab,
                              const FeaturizeOptions& opts) {
    if (opts.num_features < 1 || opts.num_features > 2)
        throw std::invalid_argument("featurize_pair: num_features must be 1 or 2");
    FeaturizedPair out;
    const std::string body = opts.strip_quotes ? strip_quoted(pair.body) : pair.body;
    out.x.push_back(featurize(body, vocab));
    if (opts.num_features == 2) out.x.push_back(featurize(pair.subject, vocab));
    out.y = featurize(pair.response, vocab);
    return out;
}

std::vector<FeaturizedPair> featurize_pairs(const std::vector<MessagePair>& pairs,
                                            const NGramVocabulary& vocab,
                                            const FeaturizeOptions& opts) {
    std::vector<FeaturizedPair> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(featurize_pair(p, vocab, opts));
    return out;
}

std::vector<std::string> unique_responses(const std::vector<MessagePair>& pairs) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& p : pairs)
        if (seen.insert(p.response).second) out.push_back(p.response);
    return out;
}

std::vector<std::string> vocabulary_texts(const std::vector<MessagePair>& pairs,
                                          const FeaturizeOptions& opts) {
    std::vector<std::string> texts;
    texts.reserve(pairs.size() * 2);
    for (const auto& p : pairs) {
        texts.push_back(opts.strip_quotes ? strip_quoted(p.body) : p.body);
        if (opts.num_features == 2 && !p.subject.empty()) texts.push_back(p.subject);
        texts.push_back(p.response);
    }
    return texts;
}

}  // namespace reply
