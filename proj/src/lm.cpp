#include "reply/lm.hpp"

#include "reply/text.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace reply {

BigramLm::BigramLm(std::vector<std::string> words, double k) : k_(k), words_(std::move(words)) {
    if (k <= 0.0) throw std::invalid_argument("BigramLm: smoothing k must be > 0");
    word_ids_.reserve(words_.size());
    for (std::uint32_t i = 0; i < words_.size(); ++i) word_ids_.emplace(words_[i], i);
    context_totals_.assign(num_words() + 2, 0);
}

std::uint32_t BigramLm::word_or_unk(const std::string& w) const {
    auto it = word_ids_.find(w);
    return it == word_ids_.end() ? unk_id() : it->second;
}

void BigramLm::add_transition(std::uint32_t context, std::uint32_t outcome, std::uint64_t count) {
    bigrams_[static_cast<std::uint64_t>(context) * num_outcomes() + outcome] += count;
    context_totals_[context] += count;
}

std::uint64_t BigramLm::transition_count(std::uint32_t context, std::uint32_t outcome) const {
    auto it = bigrams_.find(static_cast<std::uint64_t>(context) * num_outcomes() + outcome);
    return it == bigrams_.end() ? 0 : it->second;
}

double BigramLm::log_prob(std::uint32_t context, std::uint32_t outcome) const {
    const double c = static_cast<double>(transition_count(context, outcome));
    const double total = static_cast<double>(context_totals_[context]);
    return std::log(c + k_) - std::log(total + k_ * num_outcomes());
}

double BigramLm::sequence_logprob(const std::vector<std::string>& tokens) const {
    std::uint32_t context = start_id();
    double total = 0.0;
    for (const auto& t : tokens) {
        const std::uint32_t id = word_or_unk(t);
        total += log_prob(context, id);
        // An unknown outcome becomes the unknown context for the next step.
        context = id == unk_id() ? unk_id() : id;
    }
    return total + log_prob(context, end_id());
}

BigramLm train_lm(const std::vector<std::string>& responses, double k) {
    if (responses.empty()) throw std::invalid_argument("train_lm: empty corpus");
    std::vector<std::vector<std::string>> sentences;
    sentences.reserve(responses.size());
    std::set<std::string> vocab;
    for (const auto& r : responses) {
        sentences.push_back(tokenize(r));
        for (const auto& t : sentences.back()) vocab.insert(t);
    }
    BigramLm lm(std::vector<std::string>(vocab.begin(), vocab.end()), k);
    for (const auto& s : sentences) {
        std::uint32_t context = lm.start_id();
        for (const auto& t : s) {
            const std::uint32_t id = lm.word_or_unk(t);
            lm.add_transition(context, id, 1);
            context = id;
        }
        lm.add_transition(context, lm.end_id(), 1);
    }
    return lm;
}

double lm_logprob(const std::string& y, const BigramLm& lm) {
    return lm.sequence_logprob(tokenize(y));
}

}  // namespace reply
