#pragma once

#include "reply/types.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace reply {

// Add-k smoothed bigram language model over response texts. The word
// vocabulary is independent of the n-gram vocabulary. Contexts are the start
// marker, every vocabulary word, and an unknown class; outcomes are every
// vocabulary word, the end marker, and the unknown class, so each
// conditional distribution has V + 2 outcomes and sums to one exactly.
class BigramLm {
  public:
    BigramLm() = default;
    BigramLm(std::vector<std::string> words, double k);

    // Distinguished outcome/context ids beyond the word range [0, V).
    std::uint32_t num_words() const { return static_cast<std::uint32_t>(words_.size()); }
    std::uint32_t end_id() const { return num_words(); }       // </s> (outcome only)
    std::uint32_t start_id() const { return num_words(); }     // <s> (context only)
    std::uint32_t unk_id() const { return num_words() + 1; }
    std::uint32_t num_outcomes() const { return num_words() + 2; }

    double smoothing_k() const { return k_; }
    const std::vector<std::string>& words() const { return words_; }

    // Word id, or unk for out-of-vocabulary words.
    std::uint32_t word_or_unk(const std::string& w) const;

    void add_transition(std::uint32_t context, std::uint32_t outcome, std::uint64_t count);
    std::uint64_t transition_count(std::uint32_t context, std::uint32_t outcome) const;
    std::uint64_t context_total(std::uint32_t context) const { return context_totals_[context]; }

    // log P(outcome | context) = log (c + k) / (total + k (V + 2)).
    double log_prob(std::uint32_t context, std::uint32_t outcome) const;

    // Sum of log-probs over the token sequence including boundary
    // transitions; the empty sequence scores log P(</s> | <s>).
    double sequence_logprob(const std::vector<std::string>& tokens) const;

  private:
    double k_ = 0.0;
    std::vector<std::string> words_;  // sorted, distinct
    std::unordered_map<std::string, std::uint32_t> word_ids_;
    std::vector<std::uint64_t> context_totals_;           // V + 2 contexts
    std::unordered_map<std::uint64_t, std::uint64_t> bigrams_;  // ctx * (V+2) + outcome
};

// Tokenizes every response, collects the word vocabulary, and counts all
// transitions including <s> and </s>.
BigramLm train_lm(const std::vector<std::string>& responses, double k);

// log P_LM(y) of a raw response string (tokenized internally).
double lm_logprob(const std::string& y, const BigramLm& lm);

// Eq.-style final score: S_f = S_m + alpha * log P_LM(y).
inline double final_score(double s_m, double logp, double alpha) {
    return s_m + alpha * logp;
}

// Folds the bias into the dot product by appending alpha to the query vector
// and log P_LM(y) to the response vector.
template <class S>
Vec<S> extend_query(const Vec<S>& h_x, S alpha) {
    Vec<S> out(h_x.size() + 1);
    out.head(h_x.size()) = h_x;
    out(h_x.size()) = alpha;
    return out;
}

template <class S>
Vec<S> extend_response(const Vec<S>& h_y, S logp) {
    Vec<S> out(h_y.size() + 1);
    out.head(h_y.size()) = h_y;
    out(h_y.size()) = logp;
    return out;
}

}  // namespace reply
