#pragma once

#include "reply/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace reply {

// Special tokens substituted during tokenization.
inline constexpr const char* kUrlToken = "<url>";
inline constexpr const char* kEmailToken = "<email>";
inline constexpr const char* kPhoneToken = "<phone>";
inline constexpr const char* kNumToken = "<num>";

bool is_special_token(std::string_view tok);

// Lowercased tokens split on whitespace and punctuation boundaries.
// Punctuation marks come out as single-character tokens; URLs, email
// addresses, phone numbers (a run of 7+ digits, separators allowed) and
// pure numbers are replaced by the special tokens above. Bytes >= 0x80 are
// treated as letters so UTF-8 sequences stay intact.
std::vector<std::string> tokenize(std::string_view text);

// Drops quoted reply/forward lines: lines whose first non-blank character
// is '>' and lines of the form "On ... wrote:".
std::string strip_quoted(std::string_view text);

// All contiguous n-grams of order 1..max_n, multiplicities preserved.
// Tokens inside an n-gram are joined with 0x1f, which tokenize() never
// emits inside a token.
std::vector<std::string> extract_ngrams(const std::vector<std::string>& tokens, int max_n);

// Frequency-ranked n-gram vocabulary with dense 0-based ids. Entries are
// ordered by corpus frequency (descending, ties lexicographic), so id 0 is
// always the most frequent n-gram.
class NGramVocabulary {
public:
    NGramVocabulary() = default;
    NGramVocabulary(std::vector<std::pair<std::string, std::uint64_t>> ranked_entries,
                    int max_n, std::size_t size_cap);

    std::size_t size() const { return counts_.size(); }
    int max_n() const { return max_n_; }
    std::size_t size_cap() const { return size_cap_; }

    std::optional<NGramId> lookup(std::string_view ngram) const;
    std::uint64_t count(NGramId id) const { return counts_[id]; }
    const std::string& ngram(NGramId id) const { return ngrams_[id]; }

private:
    std::unordered_map<std::string, NGramId> ids_;
    std::vector<std::string> ngrams_;       // id -> n-gram
    std::vector<std::uint64_t> counts_;     // id -> corpus frequency
    int max_n_ = 0;
    std::size_t size_cap_ = 0;
};

// Counts all n-grams over the corpus, drops those below min_count, keeps
// the size_cap most frequent (ties broken lexicographically). Deterministic
// for a given corpus, independent of its order.
NGramVocabulary build_vocabulary(const std::vector<std::string>& corpus, int max_n,
                                 std::size_t size_cap, std::uint64_t min_count);

// Bag of in-vocabulary n-gram counts; out-of-vocabulary n-grams are dropped.
FeatureBag featurize(std::string_view text, const NGramVocabulary& vocab);

FeatureBag bag_from_ngrams(const std::vector<std::string>& ngrams,
                           const NGramVocabulary& vocab);

}  // namespace reply
