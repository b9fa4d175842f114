#include "reply/text.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <stdexcept>

namespace reply {

namespace {

constexpr char kNGramSep = '\x1f';

bool is_ws(unsigned char c) { return c <= 0x20; }  // blanks and control bytes
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_word_char(unsigned char c) {
    return std::isalnum(c) || c >= 0x80;  // keep UTF-8 continuation bytes glued
}

char lower(unsigned char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

// scheme://rest with an alphabetic scheme, or a www. prefix.
bool looks_like_url(std::string_view t) {
    if (t.size() > 4 && (t.substr(0, 4) == "www." || t.substr(0, 4) == "WWW.")) return true;
    std::size_t i = 0;
    while (i < t.size() && (std::isalnum(static_cast<unsigned char>(t[i])) ||
                            t[i] == '+' || t[i] == '.' || t[i] == '-')) {
        ++i;
    }
    return i > 0 && std::isalpha(static_cast<unsigned char>(t[0])) &&
           t.substr(i).size() >= 3 && t.substr(i, 3) == "://";
}

// something@domain.tld, single '@'.
bool looks_like_email(std::string_view t) {
    const auto at = t.find('@');
    if (at == std::string_view::npos || at == 0 || at + 1 >= t.size()) return false;
    if (t.find('@', at + 1) != std::string_view::npos) return false;
    const auto dom = t.substr(at + 1);
    const auto dot = dom.rfind('.');
    return dot != std::string_view::npos && dot > 0 && dot + 1 < dom.size();
}

// 7+ digits once common phone separators are stripped.
bool looks_like_phone(std::string_view t) {
    std::size_t digits = 0;
    for (unsigned char c : t) {
        if (is_digit(c)) {
            ++digits;
        } else if (c != '+' && c != '-' && c != '(' && c != ')' && c != '.' && c != '/') {
            return false;
        }
    }
    return digits >= 7;
}

// Digits with optional grouping/decimal marks: 42, 3.14, 1,000.
bool looks_like_number(std::string_view t) {
    if (t.empty() || !is_digit(t.front()) || !is_digit(t.back())) return false;
    for (unsigned char c : t) {
        if (!is_digit(c) && c != '.' && c != ',') return false;
    }
    return true;
}

// Classification of a whitespace-delimited raw token, before punctuation
// splitting. Order matters: a URL may contain digits and '@'.
const char* classify_raw(std::string_view t) {
    if (looks_like_url(t)) return kUrlToken;
    if (looks_like_email(t)) return kEmailToken;
    if (looks_like_number(t)) return looks_like_phone(t) ? kPhoneToken : kNumToken;
    if (looks_like_phone(t)) return kPhoneToken;
    return nullptr;
}

void emit_chunk(std::string&& chunk, std::vector<std::string>& out) {
    if (chunk.empty()) return;
    bool all_digits = std::all_of(chunk.begin(), chunk.end(),
                                  [](unsigned char c) { return is_digit(c); });
    if (all_digits) {
        out.emplace_back(chunk.size() >= 7 ? kPhoneToken : kNumToken);
    } else {
        out.emplace_back(std::move(chunk));
    }
    chunk.clear();
}

void split_token(std::string_view raw, std::vector<std::string>& out) {
    std::string chunk;
    for (unsigned char c : raw) {
        if (is_word_char(c)) {
            chunk.push_back(lower(c));
        } else {
            emit_chunk(std::move(chunk), out);
            out.emplace_back(1, static_cast<char>(c));  // punctuation mark
        }
    }
    emit_chunk(std::move(chunk), out);
}

}  // namespace

bool is_special_token(std::string_view tok) {
    return tok == kUrlToken || tok == kEmailToken || tok == kPhoneToken || tok == kNumToken;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_ws(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !is_ws(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) {
            const std::string_view raw = text.substr(i, j - i);
            if (const char* special = classify_raw(raw)) {
                out.emplace_back(special);
            } else {
                split_token(raw, out);
            }
        }
        i = j;
    }
    return out;
}

std::string strip_quoted(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto eol = text.find('\n', pos);
        const auto line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                         : eol - pos);
        std::size_t k = 0;
        while (k < line.size() && (line[k] == ' ' || line[k] == '\t')) ++k;
        const bool quoted = k < line.size() && line[k] == '>';
        bool attribution = false;
        if (line.substr(k, 3) == "On ") {
            auto trimmed = line.substr(k);
            while (!trimmed.empty() && is_ws(static_cast<unsigned char>(trimmed.back())))
                trimmed.remove_suffix(1);
            attribution = trimmed.size() >= 6 && trimmed.substr(trimmed.size() - 6) == "wrote:";
        }
        if (!quoted && !attribution) {
            out.append(line);
            if (eol != std::string_view::npos) out.push_back('\n');
        }
        if (eol == std::string_view::npos) break;
        pos = eol + 1;
    }
    return out;
}

std::vector<std::string> extract_ngrams(const std::vector<std::string>& tokens, int max_n) {
    if (max_n < 1) throw std::invalid_argument("extract_ngrams: max_n must be >= 1");
    std::vector<std::string> out;
    const int n_tokens = static_cast<int>(tokens.size());
    for (int n = 1; n <= max_n; ++n) {
        for (int start = 0; start + n <= n_tokens; ++start) {
            std::string g = tokens[start];
            for (int k = 1; k < n; ++k) {
                g.push_back(kNGramSep);
                g.append(tokens[start + k]);
            }
            out.push_back(std::move(g));
        }
    }
    return out;
}

NGramVocabulary::NGramVocabulary(std::vector<std::pair<std::string, std::uint64_t>> ranked,
                                 int max_n, std::size_t size_cap)
    : max_n_(max_n), size_cap_(size_cap) {
    ngrams_.reserve(ranked.size());
    counts_.reserve(ranked.size());
    for (auto& [gram, cnt] : ranked) {
        const auto id = static_cast<NGramId>(ngrams_.size());
        ids_.emplace(gram, id);
        ngrams_.push_back(std::move(gram));
        counts_.push_back(cnt);
    }
}

std::optional<NGramId> NGramVocabulary::lookup(std::string_view ngram) const {
    const auto it = ids_.find(std::string(ngram));
    return it == ids_.end() ? std::nullopt : std::optional<NGramId>(it->second);
}

NGramVocabulary build_vocabulary(const std::vector<std::string>& corpus, int max_n,
                                 std::size_t size_cap, std::uint64_t min_count) {
    if (size_cap < 1) throw std::invalid_argument("build_vocabulary: size_cap must be >= 1");
    if (min_count < 1) throw std::invalid_argument("build_vocabulary: min_count must be >= 1");
    std::unordered_map<std::string, std::uint64_t> freq;
    for (const auto& text : corpus) {
        for (auto& g : extract_ngrams(tokenize(text), max_n)) {
            ++freq[std::move(g)];
        }
    }
    std::vector<std::pair<std::string, std::uint64_t>> ranked;
    ranked.reserve(freq.size());
    for (auto& [gram, cnt] : freq) {
        if (cnt >= min_count) ranked.emplace_back(gram, cnt);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > size_cap) ranked.resize(size_cap);
    return NGramVocabulary(std::move(ranked), max_n, size_cap);
}

FeatureBag bag_from_ngrams(const std::vector<std::string>& ngrams,
                           const NGramVocabulary& vocab) {
    std::map<NGramId, std::uint32_t> counts;
    for (const auto& g : ngrams) {
        if (auto id = vocab.lookup(g)) ++counts[*id];
    }
    FeatureBag bag;
    bag.items.assign(counts.begin(), counts.end());
    return bag;
}

FeatureBag featurize(std::string_view text, const NGramVocabulary& vocab) {
    return bag_from_ngrams(extract_ngrams(tokenize(text), vocab.max_n()), vocab);
}

}  // namespace reply
