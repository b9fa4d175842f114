#include "reply/text.hpp"

#include "reply/random.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <string>
#include <vector>

using namespace reply;

namespace {

std::vector<std::string> toks(std::initializer_list<const char*> list) {
    return {list.begin(), list.end()};
}

std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

// Brute-force frequency oracle for vocabulary building: count, filter,
// sort by (count desc, ngram asc), cap.
std::vector<std::pair<std::string, std::uint64_t>> vocab_oracle(
        const std::vector<std::string>& corpus, int max_n, std::size_t cap,
        std::uint64_t min_count) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& text : corpus)
        for (const auto& g : extract_ngrams(tokenize(text), max_n)) counts[g] += 1;
    std::vector<std::pair<std::string, std::uint64_t>> entries;
    for (const auto& [g, c] : counts)
        if (c >= min_count) entries.emplace_back(g, c);
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (entries.size() > cap) entries.resize(cap);
    return entries;
}

std::string random_text(Rng& rng) {
    static const std::vector<std::string> words = {
            "send", "the", "report",  "today", "thanks", "a",    "lot",   "can",
            "you",  "me",  "http://x.co", "bob@x.co",  "12345678", "42", "!", "?"};
    std::string out;
    const int n = 1 + static_cast<int>(rng.below(12));
    for (int i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += words[rng.below(words.size())];
    }
    return out;
}

}  // namespace

TEST_CASE("tokenize lowercases and splits off punctuation") {
    CHECK(tokenize("Did you manage to print the document?") ==
          toks({"did", "you", "manage", "to", "print", "the", "document", "?"}));
}

TEST_CASE("tokenize of empty input is empty") {
    CHECK(tokenize("").empty());
    CHECK(tokenize("   \n\t ").empty());
}

TEST_CASE("tokenize substitutes special tokens") {
    CHECK(tokenize("visit http://x.co now") == toks({"visit", "<url>", "now"}));
    CHECK(tokenize("mail bob@example.com today") == toks({"mail", "<email>", "today"}));
    CHECK(tokenize("call 555-123-4567 now") == toks({"call", "<phone>", "now"}));
    CHECK(tokenize("see page 42") == toks({"see", "page", "<num>"}));
}

TEST_CASE("tokenize is idempotent on its own output") {
    // Re-tokenizing the space-joined output must not split anything further
    // (special tokens excluded: they would be re-substituted).
    for (const char* text : {"Hello there, how are you?", "Great -- see you at 5pm!",
                             "multi\nline\ttext  here."}) {
        const auto first = tokenize(text);
        std::vector<std::string> no_special;
        for (const auto& t : first)
            if (!is_special_token(t)) no_special.push_back(t);
        CHECK(tokenize(join(no_special)) == no_special);
    }
}

TEST_CASE("strip_quoted drops quoted reply lines") {
    const std::string body = "Sure, sounds good.\n> earlier message\nOn Monday, Bob wrote:\n"
                             "see you then";
    const auto cleaned = strip_quoted(body);
    CHECK(cleaned.find("earlier") == std::string::npos);
    CHECK(cleaned.find("wrote:") == std::string::npos);
    CHECK(cleaned.find("Sure, sounds good.") != std::string::npos);
    CHECK(cleaned.find("see you then") != std::string::npos);
}

TEST_CASE("extract_ngrams enumerates all orders up to max_n") {
    auto grams = extract_ngrams(toks({"a", "b", "c"}), 2);
    std::sort(grams.begin(), grams.end());
    const std::string sep(1, '\x1f');
    std::vector<std::string> want = {"a", "a" + sep + "b", "b", "b" + sep + "c", "c"};
    std::sort(want.begin(), want.end());
    CHECK(grams == want);

    CHECK(extract_ngrams(toks({"a"}), 2) == std::vector<std::string>{"a"});
    CHECK(extract_ngrams({}, 3).empty());
}

TEST_CASE("extract_ngrams preserves multiplicities") {
    const auto grams = extract_ngrams(toks({"a", "a", "a"}), 2);
    CHECK(std::count(grams.begin(), grams.end(), "a") == 3);
    const std::string bigram = std::string("a") + '\x1f' + "a";
    CHECK(std::count(grams.begin(), grams.end(), bigram) == 2);
}

TEST_CASE("build_vocabulary keeps the most frequent entries") {
    const auto v = build_vocabulary({"a a b"}, 1, 1, 1);
    REQUIRE(v.size() == 1);
    REQUIRE(v.lookup("a").has_value());
    CHECK(*v.lookup("a") == 0);
    CHECK(v.count(0) == 2);
    CHECK_FALSE(v.lookup("b").has_value());
}

TEST_CASE("build_vocabulary applies the min-count threshold") {
    const auto v = build_vocabulary({"a b"}, 2, 10, 2);
    CHECK(v.size() == 0);
}

TEST_CASE("build_vocabulary matches the count-and-sort oracle") {
    Rng rng(7);
    std::vector<std::string> corpus;
    for (int i = 0; i < 1000; ++i) corpus.push_back(random_text(rng));

    const std::size_t cap = 500;
    const auto v = build_vocabulary(corpus, 2, cap, 1);
    const auto want = vocab_oracle(corpus, 2, cap, 1);
    REQUIRE(v.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        REQUIRE(v.lookup(want[i].first).has_value());
        CHECK(*v.lookup(want[i].first) == static_cast<NGramId>(i));
        CHECK(v.count(static_cast<NGramId>(i)) == want[i].second);
    }
}

TEST_CASE("build_vocabulary is deterministic") {
    Rng rng(11);
    std::vector<std::string> corpus;
    for (int i = 0; i < 200; ++i) corpus.push_back(random_text(rng));
    const auto a = build_vocabulary(corpus, 2, 100, 1);
    const auto b = build_vocabulary(corpus, 2, 100, 1);
    REQUIRE(a.size() == b.size());
    for (NGramId id = 0; id < a.size(); ++id) {
        CHECK(a.ngram(id) == b.ngram(id));
        CHECK(a.count(id) == b.count(id));
    }
}

TEST_CASE("featurize counts in-vocabulary n-grams only") {
    const auto v = build_vocabulary({"a a"}, 1, 10, 1);
    const auto bag = featurize("a a", v);
    REQUIRE(bag.items.size() == 1);
    CHECK(bag.items[0].first == *v.lookup("a"));
    CHECK(bag.items[0].second == 2);

    CHECK(featurize("x y z", v).empty());
}

TEST_CASE("featurize equals filtered extract_ngrams for random texts") {
    Rng rng(3);
    std::vector<std::string> corpus;
    for (int i = 0; i < 300; ++i) corpus.push_back(random_text(rng));
    const auto v = build_vocabulary(corpus, 2, 200, 2);

    for (int trial = 0; trial < 50; ++trial) {
        const std::string text = random_text(rng);
        const auto bag = featurize(text, v);

        std::map<NGramId, std::uint32_t> want;
        for (const auto& g : extract_ngrams(tokenize(text), v.max_n())) {
            if (const auto id = v.lookup(g)) want[*id] += 1;
        }
        REQUIRE(bag.items.size() == want.size());
        for (const auto& [id, count] : bag.items) {
            REQUIRE(want.count(id) == 1);
            CHECK(want[id] == count);
        }
        // Items sorted ascending by id, unique.
        CHECK(std::is_sorted(bag.items.begin(), bag.items.end(),
                             [](const auto& a, const auto& b) { return a.first < b.first; }));
    }
}
