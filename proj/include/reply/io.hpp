#pragma once

#include "reply/encoder.hpp"
#include "reply/hq.hpp"
#include "reply/lm.hpp"
#include "reply/serve.hpp"
#include "reply/text.hpp"
#include "reply/train.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace reply {

// 64-bit FNV-1a content hashes; artifacts reference each other by these.
std::uint64_t fnv1a(const void* data, std::size_t len);
std::uint64_t fnv1a(const std::string& s);
std::uint64_t hash_file(const std::string& path);
std::string hash_hex(std::uint64_t h);

// --- Vocabulary: text, "#vocab v1 max_n=<n>" then ngram<TAB>id<TAB>count.
void save_vocabulary(const NGramVocabulary& vocab, const std::string& path);
NGramVocabulary load_vocabulary(const std::string& path);

// --- Models: binary little-endian, magic "SRDE". The header records the
// model kind, feature count, dimensions, layer sizes, and the content hash
// of the vocabulary the model was trained against; all parameter arrays
// follow as IEEE-754 single precision.
void save_dot_model(const DotEncoder<float>& model, std::uint64_t vocab_hash,
                    const std::string& path);
void save_joint_model(const JointScorer<float>& model, std::uint64_t vocab_hash,
                      const std::string& path);

struct LoadedModel {
    ModelKind kind = ModelKind::dot_product;
    DotEncoder<float> dot;
    JointScorer<float> joint;
    std::uint64_t vocab_hash = 0;
};
LoadedModel load_model(const std::string& path);

// --- Language model: text, header "#lm v1 k=<k> vocab=<V>" and the
// unigram/bigram count sections.
void save_lm(const BigramLm& lm, const std::string& path);
BigramLm load_lm(const std::string& path);

// --- Response set: binary, magic "SRRS" (strings, encodings, LM log-probs,
// upstream hashes).
void save_response_set(const ResponseSet& rs, const std::string& path);
ResponseSet load_response_set(const std::string& path);

// --- HQ index: binary, magic "SRHQ".
void save_index(const HqIndex& index, const std::string& path);
HqIndex load_index(const std::string& path);

// --- key=value config file ('#' starts a comment; blank lines ignored).
std::map<std::string, std::string> load_config(const std::string& path);

// --- CSV emitters.
void write_loss_csv(const std::vector<LossReport>& curve, const std::string& path);

struct BenchPoint {
    int retrieve_m = 0;
    double recall_at_30 = 0.0;
    double speedup = 0.0;
    double qps = 0.0;
};
void write_bench_csv(const std::vector<BenchPoint>& points, const std::string& path);

struct AblationRow {
    std::string model;
    std::string loss;
    int k = 0;
    std::uint64_t seed = 0;
    double p_at_1 = 0.0;
};
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

}  // namespace reply
