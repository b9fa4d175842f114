// Tests for artifact serialization: hashes, round trips, config parsing,
// CSV emitters, and the manifest's staleness checks.
#include <doctest.h>

#include "reply/io.hpp"
#include "reply/manifest.hpp"
#include "reply/random.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace reply;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "reply_io_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string scratch(const std::string& name) { return (scratch_dir() / name).string(); }

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << content;
}

std::vector<float> flatten(DotEncoder<float>& m) {
    std::vector<float> v;
    for_each_param(m, [&](auto& p) {
        for (Eigen::Index i = 0; i < p.size(); ++i) v.push_back(*(p.data() + i));
    });
    return v;
}

std::vector<float> flatten(JointScorer<float>& m) {
    std::vector<float> v;
    for_each_param(m, [&](auto& p) {
        for (Eigen::Index i = 0; i < p.size(); ++i) v.push_back(*(p.data() + i));
    });
    return v;
}

}  // namespace

TEST_CASE("fnv1a: reference vectors and file hashing") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("hello") == fnv1a("hello"));
    CHECK(fnv1a("hello") != fnv1a("hellp"));

    CHECK(hash_hex(0xcbf29ce484222325ULL) == "cbf29ce484222325");
    CHECK(hash_hex(0x1ULL) == "0000000000000001");

    const std::string p = scratch("hash.bin");
    spit(p, "a");
    CHECK(hash_file(p) == fnv1a("a"));
    CHECK_THROWS_AS(hash_file(scratch("missing.bin")), std::runtime_error);
}

TEST_CASE("vocabulary: round trip preserves entries, ids, counts") {
    const std::vector<std::string> corpus = {"did you manage to print the document ?",
                                             "yes i did print it",
                                             "no i did not", "print the document"};
    const NGramVocabulary vocab = build_vocabulary(corpus, 2, 100, 1);
    REQUIRE(vocab.size() > 0);

    const std::string p = scratch("vocab.txt");
    save_vocabulary(vocab, p);
    const NGramVocabulary loaded = load_vocabulary(p);

    REQUIRE(loaded.size() == vocab.size());
    CHECK(loaded.max_n() == vocab.max_n());
    for (NGramId id = 0; id < vocab.size(); ++id) {
        CHECK(loaded.ngram(id) == vocab.ngram(id));
        CHECK(loaded.count(id) == vocab.count(id));
        CHECK(loaded.lookup(vocab.ngram(id)) == id);
    }

    // Saving is deterministic byte-for-byte.
    const std::string p2 = scratch("vocab2.txt");
    save_vocabulary(vocab, p2);
    CHECK(slurp(p) == slurp(p2));

    CHECK_THROWS_AS(load_vocabulary(scratch("nope.txt")), std::runtime_error);
}

TEST_CASE("models: dot and joint round trips are bitwise") {
    Rng rng(71);
    EncoderConfig ec;
    ec.embedding_dim = 8;
    ec.num_features = 2;
    ec.feature_layers = {8, 8};
    ec.fusion_layers = {8};
    ec.final_layers = {8};

    auto dot = make_dot_encoder<float>(ec, 50, rng);
    const std::string pd = scratch("model_dot.bin");
    save_dot_model(dot, 0xfeedULL, pd);
    LoadedModel ld = load_model(pd);
    CHECK(ld.kind == ModelKind::dot_product);
    CHECK(ld.vocab_hash == 0xfeedULL);
    CHECK(ld.dot.num_features() == 2);
    CHECK(flatten(ld.dot) == flatten(dot));

    auto joint = make_joint_scorer<float>(ec, 50, rng);
    const std::string pj = scratch("model_joint.bin");
    save_joint_model(joint, 0xbeefULL, pj);
    LoadedModel lj = load_model(pj);
    CHECK(lj.kind == ModelKind::joint);
    CHECK(lj.vocab_hash == 0xbeefULL);
    CHECK(flatten(lj.joint) == flatten(joint));

    // Save twice -> identical bytes.
    const std::string pd2 = scratch("model_dot2.bin");
    save_dot_model(dot, 0xfeedULL, pd2);
    CHECK(slurp(pd) == slurp(pd2));

    spit(scratch("garbage.bin"), "not a model file at all");
    CHECK_THROWS_AS(load_model(scratch("garbage.bin")), std::runtime_error);
    CHECK_THROWS_AS(load_model(scratch("absent.bin")), std::runtime_error);
}

TEST_CASE("language model: round trip preserves every conditional") {
    const BigramLm lm = train_lm({"see you then", "see you soon", "ok see you"}, 0.3);
    const std::string p = scratch("lm.txt");
    save_lm(lm, p);
    const BigramLm loaded = load_lm(p);

    CHECK(loaded.smoothing_k() == lm.smoothing_k());
    REQUIRE(loaded.num_words() == lm.num_words());
    CHECK(loaded.words() == lm.words());
    for (std::uint32_t ctx = 0; ctx < lm.num_words() + 2; ++ctx)
        for (std::uint32_t o = 0; o < lm.num_outcomes(); ++o)
            CHECK(loaded.log_prob(ctx, o) == lm.log_prob(ctx, o));
}

TEST_CASE("response set: round trip is bitwise") {
    Rng rng(72);
    ResponseSet rs;
    rs.responses = {"sounds good", "see you monday", "i can't make it, sorry"};
    rs.encodings.resize(3, 6);
    for (Eigen::Index i = 0; i < rs.encodings.size(); ++i)
        *(rs.encodings.data() + i) = static_cast<float>(rng.gaussian());
    rs.lm_logprob.resize(3);
    rs.lm_logprob << -4.5f, -7.25f, -13.0f;
    rs.vocab_hash = 0x111ULL;
    rs.model_hash = 0x222ULL;
    rs.lm_hash = 0x333ULL;

    const std::string p = scratch("responses.bin");
    save_response_set(rs, p);
    const ResponseSet loaded = load_response_set(p);

    CHECK(loaded.responses == rs.responses);
    CHECK((loaded.encodings - rs.encodings).cwiseAbs().maxCoeff() == 0.0f);
    CHECK((loaded.lm_logprob - rs.lm_logprob).cwiseAbs().maxCoeff() == 0.0f);
    CHECK(loaded.vocab_hash == 0x111ULL);
    CHECK(loaded.model_hash == 0x222ULL);
    CHECK(loaded.lm_hash == 0x333ULL);
}

TEST_CASE("index: round trip with and without stored vectors") {
    Rng rng(73);
    Matf vectors(40, 8);
    for (Eigen::Index i = 0; i < vectors.size(); ++i)
        *(vectors.data() + i) = static_cast<float>(rng.gaussian());
    Vecf bias(40);
    for (int i = 0; i < 40; ++i) bias(i) = static_cast<float>(rng.uniform(-10.0, 0.0));

    HqConfig hc;
    hc.d = 8;
    hc.vq_size = 4;
    hc.num_subspaces = 2;
    hc.pq_size = 4;

    for (const bool store : {true, false}) {
        const HqIndex index = build_index(vectors, bias, hc, 4, store, 0xabcdULL);
        const std::string p = scratch(store ? "index_full.bin" : "index_codes.bin");
        save_index(index, p);
        const HqIndex loaded = load_index(p);

        CHECK(loaded.response_hash == 0xabcdULL);
        CHECK(loaded.codes.vq == index.codes.vq);
        CHECK(loaded.codes.pq == index.codes.pq);
        CHECK(loaded.codes.num_subspaces == index.codes.num_subspaces);
        CHECK((loaded.bias - index.bias).cwiseAbs().maxCoeff() == 0.0f);
        CHECK((loaded.books.vq - index.books.vq).cwiseAbs().maxCoeff() == 0.0f);
        CHECK((loaded.books.rotation - index.books.rotation).cwiseAbs().maxCoeff() == 0.0f);
        for (std::size_t k = 0; k < index.books.pq.size(); ++k)
            CHECK((loaded.books.pq[k] - index.books.pq[k]).cwiseAbs().maxCoeff() == 0.0f);
        if (store) {
            REQUIRE(loaded.vectors.rows() == 40);
            CHECK((loaded.vectors - index.vectors).cwiseAbs().maxCoeff() == 0.0f);
        } else {
            CHECK(loaded.vectors.size() == 0);
        }
    }
}

TEST_CASE("load_config: comments, blanks, whitespace, and malformed lines") {
    const std::string p = scratch("cfg.conf");
    spit(p,
         "# training parameters\n"
         "\n"
         "  k = 32   # batch size\n"
         "lr=0.01\n"
         "dims = 64,64\n"
         "\t\n");
    const auto cfg = load_config(p);
    REQUIRE(cfg.size() == 3);
    CHECK(cfg.at("k") == "32");
    CHECK(cfg.at("lr") == "0.01");
    CHECK(cfg.at("dims") == "64,64");

    spit(p, "just a bare line\n");
    CHECK_THROWS_AS(load_config(p), std::runtime_error);
    spit(p, "= value\n");
    CHECK_THROWS_AS(load_config(p), std::runtime_error);
    CHECK_THROWS_AS(load_config(scratch("no_such.conf")), std::runtime_error);
}

TEST_CASE("csv emitters: headers and one line per row") {
    const std::string p = scratch("loss.csv");
    write_loss_csv({{1, 0.5, {0.25}, 1.0, 0.01}, {2, 0.4, {0.2}, 0.9, 0.01}}, p);
    std::istringstream loss(slurp(p));
    std::string line;
    REQUIRE(std::getline(loss, line));
    CHECK(line == "step,loss,per_feature_losses,lr");
    int rows = 0;
    while (std::getline(loss, line)) ++rows;
    CHECK(rows == 2);

    const std::string pb = scratch("bench.csv");
    write_bench_csv({{30, 0.95, 10.0, 5000.0}}, pb);
    std::istringstream bench(slurp(pb));
    REQUIRE(std::getline(bench, line));
    CHECK(line == "retrieve_m,recall_at_30,speedup_vs_exhaustive,qps");

    const std::string pa = scratch("ablation.csv");
    write_ablation_csv({{"dot", "multiple_negatives", 32, 1, 0.8},
                        {"dot", "sigmoid", 32, 1, 0.6}},
                       pa);
    std::istringstream abl(slurp(pa));
    REQUIRE(std::getline(abl, line));
    CHECK(line == "model,loss,k,seed,p_at_1");
    rows = 0;
    while (std::getline(abl, line)) ++rows;
    CHECK(rows == 2);
}

TEST_CASE("manifest: records, verifies, and flags stale artifacts") {
    const std::string mpath = scratch("manifest.json");
    fs::remove(mpath);
    const std::string artifact = scratch("artifact.txt");
    spit(artifact, "version one");

    {
        Manifest m = Manifest::load_or_create(mpath);
        CHECK_FALSE(m.has("artifact"));
        m.record("artifact", artifact, hash_file(artifact), {{"k", 32}});
        m.save();
    }
    {
        const Manifest m = Manifest::load_or_create(mpath);
        REQUIRE(m.has("artifact"));
        CHECK(m.hash_of("artifact") == hash_file(artifact));
        CHECK_NOTHROW(m.verify("artifact", artifact));
        // Unrecorded names pass (nothing to compare against yet).
        CHECK_NOTHROW(m.verify("other", artifact));

        spit(artifact, "version two");
        CHECK_THROWS_WITH_AS(m.verify("artifact", artifact),
                             doctest::Contains("stale artifact"), std::runtime_error);
    }

    spit(mpath, "{ not json");
    CHECK_THROWS_AS(Manifest::load_or_create(mpath), std::runtime_error);
}
