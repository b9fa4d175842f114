// Command-line entry point for the response suggestion pipeline. One binary,
// eight subcommands covering the full artifact chain:
//
//   build-vocab -> train / train-lm -> encode-responses -> build-index
//                                   -> eval / bench / suggest
//
// Every command records what it writes in a manifest (path, content hash,
// config snapshot) and verifies the artifacts it reads against the recorded
// hashes; a mismatch is a "stale artifact" error, never a silent recompute.
// Flags mirror config-file keys, with explicit flags taking precedence.

#include "reply/corpus.hpp"
#include "reply/encoder.hpp"
#include "reply/eval.hpp"
#include "reply/hq.hpp"
#include "reply/io.hpp"
#include "reply/lm.hpp"
#include "reply/manifest.hpp"
#include "reply/serve.hpp"
#include "reply/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace {

using reply::Manifest;
using ConfigMap = std::map<std::string, std::string>;

// ---------------------------------------------------------------------------
// Flag/config resolution: default < config file < explicit flag.

void parse_into(const std::string& s, int& v) { v = std::stoi(s); }
void parse_into(const std::string& s, std::uint64_t& v) { v = std::stoull(s); }
void parse_into(const std::string& s, double& v) { v = std::stod(s); }
void parse_into(const std::string& s, std::string& v) { v = s; }
[[maybe_unused]] void parse_into(const std::string& s, bool& v) {
    v = (s == "1" || s == "true" || s == "yes");
}

template <class T>
void from_config(const CLI::App& cmd, const std::string& flag, const ConfigMap& cfg,
                 const std::string& key, T& value) {
    if (cmd.count(flag) > 0) return;  // explicit flag wins
    const auto it = cfg.find(key);
    if (it != cfg.end()) parse_into(it->second, value);
}

ConfigMap maybe_load_config(const std::string& path) {
    if (path.empty()) return {};
    return reply::load_config(path);
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoull(item));
    }
    return out;
}

// "dims" is the embedding dimension followed by the feature tower layer
// sizes; the fusion tower defaults to two layers of the final dimension and
// the joint model's final tower mirrors the feature layers.
reply::EncoderConfig arch_from_dims(const std::string& dims, int num_features) {
    const auto sizes = parse_int_list(dims);
    if (sizes.size() < 2)
        throw std::invalid_argument("dims: need an embedding dim plus at least one layer size");
    reply::EncoderConfig arch;
    arch.embedding_dim = sizes.front();
    arch.num_features = num_features;
    arch.feature_layers.assign(sizes.begin() + 1, sizes.end());
    arch.fusion_layers = {arch.feature_layers.back(), arch.feature_layers.back()};
    arch.final_layers = arch.feature_layers;
    return arch;
}

reply::LossKind parse_loss(const std::string& name) {
    if (name == "multiple_negatives" || name == "mn") return reply::LossKind::multiple_negatives;
    if (name == "sigmoid") return reply::LossKind::sigmoid;
    throw std::invalid_argument("unknown loss: " + name + " (multiple_negatives | sigmoid)");
}

reply::HqMode parse_hq_mode(const std::string& name) {
    if (name == "alternating") return reply::HqMode::alternating;
    if (name == "sgd") return reply::HqMode::sgd;
    throw std::invalid_argument("unknown index training mode: " + name + " (alternating | sgd)");
}

// ---------------------------------------------------------------------------
// Manifest plumbing. Artifacts are keyed by path.

void verify_artifacts(const Manifest& manifest, std::initializer_list<std::string> paths) {
    for (const auto& p : paths) {
        if (!p.empty()) manifest.verify(p, p);
    }
}

void record_artifact(Manifest& manifest, const std::string& path, const nlohmann::json& config) {
    manifest.record(path, path, reply::hash_file(path), config);
    manifest.save();
}

// Cross-checks an artifact's embedded upstream hash against the file the
// command was actually given.
void check_embedded_hash(std::uint64_t recorded, const std::string& upstream_path,
                         const std::string& artifact_path, const char* what) {
    if (recorded == 0) return;  // artifact carries no reference (e.g. no LM)
    const std::uint64_t actual = reply::hash_file(upstream_path);
    if (recorded != actual) {
        throw std::runtime_error("stale artifact: " + artifact_path + " (embedded " + what +
                                 " hash " + reply::hash_hex(recorded) + ", but " + upstream_path +
                                 " hashes to " + reply::hash_hex(actual) + ")");
    }
}

// ---------------------------------------------------------------------------
// build-vocab

struct BuildVocabOpts {
    std::string corpus, out, config, manifest = "manifest.json";
    std::uint64_t seed = 1;  // accepted for interface uniformity; build is deterministic
    int max_n = 2;
    std::uint64_t size_cap = 200000;
    std::uint64_t min_count = 2;
    int num_features = 1;
    bool keep_quoted = false;
};

void run_build_vocab(const CLI::App& cmd, const BuildVocabOpts& o) {
    ConfigMap cfg = maybe_load_config(o.config);
    int max_n = o.max_n;
    std::uint64_t size_cap = o.size_cap, min_count = o.min_count;
    int num_features = o.num_features;
    from_config(cmd, "--max-n", cfg, "max_n", max_n);
    from_config(cmd, "--size-cap", cfg, "size_cap", size_cap);
    from_config(cmd, "--min-count", cfg, "min_count", min_count);
    from_config(cmd, "--num-features", cfg, "num_features", num_features);

    Manifest manifest = Manifest::load_or_create(o.manifest);
    const auto pairs = reply::load_jsonl(o.corpus);
    reply::FeaturizeOptions fo;
    fo.num_features = num_features;
    fo.strip_quotes = !o.keep_quoted;
    const auto texts = reply::vocabulary_texts(pairs, fo);
    const auto vocab = reply::build_vocabulary(texts, max_n, size_cap, min_count);
    if (vocab.size() == 0) throw std::runtime_error("no n-grams retained");

    reply::save_vocabulary(vocab, o.out);
    record_artifact(manifest, o.out,
                    {{"command", "build-vocab"},
                     {"corpus", o.corpus},
                     {"max_n", max_n},
                     {"size_cap", size_cap},
                     {"min_count", min_count},
                     {"num_features", num_features}});
    std::printf("vocabulary entries: %zu\n", vocab.size());
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
    std::string corpus, vocab, out, config, manifest = "manifest.json";
    std::string model = "dot";
    std::string loss = "multiple_negatives";
    std::string dims = "64,64,64,64";
    std::string loss_csv;
    int k = 32;
    int epochs = 10;
    int num_features = 1;
    double lr = 0.01, lr_decayed = 0.001;
    std::uint64_t lr_decay_step = 10000;
    std::uint64_t seed = 1, split_seed = 1;
    double train_ratio = 0.95;
};

void run_train(const CLI::App& cmd, const TrainOpts& o) {
    ConfigMap cfg = maybe_load_config(o.config);
    reply::TrainConfig tc;
    tc.batch_size = o.k;
    tc.epochs = o.epochs;
    tc.lr = o.lr;
    tc.lr_decay_step = o.lr_decay_step;
    tc.lr_decayed = o.lr_decayed;
    tc.seed = o.seed;
    std::string dims = o.dims, loss = o.loss;
    from_config(cmd, "--k", cfg, "k", tc.batch_size);
    from_config(cmd, "--epochs", cfg, "epochs", tc.epochs);
    from_config(cmd, "--lr", cfg, "lr", tc.lr);
    from_config(cmd, "--lr-decay-step", cfg, "lr_decay_step", tc.lr_decay_step);
    from_config(cmd, "--lr-decayed", cfg, "lr_decayed", tc.lr_decayed);
    from_config(cmd, "--seed", cfg, "seed", tc.seed);
    from_config(cmd, "--dims", cfg, "dims", dims);
    from_config(cmd, "--loss", cfg, "loss", loss);
    tc.loss = parse_loss(loss);

    Manifest manifest = Manifest::load_or_create(o.manifest);
    verify_artifacts(manifest, {o.vocab});
    const auto vocab = reply::load_vocabulary(o.vocab);
    const std::uint64_t vocab_hash = reply::hash_file(o.vocab);

    const auto pairs = reply::load_jsonl(o.corpus);
    reply::FeaturizeOptions fo;
    fo.num_features = o.num_features;
    const auto featurized = reply::featurize_pairs(pairs, vocab, fo);
    std::vector<std::size_t> train_idx, test_idx;
    reply::split_dataset(featurized.size(), o.train_ratio, o.split_seed, train_idx, test_idx);
    std::vector<reply::FeaturizedPair> train_set;
    train_set.reserve(train_idx.size());
    for (const auto i : train_idx) train_set.push_back(featurized[i]);

    const reply::EncoderConfig arch = arch_from_dims(dims, o.num_features);
    std::vector<reply::LossReport> curve;
    reply::Rng init_rng(tc.seed);
    if (o.model == "dot") {
        auto model = reply::make_dot_encoder<float>(
                arch, static_cast<Eigen::Index>(vocab.size()), init_rng);
        curve = reply::train(model, train_set, tc);
        reply::save_dot_model(model, vocab_hash, o.out);
    } else if (o.model == "joint") {
        auto model = reply::make_joint_scorer<float>(
                arch, static_cast<Eigen::Index>(vocab.size()), init_rng);
        curve = reply::train(model, train_set, tc);
        reply::save_joint_model(model, vocab_hash, o.out);
    } else {
        throw std::invalid_argument("unknown model kind: " + o.model + " (dot | joint)");
    }
    if (!o.loss_csv.empty()) reply::write_loss_csv(curve, o.loss_csv);

    record_artifact(manifest, o.out,
                    {{"command", "train"},
                     {"corpus", o.corpus},
                     {"vocab", o.vocab},
                     {"model", o.model},
                     {"loss", loss},
                     {"k", tc.batch_size},
                     {"epochs", tc.epochs},
                     {"lr", tc.lr},
                     {"lr_decay_step", tc.lr_decay_step},
                     {"lr_decayed", tc.lr_decayed},
                     {"seed", tc.seed},
                     {"split_seed", o.split_seed},
                     {"train_ratio", o.train_ratio},
                     {"dims", dims},
                     {"num_features", o.num_features}});
    std::printf("trained %s model: %zu pairs, %zu steps, loss %.6f -> %.6f\n", o.model.c_str(),
                train_set.size(), curve.size(), curve.empty() ? 0.0 : curve.front().loss,
                curve.empty() ? 0.0 : curve.back().loss);
}

// ---------------------------------------------------------------------------
// train-lm

struct TrainLmOpts {
    std::string corpus, out, config, manifest = "manifest.json";
    std::uint64_t seed = 1;  // accepted for uniformity; LM training is deterministic
    double k = 0.1;
};

void run_train_lm(const CLI::App& cmd, const TrainLmOpts& o) {
    ConfigMap cfg = maybe_load_config(o.config);
    double k = o.k;
    from_config(cmd, "--k", cfg, "k", k);

    Manifest manifest = Manifest::load_or_create(o.manifest);
    const auto pairs = reply::load_jsonl(o.corpus);
    std::vector<std::string> responses;
    responses.reserve(pairs.size());
    for (const auto& p : pairs) responses.push_back(p.response);

    const reply::BigramLm lm = reply::train_lm(responses, k);
    reply::save_lm(lm, o.out);
    record_artifact(manifest, o.out,
                    {{"command", "train-lm"}, {"corpus", o.corpus}, {"k", k}});
    std::printf("language model: %u words, k=%g\n", lm.num_words(), k);
}

// ---------------------------------------------------------------------------
// encode-responses

struct EncodeOpts {
    std::string corpus, vocab, model, lm, out, config, manifest = "manifest.json";
    std::uint64_t seed = 1;  // accepted for uniformity; encoding is deterministic
};

void run_encode_responses(const CLI::App&, const EncodeOpts& o) {
    Manifest manifest = Manifest::load_or_create(o.manifest);
    verify_artifacts(manifest, {o.vocab, o.model, o.lm});

    const auto vocab = reply::load_vocabulary(o.vocab);
    const reply::LoadedModel model = reply::load_model(o.model);
    if (model.kind != reply::ModelKind::dot_product)
        throw std::runtime_error("encode-responses requires a dot-product model");
    check_embedded_hash(model.vocab_hash, o.vocab, o.model, "vocabulary");

    const auto pairs = reply::load_jsonl(o.corpus);
    const auto responses = reply::unique_responses(pairs);

    reply::ResponseSet rs;
    if (!o.lm.empty()) {
        const reply::BigramLm lm = reply::load_lm(o.lm);
        rs = reply::precompute_responses(responses, vocab, model.dot, &lm);
        rs.lm_hash = reply::hash_file(o.lm);
    } else {
        rs = reply::precompute_responses(responses, vocab, model.dot, nullptr);
    }
    rs.vocab_hash = reply::hash_file(o.vocab);
    rs.model_hash = reply::hash_file(o.model);
    reply::save_response_set(rs, o.out);

    record_artifact(manifest, o.out,
                    {{"command", "encode-responses"},
                     {"corpus", o.corpus},
                     {"vocab", o.vocab},
                     {"model", o.model},
                     {"lm", o.lm}});
    std::printf("encoded %zu responses (d=%d)\n", rs.size(),
                static_cast<int>(rs.encodings.cols()));
}

// ---------------------------------------------------------------------------
// build-index

struct BuildIndexOpts {
    std::string responses, out, config, manifest = "manifest.json";
    std::string mode = "alternating";
    std::string mse_csv;
    int vq_size = 256, pq_size = 256, subspaces = 8;
    int kmeans_iters = 15, outer_iters = 10, inner_pq_iters = 2;
    int sgd_steps = 20000, sgd_batch = 32;
    double sgd_lr = 0.02;
    std::uint64_t seed = 1;
    bool no_store_vectors = false;
};

void run_build_index(const CLI::App& cmd, const BuildIndexOpts& o) {
    ConfigMap cfg = maybe_load_config(o.config);
    reply::HqConfig hc;
    hc.vq_size = o.vq_size;
    hc.num_subspaces = o.subspaces;
    hc.pq_size = o.pq_size;
    hc.kmeans_iters = o.kmeans_iters;
    hc.outer_iters = o.outer_iters;
    hc.inner_pq_iters = o.inner_pq_iters;
    hc.sgd_steps = o.sgd_steps;
    hc.sgd_batch = o.sgd_batch;
    hc.sgd_lr = o.sgd_lr;
    std::string mode = o.mode;
    std::uint64_t seed = o.seed;
    from_config(cmd, "--vq-size", cfg, "vq_size", hc.vq_size);
    from_config(cmd, "--pq-size", cfg, "pq_size", hc.pq_size);
    from_config(cmd, "--subspaces", cfg, "subspaces", hc.num_subspaces);
    from_config(cmd, "--mode", cfg, "mode", mode);
    from_config(cmd, "--seed", cfg, "seed", seed);
    hc.mode = parse_hq_mode(mode);

    Manifest manifest = Manifest::load_or_create(o.manifest);
    verify_artifacts(manifest, {o.responses});
    const reply::ResponseSet rs = reply::load_response_set(o.responses);
    hc.d = static_cast<int>(rs.encodings.cols());

    std::vector<double> mse_history;
    const reply::HqIndex index =
            reply::build_index(rs.encodings, rs.lm_logprob, hc, seed, !o.no_store_vectors,
                               reply::hash_file(o.responses), &mse_history);
    reply::save_index(index, o.out);
    if (!o.mse_csv.empty()) {
        std::FILE* f = std::fopen(o.mse_csv.c_str(), "w");
        if (f == nullptr) throw std::runtime_error("cannot write " + o.mse_csv);
        std::fprintf(f, "round,mse\n");
        for (std::size_t i = 0; i < mse_history.size(); ++i)
            std::fprintf(f, "%zu,%.17g\n", i, mse_history[i]);
        std::fclose(f);
    }

    record_artifact(manifest, o.out,
                    {{"command", "build-index"},
                     {"responses", o.responses},
                     {"mode", mode},
                     {"vq_size", hc.vq_size},
                     {"pq_size", hc.pq_size},
                     {"subspaces", hc.num_subspaces},
                     {"seed", seed}});
    std::printf("index: %zu vectors, mode %s, final mse %.6g\n", index.size(), mode.c_str(),
                mse_history.empty() ? 0.0 : mse_history.back());
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
    std::string corpus, vocab, model, lm, out, config, manifest = "manifest.json";
    std::string alpha_grid = "0,0.1,0.25,0.5,1.0";
    std::string batch_sizes = "16,32,64";
    std::string seeds = "1,2,3";
    std::string dims = "64,64,64,64";
    int num_candidates = 100;
    int epochs = 10, k = 32, num_features = 1;
    double alpha = 0.0;
    double lr = 0.01, lr_decayed = 0.001;
    std::uint64_t lr_decay_step = 10000;
    double train_ratio = 0.95;
    std::uint64_t seed = 1, split_seed = 1;
    bool ablation = false, tune_alpha = false;
};

// Adds alpha * log P_LM(y) on top of any base scorer.
reply::CandidateScorer biased_scorer(reply::CandidateScorer base, std::shared_ptr<reply::Vecf> logp,
                                     float alpha) {
    return [base = std::move(base), logp, alpha](std::size_t pair_index,
                                                 const std::vector<std::uint32_t>& candidates) {
        reply::Vecf s = base(pair_index, candidates);
        for (std::size_t c = 0; c < candidates.size(); ++c)
            s(static_cast<Eigen::Index>(c)) += alpha * (*logp)(candidates[c]);
        return s;
    };
}

void run_eval(const CLI::App& cmd, const EvalOpts& o) {
    ConfigMap cfg = maybe_load_config(o.config);
    reply::EvalConfig ec;
    ec.num_candidates = o.num_candidates;
    ec.seed = o.seed;
    double alpha = o.alpha;
    from_config(cmd, "--num-candidates", cfg, "num_candidates", ec.num_candidates);
    from_config(cmd, "--seed", cfg, "seed", ec.seed);
    from_config(cmd, "--alpha", cfg, "alpha", alpha);

    Manifest manifest = Manifest::load_or_create(o.manifest);
    verify_artifacts(manifest, {o.vocab, o.model, o.lm});
    const auto vocab = reply::load_vocabulary(o.vocab);
    const auto pairs = reply::load_jsonl(o.corpus);
    reply::FeaturizeOptions fo;
    fo.num_features = o.num_features;
    const auto featurized = reply::featurize_pairs(pairs, vocab, fo);
    std::vector<std::size_t> train_idx, test_idx;
    reply::split_dataset(featurized.size(), o.train_ratio, o.split_seed, train_idx, test_idx);
    std::vector<reply::FeaturizedPair> test_set;
    test_set.reserve(test_idx.size());
    for (const auto i : test_idx) test_set.push_back(featurized[i]);
    if (test_set.empty()) throw std::runtime_error("eval: empty test split");

    // Per-response LM log-probs over the test split, when an LM was given.
    std::shared_ptr<reply::Vecf> logp;
    if (!o.lm.empty()) {
        const reply::BigramLm lm = reply::load_lm(o.lm);
        logp = std::make_shared<reply::Vecf>(static_cast<Eigen::Index>(test_idx.size()));
        for (std::size_t i = 0; i < test_idx.size(); ++i)
            (*logp)(static_cast<Eigen::Index>(i)) =
                    static_cast<float>(reply::lm_logprob(pairs[test_idx[i]].response, lm));
    }

    if (o.ablation) {
        if (o.out.empty()) throw std::runtime_error("eval --ablation requires --out for the CSV");
        std::vector<reply::FeaturizedPair> train_set;
        train_set.reserve(train_idx.size());
        for (const auto i : train_idx) train_set.push_back(featurized[i]);
        reply::TrainConfig base;
        base.epochs = o.epochs;
        base.lr = o.lr;
        base.lr_decay_step = o.lr_decay_step;
        base.lr_decayed = o.lr_decayed;
        const auto rows = reply::ablation_report(
                train_set, test_set, arch_from_dims(o.dims, o.num_features), vocab.size(),
                {reply::LossKind::multiple_negatives, reply::LossKind::sigmoid},
                parse_int_list(o.batch_sizes), parse_seed_list(o.seeds), base, ec);
        reply::write_ablation_csv(rows, o.out);
        for (const auto& r : rows)
            std::printf("%s %s k=%d seed=%llu p_at_1=%.6f\n", r.model.c_str(), r.loss.c_str(),
                        r.k, static_cast<unsigned long long>(r.seed), r.p_at_1);
        return;
    }

    if (o.model.empty()) throw std::runtime_error("eval requires --model");
    const reply::LoadedModel model = reply::load_model(o.model);
    check_embedded_hash(model.vocab_hash, o.vocab, o.model, "vocabulary");

    if (o.tune_alpha) {
        if (model.kind != reply::ModelKind::dot_product)
            throw std::runtime_error("eval --tune-alpha requires a dot-product model");
        if (logp == nullptr) throw std::runtime_error("eval --tune-alpha requires --lm");
        const auto points = reply::alpha_sweep(model.dot, test_set, *logp,
                                               parse_double_list(o.alpha_grid), ec);
        double best_alpha = points.front().alpha, best_p = points.front().p_at_1;
        for (const auto& p : points) {
            std::printf("alpha=%g p_at_1=%.6f\n", p.alpha, p.p_at_1);
            if (p.p_at_1 > best_p) {
                best_p = p.p_at_1;
                best_alpha = p.alpha;
            }
        }
        std::printf("best_alpha=%g\n", best_alpha);
        if (!o.out.empty()) {
            std::FILE* f = std::fopen(o.out.c_str(), "w");
            if (f == nullptr) throw std::runtime_error("cannot write " + o.out);
            std::fprintf(f, "alpha,p_at_1\n");
            for (const auto& p : points) std::fprintf(f, "%.17g,%.17g\n", p.alpha, p.p_at_1);
            std::fclose(f);
        }
        return;
    }

    reply::CandidateScorer scorer;
    if (model.kind == reply::ModelKind::dot_product)
        scorer = reply::make_dot_candidate_scorer(model.dot, test_set);
    else
        scorer = reply::make_joint_candidate_scorer(model.joint, test_set);
    if (alpha != 0.0) {
        if (logp == nullptr) throw std::runtime_error("eval: --alpha requires --lm");
        scorer = biased_scorer(std::move(scorer), logp, static_cast<float>(alpha));
    }

    const reply::PAtOne p = reply::p_at_1(scorer, test_set.size(), ec);
    if (p.sampled_with_replacement)
        std::fprintf(stderr,
                     "warning: fewer than %d distinct distractors; sampled with replacement\n",
                     ec.num_candidates - 1);
    std::printf("p_at_1=%.6f\n", p.strict);
    std::printf("p_at_1_random_ties=%.6f\n", p.random_ties);
    if (!o.out.empty()) {
        std::FILE* f = std::fopen(o.out.c_str(), "w");
        if (f == nullptr) throw std::runtime_error("cannot write " + o.out);
        std::fprintf(f, "metric,value\n");
        std::fprintf(f, "p_at_1,%.17g\n", p.strict);
        std::fprintf(f, "p_at_1_random_ties,%.17g\n", p.random_ties);
        std::fclose(f);
    }
}

// ---------------------------------------------------------------------------
// bench

struct BenchOpts {
    std::string index, corpus, vocab, model, out, config, manifest = "manifest.json";
    std::string sweep = "30,60,100,200,400,800";
    std::string mode = "alternating";
    bool synthetic = false;
    int n = 100000, d = 64, components = 50, num_queries = 1000, top_n = 30;
    int vq_size = 256, pq_size = 256, subspaces = 8;
    int kmeans_iters = 15, outer_iters = 10, inner_pq_iters = 2;
    double center_scale = 1.0, noise_scale = 0.35;
    std::uint64_t seed = 1;
};

void run_bench(const CLI::App& cmd, const BenchOpts& o) {
    ConfigMap cfg = maybe_load_config(o.config);
    std::uint64_t seed = o.seed;
    std::string sweep_csv = o.sweep;
    from_config(cmd, "--seed", cfg, "seed", seed);
    from_config(cmd, "--sweep", cfg, "sweep", sweep_csv);
    const std::vector<int> sweep = parse_int_list(sweep_csv);
    if (sweep.empty()) throw std::invalid_argument("bench: empty sweep");
    if (o.out.empty()) throw std::runtime_error("bench requires --out for the CSV");

    Manifest manifest = Manifest::load_or_create(o.manifest);
    reply::BenchProtocol proto;
    proto.top_n = o.top_n;

    std::vector<reply::BenchPoint> points;
    double exhaustive_qps = 0.0;
    if (o.synthetic) {
        const reply::Matf all = reply::gaussian_mixture(
                static_cast<std::size_t>(o.n) + static_cast<std::size_t>(o.num_queries), o.d,
                o.components, o.center_scale, o.noise_scale, seed);
        const reply::Matf base = all.topRows(o.n);
        const reply::Matf queries = all.bottomRows(o.num_queries);
        reply::HqConfig hc;
        hc.d = o.d;
        hc.vq_size = o.vq_size;
        hc.pq_size = o.pq_size;
        hc.num_subspaces = o.subspaces;
        hc.kmeans_iters = o.kmeans_iters;
        hc.outer_iters = o.outer_iters;
        hc.inner_pq_iters = o.inner_pq_iters;
        hc.mode = parse_hq_mode(o.mode);
        const reply::Vecf bias = reply::Vecf::Zero(base.rows());
        const reply::HqIndex index = reply::build_index(base, bias, hc, seed, true, 0);
        points = reply::speed_recall_bench(index, queries, sweep, proto, &exhaustive_qps);
    } else {
        verify_artifacts(manifest, {o.index, o.vocab, o.model});
        const reply::HqIndex index = reply::load_index(o.index);
        const auto vocab = reply::load_vocabulary(o.vocab);
        const reply::LoadedModel model = reply::load_model(o.model);
        if (model.kind != reply::ModelKind::dot_product)
            throw std::runtime_error("bench requires a dot-product model");
        check_embedded_hash(model.vocab_hash, o.vocab, o.model, "vocabulary");
        const auto pairs = reply::load_jsonl(o.corpus);
        const auto nq = std::min<std::size_t>(pairs.size(), static_cast<std::size_t>(o.num_queries));
        if (nq == 0) throw std::runtime_error("bench: no queries in corpus");
        reply::FeaturizeOptions fo;
        fo.num_features = model.dot.num_features();
        reply::Matf queries(static_cast<Eigen::Index>(nq), model.dot.output_dim());
        for (std::size_t i = 0; i < nq; ++i) {
            const auto fp = reply::featurize_pair(pairs[i], vocab, fo);
            queries.row(static_cast<Eigen::Index>(i)) =
                    reply::encode_input(fp.x, model.dot).fused.transpose();
        }
        points = reply::speed_recall_bench(index, queries, sweep, proto, &exhaustive_qps);
    }

    reply::write_bench_csv(points, o.out);
    record_artifact(manifest, o.out,
                    {{"command", "bench"},
                     {"synthetic", o.synthetic},
                     {"sweep", sweep_csv},
                     {"seed", seed}});
    std::printf("exhaustive: %.1f qps\n", exhaustive_qps);
    for (const auto& p : points)
        std::printf("retrieve_m=%d recall@%d=%.4f speedup=%.2fx qps=%.1f\n", p.retrieve_m,
                    proto.top_n, p.recall_at_30, p.speedup, p.qps);
}

// ---------------------------------------------------------------------------
// suggest

struct SuggestOpts {
    std::string vocab, model, joint_model, responses, index, out, config,
            manifest = "manifest.json";
    std::string mode = "two_pass";
    std::string text, subject;
    int n = 100, m = 500, retrieve_m = 100;
    double alpha = 0.0;
    bool no_rerank = false;
    std::uint64_t seed = 1;  // accepted for uniformity; serving is deterministic
};

nlohmann::json result_to_json(const reply::SuggestResult& res) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& s : res.items) {
        items.push_back({{"id", s.id},
                         {"response", s.response},
                         {"model_score", s.model_score},
                         {"bias", s.bias},
                         {"final_score", s.final_score}});
    }
    return {{"suggestions", items},
            {"timing",
             {{"encode_us", res.timing.encode_us},
              {"search_us", res.timing.search_us},
              {"rescore_us", res.timing.rescore_us},
              {"total_us", res.timing.total_us}}}};
}

void run_suggest(const CLI::App& cmd, const SuggestOpts& o) {
    ConfigMap cfg = maybe_load_config(o.config);
    double alpha = o.alpha;
    int retrieve_m = o.retrieve_m, n = o.n, m = o.m;
    std::string mode = o.mode;
    from_config(cmd, "--alpha", cfg, "alpha", alpha);
    from_config(cmd, "--retrieve-m", cfg, "retrieve_m", retrieve_m);
    from_config(cmd, "--n", cfg, "n", n);
    from_config(cmd, "--m", cfg, "m", m);
    from_config(cmd, "--mode", cfg, "mode", mode);

    Manifest manifest = Manifest::load_or_create(o.manifest);
    verify_artifacts(manifest, {o.vocab, o.model, o.joint_model, o.responses, o.index});

    const auto vocab = reply::load_vocabulary(o.vocab);
    const reply::LoadedModel model = reply::load_model(o.model);
    if (model.kind != reply::ModelKind::dot_product)
        throw std::runtime_error("suggest: --model must be the dot-product model");
    check_embedded_hash(model.vocab_hash, o.vocab, o.model, "vocabulary");

    reply::LoadedModel joint;
    bool have_joint = false;
    if (!o.joint_model.empty()) {
        joint = reply::load_model(o.joint_model);
        if (joint.kind != reply::ModelKind::joint)
            throw std::runtime_error("suggest: --joint-model must be a joint model");
        check_embedded_hash(joint.vocab_hash, o.vocab, o.joint_model, "vocabulary");
        have_joint = true;
    }

    const reply::ResponseSet rs = reply::load_response_set(o.responses);
    check_embedded_hash(rs.vocab_hash, o.vocab, o.responses, "vocabulary");
    check_embedded_hash(rs.model_hash, o.model, o.responses, "model");
    std::vector<reply::FeatureBag> response_bags;
    response_bags.reserve(rs.size());
    for (const auto& r : rs.responses) response_bags.push_back(reply::featurize(r, vocab));

    reply::HqIndex index;
    bool have_index = false;
    if (!o.index.empty()) {
        index = reply::load_index(o.index);
        have_index = true;
    }

    reply::ServeContext ctx;
    ctx.vocab = &vocab;
    ctx.dot = &model.dot;
    ctx.joint = have_joint ? &joint.joint : nullptr;
    ctx.responses = &rs;
    ctx.response_bags = &response_bags;
    ctx.index = have_index ? &index : nullptr;
    ctx.response_set_hash = reply::hash_file(o.responses);
    ctx.alpha = static_cast<float>(alpha);
    ctx.retrieve_m = retrieve_m;
    ctx.rerank = !o.no_rerank;

    reply::SuggestRequest base;
    base.mode = reply::parse_suggest_mode(mode);
    base.n = n;
    base.m = m;

    std::ostream* sink = &std::cout;
    std::ofstream out_file;
    if (!o.out.empty()) {
        out_file.open(o.out);
        if (!out_file) throw std::runtime_error("cannot write " + o.out);
        sink = &out_file;
    }

    if (cmd.count("--text") > 0) {
        reply::SuggestRequest req = base;
        req.body = o.text;
        req.subject = o.subject;
        *sink << result_to_json(reply::suggest(req, ctx)).dump() << "\n";
        return;
    }

    // Batch mode: one JSON request per input line, one JSON result per line.
    std::string line;
    while (std::getline(std::cin, line)) {
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        reply::SuggestRequest req = base;
        req.body = j.at("body").get<std::string>();
        if (j.contains("subject")) req.subject = j["subject"].get<std::string>();
        if (j.contains("mode")) req.mode = reply::parse_suggest_mode(j["mode"].get<std::string>());
        if (j.contains("n")) req.n = j["n"].get<int>();
        if (j.contains("m")) req.m = j["m"].get<int>();
        *sink << result_to_json(reply::suggest(req, ctx)).dump() << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Response suggestion pipeline: n-gram dual encoders with LM response biasing "
                 "and quantized maximum-inner-product search"};
    app.require_subcommand(1);

    auto bv = std::make_shared<BuildVocabOpts>();
    CLI::App* bv_cmd = app.add_subcommand("build-vocab", "Build the n-gram vocabulary");
    bv_cmd->add_option("--corpus", bv->corpus, "JSONL corpus path")->required();
    bv_cmd->add_option("--out", bv->out, "Output vocabulary path")->required();
    bv_cmd->add_option("--config", bv->config, "key=value config file");
    bv_cmd->add_option("--manifest", bv->manifest, "Manifest path");
    bv_cmd->add_option("--seed", bv->seed, "Unused; accepted for interface uniformity");
    bv_cmd->add_option("--max-n", bv->max_n, "Maximum n-gram order");
    bv_cmd->add_option("--size-cap", bv->size_cap, "Maximum vocabulary size");
    bv_cmd->add_option("--min-count", bv->min_count, "Minimum n-gram frequency");
    bv_cmd->add_option("--num-features", bv->num_features, "1: body, 2: body+subject");
    bv_cmd->add_flag("--keep-quoted", bv->keep_quoted, "Keep quoted reply lines");
    bv_cmd->callback([bv, bv_cmd] { run_build_vocab(*bv_cmd, *bv); });

    auto tr = std::make_shared<TrainOpts>();
    CLI::App* tr_cmd = app.add_subcommand("train", "Train a scoring model");
    tr_cmd->add_option("--corpus", tr->corpus, "JSONL corpus path")->required();
    tr_cmd->add_option("--vocab", tr->vocab, "Vocabulary path")->required();
    tr_cmd->add_option("--out", tr->out, "Output model path")->required();
    tr_cmd->add_option("--config", tr->config, "key=value config file");
    tr_cmd->add_option("--manifest", tr->manifest, "Manifest path");
    tr_cmd->add_option("--model", tr->model, "dot | joint");
    tr_cmd->add_option("--loss", tr->loss, "multiple_negatives | sigmoid");
    tr_cmd->add_option("--k", tr->k, "Batch size (number of in-batch negatives)");
    tr_cmd->add_option("--epochs", tr->epochs, "Training epochs");
    tr_cmd->add_option("--lr", tr->lr, "Learning rate");
    tr_cmd->add_option("--lr-decay-step", tr->lr_decay_step, "Step at which lr decays");
    tr_cmd->add_option("--lr-decayed", tr->lr_decayed, "Learning rate after decay");
    tr_cmd->add_option("--seed", tr->seed, "Init and batch-order seed");
    tr_cmd->add_option("--split-seed", tr->split_seed, "Train/test split seed");
    tr_cmd->add_option("--train-ratio", tr->train_ratio, "Train fraction of the corpus");
    tr_cmd->add_option("--dims", tr->dims, "Embedding dim, then tower layer sizes");
    tr_cmd->add_option("--num-features", tr->num_features, "1: body, 2: body+subject");
    tr_cmd->add_option("--loss-csv", tr->loss_csv, "Write the loss curve CSV here");
    tr_cmd->callback([tr, tr_cmd] { run_train(*tr_cmd, *tr); });

    auto tl = std::make_shared<TrainLmOpts>();
    CLI::App* tl_cmd = app.add_subcommand("train-lm", "Train the response language model");
    tl_cmd->add_option("--corpus", tl->corpus, "JSONL corpus path")->required();
    tl_cmd->add_option("--out", tl->out, "Output LM path")->required();
    tl_cmd->add_option("--config", tl->config, "key=value config file");
    tl_cmd->add_option("--manifest", tl->manifest, "Manifest path");
    tl_cmd->add_option("--seed", tl->seed, "Unused; accepted for interface uniformity");
    tl_cmd->add_option("--k", tl->k, "Add-k smoothing constant");
    tl_cmd->callback([tl, tl_cmd] { run_train_lm(*tl_cmd, *tl); });

    auto er = std::make_shared<EncodeOpts>();
    CLI::App* er_cmd = app.add_subcommand("encode-responses",
                                          "Precompute response encodings and LM log-probs");
    er_cmd->add_option("--corpus", er->corpus, "JSONL corpus path")->required();
    er_cmd->add_option("--vocab", er->vocab, "Vocabulary path")->required();
    er_cmd->add_option("--model", er->model, "Dot-product model path")->required();
    er_cmd->add_option("--lm", er->lm, "Language model path (optional)");
    er_cmd->add_option("--out", er->out, "Output response set path")->required();
    er_cmd->add_option("--config", er->config, "key=value config file");
    er_cmd->add_option("--manifest", er->manifest, "Manifest path");
    er_cmd->add_option("--seed", er->seed, "Unused; accepted for interface uniformity");
    er_cmd->callback([er, er_cmd] { run_encode_responses(*er_cmd, *er); });

    auto bi = std::make_shared<BuildIndexOpts>();
    CLI::App* bi_cmd = app.add_subcommand("build-index", "Train the quantization index");
    bi_cmd->add_option("--responses", bi->responses, "Response set path")->required();
    bi_cmd->add_option("--out", bi->out, "Output index path")->required();
    bi_cmd->add_option("--config", bi->config, "key=value config file");
    bi_cmd->add_option("--manifest", bi->manifest, "Manifest path");
    bi_cmd->add_option("--seed", bi->seed, "Codebook training seed");
    bi_cmd->add_option("--mode", bi->mode, "alternating | sgd");
    bi_cmd->add_option("--vq-size", bi->vq_size, "Vector-quantization codebook size");
    bi_cmd->add_option("--pq-size", bi->pq_size, "Product-quantization codebook size");
    bi_cmd->add_option("--subspaces", bi->subspaces, "Number of PQ subspaces");
    bi_cmd->add_option("--kmeans-iters", bi->kmeans_iters, "VQ k-means iterations");
    bi_cmd->add_option("--outer-iters", bi->outer_iters, "Alternating rounds");
    bi_cmd->add_option("--inner-pq-iters", bi->inner_pq_iters, "PQ Lloyd iterations per round");
    bi_cmd->add_option("--sgd-steps", bi->sgd_steps, "SGD steps");
    bi_cmd->add_option("--sgd-batch", bi->sgd_batch, "SGD batch size");
    bi_cmd->add_option("--sgd-lr", bi->sgd_lr, "SGD learning rate");
    bi_cmd->add_flag("--no-store-vectors", bi->no_store_vectors,
                     "Drop full-precision vectors (disables re-ranking)");
    bi_cmd->add_option("--mse-csv", bi->mse_csv, "Write the reconstruction-error curve here");
    bi_cmd->callback([bi, bi_cmd] { run_build_index(*bi_cmd, *bi); });

    auto ev = std::make_shared<EvalOpts>();
    CLI::App* ev_cmd = app.add_subcommand("eval", "Held-out P@1 evaluation");
    ev_cmd->add_option("--corpus", ev->corpus, "JSONL corpus path")->required();
    ev_cmd->add_option("--vocab", ev->vocab, "Vocabulary path")->required();
    ev_cmd->add_option("--model", ev->model, "Model path (dot or joint)");
    ev_cmd->add_option("--lm", ev->lm, "Language model path (optional)");
    ev_cmd->add_option("--out", ev->out, "Output CSV path");
    ev_cmd->add_option("--config", ev->config, "key=value config file");
    ev_cmd->add_option("--manifest", ev->manifest, "Manifest path");
    ev_cmd->add_option("--seed", ev->seed, "Distractor-sampling seed");
    ev_cmd->add_option("--split-seed", ev->split_seed, "Train/test split seed");
    ev_cmd->add_option("--train-ratio", ev->train_ratio, "Train fraction of the corpus");
    ev_cmd->add_option("--num-candidates", ev->num_candidates, "Candidates per test pair");
    ev_cmd->add_option("--alpha", ev->alpha, "Bias weight on log P_LM(y)");
    ev_cmd->add_flag("--ablation", ev->ablation, "Loss/batch-size ablation study");
    ev_cmd->add_flag("--tune-alpha", ev->tune_alpha, "Grid-search the bias weight");
    ev_cmd->add_option("--alpha-grid", ev->alpha_grid, "Alpha grid (comma-separated)");
    ev_cmd->add_option("--batch-sizes", ev->batch_sizes, "Ablation batch sizes");
    ev_cmd->add_option("--seeds", ev->seeds, "Ablation seeds");
    ev_cmd->add_option("--dims", ev->dims, "Ablation model dimensions");
    ev_cmd->add_option("--epochs", ev->epochs, "Ablation training epochs");
    ev_cmd->add_option("--lr", ev->lr, "Ablation learning rate");
    ev_cmd->add_option("--num-features", ev->num_features, "1: body, 2: body+subject");
    ev_cmd->callback([ev, ev_cmd] { run_eval(*ev_cmd, *ev); });

    auto be = std::make_shared<BenchOpts>();
    CLI::App* be_cmd = app.add_subcommand("bench", "Speed/recall benchmark");
    be_cmd->add_option("--out", be->out, "Output CSV path")->required();
    be_cmd->add_option("--config", be->config, "key=value config file");
    be_cmd->add_option("--manifest", be->manifest, "Manifest path");
    be_cmd->add_option("--seed", be->seed, "Data and codebook seed");
    be_cmd->add_flag("--synthetic", be->synthetic, "Self-contained Gaussian-mixture benchmark");
    be_cmd->add_option("--index", be->index, "Index path (non-synthetic mode)");
    be_cmd->add_option("--corpus", be->corpus, "Query corpus (non-synthetic mode)");
    be_cmd->add_option("--vocab", be->vocab, "Vocabulary path (non-synthetic mode)");
    be_cmd->add_option("--model", be->model, "Dot-product model (non-synthetic mode)");
    be_cmd->add_option("--sweep", be->sweep, "retrieve_m sweep (comma-separated)");
    be_cmd->add_option("--n", be->n, "Synthetic database size");
    be_cmd->add_option("--d", be->d, "Synthetic vector dimension");
    be_cmd->add_option("--components", be->components, "Synthetic mixture components");
    be_cmd->add_option("--num-queries", be->num_queries, "Query count");
    be_cmd->add_option("--top-n", be->top_n, "Recall depth");
    be_cmd->add_option("--mode", be->mode, "Index training mode (synthetic)");
    be_cmd->add_option("--vq-size", be->vq_size, "VQ codebook size (synthetic)");
    be_cmd->add_option("--pq-size", be->pq_size, "PQ codebook size (synthetic)");
    be_cmd->add_option("--subspaces", be->subspaces, "PQ subspaces (synthetic)");
    be_cmd->callback([be, be_cmd] { run_bench(*be_cmd, *be); });

    auto sg = std::make_shared<SuggestOpts>();
    CLI::App* sg_cmd = app.add_subcommand("suggest", "Rank responses for queries");
    sg_cmd->add_option("--vocab", sg->vocab, "Vocabulary path")->required();
    sg_cmd->add_option("--model", sg->model, "Dot-product model path")->required();
    sg_cmd->add_option("--joint-model", sg->joint_model, "Joint model (exhaustive/two_pass)");
    sg_cmd->add_option("--responses", sg->responses, "Response set path")->required();
    sg_cmd->add_option("--index", sg->index, "Index path (single_pass)");
    sg_cmd->add_option("--out", sg->out, "Write results here instead of stdout");
    sg_cmd->add_option("--config", sg->config, "key=value config file");
    sg_cmd->add_option("--manifest", sg->manifest, "Manifest path");
    sg_cmd->add_option("--seed", sg->seed, "Unused; accepted for interface uniformity");
    sg_cmd->add_option("--mode", sg->mode, "exhaustive | two_pass | single_pass");
    sg_cmd->add_option("--n", sg->n, "Results wanted");
    sg_cmd->add_option("--m", sg->m, "Two-pass first-stage width");
    sg_cmd->add_option("--retrieve-m", sg->retrieve_m, "Single-pass candidate width");
    sg_cmd->add_flag("--no-rerank", sg->no_rerank, "Skip exact re-ranking in single_pass");
    sg_cmd->add_option("--text", sg->text, "One-shot query body");
    sg_cmd->add_option("--subject", sg->subject, "One-shot query subject");
    sg_cmd->callback([sg, sg_cmd] { run_suggest(*sg_cmd, *sg); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
