#include "reply/io.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace reply {

static_assert(std::endian::native == std::endian::little,
              "serialized formats assume a little-endian host");

std::uint64_t fnv1a(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

std::uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for hashing: " + path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        const auto n = static_cast<std::size_t>(in.gcount());
        for (std::size_t i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

// ---------------------------------------------------------------------------
// Binary primitives

namespace {

class BinWriter {
  public:
    explicit BinWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot write: " + path);
    }
    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    void magic(const char m[4]) { bytes(m, 4); }
    template <class T>
    void pod(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        bytes(&v, sizeof v);
    }
    void str(const std::string& s) {
        pod(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void matf(const Matf& m) {
        pod(static_cast<std::uint32_t>(m.rows()));
        pod(static_cast<std::uint32_t>(m.cols()));
        bytes(m.data(), sizeof(float) * static_cast<std::size_t>(m.size()));
    }
    void vecf(const Vecf& v) {
        pod(static_cast<std::uint32_t>(v.size()));
        bytes(v.data(), sizeof(float) * static_cast<std::size_t>(v.size()));
    }
    void close() {
        out_.close();
        if (!out_) throw std::runtime_error("write failed: " + path_);
    }

  private:
    std::string path_;
    std::ofstream out_;
};

class BinReader {
  public:
    explicit BinReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw std::runtime_error("cannot open: " + path);
    }
    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw std::runtime_error("truncated file: " + path_);
    }
    void expect_magic(const char m[4]) {
        char got[4];
        bytes(got, 4);
        if (std::memcmp(got, m, 4) != 0)
            throw std::runtime_error("bad magic in " + path_ + " (expected " +
                                     std::string(m, 4) + ")");
    }
    template <class T>
    T pod() {
        T v;
        bytes(&v, sizeof v);
        return v;
    }
    std::string str() {
        const auto n = pod<std::uint32_t>();
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    Matf matf() {
        const auto rows = pod<std::uint32_t>();
        const auto cols = pod<std::uint32_t>();
        Matf m(rows, cols);
        bytes(m.data(), sizeof(float) * static_cast<std::size_t>(m.size()));
        return m;
    }
    Vecf vecf() {
        const auto n = pod<std::uint32_t>();
        Vecf v(n);
        bytes(v.data(), sizeof(float) * static_cast<std::size_t>(v.size()));
        return v;
    }
    bool at_eof() {
        in_.peek();
        return in_.eof();
    }
    const std::string& path() const { return path_; }

  private:
    std::string path_;
    std::ifstream in_;
};

void write_tower(BinWriter& w, const Tower<float>& t) {
    w.pod(static_cast<std::uint32_t>(t.layers.size()));
    for (const auto& l : t.layers) {
        w.matf(l.weight);
        w.vecf(l.bias);
    }
}

Tower<float> read_tower(BinReader& r) {
    Tower<float> t;
    const auto n = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
        DenseLayer<float> l;
        l.weight = r.matf();
        l.bias = r.vecf();
        t.layers.push_back(std::move(l));
    }
    return t;
}

void write_layer_sizes(BinWriter& w, const std::vector<int>& sizes) {
    w.pod(static_cast<std::uint32_t>(sizes.size()));
    for (int s : sizes) w.pod(static_cast<std::uint32_t>(s));
}

std::vector<int> read_layer_sizes(BinReader& r) {
    std::vector<int> sizes(r.pod<std::uint32_t>());
    for (auto& s : sizes) s = static_cast<int>(r.pod<std::uint32_t>());
    return sizes;
}

constexpr char kModelMagic[4] = {'S', 'R', 'D', 'E'};
constexpr char kResponseMagic[4] = {'S', 'R', 'R', 'S'};
constexpr char kIndexMagic[4] = {'S', 'R', 'H', 'Q'};
constexpr std::uint32_t kFormatVersion = 1;

std::vector<int> tower_sizes(const Tower<float>& t) {
    std::vector<int> sizes;
    for (const auto& l : t.layers) sizes.push_back(static_cast<int>(l.weight.rows()));
    return sizes;
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

void save_vocabulary(const NGramVocabulary& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << "#vocab v1 max_n=" << vocab.max_n() << "\n";
    for (NGramId id = 0; id < vocab.size(); ++id)
        out << vocab.ngram(id) << '\t' << id << '\t' << vocab.count(id) << "\n";
    out.close();
    if (!out) throw std::runtime_error("write failed: " + path);
}

NGramVocabulary load_vocabulary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string header;
    if (!std::getline(in, header) || header.rfind("#vocab v1 max_n=", 0) != 0)
        throw std::runtime_error("bad vocabulary header in " + path);
    const int max_n = std::stoi(header.substr(std::strlen("#vocab v1 max_n=")));
    std::vector<std::pair<std::string, std::uint64_t>> entries;
    std::string line;
    std::size_t expect_id = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw std::runtime_error("bad vocabulary line in " + path);
        const auto id = static_cast<std::size_t>(std::stoull(line.substr(t1 + 1, t2 - t1 - 1)));
        if (id != expect_id)
            throw std::runtime_error("non-dense vocabulary ids in " + path);
        ++expect_id;
        entries.emplace_back(line.substr(0, t1), std::stoull(line.substr(t2 + 1)));
    }
    return NGramVocabulary(std::move(entries), max_n, expect_id);
}

// ---------------------------------------------------------------------------
// Models

void save_dot_model(const DotEncoder<float>& model, std::uint64_t vocab_hash,
                    const std::string& path) {
    BinWriter w(path);
    w.magic(kModelMagic);
    w.pod(kFormatVersion);
    w.pod(static_cast<std::uint32_t>(ModelKind::dot_product));
    w.pod(static_cast<std::uint32_t>(model.num_features()));
    w.pod(static_cast<std::uint32_t>(model.embedding_dim()));
    w.pod(static_cast<std::uint64_t>(model.input_embeddings.rows()));
    w.pod(vocab_hash);
    write_layer_sizes(w, tower_sizes(model.input_towers.front()));
    write_layer_sizes(w, tower_sizes(model.input_fusion));
    w.matf(model.input_embeddings);
    w.matf(model.response_embeddings);
    for (const auto& t : model.input_towers) write_tower(w, t);
    for (const auto& t : model.response_towers) write_tower(w, t);
    write_tower(w, model.input_fusion);
    write_tower(w, model.response_fusion);
    w.close();
}

void save_joint_model(const JointScorer<float>& model, std::uint64_t vocab_hash,
                      const std::string& path) {
    BinWriter w(path);
    w.magic(kModelMagic);
    w.pod(kFormatVersion);
    w.pod(static_cast<std::uint32_t>(ModelKind::joint));
    w.pod(static_cast<std::uint32_t>(model.num_features()));
    w.pod(static_cast<std::uint32_t>(model.embedding_dim()));
    w.pod(static_cast<std::uint64_t>(model.input_embeddings.rows()));
    w.pod(vocab_hash);
    write_layer_sizes(w, tower_sizes(model.towers.front()));
    write_layer_sizes(w, tower_sizes(model.final_tower));
    w.matf(model.input_embeddings);
    w.matf(model.response_embeddings);
    for (const auto& t : model.towers) write_tower(w, t);
    for (const auto& hw : model.head_weights) w.vecf(hw);
    w.vecf(model.head_biases);
    write_tower(w, model.final_tower);
    w.vecf(model.final_weight);
    w.vecf(model.final_bias);
    w.close();
}

LoadedModel load_model(const std::string& path) {
    BinReader r(path);
    r.expect_magic(kModelMagic);
    const auto version = r.pod<std::uint32_t>();
    if (version != kFormatVersion)
        throw std::runtime_error("unsupported model version in " + path);
    LoadedModel out;
    out.kind = static_cast<ModelKind>(r.pod<std::uint32_t>());
    const auto features = r.pod<std::uint32_t>();
    r.pod<std::uint32_t>();  // embedding dim, recoverable from the tables
    r.pod<std::uint64_t>();  // vocab size, ditto
    out.vocab_hash = r.pod<std::uint64_t>();
    read_layer_sizes(r);
    read_layer_sizes(r);
    if (out.kind == ModelKind::dot_product) {
        out.dot.input_embeddings = r.matf();
        out.dot.response_embeddings = r.matf();
        for (std::uint32_t i = 0; i < features; ++i) out.dot.input_towers.push_back(read_tower(r));
        for (std::uint32_t i = 0; i < features; ++i)
            out.dot.response_towers.push_back(read_tower(r));
        out.dot.input_fusion = read_tower(r);
        out.dot.response_fusion = read_tower(r);
    } else if (out.kind == ModelKind::joint) {
        out.joint.input_embeddings = r.matf();
        out.joint.response_embeddings = r.matf();
        for (std::uint32_t i = 0; i < features; ++i) out.joint.towers.push_back(read_tower(r));
        for (std::uint32_t i = 0; i < features; ++i) out.joint.head_weights.push_back(r.vecf());
        out.joint.head_biases = r.vecf();
        out.joint.final_tower = read_tower(r);
        out.joint.final_weight = r.vecf();
        out.joint.final_bias = r.vecf();
    } else {
        throw std::runtime_error("unknown model kind in " + path);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Language model

void save_lm(const BigramLm& lm, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + path);
    char kbuf[64];
    std::snprintf(kbuf, sizeof kbuf, "%.17g", lm.smoothing_k());
    out << "#lm v1 k=" << kbuf << " vocab=" << lm.num_words() << "\n";

    const auto context_name = [&](std::uint32_t c) -> std::string {
        if (c < lm.num_words()) return lm.words()[c];
        return c == lm.start_id() ? "<s>" : "<unk>";
    };
    const auto outcome_name = [&](std::uint32_t o) -> std::string {
        if (o < lm.num_words()) return lm.words()[o];
        return o == lm.end_id() ? "</s>" : "<unk>";
    };

    out << "[unigrams]\n";
    for (std::uint32_t c = 0; c < lm.num_words() + 2; ++c)
        if (lm.context_total(c) > 0)
            out << context_name(c) << '\t' << lm.context_total(c) << "\n";
    out << "[bigrams]\n";
    for (std::uint32_t c = 0; c < lm.num_words() + 2; ++c) {
        if (lm.context_total(c) == 0) continue;
        for (std::uint32_t o = 0; o < lm.num_outcomes(); ++o) {
            const auto count = lm.transition_count(c, o);
            if (count > 0)
                out << context_name(c) << '\t' << outcome_name(o) << '\t' << count << "\n";
        }
    }
    out.close();
    if (!out) throw std::runtime_error("write failed: " + path);
}

BigramLm load_lm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string header;
    if (!std::getline(in, header) || header.rfind("#lm v1 k=", 0) != 0)
        throw std::runtime_error("bad LM header in " + path);
    const auto vocab_pos = header.find(" vocab=");
    if (vocab_pos == std::string::npos) throw std::runtime_error("bad LM header in " + path);
    const double k = std::strtod(header.c_str() + std::strlen("#lm v1 k="), nullptr);
    const auto vocab_size = static_cast<std::size_t>(std::stoull(header.substr(vocab_pos + 7)));

    // The word list is exactly the in-range context/outcome names; collect
    // words from both sections, then replay the bigram counts.
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(line);

    std::set<std::string> words;
    bool in_bigrams = false;
    for (const auto& l : lines) {
        if (l == "[unigrams]") continue;
        if (l == "[bigrams]") {
            in_bigrams = true;
            continue;
        }
        std::istringstream ss(l);
        std::string a, b, c;
        std::getline(ss, a, '\t');
        std::getline(ss, b, '\t');
        if (in_bigrams) std::getline(ss, c, '\t');
        if (a != "<s>" && a != "</s>" && a != "<unk>") words.insert(a);
        if (in_bigrams && b != "<s>" && b != "</s>" && b != "<unk>") words.insert(b);
    }
    if (words.size() != vocab_size)
        throw std::runtime_error("LM vocabulary size mismatch in " + path);

    BigramLm lm(std::vector<std::string>(words.begin(), words.end()), k);
    in_bigrams = false;
    for (const auto& l : lines) {
        if (l == "[unigrams]") continue;
        if (l == "[bigrams]") {
            in_bigrams = true;
            continue;
        }
        if (!in_bigrams) continue;
        std::istringstream ss(l);
        std::string prev, next, count;
        std::getline(ss, prev, '\t');
        std::getline(ss, next, '\t');
        std::getline(ss, count, '\t');
        const std::uint32_t ctx = prev == "<s>" ? lm.start_id()
                                  : prev == "<unk>" ? lm.unk_id()
                                                    : lm.word_or_unk(prev);
        const std::uint32_t outcome = next == "</s>" ? lm.end_id()
                                      : next == "<unk>" ? lm.unk_id()
                                                        : lm.word_or_unk(next);
        lm.add_transition(ctx, outcome, std::stoull(count));
    }
    return lm;
}

// ---------------------------------------------------------------------------
// Response set

void save_response_set(const ResponseSet& rs, const std::string& path) {
    BinWriter w(path);
    w.magic(kResponseMagic);
    w.pod(kFormatVersion);
    w.pod(rs.vocab_hash);
    w.pod(rs.model_hash);
    w.pod(rs.lm_hash);
    w.pod(static_cast<std::uint32_t>(rs.size()));
    for (const auto& r : rs.responses) w.str(r);
    w.matf(rs.encodings);
    w.vecf(rs.lm_logprob);
    w.close();
}

ResponseSet load_response_set(const std::string& path) {
    BinReader r(path);
    r.expect_magic(kResponseMagic);
    if (r.pod<std::uint32_t>() != kFormatVersion)
        throw std::runtime_error("unsupported response-set version in " + path);
    ResponseSet rs;
    rs.vocab_hash = r.pod<std::uint64_t>();
    rs.model_hash = r.pod<std::uint64_t>();
    rs.lm_hash = r.pod<std::uint64_t>();
    const auto n = r.pod<std::uint32_t>();
    rs.responses.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) rs.responses.push_back(r.str());
    rs.encodings = r.matf();
    rs.lm_logprob = r.vecf();
    if (rs.encodings.rows() != static_cast<Eigen::Index>(n) ||
        rs.lm_logprob.size() != static_cast<Eigen::Index>(n))
        throw std::runtime_error("inconsistent response set in " + path);
    return rs;
}

// ---------------------------------------------------------------------------
// HQ index

void save_index(const HqIndex& index, const std::string& path) {
    BinWriter w(path);
    w.magic(kIndexMagic);
    w.pod(kFormatVersion);
    w.pod(static_cast<std::uint32_t>(index.books.dim()));
    w.pod(static_cast<std::uint32_t>(index.books.vq.rows()));
    w.pod(static_cast<std::uint32_t>(index.books.num_subspaces()));
    w.pod(static_cast<std::uint32_t>(index.books.pq.front().rows()));
    w.pod(static_cast<std::uint64_t>(index.size()));
    w.pod(index.response_hash);
    w.matf(index.books.vq);
    w.matf(index.books.rotation);
    for (const auto& b : index.books.pq) w.matf(b);
    w.bytes(index.codes.vq.data(), sizeof(std::uint16_t) * index.codes.vq.size());
    w.bytes(index.codes.pq.data(), index.codes.pq.size());
    w.vecf(index.bias);
    w.pod(static_cast<std::uint32_t>(index.vectors.size() != 0 ? 1 : 0));
    if (index.vectors.size() != 0) w.matf(index.vectors);
    w.close();
}

HqIndex load_index(const std::string& path) {
    BinReader r(path);
    r.expect_magic(kIndexMagic);
    if (r.pod<std::uint32_t>() != kFormatVersion)
        throw std::runtime_error("unsupported index version in " + path);
    r.pod<std::uint32_t>();  // d, recoverable from the codebooks
    r.pod<std::uint32_t>();  // vq_size
    const auto num_subspaces = r.pod<std::uint32_t>();
    r.pod<std::uint32_t>();  // pq_size
    const auto n = r.pod<std::uint64_t>();
    HqIndex index;
    index.response_hash = r.pod<std::uint64_t>();
    index.books.vq = r.matf();
    index.books.rotation = r.matf();
    for (std::uint32_t k = 0; k < num_subspaces; ++k) index.books.pq.push_back(r.matf());
    index.codes.num_subspaces = static_cast<int>(num_subspaces);
    index.codes.vq.resize(n);
    r.bytes(index.codes.vq.data(), sizeof(std::uint16_t) * index.codes.vq.size());
    index.codes.pq.resize(n * num_subspaces);
    r.bytes(index.codes.pq.data(), index.codes.pq.size());
    index.bias = r.vecf();
    if (r.pod<std::uint32_t>() != 0) index.vectors = r.matf();
    return index;
}

// ---------------------------------------------------------------------------
// Config and CSV

std::map<std::string, std::string> load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key=value");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty key");
        out[key] = value;
    }
    return out;
}

namespace {
std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
}  // namespace

void write_loss_csv(const std::vector<LossReport>& curve, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << "step,loss,per_feature_losses,lr\n";
    for (const auto& r : curve) {
        out << r.step << ',' << fmt_double(r.loss) << ',';
        for (std::size_t i = 0; i < r.per_feature.size(); ++i) {
            if (i > 0) out << ';';
            out << fmt_double(r.per_feature[i]);
        }
        out << ',' << fmt_double(r.lr) << "\n";
    }
}

void write_bench_csv(const std::vector<BenchPoint>& points, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << "retrieve_m,recall_at_30,speedup_vs_exhaustive,qps\n";
    for (const auto& p : points)
        out << p.retrieve_m << ',' << fmt_double(p.recall_at_30) << ',' << fmt_double(p.speedup)
            << ',' << fmt_double(p.qps) << "\n";
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << "model,loss,k,seed,p_at_1\n";
    for (const auto& r : rows)
        out << r.model << ',' << r.loss << ',' << r.k << ',' << r.seed << ','
            << fmt_double(r.p_at_1) << "\n";
}

}  // namespace reply
