#include "reply/manifest.hpp"

#include "reply/io.hpp"

#include <fstream>
#include <stdexcept>

namespace reply {

Manifest Manifest::load_or_create(const std::string& path) {
    Manifest m;
    m.path_ = path;
    std::ifstream in(path);
    if (in) {
        try {
            in >> m.doc_;
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("bad manifest " + path + ": " + e.what());
        }
    }
    if (!m.doc_.contains("artifacts")) m.doc_["artifacts"] = nlohmann::json::object();
    return m;
}

void Manifest::record(const std::string& name, const std::string& file_path, std::uint64_t hash,
                      const nlohmann::json& config) {
    nlohmann::json entry;
    entry["path"] = file_path;
    entry["hash"] = hash_hex(hash);
    entry["config"] = config;
    doc_["artifacts"][name] = std::move(entry);
}

void Manifest::verify(const std::string& name, const std::string& file_path) const {
    const auto& artifacts = doc_.at("artifacts");
    if (!artifacts.contains(name)) return;
    const std::string expected = artifacts.at(name).at("hash").get<std::string>();
    const std::string actual = hash_hex(hash_file(file_path));
    if (expected != actual)
        throw std::runtime_error("stale artifact: " + file_path + " (manifest hash for '" +
                                 name + "' is " + expected + ", file is " + actual + ")");
}

bool Manifest::has(const std::string& name) const {
    return doc_.at("artifacts").contains(name);
}

std::uint64_t Manifest::hash_of(const std::string& name) const {
    const std::string hex = doc_.at("artifacts").at(name).at("hash").get<std::string>();
    return std::stoull(hex, nullptr, 16);
}

void Manifest::save() const {
    std::ofstream out(path_, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest: " + path_);
    out << doc_.dump(2) << "\n";
}

}  // namespace reply
