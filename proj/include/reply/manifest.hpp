#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>

namespace reply {

// Artifact ledger for the CLI pipeline: every command records what it wrote
// (path, content hash, config snapshot) and verifies the artifacts it reads
// against the recorded hashes. A mismatch is always an error, never a
// silent recompute.
class Manifest {
  public:
    static Manifest load_or_create(const std::string& path);

    void record(const std::string& name, const std::string& file_path, std::uint64_t hash,
                const nlohmann::json& config);

    // Throws "stale artifact" if `name` was recorded and the file's current
    // hash differs; artifacts never recorded pass (nothing to check yet).
    void verify(const std::string& name, const std::string& file_path) const;

    bool has(const std::string& name) const;
    std::uint64_t hash_of(const std::string& name) const;

    void save() const;
    const std::string& path() const { return path_; }

  private:
    std::string path_;
    nlohmann::json doc_;
};

}  // namespace reply
