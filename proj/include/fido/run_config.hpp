#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fido/errors.hpp"

namespace fido {

// Flat key=value configuration with '#' comments. CLI flags override file
// keys; the merged result is echoed to the output directory and hashed into
// every artifact header. Unknown keys are rejected up front.
class RunConfig {
  public:
    RunConfig();

    // Parses a config file and merges it (file keys below current values).
    void load_file(const std::string& path);

    // Sets one key, validating that the key exists.
    void set(const std::string& key, const std::string& value);

    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    int get_int(const std::string& key) const;
    uint64_t get_u64(const std::string& key) const;
    bool has(const std::string& key) const;  // non-empty value

    // FNV-1a over the sorted canonical "key=value\n" lines.
    uint64_t hash() const;
    std::string hash_hex() const;

    // Canonical text form (sorted keys), written as provenance.
    std::string canonical_text() const;
    void echo_to(const std::string& path) const;

    static const std::vector<std::string>& known_keys();

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace fido
