#include "fido/run_config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fido {

namespace {

struct KeyDefault {
    const char* key;
    const char* value;
};

// Every recognized key with its default. Values are strings; typed access
// validates lazily.
const KeyDefault kDefaults[] = {
    {"command", ""},
    {"dataset", "shapes"},
    {"shapes_side", "32"},
    {"shapes_classes", "4"},
    {"shapes_texture", "noise"},
    {"shapes_train", "3072"},
    {"shapes_heldout", "256"},
    {"shapes_eval", "256"},
    {"shapes_min_scale", "0.30"},
    {"shapes_max_scale", "0.62"},
    {"data_seed", "7"},
    {"idx_images", ""},
    {"idx_labels", ""},
    {"model", ""},
    {"out", "."},
    {"seed", "0"},
    {"method", "fido"},
    {"objective", "ssr"},
    {"infill", "harmonic"},
    {"lambda", "2.0"},
    {"tv", "0.01"},
    {"temperature", "0.1"},
    {"batch", "8"},
    {"steps", "300"},
    {"upsample", "0"},
    {"tau", "0.5"},
    {"flip_infill", "auto"},
    {"flip_step", "0.01"},
    {"wsl_mode", "auto"},
    {"alpha", "-1"},
    {"count", "0"},
    {"methods", "fido-harmonic,fido-mean,bbmp-blur,max,center,grad,random"},
    {"image_id", ""},
    {"image", ""},
    {"target_class", "-1"},
    {"epochs", "30"},
    {"train_batch", "32"},
    {"train_lr", "0.003"},
    {"weight_decay", "0.0001"},
};

}  // namespace

RunConfig::RunConfig() {
    for (const KeyDefault& kd : kDefaults) values_[kd.key] = kd.value;
}

const std::vector<std::string>& RunConfig::known_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const KeyDefault& kd : kDefaults) k.push_back(kd.key);
        return k;
    }();
    return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        // trim
        auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
        while (!line.empty() && is_space(line.back())) line.pop_back();
        size_t start = 0;
        while (start < line.size() && is_space(line[start])) ++start;
        if (start >= line.size()) continue;
        size_t eq = line.find('=', start);
        if (eq == std::string::npos)
            throw ConfigError(path + " line " + std::to_string(line_no) + ": expected key=value");
        std::string key = line.substr(start, eq - start);
        std::string value = line.substr(eq + 1);
        while (!key.empty() && is_space(key.back())) key.pop_back();
        size_t vs = 0;
        while (vs < value.size() && is_space(value[vs])) ++vs;
        value.erase(0, vs);
        set(key, value);
    }
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

double RunConfig::get_double(const std::string& key) const {
    const std::string& v = get(key);
    char* end = nullptr;
    double d = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("config key '" + key + "': cannot parse number '" + v + "'");
    return d;
}

int RunConfig::get_int(const std::string& key) const {
    const std::string& v = get(key);
    char* end = nullptr;
    long d = std::strtol(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("config key '" + key + "': cannot parse integer '" + v + "'");
    return static_cast<int>(d);
}

uint64_t RunConfig::get_u64(const std::string& key) const {
    const std::string& v = get(key);
    char* end = nullptr;
    unsigned long long d = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("config key '" + key + "': cannot parse integer '" + v + "'");
    return static_cast<uint64_t>(d);
}

bool RunConfig::has(const std::string& key) const { return !get(key).empty(); }

std::string RunConfig::canonical_text() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << "=" << v << "\n";  // std::map keeps keys sorted
    return os.str();
}

uint64_t RunConfig::hash() const {
    uint64_t h = 1469598103934665603ULL;
    for (char c : canonical_text()) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

std::string RunConfig::hash_hex() const {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
}

void RunConfig::echo_to(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config echo to '" + path + "'");
    out << "# effective configuration (config_hash=" << hash_hex() << ")\n";
    out << canonical_text();
}

}  // namespace fido
