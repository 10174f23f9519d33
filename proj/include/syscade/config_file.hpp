#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

namespace syscade {

// Flat key = value experiment configuration. Blank lines and lines starting
// with '#' are ignored; keys and values are whitespace-trimmed. Duplicate
// keys are an error.
class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::string& path);
    static KeyValueConfig parse_string(const std::string& text);

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;   // true/false/1/0
    std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const;
    std::string require_string(const std::string& key) const;

    // Throws ConfigError naming the first key that is not in the allowed
    // set — catches typos before they silently disable a feature.
    void check_known_keys(const std::set<std::string>& allowed) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

} // namespace syscade
