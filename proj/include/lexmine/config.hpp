#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace lexmine {

/// Flat `key = value` configuration with typed accessors.
///
/// Lines starting with `#` are comments. Later assignments override earlier
/// ones, which is also how command-line overrides are applied. Every accessor
/// records the key as known; `reject_unknown()` then fails on anything that
/// was never asked for.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::string_view text, const std::string& origin = "<string>");
    static KeyValueConfig load(const std::string& path);

    /// Applies a single `key=value` override.
    void set(const std::string& assignment);
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::string require_string(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key,
                                      const std::vector<std::string>& fallback) const;

    /// Marks keys as recognised without reading them.
    void allow(std::initializer_list<std::string_view> keys) const;

    /// Throws ConfigError naming the first key no accessor has asked for.
    void reject_unknown() const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

    /// Stable 64-bit FNV-1a hash of the sorted `key=value` lines.
    std::uint64_t hash() const;
    std::string hash_hex() const;

private:
    std::map<std::string, std::string> entries_;
    mutable std::set<std::string> known_;
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string to_hex(std::uint64_t value);

}  // namespace lexmine
