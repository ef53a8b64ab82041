#include "lexmine/config.hpp"

#include "lexmine/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace lexmine {

namespace {

std::string trim(std::string_view s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) return {};
    auto end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& origin) {
    KeyValueConfig cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        ++line_no;
        auto line = trim(raw);
        if (!line.empty() && line.front() != '#') {
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw DataError(origin, line_no, "expected key=value, got '" + line + "'");
            auto key = trim(std::string_view(line).substr(0, eq));
            if (key.empty()) throw DataError(origin, line_no, "empty key");
            cfg.entries_[key] = trim(std::string_view(line).substr(eq + 1));
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path);
}

void KeyValueConfig::set(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError(assignment, "override must be key=value");
    set(trim(std::string_view(assignment).substr(0, eq)),
        trim(std::string_view(assignment).substr(eq + 1)));
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
    if (key.empty()) throw ConfigError(key, "empty key");
    entries_[key] = value;
}

bool KeyValueConfig::has(const std::string& key) const {
    known_.insert(key);
    return entries_.count(key) != 0;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    known_.insert(key);
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

std::string KeyValueConfig::require_string(const std::string& key) const {
    known_.insert(key);
    auto it = entries_.find(key);
    if (it == entries_.end() || it->second.empty()) throw ConfigError(key, "required but missing");
    return it->second;
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
    known_.insert(key);
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::int64_t value = 0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ConfigError(key, "expected an integer, got '" + s + "'");
    return value;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    known_.insert(key);
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const auto& s = it->second;
    try {
        std::size_t used = 0;
        double value = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return value;
    } catch (const std::exception&) {
        throw ConfigError(key, "expected a real number, got '" + s + "'");
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    known_.insert(key);
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key, "expected a boolean, got '" + it->second + "'");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key,
                                                  const std::vector<std::string>& fallback) const {
    known_.insert(key);
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::vector<std::string> out;
    std::string_view rest = it->second;
    while (true) {
        auto comma = rest.find(',');
        auto item = trim(rest.substr(0, comma));
        if (!item.empty()) out.push_back(item);
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
    }
    return out;
}

void KeyValueConfig::allow(std::initializer_list<std::string_view> keys) const {
    for (auto k : keys) known_.emplace(k);
}

void KeyValueConfig::reject_unknown() const {
    for (const auto& [key, value] : entries_)
        if (!known_.count(key)) throw ConfigError(key, "unknown key");
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string to_hex(std::uint64_t value) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

std::uint64_t KeyValueConfig::hash() const {
    std::uint64_t h = fnv1a64("");
    for (const auto& [key, value] : entries_) {
        h = fnv1a64(key, h);
        h = fnv1a64("=", h);
        h = fnv1a64(value, h);
        h = fnv1a64("\n", h);
    }
    return h;
}

std::string KeyValueConfig::hash_hex() const { return to_hex(hash()); }

}  // namespace lexmine
