// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace maskhash {

// Flat key=value configuration text. '#' starts a comment, blank lines are
// ignored, whitespace around keys and values is trimmed. Values are parsed
// on access so one file can serve several commands with different key sets.
class Config {
public:
    Config() = default;

    static Config parse_file(const std::string& path);
    static Config parse_text(const std::string& text, const std::string& origin = "<config>");

    bool has(const std::string& key) const;

    // Required accessors fail with a config error naming the missing key.
    std::string get_string(const std::string& key) const;
    uint32_t get_u32(const std::string& key) const;
    uint64_t get_u64(const std::string& key) const;
    double get_f64(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    uint32_t get_u32(const std::string& key, uint32_t fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;
    double get_f64(const std::string& key, double fallback) const;

    void set(const std::string& key, const std::string& value);
    const std::map<std::string, std::string>& entries() const { return _entries; }

private:
    std::string _origin;
    std::map<std::string, std::string> _entries;
};

} // namespace maskhash
