// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "maskhash/config.hpp"
#include "maskhash/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace maskhash {

namespace {

std::string trim(const std::string& text) {
    const char* ws = " \t\r\n";
    const size_t begin = text.find_first_not_of(ws);
    if (begin == std::string::npos) {
        return {};
    }
    const size_t end = text.find_last_not_of(ws);
    return text.substr(begin, end - begin + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T result{};
    const char* first = value.data();
    const char* last = first + value.size();
    const auto [ptr, ec] = std::from_chars(first, last, result);
    if (ec != std::errc() || ptr != last) {
        throw Error::config("config key '" + key + "' has invalid value '" + value + "'");
    }
    return result;
}

} // namespace

Config Config::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error::config("cannot open config file '" + path + "'");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_text(buffer.str(), path);
}

Config Config::parse_text(const std::string& text, const std::string& origin) {
    Config config;
    config._origin = origin;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) {
            line.resize(hash);
        }
        const std::string stripped = trim(line);
        if (stripped.empty()) {
            continue;
        }
        const size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw Error::config(origin + ":" + std::to_string(line_no) + ": expected key=value, got '" + stripped + "'");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) {
            throw Error::config(origin + ":" + std::to_string(line_no) + ": empty key");
        }
        config._entries[key] = value;
    }
    return config;
}

bool Config::has(const std::string& key) const {
    return _entries.count(key) != 0;
}

std::string Config::get_string(const std::string& key) const {
    const auto it = _entries.find(key);
    if (it == _entries.end()) {
        throw Error::config("missing config key '" + key + "'");
    }
    return it->second;
}

uint32_t Config::get_u32(const std::string& key) const {
    return parse_number<uint32_t>(key, get_string(key));
}

uint64_t Config::get_u64(const std::string& key) const {
    return parse_number<uint64_t>(key, get_string(key));
}

double Config::get_f64(const std::string& key) const {
    return parse_number<double>(key, get_string(key));
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
}

uint32_t Config::get_u32(const std::string& key, uint32_t fallback) const {
    return has(key) ? get_u32(key) : fallback;
}

uint64_t Config::get_u64(const std::string& key, uint64_t fallback) const {
    return has(key) ? get_u64(key) : fallback;
}

double Config::get_f64(const std::string& key, double fallback) const {
    return has(key) ? get_f64(key) : fallback;
}

void Config::set(const std::string& key, const std::string& value) {
    _entries[key] = value;
}

} // namespace maskhash
