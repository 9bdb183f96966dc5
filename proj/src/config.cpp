/*
 * lowdose : contrast dose reduction toolkit
 *
 * Copyright 2026 The lowdose Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "lowdose/config.hpp"

#include "lowdose/error.hpp"
#include "util.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace lowdose {

using detail::strprintf;
using detail::trim;

std::uint64_t fnv1a64(const std::string &bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Config Config::parse(const std::string &text, const std::string &origin) {
    Config c;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(strprintf("%s:%zu: expected key = value", origin.c_str(), lineno));
        const std::string key(trim(t.substr(0, eq)));
        if (key.empty()) throw ConfigError(strprintf("%s:%zu: empty key", origin.c_str(), lineno));
        c.values_[key] = std::string(trim(t.substr(eq + 1)));
    }
    return c;
}

Config Config::load(const std::string &path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path);
}

void Config::set_assignment(const std::string &assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key(trim(std::string_view(assignment).substr(0, eq)));
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
    set(key, std::string(trim(std::string_view(assignment).substr(eq + 1))));
}

void Config::set(const std::string &key, const std::string &value) { values_[key] = value; }

std::optional<std::string> Config::get(const std::string &key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string Config::get_string(const std::string &key, const std::string &fallback) const {
    return get(key).value_or(fallback);
}

namespace {

template <class F> auto convert(const std::string &key, const std::string &value, F f) {
    try {
        return f(value);
    } catch (const Error &) {
        throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
    }
}

} // namespace

double Config::get_double(const std::string &key, double fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    return convert(key, *v, [&](const std::string &s) { return detail::parse_double(s, key); });
}

long long Config::get_int(const std::string &key, long long fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    return convert(key, *v, [&](const std::string &s) { return detail::parse_int(s, key); });
}

std::uint64_t Config::get_u64(const std::string &key, std::uint64_t fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    const long long x = convert(key, *v, [&](const std::string &s) { return detail::parse_int(s, key); });
    if (x < 0) throw ConfigError("config key '" + key + "' must be non-negative");
    return static_cast<std::uint64_t>(x);
}

bool Config::get_bool(const std::string &key, bool fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + *v + "'");
}

std::vector<int> Config::get_int_list(const std::string &key, const std::vector<int> &fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    std::vector<int> out;
    for (const auto &part : detail::split(*v, ',')) {
        const auto t = std::string(trim(part));
        if (t.empty()) continue;
        out.push_back(static_cast<int>(
            convert(key, t, [&](const std::string &s) { return detail::parse_int(s, key); })));
    }
    return out;
}

std::string Config::canonical() const {
    std::string out;
    for (const auto &[k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

std::uint64_t Config::hash() const { return fnv1a64(canonical()); }

std::vector<std::string> Config::unknown_keys(const std::vector<std::string> &known) const {
    std::vector<std::string> out;
    for (const auto &[k, v] : values_)
        if (std::find(known.begin(), known.end(), k) == known.end()) out.push_back(k);
    return out;
}

} // namespace lowdose
