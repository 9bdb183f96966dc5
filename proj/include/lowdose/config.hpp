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

// Flat key=value configuration with dotted keys:
//
//   # comment
//   train.steps = 3000
//   doses = 10,30,50
//
// Later assignments (including --set overrides) replace earlier ones.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lowdose {

class Config {
public:
    static Config parse(const std::string &text, const std::string &origin = "<config>");
    static Config load(const std::string &path);

    /// "key=value"; throws ConfigError when there is no '='.
    void set_assignment(const std::string &assignment);
    void set(const std::string &key, const std::string &value);
    bool has(const std::string &key) const { return values_.count(key) != 0; }
    std::optional<std::string> get(const std::string &key) const;

    std::string get_string(const std::string &key, const std::string &fallback) const;
    double get_double(const std::string &key, double fallback) const;
    long long get_int(const std::string &key, long long fallback) const;
    std::uint64_t get_u64(const std::string &key, std::uint64_t fallback) const;
    bool get_bool(const std::string &key, bool fallback) const;
    std::vector<int> get_int_list(const std::string &key, const std::vector<int> &fallback) const;

    /// Keys in sorted order, one "key=value" per line.
    std::string canonical() const;
    /// FNV-1a 64 of canonical().
    std::uint64_t hash() const;

    /// Keys absent from `known`, in sorted order.
    std::vector<std::string> unknown_keys(const std::vector<std::string> &known) const;

    const std::map<std::string, std::string> &values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

std::uint64_t fnv1a64(const std::string &bytes);

} // namespace lowdose
