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

// Internal string helpers shared by the file readers/writers.

#pragma once

#include <cstdarg>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

namespace lowdose::detail {

inline std::string strprintf(const char *fmt, ...) __attribute__((format(printf, 1, 2)));

inline std::string strprintf(const char *fmt, ...) {
    va_list ap;
    va_start(ap, fmt);
    va_list ap2;
    va_copy(ap2, ap);
    const int n = std::vsnprintf(nullptr, 0, fmt, ap);
    va_end(ap);
    std::string out(static_cast<std::size_t>(n > 0 ? n : 0), '\0');
    std::vsnprintf(out.data(), out.size() + 1, fmt, ap2);
    va_end(ap2);
    return out;
}

/// Shortest text that parses back to the same double.
std::string format_exact(double v);

/// Fixed-precision text; "inf"/"-inf"/"nan" for non-finite values.
std::string format_fixed(double v, int digits);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// Strict numeric parsing; throws the given error kind on failure.
double parse_double(std::string_view s, const std::string &what);
long long parse_int(std::string_view s, const std::string &what);

} // namespace lowdose::detail
