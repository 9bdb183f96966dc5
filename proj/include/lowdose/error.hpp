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

#pragma once

#include <stdexcept>
#include <string>

namespace lowdose {

/// Failure categories. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
    Internal = 1,
    Config = 2,
    Data = 3,
    Numeric = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string &what) : Error(ErrorKind::Config, what) {}
};

struct DataError : Error {
    explicit DataError(const std::string &what) : Error(ErrorKind::Data, what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string &what) : Error(ErrorKind::Numeric, what) {}
};

} // namespace lowdose
