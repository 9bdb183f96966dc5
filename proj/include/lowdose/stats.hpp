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

#include <cstddef>
#include <span>
#include <vector>

namespace lowdose {

enum class WilcoxonMethod { Exact, NormalApprox };
const char *method_name(WilcoxonMethod m);

struct WilcoxonResult {
    std::size_t n_effective = 0;
    double w_statistic = 0.0; // min(W+, W-)
    double p_two_sided = 1.0;
    WilcoxonMethod method = WilcoxonMethod::Exact;
};

/// Largest effective sample size handled by exact enumeration.
inline constexpr std::size_t kWilcoxonExactMax = 25;

/// Paired signed-rank test on d = x - y. Zero differences are dropped, tied
/// |d| get average ranks. Exact two-sided p for n <= 25 (tie-aware rank-sum
/// distribution), otherwise the tie-corrected normal approximation with a 0.5
/// continuity correction.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y);

/// Average ranks (1-based) of the values; ties share the mean of their ranks.
std::vector<double> average_ranks(std::span<const double> values);

} // namespace lowdose
