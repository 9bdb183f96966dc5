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

#include "lowdose/stats.hpp"

#include "lowdose/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lowdose {

const char *method_name(WilcoxonMethod m) {
    return m == WilcoxonMethod::Exact ? "exact" : "normal_approx";
}

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
        i = j + 1;
    }
    return ranks;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DataError("wilcoxon: samples differ in length");
    if (x.empty()) throw DataError("wilcoxon: need at least one pair");

    std::vector<double> diff;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (std::isnan(x[i]) || std::isnan(y[i])) throw DataError("wilcoxon: NaN input");
        const double d = x[i] - y[i];
        if (d != 0.0) diff.push_back(d);
    }
    WilcoxonResult res;
    res.n_effective = diff.size();
    if (diff.empty()) return res; // no evidence either way

    std::vector<double> mag(diff.size());
    std::transform(diff.begin(), diff.end(), mag.begin(), [](double d) { return std::abs(d); });
    const auto ranks = average_ranks(mag);
    double w_plus = 0.0, w_minus = 0.0;
    for (std::size_t i = 0; i < diff.size(); ++i) (diff[i] > 0 ? w_plus : w_minus) += ranks[i];
    res.w_statistic = std::min(w_plus, w_minus);
    const std::size_t n = diff.size();

    if (n <= kWilcoxonExactMax) {
        // Average ranks are multiples of 1/2, so doubled ranks are integers and
        // the null distribution of 2 W+ is a subset-sum count.
        std::vector<std::size_t> r2(n);
        std::size_t total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            r2[i] = static_cast<std::size_t>(std::lround(2.0 * ranks[i]));
            total += r2[i];
        }
        std::vector<double> ways(total + 1, 0.0);
        ways[0] = 1.0;
        std::size_t reach = 0;
        for (auto r : r2) {
            for (std::size_t s = reach + 1; s-- > 0;)
                if (ways[s] != 0.0) ways[s + r] += ways[s];
            reach += r;
        }
        const auto w2 = static_cast<std::size_t>(std::lround(2.0 * res.w_statistic));
        double le = 0.0, ge = 0.0;
        for (std::size_t s = 0; s <= total; ++s) {
            if (s <= w2) le += ways[s];
            if (s >= w2) ge += ways[s];
        }
        const double all = std::ldexp(1.0, static_cast<int>(n));
        res.p_two_sided = std::min(1.0, 2.0 * std::min(le, ge) / all);
        res.method = WilcoxonMethod::Exact;
        return res;
    }

    const double nn = static_cast<double>(n);
    double tie_term = 0.0;
    {
        std::vector<double> sorted = mag;
        std::sort(sorted.begin(), sorted.end());
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i + 1);
            tie_term += t * t * t - t;
            i = j + 1;
        }
    }
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double dev = std::max(0.0, std::abs(res.w_statistic - mean) - 0.5);
    const double z = var > 0.0 ? dev / std::sqrt(var) : 0.0;
    res.p_two_sided = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    res.method = WilcoxonMethod::NormalApprox;
    return res;
}

} // namespace lowdose
