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

#include "lowdose/calibrate.hpp"

#include "lowdose/error.hpp"
#include "util.hpp"

#include <algorithm>
#include <cmath>

namespace lowdose {

using detail::strprintf;

AffineIntensityMap AffineIntensityMap::inverse() const {
    validate();
    return {1.0 / scale, -offset / scale};
}

void AffineIntensityMap::validate() const {
    if (!std::isfinite(scale) || !std::isfinite(offset) || !(scale > 0.0))
        throw DataError(strprintf("invalid intensity map scale=%g offset=%g", scale, offset));
}

Histogram compute_histogram(const Volume &v, std::size_t n_bins) {
    if (n_bins < 2) throw ConfigError("histogram needs at least 2 bins");
    const auto data = v.data();
    const auto [mn_it, mx_it] = std::minmax_element(data.begin(), data.end());
    const double lo = *mn_it, hi = *mx_it;
    if (!(hi > lo)) throw DataError("degenerate histogram: volume is constant");

    Histogram h;
    h.bin_edges.resize(n_bins + 1);
    const double width = (hi - lo) / static_cast<double>(n_bins);
    for (std::size_t i = 0; i <= n_bins; ++i) h.bin_edges[i] = lo + width * static_cast<double>(i);
    h.bin_edges.back() = hi;
    h.counts.assign(n_bins, 0);
    for (float x : data) {
        auto b = static_cast<std::size_t>((double(x) - lo) / width);
        h.counts[std::min(b, n_bins - 1)] += 1;
    }
    h.total = data.size();
    return h;
}

std::vector<Peak> find_peaks(const Histogram &h, std::size_t smooth_radius, double prominence_floor) {
    const std::size_t n = h.bins();
    std::vector<double> s(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t a = i >= smooth_radius ? i - smooth_radius : 0;
        const std::size_t b = std::min(n - 1, i + smooth_radius);
        double acc = 0.0;
        for (std::size_t j = a; j <= b; ++j) acc += static_cast<double>(h.counts[j]);
        s[i] = acc / static_cast<double>(b - a + 1);
    }
    const double top = *std::max_element(s.begin(), s.end());

    std::vector<Peak> peaks;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && s[j + 1] == s[i]) ++j; // plateau [i, j]
        const bool rises = i == 0 || s[i - 1] < s[i];
        const bool falls = j == n - 1 || s[j + 1] < s[j];
        if (rises && falls && s[i] >= prominence_floor * top) peaks.push_back({i, h.bin_center(i), s[i]});
        i = j + 1;
    }
    return peaks;
}

AffineIntensityMap estimate_calibration(const Volume &t1, const Volume &t1ce, const CalibrationOptions &opt) {
    const auto pk_t1 = find_peaks(compute_histogram(t1, opt.n_bins), opt.smooth_radius, opt.prominence_floor);
    const auto pk_ce =
        find_peaks(compute_histogram(t1ce, opt.n_bins), opt.smooth_radius, opt.prominence_floor);
    if (pk_t1.size() < 2 || pk_ce.size() < 2)
        throw DataError(strprintf("calibration needs two histogram peaks (T1 has %zu, T1ce has %zu)",
                                  pk_t1.size(), pk_ce.size()));
    const double b1 = pk_t1[0].center, p1 = pk_t1[1].center;
    const double bc = pk_ce[0].center, pc = pk_ce[1].center;
    if (!(p1 > b1) || !(pc > bc)) throw DataError("peak ordering: tissue peak must exceed background peak");

    AffineIntensityMap m;
    m.scale = (p1 - b1) / (pc - bc);
    m.offset = b1 - m.scale * bc;
    m.validate();
    return m;
}

Volume apply_calibration(const Volume &v, const AffineIntensityMap &m) {
    m.validate();
    std::vector<float> out(v.data().size());
    std::transform(v.data().begin(), v.data().end(), out.begin(),
                   [&](float x) { return static_cast<float>(m(x)); });
    return v.with_data(std::move(out), v.unit());
}

} // namespace lowdose
