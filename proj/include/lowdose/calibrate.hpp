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

#include "lowdose/volume.hpp"

#include <cstdint>
#include <vector>

namespace lowdose {

struct Histogram {
    std::vector<double> bin_edges; // n_bins + 1, strictly increasing
    std::vector<std::uint64_t> counts;
    std::uint64_t total = 0;

    std::size_t bins() const noexcept { return counts.size(); }
    double bin_width() const noexcept { return bin_edges[1] - bin_edges[0]; }
    double bin_center(std::size_t i) const noexcept { return 0.5 * (bin_edges[i] + bin_edges[i + 1]); }
};

struct Peak {
    std::size_t bin = 0;
    double center = 0.0;
    double height = 0.0; // smoothed count
};

/// x -> scale * x + offset
struct AffineIntensityMap {
    double scale = 1.0;
    double offset = 0.0;

    double operator()(double x) const noexcept { return scale * x + offset; }
    AffineIntensityMap inverse() const;
    void validate() const;
};

struct CalibrationOptions {
    std::size_t n_bins = 256;
    std::size_t smooth_radius = 2;
    double prominence_floor = 0.01;
};

/// Equal-width histogram over [min, max]; the maximum lands in the last bin.
Histogram compute_histogram(const Volume &v, std::size_t n_bins);

/// Moving-average smoothing (truncated at the edges) followed by strict local
/// maxima; plateaus report their leftmost bin. Peaks lower than
/// `prominence_floor` times the highest smoothed bin are dropped.
std::vector<Peak> find_peaks(const Histogram &h, std::size_t smooth_radius,
                             double prominence_floor = 0.01);

/// Two-anchor fit: the background (first) and tissue (second) peaks of the
/// T1ce histogram are sent onto the corresponding T1 peaks.
AffineIntensityMap estimate_calibration(const Volume &t1, const Volume &t1ce,
                                        const CalibrationOptions &opt = {});

Volume apply_calibration(const Volume &v, const AffineIntensityMap &m);

} // namespace lowdose
