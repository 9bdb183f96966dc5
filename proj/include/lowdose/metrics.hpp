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

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lowdose {

/// Wang et al. constants with the data range fixed by the [-1, 1] convention.
struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 2.0;
};

/// SSIM of one 2D image pair (row-major, width x height). Images at least
/// `window` pixels on both sides use the Gaussian window over every valid
/// position; smaller images use one uniform window over the whole extent.
double ssim_2d(std::span<const float> test, std::span<const float> ref, std::size_t width,
               std::size_t height, const SsimParams &p = {});

/// Mean per-slice 2D SSIM over the box.
double ssim_roi(const Volume &test, const Volume &ref, const BoundingBox &box, const SsimParams &p = {});

/// 20 log10(L / sqrt(MSE)) over the box; +infinity when the crops are identical.
double psnr_roi(const Volume &test, const Volume &ref, const BoundingBox &box, double data_range = 2.0);

struct DiceResult {
    double value = 0.0;
    bool both_empty = false;
};

DiceResult dice(const Mask &a, const Mask &b, LabelSet labels);

/// Selected voxels with at least one 6-neighbour outside the selection; the
/// volume border counts as outside.
std::vector<Index3> surface_voxels(const Mask &m, LabelSet labels);

/// Pooled directed surface distances in mm: d(x, S_b) for x in S_a followed by
/// d(y, S_a) for y in S_b. Empty when either selection is empty.
std::vector<double> pooled_surface_distances(const Mask &a, const Mask &b, LabelSet labels,
                                             const Spacing &spacing);

/// Linear-interpolation percentile (q in [0, 1]) of an unsorted sample.
double percentile_linear(std::vector<double> values, double q);

/// 95th percentile of the pooled distances; nullopt when undefined.
std::optional<double> hd95(const Mask &a, const Mask &b, LabelSet labels, const Spacing &spacing);
std::optional<double> hd95(const Mask &a, const Mask &b, LabelSet labels);

/// Mean of the pooled distances; nullopt when undefined.
std::optional<double> asd(const Mask &a, const Mask &b, LabelSet labels, const Spacing &spacing);
std::optional<double> asd(const Mask &a, const Mask &b, LabelSet labels);

struct SegmenterOptions {
    double threshold_frac = 0.5;
    Index3 roi_margin{3, 3, 1};
};

struct Segmentation {
    Mask mask;
    bool empty = false;
};

/// Threshold segmentation standing in for a learned segmenter. Inside `roi`,
/// voxels >= min + threshold_frac * (max - min) are candidates; the largest
/// 6-connected component is kept and split at column `split_x` into
/// intrameatal (x >= split_x) and extrameatal labels.
Segmentation stand_in_segment(const Volume &v, const BoundingBox &roi, double threshold_frac,
                              std::size_t split_x);

} // namespace lowdose
