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
#include <optional>
#include <vector>

namespace lowdose {

/// Contrast dose as an integer percentage of the standard dose.
class DoseFraction {
public:
    explicit DoseFraction(int beta_percent);
    int percent() const noexcept { return beta_; }
    double fraction() const noexcept { return beta_ / 100.0; }
    auto operator<=>(const DoseFraction &) const = default;

private:
    int beta_;
};

/// Opt-in additive Gaussian noise; off unless explicitly requested.
struct SimulationNoise {
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

/// Voxelwise (1 - b) * T1 + b * T1ce_cal with b = beta / 100.
Volume simulate_low_dose(const Volume &t1, const Volume &t1ce_cal, DoseFraction beta,
                         std::optional<SimulationNoise> noise = std::nullopt);

struct NormalizedVolume {
    Volume volume;
    double lo;
    double hi;
};

/// Linear map sending min -> -1 and max -> +1. Throws on constant input.
NormalizedVolume normalize_unit_range(const Volume &v);

/// Inverse of normalize_unit_range for the recorded (lo, hi).
Volume denormalize(const Volume &v, double lo, double hi, const std::string &unit = "arbitrary");

/// 0, 10, ..., 90.
std::vector<DoseFraction> dose_grid();

} // namespace lowdose
