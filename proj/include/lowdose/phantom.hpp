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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace lowdose {

struct LesionSpec {
    /// Ellipsoid center, as an offset in mm from the volume center.
    std::array<double, 3> offset_mm{6.0, 0.0, 0.0};
    std::array<double, 3> radii_mm{5.0, 4.0, 5.0};
    /// Multiplier applied to lesion voxels in the contrast-enhanced image.
    double enhancement = 1.8;
    /// Sagittal split, mm from the lesion center along x. Voxels at or beyond
    /// the plane are intrameatal (label 1), the rest extrameatal (label 2).
    double split_offset_mm = 1.5;
};

struct PhantomSpec {
    std::uint64_t seed = 1;
    Dims dims{96, 96, 12};
    Spacing spacing{0.5, 0.5, 2.0};

    double background = 0.0;
    double tissue = 0.45;
    double texture_amplitude = 0.01;
    double skull = 1.0;
    double head_radius_mm = 21.0;
    double skull_thickness_mm = 2.0;

    LesionSpec lesion;

    /// T1ce display-window distortion x -> gain * x + bias.
    double window_gain = 1.6;
    double window_bias = 0.15;

    double noise_sigma = 0.01;
    /// When false the T1ce noise reuses the T1 stream (degenerate checks).
    bool independent_noise = true;

    void validate() const;
};

struct PhantomTruth {
    BoundingBox lesion_box;
    std::size_t lesion_voxels = 0;
    std::size_t split_x = 0; // first voxel column labelled intrameatal
    double tissue_mean = 0.0;     // noise-free T1, non-lesion tissue
    double lesion_mean_t1 = 0.0;  // noise-free T1
    double lesion_mean_t1ce = 0.0; // noise-free, before window distortion
    double window_gain = 1.0;
    double window_bias = 0.0;
};

struct Phantom {
    Volume t1;
    Volume t1ce;
    Mask mask;
    PhantomTruth truth;
};

Phantom generate_phantom(const PhantomSpec &spec);

enum class Split { Train, Validation, Test };
const char *split_name(Split s);

struct CohortOptions {
    std::size_t n_studies = 25;
    std::uint64_t base_seed = 2026;
    std::size_t studies_per_patient = 1;
    PhantomSpec base;
    // Per-study variation ranges (uniform).
    std::array<double, 2> radius_scale{0.75, 1.25};
    double offset_jitter_mm = 2.5;
    std::array<double, 2> enhancement{1.6, 2.0};
    std::array<double, 2> window_gain{1.2, 2.0};
    std::array<double, 2> window_bias{0.0, 0.3};
};

struct CohortStudy {
    std::string study_id;
    std::size_t patient_id = 0;
    Split split = Split::Train;
    PhantomSpec spec;
};

/// Study specs plus a patient-level 64/12/24 split: validation and test get
/// floor(12%) and floor(24%) of the patients, training takes the remainder.
std::vector<CohortStudy> plan_cohort(const CohortOptions &opt);

} // namespace lowdose
