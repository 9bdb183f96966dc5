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

#include "lowdose/error.hpp"
#include "lowdose/phantom.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

using namespace lowdose;

TEST_CASE("generation is deterministic per seed") {
    PhantomSpec spec;
    spec.seed = 17;
    const Phantom a = generate_phantom(spec), b = generate_phantom(spec);
    CHECK(a.t1 == b.t1);
    CHECK(a.t1ce == b.t1ce);
    CHECK(a.mask == b.mask);
    spec.seed = 18;
    CHECK_FALSE(generate_phantom(spec).t1 == a.t1);
}

TEST_CASE("mask box equals the recorded lesion extent") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        PhantomSpec spec;
        spec.seed = seed;
        spec.lesion.offset_mm = {4.0 + double(seed), -2.0, 0.0};
        const Phantom ph = generate_phantom(spec);
        CHECK(mask_bounding_box(ph.mask, {1, 2}) == ph.truth.lesion_box);
        CHECK(ph.mask.count({1, 2}) == ph.truth.lesion_voxels);
        CHECK(ph.mask.count({1}) > 0);
        CHECK(ph.mask.count({2}) > 0);
        for (std::size_t i = 0; i < ph.mask.labels().size(); ++i) {
            const auto l = ph.mask.labels()[i];
            if (!l) continue;
            const std::size_t x = ph.mask.dims().coords(i)[0];
            CHECK((l == 1) == (x >= ph.truth.split_x));
        }
    }
}

TEST_CASE("degenerate spec reproduces T1 in T1ce") {
    PhantomSpec spec;
    spec.window_gain = 1.0;
    spec.window_bias = 0.0;
    spec.lesion.enhancement = 1.0;
    spec.independent_noise = false;
    const Phantom ph = generate_phantom(spec);
    CHECK(std::ranges::equal(ph.t1.data(), ph.t1ce.data()));
}

TEST_CASE("noise-free lesion contrast ratio equals the enhancement factor") {
    PhantomSpec spec;
    spec.noise_sigma = 0.0;
    spec.lesion.enhancement = 1.7;
    const Phantom ph = generate_phantom(spec);
    CHECK(ph.truth.lesion_mean_t1ce / ph.truth.lesion_mean_t1 == doctest::Approx(1.7).epsilon(1e-12));
    double s1 = 0.0, sc = 0.0;
    for (std::size_t i = 0; i < ph.t1.data().size(); ++i)
        if (ph.mask.labels()[i]) {
            s1 += ph.t1.data()[i];
            sc += (ph.t1ce.data()[i] - spec.window_bias) / spec.window_gain;
        }
    CHECK(sc / s1 == doctest::Approx(1.7).epsilon(1e-5));
}

TEST_CASE("spec validation") {
    PhantomSpec spec;
    spec.window_gain = 0.0;
    CHECK_THROWS_AS(generate_phantom(spec), ConfigError);
    spec = {};
    spec.lesion.enhancement = 0.9;
    CHECK_THROWS_AS(generate_phantom(spec), ConfigError);
    spec = {};
    spec.lesion.offset_mm = {15.0, 0.0, 0.0};
    CHECK_THROWS_AS(generate_phantom(spec), DataError);
}

TEST_CASE("cohort of 25 splits 16 / 3 / 6 by patient") {
    CohortOptions opt;
    const auto studies = plan_cohort(opt);
    REQUIRE(studies.size() == 25);
    std::map<Split, int> counts;
    for (const auto &s : studies) ++counts[s.split];
    CHECK(counts[Split::Train] == 16);
    CHECK(counts[Split::Validation] == 3);
    CHECK(counts[Split::Test] == 6);

    const auto again = plan_cohort(opt);
    for (std::size_t i = 0; i < studies.size(); ++i) {
        CHECK(studies[i].study_id == again[i].study_id);
        CHECK(studies[i].split == again[i].split);
        CHECK(studies[i].spec.seed == again[i].spec.seed);
    }
}

TEST_CASE("multi-study patients never span two splits") {
    CohortOptions opt;
    opt.n_studies = 40;
    opt.studies_per_patient = 3;
    const auto studies = plan_cohort(opt);
    std::map<std::size_t, std::set<Split>> of_patient;
    for (const auto &s : studies) of_patient[s.patient_id].insert(s.split);
    for (const auto &[p, splits] : of_patient) CHECK(splits.size() == 1);
    // 14 patients: floor(12%) = 1 validation, floor(24%) = 3 test.
    std::map<Split, std::set<std::size_t>> patients;
    for (const auto &s : studies) patients[s.split].insert(s.patient_id);
    CHECK(patients[Split::Validation].size() == 1);
    CHECK(patients[Split::Test].size() == 3);
}

TEST_CASE("cohort lesions stay inside the head") {
    CohortOptions opt;
    opt.n_studies = 12;
    for (const auto &s : plan_cohort(opt)) {
        const Phantom ph = generate_phantom(s.spec);
        const double inner = s.spec.head_radius_mm - s.spec.skull_thickness_mm;
        for (std::size_t i = 0; i < ph.mask.labels().size(); ++i) {
            if (!ph.mask.labels()[i]) continue;
            const Index3 p = ph.mask.dims().coords(i);
            const double x = (double(p[0]) - 0.5 * double(ph.mask.dims().nx - 1)) * s.spec.spacing[0];
            const double y = (double(p[1]) - 0.5 * double(ph.mask.dims().ny - 1)) * s.spec.spacing[1];
            CHECK(std::hypot(x, y) <= inner);
        }
    }
    opt.n_studies = 0;
    CHECK_THROWS_AS(plan_cohort(opt), ConfigError);
}
