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
#include "lowdose/metrics.hpp"
#include "lowdose/phantom.hpp"
#include "lowdose/simulate.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace lowdose;

namespace {

struct Pair {
    Volume t1;
    Volume cal;
    Mask mask;
};

Pair calibrated_phantom(std::uint64_t seed) {
    PhantomSpec spec;
    spec.seed = seed;
    spec.dims = {48, 48, 6};
    spec.spacing = {1.0, 1.0, 4.0};
    spec.lesion.radii_mm = {5.0, 4.0, 6.0};
    Phantom ph = generate_phantom(spec);
    Volume cal = apply_calibration(ph.t1ce, estimate_calibration(ph.t1, ph.t1ce));
    return {std::move(ph.t1), std::move(cal), std::move(ph.mask)};
}

} // namespace

TEST_CASE("dose fraction range") {
    CHECK(DoseFraction(0).fraction() == 0.0);
    CHECK(DoseFraction(100).fraction() == 1.0);
    CHECK_THROWS_AS(DoseFraction(-1), ConfigError);
    CHECK_THROWS_AS(DoseFraction(101), ConfigError);
}

TEST_CASE("dose grid is 0..90 in steps of 10") {
    const auto g = dose_grid();
    REQUIRE(g.size() == 10);
    CHECK(g.front().percent() == 0);
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i].percent() - g[i - 1].percent() == 10);
}

TEST_CASE("simulation endpoints and midpoint") {
    const Volume t1 = test::random_volume({6, 5, 4}, 1, 0.0, 1.0);
    const Volume ce = test::random_volume({6, 5, 4}, 2, 0.0, 2.0);
    CHECK(simulate_low_dose(t1, ce, DoseFraction(0)).data().size() == t1.data().size());
    CHECK(std::ranges::equal(simulate_low_dose(t1, ce, DoseFraction(0)).data(), t1.data()));
    CHECK(std::ranges::equal(simulate_low_dose(t1, ce, DoseFraction(100)).data(), ce.data()));

    const Volume a({1, 1, 1}, {1, 1, 1}, {0.2f}), b({1, 1, 1}, {1, 1, 1}, {0.8f});
    CHECK(simulate_low_dose(a, b, DoseFraction(50)).data()[0] == doctest::Approx(0.5).epsilon(1e-7));
}

TEST_CASE("simulation rejects misaligned inputs") {
    const Volume t1 = test::random_volume({6, 5, 4}, 1);
    CHECK_THROWS_AS(simulate_low_dose(t1, test::random_volume({6, 5, 3}, 2), DoseFraction(10)), DataError);
    CHECK_THROWS_AS(simulate_low_dose(t1, test::random_volume({6, 5, 4}, 2, -1, 1, {1, 1, 2}), DoseFraction(10)),
                    DataError);
}

TEST_CASE("simulation is convex and linear in beta") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Volume t1 = test::random_volume({7, 6, 3}, seed, -2.0, 2.0);
        const Volume ce = test::random_volume({7, 6, 3}, seed + 100, -2.0, 2.0);
        for (const auto &b : dose_grid()) {
            const Volume s = simulate_low_dose(t1, ce, b);
            for (std::size_t i = 0; i < s.data().size(); ++i) {
                CHECK(s.data()[i] >= std::min(t1.data()[i], ce.data()[i]));
                CHECK(s.data()[i] <= std::max(t1.data()[i], ce.data()[i]));
            }
        }
        for (int b1 : {0, 20, 40}) {
            const int b2 = b1 + 40;
            const Volume s1 = simulate_low_dose(t1, ce, DoseFraction(b1));
            const Volume s2 = simulate_low_dose(t1, ce, DoseFraction(b2));
            const Volume sm = simulate_low_dose(t1, ce, DoseFraction((b1 + b2) / 2));
            for (std::size_t i = 0; i < s1.data().size(); ++i)
                CHECK(std::abs(double(s1.data()[i]) + s2.data()[i] - 2.0 * sm.data()[i]) <= 1e-5);
        }
    }
}

TEST_CASE("phantom lesion enhancement scales with beta") {
    const Pair p = calibrated_phantom(3);
    auto lesion_gain = [&](const Volume &v) {
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < v.data().size(); ++i)
            if (p.mask.labels()[i]) {
                s += double(v.data()[i]) - double(p.t1.data()[i]);
                ++n;
            }
        return s / double(n);
    };
    const double full = lesion_gain(p.cal);
    REQUIRE(full > 0.0);
    for (const auto &b : dose_grid()) {
        const double g = lesion_gain(simulate_low_dose(p.t1, p.cal, b));
        CHECK(std::abs(g - b.fraction() * full) <= 1e-5 * full);
    }
}

TEST_CASE("normalization examples") {
    const NormalizedVolume a = normalize_unit_range(Volume({2, 1, 1}, {1, 1, 1}, {0.f, 10.f}));
    CHECK(a.volume.data()[0] == -1.f);
    CHECK(a.volume.data()[1] == 1.f);
    CHECK(a.lo == 0.0);
    CHECK(a.hi == 10.0);

    const Volume id({3, 1, 1}, {1, 1, 1}, {-1.f, 0.f, 1.f});
    CHECK(std::ranges::equal(normalize_unit_range(id).volume.data(), id.data()));

    CHECK_THROWS_AS(normalize_unit_range(test::constant_volume({3, 3, 3}, 4.f)), DataError);
}

TEST_CASE("normalization spans [-1, 1] and inverts") {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        const Volume v = test::random_volume({9, 7, 2}, seed, -50.0 * double(seed), 300.0);
        const NormalizedVolume n = normalize_unit_range(v);
        const auto [mn, mx] = std::minmax_element(n.volume.data().begin(), n.volume.data().end());
        CHECK(*mn == doctest::Approx(-1.0).epsilon(1e-7));
        CHECK(*mx == doctest::Approx(1.0).epsilon(1e-7));
        const Volume back = denormalize(n.volume, n.lo, n.hi);
        for (std::size_t i = 0; i < v.data().size(); ++i)
            CHECK(std::abs(back.data()[i] - v.data()[i]) <= 1e-5 * std::max(1.0, double(std::abs(v.data()[i]))));
    }
}

TEST_CASE("ROI SSIM against the standard dose does not decrease with beta") {
    const auto cohort = plan_cohort(CohortOptions{});
    for (std::size_t i = 0; i < 4; ++i) {
        Phantom ph = generate_phantom(cohort[i].spec);
        const Volume cal = apply_calibration(ph.t1ce, estimate_calibration(ph.t1, ph.t1ce));
        const Pair p{std::move(ph.t1), cal, std::move(ph.mask)};
        const Volume ref = normalize_unit_range(p.cal).volume;
        const BoundingBox box = mask_bounding_box(p.mask, {1, 2});
        double prev = -2.0;
        for (int beta = 0; beta <= 100; beta += 10) {
            const Volume low = normalize_unit_range(simulate_low_dose(p.t1, p.cal, DoseFraction(beta))).volume;
            const double s = ssim_roi(low, ref, box);
            CHECK(s >= prev);
            prev = s;
        }
        CHECK(prev == 1.0);
    }
}

TEST_CASE("opt-in noise is seeded and off by default") {
    const Volume t1 = test::random_volume({6, 5, 4}, 1);
    const Volume ce = test::random_volume({6, 5, 4}, 2);
    const Volume plain = simulate_low_dose(t1, ce, DoseFraction(30));
    CHECK(simulate_low_dose(t1, ce, DoseFraction(30), SimulationNoise{0.0, 5}) == plain);
    const Volume a = simulate_low_dose(t1, ce, DoseFraction(30), SimulationNoise{0.1, 5});
    const Volume b = simulate_low_dose(t1, ce, DoseFraction(30), SimulationNoise{0.1, 5});
    CHECK(a == b);
    CHECK_FALSE(a == plain);
}
