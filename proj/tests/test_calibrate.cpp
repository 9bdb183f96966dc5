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
#include "lowdose/phantom.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace lowdose;

namespace {

Histogram from_counts(std::vector<std::uint64_t> counts) {
    Histogram h;
    for (std::size_t i = 0; i <= counts.size(); ++i) h.bin_edges.push_back(double(i));
    h.total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    h.counts = std::move(counts);
    return h;
}

// Two-valued volume: `n_lo` voxels at lo and `n_hi` at hi.
Volume two_level(float lo, std::size_t n_lo, float hi, std::size_t n_hi) {
    std::vector<float> v(n_lo, lo);
    v.insert(v.end(), n_hi, hi);
    const Dims d{v.size(), 1, 1};
    return Volume(d, {1, 1, 1}, std::move(v));
}

} // namespace

TEST_CASE("histogram of {0,0,1,1} with 2 bins") {
    const Histogram h = compute_histogram(Volume({4, 1, 1}, {1, 1, 1}, {0.f, 0.f, 1.f, 1.f}), 2);
    CHECK(h.counts == std::vector<std::uint64_t>{2, 2});
    CHECK(h.total == 4);
    CHECK(h.bin_edges.front() == 0.0);
    CHECK(h.bin_edges.back() == 1.0);
}

TEST_CASE("histogram conserves voxels and has increasing edges") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Volume v = test::random_volume({7, 5, 3}, seed);
        const std::size_t bins = 2 + seed * 13;
        const Histogram h = compute_histogram(v, bins);
        CHECK(h.bins() == bins);
        CHECK(h.total == v.dims().count());
        CHECK(std::accumulate(h.counts.begin(), h.counts.end(), std::uint64_t{0}) == h.total);
        for (std::size_t i = 0; i < bins; ++i) CHECK(h.bin_edges[i] < h.bin_edges[i + 1]);
        CHECK(h.counts.back() >= 1);
    }
}

TEST_CASE("histogram errors") {
    CHECK_THROWS_AS(compute_histogram(test::constant_volume({3, 3, 1}, 2.f), 16), DataError);
    CHECK_THROWS_AS(compute_histogram(test::random_volume({3, 3, 1}, 1), 1), ConfigError);
}

TEST_CASE("find_peaks examples") {
    const auto p = find_peaks(from_counts({9, 1, 1, 9, 1}), 0);
    REQUIRE(p.size() == 2);
    CHECK(p[0].bin == 0);
    CHECK(p[1].bin == 3);

    const auto mono = find_peaks(from_counts({1, 2, 3, 4, 5, 6}), 1);
    REQUIRE(mono.size() == 1);
    CHECK(mono[0].bin == 5);

    const auto plateau = find_peaks(from_counts({0, 4, 4, 4, 0}), 0);
    REQUIRE(plateau.size() == 1);
    CHECK(plateau[0].bin == 1);

    const auto floor = find_peaks(from_counts({1000, 0, 5, 0, 0}), 0);
    REQUIRE(floor.size() == 1);
    CHECK(floor[0].bin == 0);
}

TEST_CASE("find_peaks on a reversed histogram mirrors positions") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::uint64_t> c(40);
        for (auto &x : c) x = rng() % 50;
        auto rev = c;
        std::reverse(rev.begin(), rev.end());
        const auto a = find_peaks(from_counts(c), 0), b = find_peaks(from_counts(rev), 0);
        // Plateaus report their leftmost bin, so compare strict-peak sets only.
        std::vector<std::size_t> pa, pb;
        for (const auto &p : a)
            if (p.bin + 1 >= c.size() || c[p.bin + 1] != c[p.bin]) pa.push_back(c.size() - 1 - p.bin);
        for (const auto &p : b)
            if (p.bin + 1 >= rev.size() || rev[p.bin + 1] != rev[p.bin]) pb.push_back(p.bin);
        std::sort(pa.begin(), pa.end());
        std::vector<std::size_t> common;
        std::set_intersection(pa.begin(), pa.end(), pb.begin(), pb.end(), std::back_inserter(common));
        CHECK(common == pa);
    }
}

TEST_CASE("calibration example: peaks (0, 200) onto (0, 100)") {
    const Volume t1 = two_level(0.f, 600, 100.f, 400);
    const Volume ce = two_level(0.f, 600, 200.f, 400);
    const AffineIntensityMap m = estimate_calibration(t1, ce);
    CHECK(m.scale == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(m.offset == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("identical histograms calibrate to the identity") {
    PhantomSpec spec;
    const Phantom ph = generate_phantom(spec);
    const AffineIntensityMap m = estimate_calibration(ph.t1, ph.t1);
    CHECK(m.scale == 1.0);
    CHECK(m.offset == 0.0);
}

TEST_CASE("calibration errors") {
    const Volume two = two_level(0.f, 600, 100.f, 400);
    const Volume one_peak = two_level(0.f, 1000, 1.f, 1); // the outlier falls under the 1% floor
    CHECK(find_peaks(compute_histogram(one_peak, 256), 2).size() == 1);
    CHECK_THROWS_AS(estimate_calibration(two, one_peak), DataError);
    CHECK_THROWS_AS(estimate_calibration(one_peak, two), DataError);
    CHECK_THROWS_AS(AffineIntensityMap({0.0, 1.0}).validate(), DataError);
    CHECK_THROWS_AS(AffineIntensityMap({-2.0, 1.0}).inverse(), DataError);
}

TEST_CASE("phantom T1 histogram: two retained peaks besides the skull, mode at the tissue level") {
    PhantomSpec spec;
    spec.skull = 0.45; // fold the skull into the tissue level so only two modes remain
    const Phantom ph = generate_phantom(spec);
    const Histogram h = compute_histogram(ph.t1, 256);
    const auto peaks = find_peaks(h, 2);
    CHECK(peaks.size() == 2);
    const auto mode = std::max_element(h.counts.begin() + 64, h.counts.end()) - h.counts.begin();
    CHECK(std::abs(h.bin_center(std::size_t(mode)) - ph.truth.tissue_mean) <= h.bin_width() + 0.01);
}

TEST_CASE("calibration inverts injected window distortions") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        PhantomSpec spec;
        spec.seed = seed;
        spec.window_gain = 1.1 + 0.15 * double(seed);
        spec.window_bias = 0.05 * double(seed);
        const Phantom ph = generate_phantom(spec);
        const AffineIntensityMap m = estimate_calibration(ph.t1, ph.t1ce);
        const Histogram hc = compute_histogram(ph.t1ce, 256);
        CHECK(std::abs(m.scale - 1.0 / spec.window_gain) <= 0.05 / spec.window_gain);
        CHECK(std::abs(m.offset + spec.window_bias / spec.window_gain) <= 2.0 * hc.bin_width() * m.scale);
    }
}

TEST_CASE("apply_calibration is affine and invertible") {
    const Volume v({1, 1, 1}, {1, 1, 1}, {3.f});
    CHECK(apply_calibration(v, {2.0, 1.0}).data()[0] == 7.f);
    const Volume r = test::random_volume({6, 5, 2}, 8, -3.0, 3.0);
    CHECK(apply_calibration(r, {}) == r);

    const AffineIntensityMap m{1.7, -0.3};
    const Volume there = apply_calibration(r, m);
    const Volume back = apply_calibration(there, m.inverse());
    for (std::size_t i = 0; i < r.data().size(); ++i) {
        CHECK(std::abs(back.data()[i] - r.data()[i]) <= 1e-5);
        const std::size_t j = (i + 1) % r.data().size(), k = (i + 2) % r.data().size();
        // f(a) - 2 f(mid) + f(c) = 0 whenever a - 2 mid + c = 0.
        const double a = r.data()[i], c = r.data()[k];
        const double mid = 0.5 * (a + c);
        const double lhs = m(a) - 2.0 * m(mid) + m(c);
        CHECK(std::abs(lhs) <= 1e-5 * (std::abs(m(a)) + std::abs(m(c)) + 1.0));
        (void)j;
    }
}

TEST_CASE("estimated scale is covariant with an intensity gain") {
    PhantomSpec spec;
    spec.seed = 21;
    const Phantom ph = generate_phantom(spec);
    const AffineIntensityMap base = estimate_calibration(ph.t1, ph.t1ce);
    for (double g : {0.5, 2.0, 3.0}) {
        std::vector<float> scaled(ph.t1ce.data().begin(), ph.t1ce.data().end());
        for (auto &x : scaled) x = static_cast<float>(g * x);
        const AffineIntensityMap m = estimate_calibration(ph.t1, ph.t1ce.with_data(scaled, "arbitrary"));
        CHECK(m.scale == doctest::Approx(base.scale / g).epsilon(0.02));
    }
}
