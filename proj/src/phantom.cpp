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

#include "lowdose/phantom.hpp"

#include "lowdose/error.hpp"
#include "util.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace lowdose {

using detail::strprintf;

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t which) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(which)};
    return std::mt19937_64(seq);
}

struct Wave {
    double kx, ky, kz, phase;
};

double position_mm(std::size_t i, std::size_t n, double s) {
    return (static_cast<double>(i) - 0.5 * static_cast<double>(n - 1)) * s;
}

} // namespace

void PhantomSpec::validate() const {
    if (dims.nx < 4 || dims.ny < 4 || dims.nz < 1) throw ConfigError("phantom dims too small");
    for (double s : spacing)
        if (!(s > 0.0)) throw ConfigError("phantom spacing must be > 0");
    if (!(window_gain > 0.0)) throw ConfigError("window gain must be > 0");
    if (!(lesion.enhancement >= 1.0)) throw ConfigError("lesion enhancement must be >= 1");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
    if (!(skull_thickness_mm > 0.0) || !(head_radius_mm > skull_thickness_mm))
        throw ConfigError("head radius must exceed skull thickness");
    for (double r : lesion.radii_mm)
        if (!(r > 0.0)) throw ConfigError("lesion radii must be > 0");

    const double half_x = 0.5 * static_cast<double>(dims.nx - 1) * spacing[0];
    const double half_y = 0.5 * static_cast<double>(dims.ny - 1) * spacing[1];
    const double half_z = 0.5 * static_cast<double>(dims.nz - 1) * spacing[2];
    if (head_radius_mm > std::min(half_x, half_y))
        throw ConfigError("head does not fit inside the field of view");
    const auto &o = lesion.offset_mm;
    const auto &r = lesion.radii_mm;
    const double inner = head_radius_mm - skull_thickness_mm;
    if (std::hypot(o[0], o[1]) + std::max(r[0], r[1]) > inner || std::abs(o[2]) + r[2] > half_z + 0.5 * spacing[2])
        throw DataError("lesion extends outside the head region");
}

const char *split_name(Split s) {
    switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "val";
    case Split::Test: return "test";
    }
    return "?";
}

Phantom generate_phantom(const PhantomSpec &spec) {
    spec.validate();
    const Dims &d = spec.dims;
    const Spacing &sp = spec.spacing;

    auto tex_rng = stream(spec.seed, 0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::array<Wave, 3> waves{};
    for (auto &w : waves) {
        const double wavelength = 8.0 + 8.0 * uni(tex_rng);
        const double angle = 2.0 * std::numbers::pi * uni(tex_rng);
        const double k = 2.0 * std::numbers::pi / wavelength;
        w = {k * std::cos(angle), k * std::sin(angle), 0.2 * k * (uni(tex_rng) - 0.5),
             2.0 * std::numbers::pi * uni(tex_rng)};
    }

    const std::size_t n = d.count();
    std::vector<double> anat(n), anat_ce(n);
    std::vector<std::uint8_t> labels(n, 0);
    const double inner = spec.head_radius_mm - spec.skull_thickness_mm;
    const auto &les = spec.lesion;
    const double split_x_mm = les.offset_mm[0] + les.split_offset_mm;

    PhantomTruth truth;
    truth.lesion_box = {{d.nx, d.ny, d.nz}, {0, 0, 0}};
    truth.split_x = d.nx;
    double tissue_sum = 0.0, les_sum = 0.0, les_ce_sum = 0.0;
    std::size_t tissue_count = 0;

    for (std::size_t k = 0; k < d.nz; ++k)
        for (std::size_t j = 0; j < d.ny; ++j)
            for (std::size_t i = 0; i < d.nx; ++i) {
                const std::size_t idx = d.index(i, j, k);
                const double x = position_mm(i, d.nx, sp[0]);
                const double y = position_mm(j, d.ny, sp[1]);
                const double z = position_mm(k, d.nz, sp[2]);
                const double r = std::hypot(x, y);
                double v = spec.background;
                if (r <= inner) {
                    double t = 0.0;
                    for (const auto &w : waves) t += std::cos(w.kx * x + w.ky * y + w.kz * z + w.phase);
                    v = spec.tissue + spec.texture_amplitude * t / 3.0;
                } else if (r <= spec.head_radius_mm) {
                    v = spec.skull;
                }
                anat[idx] = v;
                anat_ce[idx] = v;

                const double ex = (x - les.offset_mm[0]) / les.radii_mm[0];
                const double ey = (y - les.offset_mm[1]) / les.radii_mm[1];
                const double ez = (z - les.offset_mm[2]) / les.radii_mm[2];
                if (ex * ex + ey * ey + ez * ez <= 1.0) {
                    anat_ce[idx] = v * les.enhancement;
                    const bool intra = x >= split_x_mm;
                    labels[idx] = intra ? 1 : 2;
                    if (intra) truth.split_x = std::min(truth.split_x, i);
                    const Index3 p{i, j, k};
                    for (int a = 0; a < 3; ++a) {
                        truth.lesion_box.min[a] = std::min(truth.lesion_box.min[a], p[a]);
                        truth.lesion_box.max[a] = std::max(truth.lesion_box.max[a], p[a]);
                    }
                    ++truth.lesion_voxels;
                    les_sum += v;
                    les_ce_sum += anat_ce[idx];
                } else if (r <= inner) {
                    tissue_sum += v;
                    ++tissue_count;
                }
            }
    if (truth.lesion_voxels == 0) throw DataError("lesion does not cover any voxel");
    truth.tissue_mean = tissue_sum / static_cast<double>(tissue_count);
    truth.lesion_mean_t1 = les_sum / static_cast<double>(truth.lesion_voxels);
    truth.lesion_mean_t1ce = les_ce_sum / static_cast<double>(truth.lesion_voxels);
    truth.window_gain = spec.window_gain;
    truth.window_bias = spec.window_bias;

    auto noise_t1 = stream(spec.seed, 1);
    auto noise_ce = stream(spec.seed, spec.independent_noise ? 2 : 1);
    std::normal_distribution<double> g1(0.0, spec.noise_sigma), g2(0.0, spec.noise_sigma);
    std::vector<float> t1(n), t1ce(n);
    for (std::size_t idx = 0; idx < n; ++idx) {
        const double e1 = spec.noise_sigma > 0.0 ? g1(noise_t1) : 0.0;
        const double e2 = spec.noise_sigma > 0.0 ? g2(noise_ce) : 0.0;
        t1[idx] = static_cast<float>(anat[idx] + e1);
        t1ce[idx] = static_cast<float>(spec.window_gain * (anat_ce[idx] + e2) + spec.window_bias);
    }

    return {Volume(d, sp, std::move(t1), "arbitrary"), Volume(d, sp, std::move(t1ce), "arbitrary"),
            Mask(d, sp, std::move(labels)), truth};
}

std::vector<CohortStudy> plan_cohort(const CohortOptions &opt) {
    if (opt.n_studies == 0) throw ConfigError("cohort needs at least one study");
    if (opt.studies_per_patient == 0) throw ConfigError("studies_per_patient must be >= 1");

    std::vector<CohortStudy> studies;
    studies.reserve(opt.n_studies);
    auto rng = stream(opt.base_seed, 100);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto draw = [&](const std::array<double, 2> &r) { return r[0] + (r[1] - r[0]) * uni(rng); };

    for (std::size_t s = 0; s < opt.n_studies; ++s) {
        CohortStudy st;
        st.study_id = strprintf("study%03zu", s);
        st.patient_id = s / opt.studies_per_patient;
        st.spec = opt.base;
        st.spec.seed = opt.base_seed * 1000003ULL + s + 1;
        const double scale = draw(opt.radius_scale);
        for (auto &r : st.spec.lesion.radii_mm) r *= scale;
        for (int a = 0; a < 2; ++a)
            st.spec.lesion.offset_mm[a] += opt.offset_jitter_mm * (2.0 * uni(rng) - 1.0);
        st.spec.lesion.enhancement = draw(opt.enhancement);
        st.spec.window_gain = draw(opt.window_gain);
        st.spec.window_bias = draw(opt.window_bias);
        st.spec.validate();
        studies.push_back(st);
    }

    const std::size_t patients = studies.back().patient_id + 1;
    std::vector<std::size_t> order(patients);
    for (std::size_t p = 0; p < patients; ++p) order[p] = p;
    auto split_rng = stream(opt.base_seed, 200);
    std::shuffle(order.begin(), order.end(), split_rng);
    const std::size_t n_val = patients * 12 / 100;
    const std::size_t n_test = patients * 24 / 100;
    std::vector<Split> of_patient(patients, Split::Train);
    for (std::size_t r = 0; r < patients; ++r) {
        if (r < n_test) of_patient[order[r]] = Split::Test;
        else if (r < n_test + n_val) of_patient[order[r]] = Split::Validation;
    }
    for (auto &st : studies) st.split = of_patient[st.patient_id];
    return studies;
}

} // namespace lowdose
