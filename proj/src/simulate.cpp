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

#include "lowdose/simulate.hpp"

#include "lowdose/error.hpp"
#include "util.hpp"

#include <algorithm>
#include <random>

namespace lowdose {

DoseFraction::DoseFraction(int beta_percent) : beta_(beta_percent) {
    if (beta_percent < 0 || beta_percent > 100)
        throw ConfigError(detail::strprintf("dose %d%% outside [0, 100]", beta_percent));
}

Volume simulate_low_dose(const Volume &t1, const Volume &t1ce_cal, DoseFraction beta,
                         std::optional<SimulationNoise> noise) {
    if (t1.dims() != t1ce_cal.dims() || t1.spacing() != t1ce_cal.spacing())
        throw DataError("T1 and calibrated T1ce must share dims and spacing");
    const double b = beta.fraction();
    const auto a = t1.data(), c = t1ce_cal.data();
    std::vector<float> out(a.size());
    for (std::size_t n = 0; n < a.size(); ++n)
        out[n] = static_cast<float>((1.0 - b) * double(a[n]) + b * double(c[n]));
    if (noise && noise->sigma > 0.0) {
        std::mt19937_64 rng(noise->seed);
        std::normal_distribution<double> g(0.0, noise->sigma);
        for (auto &x : out) x = static_cast<float>(double(x) + g(rng));
    }
    return t1.with_data(std::move(out), t1.unit());
}

NormalizedVolume normalize_unit_range(const Volume &v) {
    const auto d = v.data();
    const auto [mn, mx] = std::minmax_element(d.begin(), d.end());
    const double lo = *mn, hi = *mx;
    if (!(hi > lo)) throw DataError("cannot normalize a constant volume");
    std::vector<float> out(d.size());
    const double span = hi - lo;
    for (std::size_t n = 0; n < d.size(); ++n)
        out[n] = static_cast<float>(2.0 * (double(d[n]) - lo) / span - 1.0);
    return {v.with_data(std::move(out), "normalized"), lo, hi};
}

Volume denormalize(const Volume &v, double lo, double hi, const std::string &unit) {
    if (!(hi > lo)) throw DataError("denormalize needs hi > lo");
    std::vector<float> out(v.data().size());
    const double half = 0.5 * (hi - lo);
    std::transform(v.data().begin(), v.data().end(), out.begin(),
                   [&](float x) { return static_cast<float>((double(x) + 1.0) * half + lo); });
    return v.with_data(std::move(out), unit);
}

std::vector<DoseFraction> dose_grid() {
    std::vector<DoseFraction> g;
    for (int b = 0; b <= 90; b += 10) g.emplace_back(b);
    return g;
}

} // namespace lowdose
