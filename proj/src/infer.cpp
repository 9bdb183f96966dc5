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

#include "lowdose/infer.hpp"

#include "lowdose/error.hpp"
#include "util.hpp"

#include <algorithm>
#include <cmath>

namespace lowdose {

using detail::strprintf;

namespace {

void plan_axis(std::size_t len, std::size_t patch, std::size_t &pad_lo, std::size_t &pad_hi,
               std::vector<std::size_t> &origins) {
    pad_lo = pad_hi = 0;
    if (len < patch) {
        const std::size_t pad = patch - len;
        pad_lo = pad / 2;
        pad_hi = pad - pad_lo;
    }
    const std::size_t padded = len + pad_lo + pad_hi;
    const std::size_t stride = patch / 2;
    origins.clear();
    for (std::size_t o = 0; o + patch <= padded; o += stride) origins.push_back(o);
    if (origins.back() + patch < padded) origins.push_back(padded - patch);
}

} // namespace

WindowPlan plan_windows(std::size_t slice_rows, std::size_t slice_cols, PatchSize patch) {
    if (patch.rows < 2 || patch.cols < 2 || patch.rows % 2 || patch.cols % 2)
        throw ConfigError(strprintf("patch %zux%zu must have even extents >= 2", patch.rows, patch.cols));
    if (slice_rows == 0 || slice_cols == 0) throw DataError("empty slice");
    WindowPlan w;
    w.patch = patch;
    w.stride = {patch.rows / 2, patch.cols / 2};
    w.slice_rows = slice_rows;
    w.slice_cols = slice_cols;
    plan_axis(slice_rows, patch.rows, w.pad_top, w.pad_bottom, w.row_origins);
    plan_axis(slice_cols, patch.cols, w.pad_left, w.pad_right, w.col_origins);
    return w;
}

std::vector<double> gaussian_window(PatchSize patch, double sigma_frac) {
    if (!(sigma_frac > 0.0) || !std::isfinite(sigma_frac)) throw ConfigError("sigma_frac must be positive");
    auto axis = [&](std::size_t n) {
        std::vector<double> g(n);
        const double sigma = sigma_frac * static_cast<double>(n);
        const double c = 0.5 * static_cast<double>(n - 1);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(i) - c;
            g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        }
        return g;
    };
    const auto gr = axis(patch.rows), gc = axis(patch.cols);
    std::vector<double> w(patch.rows * patch.cols);
    double peak = 0.0;
    for (std::size_t r = 0; r < patch.rows; ++r)
        for (std::size_t c = 0; c < patch.cols; ++c) peak = std::max(peak, w[r * patch.cols + c] = gr[r] * gc[c]);
    const double floor = 1e-3 * peak;
    for (auto &v : w) v = std::max(v, floor);
    return w;
}

std::size_t reflect_index(long i, std::size_t n) {
    if (n == 1) return 0;
    const long period = 2 * (static_cast<long>(n) - 1);
    long m = i % period;
    if (m < 0) m += period;
    return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - m);
}

Planes IdentityPredictor::predict(const Planes &patch) const {
    Planes out(1, patch.height, patch.width);
    std::copy_n(patch.values.begin(), patch.height * patch.width, out.values.begin());
    return out;
}

Planes ConstantPredictor::predict(const Planes &patch) const { return Planes(1, patch.height, patch.width, value_); }

Volume restore_volume(const PatchPredictor &model, const Volume &low, const Volume *aux,
                      const RestoreOptions &opt) {
    const int channels = aux ? 2 : 1;
    if (model.channels() != channels)
        throw DataError(strprintf("model expects %d input channel(s) but %d supplied%s", model.channels(), channels,
                                  model.channels() == 2 ? " (pass the T1 volume as aux)" : ""));
    const Dims &d = low.dims();
    if (aux && !(aux->dims() == d)) throw DataError("aux volume dims differ from the low-dose volume");

    const WindowPlan plan = plan_windows(d.ny, d.nx, opt.patch);
    const auto weights = gaussian_window(opt.patch, opt.sigma_frac);
    const std::size_t ph = opt.patch.rows, pw = opt.patch.cols;
    const std::size_t R = plan.padded_rows(), C = plan.padded_cols();

    std::vector<float> out(d.count());
    std::vector<double> acc(R * C), wsum(R * C);
    Planes patch(static_cast<std::size_t>(channels), ph, pw);
    for (std::size_t z = 0; z < d.nz; ++z) {
        std::fill(acc.begin(), acc.end(), 0.0);
        std::fill(wsum.begin(), wsum.end(), 0.0);
        for (std::size_t r0 : plan.row_origins)
            for (std::size_t c0 : plan.col_origins) {
                for (std::size_t r = 0; r < ph; ++r) {
                    const std::size_t y =
                        reflect_index(static_cast<long>(r0 + r) - static_cast<long>(plan.pad_top), d.ny);
                    for (std::size_t c = 0; c < pw; ++c) {
                        const std::size_t x =
                            reflect_index(static_cast<long>(c0 + c) - static_cast<long>(plan.pad_left), d.nx);
                        patch.at(0, r, c) = low.at(x, y, z);
                        if (aux) patch.at(1, r, c) = aux->at(x, y, z);
                    }
                }
                const Planes pred = model.predict(patch);
                if (pred.height != ph || pred.width != pw || pred.values.size() != ph * pw)
                    throw DataError("predictor returned a patch of the wrong shape");
                for (std::size_t r = 0; r < ph; ++r)
                    for (std::size_t c = 0; c < pw; ++c) {
                        const double w = weights[r * pw + c];
                        const std::size_t i = (r0 + r) * C + c0 + c;
                        acc[i] += w * pred.values[r * pw + c];
                        wsum[i] += w;
                    }
            }
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x) {
                const std::size_t i = (y + plan.pad_top) * C + x + plan.pad_left;
                const double v = acc[i] / wsum[i];
                if (!std::isfinite(v))
                    throw NumericError(strprintf("non-finite restored value at (%zu,%zu,%zu)", x, y, z));
                out[d.index(x, y, z)] = static_cast<float>(v);
            }
    }
    return low.with_data(std::move(out), low.unit());
}

Volume restore_volume(const ModelParams &p, const Volume &low, const Volume *aux, const RestoreOptions &opt) {
    const ModelPredictor m(p);
    return restore_volume(m, low, aux, opt);
}

} // namespace lowdose
