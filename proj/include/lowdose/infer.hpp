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

// Sliding-window restoration of whole volumes, slice by slice.

#pragma once

#include "lowdose/model.hpp"
#include "lowdose/volume.hpp"

#include <optional>
#include <vector>

namespace lowdose {

struct PatchSize {
    std::size_t rows = 128;
    std::size_t cols = 160;
    bool operator==(const PatchSize &) const = default;
};

struct WindowPlan {
    PatchSize patch;
    PatchSize stride;
    std::size_t slice_rows = 0;
    std::size_t slice_cols = 0;
    // Reflect padding per side; the padded slice is
    // (pad_top + rows + pad_bottom) x (pad_left + cols + pad_right).
    std::size_t pad_top = 0, pad_bottom = 0, pad_left = 0, pad_right = 0;
    std::vector<std::size_t> row_origins; // in padded coordinates
    std::vector<std::size_t> col_origins;

    std::size_t padded_rows() const { return pad_top + slice_rows + pad_bottom; }
    std::size_t padded_cols() const { return pad_left + slice_cols + pad_right; }
};

/// Throws ConfigError unless both patch extents are even and >= 2.
WindowPlan plan_windows(std::size_t slice_rows, std::size_t slice_cols, PatchSize patch);

/// Row-major rows x cols separable Gaussian, sigma = sigma_frac * extent per
/// axis, floored at 1e-3 of the peak.
std::vector<double> gaussian_window(PatchSize patch, double sigma_frac);

/// Index into [0, n) for a reflected (mirror without edge repeat) position.
std::size_t reflect_index(long i, std::size_t n);

/// Anything that maps a channels x rows x cols patch to a 1 x rows x cols one.
class PatchPredictor {
public:
    virtual ~PatchPredictor() = default;
    virtual int channels() const = 0;
    virtual Planes predict(const Planes &patch) const = 0;
};

class IdentityPredictor final : public PatchPredictor {
public:
    int channels() const override { return 1; }
    Planes predict(const Planes &patch) const override;
};

class ConstantPredictor final : public PatchPredictor {
public:
    explicit ConstantPredictor(double value) : value_(value) {}
    int channels() const override { return 1; }
    Planes predict(const Planes &patch) const override;

private:
    double value_;
};

class ModelPredictor final : public PatchPredictor {
public:
    explicit ModelPredictor(const ModelParams &p) : p_(p) {}
    int channels() const override { return p_.arch.in_channels; }
    Planes predict(const Planes &patch) const override { return forward(p_, patch); }

private:
    const ModelParams &p_;
};

struct RestoreOptions {
    PatchSize patch;
    double sigma_frac = 0.125;
};

/// Gaussian-weighted sliding-window aggregation over every slice. `aux`
/// supplies the second input channel and must be present exactly when the
/// predictor takes two channels.
Volume restore_volume(const PatchPredictor &model, const Volume &low, const Volume *aux,
                      const RestoreOptions &opt);

Volume restore_volume(const ModelParams &p, const Volume &low, const Volume *aux, const RestoreOptions &opt);

} // namespace lowdose
