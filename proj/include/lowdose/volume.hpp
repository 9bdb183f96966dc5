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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lowdose {

using Index3 = std::array<std::size_t, 3>;
using Spacing = std::array<double, 3>;

struct Dims {
    std::size_t nx = 1;
    std::size_t ny = 1;
    std::size_t nz = 1;

    std::size_t count() const noexcept { return nx * ny * nz; }
    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return i + nx * (j + ny * k);
    }
    Index3 coords(std::size_t linear) const noexcept {
        return {linear % nx, (linear / nx) % ny, linear / (nx * ny)};
    }
    bool operator==(const Dims &) const = default;
};

/// 3D scalar grid, x-fastest. Immutable once built; every constructor
/// validates dims, spacing and finiteness of the payload.
class Volume {
public:
    Volume(Dims dims, Spacing spacing, std::vector<float> data, std::string unit = "arbitrary");

    const Dims &dims() const noexcept { return dims_; }
    const Spacing &spacing() const noexcept { return spacing_; }
    const std::string &unit() const noexcept { return unit_; }
    std::span<const float> data() const noexcept { return data_; }
    float at(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return data_[dims_.index(i, j, k)];
    }

    /// Copy of this volume carrying `data` instead (same geometry).
    Volume with_data(std::vector<float> data, std::string unit) const;

    bool operator==(const Volume &) const = default;

private:
    Dims dims_;
    Spacing spacing_;
    std::vector<float> data_;
    std::string unit_;
};

enum class Label : std::uint8_t { Background = 0, Intrameatal = 1, Extrameatal = 2 };

/// Small set of mask labels, stored as a bitmask over label values.
class LabelSet {
public:
    constexpr LabelSet() = default;
    constexpr LabelSet(std::initializer_list<std::uint8_t> labels) {
        for (auto l : labels) bits_ |= static_cast<std::uint8_t>(1u << l);
    }
    constexpr bool contains(std::uint8_t label) const noexcept {
        return label < 8 && (bits_ >> label) & 1u;
    }
    constexpr bool empty() const noexcept { return bits_ == 0; }
    constexpr std::uint8_t bits() const noexcept { return bits_; }
    static constexpr LabelSet from_bits(std::uint8_t bits) {
        LabelSet s;
        s.bits_ = bits;
        return s;
    }

private:
    std::uint8_t bits_ = 0;
};

/// Tumor sub-regions used throughout evaluation.
enum class Region { Intrameatal, Extrameatal, Whole };

LabelSet region_labels(Region r);
const char *region_name(Region r);

class Mask {
public:
    Mask(Dims dims, Spacing spacing, std::vector<std::uint8_t> labels);

    const Dims &dims() const noexcept { return dims_; }
    const Spacing &spacing() const noexcept { return spacing_; }
    std::span<const std::uint8_t> labels() const noexcept { return labels_; }
    std::uint8_t at(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return labels_[dims_.index(i, j, k)];
    }
    std::size_t count(LabelSet set) const noexcept;

    bool operator==(const Mask &) const = default;

private:
    Dims dims_;
    Spacing spacing_;
    std::vector<std::uint8_t> labels_;
};

/// Inclusive voxel-index box.
struct BoundingBox {
    Index3 min{};
    Index3 max{};

    Dims extent() const noexcept {
        return {max[0] - min[0] + 1, max[1] - min[1] + 1, max[2] - min[2] + 1};
    }
    bool inside(const Dims &d) const noexcept {
        return min[0] <= max[0] && min[1] <= max[1] && min[2] <= max[2] && max[0] < d.nx &&
               max[1] < d.ny && max[2] < d.nz;
    }
    bool operator==(const BoundingBox &) const = default;
};

/// Box grown by `margin` voxels per axis, clamped to `d`.
BoundingBox expand(const BoundingBox &b, const Index3 &margin, const Dims &d);

Volume read_volume(const std::filesystem::path &header);
void write_volume(const Volume &v, const std::filesystem::path &header);
Mask read_mask(const std::filesystem::path &header);
void write_mask(const Mask &m, const std::filesystem::path &header);

/// Tightest box around voxels whose label is in `labels`. Throws DataError
/// ("empty mask") when nothing is selected.
BoundingBox mask_bounding_box(const Mask &m, LabelSet labels);

Volume crop(const Volume &v, const BoundingBox &b);
Mask crop(const Mask &m, const BoundingBox &b);

/// Writes slice `z` as a 16-bit binary PGM. The window defaults to the
/// slice's min/max and is recorded in the comment line.
void export_slice_pgm(const Volume &v, std::size_t z, const std::filesystem::path &path,
                      std::optional<std::pair<double, double>> window = std::nullopt);

/// Raw file path a header refers to (sibling file with a .raw extension).
std::filesystem::path raw_path_for(const std::filesystem::path &header);

} // namespace lowdose
