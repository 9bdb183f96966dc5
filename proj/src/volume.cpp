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

#include "lowdose/volume.hpp"

#include "lowdose/error.hpp"
#include "util.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace lowdose {

namespace fs = std::filesystem;
using detail::strprintf;

namespace {

void check_geometry(const Dims &dims, const Spacing &spacing, std::size_t n) {
    if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1)
        throw DataError(strprintf("invalid dims %zux%zux%zu", dims.nx, dims.ny, dims.nz));
    for (double s : spacing)
        if (!(s > 0.0) || !std::isfinite(s))
            throw DataError("spacing components must be finite and > 0");
    if (n != dims.count())
        throw DataError(strprintf("payload holds %zu values but dims imply %zu", n, dims.count()));
}

template <class T>
void to_little_endian(std::vector<T> &) {}

template <>
void to_little_endian(std::vector<float> &v) {
    if constexpr (std::endian::native == std::endian::big) {
        for (auto &x : v) {
            auto u = std::bit_cast<std::uint32_t>(x);
            u = __builtin_bswap32(u);
            x = std::bit_cast<float>(u);
        }
    }
}

struct Header {
    Dims dims;
    Spacing spacing{};
    std::string dtype;
    std::string data;
    std::string unit;
};

std::string header_text(const Dims &d, const Spacing &s, const char *dtype, const std::string &raw,
                        const std::string &unit) {
    std::string out;
    out += strprintf("dims=%zu,%zu,%zu\n", d.nx, d.ny, d.nz);
    out += "spacing=" + detail::format_exact(s[0]) + "," + detail::format_exact(s[1]) + "," +
           detail::format_exact(s[2]) + "\n";
    out += std::string("dtype=") + dtype + "\n";
    out += "data=" + raw + "\n";
    out += "unit=" + unit + "\n";
    return out;
}

Header parse_header(const fs::path &path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open volume header '" + path.string() + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        auto t = detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw DataError("malformed header line in '" + path.string() + "': " + std::string(t));
        kv[std::string(detail::trim(t.substr(0, eq)))] = std::string(t.substr(eq + 1));
    }
    for (const char *key : {"dims", "spacing", "dtype", "data"})
        if (!kv.count(key))
            throw DataError(std::string("header '") + path.string() + "' lacks key '" + key + "'");

    Header h;
    const auto dims = detail::split(kv["dims"], ',');
    const auto sp = detail::split(kv["spacing"], ',');
    if (dims.size() != 3 || sp.size() != 3)
        throw DataError("dims and spacing need three components in '" + path.string() + "'");
    const auto nx = detail::parse_int(dims[0], "dims"), ny = detail::parse_int(dims[1], "dims"),
               nz = detail::parse_int(dims[2], "dims");
    if (nx < 1 || ny < 1 || nz < 1) throw DataError("dims must be >= 1 in '" + path.string() + "'");
    h.dims = {static_cast<std::size_t>(nx), static_cast<std::size_t>(ny), static_cast<std::size_t>(nz)};
    for (int a = 0; a < 3; ++a) h.spacing[a] = detail::parse_double(sp[a], "spacing");
    h.dtype = std::string(detail::trim(kv["dtype"]));
    h.data = std::string(detail::trim(kv["data"]));
    h.unit = kv.count("unit") ? kv["unit"] : std::string("arbitrary");
    return h;
}

template <class T>
std::vector<T> read_raw(const fs::path &header, const Header &h) {
    const fs::path raw = header.parent_path() / h.data;
    std::ifstream in(raw, std::ios::binary);
    if (!in) throw DataError("cannot open raw file '" + raw.string() + "'");
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    const std::size_t expected = h.dims.count() * sizeof(T);
    if (bytes != expected)
        throw DataError(strprintf("raw size mismatch for '%s': header implies %zu bytes, file has %zu",
                                  raw.string().c_str(), expected, bytes));
    std::vector<T> out(h.dims.count());
    in.read(reinterpret_cast<char *>(out.data()), static_cast<std::streamsize>(expected));
    if (!in) throw DataError("short read from '" + raw.string() + "'");
    to_little_endian(out);
    return out;
}

template <class T>
void write_files(const fs::path &header, const Dims &d, const Spacing &s, const char *dtype,
                 std::vector<T> payload, const std::string &unit) {
    const fs::path raw = raw_path_for(header);
    {
        std::ofstream out(header, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write header '" + header.string() + "'");
        out << header_text(d, s, dtype, raw.filename().string(), unit);
        if (!out) throw DataError("write failed for '" + header.string() + "'");
    }
    to_little_endian(payload);
    std::ofstream out(raw, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write raw file '" + raw.string() + "'");
    out.write(reinterpret_cast<const char *>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(T)));
    if (!out) throw DataError("write failed for '" + raw.string() + "'");
}

} // namespace

Volume::Volume(Dims dims, Spacing spacing, std::vector<float> data, std::string unit)
    : dims_(dims), spacing_(spacing), data_(std::move(data)), unit_(std::move(unit)) {
    check_geometry(dims_, spacing_, data_.size());
    for (std::size_t n = 0; n < data_.size(); ++n) {
        if (!std::isfinite(data_[n])) {
            const auto c = dims_.coords(n);
            throw DataError(strprintf("non-finite value at voxel (%zu,%zu,%zu)", c[0], c[1], c[2]));
        }
    }
    if (unit_.find('\n') != std::string::npos) throw DataError("unit tag must be a single line");
}

Volume Volume::with_data(std::vector<float> data, std::string unit) const {
    return Volume(dims_, spacing_, std::move(data), std::move(unit));
}

LabelSet region_labels(Region r) {
    switch (r) {
    case Region::Intrameatal: return {1};
    case Region::Extrameatal: return {2};
    case Region::Whole: return {1, 2};
    }
    return {};
}

const char *region_name(Region r) {
    switch (r) {
    case Region::Intrameatal: return "intra";
    case Region::Extrameatal: return "extra";
    case Region::Whole: return "whole";
    }
    return "?";
}

Mask::Mask(Dims dims, Spacing spacing, std::vector<std::uint8_t> labels)
    : dims_(dims), spacing_(spacing), labels_(std::move(labels)) {
    check_geometry(dims_, spacing_, labels_.size());
    for (std::size_t n = 0; n < labels_.size(); ++n) {
        if (labels_[n] > 2) {
            const auto c = dims_.coords(n);
            throw DataError(strprintf("label %u at voxel (%zu,%zu,%zu) is outside {0,1,2}",
                                      unsigned(labels_[n]), c[0], c[1], c[2]));
        }
    }
}

std::size_t Mask::count(LabelSet set) const noexcept {
    return static_cast<std::size_t>(
        std::count_if(labels_.begin(), labels_.end(), [&](auto l) { return set.contains(l); }));
}

BoundingBox expand(const BoundingBox &b, const Index3 &margin, const Dims &d) {
    const Index3 hi{d.nx - 1, d.ny - 1, d.nz - 1};
    BoundingBox out;
    for (int a = 0; a < 3; ++a) {
        out.min[a] = b.min[a] > margin[a] ? b.min[a] - margin[a] : 0;
        out.max[a] = std::min(b.max[a] + margin[a], hi[a]);
    }
    return out;
}

fs::path raw_path_for(const fs::path &header) {
    fs::path raw = header;
    raw.replace_extension(".raw");
    if (raw == header) raw += ".raw";
    return raw;
}

Volume read_volume(const fs::path &header) {
    const Header h = parse_header(header);
    if (h.dtype != "f32")
        throw DataError("expected dtype=f32 in '" + header.string() + "', got '" + h.dtype + "'");
    return Volume(h.dims, h.spacing, read_raw<float>(header, h), h.unit);
}

void write_volume(const Volume &v, const fs::path &header) {
    write_files(header, v.dims(), v.spacing(), "f32",
                std::vector<float>(v.data().begin(), v.data().end()), v.unit());
}

Mask read_mask(const fs::path &header) {
    const Header h = parse_header(header);
    if (h.dtype != "u8")
        throw DataError("expected dtype=u8 in '" + header.string() + "', got '" + h.dtype + "'");
    return Mask(h.dims, h.spacing, read_raw<std::uint8_t>(header, h));
}

void write_mask(const Mask &m, const fs::path &header) {
    write_files(header, m.dims(), m.spacing(), "u8",
                std::vector<std::uint8_t>(m.labels().begin(), m.labels().end()), "label");
}

BoundingBox mask_bounding_box(const Mask &m, LabelSet labels) {
    const auto &d = m.dims();
    BoundingBox b{{d.nx, d.ny, d.nz}, {0, 0, 0}};
    bool any = false;
    for (std::size_t k = 0; k < d.nz; ++k)
        for (std::size_t j = 0; j < d.ny; ++j)
            for (std::size_t i = 0; i < d.nx; ++i) {
                if (!labels.contains(m.at(i, j, k))) continue;
                any = true;
                const Index3 p{i, j, k};
                for (int a = 0; a < 3; ++a) {
                    b.min[a] = std::min(b.min[a], p[a]);
                    b.max[a] = std::max(b.max[a], p[a]);
                }
            }
    if (!any) throw DataError("empty mask: no voxel carries a selected label");
    return b;
}

namespace {

template <class T, class Get>
std::vector<T> crop_payload(const Dims &d, const BoundingBox &b, Get get) {
    if (!b.inside(d))
        throw DataError(strprintf("box (%zu,%zu,%zu)-(%zu,%zu,%zu) lies outside dims %zux%zux%zu",
                                  b.min[0], b.min[1], b.min[2], b.max[0], b.max[1], b.max[2],
                                  d.nx, d.ny, d.nz));
    const Dims e = b.extent();
    std::vector<T> out;
    out.reserve(e.count());
    for (std::size_t k = 0; k < e.nz; ++k)
        for (std::size_t j = 0; j < e.ny; ++j)
            for (std::size_t i = 0; i < e.nx; ++i)
                out.push_back(get(i + b.min[0], j + b.min[1], k + b.min[2]));
    return out;
}

} // namespace

Volume crop(const Volume &v, const BoundingBox &b) {
    auto data = crop_payload<float>(v.dims(), b, [&](auto i, auto j, auto k) { return v.at(i, j, k); });
    return Volume(b.extent(), v.spacing(), std::move(data), v.unit());
}

Mask crop(const Mask &m, const BoundingBox &b) {
    auto data =
        crop_payload<std::uint8_t>(m.dims(), b, [&](auto i, auto j, auto k) { return m.at(i, j, k); });
    return Mask(b.extent(), m.spacing(), std::move(data));
}

void export_slice_pgm(const Volume &v, std::size_t z, const fs::path &path,
                      std::optional<std::pair<double, double>> window) {
    const auto &d = v.dims();
    if (z >= d.nz) throw DataError(strprintf("slice %zu out of range (nz=%zu)", z, d.nz));
    const auto slice = v.data().subspan(z * d.nx * d.ny, d.nx * d.ny);
    double lo, hi;
    if (window) {
        std::tie(lo, hi) = *window;
    } else {
        const auto [mn, mx] = std::minmax_element(slice.begin(), slice.end());
        lo = *mn;
        hi = *mx;
    }
    if (!(hi > lo)) hi = lo + 1.0;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << "P5\n# window lo=" << detail::format_exact(lo) << " hi=" << detail::format_exact(hi)
        << " linear\n"
        << d.nx << " " << d.ny << "\n65535\n";
    std::vector<unsigned char> bytes;
    bytes.reserve(slice.size() * 2);
    for (float x : slice) {
        const double t = std::clamp((double(x) - lo) / (hi - lo), 0.0, 1.0);
        const auto q = static_cast<std::uint16_t>(std::lround(t * 65535.0));
        bytes.push_back(static_cast<unsigned char>(q >> 8));
        bytes.push_back(static_cast<unsigned char>(q & 0xff));
    }
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

} // namespace lowdose
