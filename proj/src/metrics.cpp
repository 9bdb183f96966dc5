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

#include "lowdose/metrics.hpp"

#include "lowdose/error.hpp"
#include "util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lowdose {

namespace {

struct WindowStats {
    double mu_x, mu_y, var_x, var_y, cov;
};

// Two-pass weighted moments; weights sum to one.
WindowStats window_stats(std::span<const float> x, std::span<const float> y, std::size_t width,
                         std::size_t x0, std::size_t y0, std::size_t ww, std::size_t wh,
                         std::span<const double> w) {
    double mx = 0.0, my = 0.0;
    for (std::size_t r = 0; r < wh; ++r)
        for (std::size_t c = 0; c < ww; ++c) {
            const double wt = w[r * ww + c];
            const std::size_t idx = (y0 + r) * width + x0 + c;
            mx += wt * x[idx];
            my += wt * y[idx];
        }
    double vx = 0.0, vy = 0.0, cxy = 0.0;
    for (std::size_t r = 0; r < wh; ++r)
        for (std::size_t c = 0; c < ww; ++c) {
            const double wt = w[r * ww + c];
            const std::size_t idx = (y0 + r) * width + x0 + c;
            const double dx = x[idx] - mx, dy = y[idx] - my;
            vx += wt * dx * dx;
            vy += wt * dy * dy;
            cxy += wt * dx * dy;
        }
    return {mx, my, vx, vy, cxy};
}

double ssim_from_stats(const WindowStats &s, double c1, double c2) {
    const double num = (2.0 * s.mu_x * s.mu_y + c1) * (2.0 * s.cov + c2);
    const double den = (s.mu_x * s.mu_x + s.mu_y * s.mu_y + c1) * (s.var_x + s.var_y + c2);
    return num / den;
}

void check_pair(const Volume &test, const Volume &ref, const BoundingBox &box) {
    if (test.dims() != ref.dims()) throw DataError("metric inputs must share dims");
    if (!box.inside(test.dims())) throw DataError("metric box lies outside the volume");
}

} // namespace

double ssim_2d(std::span<const float> test, std::span<const float> ref, std::size_t width,
               std::size_t height, const SsimParams &p) {
    if (width == 0 || height == 0 || test.size() != width * height || ref.size() != test.size())
        throw DataError("ssim_2d: image shape mismatch");
    const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
    const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
    const auto win = static_cast<std::size_t>(p.window);

    if (width < win || height < win) {
        std::vector<double> w(width * height, 1.0 / static_cast<double>(width * height));
        return ssim_from_stats(window_stats(test, ref, width, 0, 0, width, height, w), c1, c2);
    }

    std::vector<double> g1(win);
    const double half = 0.5 * static_cast<double>(win - 1);
    for (std::size_t i = 0; i < win; ++i) {
        const double d = static_cast<double>(i) - half;
        g1[i] = std::exp(-d * d / (2.0 * p.sigma * p.sigma));
    }
    const double s1 = std::accumulate(g1.begin(), g1.end(), 0.0);
    std::vector<double> w(win * win);
    for (std::size_t r = 0; r < win; ++r)
        for (std::size_t c = 0; c < win; ++c) w[r * win + c] = (g1[r] / s1) * (g1[c] / s1);

    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t y0 = 0; y0 + win <= height; ++y0)
        for (std::size_t x0 = 0; x0 + win <= width; ++x0) {
            acc += ssim_from_stats(window_stats(test, ref, width, x0, y0, win, win, w), c1, c2);
            ++count;
        }
    return acc / static_cast<double>(count);
}

double ssim_roi(const Volume &test, const Volume &ref, const BoundingBox &box, const SsimParams &p) {
    check_pair(test, ref, box);
    const Volume a = crop(test, box), b = crop(ref, box);
    const Dims e = a.dims();
    const std::size_t plane = e.nx * e.ny;
    double acc = 0.0;
    for (std::size_t k = 0; k < e.nz; ++k)
        acc += ssim_2d(a.data().subspan(k * plane, plane), b.data().subspan(k * plane, plane), e.nx, e.ny, p);
    return acc / static_cast<double>(e.nz);
}

double psnr_roi(const Volume &test, const Volume &ref, const BoundingBox &box, double data_range) {
    check_pair(test, ref, box);
    double se = 0.0;
    std::size_t n = 0;
    for (std::size_t k = box.min[2]; k <= box.max[2]; ++k)
        for (std::size_t j = box.min[1]; j <= box.max[1]; ++j)
            for (std::size_t i = box.min[0]; i <= box.max[0]; ++i) {
                const double d = double(test.at(i, j, k)) - double(ref.at(i, j, k));
                se += d * d;
                ++n;
            }
    const double mse = se / static_cast<double>(n);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(data_range / std::sqrt(mse));
}

DiceResult dice(const Mask &a, const Mask &b, LabelSet labels) {
    if (a.dims() != b.dims()) throw DataError("dice: mask dims differ");
    std::size_t na = 0, nb = 0, both = 0;
    const auto la = a.labels(), lb = b.labels();
    for (std::size_t n = 0; n < la.size(); ++n) {
        const bool ia = labels.contains(la[n]), ib = labels.contains(lb[n]);
        na += ia;
        nb += ib;
        both += ia && ib;
    }
    if (na + nb == 0) return {1.0, true};
    return {2.0 * static_cast<double>(both) / static_cast<double>(na + nb), false};
}

std::vector<Index3> surface_voxels(const Mask &m, LabelSet labels) {
    const Dims &d = m.dims();
    auto in = [&](std::size_t i, std::size_t j, std::size_t k) { return labels.contains(m.at(i, j, k)); };
    std::vector<Index3> out;
    for (std::size_t k = 0; k < d.nz; ++k)
        for (std::size_t j = 0; j < d.ny; ++j)
            for (std::size_t i = 0; i < d.nx; ++i) {
                if (!in(i, j, k)) continue;
                const bool surface = i == 0 || j == 0 || k == 0 || i + 1 == d.nx || j + 1 == d.ny ||
                                     k + 1 == d.nz || !in(i - 1, j, k) || !in(i + 1, j, k) ||
                                     !in(i, j - 1, k) || !in(i, j + 1, k) || !in(i, j, k - 1) ||
                                     !in(i, j, k + 1);
                if (surface) out.push_back({i, j, k});
            }
    return out;
}

namespace {

constexpr double kFar = std::numeric_limits<double>::infinity();

// Squared distance transform along one line (Felzenszwalb & Huttenlocher),
// sample positions scaled by `step`.
void dt_line(std::vector<double> &f, double step, std::vector<double> &out, std::vector<std::size_t> &v,
             std::vector<double> &z) {
    const std::size_t n = f.size();
    out.assign(n, kFar);
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    std::size_t k = 0;
    std::size_t first = n;
    for (std::size_t q = 0; q < n; ++q)
        if (f[q] < kFar) {
            first = q;
            break;
        }
    if (first == n) return;
    v[0] = first;
    z[0] = -kFar;
    z[1] = kFar;
    for (std::size_t q = first + 1; q < n; ++q) {
        if (!(f[q] < kFar)) continue;
        const double pq = static_cast<double>(q) * step;
        auto meet = [&](std::size_t site) {
            const double pv = static_cast<double>(site) * step;
            return ((f[q] + pq * pq) - (f[site] + pv * pv)) / (2.0 * (pq - pv));
        };
        double s = meet(v[k]);
        while (s <= z[k]) s = meet(v[--k]); // z[0] = -inf stops the descent
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kFar;
    }
    k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        const double pq = static_cast<double>(q) * step;
        while (z[k + 1] < pq) ++k;
        const double dv = pq - static_cast<double>(v[k]) * step;
        out[q] = dv * dv + f[v[k]];
    }
}

// Exact squared Euclidean distance (mm^2) from every voxel of the grid `d`
// to the nearest site.
std::vector<double> squared_edt(const Dims &d, const std::vector<Index3> &sites, const Spacing &sp) {
    std::vector<double> g(d.count(), kFar);
    for (const auto &s : sites) g[d.index(s[0], s[1], s[2])] = 0.0;
    std::vector<double> f, out, z;
    std::vector<std::size_t> v;
    const std::array<std::size_t, 3> n{d.nx, d.ny, d.nz};
    for (int axis = 0; axis < 3; ++axis) {
        const std::size_t len = n[axis];
        f.resize(len);
        const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.nx : d.nx * d.ny;
        for (std::size_t base = 0; base < g.size(); ++base) {
            const Index3 c = d.coords(base);
            if (c[axis] != 0) continue;
            for (std::size_t t = 0; t < len; ++t) f[t] = g[base + t * stride];
            dt_line(f, sp[axis], out, v, z);
            for (std::size_t t = 0; t < len; ++t) g[base + t * stride] = out[t];
        }
    }
    return g;
}

} // namespace

std::vector<double> pooled_surface_distances(const Mask &a, const Mask &b, LabelSet labels,
                                             const Spacing &spacing) {
    if (a.dims() != b.dims()) throw DataError("surface distance: mask dims differ");
    const auto sa = surface_voxels(a, labels);
    const auto sb = surface_voxels(b, labels);
    if (sa.empty() || sb.empty()) return {};

    // Sites lie inside the union box of both surfaces, so the transform over
    // that sub-grid is exact.
    BoundingBox box{sa.front(), sa.front()};
    for (const auto *set : {&sa, &sb})
        for (const auto &p : *set)
            for (int ax = 0; ax < 3; ++ax) {
                box.min[ax] = std::min(box.min[ax], p[ax]);
                box.max[ax] = std::max(box.max[ax], p[ax]);
            }
    const Dims sub = box.extent();
    auto local = [&](const std::vector<Index3> &pts) {
        std::vector<Index3> out(pts.size());
        for (std::size_t n = 0; n < pts.size(); ++n)
            out[n] = {pts[n][0] - box.min[0], pts[n][1] - box.min[1], pts[n][2] - box.min[2]};
        return out;
    };
    const auto la = local(sa), lb = local(sb);
    const auto to_b = squared_edt(sub, lb, spacing);
    const auto to_a = squared_edt(sub, la, spacing);

    std::vector<double> pooled;
    pooled.reserve(la.size() + lb.size());
    for (const auto &p : la) pooled.push_back(std::sqrt(to_b[sub.index(p[0], p[1], p[2])]));
    for (const auto &p : lb) pooled.push_back(std::sqrt(to_a[sub.index(p[0], p[1], p[2])]));
    return pooled;
}

double percentile_linear(std::vector<double> values, double q) {
    if (values.empty()) throw DataError("percentile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::optional<double> hd95(const Mask &a, const Mask &b, LabelSet labels, const Spacing &spacing) {
    auto d = pooled_surface_distances(a, b, labels, spacing);
    if (d.empty()) return std::nullopt;
    return percentile_linear(std::move(d), 0.95);
}

std::optional<double> hd95(const Mask &a, const Mask &b, LabelSet labels) {
    return hd95(a, b, labels, a.spacing());
}

std::optional<double> asd(const Mask &a, const Mask &b, LabelSet labels, const Spacing &spacing) {
    const auto d = pooled_surface_distances(a, b, labels, spacing);
    if (d.empty()) return std::nullopt;
    return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

std::optional<double> asd(const Mask &a, const Mask &b, LabelSet labels) {
    return asd(a, b, labels, a.spacing());
}

Segmentation stand_in_segment(const Volume &v, const BoundingBox &roi, double threshold_frac,
                              std::size_t split_x) {
    const Dims &d = v.dims();
    if (!roi.inside(d)) throw DataError("segmentation ROI lies outside the volume");
    if (!(threshold_frac >= 0.0)) throw ConfigError("threshold fraction must be >= 0");

    float lo = std::numeric_limits<float>::max(), hi = std::numeric_limits<float>::lowest();
    for (std::size_t k = roi.min[2]; k <= roi.max[2]; ++k)
        for (std::size_t j = roi.min[1]; j <= roi.max[1]; ++j)
            for (std::size_t i = roi.min[0]; i <= roi.max[0]; ++i) {
                lo = std::min(lo, v.at(i, j, k));
                hi = std::max(hi, v.at(i, j, k));
            }
    const double thr = double(lo) + threshold_frac * (double(hi) - double(lo));

    // Candidate flags inside the ROI, then flood-fill components.
    const Dims e = roi.extent();
    std::vector<std::int32_t> comp(e.count(), -1);
    std::vector<char> cand(e.count(), 0);
    for (std::size_t k = 0; k < e.nz; ++k)
        for (std::size_t j = 0; j < e.ny; ++j)
            for (std::size_t i = 0; i < e.nx; ++i)
                cand[e.index(i, j, k)] = double(v.at(i + roi.min[0], j + roi.min[1], k + roi.min[2])) >= thr;

    std::int32_t best = -1, next = 0;
    std::size_t best_size = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < e.count(); ++s) {
        if (!cand[s] || comp[s] >= 0) continue;
        std::size_t size = 0;
        comp[s] = next;
        stack.push_back(s);
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            ++size;
            const Index3 c = e.coords(cur);
            const std::array<std::array<long, 3>, 6> nb{{{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}}};
            for (const auto &o : nb) {
                const long x = long(c[0]) + o[0], y = long(c[1]) + o[1], z = long(c[2]) + o[2];
                if (x < 0 || y < 0 || z < 0 || x >= long(e.nx) || y >= long(e.ny) || z >= long(e.nz)) continue;
                const std::size_t ni = e.index(std::size_t(x), std::size_t(y), std::size_t(z));
                if (cand[ni] && comp[ni] < 0) {
                    comp[ni] = next;
                    stack.push_back(ni);
                }
            }
        }
        if (size > best_size) {
            best_size = size;
            best = next;
        }
        ++next;
    }

    std::vector<std::uint8_t> labels(d.count(), 0);
    if (best >= 0) {
        for (std::size_t s = 0; s < e.count(); ++s) {
            if (comp[s] != best) continue;
            const Index3 c = e.coords(s);
            const std::size_t gi = c[0] + roi.min[0];
            labels[d.index(gi, c[1] + roi.min[1], c[2] + roi.min[2])] = gi >= split_x ? 1 : 2;
        }
    }
    return {Mask(d, v.spacing(), std::move(labels)), best < 0};
}

} // namespace lowdose
