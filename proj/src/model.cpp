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

#include "lowdose/model.hpp"

#include "lowdose/error.hpp"
#include "util.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace lowdose {

using detail::strprintf;

void ArchConfig::validate() const {
    if (enc_layers < 1 || mod_channels < 1 || hidden < 1)
        throw ConfigError("architecture has a zero-sized layer");
    if (dec_layers < 2) throw ConfigError("decoder needs at least 2 layers");
    if (in_channels != 1 && in_channels != 2) throw ConfigError("input channels must be 1 or 2");
}

std::vector<ParamBlock> generator_layout(const ArchConfig &a) {
    a.validate();
    std::vector<ParamBlock> blocks;
    std::size_t off = 0;
    auto add = [&](std::string name, std::size_t size, std::size_t fan_in, bool weight) {
        blocks.push_back({std::move(name), off, size, fan_in, weight});
        off += size;
    };
    const auto m = static_cast<std::size_t>(a.mod_channels);
    const auto h = static_cast<std::size_t>(a.hidden);
    for (int l = 0; l < a.enc_layers; ++l) {
        const std::size_t cin = l == 0 ? static_cast<std::size_t>(a.in_channels) : m;
        add(strprintf("encoder.%d.weight", l), m * cin * 9, cin * 9, true);
        add(strprintf("encoder.%d.bias", l), m, cin * 9, false);
    }
    for (int l = 0; l < a.dec_layers; ++l) {
        const std::size_t in = l == 0 ? 2 : h;
        const std::size_t out = l == a.dec_layers - 1 ? 1 : h;
        add(strprintf("decoder.%d.weight", l), out * in, in, true);
        add(strprintf("decoder.%d.bias", l), out, in, false);
    }
    for (int l = 0; l < a.dec_layers - 1; ++l) add(strprintf("shift.%d.weight", l), h * m, m, true);
    return blocks;
}

std::size_t ArchConfig::parameter_count() const {
    const auto blocks = generator_layout(*this);
    return blocks.back().offset + blocks.back().size;
}

std::vector<ParamBlock> discriminator_layout(const DiscConfig &d) {
    if (d.width < 1) throw ConfigError("discriminator width must be >= 1");
    const auto w = static_cast<std::size_t>(d.width);
    return {{"disc.0.weight", 0, w * 9, 9, true},
            {"disc.0.bias", w * 9, w, 9, false},
            {"disc.1.weight", w * 10, w * 9, w * 9, true},
            {"disc.1.bias", w * 19, 1, w * 9, false}};
}

std::string parameter_path(const std::vector<ParamBlock> &layout, std::size_t index) {
    for (const auto &b : layout)
        if (index >= b.offset && index < b.offset + b.size) return strprintf("%s[%zu]", b.name.c_str(), index - b.offset);
    return strprintf("param[%zu]", index);
}

namespace {

std::vector<double> init_block_values(const std::vector<ParamBlock> &layout, std::mt19937_64 &rng) {
    const auto &last = layout.back();
    std::vector<double> v(last.offset + last.size);
    for (const auto &b : layout) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(b.fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (std::size_t i = 0; i < b.size; ++i) v[b.offset + i] = static_cast<float>(u(rng));
    }
    return v;
}

} // namespace

ModelParams init_model(const ArchConfig &a, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ModelParams p;
    p.arch = a;
    p.generator = init_block_values(generator_layout(a), rng);
    return p;
}

void init_discriminator(ModelParams &p, const DiscConfig &d, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    p.disc = d;
    p.discriminator = init_block_values(discriminator_layout(d), rng);
}

double grid_coordinate(std::size_t i, std::size_t n) {
    if (n <= 1) return 0.0;
    return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

// 3x3 convolution, zero padding 1. in: [cin][h][w], weight: [cout][cin][3][3].
Planes conv3x3(const Planes &in, const double *w, const double *b, std::size_t cout, std::size_t stride) {
    const std::size_t ho = (in.height - 1) / stride + 1, wo = (in.width - 1) / stride + 1;
    Planes out(cout, ho, wo);
    for (std::size_t o = 0; o < cout; ++o) {
        double *dst = &out.values[o * ho * wo];
        std::fill(dst, dst + ho * wo, b[o]);
        for (std::size_t c = 0; c < in.channels; ++c) {
            const double *k = w + (o * in.channels + c) * 9;
            const double *src = &in.values[c * in.height * in.width];
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (int ky = 0; ky < 3; ++ky) {
                    const long iy = long(oy * stride) + ky - 1;
                    if (iy < 0 || iy >= long(in.height)) continue;
                    const double *row = src + std::size_t(iy) * in.width;
                    double *drow = dst + oy * wo;
                    for (int kx = 0; kx < 3; ++kx) {
                        const double kv = k[ky * 3 + kx];
                        for (std::size_t ox = 0; ox < wo; ++ox) {
                            const long ix = long(ox * stride) + kx - 1;
                            if (ix < 0 || ix >= long(in.width)) continue;
                            drow[ox] += kv * row[ix];
                        }
                    }
                }
        }
    }
    return out;
}

// Accumulates weight/bias gradients (if non-null) and returns d(in) when asked.
void conv3x3_backward(const Planes &in, const double *w, std::size_t cout, std::size_t stride,
                      const Planes &dout, double *dw, double *db, Planes *din) {
    const std::size_t ho = dout.height, wo = dout.width;
    if (din) *din = Planes(in.channels, in.height, in.width);
    for (std::size_t o = 0; o < cout; ++o) {
        const double *g = &dout.values[o * ho * wo];
        if (db)
            for (std::size_t t = 0; t < ho * wo; ++t) db[o] += g[t];
        for (std::size_t c = 0; c < in.channels; ++c) {
            const double *k = w + (o * in.channels + c) * 9;
            double *dk = dw ? dw + (o * in.channels + c) * 9 : nullptr;
            const double *src = &in.values[c * in.height * in.width];
            double *dsrc = din ? &din->values[c * in.height * in.width] : nullptr;
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (int ky = 0; ky < 3; ++ky) {
                    const long iy = long(oy * stride) + ky - 1;
                    if (iy < 0 || iy >= long(in.height)) continue;
                    const double *row = src + std::size_t(iy) * in.width;
                    double *drow = dsrc ? dsrc + std::size_t(iy) * in.width : nullptr;
                    const double *grow = g + oy * wo;
                    for (int kx = 0; kx < 3; ++kx) {
                        double acc = 0.0;
                        const double kv = k[ky * 3 + kx];
                        for (std::size_t ox = 0; ox < wo; ++ox) {
                            const long ix = long(ox * stride) + kx - 1;
                            if (ix < 0 || ix >= long(in.width)) continue;
                            acc += grow[ox] * row[ix];
                            if (drow) drow[ix] += kv * grow[ox];
                        }
                        if (dk) dk[ky * 3 + kx] += acc;
                    }
                }
        }
    }
}

struct GenView {
    const ArchConfig &a;
    const std::vector<ParamBlock> layout;
    explicit GenView(const ArchConfig &arch) : a(arch), layout(generator_layout(arch)) {}
    const ParamBlock &enc_w(int l) const { return layout[2 * l]; }
    const ParamBlock &enc_b(int l) const { return layout[2 * l + 1]; }
    const ParamBlock &dec_w(int l) const { return layout[2 * a.enc_layers + 2 * l]; }
    const ParamBlock &dec_b(int l) const { return layout[2 * a.enc_layers + 2 * l + 1]; }
    const ParamBlock &shift(int l) const { return layout[2 * a.enc_layers + 2 * a.dec_layers + l]; }
};

struct EncoderPass {
    std::vector<Planes> inputs; // input to each conv layer
    std::vector<Planes> pre;    // conv outputs
    const Planes &code() const { return pre.back(); }
};

EncoderPass encode(const GenView &g, const std::vector<double> &theta, const Planes &patch) {
    EncoderPass e;
    const auto m = static_cast<std::size_t>(g.a.mod_channels);
    e.inputs.push_back(patch);
    for (int l = 0; l < g.a.enc_layers; ++l) {
        e.pre.push_back(conv3x3(e.inputs.back(), &theta[g.enc_w(l).offset], &theta[g.enc_b(l).offset], m, 1));
        if (l + 1 < g.a.enc_layers) {
            Planes act = e.pre.back();
            for (auto &x : act.values) x = silu(x);
            e.inputs.push_back(std::move(act));
        }
    }
    return e;
}

// Modulation code transposed to pixel-major order: [y][x][m].
std::vector<double> pixel_major(const Planes &code) {
    const std::size_t n = code.height * code.width;
    std::vector<double> out(n * code.channels);
    for (std::size_t c = 0; c < code.channels; ++c)
        for (std::size_t i = 0; i < n; ++i) out[i * code.channels + c] = code.values[c * n + i];
    return out;
}

// Decoder over a set of P pixels, row-major matrices:
//   coords [P x 2], code [P x m], z_l and a_l+1 [P x h] for l = 0 .. D-2.
struct DecoderPass {
    std::size_t pixels = 0;
    std::vector<double> coords;
    std::vector<double> code;
    std::vector<std::vector<double>> z; // pre-activations
    std::vector<std::vector<double>> a; // silu(z)
    std::vector<double> out;            // [P]
};

// Y[P x out] += X[P x in] * W^T, W row-major [out x in].
void matmul_wt(const double *X, std::size_t P, std::size_t in, const double *W, std::size_t out, double *Y) {
    std::vector<double> wt(in * out);
    for (std::size_t j = 0; j < out; ++j)
        for (std::size_t k = 0; k < in; ++k) wt[k * out + j] = W[j * in + k];
    for (std::size_t p = 0; p < P; ++p) {
        double *y = Y + p * out;
        const double *x = X + p * in;
        for (std::size_t k = 0; k < in; ++k) {
            const double xv = x[k];
            const double *w = &wt[k * out];
            for (std::size_t j = 0; j < out; ++j) y[j] += xv * w[j];
        }
    }
}

// dW[out x in] += G^T[out x P] * X[P x in].
void accumulate_outer(const double *G, std::size_t P, std::size_t out, const double *X, std::size_t in, double *dW) {
    for (std::size_t p = 0; p < P; ++p) {
        const double *g = G + p * out;
        const double *x = X + p * in;
        for (std::size_t j = 0; j < out; ++j) {
            const double gj = g[j];
            double *d = dW + j * in;
            for (std::size_t k = 0; k < in; ++k) d[k] += gj * x[k];
        }
    }
}

// Y[P x in] += G[P x out] * W, W row-major [out x in].
void matmul_w(const double *G, std::size_t P, std::size_t out, const double *W, std::size_t in, double *Y) {
    for (std::size_t p = 0; p < P; ++p) {
        const double *g = G + p * out;
        double *y = Y + p * in;
        for (std::size_t j = 0; j < out; ++j) {
            const double gj = g[j];
            const double *w = W + j * in;
            for (std::size_t k = 0; k < in; ++k) y[k] += gj * w[k];
        }
    }
}

void decode(const GenView &g, const std::vector<double> &theta, DecoderPass &d) {
    const auto h = static_cast<std::size_t>(g.a.hidden);
    const auto m = static_cast<std::size_t>(g.a.mod_channels);
    const std::size_t P = d.pixels;
    const int hidden_layers = g.a.dec_layers - 1;
    d.z.assign(static_cast<std::size_t>(hidden_layers), std::vector<double>(P * h));
    d.a.assign(static_cast<std::size_t>(hidden_layers), std::vector<double>(P * h));
    const double *cur = d.coords.data();
    std::size_t in = 2;
    for (int l = 0; l < hidden_layers; ++l) {
        double *z = d.z[l].data();
        const double *b = &theta[g.dec_b(l).offset];
        for (std::size_t p = 0; p < P; ++p) std::copy(b, b + h, z + p * h);
        matmul_wt(cur, P, in, &theta[g.dec_w(l).offset], h, z);
        matmul_wt(d.code.data(), P, m, &theta[g.shift(l).offset], h, z);
        double *act = d.a[l].data();
        for (std::size_t i = 0; i < P * h; ++i) act[i] = silu(z[i]);
        cur = act;
        in = h;
    }
    const int last = g.a.dec_layers - 1;
    d.out.assign(P, theta[g.dec_b(last).offset]);
    const double *w = &theta[g.dec_w(last).offset];
    for (std::size_t p = 0; p < P; ++p) {
        double v = 0.0;
        const double *x = cur + p * h;
        for (std::size_t k = 0; k < h; ++k) v += w[k] * x[k];
        d.out[p] += v;
    }
}

// Accumulates decoder parameter gradients for d(loss)/d(out) = gout and
// returns d(loss)/d(code) as [P x m].
std::vector<double> decode_backward(const GenView &g, const std::vector<double> &theta, const DecoderPass &d,
                                    const std::vector<double> &gout, double *grad) {
    const auto h = static_cast<std::size_t>(g.a.hidden);
    const auto m = static_cast<std::size_t>(g.a.mod_channels);
    const std::size_t P = d.pixels;
    const int last = g.a.dec_layers - 1;
    std::vector<double> dcode(P * m, 0.0);

    const double *w_last = &theta[g.dec_w(last).offset];
    double *dw_last = grad + g.dec_w(last).offset;
    const double *a_last = d.a[last - 1].data();
    std::vector<double> ga(P * h);
    double db_last = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
        const double go = gout[p];
        db_last += go;
        const double *x = a_last + p * h;
        double *gp = &ga[p * h];
        for (std::size_t k = 0; k < h; ++k) {
            dw_last[k] += go * x[k];
            gp[k] = go * w_last[k];
        }
    }
    grad[g.dec_b(last).offset] += db_last;

    std::vector<double> gz(P * h);
    for (int l = last - 1; l >= 0; --l) {
        const double *z = d.z[l].data();
        for (std::size_t i = 0; i < P * h; ++i) gz[i] = ga[i] * silu_grad(z[i]);
        double *db = grad + g.dec_b(l).offset;
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t j = 0; j < h; ++j) db[j] += gz[p * h + j];
        const std::size_t in = l == 0 ? 2 : h;
        const double *src = l == 0 ? d.coords.data() : d.a[l - 1].data();
        accumulate_outer(gz.data(), P, h, src, in, grad + g.dec_w(l).offset);
        accumulate_outer(gz.data(), P, h, d.code.data(), m, grad + g.shift(l).offset);
        matmul_w(gz.data(), P, h, &theta[g.shift(l).offset], m, dcode.data());
        if (l > 0) {
            std::fill(ga.begin(), ga.end(), 0.0);
            matmul_w(gz.data(), P, h, &theta[g.dec_w(l).offset], h, ga.data());
        }
    }
    return dcode;
}

void check_patch(const ModelParams &p, const Planes &patch) {
    if (patch.channels != static_cast<std::size_t>(p.arch.in_channels))
        throw DataError(strprintf("model expects %d input channels, patch has %zu", p.arch.in_channels,
                                  patch.channels));
    if (patch.height == 0 || patch.width == 0) throw DataError("empty patch");
    if (p.generator.size() != p.arch.parameter_count())
        throw DataError("generator parameter count does not match the architecture");
}

struct DiscPass {
    Planes pre0, act0, out;
};

DiscPass disc_forward(const ModelParams &p, const Planes &img) {
    if (!p.disc) throw ConfigError("model has no discriminator");
    const auto L = discriminator_layout(*p.disc);
    const auto &t = p.discriminator;
    DiscPass d;
    d.pre0 = conv3x3(img, &t[L[0].offset], &t[L[1].offset], static_cast<std::size_t>(p.disc->width), 2);
    d.act0 = d.pre0;
    for (auto &x : d.act0.values) x = silu(x);
    d.out = conv3x3(d.act0, &t[L[2].offset], &t[L[3].offset], 1, 2);
    return d;
}

// Backpropagates dout through the discriminator; accumulates parameter
// gradients into dtheta (if non-null) and returns d(image).
Planes disc_backward(const ModelParams &p, const Planes &img, const DiscPass &d, const Planes &dout,
                     double *dtheta) {
    const auto L = discriminator_layout(*p.disc);
    const auto &t = p.discriminator;
    const auto w = static_cast<std::size_t>(p.disc->width);
    Planes dact;
    conv3x3_backward(d.act0, &t[L[2].offset], 1, 2, dout, dtheta ? dtheta + L[2].offset : nullptr,
                     dtheta ? dtheta + L[3].offset : nullptr, &dact);
    for (std::size_t i = 0; i < dact.values.size(); ++i) dact.values[i] *= silu_grad(d.pre0.values[i]);
    Planes dimg;
    conv3x3_backward(img, &t[L[0].offset], w, 2, dact, dtheta ? dtheta + L[0].offset : nullptr,
                     dtheta ? dtheta + L[1].offset : nullptr, &dimg);
    return dimg;
}

double weight_penalty(const ModelParams &p) {
    double s = 0.0;
    for (const auto &b : generator_layout(p.arch))
        if (b.is_weight)
            for (std::size_t i = 0; i < b.size; ++i) s += p.generator[b.offset + i] * p.generator[b.offset + i];
    return s;
}

} // namespace

Planes forward(const ModelParams &p, const Planes &patch, CoordWindow win) {
    check_patch(p, patch);
    const std::size_t rows = win.rows ? win.rows : patch.height - std::min(win.row0, patch.height);
    const std::size_t cols = win.cols ? win.cols : patch.width - std::min(win.col0, patch.width);
    if (rows == 0 || cols == 0 || win.row0 + rows > patch.height || win.col0 + cols > patch.width)
        throw DataError("coordinate window lies outside the patch");

    const GenView g(p.arch);
    const EncoderPass e = encode(g, p.generator, patch);
    const auto m = static_cast<std::size_t>(p.arch.mod_channels);
    const Planes &code = e.code();
    DecoderPass d;
    d.pixels = rows * cols;
    d.coords.resize(d.pixels * 2);
    d.code.resize(d.pixels * m);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c, y = win.row0 + r, x = win.col0 + c;
            d.coords[2 * i] = grid_coordinate(y, patch.height);
            d.coords[2 * i + 1] = grid_coordinate(x, patch.width);
            for (std::size_t k = 0; k < m; ++k) d.code[i * m + k] = code.at(k, y, x);
        }
    decode(g, p.generator, d);
    Planes out(1, rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            double v = d.out[r * cols + c];
            if (p.arch.residual) v += patch.at(0, win.row0 + r, win.col0 + c);
            out.at(0, r, c) = v;
        }
    return out;
}

Planes discriminate(const ModelParams &p, const Planes &image) { return disc_forward(p, image).out; }

LossParts loss(std::span<const Planes> pred, std::span<const Planes> target, const ModelParams &p,
               const TrainConfig &cfg) {
    if (pred.size() != target.size()) throw DataError("loss: batch size mismatch");
    LossParts lp;
    double abs_sum = 0.0;
    std::size_t n = 0;
    for (std::size_t b = 0; b < pred.size(); ++b) {
        if (pred[b].values.size() != target[b].values.size()) throw DataError("loss: shape mismatch");
        for (std::size_t i = 0; i < pred[b].values.size(); ++i)
            abs_sum += std::abs(pred[b].values[i] - target[b].values[i]);
        n += pred[b].values.size();
    }
    lp.l1 = n ? abs_sum / static_cast<double>(n) : 0.0;
    lp.reg = cfg.lambda_reg * weight_penalty(p);
    if (cfg.lambda_adv > 0.0) {
        double s = 0.0;
        std::size_t cnt = 0;
        for (const auto &img : pred) {
            const Planes d = discriminate(p, img);
            for (double v : d.values) s += (v - 1.0) * (v - 1.0);
            cnt += d.values.size();
        }
        lp.adv = cfg.lambda_adv * s / static_cast<double>(cnt);
    }
    lp.total = lp.l1 + lp.adv + lp.reg;
    return lp;
}

Gradients backward(const ModelParams &p, std::span<const Sample> batch, const TrainConfig &cfg) {
    if (batch.empty()) throw DataError("backward: empty batch");
    const GenView g(p.arch);
    const auto m = static_cast<std::size_t>(p.arch.mod_channels);
    const std::vector<double> &th = p.generator;

    Gradients out;
    out.generator.assign(th.size(), 0.0);
    double *grad = out.generator.data();

    std::size_t n_pix = 0;
    for (const auto &s : batch) {
        check_patch(p, s.input);
        if (s.target.height != s.input.height || s.target.width != s.input.width || s.target.channels != 1)
            throw DataError("backward: target shape does not match input");
        n_pix += s.input.height * s.input.width;
    }

    // Forward pass over the whole batch first: the adversarial term needs
    // complete predictions before any pixel gradient is known.
    std::vector<EncoderPass> enc;
    std::vector<DecoderPass> dec(batch.size());
    enc.reserve(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Sample &s = batch[b];
        enc.push_back(encode(g, th, s.input));
        const std::size_t H = s.input.height, W = s.input.width;
        DecoderPass &d = dec[b];
        d.pixels = H * W;
        d.coords.resize(d.pixels * 2);
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                d.coords[2 * (y * W + x)] = grid_coordinate(y, H);
                d.coords[2 * (y * W + x) + 1] = grid_coordinate(x, W);
            }
        d.code = pixel_major(enc.back().code());
        decode(g, th, d);
        Planes pred(1, H, W);
        for (std::size_t i = 0; i < d.pixels; ++i)
            pred.values[i] = d.out[i] + (p.arch.residual ? s.input.values[i] : 0.0);
        out.predictions.push_back(std::move(pred));
    }

    // dL/dpred
    std::vector<Planes> dpred;
    double abs_sum = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n_pix);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        Planes d(1, batch[b].input.height, batch[b].input.width);
        for (std::size_t i = 0; i < d.values.size(); ++i) {
            const double r = out.predictions[b].values[i] - batch[b].target.values[i];
            abs_sum += std::abs(r);
            d.values[i] = r > 0 ? inv_n : r < 0 ? -inv_n : 0.0;
        }
        dpred.push_back(std::move(d));
    }
    out.loss.l1 = abs_sum * inv_n;

    if (cfg.lambda_adv > 0.0) {
        std::vector<DiscPass> passes;
        std::size_t cnt = 0;
        for (const auto &pr : out.predictions) {
            passes.push_back(disc_forward(p, pr));
            cnt += passes.back().out.values.size();
        }
        double s = 0.0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            Planes dout = passes[b].out;
            for (auto &v : dout.values) {
                s += (v - 1.0) * (v - 1.0);
                v = cfg.lambda_adv * 2.0 * (v - 1.0) / static_cast<double>(cnt);
            }
            const Planes dimg = disc_backward(p, out.predictions[b], passes[b], dout, nullptr);
            for (std::size_t i = 0; i < dimg.values.size(); ++i) dpred[b].values[i] += dimg.values[i];
        }
        out.loss.adv = cfg.lambda_adv * s / static_cast<double>(cnt);
    }

    for (std::size_t b = 0; b < batch.size(); ++b) {
        const std::size_t H = batch[b].input.height, W = batch[b].input.width;
        const std::vector<double> dcode_px = decode_backward(g, th, dec[b], dpred[b].values, grad);
        Planes dcode(m, H, W);
        for (std::size_t c = 0; c < m; ++c)
            for (std::size_t i = 0; i < H * W; ++i) dcode.values[c * H * W + i] = dcode_px[i * m + c];

        // Encoder: dcode is the gradient w.r.t. the last conv output.
        Planes gz = std::move(dcode);
        for (int l = p.arch.enc_layers - 1; l >= 0; --l) {
            Planes gin;
            conv3x3_backward(enc[b].inputs[l], &th[g.enc_w(l).offset], m, 1, gz, grad + g.enc_w(l).offset,
                             grad + g.enc_b(l).offset, l > 0 ? &gin : nullptr);
            if (l > 0) {
                const Planes &zprev = enc[b].pre[l - 1];
                for (std::size_t i = 0; i < gin.values.size(); ++i) gin.values[i] *= silu_grad(zprev.values[i]);
                gz = std::move(gin);
            }
        }
    }

    double penalty = 0.0;
    for (const auto &blk : g.layout)
        if (blk.is_weight)
            for (std::size_t i = 0; i < blk.size; ++i) {
                const double w = th[blk.offset + i];
                penalty += w * w;
                grad[blk.offset + i] += 2.0 * cfg.lambda_reg * w;
            }
    out.loss.reg = cfg.lambda_reg * penalty;
    out.loss.total = out.loss.l1 + out.loss.adv + out.loss.reg;

    for (std::size_t i = 0; i < out.generator.size(); ++i)
        if (!std::isfinite(out.generator[i]))
            throw NumericError("non-finite gradient at " + parameter_path(g.layout, i));
    return out;
}

DiscGradients discriminator_backward(const ModelParams &p, std::span<const Planes> real,
                                     std::span<const Planes> fake) {
    if (!p.disc) throw ConfigError("model has no discriminator");
    DiscGradients out;
    out.discriminator.assign(p.discriminator.size(), 0.0);
    auto side = [&](std::span<const Planes> imgs, double label) {
        std::vector<DiscPass> passes;
        std::size_t cnt = 0;
        for (const auto &img : imgs) {
            passes.push_back(disc_forward(p, img));
            cnt += passes.back().out.values.size();
        }
        double s = 0.0;
        for (std::size_t b = 0; b < imgs.size(); ++b) {
            Planes dout = passes[b].out;
            for (auto &v : dout.values) {
                s += (v - label) * (v - label);
                v = 0.5 * 2.0 * (v - label) / static_cast<double>(cnt);
            }
            disc_backward(p, imgs[b], passes[b], dout, out.discriminator.data());
        }
        return 0.5 * s / static_cast<double>(cnt);
    };
    out.loss = side(real, 1.0) + side(fake, 0.0);
    const auto layout = discriminator_layout(*p.disc);
    for (std::size_t i = 0; i < out.discriminator.size(); ++i)
        if (!std::isfinite(out.discriminator[i]))
            throw NumericError("non-finite gradient at " + parameter_path(layout, i));
    return out;
}

} // namespace lowdose
