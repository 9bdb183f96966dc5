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

#include "lowdose/error.hpp"
#include "lowdose/model.hpp"
#include "lowdose/volume.hpp"
#include "util.hpp"

#include <algorithm>
#include <cmath>

namespace lowdose {

using detail::strprintf;

void TrainConfig::validate() const {
    if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw ConfigError("learning rates must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
    if (!(lambda_adv >= 0.0) || !(lambda_reg >= 0.0)) throw ConfigError("loss weights must be non-negative");
    if (batch == 0) throw ConfigError("batch size must be >= 1");
    if (patch_h == 0 || patch_w == 0) throw ConfigError("patch size must be >= 1");
    if (augment.shift_max_px < 0) throw ConfigError("augmentation shift must be >= 0");
}

PatchSampler::PatchSampler(std::span<const TrainingPair> dataset, const TrainConfig &cfg, int in_channels)
    : data_(dataset), cfg_(cfg), channels_(in_channels), rng_(cfg.seed * 0x2545f4914f6cdd1dULL + 17) {
    if (data_.empty()) throw DataError("training set is empty");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        const auto &p = data_[i];
        if (!p.input || !p.target) throw DataError(strprintf("training pair %zu is incomplete", i));
        if (channels_ == 2 && !p.aux) throw DataError(strprintf("training pair %zu lacks the T1 channel", i));
        const Dims &d = p.input->dims();
        if (!(p.target->dims() == d) || (p.aux && !(p.aux->dims() == d)))
            throw DataError(strprintf("training pair %zu has mismatched dims", i));
        if (d.ny < cfg_.patch_h || d.nx < cfg_.patch_w)
            throw ConfigError(strprintf("patch %zux%zu exceeds slice %zux%zu of training pair %zu", cfg_.patch_h,
                                        cfg_.patch_w, d.ny, d.nx, i));
    }
}

std::size_t PatchSampler::below(std::size_t n) {
    return n <= 1 ? 0 : std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
}

Sample PatchSampler::draw() {
    const TrainingPair &pair = data_[below(data_.size())];
    const Dims &d = pair.input->dims();
    const std::size_t z = below(d.nz);
    const std::size_t ph = cfg_.patch_h, pw = cfg_.patch_w;
    const auto &aug = cfg_.augment;

    const bool fh = aug.flip_h && below(2) == 1;
    const bool fv = aug.flip_v && below(2) == 1;
    long sy = 0, sx = 0;
    if (aug.shift_max_px > 0) {
        const auto span = static_cast<std::size_t>(2 * aug.shift_max_px + 1);
        sy = static_cast<long>(below(span)) - aug.shift_max_px;
        sx = static_cast<long>(below(span)) - aug.shift_max_px;
    }
    std::size_t oy = (d.ny - ph) / 2, ox = (d.nx - pw) / 2;
    if (aug.crop) {
        oy = below(d.ny - ph + 1);
        ox = below(d.nx - pw + 1);
    }

    // Output pixel -> source pixel: undo the crop, then the shift (edge
    // clamped), then the flip. Input and target share the mapping.
    auto src = [](long v, long shift, std::size_t n, bool flip) {
        const long s = std::clamp<long>(v - shift, 0, static_cast<long>(n) - 1);
        return static_cast<std::size_t>(flip ? static_cast<long>(n) - 1 - s : s);
    };
    Sample s{Planes(static_cast<std::size_t>(channels_), ph, pw), Planes(1, ph, pw)};
    for (std::size_t r = 0; r < ph; ++r) {
        const std::size_t y = src(static_cast<long>(oy + r), sy, d.ny, fv);
        for (std::size_t c = 0; c < pw; ++c) {
            const std::size_t x = src(static_cast<long>(ox + c), sx, d.nx, fh);
            s.input.at(0, r, c) = pair.input->at(x, y, z);
            if (channels_ == 2) s.input.at(1, r, c) = pair.aux->at(x, y, z);
            s.target.at(0, r, c) = pair.target->at(x, y, z);
        }
    }
    return s;
}

namespace {

struct Adam {
    std::vector<double> m, v;
    std::size_t t = 0;
    double lr, b1, b2, eps;

    Adam(std::size_t n, double lr_, const TrainConfig &c)
        : m(n, 0.0), v(n, 0.0), lr(lr_), b1(c.beta1), b2(c.beta2), eps(c.epsilon) {}

    // Parameters stay float-representable after every step.
    void step(std::vector<double> &theta, const std::vector<double> &g) {
        ++t;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mh = m[i] / c1, vh = v[i] / c2;
            theta[i] = static_cast<float>(theta[i] - lr * mh / (std::sqrt(vh) + eps));
        }
    }
};

} // namespace

TrainResult train(const ArchConfig &arch, std::span<const TrainingPair> dataset, const TrainConfig &cfg,
                  const std::function<void(const StepRecord &)> &on_step) {
    arch.validate();
    cfg.validate();
    TrainResult res;
    res.params = init_model(arch, cfg.seed);
    const bool adversarial = cfg.lambda_adv > 0.0;
    if (adversarial) init_discriminator(res.params, DiscConfig{}, cfg.seed);

    PatchSampler sampler(dataset, cfg, arch.in_channels);
    Adam opt_g(res.params.generator.size(), cfg.lr_g, cfg);
    Adam opt_d(res.params.discriminator.size(), cfg.lr_d, cfg);

    std::vector<Sample> batch(cfg.batch);
    std::vector<Planes> real(cfg.batch);
    res.history.reserve(cfg.steps);
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        for (std::size_t b = 0; b < cfg.batch; ++b) batch[b] = sampler.draw();
        Gradients g = backward(res.params, batch, cfg);
        if (!std::isfinite(g.loss.total)) throw NumericError(strprintf("non-finite loss at step %zu", step));
        opt_g.step(res.params.generator, g.generator);
        if (adversarial) {
            for (std::size_t b = 0; b < cfg.batch; ++b) real[b] = batch[b].target;
            const DiscGradients dg = discriminator_backward(res.params, real, g.predictions);
            if (!std::isfinite(dg.loss))
                throw NumericError(strprintf("non-finite discriminator loss at step %zu", step));
            opt_d.step(res.params.discriminator, dg.discriminator);
        }
        const StepRecord rec{step, g.loss.l1, g.loss.adv, g.loss.reg, g.loss.total};
        res.history.push_back(rec);
        if (on_step) on_step(rec);
    }
    return res;
}

} // namespace lowdose
