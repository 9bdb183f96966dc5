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

// Restoration network: a small convolutional encoder produces a modulation
// code per pixel; a coordinate MLP decodes each pixel, with every hidden
// pre-activation shifted by a linear projection of that pixel's code.
//
//   code   = conv_C(silu(... silu(conv_1(patch))))            [m x H x W]
//   a_0    = (u, v)                      normalized pixel coordinates
//   a_l+1  = silu(W_l a_l + b_l + S_l code(u, v))   l = 0 .. D-2
//   out    = W_D-1 a_D-1 + b_D-1  (+ patch channel 0 when residual)
//
// Parameters live in one flat vector per network, traversed in the order
// given by generator_layout(): encoder (weight, bias) per layer, decoder
// (weight, bias) per layer, then one shift projection per hidden layer.
// Values are kept exactly representable in float so checkpoints round-trip.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace lowdose {

struct ArchConfig {
    int enc_layers = 2;   // C
    int mod_channels = 8; // m
    int dec_layers = 3;   // D (>= 2)
    int hidden = 32;      // h
    int in_channels = 1;  // 1: low-dose only, 2: low-dose + T1
    bool residual = false;

    void validate() const;
    std::size_t parameter_count() const;
    bool operator==(const ArchConfig &) const = default;
};

struct DiscConfig {
    int width = 8;
    bool operator==(const DiscConfig &) const = default;
};

struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
    std::size_t fan_in = 0;
    bool is_weight = false;
};

std::vector<ParamBlock> generator_layout(const ArchConfig &a);
std::vector<ParamBlock> discriminator_layout(const DiscConfig &d);

/// "decoder.1.weight[12]"-style path of a flat parameter index.
std::string parameter_path(const std::vector<ParamBlock> &layout, std::size_t index);

struct ModelParams {
    ArchConfig arch;
    std::vector<double> generator;
    /// Present only when adversarial training constructed a discriminator.
    std::optional<DiscConfig> disc;
    std::vector<double> discriminator;
};

/// Deterministic uniform(+-1/sqrt(fan_in)) initialization; biases included.
ModelParams init_model(const ArchConfig &a, std::uint64_t seed);
void init_discriminator(ModelParams &p, const DiscConfig &d, std::uint64_t seed);

/// Channel-major planar image, (c, y, x) with x fastest.
struct Planes {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    Planes() = default;
    Planes(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
        : channels(c), height(h), width(w), values(c * h * w, fill) {}
    double &at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
    double at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }
};

/// Rectangle of the patch grid at which the decoder is queried. Zero extents
/// mean "to the end of the patch".
struct CoordWindow {
    std::size_t row0 = 0;
    std::size_t col0 = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

/// Normalized coordinate of pixel `i` on an axis of `n` pixels, in [-1, 1].
double grid_coordinate(std::size_t i, std::size_t n);

/// Prediction on the queried window (rows x cols, single channel). Throws
/// when the window leaves the patch or the channel count is wrong.
Planes forward(const ModelParams &p, const Planes &patch, CoordWindow window = {});

/// Discriminator score map for a single-channel image.
Planes discriminate(const ModelParams &p, const Planes &image);

struct TrainConfig;

struct LossParts {
    double total = 0.0;
    double l1 = 0.0;
    double adv = 0.0;
    double reg = 0.0;
};

/// l1 = mean |pred - target| over every pixel of the batch,
/// reg = lambda_reg * sum of squared generator weights (biases excluded),
/// adv = lambda_adv * mean (D(pred) - 1)^2 when lambda_adv > 0.
LossParts loss(std::span<const Planes> pred, std::span<const Planes> target, const ModelParams &p,
               const TrainConfig &cfg);

struct Sample {
    Planes input;  // in_channels x H x W
    Planes target; // 1 x H x W
};

struct Gradients {
    std::vector<double> generator;
    LossParts loss;
    std::vector<Planes> predictions;
};

/// Exact gradients of loss() with respect to every generator parameter. The
/// l1 subgradient at a zero residual is 0. Throws NumericError naming the
/// first non-finite parameter gradient.
Gradients backward(const ModelParams &p, std::span<const Sample> batch, const TrainConfig &cfg);

struct DiscGradients {
    std::vector<double> discriminator;
    double loss = 0.0;
};

/// Least-squares discriminator objective 0.5 * (mean (D(real) - 1)^2 + mean D(fake)^2).
DiscGradients discriminator_backward(const ModelParams &p, std::span<const Planes> real,
                                     std::span<const Planes> fake);

struct AugmentConfig {
    bool flip_h = true;
    bool flip_v = true;
    int shift_max_px = 4;
    bool crop = true;
};

struct TrainConfig {
    double lr_g = 1e-4;
    double lr_d = 4e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double lambda_adv = 0.0;
    double lambda_reg = 1e-5;
    std::size_t steps = 1000;
    std::size_t batch = 8;
    std::size_t patch_h = 32;
    std::size_t patch_w = 40;
    std::uint64_t seed = 7;
    AugmentConfig augment;

    void validate() const;
};

struct StepRecord {
    std::size_t step = 0;
    double l1 = 0.0;
    double adv = 0.0;
    double reg = 0.0;
    double total = 0.0;
};

using TrainHistory = std::vector<StepRecord>;

class Volume;

/// One training example: low-dose input, standard-dose target, optional T1.
/// All volumes share dims and are expected in the [-1, 1] convention.
struct TrainingPair {
    const Volume *input = nullptr;
    const Volume *target = nullptr;
    const Volume *aux = nullptr;
};

struct TrainResult {
    ModelParams params;
    TrainHistory history;
};

/// Adam on the generator (lr_g); when lambda_adv > 0 a discriminator is built
/// and updated once per generator step with lr_d. Patch sampling, augmentation
/// and initialization are all driven by cfg.seed.
TrainResult train(const ArchConfig &arch, std::span<const TrainingPair> dataset, const TrainConfig &cfg,
                  const std::function<void(const StepRecord &)> &on_step = {});

/// Draws one augmented training sample (exposed for tests).
class PatchSampler {
public:
    PatchSampler(std::span<const TrainingPair> dataset, const TrainConfig &cfg, int in_channels);
    Sample draw();

private:
    std::span<const TrainingPair> data_;
    const TrainConfig &cfg_;
    int channels_;
    std::mt19937_64 rng_;

    std::size_t below(std::size_t n);
};

void save_checkpoint(const ModelParams &p, const TrainHistory &history, std::uint64_t seed,
                     const std::string &path);
ModelParams load_checkpoint(const std::string &path);
void write_history_csv(const TrainHistory &history, const std::string &path);

} // namespace lowdose
