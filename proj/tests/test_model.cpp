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
#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace lowdose;

namespace {

Planes random_planes(std::size_t c, std::size_t h, std::size_t w, std::mt19937_64 &rng, double scale = 0.5) {
    std::normal_distribution<double> g(0.0, scale);
    Planes p(c, h, w);
    for (auto &v : p.values) v = g(rng);
    return p;
}

std::vector<Sample> random_batch(const ArchConfig &a, std::size_t n, std::size_t h, std::size_t w,
                                 std::mt19937_64 &rng) {
    std::vector<Sample> b(n);
    for (auto &s : b) {
        s.input = random_planes(std::size_t(a.in_channels), h, w, rng);
        s.target = random_planes(1, h, w, rng);
    }
    return b;
}

ParamBlock find_block(const ModelParams &p, const std::string &name) {
    for (const auto &b : generator_layout(p.arch))
        if (b.name == name) return b;
    FAIL("missing block " << name);
    return {};
}

double relative_error(const std::vector<double> &a, const std::vector<double> &b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

} // namespace

TEST_CASE("default architecture parameter count matches a hand count") {
    ArchConfig a; // C=2, m=8, D=3, h=32, one input channel
    const std::size_t enc = (8 * 1 * 9 + 8) + (8 * 8 * 9 + 8);
    const std::size_t dec = (32 * 2 + 32) + (32 * 32 + 32) + (32 + 1);
    const std::size_t shift = 2 * 32 * 8;
    CHECK(enc + dec + shift == 2361);
    CHECK(a.parameter_count() == 2361);
    a.in_channels = 2;
    CHECK(a.parameter_count() == 2361 + 72);
}

TEST_CASE("architecture validation") {
    ArchConfig a;
    a.dec_layers = 1;
    CHECK_THROWS_AS(a.validate(), ConfigError);
    a = {};
    a.in_channels = 3;
    CHECK_THROWS_AS(a.validate(), ConfigError);
    a = {};
    a.hidden = 0;
    CHECK_THROWS_AS(a.validate(), ConfigError);
}

TEST_CASE("initialization is seeded, bounded and float-exact") {
    ArchConfig a;
    const ModelParams p = init_model(a, 42), q = init_model(a, 42), r = init_model(a, 43);
    CHECK(p.generator == q.generator);
    CHECK(p.generator != r.generator);
    CHECK(p.generator.size() == a.parameter_count());
    for (const auto &b : generator_layout(a))
        for (std::size_t i = 0; i < b.size; ++i) {
            const double v = p.generator[b.offset + i];
            CHECK(std::abs(v) <= 1.0 / std::sqrt(double(b.fan_in)));
            CHECK(double(float(v)) == v);
        }
}

TEST_CASE("parameter paths") {
    const auto layout = generator_layout(ArchConfig{});
    CHECK(parameter_path(layout, 0) == "encoder.0.weight[0]");
    CHECK(parameter_path(layout, 72) == "encoder.0.bias[0]");
    CHECK(parameter_path(layout, 2360) == "shift.1.weight[255]");
}

TEST_CASE("grid coordinates span [-1, 1]") {
    CHECK(grid_coordinate(0, 5) == -1.0);
    CHECK(grid_coordinate(4, 5) == 1.0);
    CHECK(grid_coordinate(2, 5) == 0.0);
    CHECK(grid_coordinate(0, 1) == 0.0);
}

TEST_CASE("zero final decoder layer gives an all-zero output") {
    ArchConfig a;
    ModelParams p = init_model(a, 1);
    for (const char *name : {"decoder.2.weight", "decoder.2.bias"}) {
        const auto &b = find_block(p, name);
        std::fill_n(p.generator.begin() + long(b.offset), b.size, 0.0);
    }
    std::mt19937_64 rng(1);
    const Planes out = forward(p, random_planes(1, 9, 7, rng));
    for (double v : out.values) CHECK(v == 0.0);
}

TEST_CASE("forward matches the per-pixel reference") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 6; ++trial) {
        ArchConfig a;
        a.enc_layers = 1 + trial % 3;
        a.mod_channels = 1 + trial;
        a.dec_layers = 2 + trial % 2;
        a.hidden = 3 + trial;
        a.in_channels = 1 + trial % 2;
        a.residual = trial % 2 == 1;
        const ModelParams p = init_model(a, std::uint64_t(trial));
        const Planes in = random_planes(std::size_t(a.in_channels), 5 + trial, 8, rng);
        const Planes got = forward(p, in), want = oracle::model_forward(p, in);
        REQUIRE(got.values.size() == want.values.size());
        for (std::size_t i = 0; i < got.values.size(); ++i) CHECK(got.values[i] == doctest::Approx(want.values[i]).epsilon(1e-12));
    }
}

TEST_CASE("sub-grid queries reproduce the full-grid answer") {
    ArchConfig a;
    a.residual = true;
    const ModelParams p = init_model(a, 9);
    std::mt19937_64 rng(9);
    const Planes in = random_planes(1, 10, 12, rng);
    const Planes full = forward(p, in);
    const Planes top = forward(p, in, {0, 0, 5, 0}), bottom = forward(p, in, {5, 0, 5, 0});
    const Planes inner = forward(p, in, {2, 3, 4, 6});
    for (std::size_t y = 0; y < 10; ++y)
        for (std::size_t x = 0; x < 12; ++x) {
            const double v = full.at(0, y, x);
            CHECK(v == (y < 5 ? top.at(0, y, x) : bottom.at(0, y - 5, x)));
            if (y >= 2 && y < 6 && x >= 3 && x < 9) CHECK(v == inner.at(0, y - 2, x - 3));
        }
    CHECK_THROWS_AS(forward(p, in, {8, 0, 5, 0}), DataError);
    CHECK_THROWS_AS(forward(p, random_planes(2, 4, 4, rng)), DataError);
}

TEST_CASE("flip equivariance with delta kernels and an x-blind decoder") {
    ArchConfig a;
    ModelParams p = init_model(a, 5);
    for (int l = 0; l < a.enc_layers; ++l) {
        const auto &b = find_block(p, "encoder." + std::to_string(l) + ".weight");
        for (std::size_t i = 0; i < b.size; ++i)
            if (i % 9 != 4) p.generator[b.offset + i] = 0.0;
    }
    const auto &w0 = find_block(p, "decoder.0.weight");
    for (std::size_t j = 0; j < std::size_t(a.hidden); ++j) p.generator[w0.offset + j * 2 + 1] = 0.0;
    std::mt19937_64 rng(5);
    const Planes in = random_planes(1, 6, 9, rng);
    Planes flipped = in;
    for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t x = 0; x < 9; ++x) flipped.at(0, y, x) = in.at(0, y, 8 - x);
    const Planes o = forward(p, in), of = forward(p, flipped);
    for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t x = 0; x < 9; ++x) CHECK(of.at(0, y, x) == doctest::Approx(o.at(0, y, 8 - x)).epsilon(1e-12));
}

TEST_CASE("loss examples") {
    ArchConfig a;
    ModelParams p = init_model(a, 1);
    std::fill(p.generator.begin(), p.generator.end(), 0.0);
    TrainConfig cfg;
    Planes x(1, 4, 4, 0.25);
    std::vector<Planes> pred{x}, target{x};
    CHECK(loss(pred, target, p, cfg).total == 0.0);

    cfg.lambda_reg = 0.0;
    Planes y(1, 4, 4, -0.25);
    std::vector<Planes> off{y};
    const LossParts lp = loss(pred, off, init_model(a, 2), cfg);
    CHECK(lp.total == 0.5);
    CHECK(lp.l1 == 0.5);
    CHECK_THROWS_AS(loss(pred, std::vector<Planes>{Planes(1, 3, 4)}, p, cfg), DataError);
}

TEST_CASE("loss matches an independent recomputation") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 4; ++trial) {
        ArchConfig a;
        a.enc_layers = 1 + trial % 2;
        a.mod_channels = 3;
        a.hidden = 5;
        a.dec_layers = 2 + trial % 2;
        a.in_channels = 1 + trial % 2;
        ModelParams p = init_model(a, std::uint64_t(trial + 1));
        TrainConfig cfg;
        cfg.lambda_reg = 1e-2;
        if (trial >= 2) {
            cfg.lambda_adv = 0.3;
            init_discriminator(p, {4}, 77);
        }
        const auto batch = random_batch(a, 3, 6, 7, rng);
        std::vector<Planes> pred, tgt;
        for (const auto &s : batch) {
            pred.push_back(forward(p, s.input));
            tgt.push_back(s.target);
        }
        const LossParts got = loss(pred, tgt, p, cfg), want = oracle::model_loss(p, batch, cfg);
        CHECK(got.l1 == doctest::Approx(want.l1).epsilon(1e-12));
        CHECK(got.reg == doctest::Approx(want.reg).epsilon(1e-12));
        CHECK(got.adv == doctest::Approx(want.adv).epsilon(1e-12));
        CHECK(got.total == doctest::Approx(want.total).epsilon(1e-12));
        CHECK(backward(p, batch, cfg).loss.total == doctest::Approx(want.total).epsilon(1e-12));
    }
}

TEST_CASE("output-bias gradient equals the mean residual sign") {
    ArchConfig a{1, 2, 2, 4, 1, false};
    const ModelParams p = init_model(a, 4);
    std::mt19937_64 rng(4);
    const auto batch = random_batch(a, 2, 5, 5, rng);
    TrainConfig cfg;
    cfg.lambda_reg = 0.0;
    const Gradients g = backward(p, batch, cfg);
    double expected = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Planes out = oracle::model_forward(p, batch[b].input);
        for (std::size_t i = 0; i < out.values.size(); ++i) {
            const double r = out.values[i] - batch[b].target.values[i];
            expected += (r > 0) - (r < 0);
        }
    }
    expected /= 50.0;
    CHECK(g.generator[find_block(p, "decoder.1.bias").offset] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("l1 subgradient is zero at an exact fit") {
    ArchConfig a{1, 2, 2, 4, 1, false};
    ModelParams p = init_model(a, 4);
    for (const char *name : {"decoder.1.weight", "decoder.1.bias"}) {
        const auto &b = find_block(p, name);
        std::fill_n(p.generator.begin() + long(b.offset), b.size, 0.0);
    }
    std::mt19937_64 rng(2);
    std::vector<Sample> batch(2);
    for (auto &s : batch) {
        s.input = random_planes(1, 4, 4, rng);
        s.target = Planes(1, 4, 4, 0.0);
    }
    TrainConfig cfg;
    cfg.lambda_reg = 0.0;
    const Gradients g = backward(p, batch, cfg);
    CHECK(g.loss.total == 0.0);
    for (double v : g.generator) CHECK(v == 0.0);
}

TEST_CASE("analytic gradients match central differences on tiny models") {
    struct Case {
        ArchConfig arch;
        double lambda_adv;
    };
    const std::vector<Case> cases{{{1, 2, 2, 4, 1, false}, 0.0},
                                  {{2, 3, 3, 5, 2, true}, 0.0},
                                  {{1, 2, 2, 4, 1, false}, 0.5},
                                  {{2, 2, 2, 3, 2, false}, 0.2}};
    std::mt19937_64 rng(31);
    for (const auto &c : cases) {
        ModelParams p = init_model(c.arch, 8);
        TrainConfig cfg;
        cfg.lambda_reg = 1e-2;
        cfg.lambda_adv = c.lambda_adv;
        if (c.lambda_adv > 0) init_discriminator(p, {3}, 9);
        const auto batch = random_batch(c.arch, 2, 6, 5, rng);
        const Gradients g = backward(p, batch, cfg);
        const auto fd = oracle::central_difference(p.generator, 1e-6, [&](const std::vector<double> &theta) {
            ModelParams q = p;
            q.generator = theta;
            return oracle::model_loss(q, batch, cfg).total;
        });
        CHECK(relative_error(g.generator, fd) < 1e-6);
    }
}

TEST_CASE("discriminator gradients match central differences") {
    ModelParams p = init_model(ArchConfig{}, 1);
    init_discriminator(p, {4}, 2);
    std::mt19937_64 rng(12);
    std::vector<Planes> real{random_planes(1, 8, 6, rng), random_planes(1, 8, 6, rng)};
    std::vector<Planes> fake{random_planes(1, 8, 6, rng), random_planes(1, 8, 6, rng)};
    const DiscGradients g = discriminator_backward(p, real, fake);
    auto objective = [&](const std::vector<double> &theta) {
        ModelParams q = p;
        q.discriminator = theta;
        double r = 0.0, f = 0.0;
        std::size_t nr = 0, nf = 0;
        for (const auto &im : real)
            for (double v : oracle::disc_forward(q, im).values) {
                r += (v - 1) * (v - 1);
                ++nr;
            }
        for (const auto &im : fake)
            for (double v : oracle::disc_forward(q, im).values) {
                f += v * v;
                ++nf;
            }
        return 0.5 * (r / double(nr) + f / double(nf));
    };
    CHECK(g.loss == doctest::Approx(objective(p.discriminator)).epsilon(1e-12));
    CHECK(relative_error(g.discriminator, oracle::central_difference(p.discriminator, 1e-6, objective)) < 1e-6);
    CHECK_THROWS_AS(discriminator_backward(init_model(ArchConfig{}, 1), real, fake), ConfigError);
}

TEST_CASE("non-finite gradients name the parameter") {
    ArchConfig a{1, 2, 2, 4, 1, false};
    ModelParams p = init_model(a, 4);
    p.generator[find_block(p, "shift.0.weight").offset] = 1e300;
    std::mt19937_64 rng(2);
    const auto batch = random_batch(a, 1, 4, 4, rng);
    TrainConfig cfg;
    cfg.lambda_reg = 1e10;
    try {
        (void)backward(p, batch, cfg);
        FAIL("expected a numeric failure");
    } catch (const NumericError &e) {
        CHECK(std::string(e.what()).find("shift.0.weight[0]") != std::string::npos);
    }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    test::TempDir dir;
    ArchConfig a;
    a.in_channels = 2;
    a.residual = true;
    ModelParams p = init_model(a, 3);
    init_discriminator(p, {6}, 4);
    TrainHistory h{{1, 0.5, 0.1, 0.01, 0.61}};
    save_checkpoint(p, h, 99, dir.file("m.ckpt"));
    const ModelParams q = load_checkpoint(dir.file("m.ckpt"));
    CHECK(q.arch == p.arch);
    CHECK(q.generator == p.generator);
    REQUIRE(q.disc.has_value());
    CHECK(q.disc->width == 6);
    CHECK(q.discriminator == p.discriminator);

    std::mt19937_64 rng(1);
    const Planes in = random_planes(2, 7, 9, rng);
    CHECK(forward(q, in).values == forward(p, in).values);

    save_checkpoint(p, h, 99, dir.file("n.ckpt"));
    CHECK(test::read_file(dir.file("m.ckpt")) == test::read_file(dir.file("n.ckpt")));
}

TEST_CASE("damaged checkpoints are rejected") {
    test::TempDir dir;
    const ModelParams p = init_model(ArchConfig{}, 3);
    save_checkpoint(p, {}, 1, dir.file("m.ckpt"));
    const std::string bytes = test::read_file(dir.file("m.ckpt"));

    test::write_file(dir.file("t.ckpt"), bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_checkpoint(dir.file("t.ckpt")), DataError);

    test::write_file(dir.file("x.ckpt"), bytes + "xx");
    CHECK_THROWS_AS(load_checkpoint(dir.file("x.ckpt")), DataError);

    std::string other = bytes;
    other.replace(other.find("hidden=32"), 9, "hidden=31");
    test::write_file(dir.file("c.ckpt"), other);
    CHECK_THROWS_AS(load_checkpoint(dir.file("c.ckpt")), DataError);

    std::string version = bytes;
    version.replace(version.find("lowdose-checkpoint 1"), 20, "lowdose-checkpoint 9");
    test::write_file(dir.file("v.ckpt"), version);
    CHECK_THROWS_AS(load_checkpoint(dir.file("v.ckpt")), DataError);

    CHECK_THROWS_AS(load_checkpoint(dir.file("absent.ckpt")), DataError);
}
