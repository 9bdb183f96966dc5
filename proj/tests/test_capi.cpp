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

// Exercises the shared library through its C header only.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lowdose/lowdose.h"

#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Scratch {
    fs::path dir;
    Scratch() {
        dir = fs::temp_directory_path() / ("lowdose_capi_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    std::string file(const char *name) const { return (dir / name).string(); }
};

ld_volume *make_volume(const std::vector<float> &data, size_t nx, size_t ny, size_t nz) {
    const size_t dims[3] = {nx, ny, nz};
    const double spacing[3] = {0.5, 0.5, 2.0};
    ld_volume *v = nullptr;
    REQUIRE(ld_volume_create(dims, spacing, data.data(), "arbitrary", &v) == LD_OK);
    return v;
}

} // namespace

TEST_CASE("version and error reporting") {
    CHECK(std::strlen(ld_version()) > 0);
    ld_volume *v = nullptr;
    CHECK(ld_volume_read("/nonexistent/x.hdr", &v) == LD_ERR_DATA);
    CHECK(v == nullptr);
    CHECK(std::strlen(ld_last_error()) > 0);
    CHECK(ld_volume_read(nullptr, &v) == LD_ERR_CONFIG);
    ld_volume_free(nullptr);
    ld_config_free(nullptr);
    ld_records_free(nullptr);
}

TEST_CASE("config handles") {
    ld_config *c = nullptr;
    REQUIRE(ld_config_new(&c) == LD_OK);
    CHECK(ld_config_set(c, "train.steps=3") == LD_OK);
    CHECK(ld_config_set(c, "no-equals") == LD_ERR_CONFIG);
    CHECK(std::string(ld_last_error()).find("no-equals") != std::string::npos);
    ld_config_free(c);
}

TEST_CASE("volume round-trip through files") {
    Scratch s;
    std::vector<float> data(4 * 3 * 2);
    for (size_t i = 0; i < data.size(); ++i) data[i] = float(i) * 0.5f;
    ld_volume *v = make_volume(data, 4, 3, 2);
    REQUIRE(ld_volume_write(v, s.file("v.hdr").c_str()) == LD_OK);
    ld_volume *w = nullptr;
    REQUIRE(ld_volume_read(s.file("v.hdr").c_str(), &w) == LD_OK);
    size_t dims[3];
    double spacing[3];
    REQUIRE(ld_volume_geometry(w, dims, spacing) == LD_OK);
    CHECK(dims[0] == 4);
    CHECK(dims[2] == 2);
    CHECK(spacing[2] == 2.0);
    std::vector<float> back(data.size());
    REQUIRE(ld_volume_copy_data(w, back.data(), back.size()) == LD_OK);
    CHECK(back == data);
    CHECK(ld_volume_export_pgm(w, 1, 0, 0, s.file("s.pgm").c_str()) == LD_OK);
    CHECK(ld_volume_export_pgm(w, 5, 0, 0, s.file("t.pgm").c_str()) != LD_OK);
    ld_volume_free(v);
    ld_volume_free(w);
}

TEST_CASE("simulate and normalize") {
    ld_volume *a = make_volume(std::vector<float>(8, 1.0f), 2, 2, 2);
    ld_volume *b = make_volume(std::vector<float>(8, 3.0f), 2, 2, 2);
    ld_volume *mix = nullptr;
    REQUIRE(ld_simulate(a, b, 50, 0.0, 0, &mix) == LD_OK);
    std::vector<float> out(8);
    ld_volume_copy_data(mix, out.data(), out.size());
    for (float x : out) CHECK(x == 2.0f);
    ld_volume *bad = nullptr;
    CHECK(ld_simulate(a, b, 101, 0.0, 0, &bad) == LD_ERR_CONFIG);
    CHECK(bad == nullptr);
    CHECK(ld_normalize(a, &bad, nullptr, nullptr) == LD_ERR_DATA);

    std::vector<float> ramp{0, 1, 2, 3, 4, 5, 6, 8};
    ld_volume *r = make_volume(ramp, 2, 2, 2), *n = nullptr;
    double lo = 0, hi = 0;
    REQUIRE(ld_normalize(r, &n, &lo, &hi) == LD_OK);
    CHECK(lo == 0.0);
    CHECK(hi == 8.0);
    ld_volume_copy_data(n, out.data(), out.size());
    CHECK(out.front() == -1.0f);
    CHECK(out.back() == 1.0f);
    for (auto *v : {a, b, mix, r, n}) ld_volume_free(v);
}

TEST_CASE("phantom cohort, calibration, training and restoration") {
    Scratch s;
    ld_config *c = nullptr;
    REQUIRE(ld_config_new(&c) == LD_OK);
    ld_config_set(c, "cohort.phantoms=2");
    REQUIRE(ld_phantom_cohort(c, s.dir.string().c_str(), 1) == LD_OK);
    const fs::path study = s.dir / "study000";
    REQUIRE(fs::exists(study / "t1.hdr"));
    size_t split_x = 0;
    REQUIRE(ld_cohort_split_x(s.dir.string().c_str(), "study000", &split_x) == LD_OK);
    CHECK(split_x > 0);
    CHECK(ld_cohort_split_x(s.dir.string().c_str(), "nobody", &split_x) == LD_ERR_DATA);

    ld_volume *t1 = nullptr, *t1ce = nullptr, *cal = nullptr;
    REQUIRE(ld_volume_read((study / "t1.hdr").c_str(), &t1) == LD_OK);
    REQUIRE(ld_volume_read((study / "t1ce.hdr").c_str(), &t1ce) == LD_OK);
    double scale = 0, offset = 0;
    REQUIRE(ld_calibrate(t1, t1ce, 256, 2, &scale, &offset) == LD_OK);
    CHECK(scale > 0.0);
    REQUIRE(ld_calibration_write(scale, offset, s.file("cal.txt").c_str()) == LD_OK);
    double scale2 = 0, offset2 = 0;
    REQUIRE(ld_calibration_read(s.file("cal.txt").c_str(), &scale2, &offset2) == LD_OK);
    CHECK(scale2 == scale);
    CHECK(offset2 == offset);
    REQUIRE(ld_apply_calibration(t1ce, scale, offset, &cal) == LD_OK);
    CHECK(ld_histogram_csv(t1, cal, 64, s.file("hist.csv").c_str()) == LD_OK);

    ld_volume *low = nullptr, *lown = nullptr, *stdn = nullptr;
    REQUIRE(ld_simulate(t1, cal, 10, 0.0, 0, &low) == LD_OK);
    REQUIRE(ld_normalize(low, &lown, nullptr, nullptr) == LD_OK);
    REQUIRE(ld_normalize(cal, &stdn, nullptr, nullptr) == LD_OK);

    ld_config_set(c, "train.steps=3");
    ld_config_set(c, "train.batch=2");
    const ld_volume *ins[] = {lown}, *tgts[] = {stdn};
    REQUIRE(ld_train(c, 1, ins, tgts, nullptr, s.file("m.ckpt").c_str(), s.file("h.csv").c_str()) == LD_OK);
    ld_model *m = nullptr;
    REQUIRE(ld_model_load(s.file("m.ckpt").c_str(), &m) == LD_OK);
    int channels = 0;
    REQUIRE(ld_model_input_channels(m, &channels) == LD_OK);
    CHECK(channels == 1);
    ld_volume *restored = nullptr;
    REQUIRE(ld_restore(m, lown, nullptr, 32, 40, 0.125, &restored) == LD_OK);
    CHECK(ld_restore(m, lown, stdn, 32, 40, 0.125, &restored) == LD_ERR_DATA);

    ld_mask *mask = nullptr;
    REQUIRE(ld_mask_read((study / "mask.hdr").c_str(), &mask) == LD_OK);
    ld_records *rec = nullptr;
    REQUIRE(ld_records_new(&rec) == LD_OK);
    REQUIRE(ld_evaluate(rec, "study000", 10, "low_dose", lown, stdn, mask, split_x, -1.0, nullptr) == LD_OK);
    REQUIRE(ld_evaluate(rec, "study000", 10, "restored", restored, stdn, mask, split_x, -1.0, nullptr) == LD_OK);
    CHECK(ld_evaluate(rec, "study000", 10, "bogus", restored, stdn, mask, split_x, -1.0, nullptr) != LD_OK);
    size_t n = 0;
    ld_records_size(rec, &n);
    CHECK(n == 2);
    REQUIRE(ld_records_write(rec, s.file("metrics.csv").c_str()) == LD_OK);
    REQUIRE(ld_significance(s.file("metrics.csv").c_str(), s.file("sig.csv").c_str()) == LD_OK);
    REQUIRE(ld_report(s.file("metrics.csv").c_str(), s.file("sig.csv").c_str(), s.dir.string().c_str(), 1) ==
            LD_OK);
    CHECK(fs::exists(s.dir / "table4.csv"));
    CHECK(fs::exists(s.dir / "fig4.svg"));

    for (auto *v : {t1, t1ce, cal, low, lown, stdn, restored}) ld_volume_free(v);
    ld_mask_free(mask);
    ld_model_free(m);
    ld_records_free(rec);
    ld_config_free(c);
}
