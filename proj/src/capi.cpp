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

#include "lowdose/lowdose.h"

#include "lowdose/calibrate.hpp"
#include "lowdose/config.hpp"
#include "lowdose/error.hpp"
#include "lowdose/experiment.hpp"
#include "lowdose/infer.hpp"
#include "lowdose/model.hpp"
#include "lowdose/phantom.hpp"
#include "lowdose/simulate.hpp"
#include "lowdose/volume.hpp"
#include "util.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <new>
#include <string>

struct ld_volume {
    lowdose::Volume v;
};
struct ld_mask {
    lowdose::Mask m;
};
struct ld_config {
    lowdose::Config c;
};
struct ld_model {
    lowdose::ModelParams p;
};
struct ld_records {
    std::vector<lowdose::EvalRecord> r;
};

namespace {

using namespace lowdose;
using detail::strprintf;

thread_local std::string g_last_error;

ld_status fail(ld_status s, const std::string &msg) {
    g_last_error = msg;
    return s;
}

template <class F> ld_status guard(F &&f) {
    try {
        f();
        return LD_OK;
    } catch (const Error &e) {
        return fail(static_cast<ld_status>(static_cast<int>(e.kind())), e.what());
    } catch (const std::bad_alloc &) {
        return fail(LD_ERR_INTERNAL, "out of memory");
    } catch (const std::filesystem::filesystem_error &e) {
        return fail(LD_ERR_DATA, e.what());
    } catch (const std::exception &e) {
        return fail(LD_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(LD_ERR_INTERNAL, "unknown error");
    }
}

void need(const void *p, const char *what) {
    if (!p) throw ConfigError(std::string(what) + " must not be NULL");
}

Config config_or_empty(const ld_config *cfg) { return cfg ? cfg->c : Config{}; }

} // namespace

extern "C" {

const char *ld_version(void) { return "0.1.0"; }

const char *ld_last_error(void) { return g_last_error.c_str(); }

ld_status ld_config_new(ld_config **out) {
    return guard([&] {
        need(out, "out");
        *out = new ld_config{};
    });
}

ld_status ld_config_load(const char *path, ld_config **out) {
    return guard([&] {
        need(path, "path");
        need(out, "out");
        *out = new ld_config{Config::load(path)};
    });
}

ld_status ld_config_set(ld_config *cfg, const char *assignment) {
    return guard([&] {
        need(cfg, "cfg");
        need(assignment, "assignment");
        cfg->c.set_assignment(assignment);
    });
}

void ld_config_free(ld_config *cfg) { delete cfg; }

ld_status ld_volume_read(const char *header_path, ld_volume **out) {
    return guard([&] {
        need(header_path, "header_path");
        need(out, "out");
        *out = new ld_volume{read_volume(header_path)};
    });
}

ld_status ld_volume_write(const ld_volume *v, const char *header_path) {
    return guard([&] {
        need(v, "volume");
        need(header_path, "header_path");
        write_volume(v->v, header_path);
    });
}

ld_status ld_volume_geometry(const ld_volume *v, size_t *dims, double *spacing) {
    return guard([&] {
        need(v, "volume");
        const Dims &d = v->v.dims();
        if (dims) {
            dims[0] = d.nx;
            dims[1] = d.ny;
            dims[2] = d.nz;
        }
        if (spacing) std::copy(v->v.spacing().begin(), v->v.spacing().end(), spacing);
    });
}

ld_status ld_volume_copy_data(const ld_volume *v, float *dst, size_t count) {
    return guard([&] {
        need(v, "volume");
        need(dst, "dst");
        const auto data = v->v.data();
        std::copy_n(data.begin(), std::min(count, data.size()), dst);
    });
}

ld_status ld_volume_create(const size_t *dims, const double *spacing, const float *data, const char *unit,
                           ld_volume **out) {
    return guard([&] {
        need(dims, "dims");
        need(spacing, "spacing");
        need(data, "data");
        need(out, "out");
        const Dims d{dims[0], dims[1], dims[2]};
        std::vector<float> values(data, data + d.count());
        *out = new ld_volume{Volume(d, {spacing[0], spacing[1], spacing[2]}, std::move(values),
                                    unit ? unit : "arbitrary")};
    });
}

ld_status ld_volume_export_pgm(const ld_volume *v, size_t z, double lo, double hi, const char *path) {
    return guard([&] {
        need(v, "volume");
        need(path, "path");
        std::optional<std::pair<double, double>> window;
        if (lo < hi) window = std::make_pair(lo, hi);
        export_slice_pgm(v->v, z, path, window);
    });
}

void ld_volume_free(ld_volume *v) { delete v; }

ld_status ld_mask_read(const char *header_path, ld_mask **out) {
    return guard([&] {
        need(header_path, "header_path");
        need(out, "out");
        *out = new ld_mask{read_mask(header_path)};
    });
}

ld_status ld_mask_write(const ld_mask *m, const char *header_path) {
    return guard([&] {
        need(m, "mask");
        need(header_path, "header_path");
        write_mask(m->m, header_path);
    });
}

void ld_mask_free(ld_mask *m) { delete m; }

ld_status ld_phantom_cohort(const ld_config *cfg, const char *out_dir, int jobs) {
    return guard([&] {
        need(out_dir, "out_dir");
        const Config c = config_or_empty(cfg);
        CohortOptions co;
        co.n_studies = static_cast<std::size_t>(c.get_u64("cohort.phantoms", co.n_studies));
        co.base_seed = c.get_u64("cohort.seed", co.base_seed);
        co.studies_per_patient =
            static_cast<std::size_t>(c.get_u64("cohort.studies_per_patient", co.studies_per_patient));
        co.base.noise_sigma = c.get_double("phantom.noise_sigma", co.base.noise_sigma);
        co.base.texture_amplitude = c.get_double("phantom.texture_amplitude", co.base.texture_amplitude);
        if (co.n_studies == 0) throw ConfigError("cohort.phantoms must be >= 1");
        write_phantom_cohort(co, out_dir, jobs);
    });
}

ld_status ld_calibrate(const ld_volume *t1, const ld_volume *t1ce, size_t bins, size_t smooth_radius,
                       double *scale, double *offset) {
    return guard([&] {
        need(t1, "t1");
        need(t1ce, "t1ce");
        need(scale, "scale");
        need(offset, "offset");
        CalibrationOptions opt;
        opt.n_bins = bins;
        opt.smooth_radius = smooth_radius;
        const auto m = estimate_calibration(t1->v, t1ce->v, opt);
        *scale = m.scale;
        *offset = m.offset;
    });
}

ld_status ld_histogram_csv(const ld_volume *t1, const ld_volume *t1ce_calibrated, size_t bins, const char *path) {
    return guard([&] {
        need(t1, "t1");
        need(t1ce_calibrated, "t1ce_calibrated");
        need(path, "path");
        if (bins == 0) throw ConfigError("histogram needs at least one bin");
        const auto a = t1->v.data(), b = t1ce_calibrated->v.data();
        const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
        const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
        const double lo = std::min(*amin, *bmin), hi = std::max(*amax, *bmax);
        if (!(hi > lo)) throw DataError("histogram range is degenerate");
        const double width = (hi - lo) / static_cast<double>(bins);
        auto bin = [&](double x) {
            return std::min(bins - 1, static_cast<std::size_t>((x - lo) / width));
        };
        std::vector<std::size_t> ca(bins), cb(bins);
        for (float x : a) ++ca[bin(x)];
        for (float x : b) ++cb[bin(x)];
        std::ofstream os(path, std::ios::binary);
        if (!os) throw DataError(std::string("cannot write ") + path);
        os << "bin_center,count_t1,count_t1ce\n";
        for (std::size_t i = 0; i < bins; ++i)
            os << detail::format_exact(lo + (static_cast<double>(i) + 0.5) * width) << ',' << ca[i] << ',' << cb[i]
               << '\n';
        if (!os) throw DataError(std::string("failed writing ") + path);
    });
}

ld_status ld_calibration_write(double scale, double offset, const char *path) {
    return guard([&] {
        need(path, "path");
        AffineIntensityMap{scale, offset}.validate();
        std::ofstream os(path, std::ios::binary);
        if (!os) throw DataError(std::string("cannot write ") + path);
        os << "scale=" << detail::format_exact(scale) << "\noffset=" << detail::format_exact(offset) << '\n';
        if (!os) throw DataError(std::string("failed writing ") + path);
    });
}

ld_status ld_calibration_read(const char *path, double *scale, double *offset) {
    return guard([&] {
        need(path, "path");
        need(scale, "scale");
        need(offset, "offset");
        std::ifstream is(path);
        if (!is) throw DataError(std::string("cannot open ") + path);
        std::optional<double> s, o;
        for (std::string line; std::getline(is, line);) {
            const auto t = std::string(detail::trim(line));
            if (t.empty()) continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos) throw DataError(std::string(path) + ": malformed line '" + t + "'");
            const auto key = t.substr(0, eq);
            const double v = detail::parse_double(t.substr(eq + 1), std::string(path) + ": " + key);
            if (key == "scale")
                s = v;
            else if (key == "offset")
                o = v;
            else
                throw DataError(std::string(path) + ": unknown key '" + key + "'");
        }
        if (!s || !o) throw DataError(std::string(path) + ": needs scale= and offset=");
        AffineIntensityMap{*s, *o}.validate();
        *scale = *s;
        *offset = *o;
    });
}

ld_status ld_apply_calibration(const ld_volume *v, double scale, double offset, ld_volume **out) {
    return guard([&] {
        need(v, "volume");
        need(out, "out");
        *out = new ld_volume{apply_calibration(v->v, AffineIntensityMap{scale, offset})};
    });
}

ld_status ld_simulate(const ld_volume *t1, const ld_volume *t1ce_calibrated, int beta_percent, double noise_sigma,
                      uint64_t noise_seed, ld_volume **out) {
    return guard([&] {
        need(t1, "t1");
        need(t1ce_calibrated, "t1ce_calibrated");
        need(out, "out");
        std::optional<SimulationNoise> noise;
        if (noise_sigma != 0.0) noise = SimulationNoise{noise_sigma, noise_seed};
        *out = new ld_volume{simulate_low_dose(t1->v, t1ce_calibrated->v, DoseFraction(beta_percent), noise)};
    });
}

ld_status ld_normalize(const ld_volume *v, ld_volume **out, double *lo, double *hi) {
    return guard([&] {
        need(v, "volume");
        need(out, "out");
        auto n = normalize_unit_range(v->v);
        if (lo) *lo = n.lo;
        if (hi) *hi = n.hi;
        *out = new ld_volume{std::move(n.volume)};
    });
}

ld_status ld_train(const ld_config *cfg, size_t n, const ld_volume *const *inputs, const ld_volume *const *targets,
                   const ld_volume *const *aux, const char *checkpoint_path, const char *history_path) {
    return guard([&] {
        need(inputs, "inputs");
        need(targets, "targets");
        need(checkpoint_path, "checkpoint_path");
        const Config c = config_or_empty(cfg);
        const ExperimentConfig e = ExperimentConfig::from_config(c);
        std::vector<TrainingPair> pairs;
        for (size_t i = 0; i < n; ++i) {
            need(inputs[i], "inputs[i]");
            need(targets[i], "targets[i]");
            pairs.push_back({&inputs[i]->v, &targets[i]->v, aux && aux[i] ? &aux[i]->v : nullptr});
        }
        TrainConfig tc = e.train;
        tc.seed = e.seed;
        const TrainResult r = train(e.arch, pairs, tc);
        save_checkpoint(r.params, r.history, tc.seed, checkpoint_path);
        if (history_path) write_history_csv(r.history, history_path);
    });
}

ld_status ld_model_load(const char *checkpoint_path, ld_model **out) {
    return guard([&] {
        need(checkpoint_path, "checkpoint_path");
        need(out, "out");
        *out = new ld_model{load_checkpoint(checkpoint_path)};
    });
}

ld_status ld_model_input_channels(const ld_model *m, int *channels) {
    return guard([&] {
        need(m, "model");
        need(channels, "channels");
        *channels = m->p.arch.in_channels;
    });
}

void ld_model_free(ld_model *m) { delete m; }

ld_status ld_restore(const ld_model *m, const ld_volume *low, const ld_volume *aux, size_t patch_rows,
                     size_t patch_cols, double sigma_frac, ld_volume **out) {
    return guard([&] {
        need(m, "model");
        need(low, "low");
        need(out, "out");
        RestoreOptions opt{PatchSize{patch_rows, patch_cols}, sigma_frac};
        *out = new ld_volume{restore_volume(m->p, low->v, aux ? &aux->v : nullptr, opt)};
    });
}

ld_status ld_records_new(ld_records **out) {
    return guard([&] {
        need(out, "out");
        *out = new ld_records{};
    });
}

ld_status ld_records_read(const char *metrics_csv, ld_records **out) {
    return guard([&] {
        need(metrics_csv, "metrics_csv");
        need(out, "out");
        *out = new ld_records{read_metrics_csv(metrics_csv)};
    });
}

ld_status ld_records_size(const ld_records *r, size_t *n) {
    return guard([&] {
        need(r, "records");
        need(n, "n");
        *n = r->r.size();
    });
}

ld_status ld_evaluate(ld_records *r, const char *study_id, int beta_percent, const char *arm, const ld_volume *test,
                      const ld_volume *reference, const ld_mask *truth, size_t split_x, double threshold_frac,
                      const size_t *margin) {
    return guard([&] {
        need(r, "records");
        need(study_id, "study_id");
        need(arm, "arm");
        need(test, "test");
        need(reference, "reference");
        need(truth, "truth");
        (void)DoseFraction(beta_percent);
        SegmenterOptions seg;
        if (threshold_frac >= 0.0) seg.threshold_frac = threshold_frac;
        if (margin) seg.roi_margin = {margin[0], margin[1], margin[2]};
        r->r.push_back(evaluate_study(study_id, beta_percent, parse_arm(arm), test->v, reference->v, truth->m,
                                      split_x, seg));
    });
}

ld_status ld_records_write(const ld_records *r, const char *metrics_csv) {
    return guard([&] {
        need(r, "records");
        need(metrics_csv, "metrics_csv");
        write_metrics_csv(r->r, metrics_csv);
    });
}

void ld_records_free(ld_records *r) { delete r; }

ld_status ld_significance(const char *metrics_csv, const char *significance_csv) {
    return guard([&] {
        need(metrics_csv, "metrics_csv");
        need(significance_csv, "significance_csv");
        write_significance_csv(significance_table(read_metrics_csv(metrics_csv)), significance_csv);
    });
}

ld_status ld_report(const char *metrics_csv, const char *significance_csv, const char *out_dir, int svg) {
    return guard([&] {
        need(metrics_csv, "metrics_csv");
        need(out_dir, "out_dir");
        const auto records = read_metrics_csv(metrics_csv);
        const auto sig = significance_csv ? read_significance_csv(significance_csv) : significance_table(records);
        const ReportTables t = report_tables(records, sig);
        const std::filesystem::path dir(out_dir);
        std::filesystem::create_directories(dir);
        write_table4_csv(t, (dir / "table4.csv").string());
        write_fig4_csv(t, (dir / "fig4.csv").string());
        if (svg) write_fig4_svg(t, (dir / "fig4.svg").string());
    });
}

ld_status ld_run(const ld_config *cfg, int jobs, ld_progress_fn progress, void *user) {
    return guard([&] {
        const Config c = config_or_empty(cfg);
        const ExperimentConfig e = ExperimentConfig::from_config(c);
        ProgressFn fn;
        if (progress) fn = [&](const std::string &msg) { progress(msg.c_str(), user); };
        run_experiment(e, c, jobs, fn);
    });
}

ld_status ld_cohort_split_x(const char *cohort_dir, const char *study_id, size_t *split_x) {
    return guard([&] {
        need(cohort_dir, "cohort_dir");
        need(study_id, "study_id");
        need(split_x, "split_x");
        for (const auto &t : read_cohort_truth(cohort_dir))
            if (t.study_id == study_id) {
                *split_x = t.split_x;
                return;
            }
        throw DataError(strprintf("study %s not found in %s", study_id, cohort_dir));
    });
}

} // extern "C"
