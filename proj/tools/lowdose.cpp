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

// Command-line front end. Talks to the library only through lowdose.h.

#include "lowdose/lowdose.h"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

// A failed library call carries its status out to main().
struct Failure {
    ld_status status;
};

void check(ld_status s) {
    if (s != LD_OK) {
        std::fprintf(stderr, "lowdose: %s\n", ld_last_error());
        throw Failure{s};
    }
}

[[noreturn]] void usage_error(const std::string &msg) {
    std::fprintf(stderr, "lowdose: %s\n", msg.c_str());
    throw Failure{LD_ERR_CONFIG};
}

template <class T, void (*Free)(T *)> struct Deleter {
    void operator()(T *p) const { Free(p); }
};
using Volume = std::unique_ptr<ld_volume, Deleter<ld_volume, ld_volume_free>>;
using Mask = std::unique_ptr<ld_mask, Deleter<ld_mask, ld_mask_free>>;
using Config = std::unique_ptr<ld_config, Deleter<ld_config, ld_config_free>>;
using Model = std::unique_ptr<ld_model, Deleter<ld_model, ld_model_free>>;
using Records = std::unique_ptr<ld_records, Deleter<ld_records, ld_records_free>>;

Volume read_volume(const std::string &path) {
    ld_volume *v = nullptr;
    check(ld_volume_read(path.c_str(), &v));
    return Volume(v);
}

Mask read_mask(const std::string &path) {
    ld_mask *m = nullptr;
    check(ld_mask_read(path.c_str(), &m));
    return Mask(m);
}

Config make_config(const std::string &path, const std::vector<std::string> &overrides) {
    ld_config *c = nullptr;
    check(path.empty() ? ld_config_new(&c) : ld_config_load(path.c_str(), &c));
    Config cfg(c);
    for (const auto &o : overrides) check(ld_config_set(cfg.get(), o.c_str()));
    return cfg;
}

void parse_patch(const std::string &text, size_t &rows, size_t &cols) {
    const auto x = text.find('x');
    try {
        if (x == std::string::npos) throw std::invalid_argument(text);
        size_t used = 0;
        rows = std::stoul(text.substr(0, x), &used);
        if (used != x) throw std::invalid_argument(text);
        cols = std::stoul(text.substr(x + 1), &used);
        if (used != text.size() - x - 1) throw std::invalid_argument(text);
    } catch (const std::exception &) {
        usage_error("--patch expects ROWSxCOLS, got '" + text + "'");
    }
}

void progress_line(const char *msg, void *) {
    std::fprintf(stderr, "%s\n", msg);
    std::fflush(stderr);
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"lowdose: contrast dose reduction toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(ld_version()));

    std::string config_path;
    std::vector<std::string> overrides;
    int jobs = 1;
    auto add_config = [&](CLI::App *sub) {
        sub->add_option("--config", config_path, "key=value configuration file")->check(CLI::ExistingFile);
        sub->add_option("--set", overrides, "override a config key (key=value), repeatable");
    };

    // phantom-gen
    auto *pg = app.add_subcommand("phantom-gen", "generate a synthetic phantom cohort");
    std::string pg_out;
    long pg_n = -1;
    long long pg_seed = -1;
    pg->add_option("--out", pg_out, "output directory")->required();
    pg->add_option("--n", pg_n, "number of studies");
    pg->add_option("--seed", pg_seed, "cohort seed");
    pg->add_option("--jobs", jobs, "worker threads");
    add_config(pg);

    // calibrate
    auto *cal = app.add_subcommand("calibrate", "estimate the T1ce -> T1 intensity map");
    std::string cal_t1, cal_t1ce, cal_out, cal_hist, cal_apply;
    size_t cal_bins = 256, cal_radius = 2;
    cal->add_option("--t1", cal_t1, "T1 volume header")->required();
    cal->add_option("--t1ce", cal_t1ce, "T1ce volume header")->required();
    cal->add_option("--out", cal_out, "calibration map file (scale=, offset=)")->required();
    cal->add_option("--hist", cal_hist, "histogram CSV");
    cal->add_option("--apply", cal_apply, "also write the calibrated T1ce volume here");
    cal->add_option("--bins", cal_bins, "histogram bins");
    cal->add_option("--smooth", cal_radius, "moving-average radius in bins");

    // simulate
    auto *sim = app.add_subcommand("simulate", "simulate low-dose volumes");
    std::string sim_t1, sim_t1ce, sim_map, sim_out;
    std::vector<int> sim_betas;
    double sim_sigma = 0.0;
    unsigned long long sim_seed = 0;
    sim->add_option("--t1", sim_t1, "T1 volume header")->required();
    sim->add_option("--t1ce", sim_t1ce, "T1ce volume header (uncalibrated)")->required();
    sim->add_option("--map", sim_map, "calibration map file")->required();
    sim->add_option("--beta", sim_betas, "dose percentages, comma separated")->required()->delimiter(',');
    sim->add_option("--out-dir", sim_out, "output directory")->required();
    sim->add_option("--noise-sigma", sim_sigma, "additive Gaussian noise (0: none)");
    sim->add_option("--noise-seed", sim_seed, "noise seed");

    // train
    auto *tr = app.add_subcommand("train", "train a restoration model");
    std::vector<std::string> tr_in, tr_target, tr_aux;
    std::string tr_out, tr_hist;
    tr->add_option("--input", tr_in, "normalized low-dose volumes")->required()->delimiter(',');
    tr->add_option("--target", tr_target, "normalized standard-dose volumes")->required()->delimiter(',');
    tr->add_option("--aux", tr_aux, "normalized T1 volumes (two-channel models)")->delimiter(',');
    tr->add_option("--out", tr_out, "checkpoint path")->required();
    tr->add_option("--history", tr_hist, "per-step loss CSV");
    add_config(tr);

    // restore
    auto *rs = app.add_subcommand("restore", "restore a low-dose volume");
    std::string rs_ckpt, rs_in, rs_aux, rs_out, rs_patch = "128x160";
    double rs_sigma = 0.125;
    rs->add_option("--checkpoint", rs_ckpt, "model checkpoint")->required();
    rs->add_option("--input", rs_in, "normalized low-dose volume")->required();
    rs->add_option("--aux-t1", rs_aux, "normalized T1 volume");
    rs->add_option("--out", rs_out, "restored volume header")->required();
    rs->add_option("--patch", rs_patch, "patch size ROWSxCOLS");
    rs->add_option("--sigma-frac", rs_sigma, "Gaussian sigma as a fraction of the patch extent");

    // evaluate
    auto *ev = app.add_subcommand("evaluate", "score a volume against the standard dose");
    std::string ev_test, ev_ref, ev_mask, ev_study, ev_arm = "restored", ev_out, ev_cohort;
    int ev_beta = 0;
    long long ev_split = -1;
    double ev_frac = -1.0;
    bool ev_append = false;
    ev->add_option("--test", ev_test, "volume to score")->required();
    ev->add_option("--reference", ev_ref, "standard-dose volume")->required();
    ev->add_option("--mask", ev_mask, "ground-truth mask")->required();
    ev->add_option("--study", ev_study, "study id")->required();
    ev->add_option("--beta", ev_beta, "dose percentage")->required();
    ev->add_option("--arm", ev_arm, "low_dose or restored");
    ev->add_option("--split-x", ev_split, "first intrameatal voxel column");
    ev->add_option("--cohort", ev_cohort, "cohort directory providing truth.csv");
    ev->add_option("--threshold-frac", ev_frac, "stand-in segmenter threshold");
    ev->add_option("--out", ev_out, "metrics.csv")->required();
    ev->add_flag("--append", ev_append, "append to an existing metrics.csv");

    // stats
    auto *st = app.add_subcommand("stats", "signed-rank tests per metric and dose");
    std::string st_metrics, st_out;
    st->add_option("--metrics", st_metrics, "metrics.csv")->required()->check(CLI::ExistingFile);
    st->add_option("--out", st_out, "significance.csv")->required();

    // report
    auto *rp = app.add_subcommand("report", "aggregate tables and plots");
    std::string rp_metrics, rp_sig, rp_out;
    bool rp_nosvg = false;
    rp->add_option("--metrics", rp_metrics, "metrics.csv")->required()->check(CLI::ExistingFile);
    rp->add_option("--significance", rp_sig, "significance.csv (recomputed when absent)");
    rp->add_option("--out-dir", rp_out, "output directory")->required();
    rp->add_flag("--no-svg", rp_nosvg, "skip fig4.svg");

    // run
    auto *rn = app.add_subcommand("run", "full pipeline");
    std::string rn_work, rn_data;
    long rn_phantoms = -1;
    bool rn_quiet = false;
    rn->add_option("--work-dir", rn_work, "output directory (paths.work_dir)");
    rn->add_option("--data-dir", rn_data, "existing cohort (paths.data_dir)");
    rn->add_option("--phantom", rn_phantoms, "generate this many phantom studies");
    rn->add_option("--jobs", jobs, "worker threads; 1 is deterministic");
    rn->add_flag("--quiet", rn_quiet, "no progress output");
    add_config(rn);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return LD_ERR_CONFIG;
    }

    try {
        if (*pg) {
            Config cfg = make_config(config_path, overrides);
            if (pg_n >= 0) check(ld_config_set(cfg.get(), ("cohort.phantoms=" + std::to_string(pg_n)).c_str()));
            if (pg_seed >= 0) check(ld_config_set(cfg.get(), ("cohort.seed=" + std::to_string(pg_seed)).c_str()));
            check(ld_phantom_cohort(cfg.get(), pg_out.c_str(), jobs));
        } else if (*cal) {
            Volume t1 = read_volume(cal_t1), t1ce = read_volume(cal_t1ce);
            double scale = 0, offset = 0;
            check(ld_calibrate(t1.get(), t1ce.get(), cal_bins, cal_radius, &scale, &offset));
            check(ld_calibration_write(scale, offset, cal_out.c_str()));
            if (!cal_hist.empty() || !cal_apply.empty()) {
                ld_volume *c = nullptr;
                check(ld_apply_calibration(t1ce.get(), scale, offset, &c));
                Volume calibrated(c);
                if (!cal_hist.empty()) check(ld_histogram_csv(t1.get(), calibrated.get(), cal_bins, cal_hist.c_str()));
                if (!cal_apply.empty()) check(ld_volume_write(calibrated.get(), cal_apply.c_str()));
            }
            std::printf("scale=%.17g\noffset=%.17g\n", scale, offset);
        } else if (*sim) {
            Volume t1 = read_volume(sim_t1), t1ce = read_volume(sim_t1ce);
            double scale = 0, offset = 0;
            check(ld_calibration_read(sim_map.c_str(), &scale, &offset));
            ld_volume *c = nullptr;
            check(ld_apply_calibration(t1ce.get(), scale, offset, &c));
            Volume calibrated(c);
            fs::create_directories(sim_out);
            const fs::path dir(sim_out);
            std::ofstream manifest(dir / "sim_manifest.csv", std::ios::binary);
            if (!manifest) usage_error("cannot write " + (dir / "sim_manifest.csv").string());
            manifest << "beta,file,lo,hi\n";
            char buf[128];
            for (int beta : sim_betas) {
                ld_volume *low = nullptr, *norm = nullptr;
                check(ld_simulate(t1.get(), calibrated.get(), beta, sim_sigma, sim_seed + static_cast<unsigned>(beta),
                                  &low));
                Volume low_v(low);
                double lo = 0, hi = 0;
                check(ld_normalize(low_v.get(), &norm, &lo, &hi));
                Volume norm_v(norm);
                const std::string name = "lowdose_b" + std::to_string(beta) + ".hdr";
                check(ld_volume_write(norm_v.get(), (dir / name).string().c_str()));
                std::snprintf(buf, sizeof buf, "%.17g,%.17g", lo, hi);
                manifest << beta << ',' << name << ',' << buf << '\n';
            }
            // Reference and auxiliary channel in the same normalized convention.
            for (const auto &[src, name] : {std::pair{calibrated.get(), "standard.hdr"}, {t1.get(), "t1_norm.hdr"}}) {
                ld_volume *norm = nullptr;
                double lo = 0, hi = 0;
                check(ld_normalize(src, &norm, &lo, &hi));
                Volume norm_v(norm);
                check(ld_volume_write(norm_v.get(), (dir / name).string().c_str()));
                std::snprintf(buf, sizeof buf, "%.17g,%.17g", lo, hi);
                manifest << (src == t1.get() ? 0 : 100) << ',' << name << ',' << buf << '\n';
            }
            if (!manifest.flush()) usage_error("failed writing sim_manifest.csv");
        } else if (*tr) {
            if (tr_in.size() != tr_target.size()) usage_error("--input and --target need the same number of volumes");
            if (!tr_aux.empty() && tr_aux.size() != tr_in.size())
                usage_error("--aux needs one volume per --input");
            Config cfg = make_config(config_path, overrides);
            std::vector<Volume> owned;
            std::vector<const ld_volume *> in, target, aux;
            for (size_t i = 0; i < tr_in.size(); ++i) {
                owned.push_back(read_volume(tr_in[i]));
                in.push_back(owned.back().get());
                owned.push_back(read_volume(tr_target[i]));
                target.push_back(owned.back().get());
                if (!tr_aux.empty()) {
                    owned.push_back(read_volume(tr_aux[i]));
                    aux.push_back(owned.back().get());
                }
            }
            check(ld_train(cfg.get(), in.size(), in.data(), target.data(), aux.empty() ? nullptr : aux.data(),
                           tr_out.c_str(), tr_hist.empty() ? nullptr : tr_hist.c_str()));
        } else if (*rs) {
            size_t rows = 0, cols = 0;
            parse_patch(rs_patch, rows, cols);
            ld_model *m = nullptr;
            check(ld_model_load(rs_ckpt.c_str(), &m));
            Model model(m);
            Volume low = read_volume(rs_in);
            Volume aux = rs_aux.empty() ? Volume() : read_volume(rs_aux);
            ld_volume *out = nullptr;
            check(ld_restore(model.get(), low.get(), aux.get(), rows, cols, rs_sigma, &out));
            Volume restored(out);
            check(ld_volume_write(restored.get(), rs_out.c_str()));
        } else if (*ev) {
            size_t split_x = 0;
            if (ev_split >= 0)
                split_x = static_cast<size_t>(ev_split);
            else if (!ev_cohort.empty())
                check(ld_cohort_split_x(ev_cohort.c_str(), ev_study.c_str(), &split_x));
            else
                usage_error("evaluate needs --split-x or --cohort");
            ld_records *r = nullptr;
            check(ev_append && fs::exists(ev_out) ? ld_records_read(ev_out.c_str(), &r) : ld_records_new(&r));
            Records records(r);
            Volume test = read_volume(ev_test), ref = read_volume(ev_ref);
            Mask mask = read_mask(ev_mask);
            check(ld_evaluate(records.get(), ev_study.c_str(), ev_beta, ev_arm.c_str(), test.get(), ref.get(),
                              mask.get(), split_x, ev_frac, nullptr));
            check(ld_records_write(records.get(), ev_out.c_str()));
        } else if (*st) {
            check(ld_significance(st_metrics.c_str(), st_out.c_str()));
        } else if (*rp) {
            check(ld_report(rp_metrics.c_str(), rp_sig.empty() ? nullptr : rp_sig.c_str(), rp_out.c_str(),
                            rp_nosvg ? 0 : 1));
        } else if (*rn) {
            Config cfg = make_config(config_path, overrides);
            if (!rn_work.empty()) check(ld_config_set(cfg.get(), ("paths.work_dir=" + rn_work).c_str()));
            if (!rn_data.empty()) check(ld_config_set(cfg.get(), ("paths.data_dir=" + rn_data).c_str()));
            if (rn_phantoms >= 0)
                check(ld_config_set(cfg.get(), ("cohort.phantoms=" + std::to_string(rn_phantoms)).c_str()));
            if (jobs < 1) usage_error("--jobs must be >= 1");
            check(ld_run(cfg.get(), jobs, rn_quiet ? nullptr : progress_line, nullptr));
        }
    } catch (const Failure &f) {
        return static_cast<int>(f.status);
    } catch (const std::exception &e) {
        std::fprintf(stderr, "lowdose: %s\n", e.what());
        return LD_ERR_INTERNAL;
    }
    return 0;
}
