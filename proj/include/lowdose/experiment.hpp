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

// Evaluation records, significance testing, report tables and the
// end-to-end experiment runner.

#pragma once

#include "lowdose/calibrate.hpp"
#include "lowdose/config.hpp"
#include "lowdose/infer.hpp"
#include "lowdose/metrics.hpp"
#include "lowdose/model.hpp"
#include "lowdose/phantom.hpp"
#include "lowdose/stats.hpp"

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lowdose {

enum class Arm { LowDose, Restored };
const char *arm_name(Arm a); // "low_dose" / "restored"
Arm parse_arm(const std::string &s);

/// Region-indexed arrays follow Region order: intra, extra, whole.
struct EvalRecord {
    std::string study_id;
    int beta = 0;
    Arm arm = Arm::LowDose;
    double ssim = 0.0;
    double psnr_db = 0.0; // +inf for identical crops
    std::array<double, 3> dice{};
    std::array<std::optional<double>, 3> hd95{}; // nullopt: a region is empty
    std::array<std::optional<double>, 3> asd{};
};

/// Image metrics on the truth-mask bounding box, then the stand-in segmenter
/// on `test` scored against `truth`.
EvalRecord evaluate_study(const std::string &study_id, int beta, Arm arm, const Volume &test, const Volume &ref,
                          const Mask &truth, std::size_t split_x, const SegmenterOptions &seg = {});

/// Metric column names of metrics.csv, in column order after study_id,beta,arm.
const std::vector<std::string> &metric_columns();
/// Value of a metric column; nullopt when undefined.
std::optional<double> metric_value(const EvalRecord &r, const std::string &column);

void write_metrics_csv(const std::vector<EvalRecord> &records, const std::string &path);
std::vector<EvalRecord> read_metrics_csv(const std::string &path);

struct SignificanceRow {
    std::string metric;
    int beta = 0;
    WilcoxonResult test;
    bool star = false; // p < 0.001
};

inline constexpr double kSignificanceLevel = 0.001;

/// Restored vs low-dose per (metric, beta), paired by study id. Pairs with an
/// undefined value on either side are left out.
std::vector<SignificanceRow> significance_table(const std::vector<EvalRecord> &records);
void write_significance_csv(const std::vector<SignificanceRow> &rows, const std::string &path);
std::vector<SignificanceRow> read_significance_csv(const std::string &path);

struct Summary {
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;             // n - 1 denominator; 0 when n == 1
    double ci_half_width = 0.0;  // t(0.975, n - 1) * sd / sqrt(n); 0 when n == 1
};

/// Summary of the finite values; `n` counts them.
Summary summarize(const std::vector<double> &values);

/// Two-sided 97.5% Student t quantile with `dof` degrees of freedom.
double t_quantile_975(std::size_t dof);

struct Table4Row {
    int beta = 0;
    Arm arm = Arm::LowDose;
    Summary ssim;
    Summary psnr;            // finite values only
    std::size_t psnr_inf = 0; // identical-crop records left out of psnr
    bool ssim_star = false;
    bool psnr_star = false;
};

struct Fig4Row {
    int beta = 0;
    Arm arm = Arm::LowDose;
    Region region = Region::Whole;
    std::string metric; // dice / hd95 / asd
    Summary summary;
};

struct ReportTables {
    std::vector<Table4Row> table4;
    std::vector<Fig4Row> fig4;
};

ReportTables report_tables(const std::vector<EvalRecord> &records, const std::vector<SignificanceRow> &sig);
void write_table4_csv(const ReportTables &t, const std::string &path);
void write_fig4_csv(const ReportTables &t, const std::string &path);
/// Line plots of the fig4 means per metric (whole region) against beta.
void write_fig4_svg(const ReportTables &t, const std::string &path);

// ---------------------------------------------------------------------------
// Cohort files

struct StudyTruth {
    std::string study_id;
    std::size_t patient_id = 0;
    Split split = Split::Train;
    std::size_t split_x = 0;
};

/// Writes <dir>/<study>/{t1,t1ce,mask}.hdr plus truth.csv and split.csv.
/// `jobs` > 1 generates studies concurrently.
std::vector<StudyTruth> write_phantom_cohort(const CohortOptions &opt, const std::string &dir, int jobs = 1);
std::vector<StudyTruth> read_cohort_truth(const std::string &dir);

Split parse_split(const std::string &s);

// ---------------------------------------------------------------------------
// Experiment runner

struct ExperimentConfig {
    std::string data_dir;     // existing cohort; empty means generate phantoms
    std::string work_dir = "run";
    std::size_t phantoms = 25;
    CohortOptions cohort;
    std::vector<int> doses;   // default: the full grid
    std::uint64_t seed = 7;
    ArchConfig arch;
    TrainConfig train;
    RestoreOptions restore{PatchSize{32, 40}, 0.125};
    CalibrationOptions calibration;
    SegmenterOptions segmenter;
    bool svg = true;
    bool save_models = true;

    /// Every key understood by from_config.
    static const std::vector<std::string> &known_keys();
    static ExperimentConfig from_config(const Config &c);
    void validate() const;
};

/// Seed used to train the model for dose `beta`.
std::uint64_t dose_seed(std::uint64_t seed, int beta);

struct ExperimentResult {
    std::vector<EvalRecord> records;
    std::vector<SignificanceRow> significance;
    ReportTables tables;
};

using ProgressFn = std::function<void(const std::string &)>;

/// Full pipeline: calibrate, simulate, normalize, train per dose, restore the
/// test split, evaluate both arms, test, and write metrics.csv,
/// significance.csv, table4.csv, fig4.csv, fig4.svg and manifest.txt into
/// work_dir. Any stage error is rethrown with the stage and study named,
/// after manifest.txt is written with status=incomplete.
ExperimentResult run_experiment(const ExperimentConfig &cfg, const Config &source, int jobs,
                                const ProgressFn &progress = {});

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception by
/// index is rethrown after all workers finish.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)> &fn);

} // namespace lowdose
