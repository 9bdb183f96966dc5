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

#include "lowdose/experiment.hpp"

#include "lowdose/error.hpp"
#include "lowdose/simulate.hpp"
#include "util.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace lowdose {

namespace fs = std::filesystem;
using detail::format_exact;
using detail::format_fixed;
using detail::strprintf;

namespace {

constexpr std::array<Region, 3> kRegions{Region::Intrameatal, Region::Extrameatal, Region::Whole};
constexpr const char *kUndefined = "undefined";

std::ofstream open_out(const std::string &path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path);
    return os;
}

void finish(std::ofstream &os, const std::string &path) {
    os.flush();
    if (!os) throw DataError("failed writing " + path);
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path);
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.find('"') != std::string::npos)
            throw DataError(strprintf("%s:%zu: quoted fields are not supported", path.c_str(), lineno));
        auto fields = detail::split(line, ',');
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size())
            throw DataError(strprintf("%s:%zu: expected %zu fields, found %zu", path.c_str(), lineno,
                                      t.header.size(), fields.size()));
        t.rows.push_back(std::move(fields));
    }
    if (t.header.empty()) throw DataError(path + ": missing header row");
    return t;
}

void expect_header(const CsvTable &t, const std::vector<std::string> &want, const std::string &path) {
    if (t.header != want) {
        std::string w;
        for (const auto &h : want) w += (w.empty() ? "" : ",") + h;
        throw DataError(path + ": header must be " + w);
    }
}

std::string opt_text(const std::optional<double> &v) { return v ? format_exact(*v) : kUndefined; }

std::optional<double> parse_opt(const std::string &s, const std::string &what) {
    if (s == kUndefined || s.empty()) return std::nullopt;
    return detail::parse_double(s, what);
}

} // namespace

const char *arm_name(Arm a) { return a == Arm::LowDose ? "low_dose" : "restored"; }

Arm parse_arm(const std::string &s) {
    if (s == "low_dose") return Arm::LowDose;
    if (s == "restored") return Arm::Restored;
    throw DataError("unknown arm '" + s + "'");
}

Split parse_split(const std::string &s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Validation;
    if (s == "test") return Split::Test;
    throw DataError("unknown split '" + s + "'");
}

EvalRecord evaluate_study(const std::string &study_id, int beta, Arm arm, const Volume &test, const Volume &ref,
                          const Mask &truth, std::size_t split_x, const SegmenterOptions &seg) {
    if (!(test.dims() == truth.dims()) || !(ref.dims() == truth.dims()))
        throw DataError("evaluate: volume and mask dims differ for " + study_id);
    EvalRecord r;
    r.study_id = study_id;
    r.beta = beta;
    r.arm = arm;
    const BoundingBox box = mask_bounding_box(truth, region_labels(Region::Whole));
    r.ssim = ssim_roi(test, ref, box);
    r.psnr_db = psnr_roi(test, ref, box);
    const BoundingBox roi = expand(box, seg.roi_margin, test.dims());
    const Segmentation s = stand_in_segment(test, roi, seg.threshold_frac, split_x);
    for (std::size_t i = 0; i < kRegions.size(); ++i) {
        const LabelSet labels = region_labels(kRegions[i]);
        r.dice[i] = dice(s.mask, truth, labels).value;
        r.hd95[i] = hd95(s.mask, truth, labels, truth.spacing());
        r.asd[i] = asd(s.mask, truth, labels, truth.spacing());
    }
    return r;
}

const std::vector<std::string> &metric_columns() {
    static const std::vector<std::string> cols = {
        "ssim",       "psnr_db",    "dice_intra", "dice_extra", "dice_whole", "hd95_intra",
        "hd95_extra", "hd95_whole", "asd_intra",  "asd_extra",  "asd_whole"};
    return cols;
}

std::optional<double> metric_value(const EvalRecord &r, const std::string &column) {
    if (column == "ssim") return r.ssim;
    if (column == "psnr_db") return r.psnr_db;
    for (std::size_t i = 0; i < kRegions.size(); ++i) {
        const std::string suffix = std::string("_") + region_name(kRegions[i]);
        if (column == "dice" + suffix) return r.dice[i];
        if (column == "hd95" + suffix) return r.hd95[i];
        if (column == "asd" + suffix) return r.asd[i];
    }
    throw DataError("unknown metric column '" + column + "'");
}

namespace {

std::vector<std::string> metrics_header() {
    std::vector<std::string> h{"study_id", "beta", "arm"};
    for (const auto &c : metric_columns()) h.push_back(c);
    return h;
}

} // namespace

void write_metrics_csv(const std::vector<EvalRecord> &records, const std::string &path) {
    auto os = open_out(path);
    const auto header = metrics_header();
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << '\n';
    for (const auto &r : records) {
        os << r.study_id << ',' << r.beta << ',' << arm_name(r.arm);
        for (const auto &c : metric_columns()) os << ',' << opt_text(metric_value(r, c));
        os << '\n';
    }
    finish(os, path);
}

std::vector<EvalRecord> read_metrics_csv(const std::string &path) {
    const CsvTable t = read_csv(path);
    expect_header(t, metrics_header(), path);
    std::vector<EvalRecord> out;
    std::set<std::tuple<std::string, int, Arm>> seen;
    for (const auto &row : t.rows) {
        EvalRecord r;
        r.study_id = row[0];
        r.beta = static_cast<int>(detail::parse_int(row[1], path + ": beta"));
        r.arm = parse_arm(row[2]);
        if (!seen.insert({r.study_id, r.beta, r.arm}).second)
            throw DataError(strprintf("%s: duplicate record for %s beta=%d arm=%s", path.c_str(),
                                      r.study_id.c_str(), r.beta, arm_name(r.arm)));
        std::vector<std::optional<double>> v;
        for (std::size_t i = 0; i < metric_columns().size(); ++i)
            v.push_back(parse_opt(row[3 + i], path + ": " + metric_columns()[i]));
        if (!v[0] || !v[1]) throw DataError(path + ": ssim and psnr_db must be defined for " + r.study_id);
        r.ssim = *v[0];
        r.psnr_db = *v[1];
        for (std::size_t i = 0; i < 3; ++i) {
            if (!v[2 + i]) throw DataError(path + ": dice must be defined for " + r.study_id);
            r.dice[i] = *v[2 + i];
            r.hd95[i] = v[5 + i];
            r.asd[i] = v[8 + i];
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<SignificanceRow> significance_table(const std::vector<EvalRecord> &records) {
    std::set<int> betas;
    std::map<std::tuple<int, Arm, std::string>, const EvalRecord *> by_key;
    for (const auto &r : records) {
        betas.insert(r.beta);
        by_key[{r.beta, r.arm, r.study_id}] = &r;
    }
    std::vector<SignificanceRow> out;
    for (const auto &metric : metric_columns())
        for (int beta : betas) {
            std::vector<double> restored, low;
            for (const auto &[key, rec] : by_key) {
                if (std::get<0>(key) != beta || std::get<1>(key) != Arm::Restored) continue;
                const auto it = by_key.find({beta, Arm::LowDose, std::get<2>(key)});
                if (it == by_key.end()) continue;
                const auto a = metric_value(*rec, metric), b = metric_value(*it->second, metric);
                if (!a || !b) continue;
                // Identical infinite PSNRs carry no difference.
                if (std::isinf(*a) || std::isinf(*b)) {
                    if (*a == *b) {
                        restored.push_back(0.0);
                        low.push_back(0.0);
                    }
                    continue;
                }
                restored.push_back(*a);
                low.push_back(*b);
            }
            SignificanceRow row;
            row.metric = metric;
            row.beta = beta;
            if (!restored.empty()) row.test = wilcoxon_signed_rank(restored, low);
            row.star = row.test.p_two_sided < kSignificanceLevel;
            out.push_back(row);
        }
    return out;
}

void write_significance_csv(const std::vector<SignificanceRow> &rows, const std::string &path) {
    auto os = open_out(path);
    os << "metric,beta,n,w,p,method,star\n";
    for (const auto &r : rows)
        os << r.metric << ',' << r.beta << ',' << r.test.n_effective << ',' << format_exact(r.test.w_statistic)
           << ',' << format_exact(r.test.p_two_sided) << ',' << method_name(r.test.method) << ','
           << (r.star ? "*" : "") << '\n';
    finish(os, path);
}

std::vector<SignificanceRow> read_significance_csv(const std::string &path) {
    const CsvTable t = read_csv(path);
    expect_header(t, {"metric", "beta", "n", "w", "p", "method", "star"}, path);
    std::vector<SignificanceRow> out;
    for (const auto &row : t.rows) {
        SignificanceRow r;
        r.metric = row[0];
        r.beta = static_cast<int>(detail::parse_int(row[1], path + ": beta"));
        r.test.n_effective = static_cast<std::size_t>(detail::parse_int(row[2], path + ": n"));
        r.test.w_statistic = detail::parse_double(row[3], path + ": w");
        r.test.p_two_sided = detail::parse_double(row[4], path + ": p");
        if (row[5] == "exact")
            r.test.method = WilcoxonMethod::Exact;
        else if (row[5] == "normal_approx")
            r.test.method = WilcoxonMethod::NormalApprox;
        else
            throw DataError(path + ": unknown method '" + row[5] + "'");
        if (row[6] != "" && row[6] != "*") throw DataError(path + ": star column must be empty or '*'");
        r.star = row[6] == "*";
        out.push_back(r);
    }
    return out;
}

double t_quantile_975(std::size_t dof) {
    if (dof == 0) throw NumericError("t quantile needs at least one degree of freedom");
    const boost::math::students_t dist(static_cast<double>(dof));
    return boost::math::quantile(dist, 0.975);
}

Summary summarize(const std::vector<double> &values) {
    Summary s;
    double sum = 0.0;
    for (double v : values)
        if (std::isfinite(v)) {
            sum += v;
            ++s.n;
        }
    if (s.n == 0) {
        s.mean = s.sd = s.ci_half_width = std::nan("");
        return s;
    }
    s.mean = sum / static_cast<double>(s.n);
    if (s.n == 1) return s;
    double ss = 0.0;
    for (double v : values)
        if (std::isfinite(v)) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.ci_half_width = t_quantile_975(s.n - 1) * s.sd / std::sqrt(static_cast<double>(s.n));
    return s;
}

ReportTables report_tables(const std::vector<EvalRecord> &records, const std::vector<SignificanceRow> &sig) {
    std::set<int> betas;
    for (const auto &r : records) betas.insert(r.beta);
    auto star = [&](const std::string &metric, int beta) {
        for (const auto &s : sig)
            if (s.metric == metric && s.beta == beta) return s.star;
        return false;
    };
    ReportTables t;
    for (int beta : betas)
        for (Arm arm : {Arm::LowDose, Arm::Restored}) {
            std::vector<const EvalRecord *> cell;
            for (const auto &r : records)
                if (r.beta == beta && r.arm == arm) cell.push_back(&r);
            if (cell.empty()) continue;

            Table4Row row;
            row.beta = beta;
            row.arm = arm;
            std::vector<double> ssim, psnr;
            for (const auto *r : cell) {
                ssim.push_back(r->ssim);
                if (std::isinf(r->psnr_db))
                    ++row.psnr_inf;
                else
                    psnr.push_back(r->psnr_db);
            }
            row.ssim = summarize(ssim);
            row.psnr = summarize(psnr);
            if (arm == Arm::Restored) {
                row.ssim_star = star("ssim", beta);
                row.psnr_star = star("psnr_db", beta);
            }
            t.table4.push_back(row);

            for (const char *metric : {"dice", "hd95", "asd"})
                for (std::size_t i = 0; i < kRegions.size(); ++i) {
                    const std::string column = std::string(metric) + "_" + region_name(kRegions[i]);
                    std::vector<double> vals;
                    for (const auto *r : cell)
                        if (const auto v = metric_value(*r, column)) vals.push_back(*v);
                    t.fig4.push_back({beta, arm, kRegions[i], metric, summarize(vals)});
                }
        }
    return t;
}

namespace {

std::string num(double v) { return std::isnan(v) ? kUndefined : format_fixed(v, 6); }

} // namespace

void write_table4_csv(const ReportTables &t, const std::string &path) {
    auto os = open_out(path);
    os << "beta,arm,n,ssim_mean,ssim_sd,ssim_star,psnr_mean,psnr_sd,psnr_star,psnr_inf_count\n";
    for (const auto &r : t.table4)
        os << r.beta << ',' << arm_name(r.arm) << ',' << r.ssim.n << ',' << num(r.ssim.mean) << ','
           << num(r.ssim.sd) << ',' << (r.ssim_star ? "*" : "") << ',' << num(r.psnr.mean) << ','
           << num(r.psnr.sd) << ',' << (r.psnr_star ? "*" : "") << ',' << r.psnr_inf << '\n';
    finish(os, path);
}

void write_fig4_csv(const ReportTables &t, const std::string &path) {
    auto os = open_out(path);
    os << "beta,arm,region,metric,n,mean,sd,ci_half_width\n";
    for (const auto &r : t.fig4)
        os << r.beta << ',' << arm_name(r.arm) << ',' << region_name(r.region) << ',' << r.metric << ','
           << r.summary.n << ',' << num(r.summary.mean) << ',' << num(r.summary.sd) << ','
           << num(r.summary.ci_half_width) << '\n';
    finish(os, path);
}

void write_fig4_svg(const ReportTables &t, const std::string &path) {
    constexpr double W = 300, H = 220, L = 50, R = 15, T = 30, B = 35;
    const char *metrics[] = {"dice", "hd95", "asd"};
    const char *colors[] = {"#c0392b", "#2471a3"};
    auto os = open_out(path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 3 * W << "\" height=\"" << H
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    for (int panel = 0; panel < 3; ++panel) {
        const double x0 = panel * W;
        std::vector<const Fig4Row *> rows;
        for (const auto &r : t.fig4)
            if (r.metric == metrics[panel] && r.region == Region::Whole && r.summary.n > 0) rows.push_back(&r);
        double lo = 0.0, hi = 1.0, bmin = 0.0, bmax = 100.0;
        if (!rows.empty()) {
            lo = hi = rows[0]->summary.mean;
            bmin = bmax = rows[0]->beta;
            for (const auto *r : rows) {
                lo = std::min(lo, r->summary.mean - r->summary.ci_half_width);
                hi = std::max(hi, r->summary.mean + r->summary.ci_half_width);
                bmin = std::min<double>(bmin, r->beta);
                bmax = std::max<double>(bmax, r->beta);
            }
            if (hi - lo < 1e-9) hi = lo + 1.0;
            if (bmax - bmin < 1e-9) bmax = bmin + 1.0;
        }
        auto px = [&](double b) { return x0 + L + (b - bmin) / (bmax - bmin) * (W - L - R); };
        auto py = [&](double v) { return T + (hi - v) / (hi - lo) * (H - T - B); };
        os << "<text x=\"" << format_fixed(x0 + W / 2, 1) << "\" y=\"16\" text-anchor=\"middle\">" << metrics[panel]
           << " (whole)</text>\n";
        os << "<rect x=\"" << format_fixed(x0 + L, 1) << "\" y=\"" << T << "\" width=\"" << W - L - R
           << "\" height=\"" << H - T - B << "\" fill=\"none\" stroke=\"#888\"/>\n";
        os << "<text x=\"" << format_fixed(x0 + L - 4, 1) << "\" y=\"" << format_fixed(T + 4, 1)
           << "\" text-anchor=\"end\">" << format_fixed(hi, 3) << "</text>\n";
        os << "<text x=\"" << format_fixed(x0 + L - 4, 1) << "\" y=\"" << format_fixed(H - B, 1)
           << "\" text-anchor=\"end\">" << format_fixed(lo, 3) << "</text>\n";
        os << "<text x=\"" << format_fixed(x0 + W / 2, 1) << "\" y=\"" << H - 8
           << "\" text-anchor=\"middle\">dose %</text>\n";
        for (int a = 0; a < 2; ++a) {
            const Arm arm = a == 0 ? Arm::LowDose : Arm::Restored;
            std::string pts;
            for (const auto *r : rows) {
                if (r->arm != arm) continue;
                const double x = px(r->beta), y = py(r->summary.mean);
                pts += format_fixed(x, 2) + "," + format_fixed(y, 2) + " ";
                os << "<line x1=\"" << format_fixed(x, 2) << "\" x2=\"" << format_fixed(x, 2) << "\" y1=\""
                   << format_fixed(py(r->summary.mean - r->summary.ci_half_width), 2) << "\" y2=\""
                   << format_fixed(py(r->summary.mean + r->summary.ci_half_width), 2) << "\" stroke=\""
                   << colors[a] << "\"/>\n";
            }
            if (!pts.empty())
                os << "<polyline fill=\"none\" stroke=\"" << colors[a] << "\" points=\"" << pts << "\"/>\n";
            os << "<text x=\"" << format_fixed(x0 + L + 6, 1) << "\" y=\"" << T + 14 + 13 * a << "\" fill=\""
               << colors[a] << "\">" << arm_name(arm) << "</text>\n";
        }
    }
    os << "</svg>\n";
    finish(os, path);
}

// ---------------------------------------------------------------------------

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)> &fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto &t : pool) t.join();
    for (auto &e : errors)
        if (e) std::rethrow_exception(e);
}

std::vector<StudyTruth> write_phantom_cohort(const CohortOptions &opt, const std::string &dir, int jobs) {
    const auto plan = plan_cohort(opt);
    fs::create_directories(dir);
    std::vector<StudyTruth> truths(plan.size());
    std::vector<PhantomTruth> details(plan.size());
    parallel_for(plan.size(), jobs, [&](std::size_t i) {
        const auto &s = plan[i];
        const Phantom p = generate_phantom(s.spec);
        const fs::path sd = fs::path(dir) / s.study_id;
        fs::create_directories(sd);
        write_volume(p.t1, sd / "t1.hdr");
        write_volume(p.t1ce, sd / "t1ce.hdr");
        write_mask(p.mask, sd / "mask.hdr");
        truths[i] = {s.study_id, s.patient_id, s.split, p.truth.split_x};
        details[i] = p.truth;
    });
    const std::string split_path = (fs::path(dir) / "split.csv").string();
    auto sp = open_out(split_path);
    sp << "study_id,patient_id,split\n";
    for (const auto &t : truths) sp << t.study_id << ',' << t.patient_id << ',' << split_name(t.split) << '\n';
    finish(sp, split_path);

    const std::string truth_path = (fs::path(dir) / "truth.csv").string();
    auto tp = open_out(truth_path);
    tp << "study_id,split_x,lesion_voxels,tissue_mean,lesion_mean_t1,lesion_mean_t1ce,window_gain,window_bias\n";
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const auto &d = details[i];
        tp << truths[i].study_id << ',' << d.split_x << ',' << d.lesion_voxels << ',' << format_exact(d.tissue_mean)
           << ',' << format_exact(d.lesion_mean_t1) << ',' << format_exact(d.lesion_mean_t1ce) << ','
           << format_exact(d.window_gain) << ',' << format_exact(d.window_bias) << '\n';
    }
    finish(tp, truth_path);
    return truths;
}

std::vector<StudyTruth> read_cohort_truth(const std::string &dir) {
    const std::string split_path = (fs::path(dir) / "split.csv").string();
    const std::string truth_path = (fs::path(dir) / "truth.csv").string();
    const CsvTable sp = read_csv(split_path);
    expect_header(sp, {"study_id", "patient_id", "split"}, split_path);
    const CsvTable tt = read_csv(truth_path);
    if (tt.header.size() < 2 || tt.header[0] != "study_id" || tt.header[1] != "split_x")
        throw DataError(truth_path + ": header must start with study_id,split_x");
    std::map<std::string, std::size_t> split_x;
    for (const auto &row : tt.rows)
        split_x[row[0]] = static_cast<std::size_t>(detail::parse_int(row[1], truth_path + ": split_x"));
    std::vector<StudyTruth> out;
    for (const auto &row : sp.rows) {
        StudyTruth t;
        t.study_id = row[0];
        t.patient_id = static_cast<std::size_t>(detail::parse_int(row[1], split_path + ": patient_id"));
        t.split = parse_split(row[2]);
        const auto it = split_x.find(t.study_id);
        if (it == split_x.end()) throw DataError(truth_path + ": no entry for study " + t.study_id);
        t.split_x = it->second;
        out.push_back(t);
    }
    if (out.empty()) throw DataError(split_path + ": cohort is empty");
    return out;
}

// ---------------------------------------------------------------------------

namespace {

PatchSize parse_patch(const std::string &key, const std::string &s) {
    const auto x = s.find('x');
    if (x == std::string::npos) throw ConfigError("config key '" + key + "': expected ROWSxCOLS, got '" + s + "'");
    try {
        return {static_cast<std::size_t>(detail::parse_int(s.substr(0, x), key)),
                static_cast<std::size_t>(detail::parse_int(s.substr(x + 1), key))};
    } catch (const Error &) {
        throw ConfigError("config key '" + key + "': expected ROWSxCOLS, got '" + s + "'");
    }
}

} // namespace

const std::vector<std::string> &ExperimentConfig::known_keys() {
    static const std::vector<std::string> keys = {
        "paths.data_dir",       "paths.work_dir",        "cohort.phantoms",       "cohort.seed",
        "cohort.studies_per_patient", "phantom.noise_sigma", "phantom.texture_amplitude", "doses",
        "seed",                 "model.enc_layers",      "model.mod_channels",    "model.dec_layers",
        "model.hidden",         "model.in_channels",     "model.residual",        "train.steps",
        "train.lr_g",           "train.lr_d",            "train.beta1",           "train.beta2",
        "train.epsilon",        "train.lambda_adv",      "train.lambda_reg",      "train.batch",
        "train.patch",          "train.flip_h",          "train.flip_v",          "train.shift_max_px",
        "train.crop",           "restore.patch",         "restore.sigma_frac",    "calibrate.bins",
        "calibrate.smooth_radius", "segment.threshold_frac", "segment.margin",    "report.svg",
        "output.save_models"};
    return keys;
}

ExperimentConfig ExperimentConfig::from_config(const Config &c) {
    const auto unknown = c.unknown_keys(known_keys());
    if (!unknown.empty()) throw ConfigError("unknown config key '" + unknown.front() + "'");
    ExperimentConfig e;
    e.data_dir = c.get_string("paths.data_dir", "");
    e.work_dir = c.get_string("paths.work_dir", e.work_dir);
    e.phantoms = static_cast<std::size_t>(c.get_u64("cohort.phantoms", e.phantoms));
    e.cohort.base_seed = c.get_u64("cohort.seed", e.cohort.base_seed);
    e.cohort.studies_per_patient =
        static_cast<std::size_t>(c.get_u64("cohort.studies_per_patient", e.cohort.studies_per_patient));
    e.cohort.base.noise_sigma = c.get_double("phantom.noise_sigma", e.cohort.base.noise_sigma);
    e.cohort.base.texture_amplitude = c.get_double("phantom.texture_amplitude", e.cohort.base.texture_amplitude);
    std::vector<int> grid;
    for (const auto &d : dose_grid()) grid.push_back(d.percent());
    e.doses = c.get_int_list("doses", grid);
    e.seed = c.get_u64("seed", e.seed);

    e.arch.enc_layers = static_cast<int>(c.get_int("model.enc_layers", e.arch.enc_layers));
    e.arch.mod_channels = static_cast<int>(c.get_int("model.mod_channels", e.arch.mod_channels));
    e.arch.dec_layers = static_cast<int>(c.get_int("model.dec_layers", e.arch.dec_layers));
    e.arch.hidden = static_cast<int>(c.get_int("model.hidden", e.arch.hidden));
    e.arch.in_channels = static_cast<int>(c.get_int("model.in_channels", e.arch.in_channels));
    e.arch.residual = c.get_bool("model.residual", e.arch.residual);

    auto &t = e.train;
    t.steps = static_cast<std::size_t>(c.get_u64("train.steps", t.steps));
    t.lr_g = c.get_double("train.lr_g", t.lr_g);
    t.lr_d = c.get_double("train.lr_d", t.lr_d);
    t.beta1 = c.get_double("train.beta1", t.beta1);
    t.beta2 = c.get_double("train.beta2", t.beta2);
    t.epsilon = c.get_double("train.epsilon", t.epsilon);
    t.lambda_adv = c.get_double("train.lambda_adv", t.lambda_adv);
    t.lambda_reg = c.get_double("train.lambda_reg", t.lambda_reg);
    t.batch = static_cast<std::size_t>(c.get_u64("train.batch", t.batch));
    if (const auto p = c.get("train.patch")) {
        const PatchSize ps = parse_patch("train.patch", *p);
        t.patch_h = ps.rows;
        t.patch_w = ps.cols;
    }
    t.augment.flip_h = c.get_bool("train.flip_h", t.augment.flip_h);
    t.augment.flip_v = c.get_bool("train.flip_v", t.augment.flip_v);
    t.augment.shift_max_px = static_cast<int>(c.get_int("train.shift_max_px", t.augment.shift_max_px));
    t.augment.crop = c.get_bool("train.crop", t.augment.crop);

    if (const auto p = c.get("restore.patch")) e.restore.patch = parse_patch("restore.patch", *p);
    e.restore.sigma_frac = c.get_double("restore.sigma_frac", e.restore.sigma_frac);
    e.calibration.n_bins = static_cast<std::size_t>(c.get_u64("calibrate.bins", e.calibration.n_bins));
    e.calibration.smooth_radius =
        static_cast<std::size_t>(c.get_u64("calibrate.smooth_radius", e.calibration.smooth_radius));
    e.segmenter.threshold_frac = c.get_double("segment.threshold_frac", e.segmenter.threshold_frac);
    if (const auto m = c.get("segment.margin")) {
        const auto parts = c.get_int_list("segment.margin", {});
        if (parts.size() != 3 || std::any_of(parts.begin(), parts.end(), [](int v) { return v < 0; }))
            throw ConfigError("config key 'segment.margin': expected three non-negative integers, got '" + *m + "'");
        e.segmenter.roi_margin = {static_cast<std::size_t>(parts[0]), static_cast<std::size_t>(parts[1]),
                                  static_cast<std::size_t>(parts[2])};
    }
    e.svg = c.get_bool("report.svg", e.svg);
    e.save_models = c.get_bool("output.save_models", e.save_models);
    e.validate();
    return e;
}

void ExperimentConfig::validate() const {
    if (doses.empty()) throw ConfigError("dose list is empty");
    std::set<int> seen;
    for (int d : doses) {
        (void)DoseFraction(d);
        if (!seen.insert(d).second) throw ConfigError(strprintf("dose %d listed twice", d));
    }
    if (data_dir.empty() && phantoms == 0) throw ConfigError("cohort.phantoms must be >= 1");
    if (!data_dir.empty() && !fs::is_directory(data_dir))
        throw ConfigError("paths.data_dir '" + data_dir + "' is not a directory");
    if (work_dir.empty()) throw ConfigError("paths.work_dir is empty");
    arch.validate();
    train.validate();
    if (train.steps == 0) throw ConfigError("train.steps must be >= 1");
    (void)plan_windows(restore.patch.rows, restore.patch.cols, restore.patch);
    (void)gaussian_window(restore.patch, restore.sigma_frac);
    if (!(segmenter.threshold_frac >= 0.0)) throw ConfigError("segment.threshold_frac must be >= 0");
}

std::uint64_t dose_seed(std::uint64_t seed, int beta) {
    return seed * 1000003ULL + static_cast<std::uint64_t>(beta);
}

namespace {

struct Prepared {
    StudyTruth truth;
    Volume t1;      // raw
    Volume t1ce;    // calibrated into the T1 window
    Volume t1_norm; // aux channel
    Volume standard; // normalized calibrated T1ce
    Mask mask;
};

[[noreturn]] void rethrow_with(const std::string &stage, const std::string &study) {
    const std::string where = study.empty() ? stage : stage + " [" + study + "]";
    try {
        throw;
    } catch (const Error &e) {
        throw Error(e.kind(), where + ": " + e.what());
    } catch (const std::exception &e) {
        throw Error(ErrorKind::Internal, where + ": " + e.what());
    }
}

void write_manifest(const ExperimentConfig &cfg, const Config &source, int jobs, std::size_t studies,
                    const std::string &status, const std::string &error) {
    const std::string path = (fs::path(cfg.work_dir) / "manifest.txt").string();
    auto os = open_out(path);
    os << "lowdose-run 1\n"
       << "status=" << status << '\n';
    if (!error.empty()) os << "error=" << error << '\n';
    os << "jobs=" << jobs << '\n'
       << "mode=" << (jobs <= 1 ? "deterministic" : "parallel") << '\n'
       << "config_hash=" << strprintf("%016llx", static_cast<unsigned long long>(source.hash())) << '\n'
       << "seed=" << cfg.seed << '\n'
       << "cohort_source=" << (cfg.data_dir.empty() ? "phantom" : cfg.data_dir) << '\n'
       << "cohort_seed=" << cfg.cohort.base_seed << '\n'
       << "studies=" << studies << '\n'
       << "doses=";
    for (std::size_t i = 0; i < cfg.doses.size(); ++i) os << (i ? "," : "") << cfg.doses[i];
    os << '\n';
    for (int beta : cfg.doses) os << "train_seed.b" << beta << '=' << dose_seed(cfg.seed, beta) << '\n';
    std::istringstream canon(source.canonical());
    for (std::string line; std::getline(canon, line);) os << "config." << line << '\n';
    finish(os, path);
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig &cfg, const Config &source, int jobs,
                                const ProgressFn &progress) {
    cfg.validate();
    fs::create_directories(cfg.work_dir);
    std::mutex log_mutex;
    auto log = [&](const std::string &msg) {
        if (!progress) return;
        std::lock_guard<std::mutex> lock(log_mutex);
        progress(msg);
    };

    std::size_t n_studies = 0;
    try {
        // Cohort: load or generate, then calibrate and normalize once.
        std::vector<StudyTruth> truths;
        std::vector<CohortStudy> plan;
        if (cfg.data_dir.empty()) {
            CohortOptions co = cfg.cohort;
            co.n_studies = cfg.phantoms;
            plan = plan_cohort(co);
            for (const auto &s : plan) truths.push_back({s.study_id, s.patient_id, s.split, 0});
        } else {
            truths = read_cohort_truth(cfg.data_dir);
        }
        n_studies = truths.size();
        log(strprintf("preparing %zu studies", n_studies));
        std::vector<std::optional<Prepared>> prepared(truths.size());
        parallel_for(truths.size(), jobs, [&](std::size_t i) {
            const std::string &id = truths[i].study_id;
            std::optional<Phantom> ph;
            try {
                if (cfg.data_dir.empty()) {
                    ph.emplace(generate_phantom(plan[i].spec));
                    truths[i].split_x = ph->truth.split_x;
                } else {
                    const fs::path sd = fs::path(cfg.data_dir) / id;
                    ph.emplace(Phantom{read_volume(sd / "t1.hdr"), read_volume(sd / "t1ce.hdr"),
                                       read_mask(sd / "mask.hdr"), {}});
                }
            } catch (...) {
                rethrow_with("load", id);
            }
            try {
                const auto map = estimate_calibration(ph->t1, ph->t1ce, cfg.calibration);
                Volume cal = apply_calibration(ph->t1ce, map);
                Volume t1n = normalize_unit_range(ph->t1).volume;
                Volume std_n = normalize_unit_range(cal).volume;
                prepared[i].emplace(Prepared{truths[i], ph->t1, std::move(cal), std::move(t1n), std::move(std_n),
                                             ph->mask});
            } catch (...) {
                rethrow_with("calibrate", id);
            }
        });

        std::vector<std::size_t> train_idx, test_idx;
        for (std::size_t i = 0; i < prepared.size(); ++i) {
            if (prepared[i]->truth.split == Split::Train) train_idx.push_back(i);
            if (prepared[i]->truth.split == Split::Test) test_idx.push_back(i);
        }
        if (train_idx.empty()) throw DataError("cohort has no training studies");
        if (test_idx.empty()) throw DataError("cohort has no test studies");

        const fs::path model_dir = fs::path(cfg.work_dir) / "models";
        if (cfg.save_models) fs::create_directories(model_dir);

        // One model per dose; doses are independent tasks.
        std::vector<std::vector<EvalRecord>> per_dose(cfg.doses.size());
        parallel_for(cfg.doses.size(), jobs, [&](std::size_t di) {
            const int beta = cfg.doses[di];
            const DoseFraction dose(beta);
            std::vector<std::optional<Volume>> low(prepared.size());
            for (std::size_t i = 0; i < prepared.size(); ++i) {
                const auto &p = *prepared[i];
                if (p.truth.split != Split::Train && p.truth.split != Split::Test) continue;
                try {
                    low[i] = normalize_unit_range(simulate_low_dose(p.t1, p.t1ce, dose)).volume;
                } catch (...) {
                    rethrow_with(strprintf("simulate b%d", beta), p.truth.study_id);
                }
            }

            std::vector<TrainingPair> pairs;
            for (std::size_t i : train_idx)
                pairs.push_back({&*low[i], &prepared[i]->standard, &prepared[i]->t1_norm});
            TrainConfig tc = cfg.train;
            tc.seed = dose_seed(cfg.seed, beta);
            log(strprintf("b%d: training on %zu studies for %zu steps", beta, pairs.size(), tc.steps));
            TrainResult tr;
            try {
                tr = train(cfg.arch, pairs, tc);
            } catch (...) {
                rethrow_with(strprintf("train b%d", beta), "");
            }
            if (cfg.save_models) {
                save_checkpoint(tr.params, tr.history, tc.seed,
                                (model_dir / strprintf("model_b%d.ckpt", beta)).string());
                write_history_csv(tr.history, (model_dir / strprintf("history_b%d.csv", beta)).string());
            }

            auto &out = per_dose[di];
            for (std::size_t i : test_idx) {
                const auto &p = *prepared[i];
                const Volume *aux = cfg.arch.in_channels == 2 ? &p.t1_norm : nullptr;
                std::optional<Volume> restored;
                try {
                    restored = restore_volume(tr.params, *low[i], aux, cfg.restore);
                } catch (...) {
                    rethrow_with(strprintf("restore b%d", beta), p.truth.study_id);
                }
                try {
                    out.push_back(evaluate_study(p.truth.study_id, beta, Arm::LowDose, *low[i], p.standard, p.mask,
                                                 p.truth.split_x, cfg.segmenter));
                    out.push_back(evaluate_study(p.truth.study_id, beta, Arm::Restored, *restored, p.standard,
                                                 p.mask, p.truth.split_x, cfg.segmenter));
                } catch (...) {
                    rethrow_with(strprintf("evaluate b%d", beta), p.truth.study_id);
                }
            }
            log(strprintf("b%d: evaluated %zu test studies", beta, test_idx.size()));
        });

        ExperimentResult res;
        for (auto &v : per_dose)
            for (auto &r : v) res.records.push_back(std::move(r));
        res.significance = significance_table(res.records);
        res.tables = report_tables(res.records, res.significance);
        const fs::path wd(cfg.work_dir);
        write_metrics_csv(res.records, (wd / "metrics.csv").string());
        write_significance_csv(res.significance, (wd / "significance.csv").string());
        write_table4_csv(res.tables, (wd / "table4.csv").string());
        write_fig4_csv(res.tables, (wd / "fig4.csv").string());
        if (cfg.svg) write_fig4_svg(res.tables, (wd / "fig4.svg").string());
        write_manifest(cfg, source, jobs, n_studies, "complete", "");
        return res;
    } catch (const std::exception &e) {
        try {
            write_manifest(cfg, source, jobs, n_studies, "incomplete", e.what());
        } catch (...) {
            // keep the original error
        }
        throw;
    }
}

} // namespace lowdose
