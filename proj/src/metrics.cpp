#include "semstereo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "json.hpp"

namespace semstereo {

DisparityScore disparity_metrics(const Raster<float>& pred,
                                 const Raster<float>& truth, double thresh) {
    if (!pred.same_size(truth))
        throw ArgumentError("disparity_metrics: size mismatch");
    if (!(thresh >= 0.0))
        throw ArgumentError("disparity_metrics: negative threshold");

    DisparityScore s;
    s.thresh = thresh;
    long bad = 0, invalid = 0;
    double err_sum = 0.0;
    for (int r = 0; r < truth.height(); ++r)
        for (int c = 0; c < truth.width(); ++c) {
            const float t = truth.at(r, c);
            if (!is_valid(t)) continue;
            ++s.truth_valid;
            const float p = pred.at(r, c);
            if (!is_valid(p)) {
                ++invalid;
                continue;
            }
            ++s.jointly_valid;
            const double e =
                std::abs(static_cast<double>(p) - static_cast<double>(t));
            err_sum += e;
            if (e > thresh) ++bad;
        }
    if (s.truth_valid == 0)
        throw DataError("disparity_metrics: no valid truth pixels");
    s.epe = s.jointly_valid > 0
                ? err_sum / static_cast<double>(s.jointly_valid)
                : std::numeric_limits<double>::infinity();
    s.d1 = static_cast<double>(bad + invalid) / s.truth_valid;
    s.invalid_fraction = static_cast<double>(invalid) / s.truth_valid;
    return s;
}

namespace {

SegmentationScore seg_impl(const uint8_t* pred, const uint8_t* truth,
                           size_t n) {
    long tp[256] = {}, fp[256] = {}, fn[256] = {};
    SegmentationScore s;
    long correct = 0;
    for (size_t i = 0; i < n; ++i) {
        const uint8_t t = truth[i];
        if (t == kClassUnlabeled) {
            ++s.ignored;
            continue;
        }
        ++s.evaluated;
        const uint8_t p = pred[i];
        if (p == t) {
            ++correct;
            ++tp[t];
        } else {
            ++fn[t];
            ++fp[p];
        }
    }
    if (s.evaluated == 0)
        throw DataError("segmentation_metrics: all truth unlabeled");

    double iou_sum = 0.0;
    int in_union = 0;
    for (uint8_t c : kScoredClasses) {
        ClassScore cs;
        cs.cls = c;
        cs.tp = tp[c];
        cs.fp = fp[c];
        cs.fn = fn[c];
        cs.truth_count = tp[c] + fn[c];
        cs.pred_count = tp[c] + fp[c];
        const long uni = tp[c] + fp[c] + fn[c];
        cs.in_union = uni > 0;
        cs.iou = uni > 0 ? static_cast<double>(tp[c]) / uni : 0.0;
        if (cs.in_union) {
            iou_sum += cs.iou;
            ++in_union;
        }
        s.per_class.push_back(cs);
    }
    s.miou = in_union > 0 ? iou_sum / in_union : 0.0;
    s.oa = static_cast<double>(correct) / s.evaluated;
    return s;
}

}  // namespace

SegmentationScore segmentation_metrics(const std::vector<uint8_t>& pred,
                                       const std::vector<uint8_t>& truth) {
    if (pred.size() != truth.size())
        throw ArgumentError("segmentation_metrics: size mismatch");
    return seg_impl(pred.data(), truth.data(), truth.size());
}

SegmentationScore segmentation_metrics(const Raster<uint8_t>& pred,
                                       const Raster<uint8_t>& truth) {
    if (!pred.same_size(truth))
        throw ArgumentError("segmentation_metrics: size mismatch");
    return seg_impl(pred.data(), truth.data(), truth.size());
}

SegmentationScore combined_miou(const std::vector<uint8_t>& pred_labels,
                                const std::vector<float>& geom_err,
                                const std::vector<uint8_t>& truth_labels,
                                GeomMode mode, GeomThreshold thresh) {
    if (pred_labels.size() != truth_labels.size() ||
        geom_err.size() != truth_labels.size())
        throw ArgumentError("combined_miou: size mismatch");
    const bool want_pixels = mode == GeomMode::Disparity2d;
    if (want_pixels != (thresh.unit == GeomUnit::Pixels))
        throw ArgumentError("combined_miou: threshold unit does not match "
                            "the geometry mode");

    long tp[256] = {}, truth_n[256] = {}, pred_n[256] = {};
    SegmentationScore s;
    long hits = 0;
    for (size_t i = 0; i < truth_labels.size(); ++i) {
        const uint8_t t = truth_labels[i];
        if (t == kClassUnlabeled) {
            ++s.ignored;
            continue;
        }
        ++s.evaluated;
        const uint8_t p = pred_labels[i];
        ++truth_n[t];
        ++pred_n[p];
        if (p != t) continue;
        const float e = geom_err[i];
        // unmeasurable truth geometry qualifies on the label alone
        if (is_valid(e) && !(e < thresh.value)) continue;
        ++tp[t];
        ++hits;
    }
    if (s.evaluated == 0)
        throw DataError("combined_miou: all truth unlabeled");

    double iou_sum = 0.0;
    int in_union = 0;
    for (uint8_t c : kScoredClasses) {
        ClassScore cs;
        cs.cls = c;
        cs.tp = tp[c];
        cs.truth_count = truth_n[c];
        cs.pred_count = pred_n[c];
        cs.fn = truth_n[c] - tp[c];
        cs.fp = pred_n[c] - tp[c];
        const long uni = truth_n[c] + pred_n[c] - tp[c];
        cs.in_union = uni > 0;
        cs.iou = uni > 0 ? static_cast<double>(tp[c]) / uni : 0.0;
        if (cs.in_union) {
            iou_sum += cs.iou;
            ++in_union;
        }
        s.per_class.push_back(cs);
    }
    s.miou = in_union > 0 ? iou_sum / in_union : 0.0;
    s.oa = static_cast<double>(hits) / s.evaluated;
    return s;
}

ZScore z_metrics(const HeightField& recon, const HeightField& truth,
                 double thresh, const Translation3D& align,
                 ZAccuracyStat stat) {
    if (!(thresh > 0.0)) throw ArgumentError("z_metrics: threshold must be positive");
    if (std::abs(recon.cell - truth.cell) > 1e-9 * truth.cell)
        throw ArgumentError("z_metrics: cell size mismatch");

    ZScore s;
    s.thresh = thresh;
    s.stat = stat;
    // recon sits at truth + align, so sample recon at the translated cell
    // and subtract tz before comparing
    const double offx = (truth.origin_x + align.tx - recon.origin_x) /
                        truth.cell;
    const double offy = (truth.origin_y + align.ty - recon.origin_y) /
                        truth.cell;
    std::vector<double> errs;
    double sq_sum = 0.0;
    for (int r = 0; r < truth.rows(); ++r) {
        const long jr = std::lround(r + offy);
        for (int c = 0; c < truth.cols(); ++c) {
            const float t = truth.z.at(r, c);
            if (!is_valid(t)) continue;
            ++s.truth_valid;
            const long jc = std::lround(c + offx);
            if (jr < 0 || jr >= recon.rows() || jc < 0 || jc >= recon.cols())
                continue;
            const float z = recon.z.at(static_cast<int>(jr),
                                       static_cast<int>(jc));
            if (!is_valid(z)) continue;
            const double e = (static_cast<double>(z) - align.tz) - t;
            if (std::abs(e) < thresh) {
                ++s.complete;
                errs.push_back(std::abs(e));
                sq_sum += e * e;
            }
        }
    }
    if (s.truth_valid == 0)
        throw DataError("z_metrics: no valid truth cells");
    s.completeness = static_cast<double>(s.complete) / s.truth_valid;
    if (s.complete > 0) {
        if (stat == ZAccuracyStat::Rms) {
            s.accuracy = std::sqrt(sq_sum / static_cast<double>(s.complete));
        } else {
            const size_t mid = errs.size() / 2;
            std::nth_element(errs.begin(), errs.begin() + mid, errs.end());
            double m = errs[mid];
            if (errs.size() % 2 == 0)
                m = 0.5 * (m + *std::max_element(errs.begin(),
                                                 errs.begin() + mid));
            s.accuracy = m;
        }
    }
    return s;
}

SegmentationScore pointcloud_metrics(const std::vector<uint8_t>& pred,
                                     const std::vector<uint8_t>& truth) {
    return segmentation_metrics(pred, truth);
}

PairPartition pair_filter(const std::vector<PairQuality>& pairs,
                          double thresh) {
    PairPartition out;
    for (const PairQuality& p : pairs) {
        if (p.epe <= thresh)
            out.kept.push_back(p);
        else
            out.rejected.push_back(p);
    }
    return out;
}

namespace {

std::string fmt_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

std::string report_kv(const MetricsReport& r) {
    std::string out;
    out += "task=" + r.task + "\n";
    out += "id=" + r.id + "\n";
    for (const auto& [k, v] : r.values) out += k + "=" + fmt_value(v) + "\n";
    for (const auto& [k, v] : r.notes) out += k + "=" + v + "\n";
    return out;
}

std::string report_json(const std::vector<MetricsReport>& rs) {
    nlohmann::json root = nlohmann::json::array();
    for (const MetricsReport& r : rs) {
        nlohmann::json j;
        j["task"] = r.task;
        j["id"] = r.id;
        j["values"] = nlohmann::json::object();
        for (const auto& [k, v] : r.values) j["values"][k] = v;
        j["notes"] = nlohmann::json::object();
        for (const auto& [k, v] : r.notes) j["notes"][k] = v;
        root.push_back(std::move(j));
    }
    return root.dump(2) + "\n";
}

std::string report_table(const std::vector<MetricsReport>& rs) {
    std::vector<std::string> cols = {"task", "id"};
    for (const MetricsReport& r : rs)
        for (const auto& [k, v] : r.values)
            if (std::find(cols.begin(), cols.end(), k) == cols.end())
                cols.push_back(k);

    std::vector<std::vector<std::string>> rows;
    rows.push_back(cols);
    for (const MetricsReport& r : rs) {
        std::vector<std::string> row;
        for (const std::string& c : cols) {
            if (c == "task")
                row.push_back(r.task);
            else if (c == "id")
                row.push_back(r.id);
            else {
                auto it = r.values.find(c);
                row.push_back(it == r.values.end() ? "-"
                                                   : fmt_value(it->second));
            }
        }
        rows.push_back(std::move(row));
    }

    std::vector<size_t> width(cols.size(), 0);
    for (const auto& row : rows)
        for (size_t i = 0; i < row.size(); ++i)
            width[i] = std::max(width[i], row[i].size());

    std::string out;
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            out += row[i];
            if (i + 1 < row.size())
                out.append(width[i] - row[i].size() + 2, ' ');
        }
        out += "\n";
    }
    return out;
}

void fill_report(MetricsReport& r, const DisparityScore& s,
                 const std::string& prefix) {
    r.values[prefix + "epe"] = s.epe;
    r.values[prefix + "d1"] = s.d1;
    r.values[prefix + "invalid_fraction"] = s.invalid_fraction;
    r.values[prefix + "truth_valid"] = static_cast<double>(s.truth_valid);
    r.values[prefix + "jointly_valid"] =
        static_cast<double>(s.jointly_valid);
    r.values[prefix + "d1_thresh"] = s.thresh;
}

void fill_report(MetricsReport& r, const SegmentationScore& s,
                 const std::string& prefix) {
    r.values[prefix + "miou"] = s.miou;
    r.values[prefix + "oa"] = s.oa;
    r.values[prefix + "evaluated"] = static_cast<double>(s.evaluated);
    r.values[prefix + "ignored"] = static_cast<double>(s.ignored);
    for (const ClassScore& c : s.per_class)
        if (c.in_union)
            r.values[prefix + "iou_" + class_name(c.cls)] = c.iou;
}

void fill_report(MetricsReport& r, const ZScore& s,
                 const std::string& prefix) {
    r.values[prefix + "z_completeness"] = s.completeness;
    r.values[prefix + (s.stat == ZAccuracyStat::Rms ? "z_accuracy_rms"
                                                    : "z_accuracy_median")] =
        s.accuracy;
    r.values[prefix + "z_thresh"] = s.thresh;
    r.values[prefix + "z_truth_valid"] = static_cast<double>(s.truth_valid);
    r.values[prefix + "z_complete"] = static_cast<double>(s.complete);
}

}  // namespace semstereo
