#include "semstereo/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "semstereo/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace semstereo {

namespace {

std::string strf(const char* fmt, double a, double b) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), fmt, a, b);
    return buf;
}

template <typename T>
void opt_get(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

void finite_or_skip(json& j, const char* key, double v) {
    if (std::isfinite(v)) j[key] = v;
}

void require_positive(double v, const char* what) {
    if (!(v > 0.0))
        throw ArgumentError(std::string(what) + " must be positive");
}

// months since year zero, from "YYYY-MM"
int month_index(const std::string& date) {
    int y = 0, m = 0;
    if (std::sscanf(date.c_str(), "%d-%d", &y, &m) != 2 || m < 1 || m > 12)
        throw DataError("bad date (want YYYY-MM): " + date);
    return y * 12 + (m - 1);
}

// the volume an RPC claims validity over
WorldBox rpc_box(const RpcCamera& c) {
    return WorldBox{c.x_off - c.x_scale, c.x_off + c.x_scale,
                    c.y_off - c.y_scale, c.y_off + c.y_scale,
                    c.h_off - c.h_scale, c.h_off + c.h_scale};
}

WorldBox intersect_boxes(const WorldBox& a, const WorldBox& b) {
    WorldBox r{std::max(a.x_min, b.x_min), std::min(a.x_max, b.x_max),
               std::max(a.y_min, b.y_min), std::min(a.y_max, b.y_max),
               std::max(a.z_min, b.z_min), std::min(a.z_max, b.z_max)};
    if (r.x_min >= r.x_max || r.y_min >= r.y_max || r.z_min >= r.z_max)
        throw DataError("camera validity volumes do not overlap");
    return r;
}

GeoHeader class_header() {
    GeoHeader h;
    for (uint8_t c : {kClassGround, kClassTree, kClassBuilding, kClassWater,
                      kClassUnlabeled})
        h.classes[c] = class_name(c);
    return h;
}

std::vector<uint8_t> to_vec(const Raster<uint8_t>& r) {
    return std::vector<uint8_t>(r.data(), r.data() + r.size());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

std::string hex16(uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(v));
    return buf;
}

// disparity extremes over the box corners, padded, for pairs without truth
std::pair<int, int> disparity_range_from_box(const RpcCamera& lc,
                                             const RpcCamera& rc,
                                             const WorldBox& box,
                                             const Homography& h_left,
                                             const Homography& h_right) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double x : {box.x_min, box.x_mid(), box.x_max})
        for (double y : {box.y_min, box.y_mid(), box.y_max})
            for (double z : {box.z_min, box.z_max}) {
                const WorldPoint w{x, y, z};
                const ImagePoint il = h_left.apply(rpc_project(lc, w));
                const ImagePoint ir = h_right.apply(rpc_project(rc, w));
                const double d = ir.samp - il.samp;
                lo = std::min(lo, d);
                hi = std::max(hi, d);
            }
    if (!std::isfinite(lo) || !std::isfinite(hi))
        throw NumericError("disparity range over the volume is unbounded");
    return {static_cast<int>(std::floor(lo)) - 8,
            static_cast<int>(std::ceil(hi)) + 8};
}

// Match one rectified pair per the config: SGM (prior on request), WLS when
// enabled, then pixels with no left intensity forced invalid so smoothing
// never extrapolates beyond the image footprint.
DisparityMap match_one(const RectifiedPair& p, const RunConfig& cfg,
                       bool with_prior,
                       const std::optional<std::pair<int, int>>& range = {}) {
    const bool have_classes =
        !p.truth_class_left.empty() && !p.truth_class_right.empty();
    const bool prior_on = with_prior && cfg.use_prior && have_classes;
    DisparityMap d;
    if (!range) {
        d = sgm_match(p, cfg.sgm, prior_on ? &cfg.prior : nullptr);
    } else {
        SemanticPriorInput pin;
        pin.params = cfg.prior;
        pin.left = p.truth_class_left;
        pin.right = p.truth_class_right;
        d = sgm_match(p.left_image, p.right_image, range->first,
                      range->second, cfg.sgm, prior_on ? &pin : nullptr);
    }
    if (cfg.use_wls)
        d = wls_filter(d, p.left_image, cfg.wls);
    for (int r = 0; r < d.height(); ++r)
        for (int c = 0; c < d.width(); ++c)
            if (!is_valid(p.left_image.at(r, c)))
                d.values.at(r, c) = kInvalid;
    return d;
}

std::vector<fs::path> dataset_inputs(const Dataset& ds) {
    std::vector<fs::path> in;
    for (const TileBundle& t : ds.tiles)
        for (const fs::path& p :
             {t.image_path(), t.rpc_path(), t.truth_x_path(),
              t.truth_y_path(), t.truth_z_path(), t.classes_path(),
              t.ndsm_path(), t.pred_classes_path(), t.meta_path()})
            if (fs::exists(p)) in.push_back(p);
    if (ds.truth_dsm_z) in.push_back(*ds.truth_dsm_z);
    if (ds.truth_dsm_class) in.push_back(*ds.truth_dsm_class);
    return in;
}

// geometric error per truth-labeled position: NaN when the truth geometry is
// unmeasurable, +inf when the prediction is missing there, |diff| otherwise
std::vector<float> disparity_error_field(const DisparityMap& pred,
                                         const DisparityMap& truth) {
    std::vector<float> err(truth.values.size(), kInvalid);
    for (int r = 0; r < truth.height(); ++r)
        for (int c = 0; c < truth.width(); ++c) {
            const float tv = truth.values.at(r, c);
            if (!is_valid(tv)) continue;
            const float pv = pred.values.at(r, c);
            err[static_cast<size_t>(r) * truth.width() + c] =
                is_valid(pv) ? std::abs(pv - tv)
                             : std::numeric_limits<float>::infinity();
        }
    return err;
}

void score_disparity_block(MetricsReport& r, const PairArtifacts& a,
                           const DisparityMap& disp, const RunConfig& cfg,
                           const std::string& prefix) {
    const DisparityScore ds = disparity_metrics(
        disp.values, a.pair.truth_disparity.values, cfg.d1_thresh_px);
    fill_report(r, ds, prefix);
    if (a.pred_labels.empty() || a.pair.truth_class_left.empty()) return;
    const std::vector<float> err =
        disparity_error_field(disp, a.pair.truth_disparity);
    const SegmentationScore cs = combined_miou(
        to_vec(a.pred_labels), err, to_vec(a.pair.truth_class_left),
        GeomMode::Disparity2d,
        GeomThreshold{cfg.combined_2d_thresh_px, GeomUnit::Pixels});
    fill_report(r, cs, prefix + "c2d_");
}

MetricsReport score_pair(const PairArtifacts& a, const RunConfig& cfg,
                         const DisparityMap* noprior) {
    MetricsReport r;
    r.task = "pairwise";
    r.id = a.pair_id;
    r.notes["left_date"] = a.pair.left_date;
    r.notes["right_date"] = a.pair.right_date;
    if (!a.has_truth) {
        r.notes["status"] = "no truth; scoring skipped";
        return r;
    }
    r.values["y_parallax_rms"] = a.pair.y_parallax_rms;
    r.values["d_min"] = a.disparity.d_min;
    r.values["d_max"] = a.disparity.d_max;
    score_disparity_block(r, a, a.disparity, cfg, "");
    if (!a.pred_labels.empty() && !a.pair.truth_class_left.empty()) {
        const SegmentationScore ss =
            segmentation_metrics(a.pred_labels, a.pair.truth_class_left);
        fill_report(r, ss, "seg_");
    }
    if (noprior) score_disparity_block(r, a, *noprior, cfg, "noprior_");
    return r;
}

MetricsReport aggregate_row(const std::vector<MetricsReport>& rows) {
    MetricsReport agg;
    agg.task = rows.front().task;
    agg.id = "mean";
    std::vector<const MetricsReport*> scored;
    for (const MetricsReport& r : rows)
        if (!r.values.empty()) scored.push_back(&r);
    if (scored.empty()) return agg;
    for (const auto& [key, v0] : scored.front()->values) {
        double sum = 0.0;
        bool everywhere = true;
        for (const MetricsReport* r : scored) {
            const auto it = r->values.find(key);
            if (it == r->values.end()) {
                everywhere = false;
                break;
            }
            sum += it->second;
        }
        if (everywhere) agg.values[key] = sum / scored.size();
    }
    agg.values["pairs_scored"] = static_cast<double>(scored.size());
    return agg;
}

}  // namespace

RunConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ArgumentError(std::string("config: ") + e.what());
    }
    RunConfig c;
    opt_get(j, "task", c.task);
    opt_get(j, "seed", c.seed);
    opt_get(j, "out_dir", c.out_dir);
    if (j.contains("sgm")) {
        const json& s = j.at("sgm");
        opt_get(s, "p1", c.sgm.p1);
        opt_get(s, "p2", c.sgm.p2);
        opt_get(s, "p2_gradient_scale", c.sgm.p2_gradient_scale);
        opt_get(s, "paths", c.sgm.paths);
        opt_get(s, "lr_max_diff", c.sgm.lr_max_diff);
        opt_get(s, "census_window", c.sgm.census_window);
        opt_get(s, "subpixel", c.sgm.subpixel);
    }
    opt_get(j, "use_prior", c.use_prior);
    if (j.contains("prior")) {
        const json& p = j.at("prior");
        opt_get(p, "beta_same", c.prior.beta_same);
        opt_get(p, "beta_diff", c.prior.beta_diff);
        opt_get(p, "gamma", c.prior.gamma);
        opt_get(p, "stable_classes", c.prior.stable_classes);
    }
    opt_get(j, "use_wls", c.use_wls);
    if (j.contains("wls")) {
        const json& w = j.at("wls");
        opt_get(w, "lambda", c.wls.lambda);
        opt_get(w, "sigma_color", c.wls.sigma_color);
        opt_get(w, "iterations", c.wls.iterations);
    }
    if (j.contains("selection")) {
        const json& s = j.at("selection");
        opt_get(s, "max_month_diff", c.selection.max_month_diff);
        opt_get(s, "min_angle_deg", c.selection.min_angle_deg);
        opt_get(s, "max_angle_deg", c.selection.max_angle_deg);
        opt_get(s, "max_epe", c.selection.max_epe);
        opt_get(s, "use_epe_filter", c.selection.use_epe_filter);
    }
    if (j.contains("fuse"))
        opt_get(j.at("fuse"), "min_valid_fraction", c.fuse.min_valid_fraction);
    if (j.contains("grid")) {
        const json& g = j.at("grid");
        opt_get(g, "cell", c.grid.cell);
        opt_get(g, "x_min", c.grid.x_min);
        opt_get(g, "x_max", c.grid.x_max);
        opt_get(g, "y_min", c.grid.y_min);
        opt_get(g, "y_max", c.grid.y_max);
    }
    opt_get(j, "d1_thresh_px", c.d1_thresh_px);
    opt_get(j, "combined_2d_thresh_px", c.combined_2d_thresh_px);
    opt_get(j, "combined_3d_thresh_m", c.combined_3d_thresh_m);
    opt_get(j, "z_thresh_m", c.z_thresh_m);
    opt_get(j, "align_radius_cells", c.align_radius_cells);
    opt_get(j, "score_prior_off_too", c.score_prior_off_too);

    if (c.task != "pairwise" && c.task != "multiview" && c.task != "pointcloud")
        throw ArgumentError("config: unknown task '" + c.task + "'");
    require_positive(c.d1_thresh_px, "d1_thresh_px");
    require_positive(c.combined_2d_thresh_px, "combined_2d_thresh_px");
    require_positive(c.combined_3d_thresh_m, "combined_3d_thresh_m");
    require_positive(c.z_thresh_m, "z_thresh_m");
    require_positive(c.selection.max_epe, "selection.max_epe");
    require_positive(c.grid.cell, "grid.cell");
    if (c.align_radius_cells < 0)
        throw ArgumentError("align_radius_cells must be nonnegative");
    return c;
}

std::string config_to_json(const RunConfig& c) {
    json j;
    j["task"] = c.task;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["sgm"] = {{"p1", c.sgm.p1},
                {"p2", c.sgm.p2},
                {"p2_gradient_scale", c.sgm.p2_gradient_scale},
                {"paths", c.sgm.paths},
                {"lr_max_diff", c.sgm.lr_max_diff},
                {"census_window", c.sgm.census_window},
                {"subpixel", c.sgm.subpixel}};
    j["use_prior"] = c.use_prior;
    j["prior"] = {{"beta_same", c.prior.beta_same},
                  {"beta_diff", c.prior.beta_diff},
                  {"gamma", c.prior.gamma},
                  {"stable_classes", c.prior.stable_classes}};
    j["use_wls"] = c.use_wls;
    j["wls"] = {{"lambda", c.wls.lambda},
                {"sigma_color", c.wls.sigma_color},
                {"iterations", c.wls.iterations}};
    j["selection"] = {{"max_month_diff", c.selection.max_month_diff},
                      {"min_angle_deg", c.selection.min_angle_deg},
                      {"max_angle_deg", c.selection.max_angle_deg},
                      {"max_epe", c.selection.max_epe},
                      {"use_epe_filter", c.selection.use_epe_filter}};
    j["fuse"] = {{"min_valid_fraction", c.fuse.min_valid_fraction}};
    json g;
    g["cell"] = c.grid.cell;
    finite_or_skip(g, "x_min", c.grid.x_min);
    finite_or_skip(g, "x_max", c.grid.x_max);
    finite_or_skip(g, "y_min", c.grid.y_min);
    finite_or_skip(g, "y_max", c.grid.y_max);
    j["grid"] = g;
    j["d1_thresh_px"] = c.d1_thresh_px;
    j["combined_2d_thresh_px"] = c.combined_2d_thresh_px;
    j["combined_3d_thresh_m"] = c.combined_3d_thresh_m;
    j["z_thresh_m"] = c.z_thresh_m;
    j["align_radius_cells"] = c.align_radius_cells;
    j["score_prior_off_too"] = c.score_prior_off_too;
    return j.dump(2) + "\n";
}

Dataset load_dataset(const fs::path& root) {
    if (!fs::is_directory(root))
        throw DataError("dataset root not found: " + root.string());
    Dataset ds;
    ds.root = root;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const fs::path meta = entry.path() / "meta.json";
        if (!fs::exists(meta)) continue;
        TileBundle t;
        t.dir = entry.path();
        std::ifstream in(meta);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw DataError(meta.string() + ": " + e.what());
        }
        t.id = j.value("id", entry.path().filename().string());
        t.date = j.value("date", std::string("2000-01"));
        t.gsd = j.value("gsd", 0.5);
        if (!fs::exists(t.image_path()) || !fs::exists(t.rpc_path()))
            throw DataError("tile " + t.id + ": missing image or camera");
        t.has_truth = fs::exists(t.truth_x_path()) &&
                      fs::exists(t.truth_y_path()) &&
                      fs::exists(t.truth_z_path());
        t.has_pred = fs::exists(t.pred_classes_path());
        ds.tiles.push_back(std::move(t));
    }
    std::sort(ds.tiles.begin(), ds.tiles.end(),
              [](const TileBundle& a, const TileBundle& b) {
                  return a.id < b.id;
              });
    for (size_t i = 1; i < ds.tiles.size(); ++i)
        if (ds.tiles[i].id == ds.tiles[i - 1].id)
            throw DataError("duplicate tile id: " + ds.tiles[i].id);
    if (fs::exists(root / "truth_dsm_z.rast"))
        ds.truth_dsm_z = root / "truth_dsm_z.rast";
    if (fs::exists(root / "truth_dsm_class.rast"))
        ds.truth_dsm_class = root / "truth_dsm_class.rast";
    return ds;
}

std::vector<PairChoice> select_pairs(const Dataset& ds, const RunConfig& cfg) {
    const PairSelection& sel = cfg.selection;
    std::vector<RpcCamera> cams(ds.tiles.size());
    for (size_t i = 0; i < ds.tiles.size(); ++i)
        cams[i] = read_rpc(ds.tiles[i].rpc_path());

    std::vector<PairChoice> out;
    struct EpeJob {
        size_t row;
        size_t li, ri;
    };
    std::vector<EpeJob> jobs;
    for (size_t i = 0; i < ds.tiles.size(); ++i)
        for (size_t k = i + 1; k < ds.tiles.size(); ++k) {
            PairChoice c;
            c.left_id = ds.tiles[i].id;
            c.right_id = ds.tiles[k].id;
            c.month_diff = std::abs(month_index(ds.tiles[i].date) -
                                    month_index(ds.tiles[k].date));
            const WorldBox box =
                intersect_boxes(rpc_box(cams[i]), rpc_box(cams[k]));
            // probe heights stay inside the validity volume
            const double delta_h = 0.25 * (box.z_max - box.z_min);
            c.angle_deg = intersection_angle_deg(
                cams[i], cams[k],
                WorldPoint{box.x_mid(), box.y_mid(), box.z_mid()}, delta_h);
            if (c.month_diff > sel.max_month_diff) {
                c.reason = strf("month difference %.0f exceeds %.0f",
                                c.month_diff, sel.max_month_diff);
            } else if (c.angle_deg < sel.min_angle_deg) {
                c.reason = strf("intersection angle %.2f below minimum %.2f",
                                c.angle_deg, sel.min_angle_deg);
            } else if (c.angle_deg > sel.max_angle_deg) {
                c.reason = strf("intersection angle %.2f above maximum %.2f",
                                c.angle_deg, sel.max_angle_deg);
            } else if (sel.use_epe_filter && ds.tiles[i].has_truth) {
                jobs.push_back({out.size(), i, k});
            } else {
                c.kept = true;
            }
            out.push_back(std::move(c));
        }

    if (!jobs.empty()) {
        // screening stage: plain SGM without prior or smoothing, so the
        // decision reflects raw pair difficulty
        std::vector<PairQuality> quals;
        for (const EpeJob& job : jobs) {
            const RectifiedPair p =
                build_rectified_pair(ds.tiles[job.li], ds.tiles[job.ri]);
            const DisparityMap d = sgm_match(p, cfg.sgm, nullptr);
            quals.push_back({out[job.row].left_id + "__" + out[job.row].right_id,
                             match_quality(d, p.truth_disparity).epe});
        }
        const PairPartition part = pair_filter(quals, sel.max_epe);
        std::map<std::string, double> kept_epe, rej_epe;
        for (const PairQuality& q : part.kept) kept_epe[q.id] = q.epe;
        for (const PairQuality& q : part.rejected) rej_epe[q.id] = q.epe;
        for (const EpeJob& job : jobs) {
            PairChoice& c = out[job.row];
            const std::string id = c.left_id + "__" + c.right_id;
            if (const auto it = kept_epe.find(id); it != kept_epe.end()) {
                c.kept = true;
                c.epe = it->second;
            } else {
                c.epe = rej_epe.at(id);
                c.reason =
                    strf("epe %.2f above threshold %.2f", c.epe, sel.max_epe);
            }
        }
    }
    return out;
}

RectifiedPair build_rectified_pair(const TileBundle& lt,
                                   const TileBundle& rt) {
    const FloatRasterFile li = read_raster_f32(lt.image_path());
    const FloatRasterFile ri = read_raster_f32(rt.image_path());
    const RpcCamera lc = read_rpc(lt.rpc_path());
    const RpcCamera rc = read_rpc(rt.rpc_path());
    const WorldBox box = intersect_boxes(rpc_box(lc), rpc_box(rc));
    const RectifyResult rr = rectify_pair(lc, rc, box, li.data.width(),
                                          li.data.height());
    RectifiedPair p;
    p.left_image = warp_image(li.data, rr.h_left, rr.out_width, rr.out_height);
    p.right_image =
        warp_image(ri.data, rr.h_right, rr.out_width, rr.out_height);
    p.h_left = rr.h_left;
    p.h_right = rr.h_right;
    p.y_parallax_rms = rr.y_parallax_rms;
    p.y_parallax_max = rr.y_parallax_max;
    p.left_date = lt.date;
    p.right_date = rt.date;
    p.left_camera = lt.rpc_path().string();
    p.right_camera = rt.rpc_path().string();
    if (lt.has_truth) {
        const FloatRasterFile tx = read_raster_f32(lt.truth_x_path());
        const FloatRasterFile ty = read_raster_f32(lt.truth_y_path());
        const FloatRasterFile tz = read_raster_f32(lt.truth_z_path());
        const TruthDisparity td = make_truth_disparity(
            tx.data, ty.data, tz.data, lc, rc, rr.h_left, rr.h_right,
            rr.out_width, rr.out_height);
        p.truth_disparity = td.disparity;
    }
    if (fs::exists(lt.classes_path()))
        p.truth_class_left =
            warp_labels(read_raster_u8(lt.classes_path()).data, rr.h_left,
                        rr.out_width, rr.out_height);
    if (fs::exists(rt.classes_path()))
        p.truth_class_right =
            warp_labels(read_raster_u8(rt.classes_path()).data, rr.h_right,
                        rr.out_width, rr.out_height);
    return p;
}

PairArtifacts run_pair(const Dataset&, const TileBundle& lt,
                       const TileBundle& rt, const RunConfig& cfg,
                       const fs::path& out_dir) {
    PairArtifacts a;
    a.pair_id = lt.id + "__" + rt.id;
    a.dir = out_dir / "pairs" / a.pair_id;
    fs::create_directories(a.dir);
    a.pair = build_rectified_pair(lt, rt);
    a.has_truth = !a.pair.truth_disparity.values.empty();
    a.rectify =
        RectifyResult{a.pair.h_left,         a.pair.h_right,
                      a.pair.y_parallax_rms, a.pair.y_parallax_max,
                      a.pair.left_image.width(), a.pair.left_image.height()};

    if (a.has_truth) {
        a.disparity = match_one(a.pair, cfg, true);
    } else {
        const RpcCamera lc = read_rpc(lt.rpc_path());
        const RpcCamera rc = read_rpc(rt.rpc_path());
        const WorldBox box = intersect_boxes(rpc_box(lc), rpc_box(rc));
        const auto range = disparity_range_from_box(lc, rc, box, a.pair.h_left,
                                                    a.pair.h_right);
        a.disparity = match_one(a.pair, cfg, true, range);
    }

    if (lt.has_pred)
        a.pred_labels =
            warp_labels(read_raster_u8(lt.pred_classes_path()).data,
                        a.pair.h_left, a.pair.left_image.width(),
                        a.pair.left_image.height());
    else
        a.pred_labels = a.pair.truth_class_left;

    write_raster(a.dir / "left.rast", a.pair.left_image);
    write_raster(a.dir / "right.rast", a.pair.right_image);
    write_homography(a.dir / "h_left.txt", a.pair.h_left);
    write_homography(a.dir / "h_right.txt", a.pair.h_right);
    write_raster(a.dir / "disparity.rast", a.disparity.values);
    if (!a.pred_labels.empty())
        write_raster(a.dir / "pred_classes.rast", a.pred_labels,
                     class_header());
    if (a.has_truth) {
        write_raster(a.dir / "truth_disparity.rast",
                     a.pair.truth_disparity.values);
        if (!a.pair.truth_class_left.empty())
            write_raster(a.dir / "truth_classes_left.rast",
                         a.pair.truth_class_left, class_header());
        if (!a.pair.truth_class_right.empty())
            write_raster(a.dir / "truth_classes_right.rast",
                         a.pair.truth_class_right, class_header());
    }
    json meta;
    meta["pair"] = a.pair_id;
    meta["left_date"] = a.pair.left_date;
    meta["right_date"] = a.pair.right_date;
    meta["d_min"] = a.disparity.d_min;
    meta["d_max"] = a.disparity.d_max;
    meta["y_parallax_rms"] = a.pair.y_parallax_rms;
    meta["y_parallax_max"] = a.pair.y_parallax_max;
    write_text(a.dir / "meta.json", meta.dump(2) + "\n");
    return a;
}

std::vector<MetricsReport> run_pairwise_benchmark(const Dataset& ds,
                                                  const RunConfig& cfg) {
    if (cfg.out_dir.empty())
        throw ArgumentError("pairwise benchmark: out_dir is required");
    const fs::path out = cfg.out_dir;
    fs::create_directories(out);
    const std::vector<PairChoice> choices = select_pairs(ds, cfg);
    std::map<std::string, const TileBundle*> by_id;
    for (const TileBundle& t : ds.tiles) by_id[t.id] = &t;

    std::vector<MetricsReport> reports;
    for (const PairChoice& pc : choices) {
        if (!pc.kept) continue;
        const TileBundle& lt = *by_id.at(pc.left_id);
        const TileBundle& rt = *by_id.at(pc.right_id);
        const PairArtifacts a = run_pair(ds, lt, rt, cfg, out);
        std::optional<DisparityMap> noprior;
        if (cfg.score_prior_off_too && a.has_truth) {
            noprior = match_one(a.pair, cfg, false);
            write_raster(a.dir / "disparity_noprior.rast", noprior->values);
        }
        MetricsReport r = score_pair(a, cfg, noprior ? &*noprior : nullptr);
        r.values["angle_deg"] = pc.angle_deg;
        r.values["month_diff"] = pc.month_diff;
        reports.push_back(std::move(r));
    }
    if (!reports.empty()) reports.push_back(aggregate_row(reports));

    std::ostringstream sel;
    for (const PairChoice& pc : choices)
        sel << pc.left_id << "__" << pc.right_id << "  "
            << (pc.kept ? "kept" : "rejected: " + pc.reason) << "\n";
    write_text(out / "pair_selection.txt", sel.str());
    write_text(out / "pairwise_report.json", report_json(reports));
    write_text(out / "pairwise_report.txt", report_table(reports));
    write_manifest(out, cfg, dataset_inputs(ds));
    return reports;
}

MetricsReport score_fused_surface(const HeightField& fused,
                                  const HeightField& truth,
                                  const RunConfig& cfg) {
    MetricsReport r;
    r.task = "multiview";
    r.id = "fused";
    Translation3D t;
    if (cfg.align_radius_cells > 0)
        t = estimate_3d_translation(truth, fused, cfg.align_radius_cells);
    r.values["align_tx"] = t.tx;
    r.values["align_ty"] = t.ty;
    r.values["align_tz"] = t.tz;
    r.values["align_inlier_fraction"] = t.inlier_fraction;
    const ZScore z =
        z_metrics(fused, truth, cfg.z_thresh_m, t, ZAccuracyStat::Rms);
    fill_report(r, z);
    if (!fused.classes.empty() && !truth.classes.empty()) {
        const double offx = (truth.origin_x + t.tx - fused.origin_x) / truth.cell;
        const double offy = (truth.origin_y + t.ty - fused.origin_y) / truth.cell;
        std::vector<uint8_t> pred(truth.z.size(), kClassUnlabeled);
        std::vector<float> err(truth.z.size(), kInvalid);
        for (int row = 0; row < truth.rows(); ++row)
            for (int col = 0; col < truth.cols(); ++col) {
                const size_t i =
                    static_cast<size_t>(row) * truth.cols() + col;
                const int jr = static_cast<int>(std::lround(row + offy));
                const int jc = static_cast<int>(std::lround(col + offx));
                const bool in = fused.z.inside(jr, jc);
                if (in) pred[i] = fused.classes.at(jr, jc);
                const float tz = truth.z.at(row, col);
                if (!is_valid(tz)) continue;  // label-only position
                const float rz = in ? fused.z.at(jr, jc) : kInvalid;
                err[i] = is_valid(rz)
                             ? std::abs(static_cast<float>(rz - t.tz) - tz)
                             : std::numeric_limits<float>::infinity();
            }
        const SegmentationScore cs = combined_miou(
            pred, err, to_vec(truth.classes), GeomMode::Height3d,
            GeomThreshold{cfg.combined_3d_thresh_m, GeomUnit::Meters});
        fill_report(r, cs, "c3d_");
    }
    return r;
}

MetricsReport run_multiview_benchmark(const Dataset& ds,
                                      const RunConfig& cfg) {
    if (cfg.out_dir.empty())
        throw ArgumentError("multiview benchmark: out_dir is required");
    const fs::path out = cfg.out_dir;
    fs::create_directories(out / "fields");
    const std::vector<PairChoice> choices = select_pairs(ds, cfg);
    std::vector<const PairChoice*> kept;
    for (const PairChoice& pc : choices)
        if (pc.kept) kept.push_back(&pc);
    if (kept.empty())
        throw DataError("multiview benchmark: no pairs survive selection");

    std::map<std::string, const TileBundle*> by_id;
    for (const TileBundle& t : ds.tiles) by_id[t.id] = &t;
    std::map<std::string, ProjectiveCamera> pcams;
    for (const PairChoice* pc : kept)
        for (const std::string& id : {pc->left_id, pc->right_id})
            if (!pcams.count(id)) {
                const RpcCamera rpc = read_rpc(by_id.at(id)->rpc_path());
                pcams[id] = fit_projection_matrix(rpc, rpc_box(rpc),
                                                  GridSpec{6, 6, 4});
            }

    HeightField truth_dsm;
    const bool have_truth = ds.truth_dsm_z.has_value();
    if (have_truth)
        truth_dsm = read_height_field(
            *ds.truth_dsm_z, ds.truth_dsm_class.value_or(fs::path{}));

    GridOptions grid = cfg.grid;
    if (have_truth) {
        grid.cell = truth_dsm.cell;
        grid.x_min = truth_dsm.origin_x;
        grid.x_max = truth_dsm.origin_x + (truth_dsm.cols() - 1) * truth_dsm.cell;
        grid.y_min = truth_dsm.origin_y;
        grid.y_max = truth_dsm.origin_y + (truth_dsm.rows() - 1) * truth_dsm.cell;
    } else if (!std::isfinite(grid.x_min) || !std::isfinite(grid.x_max) ||
               !std::isfinite(grid.y_min) || !std::isfinite(grid.y_max)) {
        const WorldBox box = rpc_box(read_rpc(ds.tiles.front().rpc_path()));
        grid.x_min = box.x_min;
        grid.x_max = box.x_max;
        grid.y_min = box.y_min;
        grid.y_max = box.y_max;
    }

    std::vector<HeightField> fields;
    std::vector<std::string> pair_ids;
    for (const PairChoice* pc : kept) {
        const PairArtifacts a = run_pair(ds, *by_id.at(pc->left_id),
                                         *by_id.at(pc->right_id), cfg, out);
        const PointCloud cloud = disparity_to_points(
            a.disparity, a.pred_labels, a.pair.h_left, a.pair.h_right,
            pcams.at(pc->left_id), pcams.at(pc->right_id));
        HeightField f = rasterize_points(cloud, grid);
        if (!fields.empty() && !f.same_grid(fields.front()))
            throw DataError("fusion grid mismatch for pair " + a.pair_id);
        write_height_field(out / "fields" / (a.pair_id + "_z.rast"),
                           out / "fields" / (a.pair_id + "_class.rast"), f);
        fields.push_back(std::move(f));
        pair_ids.push_back(a.pair_id);
    }

    const HeightField fused = fields.size() == 1
                                  ? fields.front()
                                  : fuse_height_fields(fields, cfg.fuse);
    write_height_field(out / "fused_z.rast", out / "fused_class.rast", fused);

    MetricsReport r;
    r.task = "multiview";
    r.id = ds.root.filename().string();
    if (have_truth) {
        const MetricsReport s = score_fused_surface(fused, truth_dsm, cfg);
        r.values = s.values;
        r.notes = s.notes;
    } else {
        r.notes["status"] = "no truth DSM; scoring skipped";
    }
    r.values["pairs_fused"] = static_cast<double>(fields.size());
    if (fields.size() == 1) r.notes["fusion"] = "no fusion benefit";
    std::ostringstream ids;
    for (size_t i = 0; i < pair_ids.size(); ++i)
        ids << (i ? "," : "") << pair_ids[i];
    r.notes["pairs"] = ids.str();

    const std::vector<MetricsReport> rows{r};
    write_text(out / "multiview_report.json", report_json(rows));
    write_text(out / "multiview_report.txt", report_table(rows));
    write_manifest(out, cfg, dataset_inputs(ds));
    return r;
}

void write_manifest(const fs::path& out_dir, const RunConfig& cfg,
                    const std::vector<fs::path>& inputs) {
    fs::create_directories(out_dir);
    const std::string cj = config_to_json(cfg);
    write_text(out_dir / "config.json", cj);
    std::vector<fs::path> sorted = inputs;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::ostringstream os;
    os << "semstereo 1.0.0\n";
    os << "config " << hex16(fnv1a64(cj.data(), cj.size())) << "\n";
    for (const fs::path& p : sorted)
        os << "input " << hex16(fnv1a64_file(p)) << " " << p.generic_string()
           << "\n";
    write_text(out_dir / "manifest.txt", os.str());
}

Dataset make_synth_dataset(const fs::path& root,
                           const SynthDatasetOptions& opt) {
    if (opt.views < 1) throw ArgumentError("synth dataset: views must be >= 1");
    if (opt.size < 16) throw ArgumentError("synth dataset: size too small");
    fs::create_directories(root);

    const Scene scene = gen_scene(opt.seed, opt.size, opt.targets, opt.gsd);
    double z_lo = std::numeric_limits<double>::infinity(), z_hi = -z_lo;
    for (int r = 0; r < scene.dsm.rows(); ++r)
        for (int c = 0; c < scene.dsm.cols(); ++c) {
            const float z = scene.dsm.z.at(r, c);
            if (!is_valid(z)) continue;
            z_lo = std::min(z_lo, static_cast<double>(z));
            z_hi = std::max(z_hi, static_cast<double>(z));
        }
    const WorldBox box{0.0, opt.size * opt.gsd, 0.0, opt.size * opt.gsd,
                       z_lo - 1.0, z_hi + 1.0};

    HeightField dsm_truth = scene.dsm;
    dsm_truth.classes = scene.classes;
    // Water keeps its label but no reference height, matching the per-view
    // truth rasters; reconstruction over water is never scored.
    for (int r = 0; r < dsm_truth.rows(); ++r)
        for (int c = 0; c < dsm_truth.cols(); ++c)
            if (dsm_truth.classes.at(r, c) == kClassWater)
                dsm_truth.z.at(r, c) = kInvalid;
    write_height_field(root / "truth_dsm_z.rast",
                       root / "truth_dsm_class.rast", dsm_truth);

    for (int v = 0; v < opt.views; ++v) {
        char name[32];
        std::snprintf(name, sizeof(name), "view_%02d", v);
        const fs::path dir = root / name;
        fs::create_directories(dir);

        const double off =
            opt.views == 1
                ? opt.max_off_nadir_deg
                : 4.0 + (opt.max_off_nadir_deg - 4.0) * v / (opt.views - 1);
        const double az = (v % 2) ? 180.0 : 0.0;
        const SynthView sv = make_view_camera(box, opt.gsd, off, az);
        const RpcNormalization norm =
            normalization_for(box, sv.width, sv.height);
        const RpcCamera rpc = synth_rpc_from_projective(
            sv.cam, norm, opt.cubic_jitter, opt.seed + 1000 + v);

        SeasonParams season = opt.seasons.empty()
                                  ? SeasonParams{}
                                  : opt.seasons[v % opt.seasons.size()];
        // repeated seasons must not share a noise pattern across views
        season.noise_seed += 0x9e3779b9ull * (v + 1);
        const Scene view_scene = apply_season_geometry(scene, season);

        const Raster<float> image =
            render_view(view_scene, rpc, season, sv.width, sv.height);
        const ViewTruth truth =
            render_truth(view_scene, rpc, sv.width, sv.height, season);

        Raster<float> ndsm(sv.width, sv.height, kInvalid);
        for (int r = 0; r < sv.height; ++r)
            for (int c = 0; c < sv.width; ++c) {
                const float z = truth.z.at(r, c);
                if (!is_valid(z)) continue;
                const double gx =
                    (truth.x.at(r, c) - scene.dtm.origin_x) / scene.dtm.cell;
                const double gy =
                    (truth.y.at(r, c) - scene.dtm.origin_y) / scene.dtm.cell;
                const float ground = sample_bilinear(scene.dtm.z, gy, gx);
                if (is_valid(ground)) ndsm.at(r, c) = z - ground;
            }

        write_raster(dir / "image.rast", image);
        write_rpc(dir / "camera.rpc", rpc);
        write_raster(dir / "truth_x.rast", truth.x);
        write_raster(dir / "truth_y.rast", truth.y);
        write_raster(dir / "truth_z.rast", truth.z);
        write_raster(dir / "classes.rast", truth.classes, class_header());
        write_raster(dir / "ndsm.rast", ndsm);

        std::string date;
        if (!opt.dates.empty()) {
            date = opt.dates[v % opt.dates.size()];
        } else {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%04d-%02d", 2020 + v / 12,
                          1 + v % 12);
            date = buf;
        }
        json meta;
        meta["id"] = name;
        meta["date"] = date;
        meta["gsd"] = opt.gsd;
        write_text(dir / "meta.json", meta.dump(2) + "\n");
    }
    return load_dataset(root);
}

}  // namespace semstereo
