#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "semstereo/fusion.hpp"
#include "semstereo/matcher.hpp"
#include "semstereo/metrics.hpp"
#include "semstereo/rectification.hpp"
#include "semstereo/registration.hpp"
#include "semstereo/synthdata.hpp"

namespace semstereo {

// One view of a geographic cell on disk: image + camera + optional per-pixel
// truth, all sharing the image dimensions.
struct TileBundle {
    std::string id;
    std::filesystem::path dir;
    std::string date;  // "YYYY-MM"
    double gsd = 0.5;
    bool has_truth = false;
    bool has_pred = false;  // external semantic prediction to score

    std::filesystem::path image_path() const { return dir / "image.rast"; }
    std::filesystem::path rpc_path() const { return dir / "camera.rpc"; }
    std::filesystem::path truth_x_path() const { return dir / "truth_x.rast"; }
    std::filesystem::path truth_y_path() const { return dir / "truth_y.rast"; }
    std::filesystem::path truth_z_path() const { return dir / "truth_z.rast"; }
    std::filesystem::path classes_path() const { return dir / "classes.rast"; }
    std::filesystem::path ndsm_path() const { return dir / "ndsm.rast"; }
    std::filesystem::path pred_classes_path() const {
        return dir / "pred_classes.rast";
    }
    std::filesystem::path meta_path() const { return dir / "meta.json"; }
};

struct PairSelection {
    int max_month_diff = 12;
    double min_angle_deg = 5.0;
    double max_angle_deg = 45.0;
    double max_epe = 5.0;   // SGM-vs-truth filter when truth exists
    bool use_epe_filter = true;
};

struct RunConfig {
    std::string task = "pairwise";  // pairwise | multiview | pointcloud
    uint64_t seed = 1;
    SgmParams sgm;
    bool use_prior = true;
    SemanticPriorParams prior = benchmark_prior();
    bool use_wls = true;
    WlsOptions wls;
    PairSelection selection;
    FuseOptions fuse;
    GridOptions grid;
    double d1_thresh_px = 3.0;
    double combined_2d_thresh_px = 3.0;
    double combined_3d_thresh_m = 1.0;
    double z_thresh_m = 1.0;
    int align_radius_cells = 8;
    bool score_prior_off_too = false;  // adds a noprior_* column set
    std::string out_dir;
};

RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& c);

struct Dataset {
    std::filesystem::path root;
    std::vector<TileBundle> tiles;                  // sorted by id
    std::optional<std::filesystem::path> truth_dsm_z;      // scene-level
    std::optional<std::filesystem::path> truth_dsm_class;
};

Dataset load_dataset(const std::filesystem::path& root);

struct PairChoice {
    std::string left_id;
    std::string right_id;
    double angle_deg = 0.0;
    int month_diff = 0;
    double epe = std::numeric_limits<double>::quiet_NaN();
    bool kept = false;
    std::string reason;  // why rejected, empty when kept
};

// Candidate pairs in lexicographic id order, filtered by month difference and
// the intersection-angle window, then (when truth exists and enabled) by the
// SGM-vs-truth EPE threshold. No survivors is an empty list, not an error.
std::vector<PairChoice> select_pairs(const Dataset& ds, const RunConfig& cfg);

struct SynthDatasetOptions {
    int views = 5;
    int size = 512;          // scene cells and image pixels per side
    double gsd = 0.5;
    uint64_t seed = 1;
    SceneTargets targets;
    double cubic_jitter = 0.0;
    double max_off_nadir_deg = 18.0;
    std::vector<SeasonParams> seasons;  // per view; cycled when shorter
    std::vector<std::string> dates;     // per view; cycled when shorter
};

// Materializes a synthetic dataset (views, cameras, per-view truth, and the
// scene-level truth DSM) in the on-disk layout load_dataset expects.
Dataset make_synth_dataset(const std::filesystem::path& root,
                           const SynthDatasetOptions& opt);

// Reads both tiles, fits the rectifying transforms, warps imagery and labels,
// and (when the left tile carries truth) builds the truth disparity.
RectifiedPair build_rectified_pair(const TileBundle& left,
                                   const TileBundle& right);

// Everything one rectified pair run produces, on disk under
// out_dir/pairs/<left>__<right>/.
struct PairArtifacts {
    std::string pair_id;
    std::filesystem::path dir;
    RectifyResult rectify;
    RectifiedPair pair;  // images, homographies, truth products
    DisparityMap disparity{Raster<float>{0, 0}, 0, 0};  // wls-filtered when on
    Raster<uint8_t> pred_labels{0, 0};  // rectified prediction labels
    bool has_truth = false;
};

PairArtifacts run_pair(const Dataset& ds, const TileBundle& left,
                       const TileBundle& right, const RunConfig& cfg,
                       const std::filesystem::path& out_dir);

std::vector<MetricsReport> run_pairwise_benchmark(const Dataset& ds,
                                                  const RunConfig& cfg);

MetricsReport run_multiview_benchmark(const Dataset& ds, const RunConfig& cfg);

// Alignment plus surface scoring shared by the multiview flow: estimates the
// 3D translation of the reconstruction against the truth grid, then scores
// height completeness/accuracy and the combined 3D mIoU (when both carry
// classes). Exposed so a reconstruction can be scored on its own.
MetricsReport score_fused_surface(const HeightField& fused,
                                  const HeightField& truth,
                                  const RunConfig& cfg);

// Reproducibility manifest: config hash plus the hash of every input file.
void write_manifest(const std::filesystem::path& out_dir, const RunConfig& cfg,
                    const std::vector<std::filesystem::path>& inputs);

inline constexpr int kExitOk = 0;
inline constexpr int kExitArgument = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

}  // namespace semstereo
