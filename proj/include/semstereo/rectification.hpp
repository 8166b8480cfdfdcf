#pragma once

#include <string>
#include <vector>

#include "semstereo/geometry.hpp"
#include "semstereo/raster.hpp"
#include "semstereo/types.hpp"

namespace semstereo {

// A world point with its projections in both images.
struct VirtualCorrespondence {
    WorldPoint world;
    ImagePoint ipL;
    ImagePoint ipR;
};

// Row-major grid of projected world points over `bounds`, x fastest, then y,
// then height. Heights must vary (nz >= 2): correspondences at a single
// height cannot reveal the epipolar direction. A projection landing beyond
// twice a camera's validity bounds is an error naming the grid node.
std::vector<VirtualCorrespondence> virtual_correspondences(
    const RpcCamera& left, const RpcCamera& right, const WorldBox& bounds,
    const GridSpec& grid);

struct TransformFit {
    Homography h_left;
    Homography h_right;
    double y_parallax_rms = 0.0;  // on the held-out half
    double y_parallax_max = 0.0;
};

// Three-stage rectifying fit. (1) The epipolar direction of each image is
// the displacement of the central ground point projected at the two height
// extremes. (2) Each image rotates about its correspondence centroid to make
// that direction horizontal. (3) A least-squares affine row correction
// (row scale, shear, row offset) on the right image aligns rows, and a
// column offset centers the disparity range. Even-index correspondences fit,
// odd-index ones are held out and score the residual y-parallax. A common
// translation puts the left correspondence centroid at the frame center.
TransformFit fit_rectifying_transforms(
    const std::vector<VirtualCorrespondence>& corrs, int out_rows,
    int out_cols);

struct RectifyOptions {
    GridSpec grid{5, 5, 3};      // virtual-correspondence grid over the box
    int out_width = 0;           // 0: keep the left image size
    int out_height = 0;
    double reference_height = std::numeric_limits<double>::quiet_NaN();
    // NaN: use the midpoint of the height range. The right column offset is
    // chosen so the disparity of points at this height is centered near zero.
};

struct RectifyResult {
    Homography h_left;
    Homography h_right;
    double y_parallax_rms = 0.0;   // on held-out virtual correspondences
    double y_parallax_max = 0.0;
    int out_width = 0;
    int out_height = 0;
};

// Epipolar rectification from virtual correspondences: world grid points over
// `bounds` are projected through both cameras, then per-image rotations about
// the correspondence centroids align the epipolar direction with image rows,
// and a right-image affine correction (row scale, shear, row offset) is fit by
// least squares. Half of the correspondences (even/odd interleave) are held
// out of the fit and score y_parallax_rms.
RectifyResult rectify_pair(const RpcCamera& left, const RpcCamera& right,
                           const WorldBox& bounds,
                           int left_width, int left_height,
                           const RectifyOptions& opt = {});

// Inverse-mapped warp: each output pixel samples the source at H^-1 applied to
// its own center. Bilinear for float imagery (invalid when outside or when
// any contributing source pixel is invalid), nearest-neighbor for class
// rasters.
Raster<float> warp_image(const Raster<float>& src, const Homography& h,
                         int out_width, int out_height);
Raster<uint8_t> warp_labels(const Raster<uint8_t>& src, const Homography& h,
                            int out_width, int out_height,
                            uint8_t nodata = kClassUnlabeled);

// Ground-truth disparity for a rectified pair, from per-pixel world
// coordinates of the left ORIGINAL image (three bands, invalid where
// unmeasured). Each rectified-left pixel is mapped back through h_left^-1,
// the world point is sampled bilinearly, and its projections through both
// cameras plus homographies give disparity (right col minus left col) and a
// y-parallax diagnostic.
struct TruthDisparity {
    DisparityMap disparity;
    Raster<float> y_parallax{0, 0};
};

TruthDisparity make_truth_disparity(const Raster<float>& world_x,
                                    const Raster<float>& world_y,
                                    const Raster<float>& world_z,
                                    const RpcCamera& left,
                                    const RpcCamera& right,
                                    const Homography& h_left,
                                    const Homography& h_right,
                                    int out_width, int out_height);

// Everything a matcher or scorer needs for one rectified pair. All rasters
// share the rectified frame size; y_parallax_rms <= y_parallax_max.
struct RectifiedPair {
    Raster<float> left_image{0, 0};
    Raster<float> right_image{0, 0};
    Homography h_left;   // source pixel -> rectified pixel
    Homography h_right;
    DisparityMap truth_disparity;            // left rectified frame
    Raster<uint8_t> truth_class_left{0, 0};
    Raster<uint8_t> truth_class_right{0, 0};
    double y_parallax_rms = 0.0;
    double y_parallax_max = 0.0;
    std::string left_date;   // "YYYY-MM"
    std::string right_date;
    std::string left_camera;   // source camera references
    std::string right_camera;
};

}  // namespace semstereo
