#pragma once

#include <vector>

#include "semstereo/geometry.hpp"
#include "semstereo/io.hpp"
#include "semstereo/raster.hpp"
#include "semstereo/rectification.hpp"

namespace semstereo {

// Triangulates every valid disparity pixel: the rectified coordinates are
// mapped back through the homographies and intersected with linear cameras
// fitted to the two RPCs. Labels ride along when given (unlabeled otherwise).
PointCloud disparity_to_points(const DisparityMap& disparity,
                               const Raster<uint8_t>& labels,
                               const Homography& h_left,
                               const Homography& h_right,
                               const ProjectiveCamera& cam_left,
                               const ProjectiveCamera& cam_right,
                               double max_residual_px = 1.0);

struct GridOptions {
    double cell = 0.5;  // meters
    // NaN bounds: tight bounds of the points.
    double x_min = std::numeric_limits<double>::quiet_NaN();
    double y_min = std::numeric_limits<double>::quiet_NaN();
    double x_max = std::numeric_limits<double>::quiet_NaN();
    double y_max = std::numeric_limits<double>::quiet_NaN();
};

// Median height per cell; most frequent class per cell, ties broken by fixed
// priority (building, tree, water, ground, unlabeled). Empty cells invalid.
HeightField rasterize_points(const PointCloud& pc, const GridOptions& opt);

struct FuseOptions {
    // A cell survives when at least max(1, ceil(n * min_valid_fraction)) of
    // the n input fields cover it.
    double min_valid_fraction = 1.0 / 3.0;
};

// Cellwise median height and modal class across co-registered fields.
// All fields must share the grid.
HeightField fuse_height_fields(const std::vector<HeightField>& fields,
                               const FuseOptions& opt = {});

}  // namespace semstereo
