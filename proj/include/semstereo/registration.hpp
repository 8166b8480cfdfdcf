#pragma once

#include "semstereo/geometry.hpp"
#include "semstereo/raster.hpp"
#include "semstereo/types.hpp"

namespace semstereo {

// Mutual information between two rasters over jointly valid pixels, in bits.
// Intensities are binned uniformly over each raster's range on the jointly
// valid set. Fewer than `min_overlap` jointly valid pixels is a data error.
// Exactly symmetric in its arguments.
double mutual_information(const Raster<float>& a, const Raster<float>& b,
                          int bins = 64, int min_overlap = 100);

struct AlignmentResult {
    int dx = 0;  // column shift of the moving image's content
    int dy = 0;  // row shift
    double mi_score = 0.0;    // MI at the best candidate, bits
    double confidence = 0.0;  // best / second-best over non-adjacent shifts
    bool low_confidence = false;
};

// Exhaustive integer translation search, (2*radius+1)^2 candidates. The score
// of (dx, dy) is the MI between reference(r, c) and moving(r+dy, c+dx) over
// the overlap. Confidence below `confidence_floor` flags the result and
// leaves the offsets at zero.
AlignmentResult align_translation_mi(const Raster<float>& reference,
                                     const Raster<float>& moving, int radius,
                                     int bins = 64,
                                     double confidence_floor = 1.01);

// Companion update: fold the detected shift into the moving image's camera so
// projections land on the registered content.
void apply_alignment(RpcCamera& cam, const AlignmentResult& a);

struct Translation3D {
    double tx = 0.0;  // world units; the offset of the moving surface
    double ty = 0.0;  // relative to the reference (moving = reference + t)
    double tz = 0.0;  // meters
    double inlier_fraction = 0.0;
    int overlap_cells = 0;
};

// Integer-cell XY search aligning a moving height grid to a reference grid on
// the same spacing. Each candidate scores the spread (median absolute
// deviation about the median) of the per-cell height residuals; the best cell
// then gets tz = median residual, and inliers are residuals within 1 m of tz.
// Overlap below `min_overlap_fraction` of either grid is a data error. Ties
// prefer the smaller shift, zero first.
Translation3D estimate_3d_translation(const HeightField& reference,
                                      const HeightField& moving,
                                      int radius_cells,
                                      double min_overlap_fraction = 0.25);

}  // namespace semstereo
