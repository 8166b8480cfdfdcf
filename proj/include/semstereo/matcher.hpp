#pragma once

#include <cstdint>
#include <vector>

#include "semstereo/metrics.hpp"
#include "semstereo/raster.hpp"
#include "semstereo/rectification.hpp"
#include "semstereo/types.hpp"

namespace semstereo {

// Per-pixel matching costs over a contiguous disparity range, stored
// disparity-fastest. Census volumes hold plain Hamming distances; aggregated
// volumes are in quarter units of the unary scale (see sgm_aggregate).
struct CostVolume {
    int width = 0;
    int height = 0;
    int d_min = 0;
    int ndisp = 0;
    std::vector<int32_t> cost;

    int32_t& at(int r, int c, int k) {
        return cost[(static_cast<size_t>(r) * width + c) * ndisp + k];
    }
    int32_t at(int r, int c, int k) const {
        return cost[(static_cast<size_t>(r) * width + c) * ndisp + k];
    }
};

// Census/Hamming cost volume. Each descriptor compares every window pixel
// (the center included) against the center in row-major window order, a value
// >= center setting the bit; borders replicate-clamp and NaN comparisons are
// false. cost(r, c, d) is the Hamming distance between left(r, c) and
// right(r, c + d); a right column outside the image costs the full window bit
// count, above any reachable distance. Window must be odd, at most 9, and no
// larger than the image.
CostVolume census_cost_volume(const Raster<float>& left,
                              const Raster<float>& right, int window,
                              int d_min, int d_max);

struct SgmParams {
    double p1 = 10.0;  // penalty for a one-level disparity step
    double p2 = 120.0;  // penalty for larger jumps, before attenuation
    // P2' = P2 / max(1, |grad|/scale); the default expects unit-range guides,
    // where a step of a few noise sigmas starts discounting the jump penalty.
    double p2_gradient_scale = 0.03125;
    int paths = 8;                   // 4 or 8 aggregation directions
    double lr_max_diff = 1.0;        // pixels; < 0 skips the check
    int census_window = 5;
    bool subpixel = true;
};

// Default-constructed values are exactly neutral: they reproduce plain SGM.
struct SemanticPriorParams {
    double beta_same = 1.0;  // P2 multiplier inside a class region, >= 1
    double beta_diff = 1.0;  // P2 multiplier across a boundary, in (0, 1]
    double gamma = 0.0;      // unary cost added on a stable-class mismatch
    std::vector<uint8_t> stable_classes = {kClassGround, kClassBuilding,
                                           kClassWater};
};

struct SemanticPriorInput {
    SemanticPriorParams params;
    Raster<uint8_t> left;   // classes of the reference (guide) view
    Raster<uint8_t> right;  // classes of the other view
};

// The benchmark prior configuration: double the large-jump penalty inside a
// class region, halve it across boundaries, and charge a quarter of the
// census bit budget for a stable-class mismatch.
inline SemanticPriorParams benchmark_prior(int census_window = 5) {
    SemanticPriorParams p;
    p.beta_same = 2.0;
    p.beta_diff = 0.5;
    p.gamma = 0.25 * census_window * census_window;
    return p;
}

// Sums dynamic-programming path costs over 4 or 8 scanline directions.
// The result is in quarter units of the unary scale so fractional penalties
// stay exact in integer arithmetic: each path cost is 4*unary plus steps of
// lround(4*P1) for one-level changes and lround(4*P2') for jumps, where
// P2' = max(P1, beta * P2 / max(1, |grad guide|/p2_gradient_scale)) and beta
// is beta_same or beta_diff by whether the step stays inside one class of the
// guide-view labels. With a prior, lround(4*gamma) joins the unary cost at
// pixels whose two class labels are distinct members of the stable set. Path
// costs carry no per-pixel renormalization, so on a single row the two
// horizontal paths sum to the exact chain minimum through each cell plus one
// extra unary term.
CostVolume sgm_aggregate(const CostVolume& unary, const Raster<float>& guide,
                         const SgmParams& params,
                         const SemanticPriorInput* prior = nullptr);

// Winner-take-all over the aggregated volume, ties to the lowest disparity,
// then equiangular subpixel refinement against the two neighboring costs
// (never moving the value more than half a pixel).
DisparityMap select_disparity(const CostVolume& aggregated,
                              bool subpixel = true);

// Census cost volume, path aggregation, selection, then a left-right
// consistency check matching both directions and invalidating pixels with
// |dL + dR(r, c + dL)| > lr_max_diff. Disparities are signed, applied as
// right column = left column + d. Pixels with invalid left intensity are
// invalid in the output.
DisparityMap sgm_match(const Raster<float>& left, const Raster<float>& right,
                       int d_min, int d_max, const SgmParams& params,
                       const SemanticPriorInput* prior = nullptr);

// Same matcher on a rectified pair: the search range is the truth range
// padded by 16 px each side, and the prior (when given) reads the pair's
// rectified class rasters.
DisparityMap sgm_match(const RectifiedPair& pair, const SgmParams& params,
                       const SemanticPriorParams* prior = nullptr);

// Edge-aware smoothing by alternating horizontal and vertical tridiagonal
// solves with neighbor weights exp(-|grad guide|/sigma_color), the per-sweep
// lambda decaying as lambda_t = 1.5*lambda*4^(T-t)/(4^T-1) so the total
// matches a single global pass at the nominal value. Invalid pixels carry no
// data term and are filled from the smoothness term; lambda = 0 returns the
// input unchanged.
DisparityMap wls_filter(const DisparityMap& disparity,
                        const Raster<float>& guide, double lambda,
                        double sigma_color, int iterations = 3);

// Knob bundle for the filter; sigma_color is in guide units (the rendered
// imagery here lives in [0, 1]). The lambda default is a light touch that
// cleans subpixel staircase noise without dragging disparity across verified
// census matches; larger values flatten whole regions.
struct WlsOptions {
    double lambda = 4.0;
    double sigma_color = 0.04;
    int iterations = 3;
};

inline DisparityMap wls_filter(const DisparityMap& disparity,
                               const Raster<float>& guide,
                               const WlsOptions& opt) {
    return wls_filter(disparity, guide, opt.lambda, opt.sigma_color,
                      opt.iterations);
}

// Pair screening score, a thin wrapper over the disparity metrics.
DisparityScore match_quality(const DisparityMap& disp,
                             const DisparityMap& truth);

}  // namespace semstereo
