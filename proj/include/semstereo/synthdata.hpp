#pragma once

#include <cstdint>
#include <vector>

#include "semstereo/geometry.hpp"
#include "semstereo/raster.hpp"
#include "semstereo/types.hpp"

namespace semstereo {

// Deterministic generator with portable output: a 64-bit mixing generator
// whose every draw is built from raw bits the same way on every platform,
// so seeds reproduce scenes bit-exactly everywhere.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}
    uint64_t bits();
    double uniform();                    // [0, 1)
    double uniform(double lo, double hi);
    int uniform_int(int lo, int hi);     // inclusive
    double normal(double sigma = 1.0);
    Rng fork(uint64_t stream);           // independent child stream

  private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

struct SceneTargets {
    double building = 0.15;
    double tree = 0.20;
    double water = 0.10;  // the rest is ground
};

struct Scene {
    HeightField dtm;             // bare terrain
    HeightField dsm;             // surface, dsm.z >= dtm.z
    Raster<uint8_t> classes{0, 0};
    Raster<float> texture{0, 0};  // base albedo, [0, 1]
    uint64_t seed = 0;
    double gsd = 0.5;  // meters per cell
};

// Terrain is a smoothed random field; buildings are extruded rectangles
// (5 to 30 m tall), trees are canopy blobs, water basins are exactly flat.
// Deterministic in seed. Targets must sum to at most 1 and be feasible for
// the requested size.
Scene gen_scene(uint64_t seed, int size, const SceneTargets& targets = {},
                double gsd = 0.5);

struct RpcNormalization {
    double x_off = 0, x_scale = 1;
    double y_off = 0, y_scale = 1;
    double h_off = 0, h_scale = 1;
    double line_off = 0, line_scale = 1;
    double samp_off = 0, samp_scale = 1;
};

RpcNormalization normalization_for(const WorldBox& bounds, int width,
                                   int height);

// Re-expresses a 3x4 projection as an RPC. With zero jitter the degree-1
// rational is exact. Jitter perturbs the cubic coefficient block of all four
// polynomials (seeded), scaled so the model stays close to projective but is
// no longer exactly representable; a denominator sign change inside the
// validity volume is a numeric error.
RpcCamera synth_rpc_from_projective(const ProjectiveCamera& cam,
                                    const RpcNormalization& norm,
                                    double cubic_jitter = 0.0,
                                    uint64_t jitter_seed = 1);

// A straight-down or oblique linear camera over the scene box: pixels map to
// ground at `gsd` meters with the view direction tilted by (off_nadir_deg,
// azimuth_deg). Returns the camera and the image size covering the box.
struct SynthView {
    ProjectiveCamera cam;
    int width = 0;
    int height = 0;
};

SynthView make_view_camera(const WorldBox& bounds, double gsd,
                           double off_nadir_deg, double azimuth_deg);

struct SeasonParams {
    double tree_albedo_scale = 1.0;
    bool leaf_off = false;
    double leaf_off_factor = 0.5;  // canopy height multiplier when leaf_off
    double vehicle_density = 0.0;  // transient boxes per 1000 cells
    double noise_sigma = 0.0;      // gaussian, in albedo units
    double sun_azimuth_deg = 135.0;
    double sun_elevation_deg = 55.0;  // must be in (0, 90]
    uint64_t noise_seed = 7;
};

// Applies the seasonal geometry changes (canopy height, vehicles) to a copy
// of the scene so that rendering and truth generation see the same surface.
Scene apply_season_geometry(const Scene& scene, const SeasonParams& season);

// Shadow mask: a cell is shadowed when marching toward the sun some cell at
// distance r is higher than cell height + r*tan(elevation). One-cell steps,
// range bounded by the scene height range.
Raster<uint8_t> cast_shadows(const HeightField& dsm, double sun_azimuth_deg,
                             double sun_elevation_deg);

// Splats every surface cell top through the camera with height z-buffering,
// shades by texture, class albedo, season scaling and shadows, then adds
// seeded Gaussian noise. Pixels no surface cell reaches stay invalid; a
// rendering with no coverage at all is a data error.
Raster<float> render_view(const Scene& scene, const RpcCamera& cam,
                          const SeasonParams& season, int width, int height);

// Per-pixel world coordinates and class of the surface point every rendered
// pixel sees (same splat as render_view), the per-view ground truth. Water
// cells get valid labels but invalid xyz, mirroring surfaces whose
// geometry is unmeasurable.
struct ViewTruth {
    Raster<float> x{0, 0}, y{0, 0}, z{0, 0};
    Raster<uint8_t> classes{0, 0};
};

ViewTruth render_truth(const Scene& scene, const RpcCamera& cam, int width,
                       int height,
                       const SeasonParams& season = SeasonParams{});

}  // namespace semstereo
