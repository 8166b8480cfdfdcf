#include "semstereo/synthdata.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace semstereo {

namespace {

uint64_t mix64(uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

uint64_t hash2(uint64_t seed, int64_t ix, int64_t iy) {
    uint64_t h = seed;
    h = mix64(h ^ static_cast<uint64_t>(ix) * 0x8DA6B343ull);
    h = mix64(h ^ static_cast<uint64_t>(iy) * 0xD8163841ull);
    return h;
}

double hash_uniform(uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Lattice value noise in [0, 1], bilinear with smoothstep easing.
double value_noise(uint64_t seed, double x, double y) {
    const double fx = std::floor(x), fy = std::floor(y);
    const int64_t ix = static_cast<int64_t>(fx);
    const int64_t iy = static_cast<int64_t>(fy);
    const double tx = smoothstep(x - fx);
    const double ty = smoothstep(y - fy);
    const double v00 = hash_uniform(hash2(seed, ix, iy));
    const double v10 = hash_uniform(hash2(seed, ix + 1, iy));
    const double v01 = hash_uniform(hash2(seed, ix, iy + 1));
    const double v11 = hash_uniform(hash2(seed, ix + 1, iy + 1));
    const double a = v00 + (v10 - v00) * tx;
    const double b = v01 + (v11 - v01) * tx;
    return a + (b - a) * ty;
}

double fractal_noise(uint64_t seed, double x, double y, int octaves,
                     double base_freq) {
    double sum = 0.0, amp = 1.0, norm = 0.0, freq = base_freq;
    for (int o = 0; o < octaves; ++o) {
        sum += amp * value_noise(seed + o * 1013ull, x * freq, y * freq);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    return sum / norm;
}

}  // namespace

uint64_t Rng::bits() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

int Rng::uniform_int(int lo, int hi) {
    if (hi < lo) throw ArgumentError("uniform_int: empty range");
    const uint64_t span = static_cast<uint64_t>(hi) - lo + 1;
    return lo + static_cast<int>(bits() % span);
}

double Rng::normal(double sigma) {
    if (have_spare_) {
        have_spare_ = false;
        return spare_ * sigma;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a) * sigma;
}

Rng Rng::fork(uint64_t stream) {
    return Rng(mix64(state_ ^ mix64(stream + 0x51ED2700A1B2C3D4ull)));
}

Scene gen_scene(uint64_t seed, int size, const SceneTargets& targets,
                double gsd) {
    if (size <= 0) throw ArgumentError("gen_scene: size must be positive");
    if (targets.building < 0 || targets.tree < 0 || targets.water < 0)
        throw ArgumentError("gen_scene: negative composition target");
    if (targets.building + targets.tree + targets.water > 1.0)
        throw ArgumentError("gen_scene: composition targets exceed 1");
    const bool any_objects =
        targets.building > 0 || targets.tree > 0 || targets.water > 0;
    if (any_objects && size < 24)
        throw DataError("gen_scene: size too small for the composition targets");

    Scene scene;
    scene.seed = seed;
    scene.gsd = gsd;
    scene.dtm = HeightField{0.0, 0.0, gsd, Raster<float>(size, size),
                            Raster<uint8_t>(size, size, kClassGround)};
    Rng rng(seed);
    const uint64_t terrain_seed = rng.bits();
    const uint64_t texture_seed = rng.bits();
    Rng place = rng.fork(1);

    // Rolling terrain, about 12 m of relief across the tile.
    const double extent = size * gsd;
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const double x = c * gsd / extent;
            const double y = r * gsd / extent;
            const double h =
                20.0 + 12.0 * (fractal_noise(terrain_seed, x, y, 4, 3.0) - 0.5);
            scene.dtm.z.at(r, c) = static_cast<float>(h);
        }

    scene.dsm = scene.dtm;
    Raster<uint8_t>& cls = scene.dsm.classes;
    Raster<float>& dsm = scene.dsm.z;
    const Raster<float>& dtm = scene.dtm.z;
    const double total = static_cast<double>(size) * size;
    long n_water = 0, n_building = 0, n_tree = 0;

    // Water basins: rectangles with rounded corners, carved flat.
    for (int attempt = 0; attempt < 400 && n_water < targets.water * total;
         ++attempt) {
        const int bw = place.uniform_int(size / 10, size / 4);
        const int bh = place.uniform_int(size / 10, size / 4);
        const int r0 = place.uniform_int(2, std::max(2, size - bh - 3));
        const int c0 = place.uniform_int(2, std::max(2, size - bw - 3));
        bool clear = true;
        for (int r = r0; r < r0 + bh && clear; ++r)
            for (int c = c0; c < c0 + bw && clear; ++c)
                if (cls.at(r, c) != kClassGround) clear = false;
        if (!clear) continue;
        float level = std::numeric_limits<float>::infinity();
        for (int r = r0; r < r0 + bh; ++r)
            for (int c = c0; c < c0 + bw; ++c)
                level = std::min(level, dtm.at(r, c));
        level -= 0.5f;
        const double cr = std::min(bw, bh) * 0.35;  // corner radius, cells
        for (int r = r0; r < r0 + bh; ++r)
            for (int c = c0; c < c0 + bw; ++c) {
                const double dr = std::min(r - r0, r0 + bh - 1 - r);
                const double dc = std::min(c - c0, c0 + bw - 1 - c);
                if (dr < cr && dc < cr &&
                    std::hypot(cr - dr, cr - dc) > cr)
                    continue;
                cls.at(r, c) = kClassWater;
                dsm.at(r, c) = level;
                scene.dtm.z.at(r, c) = level;
                ++n_water;
            }
    }

    // Buildings: flat-roofed extruded rectangles, 5 to 30 m tall.
    for (int attempt = 0;
         attempt < 2000 && n_building < targets.building * total;
         ++attempt) {
        const int bw = place.uniform_int(std::max(4, size / 40),
                                         std::max(6, size / 10));
        const int bh = place.uniform_int(std::max(4, size / 40),
                                         std::max(6, size / 10));
        const int r0 = place.uniform_int(1, std::max(1, size - bh - 2));
        const int c0 = place.uniform_int(1, std::max(1, size - bw - 2));
        const double height = place.uniform(5.0, 30.0);
        bool clear = true;
        for (int r = r0 - 1; r < r0 + bh + 1 && clear; ++r)
            for (int c = c0 - 1; c < c0 + bw + 1 && clear; ++c)
                if (cls.at(r, c) != kClassGround) clear = false;
        if (!clear) continue;
        float base = -std::numeric_limits<float>::infinity();
        for (int r = r0; r < r0 + bh; ++r)
            for (int c = c0; c < c0 + bw; ++c)
                base = std::max(base, dtm.at(r, c));
        for (int r = r0; r < r0 + bh; ++r)
            for (int c = c0; c < c0 + bw; ++c) {
                cls.at(r, c) = kClassBuilding;
                dsm.at(r, c) = base + static_cast<float>(height);
                ++n_building;
            }
    }

    // Trees: dome-shaped canopy blobs.
    for (int attempt = 0; attempt < 6000 && n_tree < targets.tree * total;
         ++attempt) {
        const double radius = place.uniform(1.5, 5.0);  // meters
        const double height = place.uniform(4.0, 14.0);
        const int rc = place.uniform_int(1, size - 2);
        const int cc = place.uniform_int(1, size - 2);
        const int span = static_cast<int>(std::ceil(radius / gsd));
        bool clear = true;
        for (int r = std::max(0, rc - span);
             r <= std::min(size - 1, rc + span) && clear; ++r)
            for (int c = std::max(0, cc - span);
                 c <= std::min(size - 1, cc + span) && clear; ++c)
                if (cls.at(r, c) != kClassGround && cls.at(r, c) != kClassTree)
                    clear = false;
        if (!clear) continue;
        for (int r = std::max(0, rc - span); r <= std::min(size - 1, rc + span);
             ++r)
            for (int c = std::max(0, cc - span);
                 c <= std::min(size - 1, cc + span); ++c) {
                const double d = std::hypot((r - rc) * gsd, (c - cc) * gsd);
                if (d >= radius) continue;
                const double dz =
                    height * std::sqrt(std::max(0.0, 1.0 - (d / radius) * (d / radius)));
                const float top = dtm.at(r, c) + static_cast<float>(dz);
                if (top > dsm.at(r, c)) {
                    dsm.at(r, c) = top;
                    if (cls.at(r, c) != kClassTree) {
                        cls.at(r, c) = kClassTree;
                        ++n_tree;
                    }
                }
            }
    }

    scene.classes = cls;
    scene.dtm.classes = cls;

    // Base albedo: mid-gray fractal pattern with per-cell grain, strong
    // enough high-frequency content for window matching.
    scene.texture = Raster<float>(size, size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const double x = c * gsd / extent;
            const double y = r * gsd / extent;
            const double coarse = fractal_noise(texture_seed, x, y, 5, 6.0);
            const double grain =
                hash_uniform(hash2(texture_seed ^ 0xABCDull, r, c));
            scene.texture.at(r, c) =
                static_cast<float>(0.18 + 0.5 * coarse + 0.22 * grain);
        }
    return scene;
}

RpcNormalization normalization_for(const WorldBox& bounds, int width,
                                   int height) {
    RpcNormalization n;
    n.x_off = bounds.x_mid();
    n.y_off = bounds.y_mid();
    n.h_off = bounds.z_mid();
    n.x_scale = std::max(1.0, 0.5 * (bounds.x_max - bounds.x_min));
    n.y_scale = std::max(1.0, 0.5 * (bounds.y_max - bounds.y_min));
    n.h_scale = std::max(1.0, 0.5 * (bounds.z_max - bounds.z_min));
    n.line_off = 0.5 * height;
    n.line_scale = std::max(1.0, 0.5 * height);
    n.samp_off = 0.5 * width;
    n.samp_scale = std::max(1.0, 0.5 * width);
    return n;
}

RpcCamera synth_rpc_from_projective(const ProjectiveCamera& cam,
                                    const RpcNormalization& norm,
                                    double cubic_jitter, uint64_t jitter_seed) {
    RpcCamera out;
    out.x_off = norm.x_off;
    out.x_scale = norm.x_scale;
    out.y_off = norm.y_off;
    out.y_scale = norm.y_scale;
    out.h_off = norm.h_off;
    out.h_scale = norm.h_scale;
    out.line_off = norm.line_off;
    out.line_scale = norm.line_scale;
    out.samp_off = norm.samp_off;
    out.samp_scale = norm.samp_scale;

    // With w(x,y,z) the third camera row, the normalized world substitution
    // x = x_off + x_scale*L (etc.) turns each row into a degree-1 polynomial
    // in (L, P, H). Dividing numerator and denominator by the denominator
    // constant makes the representation canonical.
    auto row_poly = [&](int row) {
        // returns {constant, L, P, H} for p[4*row .. 4*row+3]
        const double* q = cam.p.data() + 4 * row;
        std::array<double, 4> c{};
        c[0] = q[0] * norm.x_off + q[1] * norm.y_off + q[2] * norm.h_off + q[3];
        c[1] = q[0] * norm.x_scale;
        c[2] = q[1] * norm.y_scale;
        c[3] = q[2] * norm.h_scale;
        return c;
    };
    const auto u = row_poly(0);   // samp numerator, pixels
    const auto v = row_poly(1);   // line numerator
    const auto w = row_poly(2);   // shared denominator
    if (std::abs(w[0]) < 1e-12)
        throw NumericError(
            "synth_rpc_from_projective: camera plane passes through the "
            "normalization center");

    for (int i = 0; i < 4; ++i) {
        out.samp_den[i] = w[i] / w[0];
        out.line_den[i] = w[i] / w[0];
        out.samp_num[i] = (u[i] - norm.samp_off * w[i]) / (norm.samp_scale * w[0]);
        out.line_num[i] = (v[i] - norm.line_off * w[i]) / (norm.line_scale * w[0]);
    }

    if (cubic_jitter != 0.0) {
        // Jitter magnitude is expressed in pixels of worst-case image
        // displacement across the validity volume.
        const double px_gain = 8.0;
        Rng jr(mix64(jitter_seed ^ 0x7E57ull));
        auto jitter_block = [&](std::array<double, 20>& poly, double px_scale) {
            const double amp = cubic_jitter * px_gain / px_scale;
            for (int i = 10; i < 20; ++i) poly[i] += jr.uniform(-amp, amp);
        };
        jitter_block(out.samp_num, norm.samp_scale);
        jitter_block(out.line_num, norm.line_scale);
        jitter_block(out.samp_den, norm.samp_scale);
        jitter_block(out.line_den, norm.line_scale);
    }
    out.check();  // rejects denominator sign trouble inside the validity box
    return out;
}

SynthView make_view_camera(const WorldBox& bounds, double gsd,
                           double off_nadir_deg, double azimuth_deg) {
    if (gsd <= 0) throw ArgumentError("make_view_camera: gsd must be positive");
    if (off_nadir_deg < 0 || off_nadir_deg >= 60)
        throw ArgumentError("make_view_camera: off-nadir angle out of range");
    const double t = off_nadir_deg * M_PI / 180.0;
    const double az = azimuth_deg * M_PI / 180.0;
    // Far enough that the pinhole is effectively orthographic over a tile,
    // like a pushbroom line scanner; affine epipolar rectification then
    // applies cleanly.
    const double dist = 2.0e7;

    const Eigen::Vector3d target(bounds.x_mid(), bounds.y_mid(), bounds.z_mid());
    const Eigen::Vector3d offset(std::sin(t) * std::cos(az),
                                 std::sin(t) * std::sin(az), std::cos(t));
    const Eigen::Vector3d center = target + dist * offset;
    const Eigen::Vector3d zc = (target - center).normalized();

    Eigen::Vector3d xc = Eigen::Vector3d::UnitX() -
                         (Eigen::Vector3d::UnitX().dot(zc)) * zc;
    if (xc.norm() < 1e-9) xc = Eigen::Vector3d::UnitY();
    xc.normalize();
    const Eigen::Vector3d yc = zc.cross(xc);

    const double f = dist / gsd;  // pixels
    Eigen::Matrix3d rot;
    rot.row(0) = xc.transpose();
    rot.row(1) = yc.transpose();
    rot.row(2) = zc.transpose();
    Eigen::Matrix<double, 3, 4> ext;
    ext.block<3, 3>(0, 0) = rot;
    ext.col(3) = -rot * center;
    Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
    k(0, 0) = f;
    k(1, 1) = f;
    Eigen::Matrix<double, 3, 4> pm = k * ext;

    // Size the image from the projected box corners, then recenter.
    double smin = 1e300, smax = -1e300, lmin = 1e300, lmax = -1e300;
    for (int i = 0; i < 8; ++i) {
        const Eigen::Vector4d corner(i & 1 ? bounds.x_max : bounds.x_min,
                                     i & 2 ? bounds.y_max : bounds.y_min,
                                     i & 4 ? bounds.z_max : bounds.z_min, 1.0);
        const Eigen::Vector3d h = pm * corner;
        const double s = h(0) / h(2), l = h(1) / h(2);
        smin = std::min(smin, s);
        smax = std::max(smax, s);
        lmin = std::min(lmin, l);
        lmax = std::max(lmax, l);
    }
    const double pad = 4.0;
    SynthView view;
    view.width = static_cast<int>(std::ceil(smax - smin + 2 * pad));
    view.height = static_cast<int>(std::ceil(lmax - lmin + 2 * pad));
    k(0, 2) = pad - smin;
    k(1, 2) = pad - lmin;
    pm = k * ext;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) view.cam.p[4 * r + c] = pm(r, c);
    view.cam.normalize();
    return view;
}

Scene apply_season_geometry(const Scene& scene, const SeasonParams& season) {
    Scene out = scene;
    if (season.leaf_off) {
        for (int r = 0; r < out.dsm.rows(); ++r)
            for (int c = 0; c < out.dsm.cols(); ++c)
                if (out.classes.at(r, c) == kClassTree) {
                    const float dtm = scene.dtm.z.at(r, c);
                    const float canopy = scene.dsm.z.at(r, c) - dtm;
                    out.dsm.z.at(r, c) =
                        dtm + canopy * static_cast<float>(season.leaf_off_factor);
                }
    }
    if (season.vehicle_density > 0) {
        Rng vr(mix64(season.noise_seed ^ 0xCA25ull));
        const int size = out.dsm.rows();
        const int count = static_cast<int>(
            season.vehicle_density * size * static_cast<double>(size) / 1000.0);
        for (int i = 0; i < count; ++i) {
            const int vl = std::max(2, static_cast<int>(4.5 / out.gsd));
            const int vw = std::max(1, static_cast<int>(2.0 / out.gsd));
            const bool rot = vr.uniform() < 0.5;
            const int bh = rot ? vw : vl;
            const int bw = rot ? vl : vw;
            const int r0 = vr.uniform_int(0, std::max(0, size - bh - 1));
            const int c0 = vr.uniform_int(0, std::max(0, size - bw - 1));
            const double height = vr.uniform(1.5, 2.6);
            bool clear = true;
            for (int r = r0; r < r0 + bh && clear; ++r)
                for (int c = c0; c < c0 + bw && clear; ++c)
                    if (out.classes.at(r, c) != kClassGround) clear = false;
            if (!clear) continue;
            float base = -std::numeric_limits<float>::infinity();
            for (int r = r0; r < r0 + bh; ++r)
                for (int c = c0; c < c0 + bw; ++c)
                    base = std::max(base, out.dtm.z.at(r, c));
            for (int r = r0; r < r0 + bh; ++r)
                for (int c = c0; c < c0 + bw; ++c) {
                    out.dsm.z.at(r, c) = base + static_cast<float>(height);
                    // Rendered like small structures; the base-scene labels
                    // used for truth keep calling these cells ground.
                    out.dsm.classes.at(r, c) = kClassBuilding;
                }
        }
        out.classes = out.dsm.classes;
    }
    return out;
}

Raster<uint8_t> cast_shadows(const HeightField& dsm, double sun_azimuth_deg,
                             double sun_elevation_deg) {
    if (!(sun_elevation_deg > 0.0) || sun_elevation_deg > 90.0)
        throw ArgumentError("cast_shadows: sun elevation must be in (0, 90]");
    const int rows = dsm.rows(), cols = dsm.cols();
    Raster<uint8_t> mask(cols, rows, 0);
    if (sun_elevation_deg == 90.0) return mask;

    const double az = sun_azimuth_deg * M_PI / 180.0;
    const double dx = std::cos(az), dy = std::sin(az);
    const double tan_el = std::tan(sun_elevation_deg * M_PI / 180.0);
    float max_h = -std::numeric_limits<float>::infinity();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (is_valid(dsm.z.at(r, c))) max_h = std::max(max_h, dsm.z.at(r, c));
    if (!std::isfinite(max_h)) return mask;

#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const float h0 = dsm.z.at(r, c);
            if (!is_valid(h0)) continue;
            const double limit = (max_h - h0) / tan_el / dsm.cell;
            const int steps = static_cast<int>(std::ceil(limit));
            for (int k = 1; k <= steps; ++k) {
                const double cc = c + k * dx;
                const double rr = r + k * dy;
                const int ci = static_cast<int>(std::lround(cc));
                const int ri = static_cast<int>(std::lround(rr));
                if (ci < 0 || ci >= cols || ri < 0 || ri >= rows) break;
                const float hk = dsm.z.at(ri, ci);
                if (!is_valid(hk)) continue;
                if (hk > h0 + k * dsm.cell * tan_el) {
                    mask.at(r, c) = 1;
                    break;
                }
            }
        }
    }
    return mask;
}

namespace {

double class_albedo(uint8_t cls) {
    switch (cls) {
        case kClassGround: return 1.0;
        case kClassTree: return 0.55;
        case kClassBuilding: return 1.35;
        case kClassWater: return 0.18;
        default: return 1.0;
    }
}

struct SplatPoint {
    double line, samp, z;
    int cell_r, cell_c;
};

// Projects the subcell-sampled surface and z-buffers at target resolution.
// Buffer cells hold (z, source row, source col); ties keep the earlier cell,
// making the serial loop order part of the contract.
struct ZBuffer {
    int width, height;
    std::vector<float> z;
    std::vector<int32_t> src;

    ZBuffer(int w, int h)
        : width(w), height(h),
          z(static_cast<size_t>(w) * h, -std::numeric_limits<float>::infinity()),
          src(static_cast<size_t>(w) * h, -1) {}

    void put(int row, int col, float zz, int32_t source) {
        if (row < 0 || row >= height || col < 0 || col >= width) return;
        const size_t i = static_cast<size_t>(row) * width + col;
        if (zz > z[i] || (zz == z[i] && (src[i] < 0 || source < src[i]))) {
            z[i] = zz;
            src[i] = source;
        }
    }
};

ZBuffer splat_scene(const Scene& scene, const RpcCamera& cam, int width,
                    int height, int supersample) {
    const int rows = scene.dsm.rows(), cols = scene.dsm.cols();
    ZBuffer buf(width * supersample, height * supersample);
    const int sub = 2;  // surface samples per cell axis
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const float z = scene.dsm.z.at(r, c);
            if (!is_valid(z)) continue;
            for (int sr = 0; sr < sub; ++sr)
                for (int sc = 0; sc < sub; ++sc) {
                    const double x =
                        scene.dsm.x_of(c) + (sc + 0.5) / sub * scene.dsm.cell -
                        0.5 * scene.dsm.cell;
                    const double y =
                        scene.dsm.y_of(r) + (sr + 0.5) / sub * scene.dsm.cell -
                        0.5 * scene.dsm.cell;
                    ImagePoint ip;
                    try {
                        ip = rpc_project(cam, WorldPoint{x, y, z}, nullptr);
                    } catch (const NumericError&) {
                        continue;
                    }
                    // Subpixel k spans [k/ss - 0.5, (k+1)/ss - 0.5) so that
                    // the ss*ss block under pixel p covers [p-0.5, p+0.5).
                    const int br = static_cast<int>(
                        std::floor((ip.line + 0.5) * supersample));
                    const int bc = static_cast<int>(
                        std::floor((ip.samp + 0.5) * supersample));
                    buf.put(br, bc, z, r * cols + c);
                }
        }
    }
    return buf;
}

}  // namespace

Raster<float> render_view(const Scene& scene, const RpcCamera& cam,
                          const SeasonParams& season, int width, int height) {
    if (width <= 0 || height <= 0)
        throw ArgumentError("render_view: empty output size");
    const Scene seasonal = apply_season_geometry(scene, season);
    const Raster<uint8_t> shadow = cast_shadows(
        seasonal.dsm, season.sun_azimuth_deg, season.sun_elevation_deg);

    const int ss = 2;
    ZBuffer buf = splat_scene(seasonal, cam, width, height, ss);

    const int cols = seasonal.dsm.cols();
    Raster<float> img(width, height, kInvalid);
    bool any = false;
    Rng noise(mix64(season.noise_seed ^ 0x11CEull));
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            double acc = 0.0;
            int n = 0;
            for (int sr = 0; sr < ss; ++sr)
                for (int sc = 0; sc < ss; ++sc) {
                    const size_t i =
                        static_cast<size_t>(r * ss + sr) * buf.width + c * ss + sc;
                    const int32_t src = buf.src[i];
                    if (src < 0) continue;
                    const int cr = src / cols, cc = src % cols;
                    const uint8_t cls = seasonal.classes.at(cr, cc);
                    double v = scene.texture.at(cr, cc) * class_albedo(cls);
                    if (cls == kClassTree) v *= season.tree_albedo_scale;
                    if (shadow.at(cr, cc)) v *= 0.45;
                    acc += v;
                    ++n;
                }
            const double eps = noise.normal(season.noise_sigma);
            if (n > 0) {
                img.at(r, c) = static_cast<float>(std::max(0.0, acc / n + eps));
                any = true;
            }
        }
    }
    if (!any) throw DataError("render_view: camera sees none of the scene");
    return img;
}

ViewTruth render_truth(const Scene& scene, const RpcCamera& cam, int width,
                       int height, const SeasonParams& season) {
    if (width <= 0 || height <= 0)
        throw ArgumentError("render_truth: empty output size");
    const Scene seasonal = apply_season_geometry(scene, season);
    ZBuffer buf = splat_scene(seasonal, cam, width, height, 1);

    const int cols = seasonal.dsm.cols();
    ViewTruth out;
    out.x = Raster<float>(width, height, kInvalid);
    out.y = Raster<float>(width, height, kInvalid);
    out.z = Raster<float>(width, height, kInvalid);
    out.classes = Raster<uint8_t>(width, height, kClassUnlabeled);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            const int32_t src = buf.src[static_cast<size_t>(r) * width + c];
            if (src < 0) continue;
            const int cr = src / cols, cc = src % cols;
            const uint8_t cls = scene.classes.at(cr, cc);
            out.classes.at(r, c) = cls;
            if (cls == kClassWater) continue;  // geometry unmeasurable
            // Anchor xyz to the pixel center at the winning cell's height so
            // the truth projects back onto this exact pixel.
            const float z = seasonal.dsm.z.at(cr, cc);
            WorldPoint w;
            try {
                w = rpc_ground_intersect(
                    cam,
                    ImagePoint{static_cast<double>(r), static_cast<double>(c)},
                    z);
            } catch (const NumericError&) {
                out.classes.at(r, c) = kClassUnlabeled;
                continue;
            }
            out.x.at(r, c) = static_cast<float>(w.x);
            out.y.at(r, c) = static_cast<float>(w.y);
            out.z.at(r, c) = z;
        }
    return out;
}

}  // namespace semstereo
