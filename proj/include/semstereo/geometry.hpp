#pragma once

#include <array>
#include <string>

#include "semstereo/types.hpp"

namespace semstereo {

// 80-coefficient rational polynomial sensor model. Coefficient order is the
// standard 20-term cubic satellite-metadata convention over normalized
// (L = x, P = y, H = z):
//   1, L, P, H, LP, LH, PH, L2, P2, H2,
//   PLH, L3, LP2, LH2, L2P, P3, PH2, L2H, P2H, H3
struct RpcCamera {
    std::array<double, 20> line_num{};
    std::array<double, 20> line_den{};
    std::array<double, 20> samp_num{};
    std::array<double, 20> samp_den{};

    double x_off = 0.0, x_scale = 1.0;     // world planimetric
    double y_off = 0.0, y_scale = 1.0;
    double h_off = 0.0, h_scale = 1.0;     // meters
    double line_off = 0.0, line_scale = 1.0;  // pixels
    double samp_off = 0.0, samp_scale = 1.0;

    double adj_line = 0.0;  // additive pixel offsets from tile alignment
    double adj_samp = 0.0;

    std::string crs_tag;
    double validity_bounds = 1.2;  // normalized-coordinate half-width

    // Throws unless scales are nonzero, denominator constant terms are 1,
    // and neither denominator approaches zero inside the validity box.
    void check() const;
};

// Evaluates the 20 polynomial terms at a normalized point.
std::array<double, 20> rpc_terms(double xn, double yn, double zn);

// 3x4 homogeneous projection (samp, line, 1) ~ P * (x, y, z, 1), stored
// row-major, normalized to unit Frobenius norm with the sign convention
// that the last entry of the third row is positive when nonzero.
struct ProjectiveCamera {
    std::array<double, 12> p{};
    double fitted_residual_px = 0.0;
    bool degenerate = false;  // left 3x3 block rank-deficient

    ImagePoint project(const WorldPoint& w) const;
    void normalize();
};

// Forward RPC projection. When `beyond_bounds` is given it is set when the
// normalized point leaves the validity box (a warning, not an error); points
// beyond twice the box are a hard error.
ImagePoint rpc_project(const RpcCamera& cam, const WorldPoint& p,
                       bool* beyond_bounds = nullptr);

// Inverse projection at fixed height: finds (x, y) with
// rpc_project(cam, {x, y, h}) == ip, by damped Newton iteration on a
// finite-difference 2x2 Jacobian in normalized coordinates.
WorldPoint rpc_ground_intersect(const RpcCamera& cam, const ImagePoint& ip,
                                double h);

// Fits a 3x4 projection matrix to the RPC over a world-box sample grid by
// homogeneous linear least squares, then records the max reprojection error
// over a verification grid at twice the density. Throws when the grid is
// coplanar or when the residual exceeds `residual_ceiling`.
ProjectiveCamera fit_projection_matrix(
    const RpcCamera& cam, const WorldBox& bounds, const GridSpec& grid,
    double residual_ceiling = std::numeric_limits<double>::infinity());

struct TriangulationResult {
    WorldPoint point;
    double residual_px = 0.0;  // max reprojection error in the two images
};

// Linear (algebraic) two-view triangulation.
TriangulationResult triangulate(const ProjectiveCamera& cam_left,
                                const ProjectiveCamera& cam_right,
                                const ImagePoint& ip_left,
                                const ImagePoint& ip_right);

// Convergence angle between the two local view directions at p, each taken
// as the world displacement that keeps a fixed image point fixed while the
// height moves from p.z - delta to p.z + delta.
double intersection_angle_deg(const RpcCamera& cam_a, const RpcCamera& cam_b,
                              const WorldPoint& p, double delta_h = 50.0);

}  // namespace semstereo
