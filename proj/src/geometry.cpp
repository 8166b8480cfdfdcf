#include "semstereo/geometry.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

namespace semstereo {

namespace {

double eval_poly20(const std::array<double, 20>& c, const std::array<double, 20>& t) {
    double s = 0.0;
    for (int i = 0; i < 20; ++i) s += c[i] * t[i];
    return s;
}

struct NormalizedImage {
    double line;  // (line - line_off) / line_scale, before adj offsets
    double samp;
};

// Rational evaluation in fully normalized coordinates; throws only on poles.
NormalizedImage eval_normalized(const RpcCamera& cam, double xn, double yn,
                                double zn) {
    const auto t = rpc_terms(xn, yn, zn);
    const double lden = eval_poly20(cam.line_den, t);
    const double sden = eval_poly20(cam.samp_den, t);
    if (std::abs(lden) < 1e-12 || std::abs(sden) < 1e-12)
        throw NumericError("rpc denominator pole");
    return {eval_poly20(cam.line_num, t) / lden,
            eval_poly20(cam.samp_num, t) / sden};
}

}  // namespace

std::array<double, 20> rpc_terms(double xn, double yn, double zn) {
    const double L = xn, P = yn, H = zn;
    return {1.0,
            L,
            P,
            H,
            L * P,
            L * H,
            P * H,
            L * L,
            P * P,
            H * H,
            P * L * H,
            L * L * L,
            L * P * P,
            L * H * H,
            L * L * P,
            P * P * P,
            P * H * H,
            L * L * H,
            P * P * H,
            H * H * H};
}

void RpcCamera::check() const {
    if (x_scale == 0 || y_scale == 0 || h_scale == 0 || line_scale == 0 ||
        samp_scale == 0)
        throw ArgumentError("rpc scale values must be nonzero");
    if (line_den[0] != 1.0 || samp_den[0] != 1.0)
        throw ArgumentError("rpc denominator constant term must be 1");
    const double b = validity_bounds;
    const int n = 9;
    for (int iz = 0; iz < n; ++iz)
        for (int iy = 0; iy < n; ++iy)
            for (int ix = 0; ix < n; ++ix) {
                const double xn = -b + 2 * b * ix / (n - 1);
                const double yn = -b + 2 * b * iy / (n - 1);
                const double zn = -b + 2 * b * iz / (n - 1);
                // Both denominators are 1 at the center; a non-positive or
                // near-zero sample means a pole sits inside (or between
                // samples of) the validity box.
                const auto t = rpc_terms(xn, yn, zn);
                if (eval_poly20(line_den, t) <= 1e-6 ||
                    eval_poly20(samp_den, t) <= 1e-6)
                    throw NumericError("rpc denominator vanishes inside the validity box");
            }
}

ImagePoint rpc_project(const RpcCamera& cam, const WorldPoint& p,
                       bool* beyond_bounds) {
    if (!finite(p)) throw ArgumentError("rpc_project: non-finite world point");
    const double xn = (p.x - cam.x_off) / cam.x_scale;
    const double yn = (p.y - cam.y_off) / cam.y_scale;
    const double zn = (p.z - cam.h_off) / cam.h_scale;
    const double b = cam.validity_bounds;
    const double m = std::max({std::abs(xn), std::abs(yn), std::abs(zn)});
    if (beyond_bounds) *beyond_bounds = m > b;
    if (m > 2 * b) {
        std::ostringstream os;
        os << "rpc_project: point at " << m << "x the normalization scale, "
           << "beyond twice the validity bounds";
        throw NumericError(os.str());
    }
    const auto ni = eval_normalized(cam, xn, yn, zn);
    return ImagePoint{ni.line * cam.line_scale + cam.line_off + cam.adj_line,
                      ni.samp * cam.samp_scale + cam.samp_off + cam.adj_samp};
}

WorldPoint rpc_ground_intersect(const RpcCamera& cam, const ImagePoint& ip,
                                double h) {
    if (!finite(ip) || !std::isfinite(h))
        throw ArgumentError("rpc_ground_intersect: non-finite input");
    const double zn = (h - cam.h_off) / cam.h_scale;
    const double tl = (ip.line - cam.adj_line - cam.line_off) / cam.line_scale;
    const double ts = (ip.samp - cam.adj_samp - cam.samp_off) / cam.samp_scale;

    double xn = 0.0, yn = 0.0;
    const double step = 1e-6;
    double res = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 50; ++it) {
        const auto f = eval_normalized(cam, xn, yn, zn);
        const double fl = f.line - tl;
        const double fs = f.samp - ts;
        res = std::max(std::abs(fl), std::abs(fs));
        if (res < 1e-10) {
            const double x = xn * cam.x_scale + cam.x_off;
            const double y = yn * cam.y_scale + cam.y_off;
            const double m = std::max(std::abs(xn), std::abs(yn));
            if (m > 2 * cam.validity_bounds)
                throw NumericError(
                    "rpc_ground_intersect: solution beyond twice the validity bounds");
            return WorldPoint{x, y, h};
        }
        const auto fxp = eval_normalized(cam, xn + step, yn, zn);
        const auto fxm = eval_normalized(cam, xn - step, yn, zn);
        const auto fyp = eval_normalized(cam, xn, yn + step, zn);
        const auto fym = eval_normalized(cam, xn, yn - step, zn);
        const double j00 = (fxp.line - fxm.line) / (2 * step);
        const double j01 = (fyp.line - fym.line) / (2 * step);
        const double j10 = (fxp.samp - fxm.samp) / (2 * step);
        const double j11 = (fyp.samp - fym.samp) / (2 * step);
        const double det = j00 * j11 - j01 * j10;
        if (std::abs(det) < 1e-15)
            throw DegeneracyError("rpc_ground_intersect: singular jacobian");
        double dx = -(j11 * fl - j01 * fs) / det;
        double dy = -(-j10 * fl + j00 * fs) / det;

        // Damping: halve the step until the residual drops.
        double scale = 1.0;
        for (int k = 0; k < 12; ++k) {
            const auto g =
                eval_normalized(cam, xn + scale * dx, yn + scale * dy, zn);
            const double r = std::max(std::abs(g.line - tl), std::abs(g.samp - ts));
            if (r < res) break;
            scale *= 0.5;
        }
        xn += scale * dx;
        yn += scale * dy;
        if (std::max(std::abs(xn), std::abs(yn)) > 4 * cam.validity_bounds)
            throw NumericError(
                "rpc_ground_intersect: iterate diverged out of the search region");
    }
    std::ostringstream os;
    os << "rpc_ground_intersect: no convergence, residual " << res
       << " (normalized)";
    throw NumericError(os.str());
}

ImagePoint ProjectiveCamera::project(const WorldPoint& w) const {
    const double u = p[0] * w.x + p[1] * w.y + p[2] * w.z + p[3];
    const double v = p[4] * w.x + p[5] * w.y + p[6] * w.z + p[7];
    const double s = p[8] * w.x + p[9] * w.y + p[10] * w.z + p[11];
    if (std::abs(s) < 1e-300)
        throw NumericError("projective camera: point on the principal plane");
    return ImagePoint{v / s, u / s};
}

void ProjectiveCamera::normalize() {
    double norm = 0.0;
    for (double v : p) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw NumericError("projection matrix is zero");
    double sign = 1.0;
    if (p[11] != 0.0) {
        sign = p[11] > 0 ? 1.0 : -1.0;
    } else {
        for (int i = 11; i >= 8; --i)
            if (p[i] != 0.0) {
                sign = p[i] > 0 ? 1.0 : -1.0;
                break;
            }
    }
    for (double& v : p) v /= sign * norm;
}

ProjectiveCamera fit_projection_matrix(const RpcCamera& cam,
                                       const WorldBox& bounds,
                                       const GridSpec& grid,
                                       double residual_ceiling) {
    if (grid.count() < 6)
        throw ArgumentError("fit_projection_matrix: need at least 6 grid nodes");
    if (grid.nx < 2 || grid.ny < 2 || grid.nz < 2)
        throw DegeneracyError("fit_projection_matrix: coplanar grid");

    auto nodes = [&](int nx, int ny, int nz) {
        std::vector<WorldPoint> out;
        out.reserve(static_cast<size_t>(nx) * ny * nz);
        for (int iz = 0; iz < nz; ++iz)
            for (int iy = 0; iy < ny; ++iy)
                for (int ix = 0; ix < nx; ++ix)
                    out.push_back(WorldPoint{
                        bounds.x_min + (bounds.x_max - bounds.x_min) * ix / (nx - 1),
                        bounds.y_min + (bounds.y_max - bounds.y_min) * iy / (ny - 1),
                        bounds.z_min + (bounds.z_max - bounds.z_min) * iz / (nz - 1)});
        return out;
    };

    const auto fit_points = nodes(grid.nx, grid.ny, grid.nz);
    std::vector<ImagePoint> fit_pix(fit_points.size());
    for (size_t i = 0; i < fit_points.size(); ++i)
        fit_pix[i] = rpc_project(cam, fit_points[i], nullptr);

    // Hartley-style conditioning of both sides.
    double cu = 0, cv = 0, cx = 0, cy = 0, cz = 0;
    for (size_t i = 0; i < fit_points.size(); ++i) {
        cu += fit_pix[i].samp;
        cv += fit_pix[i].line;
        cx += fit_points[i].x;
        cy += fit_points[i].y;
        cz += fit_points[i].z;
    }
    const double n = static_cast<double>(fit_points.size());
    cu /= n; cv /= n; cx /= n; cy /= n; cz /= n;
    double su = 0, sx = 0;
    for (size_t i = 0; i < fit_points.size(); ++i) {
        su += std::hypot(fit_pix[i].samp - cu, fit_pix[i].line - cv);
        sx += std::sqrt((fit_points[i].x - cx) * (fit_points[i].x - cx) +
                        (fit_points[i].y - cy) * (fit_points[i].y - cy) +
                        (fit_points[i].z - cz) * (fit_points[i].z - cz));
    }
    su /= n; sx /= n;
    const double ku = su > 0 ? std::sqrt(2.0) / su : 1.0;
    const double kx = sx > 0 ? std::sqrt(3.0) / sx : 1.0;

    Eigen::MatrixXd a(2 * fit_points.size(), 12);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(fit_points.size()); ++i) {
        const double u = (fit_pix[i].samp - cu) * ku;
        const double v = (fit_pix[i].line - cv) * ku;
        const Eigen::Vector4d X((fit_points[i].x - cx) * kx,
                                (fit_points[i].y - cy) * kx,
                                (fit_points[i].z - cz) * kx, 1.0);
        a.block<1, 4>(2 * i, 0) = X.transpose();
        a.block<1, 4>(2 * i, 4).setZero();
        a.block<1, 4>(2 * i, 8) = -u * X.transpose();
        a.block<1, 4>(2 * i + 1, 0).setZero();
        a.block<1, 4>(2 * i + 1, 4) = X.transpose();
        a.block<1, 4>(2 * i + 1, 8) = -v * X.transpose();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
    if (svd.rank() < 11)
        throw DegeneracyError("fit_projection_matrix: rank-deficient system");
    const Eigen::VectorXd pvec = svd.matrixV().col(11);

    // Undo the conditioning: P = Tuv^-1 * Pn * Txyz.
    Eigen::Matrix3d tuv_inv;
    tuv_inv << 1.0 / ku, 0, cu, 0, 1.0 / ku, cv, 0, 0, 1;
    Eigen::Matrix4d txyz;
    txyz << kx, 0, 0, -kx * cx, 0, kx, 0, -kx * cy, 0, 0, kx, -kx * cz, 0, 0, 0, 1;
    Eigen::Matrix<double, 3, 4> pn;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) pn(r, c) = pvec(4 * r + c);
    const Eigen::Matrix<double, 3, 4> pm = tuv_inv * pn * txyz;

    ProjectiveCamera out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) out.p[4 * r + c] = pm(r, c);
    out.normalize();

    Eigen::Matrix3d m3;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m3(r, c) = out.p[4 * r + c];
    out.degenerate =
        Eigen::FullPivLU<Eigen::Matrix3d>(m3).rank() < 3;

    const auto check_points = nodes(2 * grid.nx, 2 * grid.ny, 2 * grid.nz);
    double worst = 0.0;
    for (const auto& w : check_points) {
        const ImagePoint truth = rpc_project(cam, w, nullptr);
        const ImagePoint got = out.project(w);
        worst = std::max(worst, std::hypot(truth.samp - got.samp,
                                           truth.line - got.line));
    }
    out.fitted_residual_px = worst;
    if (worst > residual_ceiling) {
        std::ostringstream os;
        os << "fit_projection_matrix: residual " << worst
           << " px above the ceiling " << residual_ceiling;
        throw NumericError(os.str());
    }
    return out;
}

TriangulationResult triangulate(const ProjectiveCamera& cam_left,
                                const ProjectiveCamera& cam_right,
                                const ImagePoint& ip_left,
                                const ImagePoint& ip_right) {
    if (!finite(ip_left) || !finite(ip_right))
        throw ArgumentError("triangulate: non-finite image point");
    bool identical = true;
    for (int i = 0; i < 12; ++i)
        if (cam_left.p[i] != cam_right.p[i]) { identical = false; break; }
    if (identical) throw DegeneracyError("triangulate: identical cameras");

    // Ray directions through the pixels, for the angle test.
    auto ray = [](const ProjectiveCamera& cam, const ImagePoint& ip) {
        Eigen::Matrix3d m;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) m(r, c) = cam.p[4 * r + c];
        Eigen::FullPivLU<Eigen::Matrix3d> lu(m);
        if (lu.rank() < 3)
            throw DegeneracyError("triangulate: camera at infinity");
        Eigen::Vector3d d = lu.solve(Eigen::Vector3d(ip.samp, ip.line, 1.0));
        return d.normalized();
    };
    const Eigen::Vector3d dl = ray(cam_left, ip_left);
    const Eigen::Vector3d dr = ray(cam_right, ip_right);
    const double cosang = std::clamp(std::abs(dl.dot(dr)), 0.0, 1.0);
    const double angle_deg = std::acos(cosang) * 180.0 / M_PI;
    if (angle_deg < 0.05)
        throw DegeneracyError("triangulate: rays nearly parallel");

    Eigen::Matrix4d a;
    auto rows = [&](const ProjectiveCamera& cam, const ImagePoint& ip, int base) {
        for (int c = 0; c < 4; ++c) {
            a(base, c) = ip.samp * cam.p[8 + c] - cam.p[0 + c];
            a(base + 1, c) = ip.line * cam.p[8 + c] - cam.p[4 + c];
        }
    };
    rows(cam_left, ip_left, 0);
    rows(cam_right, ip_right, 2);
    Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
    Eigen::Vector4d x = svd.matrixV().col(3);
    if (std::abs(x(3)) < 1e-14 * x.norm())
        throw DegeneracyError("triangulate: point at infinity");
    TriangulationResult out;
    out.point = WorldPoint{x(0) / x(3), x(1) / x(3), x(2) / x(3)};
    const ImagePoint rl = cam_left.project(out.point);
    const ImagePoint rr = cam_right.project(out.point);
    out.residual_px = std::max(
        std::hypot(rl.samp - ip_left.samp, rl.line - ip_left.line),
        std::hypot(rr.samp - ip_right.samp, rr.line - ip_right.line));
    return out;
}

double intersection_angle_deg(const RpcCamera& cam_a, const RpcCamera& cam_b,
                              const WorldPoint& p, double delta_h) {
    auto view_dir = [&](const RpcCamera& cam) {
        const ImagePoint ip = rpc_project(cam, p, nullptr);
        const WorldPoint lo = rpc_ground_intersect(cam, ip, p.z - delta_h);
        const WorldPoint hi = rpc_ground_intersect(cam, ip, p.z + delta_h);
        Eigen::Vector3d d(hi.x - lo.x, hi.y - lo.y, hi.z - lo.z);
        return d.normalized();
    };
    const Eigen::Vector3d da = view_dir(cam_a);
    const Eigen::Vector3d db = view_dir(cam_b);
    const double c = std::clamp(std::abs(da.dot(db)), 0.0, 1.0);
    return std::acos(c) * 180.0 / M_PI;
}

}  // namespace semstereo
