#include "semstereo/rectification.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

namespace semstereo {

std::vector<VirtualCorrespondence> virtual_correspondences(
    const RpcCamera& left, const RpcCamera& right, const WorldBox& bounds,
    const GridSpec& grid) {
    if (grid.nx < 2 || grid.ny < 2)
        throw ArgumentError("virtual_correspondences: grid must span the box");
    if (grid.nz < 2)
        throw DegeneracyError(
            "virtual_correspondences: need at least two heights");
    std::vector<VirtualCorrespondence> out;
    out.reserve(static_cast<size_t>(grid.count()));
    for (int iz = 0; iz < grid.nz; ++iz)
        for (int iy = 0; iy < grid.ny; ++iy)
            for (int ix = 0; ix < grid.nx; ++ix) {
                VirtualCorrespondence vc;
                vc.world = WorldPoint{
                    bounds.x_min + (bounds.x_max - bounds.x_min) * ix / (grid.nx - 1),
                    bounds.y_min + (bounds.y_max - bounds.y_min) * iy / (grid.ny - 1),
                    bounds.z_min + (bounds.z_max - bounds.z_min) * iz / (grid.nz - 1)};
                try {
                    vc.ipL = rpc_project(left, vc.world, nullptr);
                    vc.ipR = rpc_project(right, vc.world, nullptr);
                } catch (const NumericError& e) {
                    std::ostringstream os;
                    os << "virtual_correspondences: grid node (" << ix << ","
                       << iy << "," << iz << ") at (" << vc.world.x << ","
                       << vc.world.y << "," << vc.world.z
                       << ") fails to project: " << e.what();
                    throw NumericError(os.str());
                }
                out.push_back(vc);
            }
    return out;
}

TransformFit fit_rectifying_transforms(
    const std::vector<VirtualCorrespondence>& corrs, int out_rows,
    int out_cols) {
    if (corrs.size() < 8)
        throw ArgumentError(
            "fit_rectifying_transforms: need at least 8 correspondences");
    double z_min = corrs[0].world.z, z_max = corrs[0].world.z;
    for (const auto& c : corrs) {
        z_min = std::min(z_min, c.world.z);
        z_max = std::max(z_max, c.world.z);
    }
    if (z_max - z_min < 1e-9)
        throw DegeneracyError(
            "fit_rectifying_transforms: correspondences at a single height");

    // Epipolar direction: mean image displacement per unit height over the
    // correspondence set (equivalent to displacing a central ground point
    // from z_min to z_max for grid-structured input).
    auto epi_dir = [&](bool use_left) {
        // Least-squares slope of image position against height.
        double sz = 0, szz = 0, su = 0, sv = 0, szu = 0, szv = 0;
        const double n = static_cast<double>(corrs.size());
        for (const auto& c : corrs) {
            const ImagePoint& ip = use_left ? c.ipL : c.ipR;
            sz += c.world.z;
            szz += c.world.z * c.world.z;
            su += ip.samp;
            sv += ip.line;
            szu += c.world.z * ip.samp;
            szv += c.world.z * ip.line;
        }
        const double den = n * szz - sz * sz;
        const double du = (n * szu - sz * su) / den * (z_max - z_min);
        const double dv = (n * szv - sz * sv) / den * (z_max - z_min);
        return std::pair<double, double>(du, dv);
    };
    const auto [ldu, ldv] = epi_dir(true);
    const auto [rdu, rdv] = epi_dir(false);
    if (std::hypot(ldu, ldv) < 1e-9 || std::hypot(rdu, rdv) < 1e-9)
        throw DegeneracyError(
            "fit_rectifying_transforms: zero baseline, no epipolar direction");

    // Stage 2: rotate each image about its correspondence centroid. The
    // direction is a line, not a vector: reduce mod pi so neither image is
    // flipped when the two displacement senses are opposite.
    double lcu = 0, lcv = 0, rcu = 0, rcv = 0;
    for (const auto& c : corrs) {
        lcu += c.ipL.samp;
        lcv += c.ipL.line;
        rcu += c.ipR.samp;
        rcv += c.ipR.line;
    }
    lcu /= corrs.size();
    lcv /= corrs.size();
    rcu /= corrs.size();
    rcv /= corrs.size();
    auto line_angle = [](double dv, double du) {
        double a = std::atan2(dv, du);
        if (a > M_PI / 2) a -= M_PI;
        if (a <= -M_PI / 2) a += M_PI;
        return a;
    };
    const double lang = line_angle(ldv, ldu);
    const double rang = line_angle(rdv, rdu);
    Homography h_left = Homography::rotation_about(-lang, lcu, lcv);
    Homography h_right = Homography::rotation_about(-rang, rcu, rcv);

    // Stage 3: affine row correction on the right, fit on the even half.
    // line_R' = a*line_R + b*samp_R + c == line_L
    Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
    Eigen::Vector3d atb = Eigen::Vector3d::Zero();
    for (size_t i = 0; i < corrs.size(); i += 2) {
        const ImagePoint lp = h_left.apply(corrs[i].ipL);
        const ImagePoint rp = h_right.apply(corrs[i].ipR);
        const Eigen::Vector3d row(rp.line, rp.samp, 1.0);
        ata += row * row.transpose();
        atb += row * lp.line;
    }
    Eigen::FullPivLU<Eigen::Matrix3d> lu(ata);
    if (lu.rank() < 3)
        throw DegeneracyError("fit_rectifying_transforms: rank-deficient row fit");
    const Eigen::Vector3d abc = lu.solve(atb);
    Homography row_fix;
    row_fix.m[0] = 1; row_fix.m[1] = 0; row_fix.m[2] = 0;
    row_fix.m[3] = abc(1); row_fix.m[4] = abc(0); row_fix.m[5] = abc(2);
    row_fix.m[6] = 0; row_fix.m[7] = 0; row_fix.m[8] = 1;
    h_right = h_right.then(row_fix);

    // Common translation: left correspondence centroid to the frame center.
    double cu = 0, cv = 0;
    for (const auto& c : corrs) {
        const ImagePoint lp = h_left.apply(c.ipL);
        cu += lp.samp;
        cv += lp.line;
    }
    cu /= corrs.size();
    cv /= corrs.size();
    const Homography shift = Homography::translation(
        0.5 * (out_cols - 1) - cu, 0.5 * (out_rows - 1) - cv);
    h_left = h_left.then(shift);
    h_right = h_right.then(shift);

    // Column offset: center the disparity range of the fit half at zero.
    double mean_d = 0.0;
    int nfit = 0;
    for (size_t i = 0; i < corrs.size(); i += 2) {
        const ImagePoint lp = h_left.apply(corrs[i].ipL);
        const ImagePoint rp = h_right.apply(corrs[i].ipR);
        mean_d += rp.samp - lp.samp;
        ++nfit;
    }
    mean_d /= nfit;
    h_right = h_right.then(Homography::translation(-mean_d, 0.0));

    TransformFit fit;
    fit.h_left = h_left;
    fit.h_right = h_right;
    double sum_sq = 0.0, worst = 0.0;
    int nheld = 0;
    for (size_t i = 1; i < corrs.size(); i += 2) {
        const ImagePoint lp = h_left.apply(corrs[i].ipL);
        const ImagePoint rp = h_right.apply(corrs[i].ipR);
        const double dy = rp.line - lp.line;
        sum_sq += dy * dy;
        worst = std::max(worst, std::abs(dy));
        ++nheld;
    }
    fit.y_parallax_rms = nheld ? std::sqrt(sum_sq / nheld) : 0.0;
    fit.y_parallax_max = worst;
    return fit;
}

RectifyResult rectify_pair(const RpcCamera& left, const RpcCamera& right,
                           const WorldBox& bounds, int left_width,
                           int left_height, const RectifyOptions& opt) {
    const int out_w = opt.out_width > 0 ? opt.out_width : left_width;
    const int out_h = opt.out_height > 0 ? opt.out_height : left_height;
    const auto corrs = virtual_correspondences(left, right, bounds, opt.grid);
    TransformFit fit = fit_rectifying_transforms(corrs, out_h, out_w);

    // Re-center the right columns so the reference height plane sits at
    // disparity zero (the fit centered the full disparity range instead).
    const double h_ref = std::isnan(opt.reference_height) ? bounds.z_mid()
                                                          : opt.reference_height;
    double mean_d = 0.0;
    int n = 0;
    for (int iy = 0; iy < opt.grid.ny; ++iy)
        for (int ix = 0; ix < opt.grid.nx; ++ix) {
            const WorldPoint w{
                bounds.x_min + (bounds.x_max - bounds.x_min) * ix / (opt.grid.nx - 1),
                bounds.y_min + (bounds.y_max - bounds.y_min) * iy / (opt.grid.ny - 1),
                h_ref};
            const ImagePoint lp = fit.h_left.apply(rpc_project(left, w, nullptr));
            const ImagePoint rp = fit.h_right.apply(rpc_project(right, w, nullptr));
            mean_d += rp.samp - lp.samp;
            ++n;
        }
    mean_d /= n;
    fit.h_right = fit.h_right.then(Homography::translation(-mean_d, 0.0));

    RectifyResult out;
    out.h_left = fit.h_left;
    out.h_right = fit.h_right;
    out.y_parallax_rms = fit.y_parallax_rms;
    out.y_parallax_max = fit.y_parallax_max;
    out.out_width = out_w;
    out.out_height = out_h;
    return out;
}

Raster<float> warp_image(const Raster<float>& src, const Homography& h,
                         int out_width, int out_height) {
    const Homography inv = h.inverse();
    Raster<float> out(out_width, out_height, kInvalid);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < out_height; ++r)
        for (int c = 0; c < out_width; ++c) {
            const ImagePoint s = inv.apply(ImagePoint{static_cast<double>(r),
                                                      static_cast<double>(c)});
            out.at(r, c) = sample_bilinear(src, s.line, s.samp);
        }
    return out;
}

Raster<uint8_t> warp_labels(const Raster<uint8_t>& src, const Homography& h,
                            int out_width, int out_height, uint8_t nodata) {
    const Homography inv = h.inverse();
    Raster<uint8_t> out(out_width, out_height, nodata);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < out_height; ++r)
        for (int c = 0; c < out_width; ++c) {
            const ImagePoint s = inv.apply(ImagePoint{static_cast<double>(r),
                                                      static_cast<double>(c)});
            out.at(r, c) = sample_nearest(src, s.line, s.samp, nodata);
        }
    return out;
}

TruthDisparity make_truth_disparity(const Raster<float>& world_x,
                                    const Raster<float>& world_y,
                                    const Raster<float>& world_z,
                                    const RpcCamera& left,
                                    const RpcCamera& right,
                                    const Homography& h_left,
                                    const Homography& h_right,
                                    int out_width, int out_height) {
    if (!world_x.same_size(world_y) || !world_x.same_size(world_z))
        throw ArgumentError("make_truth_disparity: xyz band size mismatch");
    const Homography left_inv = h_left.inverse();
    TruthDisparity out;
    out.disparity.values = Raster<float>(out_width, out_height, kInvalid);
    out.y_parallax = Raster<float>(out_width, out_height, kInvalid);

#pragma omp parallel for schedule(static)
    for (int r = 0; r < out_height; ++r) {
        for (int c = 0; c < out_width; ++c) {
            const ImagePoint s = left_inv.apply(
                ImagePoint{static_cast<double>(r), static_cast<double>(c)});
            const float x = sample_bilinear(world_x, s.line, s.samp);
            const float y = sample_bilinear(world_y, s.line, s.samp);
            const float z = sample_bilinear(world_z, s.line, s.samp);
            if (!is_valid(x) || !is_valid(y) || !is_valid(z)) continue;
            const WorldPoint w{x, y, z};
            ImagePoint pl, pr;
            try {
                pl = h_left.apply(rpc_project(left, w, nullptr));
                pr = h_right.apply(rpc_project(right, w, nullptr));
            } catch (const NumericError&) {
                continue;  // unprojectable truth marks the pixel invalid
            }
            out.disparity.values.at(r, c) = static_cast<float>(pr.samp - pl.samp);
            out.y_parallax.at(r, c) = static_cast<float>(pr.line - pl.line);
        }
    }
    float d_lo = 0.0f, d_hi = 0.0f;
    bool any = false;
    for (int r = 0; r < out_height; ++r)
        for (int c = 0; c < out_width; ++c) {
            const float d = out.disparity.values.at(r, c);
            if (!is_valid(d)) continue;
            if (!any) { d_lo = d_hi = d; any = true; }
            d_lo = std::min(d_lo, d);
            d_hi = std::max(d_hi, d);
        }
    out.disparity.d_min = static_cast<int>(std::floor(d_lo));
    out.disparity.d_max = static_cast<int>(std::ceil(d_hi));
    return out;
}

}  // namespace semstereo
