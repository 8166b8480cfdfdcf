#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "rigs.hpp"
#include "semstereo/rectification.hpp"
#include "semstereo/synthdata.hpp"

using namespace semstereo;

namespace {

// Exact-affine view of the tile: u = s*(xc . W) + u0, v = s*(yc . W) + v0,
// denominator 1. Tilt about the image row axis keeps yc horizontal in world
// space, so image rows never respond to height.
struct AffineRig {
    RpcCamera rpc;
    int width = 0;
    int height = 0;
};

AffineRig affine_rig(const WorldBox& box, double gsd, double tilt_deg,
                     double tilt_sign, double samp_shift = 0.0) {
    const double t = tilt_deg * M_PI / 180.0;
    const Eigen::Vector3d xc(std::cos(t), 0.0, tilt_sign * std::sin(t));
    const Eigen::Vector3d yc(0.0, 1.0, 0.0);
    const double s = 1.0 / gsd;

    const Eigen::Vector3d ctr(box.x_mid(), box.y_mid(), box.z_mid());
    double umax = 0.0, vmax = 0.0;
    for (int i = 0; i < 8; ++i) {
        const Eigen::Vector3d corner(i & 1 ? box.x_max : box.x_min,
                                     i & 2 ? box.y_max : box.y_min,
                                     i & 4 ? box.z_max : box.z_min);
        umax = std::max(umax, std::abs(s * xc.dot(corner - ctr)));
        vmax = std::max(vmax, std::abs(s * yc.dot(corner - ctr)));
    }
    const int width = 2 * static_cast<int>(std::ceil(umax)) + 9;
    const int height = 2 * static_cast<int>(std::ceil(vmax)) + 9;

    ProjectiveCamera cam;
    for (int i = 0; i < 3; ++i) {
        cam.p[i] = s * xc(i);
        cam.p[4 + i] = s * yc(i);
        cam.p[8 + i] = 0.0;
    }
    cam.p[3] = 0.5 * (width - 1) - s * xc.dot(ctr) - samp_shift;
    cam.p[7] = 0.5 * (height - 1) - s * yc.dot(ctr);
    cam.p[11] = 1.0;

    AffineRig rig;
    rig.width = width;
    rig.height = height;
    rig.rpc = synth_rpc_from_projective(
        cam, normalization_for(box, width, height), 0.0, 1);
    return rig;
}

// Textbook normalized DLT: H minimizing algebraic error of b ~ H a.
Homography fit_homography_dlt(const std::vector<ImagePoint>& a,
                              const std::vector<ImagePoint>& b) {
    REQUIRE(a.size() == b.size());
    REQUIRE(a.size() >= 4);
    auto condition = [](const std::vector<ImagePoint>& pts) {
        double cu = 0, cv = 0;
        for (const auto& p : pts) {
            cu += p.samp;
            cv += p.line;
        }
        cu /= pts.size();
        cv /= pts.size();
        double scale = 0;
        for (const auto& p : pts)
            scale += std::hypot(p.samp - cu, p.line - cv);
        scale = std::sqrt(2.0) * pts.size() / scale;
        Eigen::Matrix3d t;
        t << scale, 0, -scale * cu, 0, scale, -scale * cv, 0, 0, 1;
        return t;
    };
    const Eigen::Matrix3d ta = condition(a);
    const Eigen::Matrix3d tb = condition(b);

    Eigen::MatrixXd m(2 * static_cast<Eigen::Index>(a.size()), 9);
    for (size_t i = 0; i < a.size(); ++i) {
        const Eigen::Vector3d pa = ta * Eigen::Vector3d(a[i].samp, a[i].line, 1);
        const Eigen::Vector3d pb = tb * Eigen::Vector3d(b[i].samp, b[i].line, 1);
        const Eigen::Index r = 2 * static_cast<Eigen::Index>(i);
        m.row(r) << 0, 0, 0, -pa(0), -pa(1), -pa(2), pb(1) * pa(0),
            pb(1) * pa(1), pb(1) * pa(2);
        m.row(r + 1) << pa(0), pa(1), pa(2), 0, 0, 0, -pb(0) * pa(0),
            -pb(0) * pa(1), -pb(0) * pa(2);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinV);
    const Eigen::VectorXd h = svd.matrixV().col(8);
    Eigen::Matrix3d hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    const Eigen::Matrix3d hm = tb.inverse() * hn * ta;
    Homography out;
    for (int i = 0; i < 9; ++i) out.m[i] = hm(i / 3, i % 3);
    out.normalize();
    return out;
}

double affine_det(const Homography& h) {
    return h.m[0] * h.m[4] - h.m[1] * h.m[3];
}

void check_translation_only(const Homography& h, double tol) {
    CHECK(std::abs(h.m[0] - 1.0) < tol);
    CHECK(std::abs(h.m[1]) < tol);
    CHECK(std::abs(h.m[3]) < tol);
    CHECK(std::abs(h.m[4] - 1.0) < tol);
    CHECK(std::abs(h.m[6]) < tol);
    CHECK(std::abs(h.m[7]) < tol);
    CHECK(h.m[8] == doctest::Approx(1.0));
}

}  // namespace

TEST_CASE("virtual correspondence grid count, order, and projections") {
    const WorldBox box = rigs::tile_box();
    const auto left = rigs::make_rpc_rig(box, 0.5, 14.0, 0.0);
    const auto right = rigs::make_rpc_rig(box, 0.5, 14.0, 180.0);

    const auto corrs =
        virtual_correspondences(left.rpc, right.rpc, box, GridSpec{3, 3, 2});
    REQUIRE(corrs.size() == 18);

    // x fastest, then y, then z
    CHECK(corrs[0].world.x == box.x_min);
    CHECK(corrs[0].world.y == box.y_min);
    CHECK(corrs[0].world.z == box.z_min);
    CHECK(corrs[1].world.x == box.x_mid());
    CHECK(corrs[1].world.y == box.y_min);
    CHECK(corrs[3].world.y == box.y_mid());
    CHECK(corrs[9].world.z == box.z_max);
    CHECK(corrs[17].world.x == box.x_max);
    CHECK(corrs[17].world.y == box.y_max);
    CHECK(corrs[17].world.z == box.z_max);

    for (const auto& c : corrs) {
        const ImagePoint pl = rpc_project(left.rpc, c.world, nullptr);
        const ImagePoint pr = rpc_project(right.rpc, c.world, nullptr);
        CHECK(c.ipL.line == pl.line);
        CHECK(c.ipL.samp == pl.samp);
        CHECK(c.ipR.line == pr.line);
        CHECK(c.ipR.samp == pr.samp);
    }

    CHECK_THROWS_AS(
        virtual_correspondences(left.rpc, right.rpc, box, GridSpec{3, 3, 1}),
        DegeneracyError);

    // a box far outside the cameras' fitted region names the offending node
    WorldBox far = box;
    far.x_min += 50000.0;
    far.x_max += 50000.0;
    try {
        virtual_correspondences(left.rpc, right.rpc, far, GridSpec{3, 3, 2});
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("grid node") != std::string::npos);
    }
}

TEST_CASE("degree-1 correspondences over a plane admit an exact homography") {
    const WorldBox box = rigs::tile_box();
    const auto left = rigs::make_rpc_rig(box, 0.5, 16.0, 0.0);
    const auto right = rigs::make_rpc_rig(box, 0.5, 16.0, 180.0);

    std::vector<ImagePoint> pl, pr;
    for (int iy = 0; iy < 6; ++iy)
        for (int ix = 0; ix < 6; ++ix) {
            const WorldPoint w{box.x_min + (box.x_max - box.x_min) * ix / 5.0,
                               box.y_min + (box.y_max - box.y_min) * iy / 5.0,
                               40.0};
            pl.push_back(rpc_project(left.rpc, w, nullptr));
            pr.push_back(rpc_project(right.rpc, w, nullptr));
        }
    const Homography h = fit_homography_dlt(pl, pr);
    double worst = 0.0;
    for (size_t i = 0; i < pl.size(); ++i) {
        const ImagePoint m = h.apply(pl[i]);
        worst = std::max(worst,
                         std::hypot(m.samp - pr[i].samp, m.line - pr[i].line));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("row-aligned affine pair rectifies to pure translations") {
    const WorldBox box = rigs::tile_box();
    const AffineRig left = affine_rig(box, 0.5, 12.0, +1.0);
    const AffineRig right = affine_rig(box, 0.5, 12.0, +1.0, 25.0);

    const auto corrs =
        virtual_correspondences(left.rpc, right.rpc, box, GridSpec{5, 5, 3});
    const auto fit = fit_rectifying_transforms(corrs, left.height, left.width);

    check_translation_only(fit.h_left, 1e-9);
    check_translation_only(fit.h_right, 1e-9);
    CHECK(fit.y_parallax_rms < 1e-9);
    CHECK(fit.y_parallax_max < 1e-9);

    // rows were already aligned, so the two line offsets agree
    CHECK(fit.h_left.m[5] == doctest::Approx(fit.h_right.m[5]).epsilon(1e-12));
}

TEST_CASE("held-out y-parallax stays small on coplanar rigs") {
    const WorldBox box = rigs::tile_box();

    SUBCASE("degree-1, opposite azimuths") {
        const auto left = rigs::make_rpc_rig(box, 0.5, 15.0, 0.0);
        const auto right = rigs::make_rpc_rig(box, 0.5, 15.0, 180.0);
        const auto corrs = virtual_correspondences(left.rpc, right.rpc, box,
                                                   GridSpec{7, 7, 4});
        const auto fit =
            fit_rectifying_transforms(corrs, left.height, left.width);
        CHECK(fit.y_parallax_rms < 0.1);
        CHECK(fit.y_parallax_rms <= fit.y_parallax_max);
        CHECK(std::abs(affine_det(fit.h_left)) > 0.9);
        CHECK(std::abs(affine_det(fit.h_left)) < 1.1);
        CHECK(std::abs(affine_det(fit.h_right)) > 0.9);
        CHECK(std::abs(affine_det(fit.h_right)) < 1.1);
    }

    SUBCASE("degree-1, same azimuth different tilt") {
        const auto left = rigs::make_rpc_rig(box, 0.5, 10.0, 0.0);
        const auto right = rigs::make_rpc_rig(box, 0.5, 25.0, 0.0);
        const auto corrs = virtual_correspondences(left.rpc, right.rpc, box,
                                                   GridSpec{7, 7, 4});
        const auto fit =
            fit_rectifying_transforms(corrs, left.height, left.width);
        CHECK(fit.y_parallax_rms < 0.1);
    }

    SUBCASE("cubic jitter 1e-3") {
        for (uint64_t seed : {11ull, 22ull, 33ull}) {
            const auto left = rigs::make_rpc_rig(box, 0.5, 15.0, 0.0, 1e-3, seed);
            const auto right =
                rigs::make_rpc_rig(box, 0.5, 15.0, 180.0, 1e-3, seed + 100);
            const auto corrs = virtual_correspondences(left.rpc, right.rpc, box,
                                                       GridSpec{7, 7, 4});
            const auto fit =
                fit_rectifying_transforms(corrs, left.height, left.width);
            CHECK(fit.y_parallax_rms < 0.3);
            CHECK(fit.y_parallax_rms <= fit.y_parallax_max);
        }
    }
}

TEST_CASE("degenerate correspondence sets are rejected") {
    const WorldBox box = rigs::tile_box();
    const auto left = rigs::make_rpc_rig(box, 0.5, 14.0, 0.0);
    const auto right = rigs::make_rpc_rig(box, 0.5, 14.0, 180.0);

    SUBCASE("too few correspondences") {
        auto corrs =
            virtual_correspondences(left.rpc, right.rpc, box, GridSpec{2, 2, 2});
        corrs.resize(7);
        CHECK_THROWS_AS(fit_rectifying_transforms(corrs, 512, 512),
                        ArgumentError);
    }

    SUBCASE("single height") {
        std::vector<VirtualCorrespondence> corrs;
        for (int iy = 0; iy < 3; ++iy)
            for (int ix = 0; ix < 3; ++ix) {
                VirtualCorrespondence vc;
                vc.world = WorldPoint{box.x_min + 300.0 * ix,
                                      box.y_min + 300.0 * iy, 50.0};
                vc.ipL = rpc_project(left.rpc, vc.world, nullptr);
                vc.ipR = rpc_project(right.rpc, vc.world, nullptr);
                corrs.push_back(vc);
            }
        CHECK_THROWS_AS(fit_rectifying_transforms(corrs, 512, 512),
                        DegeneracyError);
    }

    SUBCASE("nadir views have no epipolar direction") {
        const auto a = rigs::make_rpc_rig(box, 0.5, 0.0, 0.0);
        const auto b = rigs::make_rpc_rig(box, 0.5, 0.0, 180.0);
        const auto corrs =
            virtual_correspondences(a.rpc, b.rpc, box, GridSpec{5, 5, 3});
        CHECK_THROWS_AS(fit_rectifying_transforms(corrs, 512, 512),
                        DegeneracyError);
    }
}

TEST_CASE("warp by identity and by integer translation is exact") {
    Raster<float> src(40, 30);
    for (int r = 0; r < 30; ++r)
        for (int c = 0; c < 40; ++c)
            src.at(r, c) = static_cast<float>(r * 31 + c);
    src.at(11, 17) = kInvalid;

    SUBCASE("identity") {
        const Raster<float> out = warp_image(src, Homography::identity(), 40, 30);
        for (int r = 0; r < 30; ++r)
            for (int c = 0; c < 40; ++c) {
                if (r == 11 && c == 17)
                    CHECK(!is_valid(out.at(r, c)));
                else
                    CHECK(out.at(r, c) == src.at(r, c));
            }
    }

    SUBCASE("integer translation") {
        const Homography h = Homography::translation(3.0, -2.0);
        const Raster<float> out = warp_image(src, h, 40, 30);
        for (int r = 0; r < 30; ++r)
            for (int c = 0; c < 40; ++c) {
                const int sr = r + 2, sc = c - 3;
                if (sr < 0 || sr >= 30 || sc < 0 || sc >= 40) {
                    CHECK(!is_valid(out.at(r, c)));
                } else if (sr == 11 && sc == 17) {
                    CHECK(!is_valid(out.at(r, c)));
                } else {
                    CHECK(out.at(r, c) == src.at(sr, sc));
                }
            }
    }

    SUBCASE("labels use nearest neighbor") {
        Raster<uint8_t> labels(8, 8, kClassGround);
        labels.at(4, 4) = kClassBuilding;
        const Homography h = Homography::translation(0.4, 0.0);
        const Raster<uint8_t> out = warp_labels(labels, h, 8, 8);
        CHECK(out.at(4, 4) == kClassBuilding);  // 3.6 rounds back to 4
        CHECK(out.at(4, 5) == kClassGround);    // 4.6 rounds to 5
        // pixels mapping outside get the nodata class
        const Raster<uint8_t> shifted =
            warp_labels(labels, Homography::translation(7.0, 0.0), 8, 8);
        CHECK(shifted.at(0, 0) == kClassUnlabeled);
    }
}

TEST_CASE("warp round trip is bounded by interpolation error") {
    const int n = 200;
    Raster<float> src(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            src.at(r, c) = std::round(
                100.0 + 50.0 * std::sin(2 * M_PI * c / 64.0) +
                50.0 * std::sin(2 * M_PI * (r + 0.3 * c) / 64.0));

    const Homography h = Homography::rotation_about(7.0 * M_PI / 180.0, 100, 100)
                             .then(Homography::translation(2.3, -1.7));
    const Raster<float> once = warp_image(src, h, n, n);
    const Raster<float> back = warp_image(once, h.inverse(), n, n);

    double worst = 0.0;
    int counted = 0;
    for (int r = 30; r < n - 30; ++r)
        for (int c = 30; c < n - 30; ++c) {
            if (!is_valid(back.at(r, c))) continue;
            worst = std::max(worst,
                             std::abs(double(back.at(r, c)) - src.at(r, c)));
            ++counted;
        }
    CHECK(counted > 10000);
    CHECK(worst < 2.0);  // quantization step is 1.0
}

TEST_CASE("planar scene at the reference height maps to constant disparity") {
    const WorldBox box = rigs::tile_box();
    const AffineRig left = affine_rig(box, 0.5, 12.0, +1.0);
    const AffineRig right = affine_rig(box, 0.5, 12.0, -1.0);

    RectifyOptions opt;
    opt.reference_height = 60.0;
    const RectifyResult rr =
        rectify_pair(left.rpc, right.rpc, box, left.width, left.height, opt);

    double dmin = 1e300, dmax = -1e300;
    for (int iy = 0; iy <= 16; ++iy)
        for (int ix = 0; ix <= 16; ++ix) {
            const WorldPoint w{box.x_min + (box.x_max - box.x_min) * ix / 16.0,
                               box.y_min + (box.y_max - box.y_min) * iy / 16.0,
                               60.0};
            const ImagePoint pl = rr.h_left.apply(rpc_project(left.rpc, w, nullptr));
            const ImagePoint pr =
                rr.h_right.apply(rpc_project(right.rpc, w, nullptr));
            const double d = pr.samp - pl.samp;
            dmin = std::min(dmin, d);
            dmax = std::max(dmax, d);
        }
    CHECK(dmax - dmin < 1e-3);
    CHECK(std::abs(dmin) < 0.5);  // centered near zero at the reference plane

    // disparity responds monotonically to height at a fixed ground location
    double prev = 0.0;
    bool first = true;
    bool increasing = false;
    for (int k = 0; k <= 10; ++k) {
        const WorldPoint w{box.x_mid(), box.y_mid(), 12.0 * k};
        const ImagePoint pl = rr.h_left.apply(rpc_project(left.rpc, w, nullptr));
        const ImagePoint pr = rr.h_right.apply(rpc_project(right.rpc, w, nullptr));
        const double d = pr.samp - pl.samp;
        if (!first) {
            if (k == 1) increasing = d > prev;
            CHECK((d > prev) == increasing);
            CHECK(std::abs(d - prev) > 1e-6);
        }
        prev = d;
        first = false;
    }
}

TEST_CASE("truth disparity is self-consistent on a rendered scene") {
    const double gsd = 0.5;
    Scene scene = gen_scene(42, 160, SceneTargets{}, gsd);
    WorldBox box{0, 160 * gsd, 0, 160 * gsd, 0, 0};
    float zlo = 1e30f, zhi = -1e30f;
    for (int r = 0; r < scene.dsm.rows(); ++r)
        for (int c = 0; c < scene.dsm.cols(); ++c) {
            zlo = std::min(zlo, scene.dsm.z.at(r, c));
            zhi = std::max(zhi, scene.dsm.z.at(r, c));
        }
    box.z_min = zlo - 1;
    box.z_max = zhi + 1;

    const auto left = rigs::make_rpc_rig(box, gsd, 12.0, 0.0);
    const auto right = rigs::make_rpc_rig(box, gsd, 12.0, 180.0);
    const ViewTruth truth = render_truth(scene, left.rpc, left.width, left.height);
    const RectifyResult rr =
        rectify_pair(left.rpc, right.rpc, box, left.width, left.height);
    const TruthDisparity td = make_truth_disparity(
        truth.x, truth.y, truth.z, left.rpc, right.rpc, rr.h_left, rr.h_right,
        rr.out_width, rr.out_height);

    CHECK(td.disparity.values.same_size(td.y_parallax));
    CHECK(td.disparity.d_min <= td.disparity.d_max);

    const Homography linv = rr.h_left.inverse();
    double worst = 0.0, ymax = 0.0;
    int nval = 0;
    for (int r = 0; r < rr.out_height; ++r)
        for (int c = 0; c < rr.out_width; ++c) {
            const float d = td.disparity.values.at(r, c);
            if (!is_valid(d)) continue;
            ++nval;
            const ImagePoint s = linv.apply(
                ImagePoint{static_cast<double>(r), static_cast<double>(c)});
            const WorldPoint w{sample_bilinear(truth.x, s.line, s.samp),
                               sample_bilinear(truth.y, s.line, s.samp),
                               sample_bilinear(truth.z, s.line, s.samp)};
            const ImagePoint pr =
                rr.h_right.apply(rpc_project(right.rpc, w, nullptr));
            worst = std::max(worst, std::abs(pr.samp - (c + d)));
            worst = std::max(worst, std::abs(pr.line - r));
            ymax = std::max(ymax, std::abs(double(td.y_parallax.at(r, c))));
        }

    CHECK(nval > static_cast<int>(0.4 * rr.out_width * rr.out_height));
    CHECK(worst <= 0.25);
    CHECK(ymax <= 5.0 * rr.y_parallax_rms);  // no extrapolation blow-up
}

TEST_CASE("truth disparity marks missing xyz invalid") {
    const WorldBox box = rigs::tile_box(64.0, 0.0, 40.0);
    const auto left = rigs::make_rpc_rig(box, 0.5, 10.0, 0.0);
    const auto right = rigs::make_rpc_rig(box, 0.5, 10.0, 180.0);

    // analytic flat-plane truth anchored to left pixels, with a hole
    Raster<float> wx(left.width, left.height), wy(left.width, left.height),
        wz(left.width, left.height);
    for (int r = 0; r < left.height; ++r)
        for (int c = 0; c < left.width; ++c) {
            const WorldPoint w = rpc_ground_intersect(
                left.rpc,
                ImagePoint{static_cast<double>(r), static_cast<double>(c)},
                20.0);
            wx.at(r, c) = static_cast<float>(w.x);
            wy.at(r, c) = static_cast<float>(w.y);
            wz.at(r, c) = 20.0f;
        }
    const int hr = left.height / 2, hc = left.width / 2;
    wx.at(hr, hc) = kInvalid;
    wy.at(hr, hc) = kInvalid;
    wz.at(hr, hc) = kInvalid;

    const RectifyResult rr =
        rectify_pair(left.rpc, right.rpc, box, left.width, left.height);
    const TruthDisparity td =
        make_truth_disparity(wx, wy, wz, left.rpc, right.rpc, rr.h_left,
                             rr.h_right, rr.out_width, rr.out_height);

    // pixels whose bilinear stencil touches the hole are invalid
    const ImagePoint centre =
        rr.h_left.apply(ImagePoint{static_cast<double>(hr), static_cast<double>(hc)});
    const int cr = static_cast<int>(std::lround(centre.line));
    const int cc = static_cast<int>(std::lround(centre.samp));
    CHECK(!is_valid(td.disparity.values.at(cr, cc)));
    CHECK(is_valid(td.disparity.values.at(cr, cc + 8)));
    CHECK(is_valid(td.disparity.values.at(cr + 8, cc)));
}
