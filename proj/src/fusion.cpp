#include "semstereo/fusion.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace semstereo {

namespace {

// median of a scratch buffer; even counts average the two central values
float small_median(std::vector<float>& v) {
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    float m = v[mid];
    if (v.size() % 2 == 0)
        m = 0.5f * (m + *std::max_element(v.begin(), v.begin() + mid));
    return m;
}

// majority class; ties resolve through the fixed priority order
uint8_t modal_class(const std::array<uint32_t, 256>& n) {
    static const uint8_t kPriority[5] = {kClassBuilding, kClassTree,
                                         kClassWater, kClassGround,
                                         kClassUnlabeled};
    uint32_t best = 0;
    for (uint32_t c : n) best = std::max(best, c);
    if (best == 0) return kClassUnlabeled;
    for (uint8_t c : kPriority)
        if (n[c] == best) return c;
    for (int c = 0; c < 256; ++c)
        if (n[static_cast<size_t>(c)] == best) return static_cast<uint8_t>(c);
    return kClassUnlabeled;
}

}  // namespace

PointCloud disparity_to_points(const DisparityMap& disparity,
                               const Raster<uint8_t>& labels,
                               const Homography& h_left,
                               const Homography& h_right,
                               const ProjectiveCamera& cam_left,
                               const ProjectiveCamera& cam_right,
                               double max_residual_px) {
    const int w = disparity.width(), h = disparity.height();
    const bool labeled = !labels.empty();
    if (labeled && (labels.width() != w || labels.height() != h))
        throw ArgumentError("disparity_to_points: label raster size mismatch");
    if (!(max_residual_px > 0.0))
        throw ArgumentError(
            "disparity_to_points: residual gate must be positive");
    // throws when either homography cannot be inverted
    const Homography inv_left = h_left.inverse();
    const Homography inv_right = h_right.inverse();

    std::vector<PointCloud> rows(static_cast<size_t>(std::max(h, 0)));
#pragma omp parallel for schedule(dynamic)
    for (int r = 0; r < h; ++r) {
        PointCloud& out = rows[r];
        for (int c = 0; c < w; ++c) {
            const float d = disparity.values.at(r, c);
            if (!is_valid(d)) continue;
            const ImagePoint rect_l{static_cast<double>(r),
                                    static_cast<double>(c)};
            const ImagePoint rect_r{static_cast<double>(r),
                                    c + static_cast<double>(d)};
            try {
                const TriangulationResult t =
                    triangulate(cam_left, cam_right, inv_left.apply(rect_l),
                                inv_right.apply(rect_r));
                if (!finite(t.point) || t.residual_px > max_residual_px)
                    continue;
                out.points.push_back(t.point);
                if (labeled) out.labels.push_back(labels.at(r, c));
            } catch (const NumericError&) {
                // degenerate ray geometry: drop the pixel
            } catch (const ArgumentError&) {
                // unrectified pixel left the projective plane: drop it
            }
        }
    }

    PointCloud out;
    for (const PointCloud& part : rows) {
        out.points.insert(out.points.end(), part.points.begin(),
                          part.points.end());
        if (labeled)
            out.labels.insert(out.labels.end(), part.labels.begin(),
                              part.labels.end());
    }
    return out;
}

HeightField rasterize_points(const PointCloud& pc, const GridOptions& opt) {
    if (!(opt.cell > 0.0))
        throw ArgumentError("rasterize_points: cell size must be positive");
    const bool labeled = !pc.labels.empty();
    if (labeled && pc.labels.size() != pc.points.size())
        throw ArgumentError("rasterize_points: label count mismatch");

    double x0 = opt.x_min, x1 = opt.x_max;
    double y0 = opt.y_min, y1 = opt.y_max;
    const bool auto_x = std::isnan(x0) || std::isnan(x1);
    const bool auto_y = std::isnan(y0) || std::isnan(y1);
    if ((auto_x || auto_y) && pc.points.empty())
        throw DataError("rasterize_points: no points to take bounds from");
    if (auto_x) {
        x0 = pc.points[0].x;
        x1 = pc.points[0].x;
        for (const WorldPoint& p : pc.points) {
            x0 = std::min(x0, p.x);
            x1 = std::max(x1, p.x);
        }
    }
    if (auto_y) {
        y0 = pc.points[0].y;
        y1 = pc.points[0].y;
        for (const WorldPoint& p : pc.points) {
            y0 = std::min(y0, p.y);
            y1 = std::max(y1, p.y);
        }
    }
    if (!(x1 >= x0) || !(y1 >= y0))
        throw ArgumentError("rasterize_points: inverted bounds");

    const long cols = std::lround((x1 - x0) / opt.cell) + 1;
    const long rows = std::lround((y1 - y0) / opt.cell) + 1;
    if (cols * rows > (1l << 28))
        throw ArgumentError("rasterize_points: grid too large");

    std::vector<std::vector<float>> zs(static_cast<size_t>(cols) * rows);
    std::vector<std::vector<uint8_t>> ls(labeled ? zs.size() : 0);
    for (size_t i = 0; i < pc.points.size(); ++i) {
        const WorldPoint& p = pc.points[i];
        if (!finite(p)) continue;
        const long col = std::lround((p.x - x0) / opt.cell);
        const long row = std::lround((p.y - y0) / opt.cell);
        if (col < 0 || col >= cols || row < 0 || row >= rows) continue;
        const size_t idx = static_cast<size_t>(row) * cols + col;
        zs[idx].push_back(static_cast<float>(p.z));
        if (labeled) ls[idx].push_back(pc.labels[i]);
    }

    HeightField out;
    out.origin_x = x0;
    out.origin_y = y0;
    out.cell = opt.cell;
    out.z = Raster<float>(static_cast<int>(cols), static_cast<int>(rows),
                          kInvalid);
    if (labeled)
        out.classes = Raster<uint8_t>(static_cast<int>(cols),
                                      static_cast<int>(rows),
                                      kClassUnlabeled);
#pragma omp parallel for schedule(dynamic)
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) {
            const size_t idx = static_cast<size_t>(r) * cols + c;
            if (zs[idx].empty()) continue;
            out.z.at(static_cast<int>(r), static_cast<int>(c)) =
                small_median(zs[idx]);
            if (labeled) {
                std::array<uint32_t, 256> cnt{};
                for (uint8_t l : ls[idx]) ++cnt[l];
                out.classes.at(static_cast<int>(r), static_cast<int>(c)) =
                    modal_class(cnt);
            }
        }
    return out;
}

HeightField fuse_height_fields(const std::vector<HeightField>& fields,
                               const FuseOptions& opt) {
    if (fields.empty())
        throw ArgumentError("fuse_height_fields: no input fields");
    if (!(opt.min_valid_fraction > 0.0) || opt.min_valid_fraction > 1.0)
        throw ArgumentError(
            "fuse_height_fields: min_valid_fraction must be in (0, 1]");
    const HeightField& first = fields[0];
    bool any_classes = false;
    for (const HeightField& f : fields) {
        if (!f.same_grid(first))
            throw ArgumentError("fuse_height_fields: grid mismatch");
        if (!f.classes.empty()) {
            if (f.classes.width() != f.z.width() ||
                f.classes.height() != f.z.height())
                throw ArgumentError(
                    "fuse_height_fields: class raster size mismatch");
            any_classes = true;
        }
    }

    const long n = static_cast<long>(fields.size());
    const long support = std::max(
        1l, static_cast<long>(std::ceil(n * opt.min_valid_fraction)));

    HeightField out;
    out.origin_x = first.origin_x;
    out.origin_y = first.origin_y;
    out.cell = first.cell;
    out.z = Raster<float>(first.cols(), first.rows(), kInvalid);
    if (any_classes)
        out.classes =
            Raster<uint8_t>(first.cols(), first.rows(), kClassUnlabeled);

#pragma omp parallel for schedule(static)
    for (int r = 0; r < first.rows(); ++r) {
        std::vector<float> zs;
        zs.reserve(fields.size());
        for (int c = 0; c < first.cols(); ++c) {
            zs.clear();
            std::array<uint32_t, 256> cnt{};
            for (const HeightField& f : fields) {
                const float z = f.z.at(r, c);
                if (!is_valid(z)) continue;
                zs.push_back(z);
                if (!f.classes.empty()) ++cnt[f.classes.at(r, c)];
            }
            if (static_cast<long>(zs.size()) < support) continue;
            out.z.at(r, c) = small_median(zs);
            if (any_classes) out.classes.at(r, c) = modal_class(cnt);
        }
    }
    return out;
}

}  // namespace semstereo
