#include "semstereo/registration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace semstereo {

namespace {

// log2(n) summed over sorted counts: the sum depends only on the count
// multiset, which keeps MI exactly symmetric under argument swap.
double entropy_bits(std::vector<int64_t>& counts, int64_t total) {
    std::sort(counts.begin(), counts.end());
    double acc = 0.0;
    for (int64_t n : counts)
        if (n > 0) acc += static_cast<double>(n) * std::log2(static_cast<double>(n));
    return std::log2(static_cast<double>(total)) - acc / static_cast<double>(total);
}

struct MiScore {
    double mi = -std::numeric_limits<double>::infinity();
    int64_t overlap = 0;
};

// MI between reference(r, c) and moving(r+dy, c+dx) over jointly valid
// pixels. Invalid when the overlap is below min_overlap.
MiScore mi_at_shift(const Raster<float>& reference, const Raster<float>& moving,
                    int dy, int dx, int bins, int min_overlap) {
    const int r0 = std::max(0, -dy);
    const int r1 = std::min(reference.height(), moving.height() - dy);
    const int c0 = std::max(0, -dx);
    const int c1 = std::min(reference.width(), moving.width() - dx);

    MiScore out;
    float a_lo = 0, a_hi = 0, b_lo = 0, b_hi = 0;
    bool first = true;
    for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) {
            const float a = reference.at(r, c);
            const float b = moving.at(r + dy, c + dx);
            if (!is_valid(a) || !is_valid(b)) continue;
            if (first) {
                a_lo = a_hi = a;
                b_lo = b_hi = b;
                first = false;
            }
            a_lo = std::min(a_lo, a);
            a_hi = std::max(a_hi, a);
            b_lo = std::min(b_lo, b);
            b_hi = std::max(b_hi, b);
            ++out.overlap;
        }
    if (out.overlap < min_overlap) return out;

    auto bin_of = [bins](float v, float lo, float hi) {
        if (hi <= lo) return 0;
        const int k = static_cast<int>((static_cast<double>(v) - lo) * bins /
                                       (static_cast<double>(hi) - lo));
        return std::clamp(k, 0, bins - 1);
    };

    std::vector<int64_t> joint(static_cast<size_t>(bins) * bins, 0);
    for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) {
            const float a = reference.at(r, c);
            const float b = moving.at(r + dy, c + dx);
            if (!is_valid(a) || !is_valid(b)) continue;
            ++joint[static_cast<size_t>(bin_of(a, a_lo, a_hi)) * bins +
                    bin_of(b, b_lo, b_hi)];
        }

    std::vector<int64_t> ma(bins, 0), mb(bins, 0), jn;
    jn.reserve(joint.size());
    for (int i = 0; i < bins; ++i)
        for (int j = 0; j < bins; ++j) {
            const int64_t n = joint[static_cast<size_t>(i) * bins + j];
            ma[i] += n;
            mb[j] += n;
            if (n > 0) jn.push_back(n);
        }
    const double hab = entropy_bits(jn, out.overlap);
    const double ha = entropy_bits(ma, out.overlap);
    const double hb = entropy_bits(mb, out.overlap);
    out.mi = std::max(0.0, ha + hb - hab);
    return out;
}

}  // namespace

double mutual_information(const Raster<float>& a, const Raster<float>& b,
                          int bins, int min_overlap) {
    if (!a.same_size(b))
        throw ArgumentError("mutual_information: size mismatch");
    if (bins < 2) throw ArgumentError("mutual_information: need >= 2 bins");
    const MiScore s = mi_at_shift(a, b, 0, 0, bins, min_overlap);
    if (!std::isfinite(s.mi))
        throw DataError("mutual_information: insufficient overlap");
    return s.mi;
}

AlignmentResult align_translation_mi(const Raster<float>& reference,
                                     const Raster<float>& moving, int radius,
                                     int bins, double confidence_floor) {
    if (radius < 1)
        throw ArgumentError("align_translation_mi: radius must be >= 1");
    if (bins < 2) throw ArgumentError("align_translation_mi: need >= 2 bins");

    const int side = 2 * radius + 1;
    std::vector<double> score(static_cast<size_t>(side) * side,
                              -std::numeric_limits<double>::infinity());
#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < side * side; ++k) {
        const int dy = k / side - radius;
        const int dx = k % side - radius;
        score[k] = mi_at_shift(reference, moving, dy, dx, bins, 100).mi;
    }

    // best by score, ties to the smaller shift
    auto rank = [radius, side](int k) {
        const int dy = std::abs(k / side - radius);
        const int dx = std::abs(k % side - radius);
        return (std::max(dy, dx) * 1000 + dy + dx) * 1000 + dy;
    };
    int best = -1;
    for (int k = 0; k < side * side; ++k) {
        if (!std::isfinite(score[k])) continue;
        if (best < 0 || score[k] > score[best] ||
            (score[k] == score[best] && rank(k) < rank(best)))
            best = k;
    }
    if (best < 0)
        throw DataError("align_translation_mi: insufficient overlap everywhere");

    const int bdy = best / side - radius;
    const int bdx = best % side - radius;
    double second = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < side * side; ++k) {
        const int dy = k / side - radius;
        const int dx = k % side - radius;
        if (std::max(std::abs(dy - bdy), std::abs(dx - bdx)) <= 1) continue;
        second = std::max(second, score[k]);
    }

    AlignmentResult out;
    out.mi_score = score[best];
    if (!std::isfinite(second) || second <= 0.0)
        out.confidence = score[best] > 0.0
                             ? std::numeric_limits<double>::infinity()
                             : 0.0;
    else
        out.confidence = score[best] / second;
    if (out.confidence < confidence_floor) {
        out.low_confidence = true;
        return out;  // offsets stay zero
    }
    out.dx = bdx;
    out.dy = bdy;
    return out;
}

void apply_alignment(RpcCamera& cam, const AlignmentResult& a) {
    if (a.low_confidence) return;
    cam.adj_line += a.dy;
    cam.adj_samp += a.dx;
}

Translation3D estimate_3d_translation(const HeightField& reference,
                                      const HeightField& moving,
                                      int radius_cells,
                                      double min_overlap_fraction) {
    if (radius_cells < 0)
        throw ArgumentError("estimate_3d_translation: negative radius");
    if (std::abs(reference.cell - moving.cell) > 1e-9 * reference.cell)
        throw ArgumentError("estimate_3d_translation: cell size mismatch");
    const double cell = reference.cell;
    const double offx = (moving.origin_x - reference.origin_x) / cell;
    const double offy = (moving.origin_y - reference.origin_y) / cell;

    const int side = 2 * radius_cells + 1;

    // residuals (moving minus reference) at one candidate world shift of
    // di/dj cells, paired at the nearest moving cell, in deterministic
    // reference-grid order
    auto residuals_at = [&](int di, int dj) {
        std::vector<double> res;
        for (int rt = 0; rt < reference.rows(); ++rt) {
            const long mr = std::lround(rt + di - offy);
            if (mr < 0 || mr >= moving.rows()) continue;
            for (int ct = 0; ct < reference.cols(); ++ct) {
                const long mc = std::lround(ct + dj - offx);
                if (mc < 0 || mc >= moving.cols()) continue;
                const float zr = reference.z.at(rt, ct);
                const float zm = moving.z.at(static_cast<int>(mr),
                                             static_cast<int>(mc));
                if (!is_valid(zr) || !is_valid(zm)) continue;
                res.push_back(static_cast<double>(zm) - zr);
            }
        }
        return res;
    };

    {
        const std::vector<double> base = residuals_at(0, 0);
        const double need_ref =
            min_overlap_fraction * reference.rows() * reference.cols();
        const double need_mov =
            min_overlap_fraction * moving.rows() * moving.cols();
        if (static_cast<double>(base.size()) < need_ref ||
            static_cast<double>(base.size()) < need_mov)
            throw DataError("estimate_3d_translation: insufficient overlap");
    }

    auto median_of = [](std::vector<double>& v) {
        const size_t mid = v.size() / 2;
        std::nth_element(v.begin(), v.begin() + mid, v.end());
        double m = v[mid];
        if (v.size() % 2 == 0) {
            const double lo = *std::max_element(v.begin(), v.begin() + mid);
            m = 0.5 * (lo + m);
        }
        return m;
    };

    // cost: spread about the median, invariant to any vertical offset
    std::vector<double> cost(static_cast<size_t>(side) * side,
                             std::numeric_limits<double>::infinity());
#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < side * side; ++k) {
        const int di = k / side - radius_cells;
        const int dj = k % side - radius_cells;
        std::vector<double> res = residuals_at(di, dj);
        if (res.size() < 8) continue;
        const double med = median_of(res);
        for (double& r : res) r = std::abs(r - med);
        cost[k] = median_of(res);
    }

    auto rank = [radius_cells, side](int k) {
        const int di = std::abs(k / side - radius_cells);
        const int dj = std::abs(k % side - radius_cells);
        return (std::max(di, dj) * 1000 + di + dj) * 1000 + di;
    };
    int best = -1;
    for (int k = 0; k < side * side; ++k) {
        if (!std::isfinite(cost[k])) continue;
        if (best < 0 || cost[k] < cost[best] ||
            (cost[k] == cost[best] && rank(k) < rank(best)))
            best = k;
    }
    if (best < 0)
        throw DataError("estimate_3d_translation: no candidate had overlap");

    const int di = best / side - radius_cells;
    const int dj = best % side - radius_cells;
    std::vector<double> res = residuals_at(di, dj);
    const double tz = median_of(res);
    int64_t inliers = 0;
    for (double r : res)
        if (std::abs(r - tz) < 1.0) ++inliers;

    Translation3D out;
    out.tx = dj * cell;
    out.ty = di * cell;
    out.tz = tz;
    out.overlap_cells = static_cast<int>(res.size());
    out.inlier_fraction = static_cast<double>(inliers) / res.size();
    return out;
}

}  // namespace semstereo
