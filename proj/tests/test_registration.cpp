#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "semstereo/registration.hpp"

using namespace semstereo;

namespace {

// Textured raster with two incommensurate waves plus a radial term, enough
// structure that every integer shift is distinguishable.
Raster<float> textured(int w, int h, uint32_t seed) {
    Raster<float> out(w, h);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> noise(-3.0, 3.0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double radial = std::hypot(r - 0.37 * h, c - 0.61 * w);
            out.at(r, c) = static_cast<float>(
                100.0 + 40.0 * std::sin(2.0 * M_PI * c / 16.0) +
                30.0 * std::cos(2.0 * M_PI * r / 11.3) + 0.25 * radial +
                noise(rng));
        }
    return out;
}

Raster<float> uniform_noise(int w, int h, uint32_t seed) {
    Raster<float> out(w, h);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 255.0f);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) out.at(r, c) = u(rng);
    return out;
}

// moving(r, c) = src(r - dy, c - dx), invalid where the source is out of
// range, so the best alignment of (src, moving) is exactly (dx, dy).
Raster<float> shifted(const Raster<float>& src, int dy, int dx) {
    Raster<float> out(src.width(), src.height(), kInvalid);
    for (int r = 0; r < src.height(); ++r)
        for (int c = 0; c < src.width(); ++c) {
            const int sr = r - dy;
            const int sc = c - dx;
            if (sr < 0 || sr >= src.height() || sc < 0 || sc >= src.width())
                continue;
            out.at(r, c) = src.at(sr, sc);
        }
    return out;
}

// The binning rule mutual_information documents: uniform over each raster's
// own range on the jointly valid set, top edge clamped into the last bin.
std::vector<int> bin_jointly_valid(const Raster<float>& a,
                                   const Raster<float>& b, int bins,
                                   bool take_a) {
    float lo = 0, hi = 0;
    bool first = true;
    for (int r = 0; r < a.height(); ++r)
        for (int c = 0; c < a.width(); ++c) {
            if (!is_valid(a.at(r, c)) || !is_valid(b.at(r, c))) continue;
            const float v = take_a ? a.at(r, c) : b.at(r, c);
            if (first) {
                lo = hi = v;
                first = false;
            }
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    std::vector<int> out;
    for (int r = 0; r < a.height(); ++r)
        for (int c = 0; c < a.width(); ++c) {
            if (!is_valid(a.at(r, c)) || !is_valid(b.at(r, c))) continue;
            const float v = take_a ? a.at(r, c) : b.at(r, c);
            if (hi <= lo) {
                out.push_back(0);
                continue;
            }
            const int k = static_cast<int>(
                (static_cast<double>(v) - lo) * bins /
                (static_cast<double>(hi) - lo));
            out.push_back(std::clamp(k, 0, bins - 1));
        }
    return out;
}

// Marginal entropy in bits with the same summation as the implementation:
// sorted counts, H = log2(N) - sum n*log2(n) / N.
double entropy_of_bins(const std::vector<int>& binned, int bins) {
    std::vector<int64_t> counts(bins, 0);
    for (int k : binned) ++counts[k];
    std::sort(counts.begin(), counts.end());
    double acc = 0.0;
    for (int64_t n : counts)
        if (n > 0)
            acc += static_cast<double>(n) * std::log2(static_cast<double>(n));
    const double total = static_cast<double>(binned.size());
    return std::log2(total) - acc / total;
}

HeightField make_field(int rows, int cols, double ox, double oy, double cell,
                       uint32_t seed) {
    HeightField f;
    f.origin_x = ox;
    f.origin_y = oy;
    f.cell = cell;
    f.z = Raster<float>(cols, rows);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> n(-0.5, 0.5);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double x = f.x_of(c);
            const double y = f.y_of(r);
            f.z.at(r, c) = static_cast<float>(
                20.0 + 6.0 * std::sin(0.21 * x) + 5.0 * std::cos(0.17 * y) +
                0.03 * x * y / (1.0 + 0.01 * std::abs(x)) + n(rng));
        }
    return f;
}

}  // namespace

TEST_CASE("mutual information matches the histogram oracle") {
    Raster<float> a = textured(96, 80, 7);
    Raster<float> b(96, 80);
    std::mt19937 rng(8);
    std::uniform_real_distribution<double> noise(-10.0, 10.0);
    for (int r = 0; r < 80; ++r)
        for (int c = 0; c < 96; ++c)
            b.at(r, c) = static_cast<float>(0.5 * a.at(r, c) + noise(rng));

    // punch invalid holes in both, in different places
    for (int k = 0; k < 200; ++k) {
        a.at((k * 37) % 80, (k * 53) % 96) = kInvalid;
        b.at((k * 41) % 80, (k * 29) % 96) = kInvalid;
    }

    for (int bins : {16, 64}) {
        const std::vector<int> ba = bin_jointly_valid(a, b, bins, true);
        const std::vector<int> bb = bin_jointly_valid(a, b, bins, false);
        const double want = oracles::mi_naive(ba, bb, bins);
        const double got = mutual_information(a, b, bins);
        CHECK(got == doctest::Approx(want).epsilon(1e-9));
        CHECK(got > 0.5);  // strongly correlated inputs
    }
}

TEST_CASE("mutual information identities") {
    Raster<float> a = textured(64, 64, 3);

    SUBCASE("self MI equals the marginal entropy exactly") {
        const std::vector<int> ba = bin_jointly_valid(a, a, 64, true);
        const double h = entropy_of_bins(ba, 64);
        CHECK(mutual_information(a, a, 64) == h);
    }

    SUBCASE("constant raster carries zero information") {
        Raster<float> c(64, 64, 42.0f);
        CHECK(mutual_information(c, a, 64) == 0.0);
        CHECK(mutual_information(a, c, 64) == 0.0);
        CHECK(mutual_information(c, c, 64) == 0.0);
    }

    SUBCASE("exactly symmetric in its arguments") {
        for (uint32_t seed : {11u, 12u, 13u}) {
            Raster<float> u = uniform_noise(64, 64, seed);
            Raster<float> v = uniform_noise(64, 64, seed + 100);
            // correlate them a little and add holes
            for (int r = 0; r < 64; ++r)
                for (int c = 0; c < 64; ++c)
                    v.at(r, c) = 0.7f * v.at(r, c) + 0.3f * u.at(r, c);
            u.at(5, 9) = kInvalid;
            v.at(40, 2) = kInvalid;
            CHECK(mutual_information(u, v, 32) ==
                  mutual_information(v, u, 32));
        }
    }

    SUBCASE("invariant under monotone integer relabeling") {
        // integer-valued raster, values 0..63: scaling by 2 or adding 1000
        // maps to the identical binning
        Raster<float> g(64, 48);
        std::mt19937 rng(21);
        std::uniform_int_distribution<int> u(0, 63);
        for (int r = 0; r < 48; ++r)
            for (int c = 0; c < 64; ++c)
                g.at(r, c) = static_cast<float>(u(rng));
        Raster<float> h = uniform_noise(64, 48, 22);
        const double base = mutual_information(g, h, 64);

        Raster<float> g2 = g, g3 = g;
        for (int r = 0; r < 48; ++r)
            for (int c = 0; c < 64; ++c) {
                g2.at(r, c) = 2.0f * g.at(r, c);
                g3.at(r, c) = g.at(r, c) + 1000.0f;
            }
        CHECK(mutual_information(g2, h, 64) == base);
        CHECK(mutual_information(g3, h, 64) == base);
    }

    SUBCASE("independent noise carries almost no information") {
        double total = 0.0;
        for (uint32_t seed = 0; seed < 10; ++seed) {
            Raster<float> u = uniform_noise(256, 256, 1000 + seed);
            Raster<float> v = uniform_noise(256, 256, 2000 + seed);
            total += mutual_information(u, v, 64);
        }
        CHECK(total / 10.0 < 0.1);
    }
}

TEST_CASE("mutual information argument checks") {
    Raster<float> a = textured(32, 32, 1);

    SUBCASE("size mismatch") {
        Raster<float> b = textured(32, 31, 2);
        CHECK_THROWS_AS(mutual_information(a, b), ArgumentError);
    }

    SUBCASE("too few bins") {
        CHECK_THROWS_AS(mutual_information(a, a, 1), ArgumentError);
    }

    SUBCASE("insufficient overlap") {
        // keep only the first N pixels of b valid; 99 is too few, 100 is fine
        auto keep_first = [](int n) {
            Raster<float> b = textured(32, 32, 2);
            int idx = 0;
            for (int r = 0; r < 32; ++r)
                for (int c = 0; c < 32; ++c, ++idx)
                    if (idx >= n) b.at(r, c) = kInvalid;
            return b;
        };
        const Raster<float> b99 = keep_first(99);
        CHECK_THROWS_AS(mutual_information(a, b99), DataError);
        const Raster<float> b100 = keep_first(100);
        CHECK_NOTHROW(mutual_information(a, b100));
    }
}

TEST_CASE("translation alignment recovers known shifts") {
    Raster<float> ref = textured(128, 112, 40);

    SUBCASE("identity") {
        const AlignmentResult r = align_translation_mi(ref, ref, 5);
        CHECK(r.dx == 0);
        CHECK(r.dy == 0);
        CHECK_FALSE(r.low_confidence);
        CHECK(r.confidence > 1.01);
    }

    SUBCASE("a single known shift") {
        const Raster<float> mov = shifted(ref, -2, 3);
        const AlignmentResult r = align_translation_mi(ref, mov, 8);
        CHECK(r.dx == 3);
        CHECK(r.dy == -2);
        CHECK_FALSE(r.low_confidence);
        CHECK(r.mi_score > 1.0);
    }

    SUBCASE("every shift inside the radius round-trips") {
        const int pts[][2] = {{-4, -4}, {-4, 4}, {4, -4}, {4, 4}, {0, 0},
                              {2, -3},  {-1, 1}, {3, 0},  {0, -2}};
        for (auto& p : pts) {
            const Raster<float> mov = shifted(ref, p[0], p[1]);
            const AlignmentResult r = align_translation_mi(ref, mov, 4);
            CHECK(r.dy == p[0]);
            CHECK(r.dx == p[1]);
            CHECK_FALSE(r.low_confidence);
        }
    }

    SUBCASE("uncorrelated noise is flagged, offsets stay zero") {
        for (uint32_t seed : {1064u, 1076u}) {
            Raster<float> u = uniform_noise(256, 256, seed);
            Raster<float> v = uniform_noise(256, 256, seed + 1);
            const AlignmentResult r = align_translation_mi(u, v, 16);
            CHECK(r.low_confidence);
            CHECK(r.confidence < 1.01);
            CHECK(r.dx == 0);
            CHECK(r.dy == 0);
        }
    }

    SUBCASE("bad arguments") {
        CHECK_THROWS_AS(align_translation_mi(ref, ref, 0), ArgumentError);
        CHECK_THROWS_AS(align_translation_mi(ref, ref, 2, 1), ArgumentError);
    }
}

TEST_CASE("alignment folds into the camera adjustment") {
    RpcCamera cam;
    cam.adj_line = 1.5;
    cam.adj_samp = -0.5;

    AlignmentResult a;
    a.dx = 3;
    a.dy = -2;
    apply_alignment(cam, a);
    CHECK(cam.adj_line == -0.5);
    CHECK(cam.adj_samp == 2.5);

    AlignmentResult weak;
    weak.dx = 7;
    weak.dy = 7;
    weak.low_confidence = true;
    apply_alignment(cam, weak);
    CHECK(cam.adj_line == -0.5);
    CHECK(cam.adj_samp == 2.5);
}

TEST_CASE("3d translation between height fields") {
    const HeightField ref = make_field(64, 64, 0.0, 0.0, 1.0, 5);

    SUBCASE("identity") {
        const Translation3D t = estimate_3d_translation(ref, ref, 4);
        CHECK(t.tx == 0.0);
        CHECK(t.ty == 0.0);
        CHECK(t.tz == 0.0);
        CHECK(t.inlier_fraction == 1.0);
        CHECK(t.overlap_cells == 64 * 64);
    }

    SUBCASE("content shift plus a vertical offset") {
        // moving(x) = ref(x - tx) + tz with tx = +2 cells, ty = -1 cell
        HeightField mov = ref;
        for (int r = 0; r < 64; ++r)
            for (int c = 0; c < 64; ++c) {
                const int sr = r + 1, sc = c - 2;
                mov.z.at(r, c) =
                    (sr >= 0 && sr < 64 && sc >= 0 && sc < 64)
                        ? ref.z.at(sr, sc) + 0.7f
                        : kInvalid;
            }
        const Translation3D t = estimate_3d_translation(ref, mov, 4);
        CHECK(t.tx == 2.0);
        CHECK(t.ty == -1.0);
        CHECK(t.tz == doctest::Approx(0.7).epsilon(1e-5));
        CHECK(t.inlier_fraction == 1.0);
        CHECK(t.overlap_cells == 63 * 62);
    }

    SUBCASE("robust to heavy outliers") {
        HeightField mov = ref;
        int k = 0;
        for (int r = 0; r < 64; ++r)
            for (int c = 0; c < 64; ++c) {
                mov.z.at(r, c) = ref.z.at(r, c) + 0.7f;
                if (++k % 5 < 2)  // 40 percent corrupted
                    mov.z.at(r, c) += (k % 2 ? 10.0f : -10.0f);
            }
        const Translation3D t = estimate_3d_translation(ref, mov, 3);
        CHECK(t.tx == 0.0);
        CHECK(t.ty == 0.0);
        CHECK(t.tz == doctest::Approx(0.7).epsilon(0.015));
        CHECK(t.inlier_fraction > 0.55);
        CHECK(t.inlier_fraction < 0.7);
    }

    SUBCASE("equivariant under whole-cell grid moves") {
        // a moving grid interior to a larger reference, then the same grid
        // re-addressed 3 cells east and 2 cells south: the recovered
        // translation must move by exactly the same amount
        const HeightField big = make_field(96, 96, -10.0, 4.0, 1.0, 9);
        HeightField inner;
        inner.cell = 1.0;
        inner.origin_x = big.origin_x + 24.0;
        inner.origin_y = big.origin_y + 24.0;
        inner.z = Raster<float>(48, 48);
        for (int r = 0; r < 48; ++r)
            for (int c = 0; c < 48; ++c)
                inner.z.at(r, c) = big.z.at(r + 24, c + 24) + 1.25f;

        const Translation3D t0 = estimate_3d_translation(big, inner, 5);
        CHECK(t0.tx == 0.0);
        CHECK(t0.ty == 0.0);
        CHECK(t0.tz == doctest::Approx(1.25).epsilon(1e-6));

        HeightField moved = inner;
        moved.origin_x += 3.0;
        moved.origin_y -= 2.0;
        const Translation3D t1 = estimate_3d_translation(big, moved, 5);
        CHECK(t1.tx == t0.tx + 3.0);
        CHECK(t1.ty == t0.ty - 2.0);
        CHECK(t1.tz == t0.tz);
    }

    SUBCASE("insufficient overlap") {
        HeightField far = ref;
        far.origin_x += 56.0;
        CHECK_THROWS_AS(estimate_3d_translation(ref, far, 2), DataError);
    }

    SUBCASE("cell size mismatch") {
        HeightField other = ref;
        other.cell = 0.5;
        CHECK_THROWS_AS(estimate_3d_translation(ref, other, 2),
                        ArgumentError);
    }
}
