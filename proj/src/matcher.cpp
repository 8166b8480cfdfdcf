#include "semstereo/matcher.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

namespace semstereo {

namespace {

struct Desc {
    uint64_t lo = 0;
    uint64_t hi = 0;
};

inline int hamming(const Desc& a, const Desc& b) {
    return std::popcount(a.lo ^ b.lo) + std::popcount(a.hi ^ b.hi);
}

std::vector<Desc> census_descriptors(const Raster<float>& img, int window) {
    const int half = window / 2;
    const int w = img.width(), h = img.height();
    std::vector<Desc> out(static_cast<size_t>(w) * h);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const float center = img.at(r, c);
            Desc d;
            int bit = 0;
            for (int di = -half; di <= half; ++di)
                for (int dj = -half; dj <= half; ++dj, ++bit) {
                    if (at_clamped(img, r + di, c + dj) >= center) {
                        if (bit < 64)
                            d.lo |= uint64_t{1} << bit;
                        else
                            d.hi |= uint64_t{1} << (bit - 64);
                    }
                }
            out[static_cast<size_t>(r) * w + c] = d;
        }
    return out;
}

void check_window(const Raster<float>& img, int window) {
    if (window < 1 || window > 9 || window % 2 == 0)
        throw ArgumentError("census window must be odd and between 1 and 9");
    if (window > img.width() || window > img.height())
        throw ArgumentError("census window larger than the image");
}

void check_sgm_params(const SgmParams& p) {
    if (!(p.p1 > 0.0) || !(p.p2 > p.p1))
        throw ArgumentError("sgm penalties need 0 < P1 < P2");
    if (!(p.p2_gradient_scale > 0.0))
        throw ArgumentError("p2_gradient_scale must be positive");
    if (p.paths != 4 && p.paths != 8)
        throw ArgumentError("sgm paths must be 4 or 8");
}

void check_prior(const SemanticPriorInput& prior, int width, int height) {
    const SemanticPriorParams& p = prior.params;
    if (!(p.beta_same >= 1.0))
        throw ArgumentError("beta_same must be >= 1");
    if (!(p.beta_diff > 0.0) || p.beta_diff > 1.0)
        throw ArgumentError("beta_diff must be in (0, 1]");
    if (!(p.gamma >= 0.0)) throw ArgumentError("gamma must be >= 0");
    if (prior.left.width() != width || prior.left.height() != height ||
        prior.right.width() != width || prior.right.height() != height)
        throw ArgumentError("prior class rasters must match the image size");
}

struct LineStart {
    int r, c;
};

std::vector<LineStart> line_starts(int w, int h, int dr, int dc) {
    std::vector<LineStart> out;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const int pr = r - dr, pc = c - dc;
            if (pr < 0 || pr >= h || pc < 0 || pc >= w)
                out.push_back({r, c});
        }
    return out;
}

}  // namespace

CostVolume census_cost_volume(const Raster<float>& left,
                              const Raster<float>& right, int window,
                              int d_min, int d_max) {
    if (!left.same_size(right))
        throw ArgumentError("census_cost_volume: image size mismatch");
    check_window(left, window);
    if (d_min > d_max) throw ArgumentError("census_cost_volume: d_min > d_max");

    const int w = left.width(), h = left.height();
    const int nd = d_max - d_min + 1;
    const int32_t border = window * window;

    const std::vector<Desc> dl = census_descriptors(left, window);
    const std::vector<Desc> dr = census_descriptors(right, window);

    CostVolume v;
    v.width = w;
    v.height = h;
    v.d_min = d_min;
    v.ndisp = nd;
    v.cost.resize(static_cast<size_t>(w) * h * nd);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < h; ++r) {
        const Desc* rowl = dl.data() + static_cast<size_t>(r) * w;
        const Desc* rowr = dr.data() + static_cast<size_t>(r) * w;
        int32_t* out = v.cost.data() + static_cast<size_t>(r) * w * nd;
        for (int c = 0; c < w; ++c)
            for (int k = 0; k < nd; ++k) {
                const int rc = c + d_min + k;
                out[static_cast<size_t>(c) * nd + k] =
                    (rc < 0 || rc >= w) ? border : hamming(rowl[c], rowr[rc]);
            }
    }
    return v;
}

CostVolume sgm_aggregate(const CostVolume& unary, const Raster<float>& guide,
                         const SgmParams& params,
                         const SemanticPriorInput* prior) {
    check_sgm_params(params);
    const int w = unary.width, h = unary.height, nd = unary.ndisp;
    if (w <= 0 || h <= 0 || nd <= 0)
        throw ArgumentError("sgm_aggregate: empty cost volume");
    if (guide.width() != w || guide.height() != h)
        throw ArgumentError("sgm_aggregate: guide size mismatch");
    if (prior) check_prior(*prior, w, h);

    bool stable[256] = {};
    double beta_same = 1.0, beta_diff = 1.0;
    int32_t gamma4 = 0;
    if (prior) {
        for (uint8_t c : prior->params.stable_classes) stable[c] = true;
        beta_same = prior->params.beta_same;
        beta_diff = prior->params.beta_diff;
        gamma4 = static_cast<int32_t>(std::lround(4.0 * prior->params.gamma));
    }

    // unary in quarter units, with the class-mismatch cost folded in
    std::vector<int32_t> u4(unary.cost.size());
#pragma omp parallel for schedule(static)
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const size_t base = (static_cast<size_t>(r) * w + c) * nd;
            for (int k = 0; k < nd; ++k) {
                int32_t v = 4 * unary.cost[base + k];
                if (gamma4 > 0) {
                    const int rc = c + unary.d_min + k;
                    if (rc >= 0 && rc < w) {
                        const uint8_t cl = prior->left.at(r, c);
                        const uint8_t cr = prior->right.at(r, rc);
                        if (cl != cr && stable[cl] && stable[cr]) v += gamma4;
                    }
                }
                u4[base + k] = v;
            }
        }

    const int32_t p1q = static_cast<int32_t>(std::lround(4.0 * params.p1));
    const double inv_scale = 1.0 / params.p2_gradient_scale;

    // step penalty entering (r, c) from (r - dr, c - dc)
    auto p2q_at = [&](int r, int c, int dr, int dc) {
        const double g = std::abs(static_cast<double>(guide.at(r, c)) -
                                  guide.at(r - dr, c - dc));
        const double div = std::max(1.0, g * inv_scale);
        double beta = 1.0;
        if (prior)
            beta = prior->left.at(r, c) == prior->left.at(r - dr, c - dc)
                       ? beta_same
                       : beta_diff;
        return static_cast<int32_t>(
            std::lround(4.0 * std::max(params.p1, params.p2 / div * beta)));
    };

    static const int kDirs[8][2] = {{0, 1},  {0, -1}, {1, 0},  {-1, 0},
                                    {1, 1},  {1, -1}, {-1, 1}, {-1, -1}};

    CostVolume sum;
    sum.width = w;
    sum.height = h;
    sum.d_min = unary.d_min;
    sum.ndisp = nd;
    sum.cost.assign(u4.size(), 0);

    for (int dir = 0; dir < params.paths; ++dir) {
        const int dr = kDirs[dir][0], dc = kDirs[dir][1];
        const std::vector<LineStart> starts = line_starts(w, h, dr, dc);
#pragma omp parallel for schedule(dynamic)
        for (size_t s = 0; s < starts.size(); ++s) {
            std::vector<int32_t> prev(nd), cur(nd);
            int r = starts[s].r, c = starts[s].c;
            bool first = true;
            while (r >= 0 && r < h && c >= 0 && c < w) {
                const size_t base = (static_cast<size_t>(r) * w + c) * nd;
                if (first) {
                    for (int k = 0; k < nd; ++k) cur[k] = u4[base + k];
                    first = false;
                } else {
                    const int32_t p2q = p2q_at(r, c, dr, dc);
                    int32_t prev_min = prev[0];
                    for (int k = 1; k < nd; ++k)
                        prev_min = std::min(prev_min, prev[k]);
                    for (int k = 0; k < nd; ++k) {
                        int32_t best = prev[k];
                        if (k > 0) best = std::min(best, prev[k - 1] + p1q);
                        if (k + 1 < nd)
                            best = std::min(best, prev[k + 1] + p1q);
                        best = std::min(best, prev_min + p2q);
                        cur[k] = u4[base + k] + best;
                    }
                }
                for (int k = 0; k < nd; ++k) sum.cost[base + k] += cur[k];
                std::swap(prev, cur);
                r += dr;
                c += dc;
            }
        }
    }
    return sum;
}

DisparityMap select_disparity(const CostVolume& aggregated, bool subpixel) {
    const int w = aggregated.width, h = aggregated.height;
    const int nd = aggregated.ndisp;
    if (w <= 0 || h <= 0 || nd <= 0)
        throw ArgumentError("select_disparity: empty cost volume");

    DisparityMap out;
    out.values = Raster<float>(w, h);
    out.d_min = aggregated.d_min;
    out.d_max = aggregated.d_min + nd - 1;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const size_t base = (static_cast<size_t>(r) * w + c) * nd;
            int best = 0;
            for (int k = 1; k < nd; ++k)
                if (aggregated.cost[base + k] < aggregated.cost[base + best])
                    best = k;
            double d = aggregated.d_min + best;
            if (subpixel && best > 0 && best + 1 < nd) {
                const double c0 = aggregated.cost[base + best];
                const double cm = aggregated.cost[base + best - 1];
                const double cp = aggregated.cost[base + best + 1];
                const double den = 2.0 * (std::max(cm, cp) - c0);
                if (den > 0.0) d += (cm - cp) / den;
            }
            out.values.at(r, c) = static_cast<float>(d);
        }
    return out;
}

DisparityMap sgm_match(const Raster<float>& left, const Raster<float>& right,
                       int d_min, int d_max, const SgmParams& params,
                       const SemanticPriorInput* prior) {
    if (!left.same_size(right))
        throw ArgumentError("sgm_match: image size mismatch");
    if (d_min > d_max) throw ArgumentError("sgm_match: d_min > d_max");
    if (d_max - d_min + 1 > left.width())
        throw ArgumentError("sgm_match: disparity range exceeds image width");
    check_sgm_params(params);

    const CostVolume uL =
        census_cost_volume(left, right, params.census_window, d_min, d_max);
    const CostVolume sL = sgm_aggregate(uL, left, params, prior);
    DisparityMap dL = select_disparity(sL, params.subpixel);

    if (params.lr_max_diff >= 0.0) {
        SemanticPriorInput swapped;
        const SemanticPriorInput* rprior = nullptr;
        if (prior) {
            swapped.params = prior->params;
            swapped.left = prior->right;
            swapped.right = prior->left;
            rprior = &swapped;
        }
        const CostVolume uR = census_cost_volume(
            right, left, params.census_window, -d_max, -d_min);
        const CostVolume sR = sgm_aggregate(uR, right, params, rprior);
        const DisparityMap dR = select_disparity(sR, params.subpixel);

        const int w = left.width(), h = left.height();
#pragma omp parallel for schedule(static)
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const float d = dL.values.at(r, c);
                const long rc = std::lround(c + static_cast<double>(d));
                if (rc < 0 || rc >= w) {
                    dL.values.at(r, c) = kInvalid;
                    continue;
                }
                const float dr = dR.values.at(r, static_cast<int>(rc));
                if (!is_valid(dr) ||
                    std::abs(static_cast<double>(d) + dr) >
                        params.lr_max_diff)
                    dL.values.at(r, c) = kInvalid;
            }
    }

#pragma omp parallel for schedule(static)
    for (int r = 0; r < left.height(); ++r)
        for (int c = 0; c < left.width(); ++c)
            if (!is_valid(left.at(r, c))) dL.values.at(r, c) = kInvalid;
    return dL;
}

DisparityMap sgm_match(const RectifiedPair& pair, const SgmParams& params,
                       const SemanticPriorParams* prior) {
    const int d_min = pair.truth_disparity.d_min - 16;
    const int d_max = pair.truth_disparity.d_max + 16;
    if (!prior)
        return sgm_match(pair.left_image, pair.right_image, d_min, d_max,
                         params);
    SemanticPriorInput in;
    in.params = *prior;
    in.left = pair.truth_class_left;
    in.right = pair.truth_class_right;
    return sgm_match(pair.left_image, pair.right_image, d_min, d_max, params,
                     &in);
}

namespace {

// one tridiagonal WLS solve along a line: (W + lambda*L) u = W f, where W is
// the data mask and L the guide-weighted Laplacian; returns false if the
// line carries no data at all
bool solve_line(const float* f, const float* g, int n, long stride,
                double lambda, double sigma, float* out) {
    thread_local std::vector<double> a, diag, rhs, cp, dp;
    a.assign(n, 0.0);  // a[i]: weight of the (i, i+1) link
    diag.assign(n, 0.0);
    rhs.assign(n, 0.0);

    bool any = false;
    for (int i = 0; i + 1 < n; ++i) {
        const double dg = std::abs(static_cast<double>(g[(i + 1) * stride]) -
                                   g[i * stride]);
        double wgt = std::exp(-dg / sigma);
        if (!(wgt == wgt)) wgt = 1.0;  // unknown guide: neutral link
        a[i] = std::max(wgt, 1e-9);
    }
    for (int i = 0; i < n; ++i) {
        const float v = f[i * stride];
        const bool ok = is_valid(v);
        any = any || ok;
        diag[i] = (ok ? 1.0 : 0.0) + lambda * ((i > 0 ? a[i - 1] : 0.0) +
                                               (i + 1 < n ? a[i] : 0.0));
        rhs[i] = ok ? v : 0.0;
    }
    if (!any) {
        for (int i = 0; i < n; ++i) out[i * stride] = kInvalid;
        return false;
    }

    cp.assign(n, 0.0);
    dp.assign(n, 0.0);
    double denom = diag[0];
    cp[0] = (n > 1 ? -lambda * a[0] : 0.0) / denom;
    dp[0] = rhs[0] / denom;
    for (int i = 1; i < n; ++i) {
        const double low = -lambda * a[i - 1];
        denom = diag[i] - low * cp[i - 1];
        cp[i] = (i + 1 < n ? -lambda * a[i] : 0.0) / denom;
        dp[i] = (rhs[i] - low * dp[i - 1]) / denom;
    }
    double u = dp[n - 1];
    out[(n - 1) * stride] = static_cast<float>(u);
    for (int i = n - 2; i >= 0; --i) {
        u = dp[i] - cp[i] * u;
        out[i * stride] = static_cast<float>(u);
    }
    return true;
}

}  // namespace

DisparityMap wls_filter(const DisparityMap& disparity,
                        const Raster<float>& guide, double lambda,
                        double sigma_color, int iterations) {
    if (!guide.same_size(disparity.values))
        throw ArgumentError("wls_filter: guide size mismatch");
    if (lambda < 0.0) throw ArgumentError("wls_filter: negative lambda");
    if (!(sigma_color > 0.0))
        throw ArgumentError("wls_filter: sigma_color must be positive");

    DisparityMap out = disparity;
    if (lambda == 0.0 || iterations <= 0) return out;

    const int w = guide.width(), h = guide.height();
    Raster<float> cur = disparity.values;
    Raster<float> next(w, h);
    const double denom = std::pow(4.0, iterations) - 1.0;
    for (int t = 1; t <= iterations; ++t) {
        const double lt =
            1.5 * lambda * std::pow(4.0, iterations - t) / denom;
#pragma omp parallel for schedule(static)
        for (int r = 0; r < h; ++r)
            solve_line(cur.row(r), guide.row(r), w, 1, lt, sigma_color,
                       next.row(r));
        std::swap(cur, next);
#pragma omp parallel for schedule(static)
        for (int c = 0; c < w; ++c)
            solve_line(&cur.at(0, c), &guide.at(0, c), h, w, lt, sigma_color,
                       &next.at(0, c));
        std::swap(cur, next);
    }
    out.values = cur;
    return out;
}

DisparityScore match_quality(const DisparityMap& disp,
                             const DisparityMap& truth) {
    const DisparityScore s = disparity_metrics(disp.values, truth.values);
    if (s.jointly_valid == 0)
        throw DataError("match_quality: no valid disparities to score");
    return s;
}

}  // namespace semstereo
