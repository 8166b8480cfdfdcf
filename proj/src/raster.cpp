#include "semstereo/raster.hpp"

#include <cmath>

namespace semstereo {

float sample_bilinear(const Raster<float>& r, double row, double col) {
    if (!std::isfinite(row) || !std::isfinite(col)) return kInvalid;
    const double r0d = std::floor(row);
    const double c0d = std::floor(col);
    const int r0 = static_cast<int>(r0d);
    const int c0 = static_cast<int>(c0d);
    const double fr = row - r0d;
    const double fc = col - c0d;

    double acc = 0.0;
    for (int dr = 0; dr <= 1; ++dr) {
        const double wr = dr ? fr : 1.0 - fr;
        if (wr == 0.0) continue;
        for (int dc = 0; dc <= 1; ++dc) {
            const double wc = dc ? fc : 1.0 - fc;
            if (wc == 0.0) continue;
            const int rr = r0 + dr;
            const int cc = c0 + dc;
            if (!r.inside(rr, cc)) return kInvalid;
            const float v = r.at(rr, cc);
            if (!is_valid(v)) return kInvalid;
            acc += wr * wc * v;
        }
    }
    return static_cast<float>(acc);
}

Homography Homography::translation(double dsamp, double dline) {
    Homography h;
    h.m[2] = dsamp;
    h.m[5] = dline;
    return h;
}

Homography Homography::rotation_about(double radians, double samp, double line) {
    const double c = std::cos(radians);
    const double s = std::sin(radians);
    Homography h;
    h.m[0] = c;  h.m[1] = -s; h.m[2] = samp - c * samp + s * line;
    h.m[3] = s;  h.m[4] = c;  h.m[5] = line - s * samp - c * line;
    h.m[6] = 0;  h.m[7] = 0;  h.m[8] = 1;
    return h;
}

ImagePoint Homography::apply(const ImagePoint& p) const {
    const double u = m[0] * p.samp + m[1] * p.line + m[2];
    const double v = m[3] * p.samp + m[4] * p.line + m[5];
    const double w = m[6] * p.samp + m[7] * p.line + m[8];
    return ImagePoint{v / w, u / w};
}

double Homography::det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) -
           m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Homography Homography::inverse() const {
    const double d = det();
    if (d == 0.0 || !std::isfinite(d))
        throw NumericError("homography is singular");
    Homography out;
    out.m[0] = (m[4] * m[8] - m[5] * m[7]) / d;
    out.m[1] = (m[2] * m[7] - m[1] * m[8]) / d;
    out.m[2] = (m[1] * m[5] - m[2] * m[4]) / d;
    out.m[3] = (m[5] * m[6] - m[3] * m[8]) / d;
    out.m[4] = (m[0] * m[8] - m[2] * m[6]) / d;
    out.m[5] = (m[2] * m[3] - m[0] * m[5]) / d;
    out.m[6] = (m[3] * m[7] - m[4] * m[6]) / d;
    out.m[7] = (m[1] * m[6] - m[0] * m[7]) / d;
    out.m[8] = (m[0] * m[4] - m[1] * m[3]) / d;
    out.normalize();
    return out;
}

Homography Homography::then(const Homography& next) const {
    Homography out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += next.m[i * 3 + k] * m[k * 3 + j];
            out.m[i * 3 + j] = s;
        }
    out.normalize();
    return out;
}

void Homography::normalize() {
    const double w = m[8];
    if (w != 0.0 && std::isfinite(w))
        for (double& v : m) v /= w;
}

}  // namespace semstereo
