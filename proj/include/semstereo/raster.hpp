#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "semstereo/types.hpp"

namespace semstereo {

// Canonical invalid marker for float rasters and disparity maps.
inline constexpr float kInvalid = std::numeric_limits<float>::quiet_NaN();

inline bool is_valid(float v) { return !std::isnan(v); }

// Row-major single-band raster.
template <typename T>
class Raster {
public:
    Raster() = default;
    Raster(int width, int height, T fill = T{})
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(width) * height, fill) {
        if (width < 0 || height < 0)
            throw ArgumentError("raster dimensions must be nonnegative");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return data_.empty(); }
    std::size_t size() const { return data_.size(); }

    T& at(int row, int col) { return data_[idx(row, col)]; }
    const T& at(int row, int col) const { return data_[idx(row, col)]; }

    T* row(int r) { return data_.data() + static_cast<std::size_t>(r) * width_; }
    const T* row(int r) const { return data_.data() + static_cast<std::size_t>(r) * width_; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    bool inside(int row, int col) const {
        return row >= 0 && row < height_ && col >= 0 && col < width_;
    }

    bool same_size(const Raster& other) const {
        return width_ == other.width_ && height_ == other.height_;
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool operator==(const Raster& other) const = default;

private:
    std::size_t idx(int row, int col) const {
        return static_cast<std::size_t>(row) * width_ + col;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

// Clamped fetch, replicating the border.
template <typename T>
inline const T& at_clamped(const Raster<T>& r, int row, int col) {
    row = std::clamp(row, 0, r.height() - 1);
    col = std::clamp(col, 0, r.width() - 1);
    return r.at(row, col);
}

// Bilinear sample at fractional (row, col). Returns the raster's invalid
// marker when outside or when any contributing pixel is invalid.
float sample_bilinear(const Raster<float>& r, double row, double col);

// Nearest-neighbor sample; `nodata` returned when outside.
template <typename T>
inline T sample_nearest(const Raster<T>& r, double row, double col, T nodata) {
    const int ri = static_cast<int>(std::lround(row));
    const int ci = static_cast<int>(std::lround(col));
    if (!r.inside(ri, ci)) return nodata;
    return r.at(ri, ci);
}

// Signed horizontal disparity in the convention right_col = left_col + d.
struct DisparityMap {
    Raster<float> values;  // kInvalid marks unmatched pixels
    int d_min = 0;
    int d_max = 0;

    int width() const { return values.width(); }
    int height() const { return values.height(); }
};

// 3x3 plane-projective transform on (samp, line, 1) pixel vectors,
// last entry normalized to 1 when nonzero.
struct Homography {
    double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Homography identity() { return Homography{}; }
    static Homography translation(double dsamp, double dline);
    // Rotation by `radians` about pixel (samp, line).
    static Homography rotation_about(double radians, double samp, double line);

    ImagePoint apply(const ImagePoint& p) const;
    Homography inverse() const;
    Homography then(const Homography& next) const;  // next * this
    double det() const;
    void normalize();
};

// Regular height grid. Cell (row, col) center sits at
// (origin_x + col*cell, origin_y + row*cell).
struct HeightField {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double cell = 1.0;
    Raster<float> z;               // meters, kInvalid = nodata
    Raster<std::uint8_t> classes;  // optional; empty or same size as z

    int rows() const { return z.height(); }
    int cols() const { return z.width(); }

    double x_of(int col) const { return origin_x + col * cell; }
    double y_of(int row) const { return origin_y + row * cell; }

    bool same_grid(const HeightField& other) const {
        return rows() == other.rows() && cols() == other.cols() &&
               cell == other.cell &&
               origin_x == other.origin_x && origin_y == other.origin_y;
    }
};

}  // namespace semstereo
