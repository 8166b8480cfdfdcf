#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "semstereo/geometry.hpp"
#include "semstereo/raster.hpp"
#include "semstereo/types.hpp"

namespace semstereo {

// Single-band raster container with the on-disk metadata that matters to the
// pipeline: nodata marker, optional 6-parameter affine georeference
// (x = g[0] + col*g[1] + row*g[2]; y = g[3] + col*g[4] + row*g[5]),
// and an optional class-code table for uint8 label rasters.
struct GeoHeader {
    double nodata = std::numeric_limits<double>::quiet_NaN();
    bool has_geo = false;
    std::array<double, 6> geo{0, 1, 0, 0, 0, -1};
    std::map<uint8_t, std::string> classes;
    std::string crs_tag;
};

void write_raster(const std::filesystem::path& path, const Raster<float>& r,
                  const GeoHeader& hdr = {});
void write_raster(const std::filesystem::path& path, const Raster<uint8_t>& r,
                  const GeoHeader& hdr = {});

struct FloatRasterFile {
    Raster<float> data{0, 0};
    GeoHeader header;
};
struct ByteRasterFile {
    Raster<uint8_t> data{0, 0};
    GeoHeader header;
};

FloatRasterFile read_raster_f32(const std::filesystem::path& path);
ByteRasterFile read_raster_u8(const std::filesystem::path& path);

// RPC text file, big key-value list in the usual satellite-metadata spelling
// (LINE_OFF, SAMP_OFF, LAT_OFF, LONG_OFF, HEIGHT_OFF, matching _SCALE keys,
// LINE_NUM_COEFF_1..20, LINE_DEN_COEFF_1..20, SAMP_NUM_COEFF_1..20,
// SAMP_DEN_COEFF_1..20, optional ADJ_LINE / ADJ_SAMP / CRS_TAG).
// LAT maps to y and LONG to x.
void write_rpc(const std::filesystem::path& path, const RpcCamera& cam);
RpcCamera read_rpc(const std::filesystem::path& path);

// Homography as a 9-value text file, row-major.
void write_homography(const std::filesystem::path& path, const Homography& h);
Homography read_homography(const std::filesystem::path& path);

// Point cloud: "x y z" per line; labels live in a parallel .labels file with
// one class code per line when present.
struct PointCloud {
    std::vector<WorldPoint> points;
    std::vector<uint8_t> labels;  // empty or points.size()
};

void write_point_cloud(const std::filesystem::path& path, const PointCloud& pc);
PointCloud read_point_cloud(const std::filesystem::path& path);

// Height field <-> raster pair helpers (z plus optional class band).
void write_height_field(const std::filesystem::path& z_path,
                        const std::filesystem::path& class_path,
                        const HeightField& hf, const std::string& crs_tag = "");
HeightField read_height_field(const std::filesystem::path& z_path,
                              const std::filesystem::path& class_path = {});

// FNV-1a 64-bit, for manifest input hashing.
uint64_t fnv1a64(const void* data, size_t n);
uint64_t fnv1a64_file(const std::filesystem::path& path);

// Serializes doubles so that reading them back reproduces the exact value.
std::string format_double(double v);

}  // namespace semstereo
