#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace semstereo {

// Error taxonomy shared by all modules. The CLI maps these to distinct
// exit codes (argument=2, data=3, numeric=4).
class ArgumentError : public std::invalid_argument {
public:
    explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

class DegeneracyError : public NumericError {
public:
    explicit DegeneracyError(const std::string& msg) : NumericError(msg) {}
};

// World frame is generic planimetric (x, y) plus height z in meters.
struct WorldPoint {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

// Image coordinates: line = row, samp = column, in pixels.
struct ImagePoint {
    double line = 0.0;
    double samp = 0.0;
};

struct WorldBox {
    double x_min = 0.0, x_max = 0.0;
    double y_min = 0.0, y_max = 0.0;
    double z_min = 0.0, z_max = 0.0;

    double x_mid() const { return 0.5 * (x_min + x_max); }
    double y_mid() const { return 0.5 * (y_min + y_max); }
    double z_mid() const { return 0.5 * (z_min + z_max); }
};

struct GridSpec {
    int nx = 0;
    int ny = 0;
    int nz = 0;

    long long count() const {
        return static_cast<long long>(nx) * ny * nz;
    }
};

// Semantic class codes as stored on disk (common lidar classification codes).
enum class SemClass : std::uint8_t {
    Ground    = 2,
    Tree      = 5,
    Building  = 6,
    Water     = 9,
    Unlabeled = 65,
};

inline constexpr std::uint8_t kClassGround    = 2;
inline constexpr std::uint8_t kClassTree      = 5;
inline constexpr std::uint8_t kClassBuilding  = 6;
inline constexpr std::uint8_t kClassWater     = 9;
inline constexpr std::uint8_t kClassUnlabeled = 65;

// Scored classes in reporting order. Unlabeled is the universal ignore value.
inline constexpr std::uint8_t kScoredClasses[4] = {
    kClassGround, kClassTree, kClassBuilding, kClassWater};

inline const char* class_name(std::uint8_t code) {
    switch (code) {
        case kClassGround:    return "GROUND";
        case kClassTree:      return "TREE";
        case kClassBuilding:  return "BUILDING";
        case kClassWater:     return "WATER";
        case kClassUnlabeled: return "UNLABELED";
        default:              return "UNKNOWN";
    }
}

inline bool finite(const WorldPoint& p) {
    return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

inline bool finite(const ImagePoint& p) {
    return std::isfinite(p.line) && std::isfinite(p.samp);
}

}  // namespace semstereo
