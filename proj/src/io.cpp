#include "semstereo/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

namespace semstereo {

namespace {

constexpr char kMagic[] = "SEMSTEREO RASTER 1";

void write_header(std::ostream& os, const char* dtype, int width, int height,
                  const GeoHeader& hdr) {
    os << kMagic << "\n";
    os << "dtype " << dtype << "\n";
    os << "width " << width << "\n";
    os << "height " << height << "\n";
    os << "nodata " << format_double(hdr.nodata) << "\n";
    if (hdr.has_geo) {
        os << "geo";
        for (double g : hdr.geo) os << " " << format_double(g);
        os << "\n";
    }
    if (!hdr.crs_tag.empty()) os << "crs " << hdr.crs_tag << "\n";
    for (const auto& [code, name] : hdr.classes)
        os << "class " << static_cast<int>(code) << " " << name << "\n";
    os << "end_header\n";
}

struct ParsedHeader {
    std::string dtype;
    int width = 0;
    int height = 0;
    GeoHeader geo;
};

ParsedHeader read_header(std::istream& is, const std::filesystem::path& path) {
    std::string line;
    if (!std::getline(is, line) || line != kMagic)
        throw DataError(path.string() + ": not a raster file (bad magic)");
    ParsedHeader out;
    bool done = false;
    while (std::getline(is, line)) {
        if (line == "end_header") { done = true; break; }
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        // Stream extraction rejects "nan"/"inf"; route doubles through strtod.
        auto read_double = [&](double& v) {
            std::string tok;
            ls >> tok;
            if (tok.empty()) { ls.setstate(std::ios::failbit); return; }
            char* end = nullptr;
            v = std::strtod(tok.c_str(), &end);
            if (end != tok.c_str() + tok.size())
                ls.setstate(std::ios::failbit);
        };
        if (key == "dtype") ls >> out.dtype;
        else if (key == "width") ls >> out.width;
        else if (key == "height") ls >> out.height;
        else if (key == "nodata") read_double(out.geo.nodata);
        else if (key == "geo") {
            for (double& g : out.geo.geo) read_double(g);
            out.geo.has_geo = true;
        } else if (key == "crs") ls >> out.geo.crs_tag;
        else if (key == "class") {
            int code; std::string name;
            ls >> code >> name;
            out.geo.classes[static_cast<uint8_t>(code)] = name;
        }
        if (ls.fail())
            throw DataError(path.string() + ": bad header line: " + line);
    }
    if (!done) throw DataError(path.string() + ": truncated header");
    if (out.width <= 0 || out.height <= 0)
        throw DataError(path.string() + ": bad raster dimensions");
    return out;
}

template <typename T>
void write_body(std::ostream& os, const Raster<T>& r) {
    os.write(reinterpret_cast<const char*>(r.data()),
             static_cast<std::streamsize>(r.size() * sizeof(T)));
}

template <typename T>
void read_body(std::istream& is, Raster<T>& r,
               const std::filesystem::path& path) {
    is.read(reinterpret_cast<char*>(r.data()),
            static_cast<std::streamsize>(r.size() * sizeof(T)));
    if (static_cast<size_t>(is.gcount()) != r.size() * sizeof(T))
        throw DataError(path.string() + ": truncated raster body");
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path.string());
    return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read " + path.string());
    return is;
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_raster(const std::filesystem::path& path, const Raster<float>& r,
                  const GeoHeader& hdr) {
    auto os = open_out(path);
    write_header(os, "float32", r.width(), r.height(), hdr);
    write_body(os, r);
    if (!os) throw DataError("write failed: " + path.string());
}

void write_raster(const std::filesystem::path& path, const Raster<uint8_t>& r,
                  const GeoHeader& hdr) {
    auto os = open_out(path);
    write_header(os, "uint8", r.width(), r.height(), hdr);
    write_body(os, r);
    if (!os) throw DataError("write failed: " + path.string());
}

FloatRasterFile read_raster_f32(const std::filesystem::path& path) {
    auto is = open_in(path);
    const ParsedHeader h = read_header(is, path);
    if (h.dtype != "float32")
        throw DataError(path.string() + ": expected float32, got " + h.dtype);
    FloatRasterFile out;
    out.header = h.geo;
    out.data = Raster<float>(h.width, h.height);
    read_body(is, out.data, path);
    // Fold a finite declared nodata into the canonical invalid marker.
    if (!std::isnan(h.geo.nodata)) {
        const float nd = static_cast<float>(h.geo.nodata);
        for (int r = 0; r < out.data.height(); ++r)
            for (int c = 0; c < out.data.width(); ++c)
                if (out.data.at(r, c) == nd) out.data.at(r, c) = kInvalid;
    }
    return out;
}

ByteRasterFile read_raster_u8(const std::filesystem::path& path) {
    auto is = open_in(path);
    const ParsedHeader h = read_header(is, path);
    if (h.dtype != "uint8")
        throw DataError(path.string() + ": expected uint8, got " + h.dtype);
    ByteRasterFile out;
    out.header = h.geo;
    out.data = Raster<uint8_t>(h.width, h.height);
    read_body(is, out.data, path);
    return out;
}

void write_rpc(const std::filesystem::path& path, const RpcCamera& cam) {
    auto os = open_out(path);
    auto kv = [&](const char* key, double v) {
        os << key << ": " << format_double(v) << "\n";
    };
    kv("LINE_OFF", cam.line_off);
    kv("SAMP_OFF", cam.samp_off);
    kv("LAT_OFF", cam.y_off);
    kv("LONG_OFF", cam.x_off);
    kv("HEIGHT_OFF", cam.h_off);
    kv("LINE_SCALE", cam.line_scale);
    kv("SAMP_SCALE", cam.samp_scale);
    kv("LAT_SCALE", cam.y_scale);
    kv("LONG_SCALE", cam.x_scale);
    kv("HEIGHT_SCALE", cam.h_scale);
    auto block = [&](const char* key, const std::array<double, 20>& coef) {
        for (int i = 0; i < 20; ++i) {
            os << key << "_" << (i + 1) << ": " << format_double(coef[i])
               << "\n";
        }
    };
    block("LINE_NUM_COEFF", cam.line_num);
    block("LINE_DEN_COEFF", cam.line_den);
    block("SAMP_NUM_COEFF", cam.samp_num);
    block("SAMP_DEN_COEFF", cam.samp_den);
    if (cam.adj_line != 0.0) kv("ADJ_LINE", cam.adj_line);
    if (cam.adj_samp != 0.0) kv("ADJ_SAMP", cam.adj_samp);
    if (!cam.crs_tag.empty()) os << "CRS_TAG: " << cam.crs_tag << "\n";
    if (!os) throw DataError("write failed: " + path.string());
}

RpcCamera read_rpc(const std::filesystem::path& path) {
    auto is = open_in(path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        std::string key = line.substr(0, colon);
        std::string val = line.substr(colon + 1);
        const auto strip = [](std::string& s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
        };
        strip(key);
        strip(val);
        kv[key] = val;
    }
    auto need = [&](const std::string& key) {
        const auto it = kv.find(key);
        if (it == kv.end())
            throw DataError(path.string() + ": missing rpc key " + key);
        return std::stod(it->second);
    };
    RpcCamera cam;
    cam.line_off = need("LINE_OFF");
    cam.samp_off = need("SAMP_OFF");
    cam.y_off = need("LAT_OFF");
    cam.x_off = need("LONG_OFF");
    cam.h_off = need("HEIGHT_OFF");
    cam.line_scale = need("LINE_SCALE");
    cam.samp_scale = need("SAMP_SCALE");
    cam.y_scale = need("LAT_SCALE");
    cam.x_scale = need("LONG_SCALE");
    cam.h_scale = need("HEIGHT_SCALE");
    auto block = [&](const char* key, std::array<double, 20>& coef) {
        for (int i = 0; i < 20; ++i)
            coef[i] = need(std::string(key) + "_" + std::to_string(i + 1));
    };
    block("LINE_NUM_COEFF", cam.line_num);
    block("LINE_DEN_COEFF", cam.line_den);
    block("SAMP_NUM_COEFF", cam.samp_num);
    block("SAMP_DEN_COEFF", cam.samp_den);
    if (kv.count("ADJ_LINE")) cam.adj_line = std::stod(kv["ADJ_LINE"]);
    if (kv.count("ADJ_SAMP")) cam.adj_samp = std::stod(kv["ADJ_SAMP"]);
    if (kv.count("CRS_TAG")) cam.crs_tag = kv["CRS_TAG"];
    return cam;
}

void write_homography(const std::filesystem::path& path, const Homography& h) {
    auto os = open_out(path);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            os << format_double(h.m[3 * r + c]);
            os << (c == 2 ? "\n" : " ");
        }
    }
    if (!os) throw DataError("write failed: " + path.string());
}

Homography read_homography(const std::filesystem::path& path) {
    auto is = open_in(path);
    Homography h;
    for (double& v : h.m)
        if (!(is >> v))
            throw DataError(path.string() + ": expected 9 homography values");
    return h;
}

void write_point_cloud(const std::filesystem::path& path,
                       const PointCloud& pc) {
    if (!pc.labels.empty() && pc.labels.size() != pc.points.size())
        throw ArgumentError("point cloud label count mismatch");
    auto os = open_out(path);
    for (const auto& p : pc.points)
        os << format_double(p.x) << " " << format_double(p.y) << " "
           << format_double(p.z) << "\n";
    if (!os) throw DataError("write failed: " + path.string());
    if (!pc.labels.empty()) {
        auto ls = open_out(path.string() + ".labels");
        for (uint8_t v : pc.labels) ls << static_cast<int>(v) << "\n";
        if (!ls) throw DataError("write failed: " + path.string() + ".labels");
    }
}

PointCloud read_point_cloud(const std::filesystem::path& path) {
    auto is = open_in(path);
    PointCloud pc;
    WorldPoint p;
    while (is >> p.x >> p.y >> p.z) pc.points.push_back(p);
    const std::filesystem::path lp = path.string() + ".labels";
    if (std::filesystem::exists(lp)) {
        auto ls = open_in(lp);
        int v;
        while (ls >> v) pc.labels.push_back(static_cast<uint8_t>(v));
        if (pc.labels.size() != pc.points.size())
            throw DataError(lp.string() + ": label count mismatch");
    }
    return pc;
}

void write_height_field(const std::filesystem::path& z_path,
                        const std::filesystem::path& class_path,
                        const HeightField& hf, const std::string& crs_tag) {
    GeoHeader hdr;
    hdr.has_geo = true;
    hdr.geo = {hf.origin_x, hf.cell, 0.0, hf.origin_y, 0.0, hf.cell};
    hdr.crs_tag = crs_tag;
    write_raster(z_path, hf.z, hdr);
    if (!hf.classes.empty()) {
        GeoHeader chdr = hdr;
        chdr.nodata = kClassUnlabeled;
        for (uint8_t c : kScoredClasses) chdr.classes[c] = class_name(c);
        chdr.classes[kClassUnlabeled] = class_name(kClassUnlabeled);
        write_raster(class_path, hf.classes, chdr);
    }
}

HeightField read_height_field(const std::filesystem::path& z_path,
                              const std::filesystem::path& class_path) {
    const FloatRasterFile zf = read_raster_f32(z_path);
    HeightField hf;
    hf.z = zf.data;
    if (zf.header.has_geo) {
        hf.origin_x = zf.header.geo[0];
        hf.origin_y = zf.header.geo[3];
        hf.cell = zf.header.geo[1];
        if (zf.header.geo[5] != zf.header.geo[1] || zf.header.geo[2] != 0 ||
            zf.header.geo[4] != 0)
            throw DataError(z_path.string() +
                            ": expected an axis-aligned square-cell grid");
    }
    if (!class_path.empty() && std::filesystem::exists(class_path)) {
        const ByteRasterFile cf = read_raster_u8(class_path);
        if (cf.data.width() != hf.z.width() || cf.data.height() != hf.z.height())
            throw DataError(class_path.string() + ": class band size mismatch");
        hf.classes = cf.data;
    }
    return hf;
}

uint64_t fnv1a64(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 14695981039346656037ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t fnv1a64_file(const std::filesystem::path& path) {
    auto is = open_in(path);
    uint64_t h = 14695981039346656037ull;
    char buf[65536];
    while (is) {
        is.read(buf, sizeof buf);
        const std::streamsize got = is.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

}  // namespace semstereo
