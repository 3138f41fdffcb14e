#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"

namespace setmap {

/// Affine pixel -> CRS mapping: x = origin_x + col * pixel_width,
/// y = origin_y + row * pixel_height (pixel_height negative, north-up).
struct GeoTransform {
    double origin_x = 0.0;
    double pixel_width = 10.0;
    double row_rotation = 0.0;
    double origin_y = 0.0;
    double col_rotation = 0.0;
    double pixel_height = -10.0;

    std::array<double, 6> to_array() const {
        return {origin_x, pixel_width, row_rotation, origin_y, col_rotation, pixel_height};
    }
    static GeoTransform from_array(const std::array<double, 6>& a) {
        return {a[0], a[1], a[2], a[3], a[4], a[5]};
    }

    double x_of(double col) const { return origin_x + col * pixel_width; }
    double y_of(double row) const { return origin_y + row * pixel_height; }

    bool operator==(const GeoTransform&) const = default;
};

/// Band-sequential, row-major, north-up float raster.
struct RasterGrid {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::string> band_names;
    GeoTransform geotransform;
    std::string crs;
    float nodata = -9999.0f;
    std::vector<float> pixels;

    std::size_t band_count() const { return band_names.size(); }
    std::size_t pixel_count() const { return width * height; }

    float& at(std::size_t band, std::size_t row, std::size_t col) {
        return pixels[(band * height + row) * width + col];
    }
    float at(std::size_t band, std::size_t row, std::size_t col) const {
        return pixels[(band * height + row) * width + col];
    }

    std::span<float> band(std::size_t b) {
        return {pixels.data() + b * pixel_count(), pixel_count()};
    }
    std::span<const float> band(std::size_t b) const {
        return {pixels.data() + b * pixel_count(), pixel_count()};
    }

    bool is_nodata(float v) const { return v == nodata; }

    /// Index of the named band, or -1.
    long band_index(const std::string& name) const {
        for (std::size_t i = 0; i < band_names.size(); ++i)
            if (band_names[i] == name) return static_cast<long>(i);
        return -1;
    }

    bool same_extent(const RasterGrid& other) const {
        return width == other.width && height == other.height && geotransform == other.geotransform;
    }

    bool operator==(const RasterGrid& other) const {
        if (width != other.width || height != other.height || band_names != other.band_names ||
            !(geotransform == other.geotransform) || crs != other.crs ||
            std::bit_cast<std::uint32_t>(nodata) != std::bit_cast<std::uint32_t>(other.nodata) ||
            pixels.size() != other.pixels.size())
            return false;
        return std::memcmp(pixels.data(), other.pixels.data(), pixels.size() * sizeof(float)) == 0;
    }

    void validate() const {
        if (width == 0 || height == 0) fail(ErrorCode::InvalidArgument, "raster has zero width or height");
        if (band_names.empty()) fail(ErrorCode::InvalidArgument, "raster has no bands");
        if (!(geotransform.pixel_width > 0.0))
            fail(ErrorCode::InvalidArgument, "pixel width must be positive");
        if (!(geotransform.pixel_height < 0.0))
            fail(ErrorCode::InvalidArgument, "pixel height entry must be negative (north-up)");
        if (!std::isfinite(nodata)) fail(ErrorCode::InvalidArgument, "nodata must be finite");
        if (pixels.size() != width * height * band_names.size())
            fail(ErrorCode::LengthMismatch, "pixel array length does not match width*height*bands");
        for (float v : pixels)
            if (!std::isfinite(v) && v != nodata)
                fail(ErrorCode::NonFinite, "raster holds a non-finite value that is not nodata");
    }
};

/// A raster of the given shape filled with `fill`.
inline RasterGrid make_raster(std::size_t width, std::size_t height, std::vector<std::string> band_names,
                              const GeoTransform& gt, std::string crs, float nodata = -9999.0f,
                              float fill = 0.0f) {
    RasterGrid g;
    g.width = width;
    g.height = height;
    g.band_names = std::move(band_names);
    g.geotransform = gt;
    g.crs = std::move(crs);
    g.nodata = nodata;
    g.pixels.assign(width * height * g.band_names.size(), fill);
    return g;
}

namespace bsqr {

inline constexpr char kMagic[4] = {'B', 'S', 'Q', 'R'};

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string header_text(const RasterGrid& g) {
    nlohmann::json h;
    h["width"] = g.width;
    h["height"] = g.height;
    h["bands"] = g.band_count();
    h["band_names"] = g.band_names;
    h["geotransform"] = g.geotransform.to_array();
    h["crs"] = g.crs;
    h["nodata"] = static_cast<double>(g.nodata);
    h["dtype"] = "float32";
    return h.dump();
}

} // namespace bsqr

/// Serializes to the BSQR container: magic, u32 header length, JSON header,
/// then float32 little-endian payload.
inline std::string encode_raster(const RasterGrid& grid) {
    grid.validate();
    const std::string header = bsqr::header_text(grid);
    std::string out;
    out.reserve(8 + header.size() + grid.pixels.size() * 4);
    out.append(bsqr::kMagic, 4);
    bsqr::put_u32(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    for (float v : grid.pixels) bsqr::put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

inline RasterGrid decode_raster(std::span<const unsigned char> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), bsqr::kMagic, 4) != 0)
        fail(ErrorCode::BadMagic, "missing BSQR magic");
    if (bytes.size() < 8) fail(ErrorCode::TruncatedPayload, "file ends inside the header length field");
    const std::uint32_t header_len = bsqr::get_u32(bytes.data() + 4);
    if (bytes.size() < 8ull + header_len) fail(ErrorCode::TruncatedPayload, "file ends inside the header");

    nlohmann::json h;
    try {
        h = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("unparseable header: ") + e.what());
    }

    RasterGrid g;
    try {
        if (h.at("dtype").get<std::string>() != "float32")
            fail(ErrorCode::InvalidArgument, "dtype must be float32");
        g.width = h.at("width").get<std::size_t>();
        g.height = h.at("height").get<std::size_t>();
        g.band_names = h.at("band_names").get<std::vector<std::string>>();
        if (h.at("bands").get<std::size_t>() != g.band_names.size())
            fail(ErrorCode::LengthMismatch, "band count disagrees with band_names");
        g.geotransform = GeoTransform::from_array(h.at("geotransform").get<std::array<double, 6>>());
        g.crs = h.at("crs").get<std::string>();
        g.nodata = static_cast<float>(h.at("nodata").get<double>());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("malformed header: ") + e.what());
    }

    const std::size_t expected = g.width * g.height * g.band_names.size() * 4;
    const std::size_t available = bytes.size() - 8 - header_len;
    if (available < expected)
        fail(ErrorCode::TruncatedPayload, "payload holds " + std::to_string(available) + " bytes, header implies " +
                                              std::to_string(expected));
    if (available > expected)
        fail(ErrorCode::LengthMismatch, "payload holds " + std::to_string(available) + " bytes, header implies " +
                                            std::to_string(expected));

    g.pixels.resize(expected / 4);
    const unsigned char* p = bytes.data() + 8 + header_len;
    for (std::size_t i = 0; i < g.pixels.size(); ++i) {
        g.pixels[i] = std::bit_cast<float>(bsqr::get_u32(p + 4 * i));
        if (std::isnan(g.pixels[i])) fail(ErrorCode::NonFinite, "NaN in raster payload");
    }
    g.validate();
    return g;
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) fail(ErrorCode::Io, "short write to " + path.string());
}

inline RasterGrid read_raster(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_raster(bytes);
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.detail());
    }
}

inline void write_raster(const RasterGrid& grid, const std::filesystem::path& path) {
    write_file_bytes(path, encode_raster(grid));
}

} // namespace setmap
