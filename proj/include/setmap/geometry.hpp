#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "raster.hpp"

namespace setmap {

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

/// Closed ring: first vertex repeated as the last.
using Ring = std::vector<Point>;

struct PolygonSet {
    std::vector<Ring> polygons;
    std::vector<std::string> labels; // empty, or one per polygon

    std::string label(std::size_t i) const {
        return i < labels.size() ? labels[i] : "polygon_" + std::to_string(i);
    }
};

inline void validate_ring(const Ring& ring) {
    if (ring.size() < 4) fail(ErrorCode::DegenerateRing, "ring has fewer than 4 vertices");
    if (!(ring.front() == ring.back())) fail(ErrorCode::DegenerateRing, "ring is not closed");
}

/// Even-odd crossing test. Points exactly on an edge resolve by the half-open
/// convention, so a shared edge between two polygons is owned by exactly one.
inline bool point_in_ring(const Ring& ring, double x, double y) {
    bool inside = false;
    for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
        const Point& a = ring[i];
        const Point& b = ring[j];
        if ((a.y > y) != (b.y > y)) {
            const double cross_x = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (x < cross_x) inside = !inside;
        }
    }
    return inside;
}

/// Per-pixel index of the first polygon (input order) containing the pixel
/// center, or -1. Row-major, width*height entries.
inline std::vector<std::int32_t> rasterize_polygon_ids(const PolygonSet& polys, const RasterGrid& grid) {
    const auto& gt = grid.geotransform;
    std::vector<std::int32_t> ids(grid.pixel_count(), -1);
    for (std::size_t p = 0; p < polys.polygons.size(); ++p) {
        const Ring& ring = polys.polygons[p];
        validate_ring(ring);
        double min_x = ring[0].x, max_x = ring[0].x, min_y = ring[0].y, max_y = ring[0].y;
        for (const auto& v : ring) {
            min_x = std::min(min_x, v.x);
            max_x = std::max(max_x, v.x);
            min_y = std::min(min_y, v.y);
            max_y = std::max(max_y, v.y);
        }
        // Column/row bounding box of centers, clamped to the raster.
        auto clamp_index = [](double v, std::size_t n) {
            if (v < 0.0) return std::size_t{0};
            if (v > static_cast<double>(n)) return n;
            return static_cast<std::size_t>(v);
        };
        const double c0 = (min_x - gt.origin_x) / gt.pixel_width - 0.5;
        const double c1 = (max_x - gt.origin_x) / gt.pixel_width - 0.5;
        const double r0 = (max_y - gt.origin_y) / gt.pixel_height - 0.5;
        const double r1 = (min_y - gt.origin_y) / gt.pixel_height - 0.5;
        const std::size_t col_begin = clamp_index(std::floor(c0), grid.width);
        const std::size_t col_end = clamp_index(std::ceil(c1) + 1.0, grid.width);
        const std::size_t row_begin = clamp_index(std::floor(r0), grid.height);
        const std::size_t row_end = clamp_index(std::ceil(r1) + 1.0, grid.height);
        for (std::size_t r = row_begin; r < row_end; ++r) {
            const double cy = gt.y_of(static_cast<double>(r) + 0.5);
            for (std::size_t c = col_begin; c < col_end; ++c) {
                auto& slot = ids[r * grid.width + c];
                if (slot >= 0) continue;
                if (point_in_ring(ring, gt.x_of(static_cast<double>(c) + 0.5), cy))
                    slot = static_cast<std::int32_t>(p);
            }
        }
    }
    return ids;
}

/// 0/1 mask: 1 iff the pixel center lies inside any polygon.
inline std::vector<std::uint8_t> rasterize_polygons(const PolygonSet& polys, const RasterGrid& grid) {
    const auto ids = rasterize_polygon_ids(polys, grid);
    std::vector<std::uint8_t> mask(ids.size());
    std::transform(ids.begin(), ids.end(), mask.begin(), [](std::int32_t id) { return id >= 0 ? 1 : 0; });
    return mask;
}

struct GridSpec {
    double cell_size = 500.0;
};

struct GridCell {
    std::size_t id = 0;
    std::size_t cell_row = 0;
    std::size_t cell_col = 0;
    std::size_t row0 = 0;
    std::size_t rows = 0;
    std::size_t col0 = 0;
    std::size_t cols = 0;

    bool contains(std::size_t r, std::size_t c) const {
        return r >= row0 && r < row0 + rows && c >= col0 && c < col0 + cols;
    }
};

/// Cell edge length in pixels; the cell size must be a positive integer multiple
/// of the pixel size.
inline std::size_t cell_pixels(const RasterGrid& grid, const GridSpec& spec) {
    const double pixel = grid.geotransform.pixel_width;
    const double ratio = spec.cell_size / pixel;
    const double rounded = std::round(ratio);
    if (!(spec.cell_size > 0.0) || rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 ||
        std::abs(std::abs(grid.geotransform.pixel_height) - pixel) > 1e-9)
        fail(ErrorCode::GridMismatch, "cell size " + std::to_string(spec.cell_size) +
                                          " is not a multiple of the pixel size " + std::to_string(pixel));
    return static_cast<std::size_t>(rounded);
}

/// Tiles the raster from its origin; edge cells may be partial. Ids run
/// row-major over cells.
inline std::vector<GridCell> make_grid_cells(const RasterGrid& grid, const GridSpec& spec) {
    const std::size_t n = cell_pixels(grid, spec);
    const std::size_t cell_rows = (grid.height + n - 1) / n;
    const std::size_t cell_cols = (grid.width + n - 1) / n;
    std::vector<GridCell> cells;
    cells.reserve(cell_rows * cell_cols);
    for (std::size_t cr = 0; cr < cell_rows; ++cr)
        for (std::size_t cc = 0; cc < cell_cols; ++cc) {
            GridCell cell;
            cell.id = cr * cell_cols + cc;
            cell.cell_row = cr;
            cell.cell_col = cc;
            cell.row0 = cr * n;
            cell.col0 = cc * n;
            cell.rows = std::min(n, grid.height - cell.row0);
            cell.cols = std::min(n, grid.width - cell.col0);
            cells.push_back(cell);
        }
    return cells;
}

/// Counter-clockwise ring around a pixel rectangle.
inline Ring pixel_rect_ring(const GeoTransform& gt, std::size_t row0, std::size_t col0, std::size_t rows,
                            std::size_t cols) {
    const double x0 = gt.x_of(static_cast<double>(col0));
    const double x1 = gt.x_of(static_cast<double>(col0 + cols));
    const double y_top = gt.y_of(static_cast<double>(row0));
    const double y_bottom = gt.y_of(static_cast<double>(row0 + rows));
    return {{x0, y_bottom}, {x1, y_bottom}, {x1, y_top}, {x0, y_top}, {x0, y_bottom}};
}

// GeoJSON interchange. Only the exterior ring of each Polygon is used.

inline nlohmann::json ring_to_json(const Ring& ring) {
    nlohmann::json coords = nlohmann::json::array();
    for (const auto& p : ring) coords.push_back({p.x, p.y});
    return coords;
}

inline PolygonSet polygons_from_geojson(const nlohmann::json& doc) {
    PolygonSet set;
    try {
        if (doc.at("type") != "FeatureCollection")
            fail(ErrorCode::InvalidArgument, "expected a GeoJSON FeatureCollection");
        for (const auto& feature : doc.at("features")) {
            const auto& geom = feature.at("geometry");
            if (geom.at("type") != "Polygon") fail(ErrorCode::InvalidArgument, "only Polygon geometries are supported");
            const auto& rings = geom.at("coordinates");
            if (rings.empty()) fail(ErrorCode::DegenerateRing, "polygon without rings");
            Ring ring;
            for (const auto& c : rings.at(0)) ring.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
            validate_ring(ring);
            std::string label = "polygon_" + std::to_string(set.polygons.size());
            if (feature.contains("properties") && feature["properties"].is_object()) {
                const auto& props = feature["properties"];
                for (const char* key : {"settlement_id", "id", "name"})
                    if (props.contains(key)) {
                        label = props[key].is_string() ? props[key].get<std::string>() : props[key].dump();
                        break;
                    }
            }
            set.polygons.push_back(std::move(ring));
            set.labels.push_back(std::move(label));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("malformed GeoJSON: ") + e.what());
    }
    return set;
}

inline nlohmann::json polygons_to_geojson(const PolygonSet& set, const std::string& crs = {}) {
    nlohmann::json doc;
    doc["type"] = "FeatureCollection";
    if (!crs.empty()) doc["crs"] = {{"type", "name"}, {"properties", {{"name", crs}}}};
    doc["features"] = nlohmann::json::array();
    for (std::size_t i = 0; i < set.polygons.size(); ++i) {
        nlohmann::json f;
        f["type"] = "Feature";
        f["properties"] = {{"settlement_id", set.label(i)}};
        f["geometry"] = {{"type", "Polygon"}, {"coordinates", nlohmann::json::array({ring_to_json(set.polygons[i])})}};
        doc["features"].push_back(std::move(f));
    }
    return doc;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
    }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
    write_file_bytes(path, doc.dump(1) + "\n");
}

inline PolygonSet read_polygons(const std::filesystem::path& path) {
    return polygons_from_geojson(read_json_file(path));
}

} // namespace setmap
