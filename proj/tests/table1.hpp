#pragma once

// Positive-pixel counts per municipality from the published dataset table,
// plus a synthetic layout that reproduces them exactly.

#include <array>
#include <string>

#include "test_util.hpp"

namespace table1 {

struct Row {
    const char* name;
    std::size_t positives;
    std::size_t polygons;
};

inline constexpr std::array<Row, 9> kRows = {{
    {"Arauca", 2298, 7},
    {"Arauquita", 778, 2},
    {"Bogota", 2720, 6},
    {"Cucuta", 2485, 3},
    {"Maicao", 552, 7},
    {"Riohacha", 3501, 4},
    {"Soacha", 347, 1},
    {"Tibu", 730, 3},
    {"Uribia", 10345, 3},
}};

inline constexpr std::size_t kSide = 400;      // raster width and height, pixels
inline constexpr std::size_t kBlockWidth = 100; // polygon staircase width

/// Staircase ("L") polygon whose pixel-center count is exactly n: floor(n/100)
/// full rows of 100 pixels plus a partial row, in the raster's top-left corner.
inline setmap::Ring staircase(const setmap::GeoTransform& gt, std::size_t n) {
    const double q = static_cast<double>(n / kBlockWidth);
    const double rem = static_cast<double>(n % kBlockWidth);
    const double w = static_cast<double>(kBlockWidth);
    auto pt = [&](double col, double row) { return setmap::Point{gt.x_of(col), gt.y_of(row)}; };
    if (n % kBlockWidth == 0) return {pt(0, 0), pt(w, 0), pt(w, q), pt(0, q), pt(0, 0)};
    return {pt(0, 0), pt(w, 0), pt(w, q), pt(rem, q), pt(rem, q + 1), pt(0, q + 1), pt(0, 0)};
}

/// 6 formal and 24 unoccupied 50x50 grids below the polygon block (rows 150+).
inline std::vector<setmap::NegativeGrid> grids(const std::string& muni) {
    std::vector<setmap::NegativeGrid> out;
    for (std::size_t k = 0; k < 30; ++k) {
        const std::size_t cell_row = 3 + k / 8, cell_col = k % 8;
        out.push_back({muni + "_g" + std::to_string(k), k < 6 ? setmap::GridClass::Formal : setmap::GridClass::Unoccupied,
                       cell_row * 50, cell_col * 50, 50, 50});
    }
    return out;
}

} // namespace table1
