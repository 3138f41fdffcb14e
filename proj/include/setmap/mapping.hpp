#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "evaluation.hpp"
#include "features.hpp"
#include "geometry.hpp"
#include "models.hpp"
#include "parallel.hpp"
#include "raster.hpp"

namespace setmap {

inline const std::string kProbabilityBand = "p_informal";

/// Probability per valid pixel; nodata wherever any epoch is nodata.
inline RasterGrid predict_raster(const ModelArtifact& model, std::span<const EpochComposite> composites,
                                 const IndexParams& params) {
    check_composite_triplet(composites);
    params.validate();
    if (model.feature_names != feature_names())
        fail(ErrorCode::FeatureMismatch, "model features do not match the canonical 66-feature order");
    const auto& g = composites[0].bands;
    RasterGrid map = make_raster(g.width, g.height, {kProbabilityBand}, g.geotransform, g.crs, g.nodata, g.nodata);
    parallel_for(g.height, [&](std::size_t row) {
        FeatureVector f;
        for (std::size_t c = 0; c < g.width; ++c)
            if (pixel_features(composites, row, c, params, f))
                map.at(0, row, c) = static_cast<float>(model.score(f.data()));
    });
    return map;
}

struct GridCellScore {
    GridCell cell;
    double score = 0.0;
    std::size_t valid_pixels = 0;
};

/// Scores every cell by the mean of its top 10% valid probabilities; cells
/// without valid pixels are dropped. Sorted by score descending, then by
/// (row0, col0).
inline std::vector<GridCellScore> rank_grid_cells(const RasterGrid& map, const GridSpec& spec) {
    if (map.band_count() != 1) fail(ErrorCode::InvalidArgument, "probability map must have one band");
    std::vector<GridCellScore> scores;
    for (const auto& cell : make_grid_cells(map, spec)) {
        std::vector<double> values;
        values.reserve(cell.rows * cell.cols);
        for (std::size_t r = cell.row0; r < cell.row0 + cell.rows; ++r)
            for (std::size_t c = cell.col0; c < cell.col0 + cell.cols; ++c) {
                const float v = map.at(0, r, c);
                if (!map.is_nodata(v)) values.push_back(v);
            }
        if (values.empty()) continue;
        GridCellScore s;
        s.cell = cell;
        s.valid_pixels = values.size();
        s.score = mean_of_top_decile(std::move(values));
        scores.push_back(s);
    }
    if (scores.empty()) fail(ErrorCode::NoValidPixels, "probability map has no valid pixels");
    std::sort(scores.begin(), scores.end(), [](const GridCellScore& a, const GridCellScore& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.cell.row0 != b.cell.row0) return a.cell.row0 < b.cell.row0;
        return a.cell.col0 < b.cell.col0;
    });
    return scores;
}

inline nlohmann::json cell_scores_to_json(std::span<const GridCellScore> scores) {
    nlohmann::json arr = nlohmann::json::array();
    std::size_t rank = 1;
    for (const auto& s : scores)
        arr.push_back({{"rank", rank++},
                       {"cell_id", s.cell.id},
                       {"cell_row", s.cell.cell_row},
                       {"cell_col", s.cell.cell_col},
                       {"row0", s.cell.row0},
                       {"rows", s.cell.rows},
                       {"col0", s.cell.col0},
                       {"cols", s.cell.cols},
                       {"score", s.score},
                       {"valid_pixels", s.valid_pixels}});
    return arr;
}

inline std::vector<GridCellScore> cell_scores_from_json(const nlohmann::json& arr) {
    std::vector<GridCellScore> out;
    try {
        for (const auto& j : arr) {
            GridCellScore s;
            s.cell.id = j.at("cell_id").get<std::size_t>();
            s.cell.cell_row = j.at("cell_row").get<std::size_t>();
            s.cell.cell_col = j.at("cell_col").get<std::size_t>();
            s.cell.row0 = j.at("row0").get<std::size_t>();
            s.cell.rows = j.at("rows").get<std::size_t>();
            s.cell.col0 = j.at("col0").get<std::size_t>();
            s.cell.cols = j.at("cols").get<std::size_t>();
            s.score = j.at("score").get<double>();
            s.valid_pixels = j.at("valid_pixels").get<std::size_t>();
            out.push_back(s);
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("malformed cell ranking: ") + e.what());
    }
    return out;
}

/// Either the first top_k ranked cells, or every cell scoring at least min_score.
struct CandidateSelection {
    std::optional<std::size_t> top_k;
    std::optional<double> min_score;
};

inline nlohmann::json candidates_geojson(std::span<const GridCellScore> ranked, const CandidateSelection& sel,
                                         const GeoTransform& gt, const std::string& crs) {
    nlohmann::json doc;
    doc["type"] = "FeatureCollection";
    if (!crs.empty()) doc["crs"] = {{"type", "name"}, {"properties", {{"name", crs}}}};
    doc["features"] = nlohmann::json::array();
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (sel.top_k && i >= *sel.top_k) break;
        if (sel.min_score && ranked[i].score < *sel.min_score) break;
        const auto& c = ranked[i].cell;
        nlohmann::json f;
        f["type"] = "Feature";
        f["properties"] = {{"cell_id", c.id}, {"score", ranked[i].score}, {"rank", i + 1}};
        f["geometry"] = {{"type", "Polygon"},
                         {"coordinates", nlohmann::json::array({ring_to_json(pixel_rect_ring(gt, c.row0, c.col0,
                                                                                             c.rows, c.cols))})}};
        doc["features"].push_back(std::move(f));
    }
    return doc;
}

inline nlohmann::json export_candidates(std::span<const GridCellScore> ranked, const CandidateSelection& sel,
                                        const GeoTransform& gt, const std::string& crs,
                                        const std::filesystem::path& out) {
    auto doc = candidates_geojson(ranked, sel, gt, crs);
    write_json_file(out, doc);
    return doc;
}

/// 8-bit grayscale preview (binary PGM): round-half-up of p * 255, nodata as 0.
inline std::string encode_pgm(const RasterGrid& map) {
    std::string out = "P5\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n255\n";
    for (float v : map.band(0)) {
        unsigned char px = 0;
        if (!map.is_nodata(v)) {
            const double scaled = std::floor(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0 + 0.5);
            px = static_cast<unsigned char>(scaled);
        }
        out.push_back(static_cast<char>(px));
    }
    return out;
}

inline void write_pgm(const RasterGrid& map, const std::filesystem::path& path) {
    write_file_bytes(path, encode_pgm(map));
}

} // namespace setmap
