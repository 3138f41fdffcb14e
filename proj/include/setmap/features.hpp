#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "compositor.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "raster.hpp"

namespace setmap {

inline constexpr std::size_t kBandCount = 12;
inline constexpr std::size_t kIndexCount = 10;
inline constexpr std::size_t kFeaturesPerEpoch = kBandCount + kIndexCount;
inline constexpr std::size_t kFeatureCount = 3 * kFeaturesPerEpoch; // 66

enum class SpectralIndex { NDVI, SAVI, MNDWI, NDBI, UI, NBI, BRBA, NBAI, MBI, BAEI };

inline constexpr std::array<SpectralIndex, kIndexCount> kIndices = {
    SpectralIndex::NDVI, SpectralIndex::SAVI, SpectralIndex::MNDWI, SpectralIndex::NDBI, SpectralIndex::UI,
    SpectralIndex::NBI,  SpectralIndex::BRBA, SpectralIndex::NBAI,  SpectralIndex::MBI,  SpectralIndex::BAEI};

inline const std::array<std::string, kIndexCount> kIndexNames = {"NDVI", "SAVI", "MNDWI", "NDBI", "UI",
                                                                 "NBI",  "BRBA", "NBAI",  "MBI",  "BAEI"};

inline const std::string& index_name(SpectralIndex kind) { return kIndexNames[static_cast<std::size_t>(kind)]; }

inline SpectralIndex parse_index(const std::string& name) {
    for (std::size_t i = 0; i < kIndexCount; ++i)
        if (kIndexNames[i] == name) return kIndices[i];
    fail(ErrorCode::UnknownIndex, "unknown spectral index '" + name + "'");
}

struct IndexParams {
    double savi_l = 0.5;
    double baei_c = 0.3;
    double zero_denominator_value = 0.0;

    void validate() const {
        if (!(savi_l >= 0.0 && savi_l <= 1.0)) fail(ErrorCode::InvalidArgument, "savi_l must lie in [0, 1]");
        if (!std::isfinite(baei_c) || !std::isfinite(zero_denominator_value))
            fail(ErrorCode::InvalidArgument, "index parameters must be finite");
    }
};

/// Band values in canonical order b1..b12 (see kBandNames).
using BandValues = std::array<double, kBandCount>;

namespace band {
inline constexpr std::size_t b1 = 0, b2 = 1, b3 = 2, b4 = 3, b5 = 4, b6 = 5, b7 = 6, b8 = 7, b8A = 8, b9 = 9,
                             b11 = 10, b12 = 11;
}

inline double compute_index(SpectralIndex kind, const BandValues& v, const IndexParams& params) {
    using namespace band;
    const double zero = params.zero_denominator_value;
    auto ratio = [zero](double num, double den) { return den == 0.0 ? zero : num / den; };
    switch (kind) {
    case SpectralIndex::NDVI: return ratio(v[b8] - v[b4], v[b8] + v[b4]);
    case SpectralIndex::SAVI:
        return ratio((v[b8A] - v[b4]) * (1.0 + params.savi_l), v[b8A] + v[b4] + params.savi_l);
    case SpectralIndex::MNDWI: return ratio(v[b3] - v[b11], v[b3] + v[b11]);
    case SpectralIndex::NDBI: return ratio(v[b11] - v[b8], v[b11] + v[b8]);
    case SpectralIndex::UI: return ratio(v[b7] - v[b5], v[b7] + v[b5]);
    case SpectralIndex::NBI: return ratio(v[b4] * v[b11], v[b8A]);
    case SpectralIndex::BRBA: return ratio(v[b4], v[b11]);
    case SpectralIndex::NBAI: {
        if (v[b3] == 0.0) return zero;
        const double swir_ratio = v[b12] / v[b3];
        return ratio(v[b11] - swir_ratio, v[b11] + swir_ratio);
    }
    case SpectralIndex::MBI: return ratio(v[b12] * v[b4] - v[b8A] * v[b8A], v[b4] + v[b8A] + v[b12]);
    case SpectralIndex::BAEI: return ratio(v[b4] + params.baei_c, v[b3] + v[b11]);
    }
    fail(ErrorCode::UnknownIndex, "unhandled spectral index");
}

inline double compute_index(const std::string& kind, const BandValues& v, const IndexParams& params) {
    return compute_index(parse_index(kind), v, params);
}

inline void check_composite(const EpochComposite& c) {
    const auto& g = c.bands;
    if (g.band_count() != kBandCount) fail(ErrorCode::InvalidArgument, "composite must carry exactly 12 bands");
    for (std::size_t i = 0; i < kBandCount; ++i)
        if (g.band_names[i] != kBandNames[i])
            fail(ErrorCode::InvalidArgument, "composite band " + std::to_string(i) + " is '" + g.band_names[i] +
                                                 "', expected '" + kBandNames[i] + "'");
}

/// Reads the 12 band values of one pixel; false if any is nodata.
inline bool read_pixel_bands(const RasterGrid& g, std::size_t row, std::size_t col, BandValues& out) {
    for (std::size_t b = 0; b < kBandCount; ++b) {
        const float v = g.at(b, row, col);
        if (g.is_nodata(v)) return false;
        out[b] = static_cast<double>(v);
    }
    return true;
}

inline RasterGrid compute_index_raster(SpectralIndex kind, const EpochComposite& composite,
                                       const IndexParams& params) {
    check_composite(composite);
    const auto& g = composite.bands;
    RasterGrid out = make_raster(g.width, g.height, {index_name(kind)}, g.geotransform, g.crs, g.nodata, g.nodata);
    parallel_for(g.height, [&](std::size_t row) {
        BandValues v;
        for (std::size_t c = 0; c < g.width; ++c)
            if (read_pixel_bands(g, row, c, v)) out.at(0, row, c) = static_cast<float>(compute_index(kind, v, params));
    });
    return out;
}

/// All ten indices as one 10-band raster.
inline RasterGrid compute_index_stack(const EpochComposite& composite, const IndexParams& params) {
    check_composite(composite);
    const auto& g = composite.bands;
    RasterGrid out = make_raster(g.width, g.height, {kIndexNames.begin(), kIndexNames.end()}, g.geotransform, g.crs,
                                 g.nodata, g.nodata);
    parallel_for(g.height, [&](std::size_t row) {
        BandValues v;
        for (std::size_t c = 0; c < g.width; ++c)
            if (read_pixel_bands(g, row, c, v))
                for (std::size_t k = 0; k < kIndexCount; ++k)
                    out.at(k, row, c) = static_cast<float>(compute_index(kIndices[k], v, params));
    });
    return out;
}

using FeatureVector = std::array<double, kFeatureCount>;

/// Canonical feature labels: per epoch e1..e3, the 12 bands then the 10 indices.
inline const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (int e = 1; e <= 3; ++e) {
            const std::string prefix = "e" + std::to_string(e) + "_";
            for (const auto& b : kBandNames) n.push_back(prefix + b);
            for (const auto& i : kIndexNames) n.push_back(prefix + i);
        }
        return n;
    }();
    return names;
}

/// The three composites must be in epoch order and share one extent.
inline void check_composite_triplet(std::span<const EpochComposite> composites) {
    if (composites.size() != 3) fail(ErrorCode::MissingEpoch, "exactly three epoch composites are required");
    for (std::size_t e = 0; e < 3; ++e) {
        if (!(composites[e].epoch == kEpochs[e]))
            fail(ErrorCode::MissingEpoch, "composite " + std::to_string(e) + " is for epoch " +
                                              composites[e].epoch.label() + ", expected " + kEpochs[e].label());
        check_composite(composites[e]);
        if (!composites[e].bands.same_extent(composites[0].bands))
            fail(ErrorCode::ExtentMismatch, "epoch composites do not share one extent");
    }
}

/// The 66-value vector of one pixel; false if any epoch has nodata there.
inline bool pixel_features(std::span<const EpochComposite> composites, std::size_t row, std::size_t col,
                           const IndexParams& params, FeatureVector& out) {
    BandValues v;
    for (std::size_t e = 0; e < 3; ++e) {
        if (!read_pixel_bands(composites[e].bands, row, col, v)) return false;
        double* block = out.data() + e * kFeaturesPerEpoch;
        for (std::size_t b = 0; b < kBandCount; ++b) block[b] = v[b];
        for (std::size_t k = 0; k < kIndexCount; ++k) block[kBandCount + k] = compute_index(kIndices[k], v, params);
    }
    return true;
}

struct PixelRef {
    std::size_t row = 0;
    std::size_t col = 0;
};

struct AssembledFeatures {
    std::vector<PixelRef> pixels;        // pixels kept, in input order
    std::vector<FeatureVector> features; // parallel to pixels
    std::size_t skipped = 0;             // pixels with nodata in some epoch
};

inline AssembledFeatures assemble_features(std::span<const EpochComposite> composites, const IndexParams& params,
                                           std::span<const PixelRef> pixels) {
    check_composite_triplet(composites);
    params.validate();
    const auto& g = composites[0].bands;
    std::vector<FeatureVector> all(pixels.size());
    std::vector<std::uint8_t> ok(pixels.size(), 0);
    parallel_for(pixels.size(), [&](std::size_t i) {
        if (pixels[i].row >= g.height || pixels[i].col >= g.width)
            fail(ErrorCode::InvalidArgument, "pixel outside the composite extent");
        ok[i] = pixel_features(composites, pixels[i].row, pixels[i].col, params, all[i]) ? 1 : 0;
    });
    AssembledFeatures out;
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        if (!ok[i]) {
            ++out.skipped;
            continue;
        }
        out.pixels.push_back(pixels[i]);
        out.features.push_back(all[i]);
    }
    return out;
}

/// Pixel validity across all bands of all three epochs, row-major.
inline std::vector<std::uint8_t> valid_in_all_epochs(std::span<const EpochComposite> composites) {
    check_composite_triplet(composites);
    const auto& g = composites[0].bands;
    std::vector<std::uint8_t> valid(g.pixel_count(), 1);
    for (const auto& c : composites)
        for (std::size_t b = 0; b < kBandCount; ++b) {
            auto values = c.bands.band(b);
            for (std::size_t i = 0; i < values.size(); ++i)
                if (c.bands.is_nodata(values[i])) valid[i] = 0;
        }
    return valid;
}

// ---------------------------------------------------------------------------
// Labeled feature table

struct FeatureRow {
    std::string pixel_id;
    std::string municipality;
    std::string settlement_id; // set for label 1
    std::string grid_id;       // set for label 0
    int label = 0;
    FeatureVector features{};

    /// Aggregation unit for settlement-level scoring.
    const std::string& unit_id() const { return label == 1 ? settlement_id : grid_id; }
};

using FeatureTable = std::vector<FeatureRow>;

/// "<municipality>:<row>:<col>" with zero-padded coordinates, so string order
/// follows raster order within a municipality.
inline std::string make_pixel_id(const std::string& municipality, std::size_t row, std::size_t col) {
    char buf[32];
    std::snprintf(buf, sizeof buf, ":%06zu:%06zu", row, col);
    return municipality + buf;
}

inline void validate_table(const FeatureTable& table) {
    std::vector<const std::string*> ids;
    ids.reserve(table.size());
    for (const auto& r : table) {
        if (r.label != 0 && r.label != 1) fail(ErrorCode::InvalidArgument, "label must be 0 or 1: " + r.pixel_id);
        if (r.label == 1 && r.settlement_id.empty())
            fail(ErrorCode::InvalidArgument, "positive row without settlement_id: " + r.pixel_id);
        if (r.label == 0 && r.grid_id.empty())
            fail(ErrorCode::InvalidArgument, "negative row without grid_id: " + r.pixel_id);
        for (double f : r.features)
            if (!std::isfinite(f)) fail(ErrorCode::NonFinite, "non-finite feature in row " + r.pixel_id);
        ids.push_back(&r.pixel_id);
    }
    std::sort(ids.begin(), ids.end(), [](const std::string* a, const std::string* b) { return *a < *b; });
    for (std::size_t i = 1; i < ids.size(); ++i)
        if (*ids[i] == *ids[i - 1]) fail(ErrorCode::DuplicatePixel, "duplicate pixel_id " + *ids[i]);
}

inline std::string table_csv_header() {
    std::string h = "pixel_id,municipality,settlement_id,grid_id,label";
    char buf[8];
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        std::snprintf(buf, sizeof buf, ",f%02zu", i);
        h += buf;
    }
    return h;
}

inline void check_csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") != std::string::npos)
        fail(ErrorCode::InvalidArgument, "text field cannot be written to CSV: '" + s + "'");
}

inline void write_feature_table(const FeatureTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    out << table_csv_header() << '\n';
    char buf[40];
    std::string line;
    for (const auto& r : table) {
        for (const auto* s : {&r.pixel_id, &r.municipality, &r.settlement_id, &r.grid_id}) check_csv_field(*s);
        line = r.pixel_id + ',' + r.municipality + ',' + r.settlement_id + ',' + r.grid_id + ',' +
               std::to_string(r.label);
        for (double f : r.features) {
            std::snprintf(buf, sizeof buf, ",%.9g", f);
            line += buf;
        }
        line += '\n';
        out << line;
    }
    if (!out) fail(ErrorCode::Io, "short write to " + path.string());
}

inline FeatureTable read_feature_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != table_csv_header())
        fail(ErrorCode::InvalidArgument, path.string() + ": unexpected CSV header");
    FeatureTable table;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto bad = [&](const std::string& why) {
            fail(ErrorCode::InvalidArgument, path.string() + ":" + std::to_string(line_no) + ": " + why);
        };
        FeatureRow r;
        std::size_t pos = 0;
        auto next_field = [&]() -> std::string_view {
            if (pos > line.size()) bad("too few fields");
            std::size_t end = line.find(',', pos);
            if (end == std::string::npos) end = line.size();
            std::string_view f(line.data() + pos, end - pos);
            pos = end + 1;
            return f;
        };
        r.pixel_id = next_field();
        r.municipality = next_field();
        r.settlement_id = next_field();
        r.grid_id = next_field();
        const auto label = next_field();
        if (label == "1") r.label = 1;
        else if (label == "0") r.label = 0;
        else bad("label must be 0 or 1");
        for (std::size_t i = 0; i < kFeatureCount; ++i) {
            const auto f = next_field();
            std::string tmp(f);
            char* end = nullptr;
            r.features[i] = std::strtod(tmp.c_str(), &end);
            if (tmp.empty() || end != tmp.c_str() + tmp.size()) bad("malformed number '" + tmp + "'");
        }
        if (pos <= line.size()) bad("too many fields");
        table.push_back(std::move(r));
    }
    return table;
}

} // namespace setmap
