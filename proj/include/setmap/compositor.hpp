#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "geometry.hpp"
#include "parallel.hpp"
#include "raster.hpp"

namespace setmap {

/// The twelve surface bands used as features, in canonical order (b10 excluded).
inline const std::array<std::string, 12> kBandNames = {"b1", "b2", "b3", "b4",  "b5",  "b6",
                                                       "b7", "b8", "b8A", "b9", "b11", "b12"};

/// Two-year compositing window.
struct Epoch {
    int first_year = 0;
    int last_year = 0;

    std::string label() const { return std::to_string(first_year) + "-" + std::to_string(last_year); }
    bool operator==(const Epoch&) const = default;
};

inline const std::array<Epoch, 3> kEpochs = {Epoch{2015, 2016}, Epoch{2017, 2018}, Epoch{2019, 2020}};

inline std::optional<Epoch> parse_epoch(const std::string& label) {
    for (const auto& e : kEpochs)
        if (e.label() == label) return e;
    return std::nullopt;
}

struct Date {
    int year = 0;
    int month = 0;
    int day = 0;
    auto operator<=>(const Date&) const = default;
};

/// Strict YYYY-MM-DD calendar date.
inline Date parse_iso_date(const std::string& text) {
    auto bad = [&] { fail(ErrorCode::InvalidArgument, "not an ISO-8601 calendar date: '" + text + "'"); };
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') bad();
    for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9})
        if (text[i] < '0' || text[i] > '9') bad();
    Date d{std::stoi(text.substr(0, 4)), std::stoi(text.substr(5, 2)), std::stoi(text.substr(8, 2))};
    static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (d.month < 1 || d.month > 12) bad();
    const bool leap = (d.year % 4 == 0 && d.year % 100 != 0) || d.year % 400 == 0;
    const int max_day = kDays[d.month - 1] + (d.month == 2 && leap ? 1 : 0);
    if (d.day < 1 || d.day > max_day) bad();
    return d;
}

inline bool in_epoch(const Date& d, const Epoch& e) { return d.year >= e.first_year && d.year <= e.last_year; }

/// One single-band raster at its native resolution.
struct SceneBand {
    std::string name;
    RasterGrid raster;
};

struct Scene {
    Date acquired;
    std::vector<SceneBand> bands;
    RasterGrid valid_mask; // 10 m, 1 = usable
};

struct EpochComposite {
    Epoch epoch;
    RasterGrid bands; // 12 bands named per kBandNames, 10 m
};

/// Nearest-neighbour upsampling of a 10/20/60 m raster to 10 m.
inline RasterGrid resample_to_10m(const RasterGrid& band) {
    const double pw = band.geotransform.pixel_width;
    std::size_t factor = 0;
    for (std::size_t f : {1u, 2u, 6u})
        if (std::abs(pw - 10.0 * static_cast<double>(f)) < 1e-9 &&
            std::abs(-band.geotransform.pixel_height - pw) < 1e-9)
            factor = f;
    if (factor == 0)
        fail(ErrorCode::UnsupportedResolution, "pixel size " + std::to_string(pw) + " m is not one of 10, 20, 60");
    if (factor == 1) return band;

    RasterGrid out = make_raster(band.width * factor, band.height * factor, band.band_names, band.geotransform,
                                 band.crs, band.nodata);
    out.geotransform.pixel_width = 10.0;
    out.geotransform.pixel_height = -10.0;
    for (std::size_t b = 0; b < band.band_count(); ++b)
        for (std::size_t r = 0; r < out.height; ++r)
            for (std::size_t c = 0; c < out.width; ++c) out.at(b, r, c) = band.at(b, r / factor, c / factor);
    return out;
}

/// Median of the values in `values` (reordered in place); even counts take the
/// midpoint of the middle pair. Empty input yields `empty_value`.
inline float median_of(std::vector<float>& values, float empty_value) {
    const std::size_t n = values.size();
    if (n == 0) return empty_value;
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(values.begin(), mid, values.end());
    const float upper = *mid;
    if (n % 2 == 1) return upper;
    const float lower = *std::max_element(values.begin(), mid);
    return static_cast<float>((static_cast<double>(lower) + static_cast<double>(upper)) / 2.0);
}

/// Per-pixel, per-band median over scenes dated inside the epoch, counting
/// only pixels whose mask is 1 and whose value is not the band's nodata.
/// Bands are resampled to 10 m first. Pixels with no valid observation get
/// `nodata`.
inline EpochComposite median_composite(const std::vector<Scene>& scenes, const Epoch& epoch,
                                       float nodata = -9999.0f) {
    std::vector<const Scene*> used;
    for (const auto& s : scenes)
        if (in_epoch(s.acquired, epoch)) used.push_back(&s);
    if (used.empty()) fail(ErrorCode::NoScenes, "no scenes dated within epoch " + epoch.label());

    const RasterGrid& ref = used.front()->valid_mask;
    for (const Scene* s : used) {
        const auto& m = s->valid_mask;
        if (std::abs(m.geotransform.pixel_width - 10.0) > 1e-9)
            fail(ErrorCode::ExtentMismatch, "validity mask must be on the 10 m grid");
        if (!m.same_extent(ref)) fail(ErrorCode::ExtentMismatch, "scenes do not share one extent");
    }

    // Resampled band views: per scene, slot per canonical band (nullptr if absent).
    std::vector<std::array<std::optional<RasterGrid>, 12>> resampled(used.size());
    for (std::size_t s = 0; s < used.size(); ++s) {
        for (const auto& sb : used[s]->bands) {
            auto it = std::find(kBandNames.begin(), kBandNames.end(), sb.name);
            if (it == kBandNames.end()) continue; // b10 and unknown bands are ignored
            RasterGrid up = resample_to_10m(sb.raster);
            if (!up.same_extent(ref))
                fail(ErrorCode::ExtentMismatch, "band " + sb.name + " does not cover the mask extent after resampling");
            resampled[s][static_cast<std::size_t>(it - kBandNames.begin())] = std::move(up);
        }
    }

    EpochComposite out;
    out.epoch = epoch;
    out.bands = make_raster(ref.width, ref.height, {kBandNames.begin(), kBandNames.end()}, ref.geotransform,
                            ref.crs, nodata, nodata);
    const std::size_t width = ref.width;
    parallel_for(ref.height, [&](std::size_t row) {
        std::vector<float> values;
        values.reserve(used.size());
        for (std::size_t b = 0; b < 12; ++b)
            for (std::size_t c = 0; c < width; ++c) {
                values.clear();
                for (std::size_t s = 0; s < used.size(); ++s) {
                    const auto& r = resampled[s][b];
                    if (!r) continue;
                    if (used[s]->valid_mask.at(0, row, c) != 1.0f) continue;
                    const float v = r->at(0, row, c);
                    if (r->is_nodata(v) || !std::isfinite(v)) continue;
                    values.push_back(v);
                }
                out.bands.at(b, row, c) = median_of(values, nodata);
            }
    });
    return out;
}

/// Scene manifest: JSON list of {date, band_paths: {name: path}, mask_path}.
/// Relative paths resolve against the manifest's directory. Band values are
/// multiplied by `scale` (digital numbers -> reflectance); nodata is kept.
inline std::vector<Scene> load_scene_manifest(const std::filesystem::path& manifest, double scale) {
    const auto doc = read_json_file(manifest);
    const auto base = manifest.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base / path;
    };
    std::vector<Scene> scenes;
    try {
        for (const auto& entry : doc) {
            Scene s;
            s.acquired = parse_iso_date(entry.at("date").get<std::string>());
            s.valid_mask = read_raster(resolve(entry.at("mask_path").get<std::string>()));
            for (const auto& [name, path] : entry.at("band_paths").items()) {
                RasterGrid r = read_raster(resolve(path.get<std::string>()));
                if (r.band_count() != 1) fail(ErrorCode::InvalidArgument, "band file for " + name + " is not single-band");
                for (float& v : r.pixels)
                    if (!r.is_nodata(v)) v = static_cast<float>(static_cast<double>(v) * scale);
                s.bands.push_back({name, std::move(r)});
            }
            scenes.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, manifest.string() + ": " + e.what());
    }
    return scenes;
}

/// Paths referenced by a manifest (for staleness checks).
inline std::vector<std::filesystem::path> manifest_inputs(const std::filesystem::path& manifest) {
    std::vector<std::filesystem::path> paths{manifest};
    const auto doc = read_json_file(manifest);
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : manifest.parent_path() / path;
    };
    for (const auto& entry : doc) {
        if (entry.contains("mask_path")) paths.push_back(resolve(entry["mask_path"].get<std::string>()));
        if (entry.contains("band_paths"))
            for (const auto& [name, p] : entry["band_paths"].items()) paths.push_back(resolve(p.get<std::string>()));
    }
    return paths;
}

} // namespace setmap
