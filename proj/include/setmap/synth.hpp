#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "compositor.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "random.hpp"
#include "raster.hpp"
#include "sampling.hpp"

namespace setmap {

struct SynthOptions {
    std::uint64_t seed = 0;
    std::size_t size = 300;         // pixels per side, per municipality
    std::size_t municipalities = 9;
    std::size_t settlements = 6;    // planted per municipality
    std::size_t scenes_per_epoch = 3;
    std::size_t negatives_per_municipality = 2000;
    std::size_t rf_trees = 100;
};

struct SynthResult {
    std::filesystem::path config;
    std::vector<std::string> municipalities;
    std::size_t planted = 0;
    std::size_t confounders = 0;
};

namespace synth_detail {

enum Cover { Vegetation, Soil, Formal, Informal, Water, kCovers };

// Reflectance endmembers in canonical band order b1..b12.
inline constexpr std::array<std::array<double, 12>, kCovers> kEndmembers = {{
    {0.030, 0.040, 0.070, 0.040, 0.100, 0.250, 0.300, 0.320, 0.330, 0.330, 0.180, 0.090},
    {0.080, 0.100, 0.140, 0.180, 0.210, 0.230, 0.250, 0.260, 0.270, 0.270, 0.340, 0.280},
    {0.110, 0.130, 0.150, 0.170, 0.190, 0.200, 0.210, 0.220, 0.230, 0.220, 0.250, 0.210},
    {0.090, 0.100, 0.120, 0.150, 0.170, 0.180, 0.190, 0.190, 0.200, 0.200, 0.300, 0.270},
    {0.050, 0.060, 0.080, 0.050, 0.040, 0.030, 0.030, 0.020, 0.020, 0.020, 0.010, 0.010},
}};

using Mix = std::array<double, kCovers>;

enum class Trajectory { Vegetation, Soil, Water, FormalStable, Emerging, BareConversion, FormalGrowth };

inline Mix mix(double veg, double soil, double formal, double informal, double water) {
    return {veg, soil, formal, informal, water};
}

/// Cover fractions for one pixel in one epoch; `jitter` in [0, 1) is a
/// per-pixel constant and `stage2` flags early construction.
inline Mix cover_for(Trajectory t, std::size_t epoch, double jitter, bool stage2) {
    const double j = 0.15 * (jitter - 0.5);
    switch (t) {
    case Trajectory::Vegetation: return mix(0.85 + j, 0.15 - j, 0, 0, 0);
    case Trajectory::Soil: return mix(0.15 + j, 0.85 - j, 0, 0, 0);
    case Trajectory::Water: return mix(0.1, 0, 0, 0, 0.9);
    case Trajectory::FormalStable: return mix(0.3 + j, 0, 0.7 - j, 0, 0);
    case Trajectory::Emerging:
        if (epoch == 0) return mix(0.8 + j, 0.2 - j, 0, 0, 0);
        if (epoch == 1) return stage2 ? mix(0.5, 0.2, 0, 0.3, 0) : mix(0.8 + j, 0.2 - j, 0, 0, 0);
        return mix(0.1, 0.15 - j, 0, 0.75 + j, 0);
    case Trajectory::BareConversion:
        if (epoch == 0) return mix(0.8 + j, 0.2 - j, 0, 0, 0);
        if (epoch == 1) return mix(0.5, 0.5, 0, 0, 0);
        return mix(0.1 - j / 2, 0.9 + j / 2, 0, 0, 0);
    case Trajectory::FormalGrowth:
        if (epoch == 0) return mix(0.8 + j, 0.2 - j, 0, 0, 0);
        if (epoch == 1) return mix(0.4, 0.6, 0, 0, 0);
        return mix(0.15 - j / 2, 0, 0.85 + j / 2, 0, 0);
    }
    return mix(1, 0, 0, 0, 0);
}

inline Ring blob_ring(Rng& rng, const GeoTransform& gt, double center_row, double center_col, double radius_lo,
                      double radius_hi, std::size_t vertices) {
    Ring ring;
    const double ry = uniform_real(rng, radius_lo, radius_hi);
    const double rx = uniform_real(rng, radius_lo, radius_hi);
    for (std::size_t v = 0; v < vertices; ++v) {
        const double angle = 6.283185307179586 * static_cast<double>(v) / static_cast<double>(vertices);
        const double scale = uniform_real(rng, 0.8, 1.0);
        const double col = center_col + rx * scale * std::cos(angle);
        const double row = center_row + ry * scale * std::sin(angle);
        ring.push_back({gt.x_of(col), gt.y_of(row)});
    }
    ring.push_back(ring.front());
    return ring;
}

struct BandLayout {
    const char* name;
    std::size_t canonical; // index in kBandNames, or 12 for b10
    std::size_t factor;    // native pixel size / 10 m
};

inline constexpr std::array<BandLayout, 13> kNativeBands = {{
    {"b1", 0, 6}, {"b2", 1, 1}, {"b3", 2, 1}, {"b4", 3, 1}, {"b5", 4, 2}, {"b6", 5, 2}, {"b7", 6, 2},
    {"b8", 7, 1}, {"b8A", 8, 2}, {"b9", 9, 6}, {"b10", 12, 6}, {"b11", 10, 2}, {"b12", 11, 2},
}};

} // namespace synth_detail

/// Writes a synthetic multi-municipality fixture (scenes, manifests, settlement
/// polygons, negative-grid registry, ground truth and a pipeline config) under
/// `out_dir`. Planted settlements turn from vegetation to informal built-up
/// between the first and last epoch; confounder patches undergo bare-land
/// conversion or formal growth instead.
inline SynthResult synthesize(const std::filesystem::path& out_dir, const SynthOptions& opt) {
    using namespace synth_detail;
    namespace fs = std::filesystem;
    if (opt.size < 100 || opt.size % 6 != 0)
        fail(ErrorCode::InvalidArgument, "synthetic size must be >= 100 pixels and a multiple of 6");
    if (opt.municipalities == 0 || opt.scenes_per_epoch == 0)
        fail(ErrorCode::InvalidArgument, "need at least one municipality and one scene per epoch");
    const std::size_t cell = 50;
    const std::size_t cells_per_side = opt.size / cell;
    const std::size_t full_cells = cells_per_side * cells_per_side;
    if (opt.settlements + 4 > full_cells)
        fail(ErrorCode::InvalidArgument, "raster too small for the requested settlements plus negative grids");

    fs::create_directories(out_dir);
    SynthResult result;
    NegativeGridRegistry registry;
    nlohmann::json truth = nlohmann::json::object();
    nlohmann::json municipalities = nlohmann::json::array();
    std::size_t min_grids = 30;

    for (std::size_t m = 0; m < opt.municipalities; ++m) {
        const std::string name = "m" + std::to_string(m + 1);
        result.municipalities.push_back(name);
        Rng rng((opt.seed + kSynthSeedOffset) ^ fnv1a(name));
        const fs::path mdir = out_dir / name;
        fs::create_directories(mdir);

        GeoTransform gt;
        gt.origin_x = 400000.0 + 20000.0 * static_cast<double>(m);
        gt.origin_y = 1300000.0;
        const std::string crs = "EPSG:32618";
        const std::size_t n = opt.size;
        const RasterGrid frame = make_raster(n, n, {"frame"}, gt, crs);

        // Assign full cells: settlements first, then negative grids.
        std::vector<std::size_t> order(full_cells);
        for (std::size_t i = 0; i < full_cells; ++i) order[i] = i;
        for (std::size_t i = 0; i + 1 < full_cells; ++i)
            std::swap(order[i], order[i + uniform_index(rng, full_cells - i)]);
        const std::size_t negatives = std::min<std::size_t>(30, full_cells - opt.settlements);
        const std::size_t formal = std::max<std::size_t>(3, (negatives + 2) / 5);
        min_grids = std::min(min_grids, negatives);

        std::vector<Trajectory> traj(n * n, Trajectory::Vegetation);
        auto cell_origin = [&](std::size_t id) { return std::pair{(id / cells_per_side) * cell, (id % cells_per_side) * cell}; };
        auto fill_cell = [&](std::size_t id, Trajectory t) {
            auto [r0, c0] = cell_origin(id);
            for (std::size_t r = r0; r < r0 + cell; ++r)
                for (std::size_t c = c0; c < c0 + cell; ++c) traj[r * n + c] = t;
        };
        auto paint_blob = [&](const Ring& ring, Trajectory t) {
            PolygonSet one{{ring}, {}};
            const auto ids = rasterize_polygon_ids(one, frame);
            std::size_t count = 0;
            for (std::size_t i = 0; i < ids.size(); ++i)
                if (ids[i] >= 0) traj[i] = t, ++count;
            return count;
        };

        nlohmann::json mtruth;
        mtruth["settlements"] = nlohmann::json::array();
        mtruth["confounders"] = nlohmann::json::array();
        auto& grids = registry[name];
        for (std::size_t k = 0; k < negatives; ++k) {
            const std::size_t id = order[opt.settlements + k];
            auto [r0, c0] = cell_origin(id);
            const bool is_formal = k < formal;
            NegativeGrid g{name + "_g" + std::to_string(k + 1), is_formal ? GridClass::Formal : GridClass::Unoccupied,
                           r0, c0, cell, cell};
            if (is_formal) {
                fill_cell(id, Trajectory::FormalStable);
            } else {
                const double u = uniform_unit(rng);
                fill_cell(id, u < 0.6 ? Trajectory::Vegetation : (u < 0.9 ? Trajectory::Soil : Trajectory::Water));
            }
            // Confounders mimic the usual false positives of change-based detection.
            const double cu = uniform_unit(rng);
            const bool confound = is_formal ? cu < 0.5 : cu < 0.35;
            if (confound) {
                const auto t = is_formal ? Trajectory::FormalGrowth : Trajectory::BareConversion;
                const double cr = static_cast<double>(r0) + uniform_real(rng, 12.0, 38.0);
                const double cc = static_cast<double>(c0) + uniform_real(rng, 12.0, 38.0);
                const Ring ring = blob_ring(rng, gt, cr, cc, 5.0, 9.0, 8);
                const std::size_t px = paint_blob(ring, t);
                mtruth["confounders"].push_back(
                    {{"grid_id", g.grid_id}, {"kind", is_formal ? "formal_growth" : "bare_conversion"}, {"pixels", px}});
                ++result.confounders;
            }
            grids.push_back(g);
        }

        PolygonSet settlements;
        for (std::size_t s = 0; s < opt.settlements; ++s) {
            auto [r0, c0] = cell_origin(order[s]);
            const double cr = static_cast<double>(r0) + uniform_real(rng, 15.0, 35.0);
            const double cc = static_cast<double>(c0) + uniform_real(rng, 15.0, 35.0);
            Ring ring = blob_ring(rng, gt, cr, cc, 5.0, 9.0, 9);
            const std::string sid = name + "_s" + std::to_string(s + 1);
            const std::size_t px = paint_blob(ring, Trajectory::Emerging);
            if (px == 0) fail(ErrorCode::InvalidArgument, "planted settlement " + sid + " covers no pixel center");
            settlements.polygons.push_back(std::move(ring));
            settlements.labels.push_back(sid);
            mtruth["settlements"].push_back({{"settlement_id", sid}, {"pixels", px}});
            ++result.planted;
        }
        write_json_file(mdir / "settlements.geojson", polygons_to_geojson(settlements, crs));
        truth[name] = mtruth;

        // Per-pixel constants.
        std::vector<double> jitter(n * n), brightness(n * n);
        std::vector<std::uint8_t> stage2(n * n);
        for (std::size_t i = 0; i < n * n; ++i) {
            jitter[i] = uniform_unit(rng);
            brightness[i] = 1.0 + 0.04 * standard_normal(rng);
            stage2[i] = uniform_unit(rng) < 0.5 ? 1 : 0;
        }

        nlohmann::json epochs = nlohmann::json::object();
        for (std::size_t e = 0; e < 3; ++e) {
            const Epoch& epoch = kEpochs[e];
            // Noise-free reflectance per canonical band at 10 m.
            std::vector<std::array<float, 12>> truth_refl(n * n);
            for (std::size_t i = 0; i < n * n; ++i) {
                const Mix cover = cover_for(traj[i], e, jitter[i], stage2[i] != 0);
                for (std::size_t b = 0; b < 12; ++b) {
                    double v = 0.0;
                    for (std::size_t k = 0; k < kCovers; ++k) v += cover[k] * kEndmembers[k][b];
                    truth_refl[i][b] = static_cast<float>(v * brightness[i]);
                }
            }

            nlohmann::json manifest = nlohmann::json::array();
            const fs::path sdir = mdir / "scenes" / epoch.label();
            fs::create_directories(sdir);
            static constexpr const char* kDates[] = {"-03-15", "-10-20", "-06-05", "-12-01"};
            for (std::size_t s = 0; s < opt.scenes_per_epoch; ++s) {
                const int year = (s % 2 == 0) ? epoch.first_year : epoch.last_year;
                const std::string date = std::to_string(year) + kDates[s % 4];
                const std::string stem = "scene" + std::to_string(s + 1);

                // Clouds only from the second scene on, so every pixel keeps one clear view.
                std::vector<std::uint8_t> clear(n * n, 1);
                if (s > 0) {
                    const std::size_t clouds = uniform_index(rng, 3);
                    for (std::size_t k = 0; k < clouds; ++k) {
                        const double cr = uniform_real(rng, 0.0, static_cast<double>(n));
                        const double cc = uniform_real(rng, 0.0, static_cast<double>(n));
                        const double rad = uniform_real(rng, 10.0, 25.0);
                        for (std::size_t r = 0; r < n; ++r)
                            for (std::size_t c = 0; c < n; ++c) {
                                const double dr = static_cast<double>(r) - cr, dc = static_cast<double>(c) - cc;
                                if (dr * dr + dc * dc <= rad * rad) clear[r * n + c] = 0;
                            }
                    }
                }
                RasterGrid mask = make_raster(n, n, {"valid"}, gt, crs, 255.0f, 0.0f);
                for (std::size_t i = 0; i < n * n; ++i) mask.pixels[i] = clear[i] ? 1.0f : 0.0f;
                write_raster(mask, sdir / (stem + "_mask.bsqr"));

                // Observed 10 m reflectance with sensor noise; clouds are bright.
                std::vector<std::array<float, 13>> obs(n * n);
                for (std::size_t i = 0; i < n * n; ++i) {
                    for (std::size_t b = 0; b < 12; ++b) {
                        double v = clear[i] ? truth_refl[i][b] * (1.0 + 0.02 * standard_normal(rng)) +
                                                  0.003 * standard_normal(rng)
                                            : 0.45 + 0.05 * standard_normal(rng);
                        obs[i][b] = static_cast<float>(std::clamp(v, 0.0, 1.0));
                    }
                    obs[i][12] = static_cast<float>(clear[i] ? 0.002 : 0.3); // cirrus
                }

                nlohmann::json band_paths = nlohmann::json::object();
                for (const auto& layout : kNativeBands) {
                    const std::size_t f = layout.factor;
                    GeoTransform ngt = gt;
                    ngt.pixel_width = 10.0 * static_cast<double>(f);
                    ngt.pixel_height = -10.0 * static_cast<double>(f);
                    RasterGrid band = make_raster(n / f, n / f, {layout.name}, ngt, crs, -9999.0f);
                    for (std::size_t r = 0; r < n / f; ++r)
                        for (std::size_t c = 0; c < n / f; ++c) {
                            double sum = 0.0;
                            for (std::size_t dr = 0; dr < f; ++dr)
                                for (std::size_t dc = 0; dc < f; ++dc)
                                    sum += obs[(r * f + dr) * n + (c * f + dc)][layout.canonical];
                            band.at(0, r, c) = static_cast<float>(
                                std::round(sum / static_cast<double>(f * f) * 10000.0));
                        }
                    const std::string file = stem + "_" + layout.name + ".bsqr";
                    write_raster(band, sdir / file);
                    band_paths[layout.name] = "scenes/" + epoch.label() + "/" + file;
                }
                manifest.push_back({{"date", date},
                                    {"band_paths", band_paths},
                                    {"mask_path", "scenes/" + epoch.label() + "/" + stem + "_mask.bsqr"}});
            }
            const std::string manifest_name = "manifest_" + epoch.label() + ".json";
            write_json_file(mdir / manifest_name, manifest);
            epochs[epoch.label()] = name + "/" + manifest_name;
        }
        municipalities.push_back({{"name", name}, {"scenes", epochs}, {"polygons", name + "/settlements.geojson"}});
    }

    write_json_file(out_dir / "registry.json", registry_to_json(registry));
    write_json_file(out_dir / "truth.json", truth);

    nlohmann::json config;
    config["output_dir"] = "run";
    config["seed"] = opt.seed;
    config["reflectance_scale"] = 0.0001;
    config["municipalities"] = municipalities;
    config["registry"] = "registry.json";
    config["index_params"] = {{"savi_l", 0.5}, {"baei_c", 0.3}, {"zero_denominator_value", 0.0}};
    config["sampling"] = {{"negatives_per_municipality", opt.negatives_per_municipality},
                          {"formal_fraction", 0.4},
                          {"unoccupied_fraction", 0.6},
                          {"min_grids", min_grids},
                          {"min_urban_grids", 3}};
    config["models"] = nlohmann::json::array(
        {{{"kind", "random_forest"},
          {"n_trees", opt.rf_trees},
          {"max_depth", 12},
          {"min_samples_leaf", 2},
          {"min_samples_split", 15},
          {"features_per_split", 8},
          {"bootstrap", true}},
         {{"kind", "logistic"}, {"l2_lambda", 1e-4}, {"learning_rate", 0.1}, {"epochs", 100}},
         {{"kind", "linear_svm"}, {"svm_c", 1.0}, {"learning_rate", 0.1}, {"epochs", 100}}});
    config["mapping_model"] = "random_forest";
    config["grid"] = {{"cell_size", 500.0}};
    config["export"] = {{"top_k", 10}};
    result.config = out_dir / "config.json";
    write_json_file(result.config, config);
    return result;
}

} // namespace setmap
