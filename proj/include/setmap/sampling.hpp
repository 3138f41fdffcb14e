#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "features.hpp"
#include "geometry.hpp"
#include "random.hpp"

namespace setmap {

struct SamplingPlan {
    std::size_t negatives_per_municipality = 30000;
    double formal_fraction = 0.40;
    double unoccupied_fraction = 0.60;
    std::size_t min_grids = 30;
    std::size_t min_urban_grids = 3;
    std::uint64_t seed = 0;

    void validate() const {
        if (negatives_per_municipality == 0 || min_grids == 0 || min_urban_grids == 0)
            fail(ErrorCode::InvalidArgument, "sampling counts must be positive");
        if (formal_fraction < 0.0 || unoccupied_fraction < 0.0 ||
            std::abs(formal_fraction + unoccupied_fraction - 1.0) > 1e-9)
            fail(ErrorCode::InvalidArgument, "formal and unoccupied fractions must be nonnegative and sum to 1");
    }

    /// Formal count rounds half up; unoccupied takes the remainder.
    std::size_t formal_count() const {
        return static_cast<std::size_t>(
            std::floor(formal_fraction * static_cast<double>(negatives_per_municipality) + 0.5));
    }
    std::size_t unoccupied_count() const { return negatives_per_municipality - formal_count(); }
};

enum class GridClass { Formal, Unoccupied };

inline std::string to_string(GridClass c) { return c == GridClass::Formal ? "formal" : "unoccupied"; }

inline GridClass parse_grid_class(const std::string& s) {
    if (s == "formal") return GridClass::Formal;
    if (s == "unoccupied") return GridClass::Unoccupied;
    fail(ErrorCode::InvalidArgument, "grid class must be 'formal' or 'unoccupied', got '" + s + "'");
}

struct NegativeGrid {
    std::string grid_id;
    GridClass cls = GridClass::Unoccupied;
    std::size_t row0 = 0;
    std::size_t col0 = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

/// Curated negative grids, keyed by municipality.
using NegativeGridRegistry = std::map<std::string, std::vector<NegativeGrid>>;

inline void validate_registry(const NegativeGridRegistry& registry) {
    for (const auto& [muni, grids] : registry) {
        std::set<std::string> ids;
        for (std::size_t i = 0; i < grids.size(); ++i) {
            const auto& g = grids[i];
            if (g.rows == 0 || g.cols == 0) fail(ErrorCode::InvalidArgument, muni + "/" + g.grid_id + ": empty grid");
            if (!ids.insert(g.grid_id).second)
                fail(ErrorCode::InvalidArgument, muni + ": duplicate grid_id " + g.grid_id);
            for (std::size_t j = 0; j < i; ++j) {
                const auto& h = grids[j];
                const bool disjoint = g.row0 + g.rows <= h.row0 || h.row0 + h.rows <= g.row0 ||
                                      g.col0 + g.cols <= h.col0 || h.col0 + h.cols <= g.col0;
                if (!disjoint)
                    fail(ErrorCode::InvalidArgument, muni + ": grids " + h.grid_id + " and " + g.grid_id + " overlap");
            }
        }
    }
}

inline NegativeGridRegistry registry_from_json(const nlohmann::json& doc) {
    NegativeGridRegistry reg;
    try {
        for (const auto& [muni, list] : doc.items()) {
            auto& grids = reg[muni];
            for (const auto& e : list)
                grids.push_back({e.at("grid_id").get<std::string>(), parse_grid_class(e.at("class").get<std::string>()),
                                 e.at("row0").get<std::size_t>(), e.at("col0").get<std::size_t>(),
                                 e.at("rows").get<std::size_t>(), e.at("cols").get<std::size_t>()});
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("malformed registry: ") + e.what());
    }
    validate_registry(reg);
    return reg;
}

inline nlohmann::json registry_to_json(const NegativeGridRegistry& reg) {
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& [muni, grids] : reg) {
        auto& list = doc[muni] = nlohmann::json::array();
        for (const auto& g : grids)
            list.push_back({{"grid_id", g.grid_id},
                            {"class", to_string(g.cls)},
                            {"row0", g.row0},
                            {"col0", g.col0},
                            {"rows", g.rows},
                            {"cols", g.cols}});
    }
    return doc;
}

inline NegativeGridRegistry read_registry(const std::filesystem::path& path) {
    return registry_from_json(read_json_file(path));
}

/// A labeled pixel before feature attachment.
struct LabeledPixel {
    std::string municipality;
    std::size_t row = 0;
    std::size_t col = 0;
    int label = 0;
    std::string settlement_id;
    std::string grid_id;
    GridClass negative_class = GridClass::Unoccupied;
};

/// One row per pixel whose center falls inside a settlement polygon. A pixel
/// claimed by several polygons belongs to the first in input order. An empty
/// mask yields zero rows.
inline std::vector<LabeledPixel> extract_positive_pixels(std::span<const std::int32_t> polygon_ids,
                                                         std::size_t width, const std::string& municipality,
                                                         const PolygonSet& polygons) {
    std::vector<LabeledPixel> rows;
    for (std::size_t i = 0; i < polygon_ids.size(); ++i) {
        const auto id = polygon_ids[i];
        if (id < 0) continue;
        LabeledPixel p;
        p.municipality = municipality;
        p.row = i / width;
        p.col = i % width;
        p.label = 1;
        p.settlement_id = polygons.label(static_cast<std::size_t>(id));
        rows.push_back(std::move(p));
    }
    return rows;
}

/// Optional raster context for negative sampling: extent bounds and a
/// row-major validity mask (pixels valid in every epoch).
struct SamplingDomain {
    std::size_t width = 0;
    std::size_t height = 0;
    std::span<const std::uint8_t> valid; // empty = all valid
};

/// Draws exactly plan.negatives_per_municipality pixels without replacement:
/// formal_count() uniformly from formal grids, the remainder uniformly from
/// unoccupied grids. Deterministic in (plan.seed, municipality).
inline std::vector<LabeledPixel> sample_negative_pixels(const NegativeGridRegistry& registry,
                                                        const SamplingPlan& plan, const std::string& municipality,
                                                        const SamplingDomain& domain = {}) {
    plan.validate();
    auto it = registry.find(municipality);
    if (it == registry.end())
        fail(ErrorCode::InsufficientGrids, "no negative grids registered for " + municipality);
    const auto& grids = it->second;
    const auto formal_grids = static_cast<std::size_t>(
        std::count_if(grids.begin(), grids.end(), [](const NegativeGrid& g) { return g.cls == GridClass::Formal; }));
    if (grids.size() < plan.min_grids)
        fail(ErrorCode::InsufficientGrids, municipality + ": " + std::to_string(grids.size()) + " grids, need " +
                                               std::to_string(plan.min_grids));
    if (formal_grids < plan.min_urban_grids)
        fail(ErrorCode::InsufficientGrids, municipality + ": " + std::to_string(formal_grids) +
                                               " formal grids, need " + std::to_string(plan.min_urban_grids));

    struct Candidate {
        std::size_t grid;
        std::size_t row;
        std::size_t col;
    };
    std::vector<Candidate> pools[2];
    for (std::size_t gi = 0; gi < grids.size(); ++gi) {
        const auto& g = grids[gi];
        if (domain.width && (g.row0 + g.rows > domain.height || g.col0 + g.cols > domain.width))
            fail(ErrorCode::InvalidArgument, municipality + "/" + g.grid_id + " extends past the raster");
        auto& pool = pools[g.cls == GridClass::Formal ? 0 : 1];
        for (std::size_t r = g.row0; r < g.row0 + g.rows; ++r)
            for (std::size_t c = g.col0; c < g.col0 + g.cols; ++c)
                if (domain.valid.empty() || domain.valid[r * domain.width + c]) pool.push_back({gi, r, c});
    }

    Rng rng(plan.seed ^ fnv1a(municipality));
    std::vector<LabeledPixel> out;
    out.reserve(plan.negatives_per_municipality);
    const std::size_t wanted[2] = {plan.formal_count(), plan.unoccupied_count()};
    for (int cls = 0; cls < 2; ++cls) {
        auto& pool = pools[cls];
        const std::size_t k = wanted[cls];
        if (pool.size() < k)
            fail(ErrorCode::InsufficientPixels, municipality + ": need " + std::to_string(k) + " " +
                                                    (cls == 0 ? "formal" : "unoccupied") + " pixels, have " +
                                                    std::to_string(pool.size()));
        std::vector<std::size_t> order(pool.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, order.size() - i));
            std::swap(order[i], order[j]);
        }
        order.resize(k);
        std::sort(order.begin(), order.end());
        for (std::size_t idx : order) {
            const auto& cand = pool[idx];
            LabeledPixel p;
            p.municipality = municipality;
            p.row = cand.row;
            p.col = cand.col;
            p.label = 0;
            p.grid_id = grids[cand.grid].grid_id;
            p.negative_class = grids[cand.grid].cls;
            out.push_back(std::move(p));
        }
    }
    return out;
}

/// Inputs for one municipality.
struct MunicipalitySamples {
    std::string municipality;
    std::span<const EpochComposite> composites;
    std::vector<LabeledPixel> positives;
    std::vector<LabeledPixel> negatives;
};

struct MunicipalityCounts {
    std::size_t positives = 0;
    std::size_t formal = 0;
    std::size_t unoccupied = 0;
    std::size_t skipped = 0;
};

struct Dataset {
    FeatureTable table;
    std::map<std::string, MunicipalityCounts> counts;

    std::size_t positives() const {
        std::size_t n = 0;
        for (const auto& [m, c] : counts) n += c.positives;
        return n;
    }
    std::size_t negatives() const {
        std::size_t n = 0;
        for (const auto& [m, c] : counts) n += c.formal + c.unoccupied;
        return n;
    }
};

/// Concatenates positives and negatives per municipality and attaches the
/// 66-value feature vectors. Pixels with nodata in any epoch are dropped and
/// counted as skipped.
inline Dataset build_dataset(std::span<const MunicipalitySamples> inputs, const IndexParams& params) {
    Dataset ds;
    std::set<std::string> seen;
    for (const auto& in : inputs) {
        auto& counts = ds.counts[in.municipality];
        std::vector<const LabeledPixel*> rows;
        for (const auto* list : {&in.positives, &in.negatives})
            for (const auto& p : *list) {
                if (p.municipality != in.municipality)
                    fail(ErrorCode::InvalidArgument, "pixel tagged " + p.municipality + " listed under " + in.municipality);
                if (!seen.insert(make_pixel_id(p.municipality, p.row, p.col)).second)
                    fail(ErrorCode::DuplicatePixel,
                         "pixel " + make_pixel_id(p.municipality, p.row, p.col) + " appears twice");
                rows.push_back(&p);
            }
        std::vector<PixelRef> refs;
        refs.reserve(rows.size());
        for (const auto* p : rows) refs.push_back({p->row, p->col});

        const auto assembled = assemble_features(in.composites, params, refs);
        counts.skipped += assembled.skipped;
        std::size_t kept = 0;
        for (const auto* p : rows) {
            if (kept == assembled.pixels.size() || assembled.pixels[kept].row != p->row ||
                assembled.pixels[kept].col != p->col)
                continue; // dropped for nodata
            FeatureRow fr;
            fr.features = assembled.features[kept++];
            fr.pixel_id = make_pixel_id(p->municipality, p->row, p->col);
            fr.municipality = p->municipality;
            fr.settlement_id = p->settlement_id;
            fr.grid_id = p->grid_id;
            fr.label = p->label;
            if (p->label == 1) ++counts.positives;
            else if (p->negative_class == GridClass::Formal) ++counts.formal;
            else ++counts.unoccupied;
            ds.table.push_back(std::move(fr));
        }
    }
    return ds;
}

} // namespace setmap
