#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "features.hpp"
#include "models.hpp"

namespace setmap {

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;
    bool operator==(const ConfusionCounts&) const = default;
};

/// nullopt marks an undefined ratio (zero denominator), which is not 0.
struct PrecisionRecall {
    std::optional<double> precision;
    std::optional<double> recall;
};

inline PrecisionRecall precision_recall(const ConfusionCounts& c) {
    PrecisionRecall pr;
    if (c.tp + c.fp > 0) pr.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) pr.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    return pr;
}

struct ScoredUnit {
    std::string id;
    double probability = 0.0;
    int label = 0;
};

struct CurvePoint {
    int x = 0; // percent, 1..100
    std::optional<double> precision;
    std::optional<double> recall;
    std::size_t selected = 0;
    ConfusionCounts counts;
};

using Curve = std::vector<CurvePoint>;

/// Units needed to cover x percent of n, rounded up.
inline std::size_t top_x_count(int x, std::size_t n) {
    return (static_cast<std::size_t>(x) * n + 99) / 100;
}

/// Ranks units by probability (descending, ties by id ascending) and declares
/// the first ceil(x n / 100) positive for each x in 1..100.
inline Curve curve_at_top_x(std::vector<ScoredUnit> units) {
    if (units.empty()) fail(ErrorCode::InvalidArgument, "cannot build a curve from zero units");
    const auto total_pos = static_cast<std::size_t>(
        std::count_if(units.begin(), units.end(), [](const ScoredUnit& u) { return u.label == 1; }));
    if (total_pos == 0) fail(ErrorCode::NoPositives, "curve requires at least one positive unit");
    std::sort(units.begin(), units.end(), [](const ScoredUnit& a, const ScoredUnit& b) {
        if (a.probability != b.probability) return a.probability > b.probability;
        return a.id < b.id;
    });
    const std::size_t n = units.size();
    std::vector<std::size_t> prefix(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + (units[i].label == 1 ? 1 : 0);

    Curve curve;
    curve.reserve(100);
    for (int x = 1; x <= 100; ++x) {
        CurvePoint p;
        p.x = x;
        p.selected = top_x_count(x, n);
        p.counts.tp = prefix[p.selected];
        p.counts.fp = p.selected - p.counts.tp;
        p.counts.fn = total_pos - p.counts.tp;
        p.counts.tn = n - p.selected - p.counts.fn;
        const auto pr = precision_recall(p.counts);
        p.precision = pr.precision;
        p.recall = pr.recall;
        curve.push_back(p);
    }
    return curve;
}

/// Mean of the ceil(m / 10) largest of m values; independent of input order.
inline double mean_of_top_decile(std::vector<double> values) {
    if (values.empty()) fail(ErrorCode::EmptyGroup, "top-decile mean of an empty group");
    const std::size_t k = (values.size() + 9) / 10;
    std::partial_sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end(),
                      std::greater<>());
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += values[i];
    return sum / static_cast<double>(k);
}

struct PixelGroup {
    std::string id;
    int label = 0;
    std::vector<double> probabilities;
};

/// One scored unit per group: the mean of its top 10% pixel probabilities.
inline std::vector<ScoredUnit> settlement_scores(std::span<const PixelGroup> groups) {
    std::vector<ScoredUnit> out;
    out.reserve(groups.size());
    for (const auto& g : groups) {
        if (g.probabilities.empty()) fail(ErrorCode::EmptyGroup, "settlement group " + g.id + " has no pixels");
        out.push_back({g.id, mean_of_top_decile(g.probabilities), g.label});
    }
    return out;
}

/// Groups table rows by settlement (label 1) or negative grid (label 0).
/// Group order follows (label, id).
inline std::vector<PixelGroup> group_by_unit(const FeatureTable& table, std::span<const std::size_t> rows,
                                             std::span<const double> probabilities) {
    std::map<std::pair<int, std::string>, std::vector<double>> groups;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = table[rows[i]];
        groups[{r.label, r.unit_id()}].push_back(probabilities[i]);
    }
    std::vector<PixelGroup> out;
    out.reserve(groups.size());
    for (auto& [key, probs] : groups) out.push_back({key.second, key.first, std::move(probs)});
    return out;
}

struct Fold {
    std::string municipality; // held out
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Leave-one-municipality-out folds, ordered by municipality name.
inline std::vector<Fold> spatial_folds(const FeatureTable& table) {
    std::map<std::string, std::vector<std::size_t>> by_muni;
    for (std::size_t i = 0; i < table.size(); ++i) by_muni[table[i].municipality].push_back(i);
    if (by_muni.size() < 2)
        fail(ErrorCode::SingleMunicipality, "spatial cross-validation needs at least two municipalities");
    std::vector<Fold> folds;
    for (const auto& [muni, rows] : by_muni) {
        Fold f;
        f.municipality = muni;
        f.test = rows;
        for (std::size_t i = 0; i < table.size(); ++i)
            if (table[i].municipality != muni) f.train.push_back(i);
        folds.push_back(std::move(f));
    }
    return folds;
}

struct FoldResult {
    std::string municipality;
    Curve pixel;
    Curve settlement;
};

struct ModelEvaluation {
    std::string name;
    ModelSpec spec;
    std::vector<FoldResult> folds;
    Curve macro_pixel;
    Curve macro_settlement;
};

struct EvaluationReport {
    std::vector<ModelEvaluation> models;
};

/// Unweighted mean over folds at each x; undefined fold values are left out.
/// Selection sizes and confusion counts are pooled sums.
inline Curve macro_average(std::span<const Curve* const> curves) {
    Curve out;
    for (int x = 1; x <= 100; ++x) {
        CurvePoint p;
        p.x = x;
        double psum = 0.0, rsum = 0.0;
        std::size_t pn = 0, rn = 0;
        for (const Curve* c : curves) {
            const auto& q = (*c)[static_cast<std::size_t>(x - 1)];
            if (q.precision) psum += *q.precision, ++pn;
            if (q.recall) rsum += *q.recall, ++rn;
            p.selected += q.selected;
            p.counts.tp += q.counts.tp;
            p.counts.fp += q.counts.fp;
            p.counts.fn += q.counts.fn;
            p.counts.tn += q.counts.tn;
        }
        if (pn) p.precision = psum / static_cast<double>(pn);
        if (rn) p.recall = rsum / static_cast<double>(rn);
        out.push_back(p);
    }
    return out;
}

/// Display names: the model kind, suffixed with the list position when a kind repeats.
inline std::vector<std::string> model_names(std::span<const ModelSpec> specs) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto kind = to_string(specs[i].kind);
        const auto repeats = std::count_if(specs.begin(), specs.end(),
                                           [&](const ModelSpec& s) { return s.kind == specs[i].kind; });
        names.push_back(repeats > 1 ? kind + "_" + std::to_string(i) : kind);
    }
    return names;
}

/// Fits every model on each leave-one-municipality-out training split and
/// scores the held-out pixels at pixel and settlement level.
inline EvaluationReport evaluate(std::span<const ModelSpec> specs, const FeatureTable& table) {
    validate_table(table);
    const auto folds = spatial_folds(table);
    const auto names = model_names(specs);
    EvaluationReport report;
    for (std::size_t m = 0; m < specs.size(); ++m) {
        ModelEvaluation eval;
        eval.name = names[m];
        eval.spec = specs[m];
        for (const auto& fold : folds) {
            const auto model = fit(specs[m], make_training_data(table, fold.train));
            std::vector<double> probs(fold.test.size());
            parallel_for(fold.test.size(), [&](std::size_t i) {
                probs[i] = model.score(table[fold.test[i]].features.data());
            });
            std::vector<ScoredUnit> pixels;
            pixels.reserve(fold.test.size());
            for (std::size_t i = 0; i < fold.test.size(); ++i) {
                const auto& r = table[fold.test[i]];
                pixels.push_back({r.pixel_id, probs[i], r.label});
            }
            FoldResult result;
            result.municipality = fold.municipality;
            try {
                result.pixel = curve_at_top_x(std::move(pixels));
                const auto groups = group_by_unit(table, fold.test, probs);
                result.settlement = curve_at_top_x(settlement_scores(groups));
            } catch (const Error& e) {
                throw Error(e.code(), "fold " + fold.municipality + ": " + e.detail());
            }
            eval.folds.push_back(std::move(result));
        }
        std::vector<const Curve*> pix, set;
        for (const auto& f : eval.folds) {
            pix.push_back(&f.pixel);
            set.push_back(&f.settlement);
        }
        eval.macro_pixel = macro_average(pix);
        eval.macro_settlement = macro_average(set);
        report.models.push_back(std::move(eval));
    }
    return report;
}

inline nlohmann::json curve_to_json(const Curve& curve) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : curve) {
        nlohmann::json j;
        j["x"] = p.x;
        j["precision"] = p.precision ? nlohmann::json(*p.precision) : nlohmann::json(nullptr);
        j["recall"] = p.recall ? nlohmann::json(*p.recall) : nlohmann::json(nullptr);
        j["selected"] = p.selected;
        j["tp"] = p.counts.tp;
        j["fp"] = p.counts.fp;
        j["fn"] = p.counts.fn;
        j["tn"] = p.counts.tn;
        arr.push_back(std::move(j));
    }
    return arr;
}

/// Flat list of {model, fold, level, curve}; fold "macro" holds the averages.
inline nlohmann::json report_to_json(const EvaluationReport& report) {
    nlohmann::json out = nlohmann::json::array();
    auto add = [&](const std::string& model, const std::string& fold, const char* level, const Curve& c) {
        out.push_back({{"model", model}, {"fold", fold}, {"level", level}, {"curve", curve_to_json(c)}});
    };
    for (const auto& m : report.models) {
        for (const auto& f : m.folds) {
            add(m.name, f.municipality, "pixel", f.pixel);
            add(m.name, f.municipality, "settlement", f.settlement);
        }
        add(m.name, "macro", "pixel", m.macro_pixel);
        add(m.name, "macro", "settlement", m.macro_settlement);
    }
    return out;
}

inline Curve curve_from_json(const nlohmann::json& arr) {
    Curve c;
    for (const auto& j : arr) {
        CurvePoint p;
        p.x = j.at("x").get<int>();
        if (!j.at("precision").is_null()) p.precision = j["precision"].get<double>();
        if (!j.at("recall").is_null()) p.recall = j["recall"].get<double>();
        p.selected = j.at("selected").get<std::size_t>();
        p.counts = {j.value("tp", std::size_t{0}), j.value("fp", std::size_t{0}), j.value("fn", std::size_t{0}),
                    j.value("tn", std::size_t{0})};
        c.push_back(p);
    }
    return c;
}

inline void write_report_csv(const EvaluationReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    out << "model,fold,level,x,precision,recall,selected,tp,fp,fn,tn\n";
    char buf[64];
    auto fmt = [&](const std::optional<double>& v) -> std::string {
        if (!v) return "";
        std::snprintf(buf, sizeof buf, "%.9g", *v);
        return buf;
    };
    auto emit = [&](const std::string& model, const std::string& fold, const char* level, const Curve& c) {
        for (const auto& p : c)
            out << model << ',' << fold << ',' << level << ',' << p.x << ',' << fmt(p.precision) << ','
                << fmt(p.recall) << ',' << p.selected << ',' << p.counts.tp << ',' << p.counts.fp << ','
                << p.counts.fn << ',' << p.counts.tn << '\n';
    };
    for (const auto& m : report.models) {
        for (const auto& f : m.folds) {
            emit(m.name, f.municipality, "pixel", f.pixel);
            emit(m.name, f.municipality, "settlement", f.settlement);
        }
        emit(m.name, "macro", "pixel", m.macro_pixel);
        emit(m.name, "macro", "settlement", m.macro_settlement);
    }
}

} // namespace setmap
