// Acceptance suite: prints one PASS/FAIL line per criterion; exit status is
// nonzero if any criterion fails. Criterion 10 is a soft check that can only
// flag, never fail.
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "table1.hpp"
#include "test_util.hpp"

using namespace setmap;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = true;
    std::string detail;
    bool soft_flag = false;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& check) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
        o = check();
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail = std::string("exception: ") + e.what();
    }
    const char* tag = o.pass ? (o.soft_flag ? "PASS (flagged)" : "PASS") : "FAIL";
    if (!o.pass) ++failures;
    std::printf("[%s] criterion %d: %s | %s (%.2f s)\n", tag, id, title.c_str(), o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
}

// ---------------------------------------------------------------------------

Outcome dataset_arithmetic() {
    const auto t0 = Clock::now();
    BandValues v;
    v.fill(0.2);
    const auto composites = testutil::constant_triplet(table1::kSide, table1::kSide, v);
    const auto frame = composites[0].bands;
    NegativeGridRegistry registry;
    for (const auto& row : table1::kRows) registry[row.name] = table1::grids(row.name);
    const SamplingPlan plan; // 30,000 per municipality, 40/60

    std::size_t positives = 0, formal = 0, unoccupied = 0, total = 0;
    bool per_muni_ok = true;
    for (const auto& row : table1::kRows) {
        const PolygonSet polys{{table1::staircase(frame.geotransform, row.positives)}, {std::string(row.name) + "_s"}};
        MunicipalitySamples in{row.name, composites, {}, {}};
        in.positives = extract_positive_pixels(rasterize_polygon_ids(polys, frame), frame.width, row.name, polys);
        in.negatives = sample_negative_pixels(registry, plan, row.name);
        const auto ds = build_dataset(std::span(&in, 1), IndexParams{});
        const auto& c = ds.counts.at(row.name);
        per_muni_ok &= c.positives == row.positives && c.formal == 12000 && c.unoccupied == 18000;
        positives += c.positives;
        formal += c.formal;
        unoccupied += c.unoccupied;
        total += ds.table.size();
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = per_muni_ok && positives == 23756 && formal + unoccupied == 270000 && total == 293756 && secs < 60.0;
    std::ostringstream s;
    s << positives << " positives, " << formal + unoccupied << " negatives (" << formal << " formal / " << unoccupied
      << " unoccupied), total " << total << ", per-municipality split " << (per_muni_ok ? "exact" : "WRONG");
    o.detail = s.str();
    return o;
}

Outcome index_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const IndexParams p;
    double worst = 0.0;
    bool bounded = true;
    for (int i = 0; i < 10000; ++i) {
        BandValues v;
        for (auto& x : v) x = u(rng);
        for (std::size_t k = 0; k < kIndexCount; ++k) {
            const double a = compute_index(kIndices[k], v, p);
            const double b = oracle::index(kIndexNames[k], v, p.savi_l, p.baei_c, p.zero_denominator_value);
            worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(b)));
            const auto kind = kIndices[k];
            if (kind == SpectralIndex::NDVI || kind == SpectralIndex::MNDWI || kind == SpectralIndex::NDBI ||
                kind == SpectralIndex::UI)
                bounded &= a >= -1.0 && a <= 1.0;
        }
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = worst <= 1e-9 && bounded && secs < 5.0;
    char buf[128];
    std::snprintf(buf, sizeof buf, "10000 tuples, max scaled deviation %.3g, normalized indices in [-1,1]: %s", worst,
                  bounded ? "yes" : "no");
    o.detail = buf;
    return o;
}

Outcome median_oracle() {
    std::mt19937_64 rng(202);
    std::size_t stacks = 0, mismatches = 0, even_pixels = 0, empty_pixels = 0;
    for (int trial = 0; trial < 200; ++trial, ++stacks) {
        const std::size_t w = 1 + rng() % 16, h = 1 + rng() % 16, n = 1 + rng() % 25;
        std::vector<Scene> scenes(n);
        for (auto& s : scenes) {
            s.acquired = parse_iso_date(rng() % 2 ? "2017-04-01" : "2018-09-30");
            s.valid_mask = make_raster(w, h, {"valid"}, testutil::gt10(), "", 255.0f, 1.0f);
            for (auto& m : s.valid_mask.pixels) m = rng() % 3 == 0 ? 0.0f : 1.0f;
            for (const auto& name : kBandNames) {
                RasterGrid g = make_raster(w, h, {name}, testutil::gt10(), "");
                for (auto& x : g.pixels) x = rng() % 10 == 0 ? g.nodata : static_cast<float>(rng() % 500) / 499.0f;
                s.bands.push_back({name, std::move(g)});
            }
        }
        // Force one fully masked pixel per stack.
        for (auto& s : scenes) s.valid_mask.pixels[0] = 0.0f;
        const auto c = median_composite(scenes, kEpochs[1]);
        for (std::size_t b = 0; b < 12; ++b)
            for (std::size_t r = 0; r < h; ++r)
                for (std::size_t col = 0; col < w; ++col) {
                    std::vector<float> vals;
                    for (const auto& s : scenes) {
                        const float x = s.bands[b].raster.at(0, r, col);
                        if (s.valid_mask.at(0, r, col) == 1.0f && x != s.bands[b].raster.nodata) vals.push_back(x);
                    }
                    even_pixels += !vals.empty() && vals.size() % 2 == 0;
                    empty_pixels += vals.empty();
                    const float want = oracle::median(vals, c.bands.nodata);
                    if (std::bit_cast<std::uint32_t>(want) != std::bit_cast<std::uint32_t>(c.bands.at(b, r, col)))
                        ++mismatches;
                }
    }
    Outcome o;
    o.pass = mismatches == 0 && even_pixels > 0 && empty_pixels > 0;
    o.detail = std::to_string(stacks) + " stacks, " + std::to_string(mismatches) + " mismatches (" +
               std::to_string(even_pixels) + " even-count, " + std::to_string(empty_pixels) + " all-masked pixels)";
    return o;
}

Outcome split_oracle() {
    std::mt19937_64 rng(303);
    std::size_t disagreements = 0, with_split = 0;
    for (int trial = 0; trial < 100; ++trial) {
        TrainingData d;
        d.rows = 2 + rng() % 199;
        d.cols = 1 + rng() % 5;
        const std::size_t levels = 2 + rng() % 30;
        for (std::size_t i = 0; i < d.rows * d.cols; ++i) d.x.push_back(static_cast<double>(rng() % levels) * 0.37);
        for (std::size_t i = 0; i < d.rows; ++i) d.y.push_back(static_cast<std::uint8_t>(rng() % 2));
        std::vector<std::uint32_t> rows(d.rows);
        for (std::size_t i = 0; i < d.rows; ++i) rows[i] = static_cast<std::uint32_t>(i);
        std::vector<std::size_t> feats(d.cols);
        for (std::size_t f = 0; f < d.cols; ++f) feats[f] = f;
        const auto got = find_best_split(d, rows, feats);
        const auto want = oracle::best_split(d, rows, feats, 1);
        if (got.has_value() != want.has_value()) {
            ++disagreements;
            continue;
        }
        if (!got) continue;
        ++with_split;
        if (got->feature != want->feature || got->threshold != want->threshold || got->decrease != want->decrease)
            ++disagreements;
    }
    Outcome o;
    o.pass = disagreements == 0;
    o.detail = "100 tables, " + std::to_string(with_split) + " with a split, " + std::to_string(disagreements) +
               " disagreements";
    return o;
}

Outcome gradient_check() {
    std::mt19937_64 rng(404);
    std::normal_distribution<double> g(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        LinearProblem p;
        p.rows = 10 + rng() % 40;
        p.cols = 1 + rng() % 8;
        for (std::size_t i = 0; i < p.rows * p.cols; ++i) p.z.push_back(g(rng));
        for (std::size_t i = 0; i < p.rows; ++i) p.y.push_back(static_cast<double>(rng() % 2));
        std::vector<double> w(p.cols);
        for (auto& x : w) x = 0.5 * g(rng);
        const double b = 0.5 * g(rng), lambda = 1e-3 * static_cast<double>(rng() % 100);
        std::vector<double> grad(p.cols);
        double grad_b = 0.0;
        logistic_gradient(p, w, b, lambda, grad, grad_b);
        std::vector<double> analytic = grad, numeric(p.cols + 1);
        analytic.push_back(grad_b);
        const double h = 1e-5;
        for (std::size_t f = 0; f <= p.cols; ++f) {
            auto wp = w, wm = w;
            double bp = b, bm = b;
            if (f < p.cols) wp[f] += h, wm[f] -= h;
            else bp += h, bm -= h;
            numeric[f] = (logistic_objective(p, wp, bp, lambda) - logistic_objective(p, wm, bm, lambda)) / (2 * h);
        }
        double diff = 0.0, norm = 0.0;
        for (std::size_t f = 0; f <= p.cols; ++f) {
            diff += (analytic[f] - numeric[f]) * (analytic[f] - numeric[f]);
            norm += analytic[f] * analytic[f] + numeric[f] * numeric[f];
        }
        worst = std::max(worst, std::sqrt(diff) / std::max(1e-12, std::sqrt(norm)));
    }
    Outcome o;
    o.pass = worst < 1e-6;
    char buf[64];
    std::snprintf(buf, sizeof buf, "worst relative error %.3g over 20 problems", worst);
    o.detail = buf;
    return o;
}

Outcome curve_oracle() {
    std::mt19937_64 rng(707);
    std::size_t mismatches = 0, non_monotone = 0, transform_changes = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng() % 1000;
        std::vector<ScoredUnit> units(n);
        for (std::size_t i = 0; i < n; ++i) {
            units[i].id = "u" + std::to_string(i);
            units[i].probability = static_cast<double>(rng() % 200) / 199.0;
            units[i].label = rng() % 5 == 0;
        }
        units[rng() % n].label = 1;
        const auto curve = curve_at_top_x(units);
        auto shifted = units;
        for (auto& u : shifted) u.probability = std::log1p(u.probability) * 4.0 + 1.0;
        const auto curve2 = curve_at_top_x(shifted);
        double last = -1.0;
        for (int x = 1; x <= 100; ++x) {
            const auto& p = curve[static_cast<std::size_t>(x - 1)];
            const auto want = oracle::top_x_counts(units, x);
            if (p.counts.tp != want.tp || p.counts.fp != want.fp || p.counts.fn != want.fn || p.counts.tn != want.tn)
                ++mismatches;
            if (*p.recall < last) ++non_monotone;
            last = *p.recall;
            if (!(curve2[static_cast<std::size_t>(x - 1)].counts == p.counts)) ++transform_changes;
        }
    }
    Outcome o;
    o.pass = mismatches == 0 && non_monotone == 0 && transform_changes == 0;
    o.detail = std::to_string(mismatches) + " count mismatches, " + std::to_string(non_monotone) +
               " recall decreases, " + std::to_string(transform_changes) + " changes under a monotone transform";
    return o;
}

Outcome settlement_aggregation() {
    std::mt19937_64 rng(808);
    std::size_t mismatches = 0;
    for (std::size_t m = 1; m <= 50; ++m) {
        std::vector<double> v(m);
        for (auto& x : v) x = static_cast<double>(rng() % 10000) / 9999.0;
        // Hand enumeration: repeatedly take the current maximum, k = ceil(m/10) times.
        std::size_t k = m / 10 + (m % 10 != 0);
        auto pool = v;
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            auto it = std::max_element(pool.begin(), pool.end());
            sum += *it;
            pool.erase(it);
        }
        const double want = sum / static_cast<double>(k);
        if (mean_of_top_decile(v) != want) ++mismatches;
        for (int perm = 0; perm < 5; ++perm) {
            std::shuffle(v.begin(), v.end(), rng);
            if (mean_of_top_decile(v) != want) ++mismatches;
        }
    }
    Outcome o;
    o.pass = mismatches == 0;
    o.detail = "group sizes 1..50 with 5 permutations each, " + std::to_string(mismatches) + " mismatches";
    return o;
}

// ---------------------------------------------------------------------------
// End-to-end on the synthetic fixture.

struct EndToEnd {
    fs::path root;
    PipelineConfig run1, run2;
    double run1_seconds = 0.0;
    double synth_seconds = 0.0;
};

EndToEnd& fixture() {
    static EndToEnd e = [] {
        EndToEnd f;
        f.root = fs::temp_directory_path() / "setmap_acceptance";
        fs::remove_all(f.root);
        SynthOptions opt; // 9 municipalities, 6 settlements each, RF of 100 trees
        opt.seed = 2024;
        auto t0 = Clock::now();
        const auto res = synthesize(f.root / "fixture", opt);
        f.synth_seconds = seconds_since(t0);
        ConfigOverrides a, b;
        a.output_dir = f.root / "run1";
        b.output_dir = f.root / "run2";
        f.run1 = load_config(res.config, a);
        f.run2 = load_config(res.config, b);
        std::ostringstream log;
        t0 = Clock::now();
        run_pipeline(f.run1, "all", true, log);
        f.run1_seconds = seconds_since(t0);
        return f;
    }();
    return e;
}

Outcome cv_leakage() {
    auto& f = fixture();
    const auto table = read_feature_table(layout::dataset(f.run1));
    const auto folds = spatial_folds(table);
    std::size_t leaks = 0;
    std::vector<int> times_tested(table.size(), 0);
    for (const auto& fold : folds) {
        std::set<std::string> test_munis;
        for (auto i : fold.test) {
            test_munis.insert(table[i].municipality);
            ++times_tested[i];
        }
        for (auto i : fold.train) leaks += test_munis.count(table[i].municipality);
    }
    const auto bad = std::count_if(times_tested.begin(), times_tested.end(), [](int t) { return t != 1; });
    Outcome o;
    o.pass = leaks == 0 && bad == 0 && folds.size() == 9;
    o.detail = std::to_string(folds.size()) + " folds over " + std::to_string(table.size()) + " rows, " +
               std::to_string(leaks) + " leaked training rows, " + std::to_string(bad) +
               " rows not tested exactly once";
    return o;
}

const nlohmann::json* find_curve(const nlohmann::json& report, const std::string& model, const std::string& fold,
                                 const std::string& level) {
    for (const auto& e : report)
        if (e["model"] == model && e["fold"] == fold && e["level"] == level) return &e["curve"];
    return nullptr;
}

Outcome synthetic_benchmark() {
    auto& f = fixture();
    const auto report = read_json_file(layout::report_json(f.run1));
    int passing = 0, folds = 0;
    std::ostringstream per_fold;
    for (const auto& m : f.run1.municipalities) {
        const auto* c = find_curve(report, "random_forest", m.name, "settlement");
        if (!c) continue;
        ++folds;
        const auto& p = (*c)[19];
        const double recall = p["recall"].is_null() ? 0.0 : p["recall"].get<double>();
        passing += recall >= 0.9;
        per_fold << (folds > 1 ? " " : "") << m.name << "=" << recall;
    }
    const double total = f.synth_seconds + f.run1_seconds;
    Outcome o;
    o.pass = folds == 9 && passing >= 7 && total < 600.0;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d/9 folds with settlement recall@20%% >= 0.9 [", passing);
    o.detail = buf + per_fold.str() + "]";
    std::snprintf(buf, sizeof buf, "; fixture %.1f s + pipeline %.1f s on %zu worker(s)", f.synth_seconds,
                  f.run1_seconds, worker_count());
    o.detail += buf;
    return o;
}

Outcome model_ordering() {
    auto& f = fixture();
    const auto report = read_json_file(layout::report_json(f.run1));
    auto at10 = [&](const std::string& model) {
        const auto* c = find_curve(report, model, "macro", "pixel");
        if (!c || (*c)[9]["precision"].is_null()) return -1.0;
        return (*c)[9]["precision"].get<double>();
    };
    const double rf = at10("random_forest"), lr = at10("logistic"), svm = at10("linear_svm");
    Outcome o;
    o.pass = true; // soft: report only
    o.soft_flag = !(rf >= lr && rf >= svm);
    char buf[200];
    std::snprintf(buf, sizeof buf, "macro pixel precision@10%%: random_forest %.4f, logistic %.4f, linear_svm %.4f%s",
                  rf, lr, svm, o.soft_flag ? " (random forest NOT best; flagged)" : "");
    o.detail = buf;
    return o;
}

Outcome determinism() {
    auto& f = fixture();
    std::ostringstream log;
    run_pipeline(f.run2, "all", true, log);
    std::vector<fs::path> files;
    for (const auto& s : model_names(f.run1.models)) files.push_back(fs::relative(layout::model(f.run1, s), f.run1.output_dir));
    files.push_back(fs::relative(layout::report_json(f.run1), f.run1.output_dir));
    files.push_back(fs::relative(layout::report_csv(f.run1), f.run1.output_dir));
    for (const auto& m : f.run1.municipalities) {
        files.push_back(fs::relative(layout::probmap(f.run1, m.name), f.run1.output_dir));
        files.push_back(fs::relative(layout::candidates(f.run1, m.name), f.run1.output_dir));
    }
    std::size_t differing = 0;
    for (const auto& rel : files)
        if (testutil::slurp(f.run1.output_dir / rel) != testutil::slurp(f.run2.output_dir / rel)) ++differing;
    Outcome o;
    o.pass = differing == 0;
    o.detail = std::to_string(files.size()) + " artifacts compared (models, reports, probability maps, GeoJSON), " +
               std::to_string(differing) + " differ";
    return o;
}

} // namespace

int main() {
    report(1, "dataset arithmetic", dataset_arithmetic);
    report(2, "index oracle suite", index_oracle);
    report(3, "median composite oracle", median_oracle);
    report(4, "split search oracle", split_oracle);
    report(5, "logistic gradient check", gradient_check);
    report(6, "cross-validation leakage", cv_leakage);
    report(7, "curve oracle", curve_oracle);
    report(8, "settlement aggregation", settlement_aggregation);
    report(9, "synthetic end-to-end benchmark", synthetic_benchmark);
    report(10, "model ordering (soft)", model_ordering);
    report(11, "determinism", determinism);
    std::printf("%d criterion failure(s)\n", failures);
    fs::remove_all(fs::temp_directory_path() / "setmap_acceptance");
    return failures == 0 ? 0 : 1;
}
