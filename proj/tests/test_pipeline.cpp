#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

using namespace setmap;
namespace fs = std::filesystem;

namespace {

SynthOptions tiny() {
    SynthOptions o;
    o.size = 150;
    o.municipalities = 2;
    o.settlements = 2;
    o.scenes_per_epoch = 2;
    o.negatives_per_municipality = 300;
    o.rf_trees = 5;
    o.seed = 3;
    return o;
}

std::string error_text(const fs::path& config) {
    try {
        load_config(config);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Validation);
        return e.what();
    }
    return {};
}

} // namespace

TEST(Synth, FixtureIsDeterministic) {
    const auto a = testutil::scratch("synth_a"), b = testutil::scratch("synth_b");
    synthesize(a, tiny());
    synthesize(b, tiny());
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), a);
        EXPECT_EQ(testutil::slurp(e.path()), testutil::slurp(b / rel)) << rel;
        ++files;
    }
    EXPECT_GT(files, 50u);
}

TEST(Synth, PlantedPolygonsCoverPixels) {
    const auto dir = testutil::scratch("synth_cover");
    const auto res = synthesize(dir, tiny());
    EXPECT_EQ(res.planted, 4u);
    const auto truth = read_json_file(dir / "truth.json");
    for (const auto& m : res.municipalities) {
        const auto polys = read_polygons(dir / m / "settlements.geojson");
        const auto frame = make_raster(150, 150, {"f"}, GeoTransform{400000.0 + (m == "m2" ? 20000.0 : 0.0), 10, 0,
                                                                      1300000.0, 0, -10},
                                       "");
        const auto ids = rasterize_polygon_ids(polys, frame);
        for (std::size_t p = 0; p < polys.polygons.size(); ++p)
            EXPECT_GT(std::count(ids.begin(), ids.end(), static_cast<std::int32_t>(p)), 0);
        EXPECT_EQ(truth[m]["settlements"].size(), 2u);
    }
}

TEST(Synth, DegenerateSize) {
    auto o = tiny();
    o.size = 96;
    EXPECT_THROW(synthesize(testutil::scratch("synth_bad"), o), Error);
    o.size = 151;
    EXPECT_THROW(synthesize(testutil::scratch("synth_bad"), o), Error);
}

TEST(Config, ListsEveryViolation) {
    const auto dir = testutil::scratch("config_errors");
    const auto res = synthesize(dir, tiny());
    auto doc = read_json_file(res.config);
    doc["municipalities"][0]["scenes"].erase("2017-2018");
    doc["municipalities"][1]["polygons"] = "missing.geojson";
    doc["sampling"]["formal_fraction"] = 0.9;
    write_json_file(dir / "bad.json", doc);
    const auto text = error_text(dir / "bad.json");
    EXPECT_NE(text.find("missing epoch 2017-2018"), std::string::npos) << text;
    EXPECT_NE(text.find("missing.geojson"), std::string::npos) << text;
    EXPECT_NE(text.find("sampling"), std::string::npos) << text;
    EXPECT_NE(text.find("3 config error"), std::string::npos) << text;
}

TEST(Config, OverridesWinAndSeedsFanOut) {
    const auto dir = testutil::scratch("config_override");
    const auto res = synthesize(dir, tiny());
    ConfigOverrides o;
    o.seed = 77;
    o.output_dir = dir / "elsewhere";
    const auto cfg = load_config(res.config, o);
    EXPECT_EQ(cfg.seed, 77u);
    EXPECT_EQ(cfg.output_dir, dir / "elsewhere");
    EXPECT_EQ(cfg.sampling.seed, 77u + kSamplingSeedOffset);
    EXPECT_EQ(cfg.models[1].seed, 77u + kModelSeedOffset + 1);
}

TEST(Pipeline, AllStagesThenRerunSkipsEverything) {
    const auto dir = testutil::scratch("pipeline_all");
    const auto res = synthesize(dir, tiny());
    const auto cfg = load_config(res.config);
    std::ostringstream log;
    const auto first = run_pipeline(cfg, "all", false, log);
    ASSERT_EQ(first.size(), stage_names().size());
    for (const auto& o : first) EXPECT_FALSE(o.skipped) << o.name;
    for (const auto& m : cfg.municipalities) {
        EXPECT_TRUE(fs::exists(layout::candidates(cfg, m.name)));
        EXPECT_TRUE(fs::exists(layout::preview(cfg, m.name)));
    }
    EXPECT_TRUE(fs::exists(layout::report_json(cfg)));
    EXPECT_TRUE(fs::exists(layout::summary(cfg)));

    const auto second = run_pipeline(cfg, "all", false, log);
    for (const auto& o : second) EXPECT_TRUE(o.skipped) << o.name;

    // Touching an upstream artifact invalidates the stages downstream of it.
    fs::last_write_time(layout::dataset(cfg), fs::file_time_type::clock::now() + std::chrono::seconds(5));
    EXPECT_FALSE(run_stage(cfg, "train", false, log).skipped);
    EXPECT_TRUE(run_stage(cfg, "composite", false, log).skipped);
    EXPECT_FALSE(run_stage(cfg, "composite", true, log).skipped);
}

TEST(Pipeline, StagesInSequenceMatchAll) {
    const auto dir = testutil::scratch("pipeline_seq");
    const auto res = synthesize(dir, tiny());
    ConfigOverrides a, b;
    a.output_dir = dir / "run_all";
    b.output_dir = dir / "run_steps";
    std::ostringstream log;
    run_pipeline(load_config(res.config, a), "all", false, log);
    const auto steps = load_config(res.config, b);
    for (const auto& s : stage_names()) run_pipeline(steps, s, false, log);
    std::size_t compared = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / "run_all")) {
        if (!e.is_regular_file() || e.path().filename() == "stage_summary.json") continue;
        const auto rel = fs::relative(e.path(), dir / "run_all");
        EXPECT_EQ(testutil::slurp(e.path()), testutil::slurp(dir / "run_steps" / rel)) << rel;
        ++compared;
    }
    EXPECT_GT(compared, 20u);
}

TEST(Pipeline, NoPlantedSettlementsFailsFast) {
    const auto dir = testutil::scratch("pipeline_empty");
    auto o = tiny();
    o.settlements = 0;
    const auto res = synthesize(dir, o);
    const auto cfg = load_config(res.config);
    std::ostringstream log;
    for (const char* s : {"composite", "features", "sample"}) run_stage(cfg, s, false, log);
    try {
        run_stage(cfg, "evaluate", false, log);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoPositives);
    }
}
