#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace setmap;

namespace {

std::vector<ScoredUnit> units(const std::vector<double>& p, const std::vector<int>& y) {
    std::vector<ScoredUnit> u;
    for (std::size_t i = 0; i < p.size(); ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "u%04zu", i);
        u.push_back({id, p[i], y[i]});
    }
    return u;
}

FeatureRow row(const std::string& muni, int i, int label, const std::string& unit) {
    FeatureRow r;
    r.pixel_id = make_pixel_id(muni, static_cast<std::size_t>(i), 0);
    r.municipality = muni;
    r.label = label;
    (label ? r.settlement_id : r.grid_id) = unit;
    return r;
}

} // namespace

TEST(PrecisionRecall, HandCases) {
    auto pr = precision_recall({3, 1, 2, 0});
    EXPECT_DOUBLE_EQ(*pr.precision, 0.75);
    EXPECT_DOUBLE_EQ(*pr.recall, 0.6);
    pr = precision_recall({4, 0, 0, 7});
    EXPECT_EQ(*pr.precision, 1.0);
    EXPECT_EQ(*pr.recall, 1.0);
    pr = precision_recall({0, 0, 3, 1});
    EXPECT_FALSE(pr.precision);
}

TEST(Curve, HandExample) {
    const auto c = curve_at_top_x(units({0.9, 0.8, 0.2, 0.1}, {1, 0, 1, 0}));
    ASSERT_EQ(c.size(), 100u);
    EXPECT_EQ(c[49].selected, 2u);
    EXPECT_DOUBLE_EQ(*c[49].precision, 0.5);
    EXPECT_DOUBLE_EQ(*c[49].recall, 0.5);
    EXPECT_DOUBLE_EQ(*c[99].recall, 1.0);
    EXPECT_EQ(c[0].selected, 1u); // ceil(0.04)
}

TEST(Curve, PerfectRanking) {
    const auto c = curve_at_top_x(units({0.9, 0.8, 0.7, 0.3, 0.2, 0.1, 0.05, 0.01}, {1, 1, 1, 0, 0, 0, 0, 0}));
    for (const auto& p : c) {
        if (p.counts.tp < 3 || p.selected == 3) EXPECT_EQ(*p.precision, 1.0);
    }
}

TEST(Curve, MatchesBruteForceAndIsMonotone) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng() % 700;
        std::vector<double> p(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = static_cast<double>(rng() % 50) / 50.0; // many ties
            y[i] = static_cast<int>(rng() % 4 == 0);
        }
        y[rng() % n] = 1;
        const auto u = units(p, y);
        const auto c = curve_at_top_x(u);
        double last = 0.0;
        for (int x = 1; x <= 100; ++x) {
            const auto want = oracle::top_x_counts(u, x);
            const auto& got = c[static_cast<std::size_t>(x - 1)].counts;
            ASSERT_EQ(got.tp, want.tp);
            ASSERT_EQ(got.fp, want.fp);
            ASSERT_EQ(got.fn, want.fn);
            ASSERT_EQ(got.tn, want.tn);
            EXPECT_GE(*c[static_cast<std::size_t>(x - 1)].recall, last);
            last = *c[static_cast<std::size_t>(x - 1)].recall;
        }
        auto transformed = u;
        for (auto& t : transformed) t.probability = std::exp(3.0 * t.probability) - 7.0;
        const auto c2 = curve_at_top_x(transformed);
        for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(c2[i].counts, c[i].counts);
    }
}

TEST(Curve, ConstantScoresFollowIdOrder) {
    // With all scores tied, selection is by id, so the curve is fixed by labels in id order.
    const std::vector<int> y{0, 1, 0, 1, 1, 0, 0, 0, 1, 0};
    const auto c = curve_at_top_x(units(std::vector<double>(10, 0.5), y));
    std::size_t tp = 0;
    for (std::size_t k = 1; k <= 10; ++k) {
        tp += y[k - 1];
        EXPECT_EQ(c[k * 10 - 1].counts.tp, tp);
    }
    EXPECT_DOUBLE_EQ(*c[99].precision, 0.4);
}

TEST(Curve, NoPositives) {
    try {
        curve_at_top_x(units({0.1, 0.2}, {0, 0}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoPositives);
    }
}

TEST(TopDecile, HandCases) {
    std::vector<double> ten(10, 0.1);
    ten[3] = 0.7;
    EXPECT_DOUBLE_EQ(mean_of_top_decile(ten), 0.7);
    std::vector<double> twenty(20, 0.1);
    twenty[5] = 0.9;
    twenty[17] = 0.8;
    EXPECT_DOUBLE_EQ(mean_of_top_decile(twenty), 0.85);
    EXPECT_DOUBLE_EQ(mean_of_top_decile({0.2, 0.6, 0.4}), 0.6);
    EXPECT_THROW(mean_of_top_decile({}), Error);
}

TEST(TopDecile, MatchesEnumerationAndIgnoresOrder) {
    std::mt19937_64 rng(31);
    for (std::size_t m = 1; m <= 50; ++m) {
        std::vector<double> v(m);
        for (auto& x : v) x = static_cast<double>(rng() % 1000) / 1000.0;
        const double want = oracle::top_decile(v);
        EXPECT_DOUBLE_EQ(mean_of_top_decile(v), want);
        std::shuffle(v.begin(), v.end(), rng);
        EXPECT_DOUBLE_EQ(mean_of_top_decile(v), want);
    }
}

TEST(Folds, LeaveOneMunicipalityOut) {
    FeatureTable t;
    const std::vector<std::string> munis{"c", "a", "b"};
    for (int i = 0; i < 30; ++i) t.push_back(row(munis[i % 3], i, i % 2, "u"));
    const auto folds = spatial_folds(t);
    ASSERT_EQ(folds.size(), 3u);
    EXPECT_EQ(folds[0].municipality, "a");
    std::vector<int> seen(t.size(), 0);
    for (const auto& f : folds) {
        for (auto i : f.test) {
            ++seen[i];
            EXPECT_EQ(t[i].municipality, f.municipality);
        }
        for (auto i : f.train) EXPECT_NE(t[i].municipality, f.municipality);
        EXPECT_EQ(f.train.size() + f.test.size(), t.size());
    }
    for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Folds, TwoMunicipalitiesAreComplementary) {
    FeatureTable t{row("a", 0, 1, "s"), row("b", 1, 0, "g"), row("a", 2, 0, "g")};
    const auto folds = spatial_folds(t);
    ASSERT_EQ(folds.size(), 2u);
    EXPECT_EQ(folds[0].test, folds[1].train);
    EXPECT_EQ(folds[1].test, folds[0].train);
}

TEST(Folds, SingleMunicipalityRejected) {
    FeatureTable t{row("a", 0, 1, "s"), row("a", 1, 0, "g")};
    try {
        spatial_folds(t);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SingleMunicipality);
    }
}

TEST(Grouping, PositiveAndNegativeUnitsStayApart) {
    FeatureTable t{row("a", 0, 1, "x"), row("a", 1, 0, "x"), row("a", 2, 1, "x")};
    const std::vector<std::size_t> rows{0, 1, 2};
    const std::vector<double> probs{0.9, 0.5, 0.7};
    const auto g = group_by_unit(t, rows, probs);
    ASSERT_EQ(g.size(), 2u);
    EXPECT_EQ(g[1].label, 1);
    EXPECT_EQ(g[1].probabilities.size(), 2u);
    const auto s = settlement_scores(g);
    EXPECT_DOUBLE_EQ(s[1].probability, 0.9);
}

TEST(MacroAverage, SkipsUndefinedAndPoolsCounts) {
    Curve a(100), b(100);
    for (int i = 0; i < 100; ++i) {
        a[i].x = b[i].x = i + 1;
        a[i].precision = 1.0;
        a[i].counts.tp = 2;
        b[i].counts.fn = 1;
    }
    std::vector<const Curve*> both{&a, &b};
    const auto m = macro_average(both);
    EXPECT_EQ(*m[0].precision, 1.0);
    EXPECT_FALSE(m[0].recall);
    EXPECT_EQ(m[0].counts.tp, 2u);
    EXPECT_EQ(m[0].counts.fn, 1u);
}

TEST(Evaluate, SeparableDataAndReportShape) {
    // Three municipalities, label carried by feature 0.
    FeatureTable t;
    std::mt19937_64 rng(2);
    for (const char* m : {"a", "b", "c"})
        for (int i = 0; i < 60; ++i) {
            const int label = i < 15;
            auto r = row(m, i, label, label ? "s" + std::to_string(i / 5) : "g" + std::to_string(i / 9));
            for (auto& f : r.features) f = static_cast<double>(rng() % 100) / 100.0;
            r.features[0] = label ? 2.0 + r.features[1] : -2.0 - r.features[1];
            t.push_back(r);
        }
    std::vector<ModelSpec> specs(3);
    specs[0].forest.n_trees = 10;
    specs[1].kind = ModelKind::Logistic;
    specs[2].kind = ModelKind::LinearSvm;
    const auto report = evaluate(specs, t);
    ASSERT_EQ(report.models.size(), 3u);
    for (const auto& m : report.models) {
        ASSERT_EQ(m.folds.size(), 3u);
        for (const auto& f : m.folds)
            for (int x = 1; x <= 25; ++x) EXPECT_EQ(*f.pixel[static_cast<std::size_t>(x - 1)].precision, 1.0) << m.name;
    }
    const auto j = report_to_json(report);
    EXPECT_EQ(j.size(), 3u * (3 + 1) * 2);
    EXPECT_EQ(curve_from_json(j[0]["curve"]).size(), 100u);
}
