#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "maskmatch/common/error.hpp"
#include "maskmatch/common/rng.hpp"
#include "maskmatch/common/text.hpp"
#include "maskmatch/eval/metrics.hpp"
#include "maskmatch/eval/report.hpp"
#include "support/oracles.hpp"
#include "support/stubs.hpp"

using namespace maskmatch;
using namespace maskmatch::eval;

namespace {

ScoreSet random_scores(Rng& rng, std::size_t max_size) {
    ScoreSet s;
    const auto na = 1 + rng.uniform_index(max_size);
    const auto ni = 1 + rng.uniform_index(max_size);
    // Coarse grids produce ties, continuous draws do not.
    const bool coarse = rng.bernoulli(0.5);
    auto draw = [&](double shift) {
        const double v = rng.normal(shift, 1.0);
        return coarse ? std::round(v * 4.0) / 4.0 : v;
    };
    const double shift = rng.uniform(-1.0, 3.0);
    for (std::size_t k = 0; k < na; ++k) s.authentic.push_back(draw(shift));
    for (std::size_t k = 0; k < ni; ++k) s.imposter.push_back(draw(0.0));
    return s;
}

}  // namespace

TEST(Metrics, MatchesBruteForceSweep) {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const ScoreSet s = random_scores(rng, 120);
        const auto curve = far_frr_curve(s);
        const auto oracle = testkit::brute_force_curve(s.authentic, s.imposter);
        ASSERT_EQ(curve.size(), oracle.size());
        for (std::size_t k = 0; k < curve.size(); ++k) {
            EXPECT_NEAR(curve[k].far, oracle[k].far, 1e-12);
            EXPECT_NEAR(curve[k].frr, oracle[k].frr, 1e-12);
        }
        EXPECT_NEAR(eer(s), testkit::brute_force_eer(oracle), 1e-9);
        EXPECT_NEAR(frr100(s), testkit::brute_force_frr100(oracle), 1e-9);
        EXPECT_NEAR(roc_auc(s), testkit::mann_whitney_auc(s.authentic, s.imposter), 1e-9);
    }
}

TEST(Metrics, HandComputedEer) {
    ScoreSet s{{0.9, 0.8, 0.7, 0.4}, {0.6, 0.5, 0.3, 0.2}, {}};
    EXPECT_NEAR(eer(s), 0.25, 1e-12);
    const auto d = eer_detail(s);
    EXPECT_LE(d.lower.threshold, d.upper.threshold);
}

TEST(Metrics, PerfectSeparation) {
    ScoreSet s{{0.9, 0.8, 0.95}, {0.1, 0.2, 0.3, 0.4}, {}};
    EXPECT_EQ(eer(s), 0.0);
    EXPECT_EQ(frr100(s), 0.0);
    EXPECT_EQ(roc_auc(s), 1.0);
}

TEST(Metrics, IdenticalDistributionsSitAtChance) {
    Rng rng(5);
    ScoreSet s;
    for (int k = 0; k < 10000; ++k) {
        s.authentic.push_back(rng.uniform01());
        s.imposter.push_back(rng.uniform01());
    }
    EXPECT_NEAR(eer(s), 0.5, 0.02);
    EXPECT_NEAR(roc_auc(s), 0.5, 0.02);
}

TEST(Metrics, CurveIsMonotoneAndBounded) {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = random_scores(rng, 60);
        const auto r = compute_report(s);
        for (std::size_t k = 1; k < r.curve.size(); ++k) {
            EXPECT_LT(r.curve[k - 1].threshold, r.curve[k].threshold);
            EXPECT_GE(r.curve[k - 1].far, r.curve[k].far);
            EXPECT_LE(r.curve[k - 1].frr, r.curve[k].frr);
        }
        for (double v : {r.eer, r.frr100, r.auc}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        EXPECT_EQ(r.curve.front().far, 1.0);
        EXPECT_EQ(r.curve.back().frr, 1.0);
    }
}

TEST(Metrics, AucInvariantUnderMonotoneTransform) {
    Rng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        auto s = random_scores(rng, 80);
        const double auc = roc_auc(s);
        for (auto* part : {&s.authentic, &s.imposter}) {
            for (double& v : *part) v = std::exp(v) * 3.0 + 1.0;
        }
        EXPECT_EQ(roc_auc(s), auc);
    }
}

TEST(Metrics, Frr100InfeasibleIsFlaggedNotThrown) {
    // Every imposter outscores every authentic: only the reject-all threshold
    // keeps FAR below 1%.
    ScoreSet s{{0.1, 0.2}, {0.8, 0.9}, {}};
    const auto f = frr100_detail(s);
    EXPECT_FALSE(f.feasible);
    EXPECT_EQ(f.frr, 1.0);
}

TEST(Metrics, Frr100UsesStrictOnePercent) {
    // 100 imposters: one false accept is FAR 0.01, which does not qualify, so
    // the threshold must rise above 0.7 and reject the 0.5 authentic.
    ScoreSet s;
    for (int k = 0; k < 99; ++k) s.imposter.push_back(0.1);
    s.imposter.push_back(0.7);
    s.authentic = {0.5, 0.8, 0.9, 0.95};
    EXPECT_DOUBLE_EQ(frr100(s), 0.25);
}

TEST(Metrics, EmptyPartitionAndNonFiniteScoresThrow) {
    EXPECT_THROW(eer(ScoreSet{{}, {0.1}, {}}), EmptyPartition);
    EXPECT_THROW(roc_auc(ScoreSet{{0.2}, {}, {}}), EmptyPartition);
    EXPECT_THROW(eer(ScoreSet{{NAN}, {0.1}, {}}), DomainError);
}

TEST(Report, MetricsFileRoundTripsExactly) {
    Rng rng(3);
    auto s = random_scores(rng, 50);
    s.provenance = {"fei_face", "FT1", "bottleneck", "fei.pairs", 42};
    const auto r = compute_report(s);
    const auto back = parse_metrics(serialize_metrics(r));
    EXPECT_EQ(back.provenance, r.provenance);
    EXPECT_EQ(back.eer, r.eer);
    EXPECT_EQ(back.frr100, r.frr100);
    EXPECT_EQ(back.auc, r.auc);
    EXPECT_EQ(back.n_authentic, r.n_authentic);
    EXPECT_EQ(back.eer_threshold_low, r.eer_threshold_low);
}

TEST(Report, EmitWritesMetricsCurveAndPlots) {
    const auto dir = testkit::fresh_dir("report");
    ScoreSet s{{0.9, 0.8, 0.7, 0.4}, {0.6, 0.5, 0.3, 0.2}, {"toy", "m/1", "fc512", "p", 1}};
    const auto files = emit_report(compute_report(s), dir);
    for (const auto& p : {files.metrics, files.curve, files.far_frr_plot, files.roc_plot}) {
        EXPECT_TRUE(std::filesystem::exists(p)) << p;
        EXPECT_GT(std::filesystem::file_size(p), 0u) << p;
    }
    EXPECT_EQ(files.metrics.parent_path(), dir);
    EXPECT_EQ(files.metrics.filename().string().find('/'), std::string::npos);
    EXPECT_NE(files.far_frr_plot, files.roc_plot);
}

TEST(Report, TableLayoutIsDatasetByModel) {
    ResultTable t;
    t.metric = "eer";
    t.models = {"CP1", "FT1", "Ensemble"};
    t.set("fei_face_original", "CP1", 0.25);
    t.set("fei_face_original", "FT1", 0.125);
    t.set("georgia_tech", "Ensemble", 0.5);
    const auto csv = render_table_csv(t);
    const auto doc = parse_csv(csv);
    ASSERT_TRUE(doc.has_header);
    EXPECT_EQ(doc.header.fields.size(), 4u);
    EXPECT_EQ(doc.rows.size(), 2u);
    const auto md = render_table_markdown(t);
    EXPECT_NE(md.find("| fei_face_original"), std::string::npos);
}
