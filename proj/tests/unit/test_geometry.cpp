#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "lab/error.hpp"
#include "lab/geometry.hpp"
#include "lab/planted.hpp"

using namespace lab;

namespace {

const ElementTable& table() { return ElementTable::builtin(); }

num::Matrix planted_residuals(PlantedRunner& r) {
    const int d = r.info().hidden_dim;
    num::Matrix x(50, d);
    for (int z = 1; z <= 50; ++z) {
        const auto v = r.element_residual(z);
        for (int k = 0; k < d; ++k) x(z - 1, k) = v[static_cast<std::size_t>(k)];
    }
    return x;
}

}  // namespace

TEST(Spaces, Shapes) {
    for (int id = 1; id <= kSpaceCount; ++id) {
        const auto s = build_space(id, table());
        EXPECT_EQ(s.id, id);
        EXPECT_EQ(s.points.rows(), 50);
        EXPECT_TRUE(s.points.allFinite());
        EXPECT_FALSE(s.description.empty());
        EXPECT_EQ(s.prompt_mode, id == 10 ? PromptMode::number_control : PromptMode::element);
    }
    EXPECT_THROW(build_space(0, table()), Error);
    EXPECT_THROW(build_space(11, table()), Error);
}

TEST(Spaces, ArgonOnSpiral) {
    const auto s = build_space(3, table());
    EXPECT_NEAR(s.points(17, 0), 18.0, 1e-12);
    EXPECT_NEAR(s.points(17, 1), 0.0, 1e-12);
    EXPECT_NEAR(s.points(17, 2), 18.0, 1e-12);
    const double t = 2.0 * std::numbers::pi * 2.0 / 18.0;  // Mg, group 2
    EXPECT_NEAR(s.points(11, 0), 12.0 * std::cos(t), 1e-12);
    EXPECT_NEAR(s.points(11, 1), 12.0 * std::sin(t), 1e-12);
}

TEST(Spaces, LinearAndHybrid) {
    const auto s1 = build_space(1, table());
    ASSERT_EQ(s1.dim(), 1);
    for (int i = 0; i < 50; ++i) EXPECT_EQ(s1.points(i, 0), i + 1);
    const auto s2 = build_space(2, table());
    EXPECT_EQ(s2.points(11, 1), 2);
    EXPECT_EQ(s2.points(11, 2), 3);
    EXPECT_EQ(build_space(5, table()).points(11, 2), 3);
    EXPECT_EQ(build_space(7, table()).dim(), 2);
}

TEST(Spaces, RandomisedSpacesPermute) {
    const auto a = build_space(8, table(), 5);
    const auto b = build_space(8, table(), 5);
    ASSERT_TRUE(a.rng_seed);
    EXPECT_EQ(a.permutation, b.permutation);
    std::vector<int> sorted = a.permutation;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
    std::vector<int> identity(50);
    std::iota(identity.begin(), identity.end(), 0);
    EXPECT_NE(a.permutation, identity);
    EXPECT_NE(build_space(8, table(), 6).permutation, a.permutation);
    std::set<double> values(a.points.data(), a.points.data() + 50);
    EXPECT_EQ(values.size(), 50u);
}

TEST(GeometryMap, RealisableHoldout) {
    const auto space = build_space(3, table());
    const num::Matrix mix = lab::testing::gaussian(3, 10, 1);
    num::Matrix reps = space.points * mix;
    reps.rowwise() += lab::testing::gaussian(1, 10, 2).row(0);
    for (int holdout : {0, 17, 49}) {
        const auto map = fit_geometry_map(reps, space, holdout);
        const num::Vector pred = map.apply(reps.row(holdout).transpose());
        EXPECT_LT((pred - space.points.row(holdout).transpose()).norm(), 1e-6);
    }
}

TEST(GeometryMap, UnitScale) {
    const auto space = build_space(1, table());
    num::Matrix reps = space.points;
    reps.array() += 4.0;
    const auto map = fit_geometry_map(reps, space, 10);
    EXPECT_NEAR(map.weights(0, 0), 1.0, 1e-10);
    EXPECT_NEAR(map.bias(0), -4.0, 1e-9);
}

TEST(GeometryMap, NormalEquationsOracle) {
    const auto space = build_space(3, table());
    const num::Matrix reps = lab::testing::gaussian(50, 6, 3);
    const int holdout = 7;
    const auto map = fit_geometry_map(reps, space, holdout);
    num::Matrix a(49, 7), f(49, 3);
    for (int i = 0, r = 0; i < 50; ++i) {
        if (i == holdout) continue;
        a.row(r) << reps.row(i), 1.0;
        f.row(r++) = space.points.row(i);
    }
    const num::Matrix beta = (a.transpose() * a).ldlt().solve(a.transpose() * f);
    EXPECT_LT((map.weights.transpose() - beta.topRows(6)).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((map.bias.transpose() - beta.row(6)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(GeometryMap, RejectsRankDeficientReps) {
    const auto space = build_space(3, table());
    const num::Matrix reps = lab::testing::gaussian(50, 1, 4) * lab::testing::gaussian(1, 5, 5);
    EXPECT_THROW(fit_geometry_map(reps, space, 0), Error);
}

TEST(PatchVector, ZeroCorrectionAtCentroidImage) {
    auto space = build_space(3, table());
    const num::Matrix raw = lab::testing::gaussian(50, 12, 6);
    const auto pca = num::pca_fit(raw, 6);
    const num::Matrix reps = num::pca_transform(pca, raw);
    const int holdout = 20;
    const auto map = fit_geometry_map(reps, space, holdout);
    num::Vector mean = num::Vector::Zero(6);
    for (int i = 0; i < 50; ++i) {
        if (i != holdout) mean += reps.row(i).transpose();
    }
    mean /= 49.0;
    space.points.row(holdout) = map.apply(mean).transpose();
    const num::Vector out = patch_vector(reps, space, holdout, pca);
    const num::Matrix expected = num::pca_inverse(pca, mean.transpose());
    EXPECT_LT((out - expected.row(0).transpose()).norm(), 1e-9);
}

TEST(PatchVector, HoldoutRowNeverRead) {
    const auto space = build_space(3, table());
    num::Matrix raw = lab::testing::gaussian(50, 40, 7);
    const num::Vector clean = predict_residual(raw, space, 33, 10);
    raw.row(33).setConstant(std::numeric_limits<double>::quiet_NaN());
    const num::Vector poisoned = predict_residual(raw, space, 33, 10);
    EXPECT_EQ(clean, poisoned);
}

TEST(PatchVector, ExactRecoveryOnPlantedSpaces) {
    for (int id = 1; id <= 6; ++id) {
        const auto space = build_space(id, table());
        auto runner = build_planted_runner(table(), {.points = space.points, .layers = 2, .hidden = 64, .seed = 3});
        const num::Matrix x = planted_residuals(*runner);
        double worst = 0.0;
        for (int i = 0; i < 50; ++i) {
            const num::Vector pred = predict_residual(x, space, i, 30);
            worst = std::max(worst, (pred - x.row(i).transpose()).norm() / x.row(i).norm());
        }
        EXPECT_LT(worst, 1e-5) << "space " << id;
    }
}

TEST(ParseNumeric, Cases) {
    using V = std::vector<std::string>;
    EXPECT_EQ(parse_numeric(V{"12"}), 12);
    EXPECT_EQ(parse_numeric(V{" 1", "2", " is"}), 12);
    EXPECT_EQ(parse_numeric(V{"1", "2", "3"}), 12);
    EXPECT_EQ(parse_numeric(V{"5", " apples"}), 5);
    EXPECT_EQ(parse_numeric(V{"x12y"}), 12);
    EXPECT_EQ(parse_numeric(V{"no", "digits"}), std::nullopt);
    EXPECT_EQ(parse_numeric(V{}), std::nullopt);
    EXPECT_EQ(parse_numeric(V{"is ", "3", "4"}), 34);
}

TEST(Intervention, DefaultLayer) {
    EXPECT_EQ(default_patch_layer(80), 20);
    EXPECT_EQ(default_patch_layer(32), 8);
    EXPECT_EQ(default_patch_layer(4), 1);
}

TEST(Intervention, PlantedSpiralAndRandomised) {
    const auto space3 = build_space(3, table());
    auto runner = build_planted_runner(table(), {.points = space3.points, .noise_rel = 0.1, .seed = 4});
    const auto baselines = capture_baselines(*runner, table(), PromptMode::element);
    ASSERT_EQ(baselines.size(), 9u);
    const auto r3 = run_intervention(*runner, baselines, space3, {});
    EXPECT_EQ(r3.layer, 2);
    EXPECT_EQ(r3.outcomes.size(), 50u);
    EXPECT_GE(r3.frac_within_2, 0.95);
    const auto r8 = run_intervention(*runner, baselines, build_space(8, table()), {});
    EXPECT_LE(r8.frac_within_2, 0.30);
    EXPECT_FALSE(r8.permutation.empty());

    const auto summary = intervention_summary(r3);
    for (const char* k : {"R2", "Pearson Correlation", "Percentage of Abs. err <= 2", "MAE"}) {
        EXPECT_TRUE(summary.contains(k)) << k;
    }
    std::ostringstream out;
    write_intervention_jsonl(out, r3);
    const std::string text = out.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 51);
}

TEST(Intervention, MissesCountFifty) {
    const auto space = build_space(3, table());
    auto runner = build_planted_runner(table(), {.points = space.points, .layers = 2, .seed = 4});
    const auto baselines = capture_baselines(*runner, table(), PromptMode::element);
    const auto r = run_intervention(*runner, baselines, space, {.layer = 1});
    double mae = 0.0;
    int within = 0;
    for (const auto& o : r.outcomes) {
        EXPECT_EQ(o.abs_error, o.parsed ? std::min(50, std::abs(*o.parsed - o.target)) : 50);
        mae += o.abs_error;
        within += o.abs_error <= 2;
    }
    EXPECT_DOUBLE_EQ(r.mae, mae / 50.0);
    EXPECT_DOUBLE_EQ(r.frac_within_2, within / 50.0);
}

TEST(LayerSweep, FlatOnPlanted) {
    const auto space = build_space(3, table());
    auto runner = build_planted_runner(table(), {.points = space.points, .layers = 4, .noise_rel = 0.05, .seed = 5});
    const auto rows = layer_sweep(*runner, table(), space, {0, 2, 4});
    ASSERT_EQ(rows.size(), 3u);
    for (const auto& r : rows) {
        EXPECT_LT(r.mae, 1.0);
        EXPECT_LE(r.min_abs_error, r.max_abs_error);
    }
    EXPECT_THROW(layer_sweep(*runner, table(), space, {}), Error);
}
