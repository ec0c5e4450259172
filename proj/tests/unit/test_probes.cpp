#include <cmath>
#include <functional>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "lab/error.hpp"
#include "lab/probes.hpp"
#include "lab/rng.hpp"

using namespace lab;

namespace {

const ElementTable& table() { return ElementTable::builtin(); }

// (rows, layers, 1, d) store; row r describes element r % 50.
ActivationStore synthetic_store(int rows, int layers, int d,
                                const std::function<void(int element, int layer, SplitMix64&, std::vector<float>&)>& fill,
                                std::uint64_t seed = 0) {
    ActivationStore s;
    s.model = {{"name", "synthetic"}, {"layer_count", layers - 1}};
    s.shape = {static_cast<std::size_t>(rows), static_cast<std::size_t>(layers), 1, static_cast<std::size_t>(d)};
    s.axes = {"prompt", "layer", "position", "hidden"};
    SplitMix64 rng(seed);
    std::vector<float> v(static_cast<std::size_t>(d));
    for (int r = 0; r < rows; ++r) {
        s.prompts.push_back({{"i", r % 50}});
        for (int l = 0; l < layers; ++l) {
            fill(r % 50, l, rng, v);
            s.data.insert(s.data.end(), v.begin(), v.end());
        }
    }
    return s;
}

// Atomic number along a fixed direction, scaled by `gain`, plus unit noise.
ActivationStore linear_store(const std::function<double(int layer)>& gain, std::uint64_t seed, int rows = 150,
                             int d = 12) {
    return synthetic_store(rows, 6, d, [&](int e, int l, SplitMix64& rng, std::vector<float>& v) {
        for (auto& x : v) x = static_cast<float>(rng.normal());
        v[0] += static_cast<float>(gain(l) * (e + 1));
    }, seed);
}

std::vector<double> column_values(const num::Matrix& m) { return {m.data(), m.data() + m.rows()}; }

}  // namespace

TEST(ProbeLayer, LinearSignalRegression) {
    const num::Matrix x = lab::testing::gaussian(200, 8, 1);
    num::Vector w(8);
    w << 1, 2, -1, 0, 0, 3, 0.5, 0;
    const num::Vector y = x * w;
    const auto r = probe_layer(x, column_values(y), std::vector<bool>(200, true), ProbeKind::regression);
    EXPECT_EQ(r.cv_scores.size(), 5u);
    EXPECT_GE(r.mean_score, 0.99);
    ASSERT_TRUE(r.residuals);
    EXPECT_EQ(r.residuals->size(), 200);
}

TEST(ProbeLayer, ClustersClassification) {
    num::Matrix x = lab::testing::gaussian(150, 6, 2);
    std::vector<double> labels(150);
    for (int i = 0; i < 150; ++i) {
        labels[static_cast<std::size_t>(i)] = i % 5;
        x(i, i % 5) += 8.0;
    }
    const auto r = probe_layer(x, labels, std::vector<bool>(150, true), ProbeKind::classification);
    EXPECT_GE(r.mean_score, 0.99);
    ASSERT_TRUE(r.confusion);
    EXPECT_EQ(r.classes, (std::vector<int>{0, 1, 2, 3, 4}));
    EXPECT_EQ(r.confusion->sum(), 150);
    int correct = 0;
    for (int i = 0; i < 150; ++i) correct += r.out_of_fold_predictions[static_cast<std::size_t>(i)] == i % 5;
    EXPECT_DOUBLE_EQ(r.pooled_accuracy, correct / 150.0);
    EXPECT_DOUBLE_EQ(r.pooled_accuracy, r.confusion->trace() / 150.0);
}

TEST(ProbeLayer, ShuffledLabelsCarryNoSignal) {
    const num::Matrix x = lab::testing::gaussian(200, 10, 3);
    SplitMix64 rng(4);
    std::vector<double> y(200), cls(200);
    for (int i = 0; i < 200; ++i) {
        y[static_cast<std::size_t>(i)] = rng.normal();
        cls[static_cast<std::size_t>(i)] = static_cast<double>(rng.below(4));
    }
    const std::vector<bool> all(200, true);
    EXPECT_LE(probe_layer(x, y, all, ProbeKind::regression).mean_score, 0.1);
    EXPECT_LE(probe_layer(x, cls, all, ProbeKind::classification).mean_score, 3 * 0.25);
}

TEST(ProbeLayer, MaskDropsRows) {
    const num::Matrix x = lab::testing::gaussian(60, 3, 5);
    std::vector<double> y(60);
    std::vector<bool> mask(60, true);
    for (int i = 0; i < 60; ++i) y[static_cast<std::size_t>(i)] = x(i, 0);
    mask[10] = false;
    y[10] = std::nan("");
    const auto r = probe_layer(x, y, mask, ProbeKind::regression);
    EXPECT_TRUE(std::isfinite(r.mean_score));
    EXPECT_EQ(r.residuals->size(), 59);
}

TEST(ProbeSweep, FlatOnPlantedAndNullBaseline) {
    // 550 rows, as in the 50-element x 11-template dataset.
    const auto store = linear_store([](int) { return 0.5; }, 6, 550, 4);
    const auto sweep = probe_sweep(store, table(), Attribute::atomic_number, ProbeKind::regression, "continuation");
    ASSERT_EQ(sweep.curve.layers.size(), 6u);
    EXPECT_NO_THROW(sweep.curve.validate());
    EXPECT_DOUBLE_EQ(sweep.curve.depths.back(), 1.0);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_GT(sweep.curve.scores[i], 0.95);
        EXPECT_LE(sweep.curve.ci_low[i], sweep.curve.scores[i]);
        EXPECT_LE(std::abs(sweep.random_baseline.scores[i]), 0.1);
    }
    EXPECT_EQ(sweep.random_baseline.condition, "random");
}

TEST(ProbeSweep, ElectronegativityMaskFromStore) {
    const auto store = linear_store([](int) { return 0.5; }, 7);
    const auto labels = store_labels(store, table(), Attribute::electronegativity);
    EXPECT_FALSE(labels.present[1]);   // He
    EXPECT_FALSE(labels.present[51]);  // He again, second pass
    EXPECT_TRUE(labels.present[0]);
}

TEST(Delta, IdenticalCurvesGiveZero) {
    const auto a = probe_sweep(linear_store([](int) { return 0.1; }, 8), table(), Attribute::atomic_number,
                               ProbeKind::regression, "continuation")
                       .curve;
    const auto d = delta_curve({a, a}, {a, a});
    for (std::size_t i = 0; i < d.scores.size(); ++i) {
        EXPECT_EQ(d.scores[i], 0.0);
        EXPECT_LE(d.ci_low[i], 0.0);
        EXPECT_GE(d.ci_high[i], 0.0);
    }
}

TEST(Delta, RisesWhenContinuationGainsDeepSignal) {
    // Continuation signal grows with depth; question signal stays weak.
    const auto cont = probe_sweep(linear_store([](int l) { return 0.02 * std::pow(1.5, l); }, 9, 550, 4), table(),
                                  Attribute::atomic_number, ProbeKind::regression, "continuation");
    const auto ques = probe_sweep(linear_store([](int) { return 0.02; }, 10, 550, 4), table(),
                                  Attribute::atomic_number, ProbeKind::regression, "question");
    const auto d = delta_curve({cont.curve}, {ques.curve});
    for (std::size_t i = 1; i < d.scores.size(); ++i) EXPECT_GT(d.scores[i], d.scores[i - 1] - 0.02);
    EXPECT_GT(d.scores.back(), d.scores.front() + 0.3);
    const auto trend = trend_analysis({d}, 0.0, 1.0);
    EXPECT_GT(trend[0].result.tau, 0.8);
}

TEST(Trend, StrictlyIncreasingIsSignificant) {
    LayerCurve c{"m", "a", "delta", {}, {}, {}, {}, {}};
    for (int l = 0; l <= 20; ++l) {
        c.layers.push_back(l);
        c.depths.push_back(l / 20.0);
        c.scores.push_back(l);
        c.ci_low.push_back(l);
        c.ci_high.push_back(l);
    }
    const auto rows = trend_analysis({c}, 0.5, 1.0);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].result.n, 11u);
    EXPECT_DOUBLE_EQ(rows[0].result.tau, 1.0);
    EXPECT_TRUE(rows[0].result.significant_after_fdr);
    EXPECT_THROW(trend_analysis({c}, 0.99, 1.0), Error);
}

TEST(Trend, FamilyFalseDiscoveryCalibrated) {
    SplitMix64 rng(31);
    const int trials = 2000;
    int any = 0;
    for (int t = 0; t < trials; ++t) {
        std::vector<LayerCurve> family;
        for (int j = 0; j < 5; ++j) {
            LayerCurve c{"m", std::to_string(j), "delta", {}, {}, {}, {}, {}};
            for (int l = 0; l < 20; ++l) {
                const double v = rng.normal();
                c.layers.push_back(l);
                c.depths.push_back(0.5 + l / 40.0);
                c.scores.push_back(v);
                c.ci_low.push_back(v);
                c.ci_high.push_back(v);
            }
            family.push_back(std::move(c));
        }
        bool hit = false;
        for (const auto& row : trend_analysis(family, 0.5, 1.0)) hit = hit || row.result.significant_after_fdr;
        any += hit;
    }
    // Under the global null BH controls the family-wise rate at alpha.
    const double rate = static_cast<double>(any) / trials;
    const double se = std::sqrt(0.05 * 0.95 / trials);
    EXPECT_LE(rate, 0.05 + 3 * se);
}

TEST(IndirectRecall, ScreeningRefusesDependentPairs) {
    const auto s = linear_store([](int) { return 0.5; }, 11);
    EXPECT_THROW(indirect_recall_experiment(s, {{Attribute::period, &s}}, s, table(), Attribute::group), Error);
    EXPECT_NO_THROW(
        indirect_recall_experiment(s, {{Attribute::period, &s}}, s, table(), Attribute::group, {}, /*force=*/true));
}

TEST(IndirectRecall, SignalOnlyInMatching) {
    const auto matching = linear_store([](int) { return 0.5; }, 12);
    const auto other = linear_store([](int) { return 0.0; }, 13);
    const auto r = indirect_recall_experiment(matching, {{Attribute::group, &other}, {Attribute::electronegativity, &other}},
                                              other, table(), Attribute::atomic_number);
    EXPECT_EQ(r.screens.size(), 2u);
    EXPECT_EQ(r.non_matching_pairs.size(), 2u);
    for (std::size_t i = 0; i < r.matching.scores.size(); ++i) {
        EXPECT_GT(r.matching.scores[i], 0.9);
        EXPECT_LT(r.non_matching.scores[i], 0.2);
        EXPECT_LT(r.no_mention.scores[i], 0.2);
    }
}

TEST(IndirectRecall, AllConditionsCarrySignal) {
    const auto s = linear_store([](int) { return 0.5; }, 14);
    const auto r = indirect_recall_experiment(s, {{Attribute::group, &s}}, s, table(), Attribute::atomic_number);
    for (std::size_t i = 0; i < r.matching.scores.size(); ++i) {
        EXPECT_GT(r.matching.scores[i], 0.95);
        EXPECT_GT(r.non_matching.scores[i], 0.95);
        EXPECT_GT(r.no_mention.scores[i], 0.95);
    }
}

TEST(RepMap, AffineImageIsPerfect) {
    const num::Matrix mix = lab::testing::gaussian(10, 10, 15);
    const auto from = synthetic_store(50, 3, 10, [&](int e, int l, SplitMix64&, std::vector<float>& v) {
        SplitMix64 local(static_cast<std::uint64_t>(e * 7 + l));
        for (auto& x : v) x = static_cast<float>(local.normal());
    });
    ActivationStore to = from;
    for (std::size_t r = 0; r < 50 * 3; ++r) {
        Eigen::Map<Eigen::VectorXf> src(const_cast<float*>(from.data.data()) + r * 10, 10);
        Eigen::Map<Eigen::VectorXf> dst(to.data.data() + r * 10, 10);
        dst = (mix.cast<float>() * src).array() + 2.0f;
    }
    const auto curve = representation_map(from, to, {.pca_dim = 10});
    for (double s : curve.scores) EXPECT_NEAR(s, 1.0, 1e-6);
}

TEST(RepMap, IndependentRepsGiveNoFit) {
    const auto from = synthetic_store(50, 3, 10, [](int, int, SplitMix64& rng, std::vector<float>& v) {
        for (auto& x : v) x = static_cast<float>(rng.normal());
    }, 16);
    const auto to = synthetic_store(50, 3, 10, [](int, int, SplitMix64& rng, std::vector<float>& v) {
        for (auto& x : v) x = static_cast<float>(rng.normal());
    }, 17);
    for (double s : representation_map(from, to, {.pca_dim = 5}).scores) EXPECT_LE(s, 0.0);
}

TEST(RepMap, ConstantTargetLayerIsUndefined) {
    const auto from = synthetic_store(50, 2, 6, [](int, int, SplitMix64& rng, std::vector<float>& v) {
        for (auto& x : v) x = static_cast<float>(rng.normal());
    }, 18);
    const auto to = synthetic_store(50, 2, 6, [](int e, int l, SplitMix64&, std::vector<float>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = l == 0 ? 0.5f : static_cast<float>(e * (i + 1));
    });
    const auto curve = representation_map(from, to, {.pca_dim = 5});
    ASSERT_EQ(curve.scores.size(), 2u);
    EXPECT_TRUE(std::isnan(curve.scores[0]));
    EXPECT_TRUE(std::isfinite(curve.scores[1]));
}

TEST(WeightSimilarity, IdenticalAndRandom) {
    const auto sweep = probe_sweep(linear_store([](int) { return 0.5; }, 18), table(), Attribute::atomic_number,
                                   ProbeKind::regression, "continuation");
    const auto same = probe_weight_similarity(sweep.results, sweep.results, 5);
    for (const auto& row : same) {
        EXPECT_NEAR(row.cosine, 1.0, 1e-12);
        EXPECT_TRUE(row.outside_band);
        EXPECT_NEAR(row.half_width, 3.2905267 / std::sqrt(12.0), 1e-6);
    }
}

TEST(WeightSimilarity, RandomHighDimensionalWeightsStayInBand) {
    SplitMix64 rng(19);
    const int d = 8192, draws = 2000;
    int inside = 0;
    for (int t = 0; t < draws; ++t) {
        ProbeResult a, b;
        a.probe.standardized.weights.resize(1, d);
        b.probe.standardized.weights.resize(1, d);
        for (int k = 0; k < d; ++k) {
            a.probe.standardized.weights(0, k) = rng.normal();
            b.probe.standardized.weights(0, k) = rng.normal();
        }
        inside += !probe_weight_similarity({a}, {b}, 1).front().outside_band;
    }
    EXPECT_GE(inside, static_cast<int>(0.995 * draws));
}

TEST(Curves, CsvLayout) {
    LayerCurve c{"m", "group", "question", {0, 1}, {0.0, 1.0}, {0.5, 0.6}, {0.4, 0.5}, {0.6, 0.7}};
    std::ostringstream out;
    write_curves_csv(out, {c});
    EXPECT_EQ(out.str().substr(0, out.str().find('\n')),
              "model,attribute_or_pair,condition,layer,depth,score,ci_low,ci_high");
    LayerCurve bad = c;
    bad.scores.pop_back();
    EXPECT_THROW(bad.validate(), Error);
}
