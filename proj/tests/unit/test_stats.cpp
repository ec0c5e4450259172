#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "lab/error.hpp"
#include "lab/rng.hpp"
#include "lab/stats.hpp"

using namespace lab;

namespace {

long brute_force_s(const std::vector<double>& x) {
    long s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = i + 1; j < x.size(); ++j) s += (x[j] > x[i]) - (x[j] < x[i]);
    }
    return s;
}

}  // namespace

TEST(Metrics, R2Basics) {
    const std::vector<double> y = {1, 2, 3, 4, 5};
    EXPECT_DOUBLE_EQ(num::r2(y, y), 1.0);
    const std::vector<double> flat(5, 3.0);
    EXPECT_NEAR(num::r2(y, flat), 0.0, 1e-15);
}

TEST(Metrics, SpearmanVersusPearson) {
    std::vector<double> x(10), y(10);
    for (int i = 0; i < 10; ++i) {
        x[static_cast<std::size_t>(i)] = i + 1;
        y[static_cast<std::size_t>(i)] = (i + 1) * (i + 1);
    }
    EXPECT_NEAR(num::spearman(x, y), 1.0, 1e-15);
    EXPECT_LT(num::pearson(x, y), 1.0);
}

TEST(Metrics, AverageRanksWithTies) {
    const std::vector<double> x = {10, 20, 20, 5};
    EXPECT_EQ(num::average_ranks(x), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Metrics, ConfusionDiagonalIsAccuracy) {
    const std::vector<int> labels = {0, 0, 1, 1, 2, 2, 2};
    const std::vector<int> pred = {0, 1, 1, 1, 2, 0, 2};
    const std::vector<int> classes = {0, 1, 2};
    const auto c = num::confusion_matrix(labels, pred, classes);
    EXPECT_EQ(c.sum(), 7);
    EXPECT_DOUBLE_EQ(c.trace() / 7.0, num::accuracy(labels, pred));
    EXPECT_EQ(c(2, 0), 1);
    const std::vector<int> stray = {0, 0, 1, 1, 2, 2, 9};
    EXPECT_THROW(num::confusion_matrix(labels, stray, classes), Error);
}

TEST(MannKendall, SMatchesBruteForce) {
    SplitMix64 rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 4 + rng.below(47);
        std::vector<double> x(n);
        // Coarse values so ties occur.
        for (auto& v : x) v = std::floor(rng.uniform() * 8.0);
        const auto r = num::mann_kendall(x);
        const long s = brute_force_s(x);
        EXPECT_EQ(r.s, s);
        EXPECT_EQ(r.tau, static_cast<double>(s) / (static_cast<double>(n * (n - 1)) / 2.0));
    }
}

TEST(MannKendall, MonotoneAndConstant) {
    std::vector<double> up(12);
    std::iota(up.begin(), up.end(), 0.0);
    const auto r = num::mann_kendall(up);
    EXPECT_DOUBLE_EQ(r.tau, 1.0);
    EXPECT_LT(r.p_value, 0.01);
    const auto c = num::mann_kendall(std::vector<double>(12, 4.0));
    EXPECT_DOUBLE_EQ(c.tau, 0.0);
    EXPECT_THROW(num::mann_kendall(std::vector<double>{1, 2, 3}), Error);
}

TEST(MannKendall, ExactSmallSample) {
    // n = 5 strictly increasing: only 1 of 120 orderings reaches |S| = 10 per sign.
    const auto r = num::mann_kendall(std::vector<double>{1, 2, 3, 4, 5});
    EXPECT_NEAR(r.p_value, 2.0 / 120.0, 1e-12);
}

TEST(MannKendall, NormalApproximationOracle) {
    // n = 10, S = 45 - 2*1 = 43 after swapping one adjacent pair.
    std::vector<double> x = {1, 2, 3, 4, 5, 6, 7, 8, 10, 9};
    const auto r = num::mann_kendall(x);
    EXPECT_EQ(r.s, 43);
    const double var = 10.0 * 9.0 * 25.0 / 18.0;
    const double z = (43.0 - 1.0) / std::sqrt(var);
    EXPECT_NEAR(r.p_value, std::erfc(z / std::sqrt(2.0)), 1e-12);
}

TEST(MannKendall, TypeOneErrorCalibrated) {
    SplitMix64 rng(2024);
    int rejections = 0;
    const int trials = 2000;
    for (int t = 0; t < trials; ++t) {
        std::vector<double> x(20);
        for (auto& v : x) v = rng.normal();
        rejections += num::mann_kendall(x).p_value < 0.05 ? 1 : 0;
    }
    const double rate = static_cast<double>(rejections) / trials;
    EXPECT_GE(rate, 0.03);
    EXPECT_LE(rate, 0.07);
}

TEST(Fdr, HandExecutedStepUp) {
    EXPECT_EQ(num::bh_fdr(std::vector<double>{0.001, 0.02, 0.03, 0.3}, 0.05),
              (std::vector<bool>{true, true, true, false}));
    // Step-up: 0.04 at rank 4 of 4 passes (0.04 <= 0.05), pulling the rest in.
    EXPECT_EQ(num::bh_fdr(std::vector<double>{0.04, 0.03, 0.035, 0.04}, 0.05),
              (std::vector<bool>{true, true, true, true}));
    EXPECT_EQ(num::bh_fdr(std::vector<double>{0.01, 0.04, 0.2}, 0.05), (std::vector<bool>{true, false, false}));
    EXPECT_EQ(num::bh_fdr(std::vector<double>(15, 0.001)), std::vector<bool>(15, true));
    EXPECT_EQ(num::bh_fdr(std::vector<double>(15, 0.9)), std::vector<bool>(15, false));
}

TEST(Critical, KnownQuantiles) {
    EXPECT_NEAR(num::normal_critical(0.999), 3.2905267, 1e-6);
    EXPECT_NEAR(num::normal_critical(0.95), 1.9599640, 1e-6);
    EXPECT_NEAR(num::t_critical(0.95, 4), 2.7764451, 1e-6);
}

TEST(Critical, MeanInterval) {
    const auto ci = num::mean_ci(std::vector<double>{1, 2, 3, 4, 5}, 0.95);
    EXPECT_DOUBLE_EQ(ci.mean, 3.0);
    const double half = 2.7764451 * std::sqrt(2.5) / std::sqrt(5.0);
    EXPECT_NEAR(ci.high - ci.mean, half, 1e-6);
    EXPECT_NEAR(ci.mean - ci.low, half, 1e-6);
    const auto one = num::mean_ci(std::vector<double>{7.0});
    EXPECT_EQ(one.low, 7.0);
    EXPECT_EQ(one.high, 7.0);
}

TEST(CosineBand, AnalyticHalfWidth) {
    EXPECT_NEAR(num::random_cosine_band(8192, 0.999, 1000).half_width, 3.2905267 / std::sqrt(8192.0), 1e-9);
    EXPECT_NEAR(num::random_cosine_band(8129, 0.999, 1000).half_width, 0.0365, 5e-5);
}

TEST(CosineBand, EmpiricalStdMatchesDimension) {
    const auto band = num::random_cosine_band(8192, 0.999, 200000, 5);
    EXPECT_NEAR(band.empirical_std * std::sqrt(8192.0), 1.0, 0.05);
    EXPECT_NEAR(band.empirical_quantile / band.half_width, 1.0, 0.05);
}

TEST(CosineBand, FullVectorsAgree) {
    const auto reduced = num::random_cosine_band(256, 0.99, 20000, 1, num::CosineSampling::rotation_reduced);
    const auto full = num::random_cosine_band(256, 0.99, 20000, 1, num::CosineSampling::full_vectors);
    EXPECT_NEAR(full.empirical_std / reduced.empirical_std, 1.0, 0.03);
}

TEST(Kfold, PartitionShape) {
    const auto folds = num::kfold_partition(10, 5, 3);
    ASSERT_EQ(folds.size(), 5u);
    std::vector<std::size_t> all;
    for (const auto& f : folds) {
        EXPECT_EQ(f.size(), 2u);
        all.insert(all.end(), f.begin(), f.end());
    }
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all[i], i);
    EXPECT_EQ(num::kfold_partition(10, 5, 3), folds);
    EXPECT_NE(num::kfold_partition(10, 5, 4), folds);
    const auto uneven = num::kfold_partition(11, 5, 0);
    std::size_t lo = 99, hi = 0;
    for (const auto& f : uneven) {
        lo = std::min(lo, f.size());
        hi = std::max(hi, f.size());
    }
    EXPECT_LE(hi - lo, 1u);
}

TEST(Kfold, CvSeesDisjointRows) {
    const auto cv = num::kfold_cv(12, 4, 0, [](const auto& train, const auto& test) {
        for (auto t : test) EXPECT_EQ(std::count(train.begin(), train.end(), t), 0);
        return static_cast<double>(test.size());
    });
    EXPECT_EQ(cv.fold_scores.size(), 4u);
    EXPECT_DOUBLE_EQ(cv.mean_score, 3.0);
}

TEST(Silhouette, SeparatedClusters) {
    num::Matrix pts = lab::testing::gaussian(60, 2, 8) * 0.1;
    std::vector<int> labels(60);
    for (int i = 0; i < 60; ++i) {
        labels[static_cast<std::size_t>(i)] = i % 3;
        pts(i, 0) += 10.0 * (i % 3);
    }
    EXPECT_GT(num::silhouette(pts, labels), 0.9);
}
