#include <gtest/gtest.h>

#include "helpers.hpp"
#include "lab/stats.hpp"
#include "lab/svm.hpp"
#include "lab/tsne.hpp"

using namespace lab;
using lab::testing::gaussian;

TEST(Svr, RealisableLinearTarget) {
    const num::Matrix x = gaussian(200, 5, 1);
    num::Vector w(5);
    w << 3, -1, 0.5, 2, 0;
    const num::Vector y = (x * w).array() + 7.0;
    const auto probe = num::svr_fit(x.topRows(150), y.head(150), {.epsilon = 0.01});
    const num::Matrix xt = x.bottomRows(50);
    const num::Vector pred = probe.predict(xt).col(0);
    const num::Vector yt = y.tail(50);
    EXPECT_GE(num::r2(std::span<const double>(yt.data(), 50), std::span<const double>(pred.data(), 50)), 0.999);
}

TEST(Svr, FoldedMatchesStandardized) {
    const num::Matrix x = gaussian(80, 4, 2) * 5.0;
    const num::Vector y = x.col(0) - 2.0 * x.col(3);
    const auto probe = num::svr_fit(x, y);
    const num::Matrix a = probe.predict(x);
    const num::Matrix b = probe.standardized.apply_rows(probe.scaler.apply(x));
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Svm, SeparableTwoClass) {
    num::Matrix x = gaussian(60, 3, 3);
    std::vector<int> labels(60);
    for (int i = 0; i < 60; ++i) {
        labels[static_cast<std::size_t>(i)] = i < 30 ? 4 : 9;
        x(i, 1) += i < 30 ? -5.0 : 5.0;
    }
    const auto model = num::svm_fit(x, labels);
    EXPECT_EQ(model.classes, (std::vector<int>{4, 9}));
    EXPECT_DOUBLE_EQ(num::accuracy(labels, model.predict(x)), 1.0);
}

TEST(Svm, Deterministic) {
    const num::Matrix x = gaussian(40, 3, 4);
    std::vector<int> labels(40);
    for (int i = 0; i < 40; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
    const auto a = num::svm_fit(x, labels, {.seed = 5});
    const auto b = num::svm_fit(x, labels, {.seed = 5});
    EXPECT_EQ(a.probe.folded.weights, b.probe.folded.weights);
}

TEST(Tsne, ClustersSeparate) {
    num::Matrix x = gaussian(150, 10, 5) * 0.3;
    std::vector<int> labels(150);
    for (int i = 0; i < 150; ++i) {
        labels[static_cast<std::size_t>(i)] = i / 50;
        x(i, i / 50) += 6.0;
    }
    const num::Matrix y = num::tsne_2d(x, {.iterations = 500, .seed = 1});
    ASSERT_EQ(y.rows(), 150);
    ASSERT_EQ(y.cols(), 2);
    EXPECT_GT(num::silhouette(y, labels), 0.5);
}

TEST(Tsne, DuplicatesAndDeterminism) {
    num::Matrix x = gaussian(40, 5, 6);
    x.row(7) = x.row(3);
    const num::TsneOptions opt{.perplexity = 8, .iterations = 1000, .seed = 2};
    const num::Matrix a = num::tsne_2d(x, opt);
    const num::Matrix b = num::tsne_2d(x, opt);
    EXPECT_EQ(a, b);
    // Identical rows settle where q matches p rather than on top of each
    // other, so ask for mutual nearest neighbours.
    const auto nearest = [&](int i) {
        int best = -1;
        double best_d = 1e300;
        for (int j = 0; j < 40; ++j) {
            if (j == i) continue;
            const double d = (a.row(i) - a.row(j)).norm();
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        return best;
    };
    EXPECT_EQ(nearest(3), 7);
    EXPECT_EQ(nearest(7), 3);
}
