#include <gtest/gtest.h>

#include "helpers.hpp"
#include "lab/error.hpp"
#include "lab/linalg.hpp"

using namespace lab;
using lab::testing::gaussian;

TEST(Pca, ExactLowRankReconstruction) {
    const num::Matrix x = gaussian(40, 2, 1) * gaussian(2, 10, 2);
    const auto model = num::pca_fit(x, 2);
    const num::Matrix back = num::pca_inverse(model, num::pca_transform(model, x));
    EXPECT_LT((back - x).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Pca, FullRankRoundTrip) {
    const num::Matrix x = gaussian(30, 6, 3);
    const auto model = num::pca_fit(x, 6);
    EXPECT_LT((num::pca_inverse(model, num::pca_transform(model, x)) - x).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Pca, ReconstructionErrorIsTrailingSpectrum) {
    const num::Matrix x = gaussian(60, 8, 4) * gaussian(8, 8, 5);
    const auto model = num::pca_fit(x, 3);
    const num::Matrix back = num::pca_inverse(model, num::pca_transform(model, x));

    // Oracle: singular values of the centred data.
    const num::Matrix centred = x.rowwise() - x.colwise().mean();
    Eigen::JacobiSVD<num::Matrix> svd(centred);
    const num::Vector s = svd.singularValues();
    const double trailing = s.tail(s.size() - 3).squaredNorm();
    EXPECT_NEAR((back - x).squaredNorm(), trailing, 1e-8 * trailing);
    for (int i = 0; i < 3; ++i) {
        EXPECT_NEAR(model.explained_variance(i), s(i) * s(i) / 59.0, 1e-9 * s(0) * s(0));
    }
}

TEST(Pca, ComponentsOrthonormalAndSignNormalised) {
    const auto model = num::pca_fit(gaussian(25, 7, 6), 4);
    EXPECT_LT((model.components * model.components.transpose() - num::Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(),
              1e-12);
    for (int r = 0; r < 4; ++r) {
        num::Index at;
        model.components.row(r).cwiseAbs().maxCoeff(&at);
        EXPECT_GT(model.components(r, at), 0.0);
    }
}

TEST(Pca, RejectsBadRank) {
    EXPECT_THROW(num::pca_fit(gaussian(5, 8, 7), 5), Error);
    EXPECT_THROW(num::pca_fit(gaussian(5, 8, 7), 0), Error);
}

TEST(LeastSquares, ExactAffine) {
    const num::Matrix x = gaussian(20, 3, 8);
    num::Matrix y = 2.0 * x;
    y.array() += 1.0;
    const auto map = num::least_squares(x, y);
    EXPECT_LT((map.weights - 2.0 * num::Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((map.bias.array() - 1.0).abs().maxCoeff(), 1e-8);
}

TEST(LeastSquares, UnderdeterminedInterpolatesWithMinimumNorm) {
    const num::Matrix x = gaussian(4, 10, 9);
    const num::Matrix y = gaussian(4, 2, 10);
    const auto map = num::least_squares(x, y);
    EXPECT_LT((map.apply_rows(x) - y).cwiseAbs().maxCoeff(), 1e-9);
    // Minimum norm: weight rows lie in the span of the centred inputs.
    const num::Matrix centred = x.rowwise() - x.colwise().mean();
    const num::Matrix proj = centred.transpose() * num::pinv(centred.transpose());
    EXPECT_LT((map.weights * proj - map.weights).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(LeastSquares, NormalEquationsOracle) {
    const num::Matrix x = gaussian(50, 4, 11);
    const num::Matrix truth = gaussian(2, 4, 12);
    num::Matrix y = x * truth.transpose() + 0.01 * gaussian(50, 2, 13);
    const auto map = num::least_squares(x, y);
    num::Matrix aug(50, 5);
    aug << x, num::Vector::Ones(50);
    const num::Matrix beta = (aug.transpose() * aug).ldlt().solve(aug.transpose() * y);
    EXPECT_LT((map.weights.transpose() - beta.topRows(4)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((map.bias - beta.row(4).transpose()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((map.weights - truth).cwiseAbs().maxCoeff(), 0.05);
}

void expect_penrose(const num::Matrix& a, double tol) {
    const num::Matrix p = num::pinv(a);
    EXPECT_LT((a * p * a - a).cwiseAbs().maxCoeff(), tol);
    EXPECT_LT((p * a * p - p).cwiseAbs().maxCoeff(), tol);
    EXPECT_LT(((a * p).transpose() - a * p).cwiseAbs().maxCoeff(), tol);
    EXPECT_LT(((p * a).transpose() - p * a).cwiseAbs().maxCoeff(), tol);
}

TEST(Pinv, PenroseConditions) {
    expect_penrose(gaussian(5, 3, 14), 1e-6);
    expect_penrose(gaussian(3, 7, 15), 1e-6);
    expect_penrose(gaussian(6, 2, 16) * gaussian(2, 6, 17), 1e-6);
}

TEST(Pinv, SmallCases) {
    EXPECT_LT((num::pinv(num::Matrix::Identity(4, 4)) - num::Matrix::Identity(4, 4)).norm(), 1e-14);
    num::Matrix d = num::Matrix::Zero(2, 2);
    d(0, 0) = 2.0;
    num::Matrix expected = num::Matrix::Zero(2, 2);
    expected(0, 0) = 0.5;
    EXPECT_LT((num::pinv(d) - expected).norm(), 1e-14);
    EXPECT_EQ(num::numerical_rank(d), 1);
}

TEST(Pinv, OrthonormalRowsGiveTranspose) {
    const num::Matrix q = Eigen::HouseholderQR<num::Matrix>(gaussian(8, 8, 18)).householderQ();
    const num::Matrix w = q.topRows(3);
    EXPECT_LT((num::pinv(w) - w.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Pinv, ToleranceCutsRoundOff) {
    num::Matrix d = num::Matrix::Zero(3, 3);
    d(0, 0) = 1.0;
    d(1, 1) = 1e-9;
    EXPECT_NEAR(num::pinv(d)(1, 1), 1e9, 1.0);
    EXPECT_EQ(num::pinv(d, 1e-6)(1, 1), 0.0);
}
