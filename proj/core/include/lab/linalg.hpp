#pragma once

#include <Eigen/Dense>

namespace lab::num {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Principal component model. `components` holds k orthonormal rows in
/// descending order of explained variance; each row is sign-normalised so
/// that its largest-magnitude entry is positive.
struct PcaModel {
    Vector mean;
    Matrix components;
    Vector explained_variance;

    Index input_dim() const { return mean.size(); }
    Index output_dim() const { return components.rows(); }
};

/// Fits PCA to the rows of `x` (n samples by d features). Requires n >= 2
/// and 1 <= k <= min(n - 1, d), except that k == d is always accepted.
PcaModel pca_fit(const Matrix& x, Index k);

/// Drops trailing components whose variance is at most `floor` times the
/// leading variance (float32 round-off in rank-deficient data). Keeps at
/// least one component.
PcaModel pca_drop_negligible(PcaModel model, double floor = 1e-10);

/// Centers then projects: returns n x k.
Matrix pca_transform(const PcaModel& model, const Matrix& x);

/// Maps n x k coordinates back to n x d.
Matrix pca_inverse(const PcaModel& model, const Matrix& y);

/// Affine map y = W x + b, with W stored out x in.
struct LinearMap {
    Matrix weights;
    Vector bias;

    Index input_dim() const { return weights.cols(); }
    Index output_dim() const { return weights.rows(); }

    Vector apply(const Vector& x) const { return weights * x + bias; }

    /// Applies the map to every row of `x` (n x in), returning n x out.
    Matrix apply_rows(const Matrix& x) const {
        Matrix out = x * weights.transpose();
        out.rowwise() += bias.transpose();
        return out;
    }
};

/// Ordinary least squares with an unpenalised intercept, minimising
/// sum ||W x_i + b - y_i||^2 over the rows of x (n x p) and y (n x q).
/// Rank-deficient and underdetermined systems get the minimum-norm W,
/// computed through a complete orthogonal decomposition.
LinearMap least_squares(const Matrix& x, const Matrix& y);

/// Moore-Penrose pseudo-inverse. Singular values below 1e-10 * sigma_max
/// are treated as zero unless `relative_tolerance` says otherwise.
Matrix pinv(const Matrix& m, double relative_tolerance = 1e-10);

/// Numerical rank using the same relative threshold as pinv.
Index numerical_rank(const Matrix& m);

}  // namespace lab::num
