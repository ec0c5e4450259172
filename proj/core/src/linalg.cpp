#include "lab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lab/error.hpp"

namespace lab::num {
namespace {

constexpr double kRelativeRankTol = 1e-10;

// Flip each row so its largest-magnitude entry is positive (first index wins
// ties).
void normalize_signs(Matrix& rows) {
    for (Index r = 0; r < rows.rows(); ++r) {
        Index best = 0;
        double best_abs = -1.0;
        for (Index c = 0; c < rows.cols(); ++c) {
            const double a = std::abs(rows(r, c));
            if (a > best_abs) {
                best_abs = a;
                best = c;
            }
        }
        if (rows(r, best) < 0.0) rows.row(r) *= -1.0;
    }
}

// Extends `basis` (m orthonormal rows of length d) to `target` rows using
// Gram-Schmidt against the standard basis.
Matrix complete_basis(const Matrix& basis, Index target) {
    const Index d = basis.cols();
    Matrix out(target, d);
    out.topRows(basis.rows()) = basis;
    Index filled = basis.rows();
    for (Index e = 0; e < d && filled < target; ++e) {
        Vector v = Vector::Unit(d, e);
        for (int pass = 0; pass < 2; ++pass) {
            for (Index r = 0; r < filled; ++r) v -= out.row(r).dot(v) * out.row(r).transpose();
        }
        const double norm = v.norm();
        if (norm > 1e-6) out.row(filled++) = v.transpose() / norm;
    }
    return out;
}

}  // namespace

PcaModel pca_fit(const Matrix& x, Index k) {
    const Index n = x.rows();
    const Index d = x.cols();
    if (n < 2) throw Error("pca_fit: need at least 2 samples, got " + std::to_string(n));
    if (k < 1 || k > d || (k > n - 1 && k != d)) {
        throw Error("pca_fit: k=" + std::to_string(k) + " out of range for n=" + std::to_string(n) +
                    ", d=" + std::to_string(d));
    }

    PcaModel model;
    model.mean = x.colwise().mean().transpose();
    const Matrix centered = x.rowwise() - model.mean.transpose();
    const double denom = static_cast<double>(n - 1);

    // Covariance route when d is moderate; Gram route (n x n) otherwise. Both
    // yield the same nonzero-variance eigenvectors.
    if (d <= std::max<Index>(n, 1024)) {
        const Matrix cov = (centered.transpose() * centered) / denom;
        Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
        if (eig.info() != Eigen::Success) throw Error("pca_fit: eigen-decomposition failed");
        model.components.resize(k, d);
        model.explained_variance.resize(k);
        for (Index i = 0; i < k; ++i) {
            const Index src = d - 1 - i;
            model.components.row(i) = eig.eigenvectors().col(src).transpose();
            model.explained_variance(i) = std::max(0.0, eig.eigenvalues()(src));
        }
    } else {
        const Matrix gram = (centered * centered.transpose()) / denom;
        Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
        if (eig.info() != Eigen::Success) throw Error("pca_fit: eigen-decomposition failed");
        const double top = std::max(eig.eigenvalues()(n - 1), 0.0);
        Matrix rows(0, d);
        std::vector<double> variances;
        for (Index i = 0; i < k; ++i) {
            const double lambda = eig.eigenvalues()(n - 1 - i);
            if (lambda <= 1e-12 * top || lambda <= 0.0) break;
            Vector v = centered.transpose() * eig.eigenvectors().col(n - 1 - i);
            v /= std::sqrt(lambda * denom);
            rows.conservativeResize(rows.rows() + 1, Eigen::NoChange);
            rows.row(rows.rows() - 1) = v.transpose();
            variances.push_back(lambda);
        }
        model.components = complete_basis(rows, k);
        model.explained_variance = Vector::Zero(k);
        for (std::size_t i = 0; i < variances.size(); ++i) {
            model.explained_variance(static_cast<Index>(i)) = variances[i];
        }
    }
    normalize_signs(model.components);
    return model;
}

PcaModel pca_drop_negligible(PcaModel model, double floor) {
    const Index k = model.output_dim();
    if (k == 0) return model;
    Index kept = 1;
    while (kept < k && model.explained_variance(kept) > floor * model.explained_variance(0)) ++kept;
    if (kept < k) {
        model.components = Matrix(model.components.topRows(kept));
        model.explained_variance = Vector(model.explained_variance.head(kept));
    }
    return model;
}

Matrix pca_transform(const PcaModel& model, const Matrix& x) {
    if (x.cols() != model.input_dim()) throw Error("pca_transform: dimension mismatch");
    return (x.rowwise() - model.mean.transpose()) * model.components.transpose();
}

Matrix pca_inverse(const PcaModel& model, const Matrix& y) {
    if (y.cols() != model.output_dim()) throw Error("pca_inverse: dimension mismatch");
    Matrix out = y * model.components;
    out.rowwise() += model.mean.transpose();
    return out;
}

LinearMap least_squares(const Matrix& x, const Matrix& y) {
    if (x.rows() == 0 || x.cols() == 0 || y.cols() == 0) throw Error("least_squares: empty input");
    if (x.rows() != y.rows()) throw Error("least_squares: row count mismatch");
    if (!x.allFinite() || !y.allFinite()) throw Error("least_squares: non-finite input");

    const Vector x_mean = x.colwise().mean().transpose();
    const Vector y_mean = y.colwise().mean().transpose();
    const Matrix xc = x.rowwise() - x_mean.transpose();
    const Matrix yc = y.rowwise() - y_mean.transpose();

    LinearMap map;
    if (xc.isZero(0.0)) {
        map.weights = Matrix::Zero(y.cols(), x.cols());
    } else {
        Eigen::CompleteOrthogonalDecomposition<Matrix> cod;
        cod.setThreshold(kRelativeRankTol);
        cod.compute(xc);
        map.weights = cod.solve(yc).transpose();
    }
    map.bias = y_mean - map.weights * x_mean;
    return map;
}

Matrix pinv(const Matrix& m, double relative_tolerance) {
    if (m.size() == 0) return Matrix::Zero(m.cols(), m.rows());
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double cutoff = relative_tolerance * (s.size() > 0 ? s(0) : 0.0);
    Vector inv = Vector::Zero(s.size());
    for (Index i = 0; i < s.size(); ++i) {
        if (s(i) > cutoff && s(i) > 0.0) inv(i) = 1.0 / s(i);
    }
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Index numerical_rank(const Matrix& m) {
    if (m.size() == 0) return 0;
    Eigen::BDCSVD<Matrix> svd(m);
    const Vector& s = svd.singularValues();
    const double cutoff = kRelativeRankTol * s(0);
    Index rank = 0;
    for (Index i = 0; i < s.size(); ++i) {
        if (s(i) > cutoff && s(i) > 0.0) ++rank;
    }
    return rank;
}

}  // namespace lab::num
