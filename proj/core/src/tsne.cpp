#include "lab/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lab/error.hpp"
#include "lab/rng.hpp"

namespace lab::num {
namespace {

// Conditional affinities P(j|i) with a per-row precision found by bisection
// so that the row entropy equals log(perplexity).
Matrix conditional_affinities(const Matrix& sq_dist, double perplexity) {
    const Index n = sq_dist.rows();
    const double target = std::log(perplexity);
    Matrix p = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        double beta = 1.0;
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        Vector row(n);
        for (int iter = 0; iter < 200; ++iter) {
            // Subtract the smallest off-diagonal distance for stability.
            double min_d = std::numeric_limits<double>::infinity();
            for (Index j = 0; j < n; ++j) {
                if (j != i) min_d = std::min(min_d, sq_dist(i, j));
            }
            double sum = 0.0;
            for (Index j = 0; j < n; ++j) {
                row(j) = j == i ? 0.0 : std::exp(-beta * (sq_dist(i, j) - min_d));
                sum += row(j);
            }
            double entropy = 0.0;
            for (Index j = 0; j < n; ++j) {
                if (j == i) continue;
                row(j) /= sum;
                if (row(j) > 0.0) entropy -= row(j) * std::log(row(j));
            }
            const double diff = entropy - target;
            if (std::abs(diff) < 1e-5) break;
            if (diff > 0.0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
            } else {
                hi = beta;
                beta = std::isinf(lo) ? beta / 2.0 : (beta + lo) / 2.0;
            }
        }
        p.row(i) = row.transpose();
    }
    return p;
}

}  // namespace

Matrix tsne_2d(const Matrix& x, const TsneOptions& options) {
    const Index n = x.rows();
    if (n < 10) throw Error("tsne_2d: need at least 10 points, got " + std::to_string(n));
    if (!(options.perplexity > 0.0) || options.perplexity >= static_cast<double>(n - 1) / 3.0) {
        throw Error("tsne_2d: perplexity must be below (n - 1) / 3");
    }

    Matrix sq_dist(n, n);
    const Vector norms = x.rowwise().squaredNorm();
    sq_dist = (-2.0 * x * x.transpose()).colwise() + norms;
    sq_dist.rowwise() += norms.transpose();
    sq_dist = sq_dist.cwiseMax(0.0);
    for (Index i = 0; i < n; ++i) sq_dist(i, i) = 0.0;

    const Matrix conditional = conditional_affinities(sq_dist, options.perplexity);
    Matrix p = (conditional + conditional.transpose()) / (2.0 * static_cast<double>(n));
    p = p.cwiseMax(1e-12);
    for (Index i = 0; i < n; ++i) p(i, i) = 0.0;

    SplitMix64 rng(options.seed);
    Matrix y(n, 2);
    for (Index i = 0; i < n; ++i) {
        y(i, 0) = 1e-4 * rng.normal();
        y(i, 1) = 1e-4 * rng.normal();
    }
    const double rate = options.learning_rate > 0.0
                            ? options.learning_rate
                            : std::max(static_cast<double>(n) / options.early_exaggeration / 4.0, 50.0);
    Matrix update = Matrix::Zero(n, 2);
    Matrix gains = Matrix::Ones(n, 2);
    Matrix num(n, n);
    Matrix grad(n, 2);

    for (int it = 0; it < options.iterations; ++it) {
        const bool early = it < options.exaggeration_iterations;
        const double exaggeration = early ? options.early_exaggeration : 1.0;
        const double momentum = early ? 0.5 : 0.8;

        double z = 0.0;
        for (Index i = 0; i < n; ++i) {
            num(i, i) = 0.0;
            for (Index j = i + 1; j < n; ++j) {
                const double dx = y(i, 0) - y(j, 0);
                const double dy = y(i, 1) - y(j, 1);
                const double v = 1.0 / (1.0 + dx * dx + dy * dy);
                num(i, j) = v;
                num(j, i) = v;
                z += 2.0 * v;
            }
        }
        grad.setZero();
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < n; ++j) {
                if (i == j) continue;
                const double w = (exaggeration * p(i, j) - num(i, j) / z) * num(i, j);
                grad(i, 0) += 4.0 * w * (y(i, 0) - y(j, 0));
                grad(i, 1) += 4.0 * w * (y(i, 1) - y(j, 1));
            }
        }
        for (Index i = 0; i < n; ++i) {
            for (Index c = 0; c < 2; ++c) {
                const bool same_sign = (grad(i, c) > 0.0) == (update(i, c) > 0.0);
                gains(i, c) = same_sign ? std::max(gains(i, c) * 0.8, 0.01) : gains(i, c) + 0.2;
                update(i, c) = momentum * update(i, c) - rate * gains(i, c) * grad(i, c);
                y(i, c) += update(i, c);
            }
        }
        y.rowwise() -= y.colwise().mean();
    }
    return y;
}

}  // namespace lab::num
