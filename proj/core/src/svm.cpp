#include "lab/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "lab/error.hpp"
#include "lab/rng.hpp"

namespace lab::num {
namespace {

void require_finite(const Matrix& x, const char* who) {
    if (!x.allFinite()) throw Error(std::string(who) + ": non-finite features");
}

// Folds a standardized-space map back onto raw features.
LinearMap fold(const Standardizer& scaler, const LinearMap& standardized) {
    LinearMap raw;
    raw.weights = standardized.weights * scaler.scale.cwiseInverse().asDiagonal();
    raw.bias = standardized.bias - raw.weights * scaler.mean;
    return raw;
}

// Appends the constant bias feature used by the dual solvers.
Matrix augment(const Matrix& z) {
    Matrix out(z.rows(), z.cols() + 1);
    out.leftCols(z.cols()) = z;
    out.col(z.cols()).setOnes();
    return out;
}

// Dual coordinate descent for L2-regularised, L1-loss (epsilon-insensitive)
// SVR. Returns the augmented weight vector (last entry is the intercept).
Vector solve_svr_dual(const Matrix& z, const Vector& y, const SvrOptions& opt) {
    const Index n = z.rows();
    const Index p = z.cols();
    Vector w = Vector::Zero(p);
    Vector beta = Vector::Zero(n);
    Vector qd(n);
    for (Index i = 0; i < n; ++i) qd(i) = z.row(i).squaredNorm();

    SplitMix64 rng(opt.seed ^ 0x5652ULL);
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    const double upper = opt.c;
    double initial_violation = -1.0;
    for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
        rng.shuffle(order);
        double violation_sum = 0.0;
        for (Index i : order) {
            const double h = qd(i);
            if (h <= 0.0) continue;
            const double g = z.row(i).dot(w) - y(i);
            const double gp = g + opt.epsilon;
            const double gn = g - opt.epsilon;
            const double b = beta(i);

            double violation = 0.0;
            if (b == 0.0) {
                if (gp < 0.0) violation = -gp;
                else if (gn > 0.0) violation = gn;
            } else if (b >= upper) {
                if (gp > 0.0) violation = gp;
            } else if (b <= -upper) {
                if (gn < 0.0) violation = -gn;
            } else if (b > 0.0) {
                violation = std::abs(gp);
            } else {
                violation = std::abs(gn);
            }
            violation_sum += violation;

            double step;
            if (gp < h * b) step = -gp / h;
            else if (gn > h * b) step = -gn / h;
            else step = -b;
            if (std::abs(step) < 1e-12) continue;

            const double updated = std::clamp(b + step, -upper, upper);
            const double delta = updated - b;
            beta(i) = updated;
            w.noalias() += delta * z.row(i).transpose();
        }
        if (initial_violation < 0.0) initial_violation = violation_sum;
        if (violation_sum <= opt.tolerance * initial_violation) break;
    }
    return w;
}

// Dual coordinate descent for the L2-regularised hinge-loss SVM on labels
// in {-1, +1}. Returns augmented weights.
Vector solve_svc_dual(const Matrix& z, const Vector& y, const SvmOptions& opt,
                      std::uint64_t stream) {
    const Index n = z.rows();
    const Index p = z.cols();
    Vector w = Vector::Zero(p);
    Vector alpha = Vector::Zero(n);
    Vector qd(n);
    for (Index i = 0; i < n; ++i) qd(i) = z.row(i).squaredNorm();

    SplitMix64 rng(opt.seed ^ stream);
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
        rng.shuffle(order);
        double pg_max = -std::numeric_limits<double>::infinity();
        double pg_min = std::numeric_limits<double>::infinity();
        for (Index i : order) {
            if (qd(i) <= 0.0) continue;
            const double g = y(i) * z.row(i).dot(w) - 1.0;
            double pg = g;
            if (alpha(i) == 0.0) pg = std::min(g, 0.0);
            else if (alpha(i) == opt.c) pg = std::max(g, 0.0);
            pg_max = std::max(pg_max, pg);
            pg_min = std::min(pg_min, pg);
            if (std::abs(pg) > 1e-12) {
                const double old = alpha(i);
                alpha(i) = std::clamp(old - g / qd(i), 0.0, opt.c);
                w.noalias() += (alpha(i) - old) * y(i) * z.row(i).transpose();
            }
        }
        if (pg_max - pg_min <= opt.tolerance) break;
    }
    return w;
}

}  // namespace

Standardizer Standardizer::fit(const Matrix& x) {
    Standardizer s;
    const Index n = x.rows();
    s.mean = x.colwise().mean().transpose();
    s.scale = Vector::Ones(x.cols());
    if (n < 2) return s;
    for (Index c = 0; c < x.cols(); ++c) {
        const double var = (x.col(c).array() - s.mean(c)).square().sum() / static_cast<double>(n);
        if (var > 1e-24) s.scale(c) = std::sqrt(var);
    }
    return s;
}

Standardizer Standardizer::identity(Index dim) {
    return Standardizer{Vector::Zero(dim), Vector::Ones(dim)};
}

Matrix Standardizer::apply(const Matrix& x) const {
    return (x.rowwise() - mean.transpose()) * scale.cwiseInverse().asDiagonal();
}

LinearProbe svr_fit(const Matrix& x, const Vector& y, const SvrOptions& options) {
    if (x.rows() < 2) throw Error("svr_fit: need at least 2 samples");
    if (x.rows() != y.size()) throw Error("svr_fit: label count mismatch");
    require_finite(x, "svr_fit");
    if (!y.allFinite()) throw Error("svr_fit: non-finite targets");

    LinearProbe probe;
    probe.scaler = options.standardize ? Standardizer::fit(x) : Standardizer::identity(x.cols());
    const Matrix z = augment(probe.scaler.apply(x));
    const double y_mean = y.mean();
    const Vector centered = y.array() - y_mean;

    const Vector w = solve_svr_dual(z, centered, options);
    const Index p = x.cols();
    probe.standardized.weights = w.head(p).transpose();
    probe.standardized.bias = Vector::Constant(1, w(p) + y_mean);
    probe.folded = fold(probe.scaler, probe.standardized);
    return probe;
}

SvmModel svm_fit(const Matrix& x, const std::vector<int>& labels, const SvmOptions& options) {
    if (x.rows() < 2) throw Error("svm_fit: need at least 2 samples");
    if (static_cast<std::size_t>(x.rows()) != labels.size()) throw Error("svm_fit: label count mismatch");
    require_finite(x, "svm_fit");

    SvmModel model;
    model.classes = labels;
    std::sort(model.classes.begin(), model.classes.end());
    model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
    if (model.classes.size() < 2) throw Error("svm_fit: need at least 2 classes");

    model.probe.scaler = options.standardize ? Standardizer::fit(x) : Standardizer::identity(x.cols());
    const Matrix z = augment(model.probe.scaler.apply(x));
    const Index p = x.cols();
    const Index k = static_cast<Index>(model.classes.size());

    model.probe.standardized.weights.resize(k, p);
    model.probe.standardized.bias.resize(k);
    for (Index c = 0; c < k; ++c) {
        Vector target(x.rows());
        for (Index i = 0; i < x.rows(); ++i) {
            target(i) = labels[static_cast<std::size_t>(i)] == model.classes[static_cast<std::size_t>(c)] ? 1.0 : -1.0;
        }
        const Vector w = solve_svc_dual(z, target, options, 0x53564dULL + static_cast<std::uint64_t>(c));
        model.probe.standardized.weights.row(c) = w.head(p).transpose();
        model.probe.standardized.bias(c) = w(p);
    }
    model.probe.folded = fold(model.probe.scaler, model.probe.standardized);
    return model;
}

std::vector<int> SvmModel::predict(const Matrix& x) const {
    const Matrix scores = probe.predict(x);
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    for (Index i = 0; i < x.rows(); ++i) {
        Index best = 0;
        scores.row(i).maxCoeff(&best);
        out[static_cast<std::size_t>(i)] = classes[static_cast<std::size_t>(best)];
    }
    return out;
}

}  // namespace lab::num
