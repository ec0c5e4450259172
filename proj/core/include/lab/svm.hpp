#pragma once

#include <cstdint>
#include <vector>

#include "lab/linalg.hpp"

namespace lab::num {

/// Per-feature z-scoring. Constant features keep scale 1 so they map to 0.
struct Standardizer {
    Vector mean;
    Vector scale;

    static Standardizer fit(const Matrix& x);
    static Standardizer identity(Index dim);
    Matrix apply(const Matrix& x) const;
};

/// A linear model trained in standardized feature space. `standardized`
/// acts on scaler.apply(x); `folded` is the same model expressed on raw
/// features (the scaler absorbed into weights and bias).
struct LinearProbe {
    Standardizer scaler;
    LinearMap standardized;
    LinearMap folded;

    Matrix predict(const Matrix& x) const { return folded.apply_rows(x); }
};

struct SvrOptions {
    double c = 1.0;
    double epsilon = 0.1;
    double tolerance = 1e-4;
    int max_epochs = 1000;
    bool standardize = true;
    std::uint64_t seed = 0;
};

struct SvmOptions {
    double c = 1.0;
    double tolerance = 1e-4;
    int max_epochs = 1000;
    bool standardize = true;
    std::uint64_t seed = 0;
};

/// Linear epsilon-insensitive support vector regression, solved in the dual
/// by coordinate descent. Targets are centred on their training mean before
/// solving; the intercept is an augmented constant feature.
LinearProbe svr_fit(const Matrix& x, const Vector& y, const SvrOptions& options = {});

/// One-vs-rest linear SVM (hinge loss, dual coordinate descent). Row c of the
/// probe's weights scores classes[c].
struct SvmModel {
    LinearProbe probe;
    std::vector<int> classes;

    std::vector<int> predict(const Matrix& x) const;
};

SvmModel svm_fit(const Matrix& x, const std::vector<int>& labels, const SvmOptions& options = {});

}  // namespace lab::num
