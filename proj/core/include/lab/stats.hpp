#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace lab::num {

double mean(std::span<const double> x);

/// Coefficient of determination, 1 - SS_res / SS_tot.
double r2(std::span<const double> y, std::span<const double> predicted);

/// Uniform average of per-column R^2.
double r2_multi(const Eigen::MatrixXd& y, const Eigen::MatrixXd& predicted);

double accuracy(std::span<const int> labels, std::span<const int> predicted);
double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

/// 1-based average ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

/// counts(r, c) = number of samples with label classes[r] predicted as
/// classes[c]. Labels outside `classes` are an error.
Eigen::MatrixXi confusion_matrix(std::span<const int> labels, std::span<const int> predicted,
                                 std::span<const int> classes);

struct TrendTestResult {
    double tau = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
    long s = 0;
    bool significant_after_fdr = false;
};

/// Mann-Kendall trend test. tau = S / (n(n-1)/2). For n >= 8 the two-sided
/// p-value uses the normal approximation with tie-adjusted variance and a
/// continuity correction; for 4 <= n < 8 it is exact, by enumerating every
/// permutation of the series.
TrendTestResult mann_kendall(std::span<const double> series);

/// Benjamini-Hochberg step-up at level alpha.
std::vector<bool> bh_fdr(std::span<const double> p_values, double alpha = 0.05);

/// Two-sided standard-normal critical value for `level` (0.999 -> 3.2905).
double normal_critical(double level);

/// Two-sided Student-t critical value with `dof` degrees of freedom.
double t_critical(double level, double dof);

struct MeanInterval {
    double mean = 0.0;
    double low = 0.0;
    double high = 0.0;
};

/// Mean with a t-distribution confidence interval (n - 1 dof). With a single
/// sample the interval collapses to the mean.
MeanInterval mean_ci(std::span<const double> x, double level = 0.95);

struct CosineBand {
    double half_width = 0.0;            // z(level) / sqrt(d)
    double empirical_std = 0.0;         // sample std of the simulated cosines
    double empirical_half_width = 0.0;  // z(level) * empirical_std
    double empirical_quantile = 0.0;    // level-quantile of |cos|
    std::size_t samples = 0;
};

/// Confidence band for the cosine similarity of two independent isotropic
/// Gaussian vectors in dimension d. The empirical part samples `samples`
/// pairs; see `cosine_sampling` for how a pair is drawn.
enum class CosineSampling {
    /// Draw both d-dimensional vectors explicitly.
    full_vectors,
    /// By rotation invariance cos(u, v) has the law of x1 / sqrt(x1^2 + chi2_{d-1});
    /// draw that directly. Same distribution, O(1) per pair.
    rotation_reduced,
};

CosineBand random_cosine_band(std::size_t d, double level = 0.999, std::size_t samples = 100000,
                              std::uint64_t seed = 0,
                              CosineSampling sampling = CosineSampling::rotation_reduced);

/// Fold assignment for k-fold cross-validation: a seeded permutation of
/// 0..n-1 cut into k contiguous folds whose sizes differ by at most one.
std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, std::size_t k,
                                                      std::uint64_t seed);

struct CvResult {
    std::vector<double> fold_scores;
    double mean_score = 0.0;
};

/// Runs `evaluate(train_rows, test_rows)` for each fold and collects its
/// score.
CvResult kfold_cv(std::size_t n, std::size_t k, std::uint64_t seed,
                  const std::function<double(const std::vector<std::size_t>&,
                                             const std::vector<std::size_t>&)>& evaluate);

/// Mean silhouette coefficient of an embedding under Euclidean distance.
double silhouette(const Eigen::MatrixXd& points, std::span<const int> labels);

}  // namespace lab::num
