#include "lab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "lab/error.hpp"
#include "lab/rng.hpp"

namespace lab::num {
namespace {

void require_pair(std::size_t a, std::size_t b, const char* who) {
    if (a != b) throw Error(std::string(who) + ": length mismatch");
    if (a < 2) throw Error(std::string(who) + ": need at least 2 values");
}

long kendall_s(std::span<const double> x) {
    long s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = i + 1; j < x.size(); ++j) {
            if (x[j] > x[i]) ++s;
            else if (x[j] < x[i]) --s;
        }
    }
    return s;
}

// Marsaglia-Tsang gamma sampler, shape >= 1, unit scale.
double sample_gamma(SplitMix64& rng, double shape) {
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        const double x = rng.normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        const double u = rng.uniform();
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

}  // namespace

double mean(std::span<const double> x) {
    if (x.empty()) throw Error("mean: empty input");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double r2(std::span<const double> y, std::span<const double> predicted) {
    require_pair(y.size(), predicted.size(), "r2");
    const double m = mean(y);
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += (y[i] - predicted[i]) * (y[i] - predicted[i]);
        ss_tot += (y[i] - m) * (y[i] - m);
    }
    if (ss_tot <= 0.0) throw Error("r2: zero-variance target");
    return 1.0 - ss_res / ss_tot;
}

double r2_multi(const Eigen::MatrixXd& y, const Eigen::MatrixXd& predicted) {
    if (y.rows() != predicted.rows() || y.cols() != predicted.cols()) throw Error("r2_multi: shape mismatch");
    if (y.cols() == 0) throw Error("r2_multi: no outputs");
    double total = 0.0;
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
        const Eigen::VectorXd a = y.col(c);
        const Eigen::VectorXd b = predicted.col(c);
        total += r2(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                    std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
    }
    return total / static_cast<double>(y.cols());
}

double accuracy(std::span<const int> labels, std::span<const int> predicted) {
    if (labels.size() != predicted.size()) throw Error("accuracy: length mismatch");
    if (labels.empty()) throw Error("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += labels[i] == predicted[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double pearson(std::span<const double> x, std::span<const double> y) {
    require_pair(x.size(), y.size(), "pearson");
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) throw Error("pearson: zero-variance input");
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    require_pair(x.size(), y.size(), "spearman");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

Eigen::MatrixXi confusion_matrix(std::span<const int> labels, std::span<const int> predicted,
                                 std::span<const int> classes) {
    if (labels.size() != predicted.size()) throw Error("confusion_matrix: length mismatch");
    std::map<int, Eigen::Index> index;
    for (std::size_t c = 0; c < classes.size(); ++c) index[classes[c]] = static_cast<Eigen::Index>(c);
    const auto k = static_cast<Eigen::Index>(classes.size());
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(k, k);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto r = index.find(labels[i]);
        const auto c = index.find(predicted[i]);
        if (r == index.end() || c == index.end()) throw Error("confusion_matrix: label outside class list");
        counts(r->second, c->second) += 1;
    }
    return counts;
}

TrendTestResult mann_kendall(std::span<const double> series) {
    const std::size_t n = series.size();
    if (n < 4) throw Error("mann_kendall: need at least 4 values, got " + std::to_string(n));
    TrendTestResult out;
    out.n = n;
    out.s = kendall_s(series);
    const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
    out.tau = static_cast<double>(out.s) / pairs;

    if (n < 8) {
        std::vector<double> perm(series.begin(), series.end());
        std::sort(perm.begin(), perm.end());
        std::size_t total = 0;
        std::size_t extreme = 0;
        const long observed = std::labs(out.s);
        do {
            ++total;
            if (std::labs(kendall_s(perm)) >= observed) ++extreme;
        } while (std::next_permutation(perm.begin(), perm.end()));
        out.p_value = static_cast<double>(extreme) / static_cast<double>(total);
        return out;
    }

    std::map<double, std::size_t> ties;
    for (double v : series) ties[v] += 1;
    const double nd = static_cast<double>(n);
    double var = nd * (nd - 1.0) * (2.0 * nd + 5.0);
    for (const auto& [value, t] : ties) {
        const double td = static_cast<double>(t);
        var -= td * (td - 1.0) * (2.0 * td + 5.0);
    }
    var /= 18.0;
    if (var <= 0.0) {
        out.p_value = 1.0;
        return out;
    }
    double z = 0.0;
    if (out.s > 0) z = (static_cast<double>(out.s) - 1.0) / std::sqrt(var);
    else if (out.s < 0) z = (static_cast<double>(out.s) + 1.0) / std::sqrt(var);
    out.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
    return out;
}

std::vector<bool> bh_fdr(std::span<const double> p_values, double alpha) {
    for (double p : p_values) {
        if (!(p >= 0.0 && p <= 1.0)) throw Error("bh_fdr: p-value outside [0, 1]");
    }
    const std::size_t m = p_values.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
    std::size_t cutoff = 0;  // number of rejections
    for (std::size_t rank = m; rank >= 1; --rank) {
        if (p_values[order[rank - 1]] <= alpha * static_cast<double>(rank) / static_cast<double>(m)) {
            cutoff = rank;
            break;
        }
    }
    std::vector<bool> flags(m, false);
    for (std::size_t r = 0; r < cutoff; ++r) flags[order[r]] = true;
    return flags;
}

double normal_critical(double level) {
    if (!(level > 0.0 && level < 1.0)) throw Error("normal_critical: level must be in (0, 1)");
    const boost::math::normal_distribution<double> normal;
    return boost::math::quantile(normal, 1.0 - (1.0 - level) / 2.0);
}

double t_critical(double level, double dof) {
    if (!(level > 0.0 && level < 1.0)) throw Error("t_critical: level must be in (0, 1)");
    if (!(dof > 0.0)) throw Error("t_critical: dof must be positive");
    const boost::math::students_t_distribution<double> dist(dof);
    return boost::math::quantile(dist, 1.0 - (1.0 - level) / 2.0);
}

MeanInterval mean_ci(std::span<const double> x, double level) {
    MeanInterval out;
    out.mean = mean(x);
    out.low = out.high = out.mean;
    const std::size_t n = x.size();
    if (n < 2) return out;
    double ss = 0.0;
    for (double v : x) ss += (v - out.mean) * (v - out.mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    const double half = t_critical(level, static_cast<double>(n - 1)) * sd / std::sqrt(static_cast<double>(n));
    out.low = out.mean - half;
    out.high = out.mean + half;
    return out;
}

CosineBand random_cosine_band(std::size_t d, double level, std::size_t samples, std::uint64_t seed,
                              CosineSampling sampling) {
    if (d < 2) throw Error("random_cosine_band: dimension must be >= 2");
    if (!(level > 0.0 && level < 1.0)) throw Error("random_cosine_band: level must be in (0, 1)");
    CosineBand band;
    const double z = normal_critical(level);
    band.half_width = z / std::sqrt(static_cast<double>(d));
    band.samples = samples;
    if (samples == 0) return band;

    SplitMix64 rng(seed);
    std::vector<double> cosines(samples);
    std::vector<double> u, v;
    if (sampling == CosineSampling::full_vectors) {
        u.resize(d);
        v.resize(d);
    }
    for (std::size_t s = 0; s < samples; ++s) {
        if (sampling == CosineSampling::full_vectors) {
            double uv = 0.0, uu = 0.0, vv = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                u[i] = rng.normal();
                v[i] = rng.normal();
                uv += u[i] * v[i];
                uu += u[i] * u[i];
                vv += v[i] * v[i];
            }
            cosines[s] = uv / std::sqrt(uu * vv);
        } else {
            const double x1 = rng.normal();
            const double rest = 2.0 * sample_gamma(rng, 0.5 * static_cast<double>(d - 1));
            cosines[s] = x1 / std::sqrt(x1 * x1 + rest);
        }
    }
    const double m = mean(cosines);
    double ss = 0.0;
    for (double c : cosines) ss += (c - m) * (c - m);
    band.empirical_std = samples > 1 ? std::sqrt(ss / static_cast<double>(samples - 1)) : 0.0;
    band.empirical_half_width = z * band.empirical_std;
    std::vector<double> mags(samples);
    for (std::size_t s = 0; s < samples; ++s) mags[s] = std::abs(cosines[s]);
    std::sort(mags.begin(), mags.end());
    const auto idx = static_cast<std::size_t>(std::ceil(level * static_cast<double>(samples))) - 1;
    band.empirical_quantile = mags[std::min(idx, samples - 1)];
    return band;
}

std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw Error("kfold_partition: need k >= 2");
    if (n < k) throw Error("kfold_partition: n=" + std::to_string(n) + " smaller than k=" + std::to_string(k));
    SplitMix64 rng(seed);
    const auto perm = rng.permutation(n);
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t offset = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = n / k + (f < n % k ? 1 : 0);
        folds[f].assign(perm.begin() + static_cast<std::ptrdiff_t>(offset),
                        perm.begin() + static_cast<std::ptrdiff_t>(offset + size));
        std::sort(folds[f].begin(), folds[f].end());
        offset += size;
    }
    return folds;
}

CvResult kfold_cv(std::size_t n, std::size_t k, std::uint64_t seed,
                  const std::function<double(const std::vector<std::size_t>&,
                                             const std::vector<std::size_t>&)>& evaluate) {
    const auto folds = kfold_partition(n, k, seed);
    CvResult out;
    for (std::size_t f = 0; f < k; ++f) {
        std::vector<std::size_t> train;
        train.reserve(n - folds[f].size());
        for (std::size_t g = 0; g < k; ++g) {
            if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
        }
        std::sort(train.begin(), train.end());
        out.fold_scores.push_back(evaluate(train, folds[f]));
    }
    out.mean_score = mean(out.fold_scores);
    return out;
}

double silhouette(const Eigen::MatrixXd& points, std::span<const int> labels) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (labels.size() != n) throw Error("silhouette: label count mismatch");
    std::map<int, std::size_t> sizes;
    for (int l : labels) sizes[l] += 1;
    if (sizes.size() < 2) throw Error("silhouette: need at least 2 clusters");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::map<int, double> dist_sum;
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            dist_sum[labels[j]] += (points.row(static_cast<Eigen::Index>(i)) - points.row(static_cast<Eigen::Index>(j))).norm();
        }
        const std::size_t own = sizes[labels[i]];
        if (own <= 1) continue;
        const double a = dist_sum[labels[i]] / static_cast<double>(own - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [label, sum] : dist_sum) {
            if (label != labels[i]) b = std::min(b, sum / static_cast<double>(sizes[label]));
        }
        total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(n);
}

}  // namespace lab::num
