#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lab/activation_store.hpp"
#include "lab/elements.hpp"
#include "lab/linalg.hpp"
#include "lab/stats.hpp"
#include "lab/svm.hpp"

namespace lab {

enum class ProbeKind { regression, classification };

std::string_view probe_kind_name(ProbeKind k);

struct ProbeOptions {
    int folds = 5;
    std::uint64_t seed = 0;
    num::SvrOptions svr;
    num::SvmOptions svm;
};

struct ProbeResult {
    int layer = 0;
    Attribute attribute = Attribute::atomic_number;
    ProbeKind kind = ProbeKind::regression;
    std::vector<double> cv_scores;  // R^2 or accuracy per fold
    double mean_score = 0.0;
    /// Probe refitted on every row; weights act on standardized features
    /// (`probe.standardized`) or raw ones (`probe.folded`).
    num::LinearProbe probe;
    std::vector<int> classes;                   // classification only
    std::optional<Eigen::MatrixXi> confusion;   // out-of-fold, rows = truth
    std::vector<int> out_of_fold_predictions;   // classification only
    double pooled_accuracy = 0.0;               // trace(confusion) / n
    std::optional<num::Vector> residuals;       // regression, out-of-fold y - ŷ
};

/// k-fold probe on the rows of `acts` whose mask entry is true. Regression
/// uses SVR scored by R^2; classification uses one-vs-rest SVM scored by
/// accuracy, with labels rounded to integers.
ProbeResult probe_layer(const num::Matrix& acts, const std::vector<double>& labels, const std::vector<bool>& mask,
                        ProbeKind kind, const ProbeOptions& options = {});

/// Scores of one attribute or pair along depth. depth = layer / L.
struct LayerCurve {
    std::string model;
    std::string id;         // attribute id or pair id
    std::string condition;  // continuation, question, matching, non_matching, no_mention, random, ...
    std::vector<int> layers;
    std::vector<double> depths;
    std::vector<double> scores;
    std::vector<double> ci_low;
    std::vector<double> ci_high;

    void validate() const;
};

/// Labels for every prompt row of a store, taken from the element index of
/// its metadata.
AttributeColumn store_labels(const ActivationStore& store, const ElementTable& table, Attribute attr);

struct ProbeSweep {
    LayerCurve curve;
    LayerCurve random_baseline;  // same probes on permuted labels
    std::vector<ProbeResult> results;
};

/// One probe per captured layer of a (prompt, layer, position, hidden)
/// store, position slot 0. CI bands come from the fold scores.
ProbeSweep probe_sweep(const ActivationStore& store, const ElementTable& table, Attribute attr, ProbeKind kind,
                       const std::string& condition, const ProbeOptions& options = {});

/// score_a - score_b on a shared grid.
LayerCurve difference(const LayerCurve& a, const LayerCurve& b);

/// Mean over attributes of (a_j - b_j) with a t-distribution CI at `level`.
LayerCurve delta_curve(const std::vector<LayerCurve>& a, const std::vector<LayerCurve>& b, double level = 0.95);

struct TrendRow {
    std::string id;
    num::TrendTestResult result;
};

/// Mann-Kendall on the points of each curve with depth in [lo, hi], then
/// Benjamini-Hochberg across the family.
std::vector<TrendRow> trend_analysis(const std::vector<LayerCurve>& curves, double lo, double hi, double alpha = 0.05);

struct IndirectRecallResult {
    LayerCurve matching;
    LayerCurve non_matching;  // mean over pairs, CI over pairs
    LayerCurve no_mention;
    std::vector<LayerCurve> non_matching_pairs;
    std::vector<PairScreenReport> screens;
};

struct NonMatchingInput {
    Attribute prompted;  // attribute the prompts ask about
    const ActivationStore* store = nullptr;
};

/// Probes that always predict `target`, trained on matching prompts, on
/// prompts about other attributes, and on element-token residuals. Pairs
/// that fail elements::screen_pair are refused unless `force`.
IndirectRecallResult indirect_recall_experiment(const ActivationStore& matching,
                                                const std::vector<NonMatchingInput>& non_matching,
                                                const ActivationStore& no_mention, const ElementTable& table,
                                                Attribute target, const ProbeOptions& options = {}, bool force = false);

struct RepMapOptions {
    int pca_dim = 20;
    int folds = 5;
    std::uint64_t seed = 0;
};

/// Per layer: PCA of both sides (fitted on training folds), least-squares
/// map from the j1 representation to the j2 one, k-fold R^2 averaged
/// uniformly over output components. Rows of the two stores must describe
/// the same elements in the same order.
LayerCurve representation_map(const ActivationStore& from, const ActivationStore& to, const RepMapOptions& options = {});

struct SimilarityRow {
    int layer = 0;
    double depth = 0.0;
    double cosine = 0.0;
    double half_width = 0.0;
    bool outside_band = false;
};

/// Cosine between standardized-space regression weights of two probe
/// sweeps, per layer, against the random-vector band for dimension d.
std::vector<SimilarityRow> probe_weight_similarity(const std::vector<ProbeResult>& a, const std::vector<ProbeResult>& b,
                                                   int layer_count, double level = 0.999);

/// Columns: model, attribute_or_pair, condition, layer, depth, score,
/// ci_low, ci_high.
void write_curves_csv(std::ostream& out, const std::vector<LayerCurve>& curves);

}  // namespace lab
