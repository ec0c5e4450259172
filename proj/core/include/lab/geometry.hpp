#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lab/elements.hpp"
#include "lab/linalg.hpp"
#include "lab/runner.hpp"

namespace lab {

enum class PromptMode { element, number_control };

/// Low-dimensional target coordinates f(r, g, p) for the 50 elements, with
/// theta = 2 pi g / 18.
struct GeometrySpace {
    int id = 0;
    std::string description;
    num::Matrix points;  // 50 x d'
    std::optional<std::uint64_t> rng_seed;  // spaces 8 and 9
    std::vector<int> permutation;           // spaces 8 and 9: source row for each element
    PromptMode prompt_mode = PromptMode::element;

    int dim() const { return static_cast<int>(points.cols()); }
};

inline constexpr int kSpaceCount = 10;

/// Spaces:
///   1  r                           6  (r cos t, r sin t, p)
///   2  (r, g, p)                   7  (r cos t, r sin t)
///   3  (r cos t, r sin t, r)       8  r permuted across elements
///   4  (cos t, sin t, r)           9  (cos t', sin t', r) with t permuted
///   5  (cos t, sin t, p)          10  as 3, hosted by numeral prompts
GeometrySpace build_space(int id, const ElementTable& table, std::uint64_t seed = 0);

/// Least squares from the PCA-reduced representations (50 x k) to the
/// space's points over every row except `holdout`. Throws when the training
/// representations have rank below d'.
num::LinearMap fit_geometry_map(const num::Matrix& reps, const GeometrySpace& space, int holdout);

/// Pseudo-inverse correction from the training centroid:
///   h̄ = mean of the 49 training reps, z = W h̄ + b,
///   result = pca_inverse(h̄ + W⁺ (f_holdout - z)).
/// Row `holdout` of `reps` is never read.
num::Vector patch_vector(const num::Matrix& reps, const GeometrySpace& space, int holdout, const num::PcaModel& pca);

/// Full pipeline from raw residuals (50 x d): PCA fitted on the 49 training
/// rows, then patch_vector. Row `holdout` is never read.
num::Vector predict_residual(const num::Matrix& residuals, const GeometrySpace& space, int holdout, int pca_dim = 30);

/// First maximal digit run in the generated tokens. A run that reaches the
/// end of its token continues into the following token when that token
/// starts with a digit; at most two tokens are joined.
std::optional<int> parse_numeric(const std::vector<std::string>& token_texts);

struct ElementOutcome {
    int target = 0;
    std::string generated;
    std::optional<int> parsed;
    int abs_error = 50;  // misses count as 50
    std::string error;   // runner failure for this element, if any
};

struct InterventionResult {
    int space_id = 0;
    int layer = 0;
    std::vector<ElementOutcome> outcomes;
    std::vector<int> permutation;
    // Aggregates. r2 and pearson use parsed hits only and are NaN with
    // fewer than two distinct hits.
    double r2 = 0.0;
    double pearson = 0.0;
    double frac_within_2 = 0.0;
    double mae = 0.0;
    int hits = 0;
};

struct InterventionOptions {
    int layer = -1;  // -1: round(0.25 L)
    int pca_dim = 30;
    int max_new_tokens = 4;
};

int default_patch_layer(int layer_count);

/// Baseline prompt for element i (0-based) whose last-token residuals feed
/// the pipeline.
std::string baseline_prompt(const ElementTable& table, int index, PromptMode mode);

/// Last-token residuals of the 50 baseline prompts: one 50 x d matrix per
/// layer 0..L.
std::vector<num::Matrix> capture_baselines(Runner& runner, const ElementTable& table, PromptMode mode);

InterventionResult run_intervention(Runner& runner, const ElementTable& table, const GeometrySpace& space,
                                    const InterventionOptions& options = {});

/// Same as run_intervention but reuses residuals from capture_baselines.
InterventionResult run_intervention(Runner& runner, const std::vector<num::Matrix>& baselines,
                                    const GeometrySpace& space, const InterventionOptions& options);

struct SweepRow {
    int layer = 0;
    double mae = 0.0;
    int min_abs_error = 0;
    int max_abs_error = 0;
    double frac_within_2 = 0.0;
};

std::vector<SweepRow> layer_sweep(Runner& runner, const ElementTable& table, const GeometrySpace& space,
                                  const std::vector<int>& layers, const InterventionOptions& options = {});

/// One JSON object per element, then a summary object with keys "R2",
/// "Pearson Correlation", "Percentage of Abs. err <= 2" and "MAE".
void write_intervention_jsonl(std::ostream& out, const InterventionResult& result);
nlohmann::json intervention_summary(const InterventionResult& result);

}  // namespace lab
