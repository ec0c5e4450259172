#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lab/activation_store.hpp"
#include "lab/linalg.hpp"
#include "lab/runner.hpp"

namespace lab {

class TunedLens;

struct LensOptions {
    int top_k = 50;
    /// Decode through the model's final norm. The same norm parameters are
    /// used at every layer.
    bool normalize = true;
    /// Apply these translators before the head (tuned lens). Null = logit lens.
    const TunedLens* translator = nullptr;
};

/// Lens readout of one target token after `context`.
struct LensStep {
    std::string context;
    int token = 0;
    std::vector<double> probability;  // per layer 0..L
    std::vector<int> rank;            // 1 = most probable
    std::vector<bool> in_top_k;
};

struct LensTrace {
    std::string prompt;
    std::string target;
    std::vector<int> layers;
    std::vector<LensStep> steps;  // one per target token

    int target_token() const { return steps.front().token; }
};

/// Per-layer vocabulary distributions at the final position of `text`,
/// indexed [layer][token].
std::vector<std::vector<double>> lens_distributions(Runner& runner, const std::string& text,
                                                    const LensOptions& options = {});

/// Traces each token of `target` through the layers. Later target tokens are
/// read after appending the earlier ones to the prompt and re-running.
LensTrace logit_lens(Runner& runner, const std::string& prompt, const std::string& target,
                     const LensOptions& options = {});

void write_lens_csv(std::ostream& out, const std::vector<LensTrace>& traces);

struct TunedLensOptions {
    int iterations = 1000;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    /// Positions per Adam step; 0 uses every position.
    std::size_t batch_size = 0;
    std::string corpus_id;
};

struct LayerFit {
    int layer = 0;
    double initial_kl = 0.0;  // identity translator
    double final_kl = 0.0;    // kept parameters
    int best_iteration = 0;   // 0 = identity was never beaten
};

/// Affine translators h -> A h + b, one per layer 0..L-1. Layer L is the
/// identity.
class TunedLens {
  public:
    TunedLens() = default;
    explicit TunedLens(int layer_count, int hidden_dim);

    int layer_count() const { return static_cast<int>(maps_.size()); }
    int hidden_dim() const { return hidden_; }

    const num::LinearMap& map(int layer) const;
    void set_map(int layer, num::LinearMap map);

    std::vector<float> translate(int layer, std::span<const float> hidden) const;

    std::string corpus_id;
    int iterations = 0;
    std::uint64_t seed = 0;
    std::vector<LayerFit> fits;

  private:
    int hidden_ = 0;
    std::vector<num::LinearMap> maps_;
};

/// Residuals at every position of every prompt, per layer 0..L, with the
/// model's final-layer distribution at each position.
struct LensCorpus {
    std::vector<num::Matrix> residuals;  // [layer] positions x d
    num::Matrix final_probs;             // positions x V

    std::size_t positions() const { return static_cast<std::size_t>(final_probs.rows()); }
};

LensCorpus collect_lens_corpus(Runner& runner, const std::vector<std::string>& prompts);

/// Mean KL(final || lens) per layer 0..L over the corpus positions. A null
/// translator gives the logit lens.
std::vector<double> lens_kl(Runner& runner, const LensCorpus& corpus, const TunedLens* lens = nullptr);

/// Fits each translator by Adam on KL(final || softmax(head(norm(A h + b)))),
/// starting from the identity and keeping the best iterate.
TunedLens tuned_lens_train(Runner& runner, const LensCorpus& corpus, const TunedLensOptions& options = {});
TunedLens tuned_lens_train(Runner& runner, const std::vector<std::string>& prompts,
                           const TunedLensOptions& options = {});

struct AttentionLayer {
    int layer = 0;  // block 1..L
    double to_element = 0.0;
    double to_attribute = 0.0;
    double to_others_mean = 0.0;
    double entropy = 0.0;
};

/// -sum a log a, with 0 log 0 = 0.
double attention_entropy(std::span<const float> row);

/// Final-position attention averaged over prompts. Element and attribute
/// mass sum the row over their tokens; others is the mean weight of the
/// remaining tokens.
std::vector<AttentionLayer> attention_profile(Runner& runner, const std::vector<PromptInstance>& prompts);

void write_attention_csv(std::ostream& out, const std::string& model, const std::vector<AttentionLayer>& rows);

struct NumberDistances {
    std::vector<int> numbers;   // numbers that map to one token
    std::vector<int> skipped;   // numbers that needed several tokens
    std::vector<int> token_ids;
    num::Matrix vectors;        // pinv(head) columns, one row per number
    num::Matrix distances;      // pairwise Euclidean
    double cv_r2 = 0.0;         // k-fold least squares vector -> number
    std::vector<double> fold_r2;
};

NumberDistances number_embedding_distances(Runner& runner, int first = 1, int last = 50, int folds = 5,
                                           std::uint64_t seed = 0);

/// Distance matrix as a (n, n) store whose prompt rows carry the numbers.
ActivationStore distance_store(const ModelInfo& info, const NumberDistances& distances);

}  // namespace lab
