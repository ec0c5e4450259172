#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lab/linalg.hpp"
#include "lab/prompts.hpp"

namespace lab {

struct ModelInfo {
    std::string name;
    int layer_count = 0;  // L; captures are indexed 0..L with 0 = embedding output
    int hidden_dim = 0;
    int vocab_size = 0;
    bool supports_attention_capture = false;
    bool supports_patching = false;

    friend bool operator==(const ModelInfo&, const ModelInfo&) = default;
};

/// Validates L >= 1, d >= 1, V >= 2.
void validate(const ModelInfo& info);

struct Tokenization {
    std::vector<int> ids;
    std::vector<CharSpan> offsets;  // character range of each token

    std::size_t size() const { return ids.size(); }

    /// Index of the last token overlapping `span`. Throws if the span lies
    /// outside the text or covers no token.
    std::size_t last_token_of(CharSpan span, std::size_t text_size) const;
    /// Indices of all tokens overlapping `span`.
    std::vector<std::size_t> tokens_of(CharSpan span) const;
};

enum class PositionMode { last_token, all, spans };

struct CaptureSpec {
    PositionMode positions = PositionMode::last_token;
    std::vector<CharSpan> spans;  // used when positions == spans
    bool capture_attention = false;
    bool capture_logits = false;
    std::vector<int> layers;  // empty = all of 0..L
};

/// Residual streams for one prompt. `residuals` is row-major
/// (layers.size(), positions.size(), hidden_dim).
struct CaptureResult {
    std::vector<int> layers;
    std::vector<int> positions;
    int hidden_dim = 0;
    std::vector<float> residuals;
    std::optional<std::vector<float>> logits;  // at the final position
    /// Head-averaged attention from the final position to every position,
    /// one row per block 1..L.
    std::optional<std::vector<std::vector<float>>> attention;
    Tokenization tokens;

    std::span<const float> residual(std::size_t layer_slot, std::size_t position_slot) const;
    /// Residual at captured layer `layer` for the last captured position.
    std::span<const float> last(int layer) const;
};

struct PatchSpec {
    int layer = 0;
    std::optional<int> position;  // token index; default = last prompt token
    std::vector<float> replacement;
    int max_new_tokens = 1;
};

struct GenerationResult {
    std::vector<int> tokens;
    std::vector<std::string> token_texts;
    std::string text;
    /// Logits that produced the first generated token.
    std::vector<float> logits;
};

/// Final normalisation applied before the vocabulary head.
struct NormParams {
    enum class Kind { none, layernorm, rmsnorm };
    Kind kind = Kind::none;
    std::vector<float> gain;
    std::vector<float> bias;
    float eps = 1e-5f;
};

/// Vocabulary head: logits = weight * norm(h) + bias, weight is V x d row-major.
struct HeadWeights {
    int vocab = 0;
    int hidden = 0;
    std::vector<float> weight;
    std::vector<float> bias;  // empty when the head has no bias
    NormParams norm;
};

std::vector<float> apply_norm(const NormParams& norm, std::span<const float> hidden);

/// Uniform interface over decoder-only transformers. Implementations
/// serialise calls on a single instance.
class Runner {
  public:
    virtual ~Runner() = default;

    virtual ModelInfo info() const = 0;
    virtual Tokenization tokenize(std::string_view text) const = 0;
    virtual std::string decode(std::span<const int> ids) const = 0;

    virtual CaptureResult forward_capture(std::string_view text, const CaptureSpec& spec) = 0;

    /// Greedy generation with the residual at (layer, position) replaced on
    /// every decode step. Blocks after `layer` recompute from the replacement.
    virtual GenerationResult forward_patched(std::string_view text, const PatchSpec& patch) = 0;

    /// Greedy generation without intervention.
    virtual GenerationResult generate(std::string_view text, int max_new_tokens) = 0;

    /// Throws if the backend does not expose its head.
    virtual const HeadWeights& head() = 0;

    CaptureResult forward_capture(const PromptInstance& prompt, const CaptureSpec& spec) {
        return forward_capture(prompt.text, spec);
    }

    /// logits = head(norm(hidden)) when `normalize`, else head(hidden).
    std::vector<float> unembed(std::span<const float> hidden, bool normalize);

    /// Moore-Penrose pseudo-inverse of the vocabulary head, d x V, cutting
    /// singular values below max(V, d) * float epsilon * sigma_max.
    num::Matrix vocab_head_pinv();
};

void check_patch(const ModelInfo& info, const PatchSpec& patch, std::size_t prompt_tokens);

/// Softmax in double precision.
std::vector<double> softmax(std::span<const float> logits);

std::size_t argmax(std::span<const float> values);

}  // namespace lab
