#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "lab/runner.hpp"

namespace lab {

struct ToyConfig {
    int layers = 4;
    int hidden = 32;
    int heads = 4;
    int vocab = 128;
    int max_seq = 128;

    void validate() const;
    int ffn_hidden() const { return 4 * hidden; }
};

struct ToyBlock {
    std::vector<float> ln1_gain, ln1_bias;
    std::vector<float> wq, wk, wv, wo;  // d x d, row-major (out x in)
    std::vector<float> ln2_gain, ln2_bias;
    std::vector<float> w_up, b_up;      // 4d x d, 4d
    std::vector<float> w_down, b_down;  // d x 4d, d
};

/// Parameters of the toy transformer.
///
/// `from_seed` fills every parameter from one splitmix64 stream in this
/// order, each matrix row-major (out x in):
///
///   token_embedding  V x d
///   position_embedding  max_seq x d
///   per block: ln1_gain, ln1_bias, wq, wk, wv, wo, ln2_gain, ln2_bias,
///              w_up, b_up, w_down, b_down
///   final_gain, final_bias
///   head  V x d
///
/// A draw is `float(double(next() >> 40) * 2^-24 * 0.2 - 0.1)`, i.e. uniform
/// on [-0.1, 0.1). Norm gains are stored as `1.0f + draw`, everything else
/// as the draw itself.
struct ToyWeights {
    ToyConfig config;
    std::vector<float> token_embedding;
    std::vector<float> position_embedding;
    std::vector<ToyBlock> blocks;
    std::vector<float> final_gain, final_bias;
    std::vector<float> head;

    static ToyWeights from_seed(std::uint64_t seed, const ToyConfig& config = {});

    /// All parameters concatenated in stream order.
    std::vector<float> flatten() const;

    /// FNV-1a (64-bit) over the little-endian bytes of flatten().
    std::uint64_t checksum() const;
};

/// Decoder-only pre-norm transformer with causal attention, learned absolute
/// positions, ReLU feed-forward, a final LayerNorm and an untied bias-free
/// head. The tokenizer is byte-level: token id = byte value, which must be
/// below the vocabulary size.
class ToyModel final : public Runner {
  public:
    explicit ToyModel(ToyWeights weights);

    ModelInfo info() const override;
    Tokenization tokenize(std::string_view text) const override;
    std::string decode(std::span<const int> ids) const override;
    CaptureResult forward_capture(std::string_view text, const CaptureSpec& spec) override;
    GenerationResult forward_patched(std::string_view text, const PatchSpec& patch) override;
    GenerationResult generate(std::string_view text, int max_new_tokens) override;
    const HeadWeights& head() override { return head_; }
    using Runner::forward_capture;

    const ToyWeights& weights() const { return weights_; }

  private:
    struct Pass {
        std::vector<float> residuals;  // (L + 1) x T x d
        std::vector<std::vector<float>> attention;  // L rows of length T
        std::vector<float> logits;  // final position
    };

    Pass run(const std::vector<int>& ids, const PatchSpec* patch, bool want_attention) const;
    GenerationResult decode_greedy(std::string_view text, const PatchSpec* patch, int max_new_tokens);

    ToyWeights weights_;
    HeadWeights head_;
    mutable std::mutex mutex_;
};

std::unique_ptr<ToyModel> build_toy_model(std::uint64_t seed, const ToyConfig& config = {});

}  // namespace lab
