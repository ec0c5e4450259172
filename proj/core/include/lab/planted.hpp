#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "lab/elements.hpp"
#include "lab/linalg.hpp"
#include "lab/runner.hpp"

namespace lab {

/// Generator for a runner whose residuals are known in closed form.
///
/// Element i (atomic number i + 1) is represented by
///   x_i = A f_i + c + e_i
/// where f_i is row i of `points`, A (d x d') has orthonormal columns, c is a
/// fixed offset and e_i is Gaussian with standard deviation
/// `noise_rel` times the per-coordinate RMS of the centred signal A (f_i - f̄).
/// A, c and e are drawn from `seed`.
struct PlantedSpec {
    num::Matrix points;  // 50 x d'
    int layers = 8;
    int hidden = 256;
    double noise_rel = 0.0;
    std::uint64_t seed = 0;
};

/// Runner over a synthetic word vocabulary:
///   0        <miss>
///   1..50    numerals "1".."50"
///   51..100  element symbols (names are accepted on input)
///   101      any other word
///
/// Tokens are whitespace-separated words. The residual at a position is the
/// planted vector of the most recent element or numeral mentioned up to and
/// including that position, and the centroid of the element vectors before
/// any mention; it is identical at every layer. Numerals sit on their own
/// base-10 helix in directions orthogonal to the element geometry. With
/// m_n = A f_n + c the noiseless centre of element n, the head scores
/// numeral n by 2 m_n·h - |m_n|^2, so greedy decoding returns the atomic
/// number of the centre nearest to the final residual. Generation stops
/// after that single token.
class PlantedRunner final : public Runner {
  public:
    PlantedRunner(const ElementTable& table, PlantedSpec spec);

    static constexpr int kMissToken = 0;
    static constexpr int kUnknownToken = 101;
    static constexpr int kVocab = 102;

    ModelInfo info() const override;
    Tokenization tokenize(std::string_view text) const override;
    std::string decode(std::span<const int> ids) const override;
    CaptureResult forward_capture(std::string_view text, const CaptureSpec& spec) override;
    GenerationResult forward_patched(std::string_view text, const PatchSpec& patch) override;
    GenerationResult generate(std::string_view text, int max_new_tokens) override;
    const HeadWeights& head() override { return head_; }
    using Runner::forward_capture;

    /// Planted residual of the element with atomic number z.
    std::vector<float> element_residual(int z) const;
    /// Planted residual of the numeral n.
    std::vector<float> number_residual(int n) const;
    /// Per-coordinate RMS of the noiseless centred signal.
    double signal_scale() const { return signal_scale_; }

  private:
    std::vector<std::vector<float>> stream(const std::vector<int>& ids) const;
    GenerationResult emit(const std::vector<float>& final_residual) const;

    PlantedSpec spec_;
    std::vector<std::string> symbols_;
    std::vector<std::string> lower_names_;
    std::vector<std::vector<float>> element_vectors_;  // 50 x d, with noise
    std::vector<std::vector<float>> centres_;          // 50 x d, noiseless
    std::vector<std::vector<float>> number_vectors_;   // 50 x d
    std::vector<float> null_vector_;
    double signal_scale_ = 0.0;
    HeadWeights head_;
    mutable std::mutex mutex_;
};

std::unique_ptr<PlantedRunner> build_planted_runner(const ElementTable& table, PlantedSpec spec);

}  // namespace lab
