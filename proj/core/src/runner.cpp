#include "lab/runner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lab/error.hpp"

namespace lab {

void validate(const ModelInfo& info) {
    if (info.layer_count < 1 || info.hidden_dim < 1 || info.vocab_size < 2) {
        throw Error("invalid model info: need L >= 1, d >= 1, V >= 2");
    }
}

std::size_t Tokenization::last_token_of(CharSpan span, std::size_t text_size) const {
    if (span.begin >= span.end || span.end > text_size) throw Error("span outside text");
    std::optional<std::size_t> found;
    for (std::size_t t = 0; t < offsets.size(); ++t) {
        if (offsets[t].overlaps(span)) found = t;
    }
    if (!found) throw Error("span covers no token");
    return *found;
}

std::vector<std::size_t> Tokenization::tokens_of(CharSpan span) const {
    std::vector<std::size_t> out;
    for (std::size_t t = 0; t < offsets.size(); ++t) {
        if (offsets[t].overlaps(span)) out.push_back(t);
    }
    return out;
}

std::span<const float> CaptureResult::residual(std::size_t layer_slot, std::size_t position_slot) const {
    if (layer_slot >= layers.size() || position_slot >= positions.size()) throw Error("capture index out of range");
    const std::size_t d = static_cast<std::size_t>(hidden_dim);
    const std::size_t offset = (layer_slot * positions.size() + position_slot) * d;
    return std::span<const float>(residuals).subspan(offset, d);
}

std::span<const float> CaptureResult::last(int layer) const {
    const auto it = std::find(layers.begin(), layers.end(), layer);
    if (it == layers.end()) throw Error("layer " + std::to_string(layer) + " not captured");
    return residual(static_cast<std::size_t>(it - layers.begin()), positions.size() - 1);
}

std::vector<float> apply_norm(const NormParams& norm, std::span<const float> hidden) {
    std::vector<float> out(hidden.begin(), hidden.end());
    const std::size_t d = hidden.size();
    if (norm.kind == NormParams::Kind::none) return out;
    if (norm.gain.size() != d) throw Error("norm parameters do not match hidden size");
    double mean = 0.0;
    if (norm.kind == NormParams::Kind::layernorm) {
        for (float v : hidden) mean += v;
        mean /= static_cast<double>(d);
    }
    double var = 0.0;
    for (float v : hidden) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(norm.eps));
    for (std::size_t i = 0; i < d; ++i) {
        double v = (hidden[i] - mean) * inv * norm.gain[i];
        if (norm.kind == NormParams::Kind::layernorm && !norm.bias.empty()) v += norm.bias[i];
        out[i] = static_cast<float>(v);
    }
    return out;
}

std::vector<float> Runner::unembed(std::span<const float> hidden, bool normalize) {
    const HeadWeights& h = head();
    if (hidden.size() != static_cast<std::size_t>(h.hidden)) throw Error("unembed: dimension mismatch");
    const std::vector<float> x = normalize ? apply_norm(h.norm, hidden) : std::vector<float>(hidden.begin(), hidden.end());
    std::vector<float> logits(static_cast<std::size_t>(h.vocab));
    const std::size_t d = static_cast<std::size_t>(h.hidden);
    for (std::size_t v = 0; v < logits.size(); ++v) {
        double acc = h.bias.empty() ? 0.0 : h.bias[v];
        const float* row = h.weight.data() + v * d;
        for (std::size_t i = 0; i < d; ++i) acc += static_cast<double>(row[i]) * x[i];
        logits[v] = static_cast<float>(acc);
    }
    return logits;
}

num::Matrix Runner::vocab_head_pinv() {
    const HeadWeights& h = head();
    num::Matrix w(h.vocab, h.hidden);
    for (int v = 0; v < h.vocab; ++v) {
        for (int i = 0; i < h.hidden; ++i) {
            w(v, i) = h.weight[static_cast<std::size_t>(v) * static_cast<std::size_t>(h.hidden) + static_cast<std::size_t>(i)];
        }
    }
    // The head is float32, so singular values below float round-off are noise.
    return num::pinv(w, static_cast<double>(std::max(h.vocab, h.hidden)) * std::numeric_limits<float>::epsilon());
}

void check_patch(const ModelInfo& info, const PatchSpec& patch, std::size_t prompt_tokens) {
    if (!info.supports_patching) throw Error("backend does not support patching");
    if (patch.layer < 0 || patch.layer > info.layer_count) {
        throw Error("patch layer " + std::to_string(patch.layer) + " out of range 0.." + std::to_string(info.layer_count));
    }
    if (patch.position && (*patch.position < 0 || static_cast<std::size_t>(*patch.position) >= prompt_tokens)) {
        throw Error("patch position " + std::to_string(*patch.position) + " out of range");
    }
    if (patch.replacement.size() != static_cast<std::size_t>(info.hidden_dim)) {
        throw Error("patch replacement has length " + std::to_string(patch.replacement.size()) + ", expected " +
                    std::to_string(info.hidden_dim));
    }
    if (patch.max_new_tokens < 1) throw Error("max_new_tokens must be >= 1");
}

std::vector<double> softmax(std::span<const float> logits) {
    std::vector<double> p(logits.size());
    if (logits.empty()) return p;
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(static_cast<double>(logits[i]) - m);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

std::size_t argmax(std::span<const float> values) {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace lab
