#include "lab/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "lab/error.hpp"
#include "lab/rng.hpp"

namespace lab {
namespace {

constexpr float kNormEps = 1e-5f;

class ParameterStream {
  public:
    explicit ParameterStream(std::uint64_t seed) : rng_(seed) {}

    float draw() {
        const double unit = static_cast<double>(rng_.next() >> 40) * 0x1p-24;
        return static_cast<float>(unit * 0.2 - 0.1);
    }

    std::vector<float> values(std::size_t n) {
        std::vector<float> out(n);
        for (auto& v : out) v = draw();
        return out;
    }

    std::vector<float> gains(std::size_t n) {
        std::vector<float> out(n);
        for (auto& v : out) v = 1.0f + draw();
        return out;
    }

  private:
    SplitMix64 rng_;
};

void layer_norm(const float* x, const std::vector<float>& gain, const std::vector<float>& bias, std::size_t d,
                float* out) {
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += x[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(kNormEps));
    for (std::size_t i = 0; i < d; ++i) out[i] = static_cast<float>((x[i] - mean) * inv * gain[i] + bias[i]);
}

// out[r] = sum_c w[r, c] * x[c] (+ b[r])
void matvec(const std::vector<float>& w, const float* x, std::size_t rows, std::size_t cols, float* out,
            const std::vector<float>* b = nullptr) {
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = b ? (*b)[r] : 0.0;
        const float* row = w.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc += static_cast<double>(row[c]) * x[c];
        out[r] = static_cast<float>(acc);
    }
}

void append(std::vector<float>& out, const std::vector<float>& v) { out.insert(out.end(), v.begin(), v.end()); }

}  // namespace

void ToyConfig::validate() const {
    if (layers < 1 || hidden < 1 || heads < 1 || vocab < 2 || max_seq < 1) {
        throw Error("toy config: layers, hidden, heads, max_seq must be >= 1 and vocab >= 2");
    }
    if (hidden % heads != 0) throw Error("toy config: hidden size must be divisible by the head count");
    if (vocab > 256) throw Error("toy config: byte-level vocabulary cannot exceed 256");
}

ToyWeights ToyWeights::from_seed(std::uint64_t seed, const ToyConfig& config) {
    config.validate();
    ParameterStream s(seed);
    const auto d = static_cast<std::size_t>(config.hidden);
    const auto f = static_cast<std::size_t>(config.ffn_hidden());
    const auto v = static_cast<std::size_t>(config.vocab);

    ToyWeights w;
    w.config = config;
    w.token_embedding = s.values(v * d);
    w.position_embedding = s.values(static_cast<std::size_t>(config.max_seq) * d);
    for (int l = 0; l < config.layers; ++l) {
        ToyBlock b;
        b.ln1_gain = s.gains(d);
        b.ln1_bias = s.values(d);
        b.wq = s.values(d * d);
        b.wk = s.values(d * d);
        b.wv = s.values(d * d);
        b.wo = s.values(d * d);
        b.ln2_gain = s.gains(d);
        b.ln2_bias = s.values(d);
        b.w_up = s.values(f * d);
        b.b_up = s.values(f);
        b.w_down = s.values(d * f);
        b.b_down = s.values(d);
        w.blocks.push_back(std::move(b));
    }
    w.final_gain = s.gains(d);
    w.final_bias = s.values(d);
    w.head = s.values(v * d);
    return w;
}

std::vector<float> ToyWeights::flatten() const {
    std::vector<float> out;
    append(out, token_embedding);
    append(out, position_embedding);
    for (const auto& b : blocks) {
        for (const auto* p : {&b.ln1_gain, &b.ln1_bias, &b.wq, &b.wk, &b.wv, &b.wo, &b.ln2_gain, &b.ln2_bias,
                              &b.w_up, &b.b_up, &b.w_down, &b.b_down}) {
            append(out, *p);
        }
    }
    append(out, final_gain);
    append(out, final_bias);
    append(out, head);
    return out;
}

std::uint64_t ToyWeights::checksum() const {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (float value : flatten()) {
        std::uint32_t bits;
        std::memcpy(&bits, &value, sizeof bits);
        for (int byte = 0; byte < 4; ++byte) {
            hash ^= (bits >> (8 * byte)) & 0xffU;
            hash *= 0x100000001b3ULL;
        }
    }
    return hash;
}

ToyModel::ToyModel(ToyWeights weights) : weights_(std::move(weights)) {
    const auto& c = weights_.config;
    c.validate();
    const auto d = static_cast<std::size_t>(c.hidden);
    if (weights_.blocks.size() != static_cast<std::size_t>(c.layers) || weights_.head.size() != static_cast<std::size_t>(c.vocab) * d ||
        weights_.token_embedding.size() != static_cast<std::size_t>(c.vocab) * d) {
        throw Error("toy weights do not match their config");
    }
    head_.vocab = c.vocab;
    head_.hidden = c.hidden;
    head_.weight = weights_.head;
    head_.norm.kind = NormParams::Kind::layernorm;
    head_.norm.gain = weights_.final_gain;
    head_.norm.bias = weights_.final_bias;
    head_.norm.eps = kNormEps;
}

ModelInfo ToyModel::info() const {
    const auto& c = weights_.config;
    return ModelInfo{"toy", c.layers, c.hidden, c.vocab, true, true};
}

Tokenization ToyModel::tokenize(std::string_view text) const {
    if (text.empty()) throw Error("tokenization failure: empty prompt");
    if (text.size() > static_cast<std::size_t>(weights_.config.max_seq)) {
        throw Error("tokenization failure: prompt longer than max_seq");
    }
    Tokenization out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const int id = static_cast<unsigned char>(text[i]);
        if (id >= weights_.config.vocab) {
            throw Error("tokenization failure: byte " + std::to_string(id) + " outside vocabulary");
        }
        out.ids.push_back(id);
        out.offsets.push_back({i, i + 1});
    }
    return out;
}

std::string ToyModel::decode(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) out.push_back(static_cast<char>(id));
    return out;
}

ToyModel::Pass ToyModel::run(const std::vector<int>& ids, const PatchSpec* patch, bool want_attention) const {
    const auto& c = weights_.config;
    const auto d = static_cast<std::size_t>(c.hidden);
    const auto f = static_cast<std::size_t>(c.ffn_hidden());
    const auto heads = static_cast<std::size_t>(c.heads);
    const std::size_t dh = d / heads;
    const std::size_t t_len = ids.size();
    const auto layers = static_cast<std::size_t>(c.layers);
    const std::size_t patch_pos = patch ? static_cast<std::size_t>(patch->position.value_or(0)) : 0;

    Pass pass;
    pass.residuals.assign((layers + 1) * t_len * d, 0.0f);
    auto at = [&](std::size_t layer, std::size_t t) { return pass.residuals.data() + (layer * t_len + t) * d; };
    auto apply_patch = [&](std::size_t layer) {
        if (patch && static_cast<std::size_t>(patch->layer) == layer) {
            std::copy(patch->replacement.begin(), patch->replacement.end(), at(layer, patch_pos));
        }
    };

    for (std::size_t t = 0; t < t_len; ++t) {
        const float* tok = weights_.token_embedding.data() + static_cast<std::size_t>(ids[t]) * d;
        const float* pos = weights_.position_embedding.data() + t * d;
        float* h = at(0, t);
        for (std::size_t i = 0; i < d; ++i) h[i] = tok[i] + pos[i];
    }
    apply_patch(0);

    std::vector<float> normed(t_len * d), q(t_len * d), k(t_len * d), v(t_len * d);
    std::vector<float> mixed(d), attn_out(d), mid(d), up(f), down(d);
    std::vector<double> scores(t_len);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    for (std::size_t l = 1; l <= layers; ++l) {
        const ToyBlock& b = weights_.blocks[l - 1];
        for (std::size_t t = 0; t < t_len; ++t) {
            layer_norm(at(l - 1, t), b.ln1_gain, b.ln1_bias, d, normed.data() + t * d);
            matvec(b.wq, normed.data() + t * d, d, d, q.data() + t * d);
            matvec(b.wk, normed.data() + t * d, d, d, k.data() + t * d);
            matvec(b.wv, normed.data() + t * d, d, d, v.data() + t * d);
        }
        std::vector<float> row_avg;
        if (want_attention) row_avg.assign(t_len, 0.0f);

        for (std::size_t t = 0; t < t_len; ++t) {
            std::fill(mixed.begin(), mixed.end(), 0.0f);
            for (std::size_t hd = 0; hd < heads; ++hd) {
                const std::size_t off = hd * dh;
                double max_score = -1e300;
                for (std::size_t u = 0; u <= t; ++u) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < dh; ++i) s += static_cast<double>(q[t * d + off + i]) * k[u * d + off + i];
                    scores[u] = s * scale;
                    max_score = std::max(max_score, scores[u]);
                }
                double total = 0.0;
                for (std::size_t u = 0; u <= t; ++u) {
                    scores[u] = std::exp(scores[u] - max_score);
                    total += scores[u];
                }
                for (std::size_t u = 0; u <= t; ++u) {
                    const double a = scores[u] / total;
                    for (std::size_t i = 0; i < dh; ++i) mixed[off + i] += static_cast<float>(a * v[u * d + off + i]);
                    if (want_attention && t + 1 == t_len) row_avg[u] += static_cast<float>(a / static_cast<double>(heads));
                }
            }
            matvec(b.wo, mixed.data(), d, d, attn_out.data());
            const float* prev = at(l - 1, t);
            float* h = at(l, t);
            for (std::size_t i = 0; i < d; ++i) h[i] = prev[i] + attn_out[i];
            layer_norm(h, b.ln2_gain, b.ln2_bias, d, mid.data());
            matvec(b.w_up, mid.data(), f, d, up.data(), &b.b_up);
            for (auto& x : up) x = std::max(x, 0.0f);
            matvec(b.w_down, up.data(), d, f, down.data(), &b.b_down);
            for (std::size_t i = 0; i < d; ++i) h[i] += down[i];
        }
        apply_patch(l);
        if (want_attention) pass.attention.push_back(std::move(row_avg));
    }

    std::vector<float> final_norm(d);
    layer_norm(at(layers, t_len - 1), weights_.final_gain, weights_.final_bias, d, final_norm.data());
    pass.logits.resize(static_cast<std::size_t>(c.vocab));
    matvec(weights_.head, final_norm.data(), static_cast<std::size_t>(c.vocab), d, pass.logits.data());
    return pass;
}

CaptureResult ToyModel::forward_capture(std::string_view text, const CaptureSpec& spec) {
    std::lock_guard lock(mutex_);
    const auto& c = weights_.config;
    CaptureResult out;
    out.tokens = tokenize(text);
    const std::size_t t_len = out.tokens.size();
    const auto d = static_cast<std::size_t>(c.hidden);

    switch (spec.positions) {
        case PositionMode::last_token: out.positions = {static_cast<int>(t_len - 1)}; break;
        case PositionMode::all:
            for (std::size_t t = 0; t < t_len; ++t) out.positions.push_back(static_cast<int>(t));
            break;
        case PositionMode::spans:
            if (spec.spans.empty()) throw Error("capture: span mode requires at least one span");
            for (const auto& s : spec.spans) out.positions.push_back(static_cast<int>(out.tokens.last_token_of(s, text.size())));
            break;
    }
    if (spec.layers.empty()) {
        for (int l = 0; l <= c.layers; ++l) out.layers.push_back(l);
    } else {
        for (int l : spec.layers) {
            if (l < 0 || l > c.layers) throw Error("capture: layer " + std::to_string(l) + " out of range");
        }
        out.layers = spec.layers;
    }

    const Pass pass = run(out.tokens.ids, nullptr, spec.capture_attention);
    out.hidden_dim = c.hidden;
    out.residuals.reserve(out.layers.size() * out.positions.size() * d);
    for (int l : out.layers) {
        for (int p : out.positions) {
            const float* src = pass.residuals.data() + (static_cast<std::size_t>(l) * t_len + static_cast<std::size_t>(p)) * d;
            out.residuals.insert(out.residuals.end(), src, src + d);
        }
    }
    if (spec.capture_logits) out.logits = pass.logits;
    if (spec.capture_attention) out.attention = pass.attention;
    return out;
}

GenerationResult ToyModel::decode_greedy(std::string_view text, const PatchSpec* patch, int max_new_tokens) {
    std::lock_guard lock(mutex_);
    std::vector<int> ids = tokenize(text).ids;
    PatchSpec resolved;
    if (patch) {
        resolved = *patch;
        if (!resolved.position) resolved.position = static_cast<int>(ids.size()) - 1;
        check_patch(info(), resolved, ids.size());
    }
    if (max_new_tokens < 1) throw Error("max_new_tokens must be >= 1");
    GenerationResult out;
    for (int step = 0; step < max_new_tokens; ++step) {
        if (ids.size() >= static_cast<std::size_t>(weights_.config.max_seq)) break;
        const Pass pass = run(ids, patch ? &resolved : nullptr, false);
        if (step == 0) out.logits = pass.logits;
        const int next = static_cast<int>(argmax(pass.logits));
        ids.push_back(next);
        out.tokens.push_back(next);
        out.token_texts.push_back(decode(std::span<const int>(&next, 1)));
    }
    out.text = decode(out.tokens);
    return out;
}

GenerationResult ToyModel::forward_patched(std::string_view text, const PatchSpec& patch) {
    return decode_greedy(text, &patch, patch.max_new_tokens);
}

GenerationResult ToyModel::generate(std::string_view text, int max_new_tokens) {
    return decode_greedy(text, nullptr, max_new_tokens);
}

std::unique_ptr<ToyModel> build_toy_model(std::uint64_t seed, const ToyConfig& config) {
    return std::make_unique<ToyModel>(ToyWeights::from_seed(seed, config));
}

}  // namespace lab
