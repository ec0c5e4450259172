#include "lab/planted.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include "lab/error.hpp"
#include "lab/rng.hpp"

namespace lab {
namespace {

std::string lowercase(std::string_view s) {
    std::string out(s);
    for (char& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
}

std::string_view word_core(std::string_view word) {
    while (!word.empty() && std::string_view(".,;:!?\"')").find(word.back()) != std::string_view::npos) {
        word.remove_suffix(1);
    }
    if (word.size() > 2 && word.substr(word.size() - 2) == "'s") word.remove_suffix(2);
    return word;
}

std::vector<float> to_float(const num::Vector& v) {
    std::vector<float> out(static_cast<std::size_t>(v.size()));
    for (num::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
    return out;
}

}  // namespace

PlantedRunner::PlantedRunner(const ElementTable& table, PlantedSpec spec) : spec_(std::move(spec)) {
    const num::Index n = spec_.points.rows();
    const num::Index dp = spec_.points.cols();
    if (n != ElementTable::kSize) throw Error("planted spec: geometry must have one row per element (50)");
    if (spec_.layers < 1 || spec_.hidden < 1) throw Error("planted spec: layers and hidden must be >= 1");
    if (dp < 1 || dp > spec_.hidden) throw Error("planted spec: geometry dimension must be in 1..hidden");
    if (!(spec_.noise_rel >= 0.0) || !std::isfinite(spec_.noise_rel)) throw Error("planted spec: noise must be >= 0");
    if (!spec_.points.allFinite()) throw Error("planted spec: geometry has non-finite entries");

    for (const auto& rec : table.records()) {
        symbols_.push_back(rec.symbol);
        lower_names_.push_back(lowercase(rec.name));
    }

    const num::Index d = spec_.hidden;
    SplitMix64 rng(spec_.seed);
    const num::Index extra = std::min<num::Index>(3, d - dp);
    num::Matrix gaussian(d, dp + extra);
    for (num::Index c = 0; c < gaussian.cols(); ++c) {
        for (num::Index r = 0; r < d; ++r) gaussian(r, c) = rng.normal();
    }
    // Orthonormal columns: the geometry first, then up to three directions
    // for the numeral world.
    const num::Matrix q = Eigen::HouseholderQR<num::Matrix>(gaussian).householderQ() * num::Matrix::Identity(d, dp + extra);
    const num::Matrix a = q.leftCols(dp);
    const num::Matrix number_basis = extra > 0 ? num::Matrix(q.rightCols(extra)) : num::Matrix(q.leftCols(std::min<num::Index>(3, dp)));

    num::Vector offset(d);
    for (num::Index i = 0; i < d; ++i) offset(i) = rng.normal();

    const num::Vector mean_f = spec_.points.colwise().mean().transpose();
    const num::Matrix centred = (spec_.points.rowwise() - mean_f.transpose()) * a.transpose();  // 50 x d
    signal_scale_ = std::sqrt(centred.squaredNorm() / static_cast<double>(centred.size()));
    const double sigma = spec_.noise_rel * signal_scale_;
    const num::Vector centre = offset + a * mean_f;

    num::Vector null_vec = num::Vector::Zero(d);
    for (num::Index i = 0; i < n; ++i) {
        num::Vector x = centre + centred.row(i).transpose();
        centres_.push_back(to_float(x));
        for (num::Index k = 0; k < d; ++k) x(k) += sigma * rng.normal();
        null_vec += x;
        element_vectors_.push_back(to_float(x));
    }
    null_vector_ = to_float(null_vec / static_cast<double>(n));

    // Numerals live on a base-10 helix: (n, cos 2 pi n / 10, sin 2 pi n / 10),
    // scaled to the element signal.
    const double unit = signal_scale_ > 0.0 ? signal_scale_ : 1.0;
    for (int k = 1; k <= ElementTable::kSize; ++k) {
        const double angle = 2.0 * std::numbers::pi * k / 10.0;
        const double coords[3] = {(k - 25.5) / 14.4, std::cos(angle), std::sin(angle)};
        num::Vector v = centre;
        for (num::Index c = 0; c < number_basis.cols(); ++c) v += number_basis.col(c) * (unit * coords[c]);
        number_vectors_.push_back(to_float(v));
    }

    head_.vocab = kVocab;
    head_.hidden = spec_.hidden;
    head_.weight.assign(static_cast<std::size_t>(kVocab) * static_cast<std::size_t>(d), 0.0f);
    head_.bias.assign(static_cast<std::size_t>(kVocab), -1e9f);
    for (int z = 1; z <= ElementTable::kSize; ++z) {
        const auto& x = centres_[static_cast<std::size_t>(z - 1)];
        double sq = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            head_.weight[static_cast<std::size_t>(z) * static_cast<std::size_t>(d) + k] = 2.0f * x[k];
            sq += static_cast<double>(x[k]) * x[k];
        }
        head_.bias[static_cast<std::size_t>(z)] = static_cast<float>(-sq);
    }
    head_.norm.kind = NormParams::Kind::none;
}

ModelInfo PlantedRunner::info() const {
    return ModelInfo{"planted", spec_.layers, spec_.hidden, kVocab, false, true};
}

Tokenization PlantedRunner::tokenize(std::string_view text) const {
    Tokenization out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= text.size()) break;
        const std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        const std::string_view core = word_core(text.substr(start, i - start));
        int id = kUnknownToken;
        if (!core.empty() && std::all_of(core.begin(), core.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            if (core.size() <= 2) {
                const int n = std::stoi(std::string(core));
                if (n >= 1 && n <= ElementTable::kSize) id = n;
            }
        } else {
            const std::string lower = lowercase(core);
            for (std::size_t e = 0; e < symbols_.size(); ++e) {
                if (core == symbols_[e] || lower == lower_names_[e]) {
                    id = 51 + static_cast<int>(e);
                    break;
                }
            }
        }
        out.ids.push_back(id);
        out.offsets.push_back({start, i});
    }
    if (out.ids.empty()) throw Error("tokenization failure: prompt has no words");
    return out;
}

std::string PlantedRunner::decode(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
        if (!out.empty()) out.push_back(' ');
        if (id == kMissToken) {
            out += "<miss>";
        } else if (id >= 1 && id <= 50) {
            out += std::to_string(id);
        } else if (id >= 51 && id <= 100) {
            out += symbols_.at(static_cast<std::size_t>(id - 51));
        } else {
            out += "<unk>";
        }
    }
    return out;
}

std::vector<std::vector<float>> PlantedRunner::stream(const std::vector<int>& ids) const {
    std::vector<std::vector<float>> out;
    const std::vector<float>* current = &null_vector_;
    for (int id : ids) {
        if (id >= 1 && id <= 50) current = &number_vectors_[static_cast<std::size_t>(id - 1)];
        if (id >= 51 && id <= 100) current = &element_vectors_[static_cast<std::size_t>(id - 51)];
        out.push_back(*current);
    }
    return out;
}

std::vector<float> PlantedRunner::element_residual(int z) const {
    if (z < 1 || z > ElementTable::kSize) throw Error("atomic number out of range");
    return element_vectors_[static_cast<std::size_t>(z - 1)];
}

std::vector<float> PlantedRunner::number_residual(int n) const {
    if (n < 1 || n > ElementTable::kSize) throw Error("numeral out of range");
    return number_vectors_[static_cast<std::size_t>(n - 1)];
}

CaptureResult PlantedRunner::forward_capture(std::string_view text, const CaptureSpec& spec) {
    std::lock_guard lock(mutex_);
    if (spec.capture_attention) throw Error("attention capture unsupported by the planted runner");
    CaptureResult out;
    out.tokens = tokenize(text);
    const std::size_t t_len = out.tokens.size();
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
        for (int l = 0; l <= spec_.layers; ++l) out.layers.push_back(l);
    } else {
        for (int l : spec.layers) {
            if (l < 0 || l > spec_.layers) throw Error("capture: layer " + std::to_string(l) + " out of range");
        }
        out.layers = spec.layers;
    }
    const auto rows = stream(out.tokens.ids);
    out.hidden_dim = spec_.hidden;
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
        for (int p : out.positions) {
            const auto& r = rows[static_cast<std::size_t>(p)];
            out.residuals.insert(out.residuals.end(), r.begin(), r.end());
        }
    }
    if (spec.capture_logits) out.logits = unembed(rows.back(), false);
    return out;
}

GenerationResult PlantedRunner::emit(const std::vector<float>& final_residual) const {
    GenerationResult out;
    out.logits.resize(static_cast<std::size_t>(kVocab));
    const std::size_t d = static_cast<std::size_t>(spec_.hidden);
    for (std::size_t v = 0; v < out.logits.size(); ++v) {
        double acc = head_.bias[v];
        const float* row = head_.weight.data() + v * d;
        for (std::size_t k = 0; k < d; ++k) acc += static_cast<double>(row[k]) * final_residual[k];
        out.logits[v] = static_cast<float>(acc);
    }
    const int token = static_cast<int>(argmax(out.logits));
    out.tokens = {token};
    out.token_texts = {decode(out.tokens)};
    out.text = out.token_texts.front();
    return out;
}

GenerationResult PlantedRunner::forward_patched(std::string_view text, const PatchSpec& patch) {
    std::lock_guard lock(mutex_);
    const auto ids = tokenize(text).ids;
    check_patch(info(), patch, ids.size());
    auto rows = stream(ids);
    const std::size_t pos = patch.position ? static_cast<std::size_t>(*patch.position) : ids.size() - 1;
    rows[pos] = patch.replacement;
    return emit(rows.back());
}

GenerationResult PlantedRunner::generate(std::string_view text, int max_new_tokens) {
    std::lock_guard lock(mutex_);
    if (max_new_tokens < 1) throw Error("max_new_tokens must be >= 1");
    const auto rows = stream(tokenize(text).ids);
    return emit(rows.back());
}

std::unique_ptr<PlantedRunner> build_planted_runner(const ElementTable& table, PlantedSpec spec) {
    return std::make_unique<PlantedRunner>(table, std::move(spec));
}

}  // namespace lab
