#include "lab/lenses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <set>

#include <fmt/format.h>

#include "lab/error.hpp"
#include "lab/rng.hpp"
#include "lab/stats.hpp"

namespace lab {
namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<float> lens_logits(Runner& runner, int layer, std::span<const float> hidden, const LensOptions& opt) {
    if (opt.translator) {
        const std::vector<float> moved = opt.translator->translate(layer, hidden);
        return runner.unembed(moved, opt.normalize);
    }
    return runner.unembed(hidden, opt.normalize);
}

int rank_of(const std::vector<double>& probs, int token) {
    const double p = probs[static_cast<std::size_t>(token)];
    int rank = 1;
    for (double q : probs) rank += q > p ? 1 : 0;
    return rank;
}

// Head and final norm as dense double matrices for the tuned-lens optimiser.
struct DenseHead {
    num::Matrix weight;  // V x d
    num::Vector bias;    // V
    NormParams::Kind kind = NormParams::Kind::none;
    num::Vector gain;
    num::Vector shift;
    double eps = 0.0;

    explicit DenseHead(const HeadWeights& h) {
        weight.resize(h.vocab, h.hidden);
        for (int v = 0; v < h.vocab; ++v) {
            for (int i = 0; i < h.hidden; ++i) {
                weight(v, i) = h.weight[static_cast<std::size_t>(v) * static_cast<std::size_t>(h.hidden) +
                                        static_cast<std::size_t>(i)];
            }
        }
        bias = num::Vector::Zero(h.vocab);
        for (std::size_t v = 0; v < h.bias.size(); ++v) bias(static_cast<num::Index>(v)) = h.bias[v];
        kind = h.norm.kind;
        gain = num::Vector::Ones(h.hidden);
        shift = num::Vector::Zero(h.hidden);
        for (std::size_t i = 0; i < h.norm.gain.size(); ++i) gain(static_cast<num::Index>(i)) = h.norm.gain[i];
        if (kind == NormParams::Kind::layernorm) {
            for (std::size_t i = 0; i < h.norm.bias.size(); ++i) shift(static_cast<num::Index>(i)) = h.norm.bias[i];
        }
        eps = h.norm.eps;
    }
};

// Row-wise final norm. `unit` receives the normalised rows before gain and
// shift, `inv_scale` the per-row 1/sigma, both needed for the backward pass.
num::Matrix norm_rows(const DenseHead& head, const num::Matrix& u, num::Matrix& unit, num::Vector& inv_scale) {
    const num::Index n = u.rows();
    if (head.kind == NormParams::Kind::none) {
        unit = u;
        inv_scale = num::Vector::Ones(n);
        return u;
    }
    unit.resize(u.rows(), u.cols());
    inv_scale.resize(n);
    const double d = static_cast<double>(u.cols());
    for (num::Index r = 0; r < n; ++r) {
        const double mean = head.kind == NormParams::Kind::layernorm ? u.row(r).mean() : 0.0;
        const auto centred = u.row(r).array() - mean;
        const double var = centred.square().sum() / d;
        inv_scale(r) = 1.0 / std::sqrt(var + head.eps);
        unit.row(r) = centred * inv_scale(r);
    }
    num::Matrix y = unit * head.gain.asDiagonal();
    y.rowwise() += head.shift.transpose();
    return y;
}

num::Matrix norm_backward(const DenseHead& head, const num::Matrix& unit, const num::Vector& inv_scale,
                          const num::Matrix& grad_y) {
    if (head.kind == NormParams::Kind::none) return grad_y;
    const num::Matrix g = grad_y * head.gain.asDiagonal();
    num::Matrix out(g.rows(), g.cols());
    for (num::Index r = 0; r < g.rows(); ++r) {
        const double along = g.row(r).dot(unit.row(r)) / static_cast<double>(g.cols());
        if (head.kind == NormParams::Kind::layernorm) {
            const double mean_g = g.row(r).mean();
            out.row(r) = inv_scale(r) * (g.row(r).array() - mean_g - unit.row(r).array() * along).matrix();
        } else {
            out.row(r) = inv_scale(r) * (g.row(r) - unit.row(r) * along);
        }
    }
    return out;
}

num::Matrix log_softmax_rows(const num::Matrix& z) {
    num::Matrix out(z.rows(), z.cols());
    for (num::Index r = 0; r < z.rows(); ++r) {
        const double m = z.row(r).maxCoeff();
        const double lse = m + std::log((z.row(r).array() - m).exp().sum());
        out.row(r) = z.row(r).array() - lse;
    }
    return out;
}

// Mean KL(p || q) given p, log p (0 where p = 0) and log q.
double mean_kl(const num::Matrix& p, const num::Matrix& log_p, const num::Matrix& log_q) {
    double total = 0.0;
    for (num::Index r = 0; r < p.rows(); ++r) {
        for (num::Index c = 0; c < p.cols(); ++c) {
            const double pv = p(r, c);
            if (pv > 0.0) total += pv * (log_p(r, c) - log_q(r, c));
        }
    }
    return total / static_cast<double>(p.rows());
}

num::Matrix safe_log(const num::Matrix& p) {
    return p.unaryExpr([](double v) { return v > 0.0 ? std::log(v) : 0.0; });
}

struct Objective {
    const DenseHead& head;
    const num::Matrix& h;
    const num::Matrix& p;
    const num::Matrix& log_p;

    // Returns the loss; fills gradients when asked.
    double operator()(const num::Matrix& a, const num::Vector& b, num::Matrix* grad_a, num::Vector* grad_b) const {
        num::Matrix u = h * a.transpose();
        u.rowwise() += b.transpose();
        num::Matrix unit;
        num::Vector inv_scale;
        const num::Matrix y = norm_rows(head, u, unit, inv_scale);
        num::Matrix z = y * head.weight.transpose();
        z.rowwise() += head.bias.transpose();
        const num::Matrix log_q = log_softmax_rows(z);
        const double loss = mean_kl(p, log_p, log_q);
        if (grad_a) {
            const num::Matrix grad_z = (log_q.array().exp().matrix() - p) / static_cast<double>(h.rows());
            const num::Matrix grad_y = grad_z * head.weight;
            const num::Matrix grad_u = norm_backward(head, unit, inv_scale, grad_y);
            *grad_a = grad_u.transpose() * h;
            *grad_b = grad_u.colwise().sum().transpose();
        }
        return loss;
    }
};

num::Matrix take_rows(const num::Matrix& m, const std::vector<std::size_t>& rows) {
    num::Matrix out(static_cast<num::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<num::Index>(i)) = m.row(static_cast<num::Index>(rows[i]));
    return out;
}

LayerFit fit_layer(const DenseHead& head, const num::Matrix& h, const num::Matrix& p, const num::Matrix& log_p,
                   const TunedLensOptions& opt, SplitMix64& rng, num::LinearMap& best) {
    const num::Index d = h.cols();
    num::Matrix a = num::Matrix::Identity(d, d);
    num::Vector b = num::Vector::Zero(d);
    const Objective full{head, h, p, log_p};

    LayerFit fit;
    fit.initial_kl = full(a, b, nullptr, nullptr);
    if (!std::isfinite(fit.initial_kl)) throw Error("tuned lens: non-finite divergence");
    fit.final_kl = fit.initial_kl;
    best.weights = a;
    best.bias = b;

    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    num::Matrix m_a = num::Matrix::Zero(d, d), v_a = num::Matrix::Zero(d, d);
    num::Vector m_b = num::Vector::Zero(d), v_b = num::Vector::Zero(d);
    const std::size_t n = static_cast<std::size_t>(h.rows());
    const bool minibatch = opt.batch_size > 0 && opt.batch_size < n;
    std::vector<std::size_t> order;
    std::size_t cursor = n;

    // Full-batch steps evaluate the loss of the current iterate alongside its
    // gradient, so iterate t is scored during step t + 1.
    const auto consider = [&](double loss, int iteration, const num::Matrix& wa, const num::Vector& wb) {
        if (!std::isfinite(loss)) throw Error("tuned lens: non-finite divergence");
        if (loss < fit.final_kl) {
            fit.final_kl = loss;
            fit.best_iteration = iteration;
            best.weights = wa;
            best.bias = wb;
        }
    };

    num::Matrix grad_a;
    num::Vector grad_b;
    for (int it = 1; it <= opt.iterations; ++it) {
        if (minibatch) {
            if (cursor + opt.batch_size > n) {
                order = rng.permutation(n);
                cursor = 0;
            }
            const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                                order.begin() + static_cast<std::ptrdiff_t>(cursor + opt.batch_size));
            cursor += opt.batch_size;
            const num::Matrix hb = take_rows(h, rows), pb = take_rows(p, rows), lpb = take_rows(log_p, rows);
            Objective{head, hb, pb, lpb}(a, b, &grad_a, &grad_b);
            if (it > 1) consider(full(a, b, nullptr, nullptr), it - 1, a, b);
        } else {
            const double loss = full(a, b, &grad_a, &grad_b);
            if (it > 1) consider(loss, it - 1, a, b);
        }
        m_a = beta1 * m_a + (1 - beta1) * grad_a;
        v_a = beta2 * v_a + (1 - beta2) * grad_a.cwiseAbs2();
        m_b = beta1 * m_b + (1 - beta1) * grad_b;
        v_b = beta2 * v_b + (1 - beta2) * grad_b.cwiseAbs2();
        const double c1 = 1 - std::pow(beta1, it), c2 = 1 - std::pow(beta2, it);
        a.array() -= opt.learning_rate * (m_a.array() / c1) / ((v_a.array() / c2).sqrt() + adam_eps);
        b.array() -= opt.learning_rate * (m_b.array() / c1) / ((v_b.array() / c2).sqrt() + adam_eps);
    }
    if (opt.iterations > 0) consider(full(a, b, nullptr, nullptr), opt.iterations, a, b);
    return fit;
}

num::Matrix to_matrix(const std::vector<float>& v, num::Index rows, num::Index cols) {
    num::Matrix m(rows, cols);
    for (num::Index r = 0; r < rows; ++r) {
        for (num::Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
    }
    return m;
}

}  // namespace

std::vector<std::vector<double>> lens_distributions(Runner& runner, const std::string& text, const LensOptions& options) {
    const CaptureResult cap = runner.forward_capture(text, CaptureSpec{});
    std::vector<std::vector<double>> out;
    out.reserve(cap.layers.size());
    for (std::size_t slot = 0; slot < cap.layers.size(); ++slot) {
        const int layer = cap.layers[slot];
        out.push_back(softmax(lens_logits(runner, layer, cap.last(layer), options)));
    }
    return out;
}

LensTrace logit_lens(Runner& runner, const std::string& prompt, const std::string& target, const LensOptions& options) {
    if (options.top_k < 1) throw Error("logit lens: top_k must be positive");
    const Tokenization base = runner.tokenize(prompt);
    const std::string full = prompt + target;
    const Tokenization joined = runner.tokenize(full);
    if (target.empty() || joined.size() <= base.size()) throw Error("logit lens: target adds no tokens");
    for (std::size_t i = 0; i < base.size(); ++i) {
        if (base.ids[i] != joined.ids[i]) throw Error("logit lens: target does not tokenize after the prompt");
    }

    LensTrace trace;
    trace.prompt = prompt;
    trace.target = target;
    for (std::size_t t = base.size(); t < joined.size(); ++t) {
        LensStep step;
        step.context = t == base.size() ? prompt : full.substr(0, joined.offsets[t - 1].end);
        step.token = joined.ids[t];
        const auto dists = lens_distributions(runner, step.context, options);
        for (const auto& probs : dists) {
            step.probability.push_back(probs[static_cast<std::size_t>(step.token)]);
            step.rank.push_back(rank_of(probs, step.token));
            step.in_top_k.push_back(step.rank.back() <= options.top_k);
        }
        trace.steps.push_back(std::move(step));
    }
    for (std::size_t l = 0; l < trace.steps.front().probability.size(); ++l) trace.layers.push_back(static_cast<int>(l));
    return trace;
}

void write_lens_csv(std::ostream& out, const std::vector<LensTrace>& traces) {
    out << "prompt,target,step,token,layer,probability,rank,in_top_k\n";
    for (const auto& tr : traces) {
        for (std::size_t s = 0; s < tr.steps.size(); ++s) {
            const LensStep& st = tr.steps[s];
            for (std::size_t l = 0; l < st.probability.size(); ++l) {
                out << fmt::format("{},{},{},{},{},{:.9g},{},{}\n", csv_field(tr.prompt), csv_field(tr.target), s,
                                   st.token, tr.layers[l], st.probability[l], st.rank[l], st.in_top_k[l] ? 1 : 0);
            }
        }
    }
}

TunedLens::TunedLens(int layer_count, int hidden_dim) : hidden_(hidden_dim) {
    if (layer_count < 1 || hidden_dim < 1) throw Error("tuned lens: bad shape");
    maps_.resize(static_cast<std::size_t>(layer_count));
    for (auto& m : maps_) {
        m.weights = num::Matrix::Identity(hidden_dim, hidden_dim);
        m.bias = num::Vector::Zero(hidden_dim);
    }
}

const num::LinearMap& TunedLens::map(int layer) const {
    if (layer < 0 || layer >= layer_count()) throw Error("tuned lens: no translator for layer " + std::to_string(layer));
    return maps_[static_cast<std::size_t>(layer)];
}

void TunedLens::set_map(int layer, num::LinearMap map) {
    if (layer < 0 || layer >= layer_count()) throw Error("tuned lens: no translator for layer " + std::to_string(layer));
    if (map.weights.rows() != hidden_ || map.weights.cols() != hidden_ || map.bias.size() != hidden_) {
        throw Error("tuned lens: translator shape mismatch");
    }
    maps_[static_cast<std::size_t>(layer)] = std::move(map);
}

std::vector<float> TunedLens::translate(int layer, std::span<const float> hidden) const {
    if (hidden.size() != static_cast<std::size_t>(hidden_)) throw Error("tuned lens: dimension mismatch");
    if (layer == layer_count()) return {hidden.begin(), hidden.end()};
    const num::LinearMap& m = map(layer);
    num::Vector x(hidden_);
    for (int i = 0; i < hidden_; ++i) x(i) = hidden[static_cast<std::size_t>(i)];
    const num::Vector y = m.weights * x + m.bias;
    std::vector<float> out(static_cast<std::size_t>(hidden_));
    for (int i = 0; i < hidden_; ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(y(i));
    return out;
}

LensCorpus collect_lens_corpus(Runner& runner, const std::vector<std::string>& prompts) {
    if (prompts.empty()) throw Error("tuned lens: empty corpus");
    const ModelInfo info = runner.info();
    const int layers = info.layer_count;
    const num::Index d = info.hidden_dim;
    std::vector<std::vector<float>> rows(static_cast<std::size_t>(layers + 1));
    std::vector<std::vector<double>> finals;
    CaptureSpec spec;
    spec.positions = PositionMode::all;
    for (const auto& text : prompts) {
        const CaptureResult cap = runner.forward_capture(text, spec);
        for (std::size_t slot = 0; slot < cap.layers.size(); ++slot) {
            auto& dst = rows[static_cast<std::size_t>(cap.layers[slot])];
            for (std::size_t pos = 0; pos < cap.positions.size(); ++pos) {
                const auto r = cap.residual(slot, pos);
                dst.insert(dst.end(), r.begin(), r.end());
            }
        }
        for (std::size_t pos = 0; pos < cap.positions.size(); ++pos) {
            finals.push_back(softmax(runner.unembed(cap.residual(cap.layers.size() - 1, pos), true)));
        }
    }
    LensCorpus corpus;
    const num::Index n = static_cast<num::Index>(finals.size());
    for (const auto& r : rows) corpus.residuals.push_back(to_matrix(r, n, d));
    corpus.final_probs.resize(n, info.vocab_size);
    for (num::Index i = 0; i < n; ++i) {
        for (num::Index v = 0; v < info.vocab_size; ++v) corpus.final_probs(i, v) = finals[static_cast<std::size_t>(i)][static_cast<std::size_t>(v)];
    }
    return corpus;
}

std::vector<double> lens_kl(Runner& runner, const LensCorpus& corpus, const TunedLens* lens) {
    const DenseHead head(runner.head());
    const num::Matrix log_p = safe_log(corpus.final_probs);
    std::vector<double> out;
    const num::Index d = head.weight.cols();
    const int last = static_cast<int>(corpus.residuals.size()) - 1;
    for (int l = 0; l <= last; ++l) {
        num::Matrix a = num::Matrix::Identity(d, d);
        num::Vector b = num::Vector::Zero(d);
        if (lens && l < last) {
            a = lens->map(l).weights;
            b = lens->map(l).bias;
        }
        const Objective obj{head, corpus.residuals[static_cast<std::size_t>(l)], corpus.final_probs, log_p};
        out.push_back(obj(a, b, nullptr, nullptr));
    }
    return out;
}

TunedLens tuned_lens_train(Runner& runner, const LensCorpus& corpus, const TunedLensOptions& options) {
    if (corpus.positions() == 0) throw Error("tuned lens: empty corpus");
    if (corpus.positions() < 100) {
        throw Error("tuned lens: corpus has " + std::to_string(corpus.positions()) + " positions, need at least 100");
    }
    if (options.iterations < 0) throw Error("tuned lens: negative iteration count");
    const ModelInfo info = runner.info();
    const DenseHead head(runner.head());
    const num::Matrix log_p = safe_log(corpus.final_probs);

    TunedLens lens(info.layer_count, info.hidden_dim);
    lens.corpus_id = options.corpus_id;
    lens.iterations = options.iterations;
    lens.seed = options.seed;
    for (int l = 0; l < info.layer_count; ++l) {
        SplitMix64 rng(options.seed + static_cast<std::uint64_t>(l));
        num::LinearMap best;
        LayerFit fit = fit_layer(head, corpus.residuals[static_cast<std::size_t>(l)], corpus.final_probs, log_p, options,
                                 rng, best);
        fit.layer = l;
        lens.set_map(l, std::move(best));
        lens.fits.push_back(fit);
    }
    return lens;
}

TunedLens tuned_lens_train(Runner& runner, const std::vector<std::string>& prompts, const TunedLensOptions& options) {
    return tuned_lens_train(runner, collect_lens_corpus(runner, prompts), options);
}

double attention_entropy(std::span<const float> row) {
    double h = 0.0;
    for (float a : row) {
        if (a > 0.0f) h -= static_cast<double>(a) * std::log(static_cast<double>(a));
    }
    return h;
}

std::vector<AttentionLayer> attention_profile(Runner& runner, const std::vector<PromptInstance>& prompts) {
    const ModelInfo info = runner.info();
    if (!info.supports_attention_capture) throw Error("attention capture not supported by " + info.name);
    if (prompts.empty()) throw Error("attention profile: no prompts");
    std::vector<AttentionLayer> out(static_cast<std::size_t>(info.layer_count));
    for (int l = 0; l < info.layer_count; ++l) out[static_cast<std::size_t>(l)].layer = l + 1;

    CaptureSpec spec;
    spec.capture_attention = true;
    spec.layers = {info.layer_count};
    for (const auto& prompt : prompts) {
        const CaptureResult cap = runner.forward_capture(prompt, spec);
        if (!cap.attention) throw Error("attention profile: backend returned no attention");
        const auto elem = cap.tokens.tokens_of(prompt.element_span);
        const auto attr = cap.tokens.tokens_of(prompt.attribute_span);
        const std::set<std::size_t> named(elem.begin(), elem.end());
        std::set<std::size_t> roles = named;
        roles.insert(attr.begin(), attr.end());
        for (std::size_t l = 0; l < cap.attention->size(); ++l) {
            const auto& row = (*cap.attention)[l];
            AttentionLayer& acc = out[l];
            double others = 0.0;
            std::size_t other_count = 0;
            for (std::size_t t = 0; t < row.size(); ++t) {
                if (named.count(t)) acc.to_element += row[t];
                if (std::find(attr.begin(), attr.end(), t) != attr.end()) acc.to_attribute += row[t];
                if (!roles.count(t)) {
                    others += row[t];
                    ++other_count;
                }
            }
            if (other_count) acc.to_others_mean += others / static_cast<double>(other_count);
            acc.entropy += attention_entropy(row);
        }
    }
    const double n = static_cast<double>(prompts.size());
    for (auto& r : out) {
        r.to_element /= n;
        r.to_attribute /= n;
        r.to_others_mean /= n;
        r.entropy /= n;
    }
    return out;
}

void write_attention_csv(std::ostream& out, const std::string& model, const std::vector<AttentionLayer>& rows) {
    out << "model,layer,attn_to_element,attn_to_attribute,attn_to_others_mean,entropy\n";
    for (const auto& r : rows) {
        out << fmt::format("{},{},{:.9g},{:.9g},{:.9g},{:.9g}\n", csv_field(model), r.layer, r.to_element, r.to_attribute,
                           r.to_others_mean, r.entropy);
    }
}

NumberDistances number_embedding_distances(Runner& runner, int first, int last, int folds, std::uint64_t seed) {
    if (first > last) throw Error("number distances: empty range");
    NumberDistances out;
    for (int n = first; n <= last; ++n) {
        const Tokenization tok = runner.tokenize(std::to_string(n));
        std::vector<int> ids;
        for (std::size_t t = 0; t < tok.size(); ++t) {
            if (tok.offsets[t].size() > 0) ids.push_back(tok.ids[t]);
        }
        if (ids.size() == 1) {
            out.numbers.push_back(n);
            out.token_ids.push_back(ids.front());
        } else {
            out.skipped.push_back(n);
        }
    }
    const num::Matrix pinv = runner.vocab_head_pinv();
    const num::Index k = static_cast<num::Index>(out.numbers.size());
    out.vectors.resize(k, pinv.rows());
    for (num::Index i = 0; i < k; ++i) out.vectors.row(i) = pinv.col(out.token_ids[static_cast<std::size_t>(i)]).transpose();
    out.distances.resize(k, k);
    for (num::Index i = 0; i < k; ++i) {
        for (num::Index j = 0; j < k; ++j) out.distances(i, j) = (out.vectors.row(i) - out.vectors.row(j)).norm();
    }

    out.cv_r2 = std::numeric_limits<double>::quiet_NaN();
    if (k < 3 || folds < 2) return out;
    const std::size_t nfold = std::min<std::size_t>(static_cast<std::size_t>(folds), static_cast<std::size_t>(k));
    std::vector<double> truth(out.numbers.begin(), out.numbers.end());
    std::vector<double> predicted(truth.size());
    for (const auto& test : num::kfold_partition(static_cast<std::size_t>(k), nfold, seed)) {
        std::vector<std::size_t> train;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (std::find(test.begin(), test.end(), i) == test.end()) train.push_back(i);
        }
        num::Matrix y(static_cast<num::Index>(train.size()), 1);
        for (std::size_t i = 0; i < train.size(); ++i) y(static_cast<num::Index>(i), 0) = truth[train[i]];
        const num::LinearMap fit = num::least_squares(take_rows(out.vectors, train), y);
        const num::Matrix pred = fit.apply_rows(take_rows(out.vectors, test));
        std::vector<double> t_true, t_pred;
        for (std::size_t i = 0; i < test.size(); ++i) {
            predicted[test[i]] = pred(static_cast<num::Index>(i), 0);
            t_true.push_back(truth[test[i]]);
            t_pred.push_back(predicted[test[i]]);
        }
        out.fold_r2.push_back(test.size() >= 2 ? num::r2(t_true, t_pred) : std::numeric_limits<double>::quiet_NaN());
    }
    out.cv_r2 = num::r2(truth, predicted);
    return out;
}

ActivationStore distance_store(const ModelInfo& info, const NumberDistances& distances) {
    ActivationStore store;
    store.model = to_json(info);
    const std::size_t k = distances.numbers.size();
    store.shape = {k, k};
    store.axes = {"number", "number"};
    for (std::size_t i = 0; i < k; ++i) {
        store.prompts.push_back({{"number", distances.numbers[i]}, {"token", distances.token_ids[i]}});
    }
    store.data.reserve(k * k);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            store.data.push_back(static_cast<float>(distances.distances(static_cast<num::Index>(i), static_cast<num::Index>(j))));
        }
    }
    store.validate();
    return store;
}

}  // namespace lab
