#include "lab/probes.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "lab/error.hpp"
#include "lab/rng.hpp"

namespace lab {
namespace {

num::Matrix take_rows(const num::Matrix& m, const std::vector<std::size_t>& rows) {
    num::Matrix out(static_cast<num::Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<num::Index>(r)) = m.row(static_cast<num::Index>(rows[r]));
    return out;
}

int store_layer_count(const ActivationStore& store) {
    if (store.shape.size() != 4) throw Error("expected a (prompt, layer, position, hidden) store");
    if (store.model.is_object() && store.model.contains("layer_count")) return store.model.at("layer_count").get<int>();
    return static_cast<int>(store.shape[1]) - 1;
}

std::string store_model_name(const ActivationStore& store) {
    if (store.model.is_object() && store.model.contains("name")) return store.model.at("name").get<std::string>();
    return "unknown";
}

void set_ci(LayerCurve& c, const std::vector<double>& samples) {
    const num::MeanInterval ci = num::mean_ci(samples);
    c.scores.push_back(ci.mean);
    c.ci_low.push_back(ci.low);
    c.ci_high.push_back(ci.high);
}

}  // namespace

std::string_view probe_kind_name(ProbeKind k) { return k == ProbeKind::regression ? "regression" : "classification"; }

ProbeResult probe_layer(const num::Matrix& acts, const std::vector<double>& labels, const std::vector<bool>& mask,
                        ProbeKind kind, const ProbeOptions& options) {
    if (labels.size() != static_cast<std::size_t>(acts.rows()) || mask.size() != labels.size()) {
        throw Error("probe_layer: activations, labels and mask disagree in length");
    }
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) keep.push_back(i);
    }
    const std::size_t n = keep.size();
    if (n < 10) throw Error("probe_layer: need at least 10 labelled rows, got " + std::to_string(n));
    if (options.folds < 2 || n < static_cast<std::size_t>(options.folds)) throw Error("probe_layer: fewer rows than folds");

    const num::Matrix x = take_rows(acts, keep);
    ProbeResult result;
    result.kind = kind;
    const auto folds = num::kfold_partition(n, static_cast<std::size_t>(options.folds), options.seed);

    auto fold_rows = [&](std::size_t f, bool train) {
        std::vector<std::size_t> rows;
        for (std::size_t g = 0; g < folds.size(); ++g) {
            if ((g != f) == train) rows.insert(rows.end(), folds[g].begin(), folds[g].end());
        }
        std::sort(rows.begin(), rows.end());
        return rows;
    };

    if (kind == ProbeKind::regression) {
        num::Vector y(static_cast<num::Index>(n));
        for (std::size_t i = 0; i < n; ++i) y(static_cast<num::Index>(i)) = labels[keep[i]];
        num::Vector residuals(static_cast<num::Index>(n));
        for (std::size_t f = 0; f < folds.size(); ++f) {
            const auto train = fold_rows(f, true);
            const auto& test = folds[f];
            num::Vector y_train(static_cast<num::Index>(train.size()));
            for (std::size_t i = 0; i < train.size(); ++i) y_train(static_cast<num::Index>(i)) = y(static_cast<num::Index>(train[i]));
            num::SvrOptions svr = options.svr;
            svr.seed = options.seed + f;
            const num::LinearProbe probe = num::svr_fit(take_rows(x, train), y_train, svr);
            const num::Matrix predicted = probe.predict(take_rows(x, test));
            std::vector<double> truth, guess;
            for (std::size_t i = 0; i < test.size(); ++i) {
                truth.push_back(y(static_cast<num::Index>(test[i])));
                guess.push_back(predicted(static_cast<num::Index>(i), 0));
                residuals(static_cast<num::Index>(test[i])) = truth.back() - guess.back();
            }
            result.cv_scores.push_back(num::r2(truth, guess));
        }
        num::SvrOptions svr = options.svr;
        svr.seed = options.seed;
        result.probe = num::svr_fit(x, y, svr);
        result.residuals = residuals;
    } else {
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(std::lround(labels[keep[i]]));
        result.classes = y;
        std::sort(result.classes.begin(), result.classes.end());
        result.classes.erase(std::unique(result.classes.begin(), result.classes.end()), result.classes.end());
        if (result.classes.size() < 2) throw Error("probe_layer: all labels belong to one class");

        result.out_of_fold_predictions.assign(n, 0);
        for (std::size_t f = 0; f < folds.size(); ++f) {
            const auto train = fold_rows(f, true);
            const auto& test = folds[f];
            std::vector<int> y_train;
            for (std::size_t r : train) y_train.push_back(y[r]);
            num::SvmOptions svm = options.svm;
            svm.seed = options.seed + f;
            const num::SvmModel model = num::svm_fit(take_rows(x, train), y_train, svm);
            const std::vector<int> predicted = model.predict(take_rows(x, test));
            std::vector<int> truth;
            for (std::size_t i = 0; i < test.size(); ++i) {
                truth.push_back(y[test[i]]);
                result.out_of_fold_predictions[test[i]] = predicted[i];
            }
            result.cv_scores.push_back(num::accuracy(truth, predicted));
        }
        result.confusion = num::confusion_matrix(y, result.out_of_fold_predictions, result.classes);
        result.pooled_accuracy = static_cast<double>(result.confusion->trace()) / static_cast<double>(n);
        num::SvmOptions svm = options.svm;
        svm.seed = options.seed;
        result.probe = num::svm_fit(x, y, svm).probe;
    }
    result.mean_score = num::mean(result.cv_scores);
    return result;
}

void LayerCurve::validate() const {
    const std::size_t n = layers.size();
    if (depths.size() != n || scores.size() != n || ci_low.size() != n || ci_high.size() != n) {
        throw Error("layer curve '" + id + "': column lengths differ");
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (!(depths[i] > depths[i - 1])) throw Error("layer curve '" + id + "': depths not strictly increasing");
    }
}

AttributeColumn store_labels(const ActivationStore& store, const ElementTable& table, Attribute attr) {
    const AttributeColumn column = attribute_values(table, attr);
    AttributeColumn out;
    for (const auto& p : store.prompts) {
        const int i = p.at("i").get<int>();
        if (i < 0 || static_cast<std::size_t>(i) >= column.values.size()) throw Error("store prompt has element index out of range");
        out.values.push_back(column.values[static_cast<std::size_t>(i)]);
        out.present.push_back(column.present[static_cast<std::size_t>(i)]);
    }
    return out;
}

ProbeSweep probe_sweep(const ActivationStore& store, const ElementTable& table, Attribute attr, ProbeKind kind,
                       const std::string& condition, const ProbeOptions& options) {
    const int layer_count = store_layer_count(store);
    const AttributeColumn labels = store_labels(store, table, attr);

    // Random baseline: labels permuted among the labelled rows.
    std::vector<std::size_t> labelled;
    for (std::size_t i = 0; i < labels.present.size(); ++i) {
        if (labels.present[i]) labelled.push_back(i);
    }
    std::vector<double> shuffled = labels.values;
    SplitMix64 rng(options.seed ^ 0xa5a5a5a5ULL);
    const auto perm = rng.permutation(labelled.size());
    for (std::size_t k = 0; k < labelled.size(); ++k) shuffled[labelled[k]] = labels.values[labelled[perm[k]]];

    ProbeSweep sweep;
    const std::string model = store_model_name(store);
    for (LayerCurve* c : {&sweep.curve, &sweep.random_baseline}) {
        c->model = model;
        c->id = std::string(attribute_id(attr));
    }
    sweep.curve.condition = condition;
    sweep.random_baseline.condition = "random";

    const std::size_t layers = store.shape[1];
    for (std::size_t l = 0; l < layers; ++l) {
        const num::Matrix acts = store_slice(store, l);
        ProbeResult r = probe_layer(acts, labels.values, labels.present, kind, options);
        r.layer = static_cast<int>(l);
        r.attribute = attr;
        const ProbeResult baseline = probe_layer(acts, shuffled, labels.present, kind, options);
        const double depth = static_cast<double>(l) / layer_count;
        for (LayerCurve* c : {&sweep.curve, &sweep.random_baseline}) {
            c->layers.push_back(static_cast<int>(l));
            c->depths.push_back(depth);
        }
        set_ci(sweep.curve, r.cv_scores);
        set_ci(sweep.random_baseline, baseline.cv_scores);
        sweep.results.push_back(std::move(r));
    }
    return sweep;
}

LayerCurve difference(const LayerCurve& a, const LayerCurve& b) {
    if (a.depths != b.depths) throw Error("difference: curves are on different depth grids");
    LayerCurve out;
    out.model = a.model;
    out.id = a.id;
    out.condition = a.condition + "-" + b.condition;
    out.layers = a.layers;
    out.depths = a.depths;
    for (std::size_t i = 0; i < a.scores.size(); ++i) {
        const double d = a.scores[i] - b.scores[i];
        out.scores.push_back(d);
        out.ci_low.push_back(d);
        out.ci_high.push_back(d);
    }
    return out;
}

LayerCurve delta_curve(const std::vector<LayerCurve>& a, const std::vector<LayerCurve>& b, double level) {
    if (a.empty() || a.size() != b.size()) throw Error("delta_curve: need matching, non-empty curve lists");
    std::vector<LayerCurve> deltas;
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (a[j].depths != a.front().depths) throw Error("delta_curve: curves are on different depth grids");
        deltas.push_back(difference(a[j], b[j]));
    }
    LayerCurve out;
    out.model = a.front().model;
    out.id = "mean";
    out.condition = deltas.front().condition;
    out.layers = a.front().layers;
    out.depths = a.front().depths;
    for (std::size_t i = 0; i < out.depths.size(); ++i) {
        std::vector<double> values;
        for (const auto& d : deltas) values.push_back(d.scores[i]);
        const num::MeanInterval ci = num::mean_ci(values, level);
        out.scores.push_back(ci.mean);
        out.ci_low.push_back(ci.low);
        out.ci_high.push_back(ci.high);
    }
    return out;
}

std::vector<TrendRow> trend_analysis(const std::vector<LayerCurve>& curves, double lo, double hi, double alpha) {
    if (!(lo <= hi)) throw Error("trend_analysis: empty depth window");
    std::vector<TrendRow> rows;
    std::vector<double> p;
    for (const auto& c : curves) {
        std::vector<double> series;
        for (std::size_t i = 0; i < c.depths.size(); ++i) {
            if (c.depths[i] >= lo - 1e-12 && c.depths[i] <= hi + 1e-12) series.push_back(c.scores[i]);
        }
        if (series.size() < 4) {
            throw Error(fmt::format("trend_analysis: curve '{}' has {} depths in [{}, {}], need at least 4", c.id,
                                    series.size(), lo, hi));
        }
        rows.push_back({c.model + ":" + c.id, num::mann_kendall(series)});
        p.push_back(rows.back().result.p_value);
    }
    const std::vector<bool> flags = num::bh_fdr(p, alpha);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].result.significant_after_fdr = flags[i];
    return rows;
}

IndirectRecallResult indirect_recall_experiment(const ActivationStore& matching,
                                                const std::vector<NonMatchingInput>& non_matching,
                                                const ActivationStore& no_mention, const ElementTable& table,
                                                Attribute target, const ProbeOptions& options, bool force) {
    if (non_matching.empty()) throw Error("indirect recall: no non-matching attribute given");
    IndirectRecallResult out;
    for (const auto& input : non_matching) {
        if (input.store == nullptr) throw Error("indirect recall: missing store");
        if (input.prompted == target) throw Error("indirect recall: non-matching attribute equals the target");
        try {
            out.screens.push_back(screen_pair(table, target, input.prompted));
        } catch (const std::exception& e) {
            if (!force) throw Error("indirect recall: pair " + pair_id(target, input.prompted) + " cannot be screened: " + e.what());
            continue;
        }
        const auto& s = out.screens.back();
        if (!s.passes && !force) {
            throw Error(fmt::format("indirect recall: pair {} fails screening (|r|={:.4f}, |rho|={:.4f}, R2={:.4f}); set force to override",
                                    pair_id(target, input.prompted), s.pearson_abs, s.spearman_abs, s.linear_r2));
        }
    }

    ProbeOptions opts = options;
    out.matching = probe_sweep(matching, table, target, ProbeKind::regression, "matching", opts).curve;
    out.no_mention = probe_sweep(no_mention, table, target, ProbeKind::regression, "no_mention", opts).curve;
    for (const auto& input : non_matching) {
        LayerCurve c = probe_sweep(*input.store, table, target, ProbeKind::regression, "non_matching", opts).curve;
        c.id = pair_id(target, input.prompted);
        if (c.depths != out.matching.depths) throw Error("indirect recall: stores cover different layers");
        out.non_matching_pairs.push_back(std::move(c));
    }

    if (out.non_matching_pairs.size() == 1) {
        out.non_matching = out.non_matching_pairs.front();
    } else {
        const auto& first = out.non_matching_pairs.front();
        out.non_matching.model = first.model;
        out.non_matching.layers = first.layers;
        out.non_matching.depths = first.depths;
        for (std::size_t i = 0; i < first.depths.size(); ++i) {
            std::vector<double> values;
            for (const auto& c : out.non_matching_pairs) values.push_back(c.scores[i]);
            set_ci(out.non_matching, values);
        }
    }
    out.non_matching.id = std::string(attribute_id(target));
    out.non_matching.condition = "non_matching";
    return out;
}

LayerCurve representation_map(const ActivationStore& from, const ActivationStore& to, const RepMapOptions& options) {
    const int layer_count = store_layer_count(from);
    if (from.shape != to.shape) throw Error("representation_map: stores have different shapes");
    for (std::size_t i = 0; i < from.prompts.size(); ++i) {
        if (from.prompts[i].at("i") != to.prompts[i].at("i")) throw Error("representation_map: stores list different elements");
    }
    const std::size_t n = from.shape[0];
    if (n < static_cast<std::size_t>(options.folds)) throw Error("representation_map: fewer rows than folds");
    const auto folds = num::kfold_partition(n, static_cast<std::size_t>(options.folds), options.seed);

    LayerCurve curve;
    curve.model = store_model_name(from);
    curve.condition = "rep_map";
    for (std::size_t l = 0; l < from.shape[1]; ++l) {
        const num::Matrix x = store_slice(from, l);
        const num::Matrix y = store_slice(to, l);
        std::vector<double> scores;
        for (std::size_t f = 0; f < folds.size(); ++f) {
            std::vector<std::size_t> train;
            for (std::size_t g = 0; g < folds.size(); ++g) {
                if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
            }
            std::sort(train.begin(), train.end());
            // A held-out target identical in every row (e.g. the embedding
            // of a shared final token) has no variance; R^2 is undefined there.
            const num::Matrix y_test = take_rows(y, folds[f]);
            if ((y_test.rowwise() - y_test.row(0)).cwiseAbs().maxCoeff() == 0.0) continue;
            const num::Matrix x_train = take_rows(x, train), y_train = take_rows(y, train);
            const auto k_for = [&](const num::Matrix& m) {
                return std::min<num::Index>({static_cast<num::Index>(options.pca_dim), m.cols(), m.rows() - 1});
            };
            const num::PcaModel px = num::pca_drop_negligible(num::pca_fit(x_train, k_for(x_train)));
            const num::PcaModel py = num::pca_drop_negligible(num::pca_fit(y_train, k_for(y_train)));
            const num::LinearMap map = num::least_squares(num::pca_transform(px, x_train), num::pca_transform(py, y_train));
            const num::Matrix predicted = map.apply_rows(num::pca_transform(px, take_rows(x, folds[f])));
            scores.push_back(num::r2_multi(num::pca_transform(py, y_test), predicted));
        }
        if (scores.empty()) scores.push_back(std::numeric_limits<double>::quiet_NaN());
        curve.layers.push_back(static_cast<int>(l));
        curve.depths.push_back(static_cast<double>(l) / layer_count);
        set_ci(curve, scores);
    }
    return curve;
}

std::vector<SimilarityRow> probe_weight_similarity(const std::vector<ProbeResult>& a, const std::vector<ProbeResult>& b,
                                                   int layer_count, double level) {
    if (a.size() != b.size() || a.empty()) throw Error("probe_weight_similarity: need matching, non-empty probe lists");
    if (layer_count < 1) throw Error("probe_weight_similarity: layer_count must be >= 1");
    std::vector<SimilarityRow> rows;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].layer != b[i].layer) throw Error("probe_weight_similarity: layer mismatch");
        if (a[i].kind != ProbeKind::regression || b[i].kind != ProbeKind::regression) {
            throw Error("probe_weight_similarity: regression probes required");
        }
        const num::Vector wa = a[i].probe.standardized.weights.row(0).transpose();
        const num::Vector wb = b[i].probe.standardized.weights.row(0).transpose();
        if (wa.size() != wb.size()) throw Error("probe_weight_similarity: weight dimensions differ");
        const double na = wa.norm(), nb = wb.norm();
        if (na == 0.0 || nb == 0.0) throw Error("probe_weight_similarity: zero-norm weight vector at layer " + std::to_string(a[i].layer));
        SimilarityRow row;
        row.layer = a[i].layer;
        row.depth = static_cast<double>(row.layer) / layer_count;
        row.cosine = wa.dot(wb) / (na * nb);
        row.half_width = num::random_cosine_band(static_cast<std::size_t>(wa.size()), level, 0).half_width;
        row.outside_band = std::abs(row.cosine) > row.half_width;
        rows.push_back(row);
    }
    return rows;
}

void write_curves_csv(std::ostream& out, const std::vector<LayerCurve>& curves) {
    out << "model,attribute_or_pair,condition,layer,depth,score,ci_low,ci_high\n";
    for (const auto& c : curves) {
        c.validate();
        for (std::size_t i = 0; i < c.layers.size(); ++i) {
            out << fmt::format("{},{},{},{},{},{},{},{}\n", c.model, c.id, c.condition, c.layers[i], c.depths[i], c.scores[i],
                               c.ci_low[i], c.ci_high[i]);
        }
    }
}

}  // namespace lab
