#include "lab/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "lab/activation_store.hpp"
#include "lab/config.hpp"
#include "lab/encoding.hpp"
#include "lab/error.hpp"
#include "lab/geometry.hpp"
#include "lab/lenses.hpp"
#include "lab/planted.hpp"
#include "lab/probes.hpp"
#include "lab/rng.hpp"
#include "lab/svg.hpp"
#include "lab/toy_model.hpp"
#include "lab/tsne.hpp"
#include "lab/wire.hpp"

#ifndef LAB_VERSION
#define LAB_VERSION "0.0.0"
#endif

namespace lab {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string num_text(double v) { return std::isfinite(v) ? fmt::format("{:.9g}", v) : std::string("nan"); }

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

class DirLock {
  public:
    explicit DirLock(fs::path path) : path_(std::move(path)) {
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (!f) throw Error("output directory is locked (remove " + path_.string() + " if no run is active)");
        std::fclose(f);
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

  private:
    fs::path path_;
};

class Artifacts {
  public:
    explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}

    void write(const std::string& name, const std::string& content) {
        std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + (dir_ / name).string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("write failed for " + (dir_ / name).string());
        record(name, content);
    }
    void json_file(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }
    void store(const std::string& name, const ActivationStore& s) {
        const auto bytes = store_serialize(s);
        write(name, std::string(bytes.begin(), bytes.end()));
    }

    json listing() const {
        json out = json::array();
        for (const auto& [name, entry] : entries_) out.push_back(entry);
        return out;
    }

  private:
    fs::path dir_;
    std::map<std::string, json> entries_;

    void record(const std::string& name, const std::string& content) {
        entries_[name] = {{"path", name}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}};
    }
};

// Shared state for one run.
struct Context {
    const json& cfg;
    const json& params;
    const ElementTable& table;
    Runner* runner = nullptr;
    Artifacts& out;
    std::uint64_t seed = 0;
    std::vector<std::string> notes;
    bool partial = false;

    void flag(const std::string& note) {
        partial = true;
        notes.push_back(note);
    }
};

std::vector<int> ints(const json& j) { return j.get<std::vector<int>>(); }

std::vector<Attribute> attrs(const json& j) {
    std::vector<Attribute> out;
    for (const auto& a : j) out.push_back(parse_attribute(a.get<std::string>()));
    return out;
}

std::vector<std::pair<Attribute, Attribute>> pairs_of(const json& j) {
    if (j.empty()) return tabled_pairs();
    std::vector<std::pair<Attribute, Attribute>> out;
    for (const auto& p : j) out.push_back(parse_pair(p.get<std::string>()));
    return out;
}

std::vector<PromptInstance> dataset(const ElementTable& table, std::vector<Attribute> a, PromptStyle style,
                                    std::vector<int> templates, std::vector<int> elements = {}) {
    DatasetRequest req;
    req.attributes = std::move(a);
    req.styles = {style};
    req.atomic_numbers = elements.empty() ? atomic_number_range() : std::move(elements);
    req.template_ids = std::move(templates);
    return generate_dataset(table, req);
}

ActivationStore capture_store(Runner& runner, const std::vector<PromptInstance>& prompts, bool at_element = false) {
    std::vector<CaptureResult> caps;
    caps.reserve(prompts.size());
    for (const auto& p : prompts) {
        CaptureSpec spec;
        if (at_element) {
            spec.positions = PositionMode::spans;
            spec.spans = {p.element_span};
        }
        caps.push_back(runner.forward_capture(p, spec));
    }
    return make_store(runner.info(), prompts, caps);
}

std::vector<double> depths_of(const LayerCurve& c) { return c.depths; }

svg::Line curve_line(const LayerCurve& c, const std::string& label, bool dashed = false) {
    svg::Line l;
    l.label = label;
    l.x = depths_of(c);
    l.y = c.scores;
    l.lo = c.ci_low;
    l.hi = c.ci_high;
    l.dashed = dashed;
    return l;
}

std::string trend_csv(const std::vector<TrendRow>& rows) {
    std::string s = "id,n,s,tau,p_value,significant_after_fdr\n";
    for (const auto& r : rows) {
        s += fmt::format("{},{},{},{},{},{}\n", csv_field(r.id), r.result.n, r.result.s, num_text(r.result.tau),
                         num_text(r.result.p_value), r.result.significant_after_fdr ? 1 : 0);
    }
    return s;
}

std::string curves_csv(const std::vector<LayerCurve>& curves) {
    std::ostringstream s;
    write_curves_csv(s, curves);
    return s.str();
}

void run_pair_screen(Context& ctx) {
    std::string csv = "pair,attribute_a,attribute_b,complete_pairs,pearson_abs,spearman_abs,linear_r2,passes\n";
    json rows = json::array();
    for (const auto& [a, b] : pairs_of(ctx.params.at("pairs"))) {
        const PairScreenReport r = screen_pair(ctx.table, a, b);
        csv += fmt::format("{},{},{},{},{},{},{},{}\n", pair_id(a, b), attribute_id(a), attribute_id(b), r.complete_pairs,
                           num_text(r.pearson_abs), num_text(r.spearman_abs), num_text(r.linear_r2), r.passes ? 1 : 0);
        rows.push_back({{"pair", pair_id(a, b)},
                        {"complete_pairs", r.complete_pairs},
                        {"pearson_abs", r.pearson_abs},
                        {"spearman_abs", r.spearman_abs},
                        {"linear_r2", r.linear_r2},
                        {"passes", r.passes}});
    }
    ctx.out.write("pair_screen.csv", csv);
    ctx.out.json_file("pair_screen.json", {{"thresholds", {{"pearson_abs", kScreenCorrelationLimit},
                                                          {"spearman_abs", kScreenCorrelationLimit},
                                                          {"linear_r2", kScreenR2Limit}}},
                                          {"pairs", rows}});
}

void run_tsne(Context& ctx) {
    Runner& runner = *ctx.runner;
    const ModelInfo info = runner.info();
    const Attribute attr = parse_attribute(ctx.params.at("attribute").get<std::string>());
    const PromptStyle style = parse_style(ctx.params.at("style").get<std::string>());
    int layer = ctx.params.at("layer").get<int>();
    if (layer < 0) layer = static_cast<int>(std::lround(0.5 * info.layer_count));
    if (layer > info.layer_count) throw Error(fmt::format("tsne: layer {} beyond L = {}", layer, info.layer_count));

    const auto prompts = dataset(ctx.table, {attr}, style, {});
    std::vector<CaptureResult> caps;
    CaptureSpec spec;
    spec.layers = {layer};
    for (const auto& p : prompts) caps.push_back(runner.forward_capture(p, spec));
    const ActivationStore store = make_store(info, prompts, caps);
    const num::Matrix x = store_slice(store, 0);
    const num::Index k = std::min<num::Index>({ctx.params.at("pca_dim").get<num::Index>(), x.rows() - 1, x.cols()});
    const num::PcaModel pca = num::pca_drop_negligible(num::pca_fit(x, k));
    num::TsneOptions topt;
    topt.perplexity = ctx.params.at("perplexity").get<double>();
    topt.iterations = ctx.params.at("iterations").get<int>();
    topt.seed = ctx.seed;
    const num::Matrix y = num::tsne_2d(num::pca_transform(pca, x), topt);

    std::string csv = "row,symbol,template,x,y,atomic_number,group,period,category\n";
    std::vector<double> zs, gs, ps, cs;
    std::vector<int> group_labels, period_labels, category_labels;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        const ElementRecord& e = ctx.table[static_cast<std::size_t>(prompts[i].element_index)];
        csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", i, e.symbol, prompts[i].template_index,
                           num_text(y(static_cast<num::Index>(i), 0)), num_text(y(static_cast<num::Index>(i), 1)),
                           e.atomic_number, e.group, e.period, category_name(e.category));
        zs.push_back(e.atomic_number);
        gs.push_back(e.group);
        ps.push_back(e.period);
        cs.push_back(static_cast<double>(e.category));
        group_labels.push_back(e.group);
        period_labels.push_back(e.period);
        category_labels.push_back(static_cast<int>(e.category));
    }
    ctx.out.write("tsne.csv", csv);
    ctx.out.json_file("tsne_summary.json",
                      {{"layer", layer},
                       {"points", prompts.size()},
                       {"pca_components", pca.output_dim()},
                       {"silhouette", {{"group", num::silhouette(y, group_labels)},
                                       {"period", num::silhouette(y, period_labels)},
                                       {"category", num::silhouette(y, category_labels)}}}});

    std::vector<svg::Panel> panels;
    const std::vector<std::pair<std::string, std::vector<double>*>> colourings = {
        {"atomic number", &zs}, {"group", &gs}, {"period", &ps}, {"category", &cs}};
    for (const auto& [name, values] : colourings) {
        svg::Panel p;
        p.title = fmt::format("layer {} coloured by {}", layer, name);
        p.x_label = "t-SNE 1";
        p.y_label = "t-SNE 2";
        svg::Points pts;
        for (num::Index i = 0; i < y.rows(); ++i) {
            pts.x.push_back(y(i, 0));
            pts.y.push_back(y(i, 1));
        }
        pts.value = *values;
        p.points.push_back(std::move(pts));
        panels.push_back(std::move(p));
    }
    ctx.out.write("tsne.svg", svg::render(panels, 2));
}

GeometrySpace space_from(Context& ctx) {
    return build_space(ctx.params.at("space").get<int>(), ctx.table, ctx.seed);
}

InterventionOptions intervention_options(const json& params) {
    InterventionOptions o;
    if (params.contains("layer")) o.layer = params.at("layer").get<int>();
    o.pca_dim = params.at("pca_dim").get<int>();
    o.max_new_tokens = params.at("max_new_tokens").get<int>();
    return o;
}

void run_intervention_experiment(Context& ctx) {
    const GeometrySpace space = space_from(ctx);
    const InterventionResult r = run_intervention(*ctx.runner, ctx.table, space, intervention_options(ctx.params));
    std::ostringstream lines;
    write_intervention_jsonl(lines, r);
    ctx.out.write("intervention.jsonl", lines.str());
    json summary = intervention_summary(r);
    summary["space"] = r.space_id;
    summary["layer"] = r.layer;
    summary["frac_within_2"] = r.frac_within_2;
    ctx.out.json_file("summary.json", summary);
    ctx.out.write("summary.csv",
                  fmt::format("space,layer,R2,Pearson Correlation,Percentage of Abs. err <= 2,MAE,hits\n{},{},{},{},{},{},{}\n",
                              r.space_id, r.layer, num_text(r.r2), num_text(r.pearson), num_text(100.0 * r.frac_within_2),
                              num_text(r.mae), r.hits));
    int failures = 0;
    for (const auto& o : r.outcomes) failures += o.error.empty() ? 0 : 1;
    if (failures > 0) ctx.flag(fmt::format("{} of {} elements failed in the runner", failures, r.outcomes.size()));

    svg::Panel p;
    p.title = fmt::format("space {} patched at layer {}", r.space_id, r.layer);
    p.x_label = "true atomic number";
    p.y_label = "generated number";
    svg::Points pts;
    for (const auto& o : r.outcomes) {
        if (!o.parsed) continue;
        pts.x.push_back(o.target);
        pts.y.push_back(*o.parsed);
    }
    p.points.push_back(std::move(pts));
    svg::Line diag;
    diag.x = {1, 50};
    diag.y = {1, 50};
    diag.dashed = true;
    p.lines.push_back(diag);
    ctx.out.write("intervention.svg", svg::render({p}, 1));
}

void run_layer_sweep(Context& ctx) {
    const GeometrySpace space = space_from(ctx);
    std::vector<int> layers = ints(ctx.params.at("layers"));
    if (layers.empty()) {
        for (int l = 0; l <= ctx.runner->info().layer_count; ++l) layers.push_back(l);
    }
    const auto rows = layer_sweep(*ctx.runner, ctx.table, space, layers, intervention_options(ctx.params));
    std::string csv = "layer,mae,min_abs_error,max_abs_error,frac_within_2\n";
    svg::Line mae{"MAE", {}, {}, {}, {}, false}, within{"fraction within 2", {}, {}, {}, {}, false};
    for (const auto& r : rows) {
        csv += fmt::format("{},{},{},{},{}\n", r.layer, num_text(r.mae), r.min_abs_error, r.max_abs_error,
                           num_text(r.frac_within_2));
        mae.x.push_back(r.layer);
        mae.y.push_back(r.mae);
        within.x.push_back(r.layer);
        within.y.push_back(r.frac_within_2);
    }
    ctx.out.write("layer_sweep.csv", csv);
    svg::Panel a{fmt::format("space {} MAE by patch layer", space.id), "layer", "MAE", {mae}, {}, {}, {}, {}};
    svg::Panel b{"fraction within 2", "layer", "fraction", {within}, {}, {}, {}, {}};
    ctx.out.write("layer_sweep.svg", svg::render({a, b}, 2));
}

ProbeOptions probe_options(Context& ctx) {
    ProbeOptions o;
    o.folds = ctx.params.at("folds").get<int>();
    o.seed = ctx.seed;
    o.svr.seed = ctx.seed;
    o.svm.seed = ctx.seed;
    return o;
}

std::size_t best_slot(const LayerCurve& c) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < c.scores.size(); ++i) {
        if (c.scores[i] > c.scores[best]) best = i;
    }
    return best;
}

void run_probe_direct(Context& ctx) {
    const PromptStyle style = parse_style(ctx.params.at("style").get<std::string>());
    const auto templates = ints(ctx.params.at("templates"));
    const ProbeOptions opts = probe_options(ctx);
    std::map<Attribute, ActivationStore> stores;
    const auto store_for = [&](Attribute a) -> const ActivationStore& {
        auto it = stores.find(a);
        if (it == stores.end()) it = stores.emplace(a, capture_store(*ctx.runner, dataset(ctx.table, {a}, style, templates))).first;
        return it->second;
    };

    std::vector<LayerCurve> curves;
    std::string best_csv = "attribute,kind,best_layer,best_depth,score\n";
    std::vector<svg::Panel> panels(2);
    panels[0] = {"regression R2 by depth", "depth", "R2", {}, {}, {}, {}, {}};
    panels[1] = {"classification accuracy by depth", "depth", "accuracy", {}, {}, {}, {}, {}};
    std::vector<svg::Panel> diagnostics;

    for (ProbeKind kind : {ProbeKind::regression, ProbeKind::classification}) {
        const json& list = ctx.params.at(kind == ProbeKind::regression ? "regression" : "classification");
        for (Attribute a : attrs(list)) {
            const ActivationStore& store = store_for(a);
            ProbeSweep sw = probe_sweep(store, ctx.table, a, kind, std::string(style_name(style)), opts);
            const std::size_t b = best_slot(sw.curve);
            const ProbeResult& best = sw.results[b];
            const std::string aid(attribute_id(a));
            const std::string kname(probe_kind_name(kind));
            best_csv += fmt::format("{},{},{},{},{}\n", aid, kname, best.layer, num_text(sw.curve.depths[b]),
                                    num_text(sw.curve.scores[b]));
            panels[kind == ProbeKind::regression ? 0 : 1].lines.push_back(curve_line(sw.curve, aid));

            const AttributeColumn labels = store_labels(store, ctx.table, a);
            if (kind == ProbeKind::classification && best.confusion) {
                std::string cm = "truth";
                for (int c : best.classes) cm += fmt::format(",{}", c);
                cm += "\n";
                for (num::Index r = 0; r < best.confusion->rows(); ++r) {
                    cm += fmt::format("{}", best.classes[static_cast<std::size_t>(r)]);
                    for (num::Index c = 0; c < best.confusion->cols(); ++c) cm += fmt::format(",{}", (*best.confusion)(r, c));
                    cm += "\n";
                }
                ctx.out.write(fmt::format("confusion_{}_layer{}.csv", aid, best.layer), cm);
            }
            if (kind == ProbeKind::regression && best.residuals) {
                std::string pred = "row,truth,predicted\n";
                svg::Panel diag{fmt::format("{} at layer {}", aid, best.layer), "truth", "out-of-fold prediction", {}, {}, {}, {}, {}};
                svg::Points pts;
                num::Index k = 0;
                for (std::size_t i = 0; i < labels.values.size(); ++i) {
                    if (!labels.present[i]) continue;
                    const double truth = labels.values[i];
                    const double p = truth - (*best.residuals)(k++);
                    pred += fmt::format("{},{},{}\n", i, num_text(truth), num_text(p));
                    pts.x.push_back(truth);
                    pts.y.push_back(p);
                }
                diag.points.push_back(std::move(pts));
                diagnostics.push_back(std::move(diag));
                ctx.out.write(fmt::format("predictions_{}_layer{}.csv", aid, best.layer), pred);
            }
            sw.curve.condition = fmt::format("{}:{}", sw.curve.condition, kname);
            sw.random_baseline.condition = fmt::format("random:{}", kname);
            curves.push_back(sw.curve);
            curves.push_back(sw.random_baseline);
        }
    }
    ctx.out.write("curves.csv", curves_csv(curves));
    ctx.out.write("best_layers.csv", best_csv);
    ctx.out.write("probe_curves.svg", svg::render(panels, 2));
    if (!diagnostics.empty()) ctx.out.write("best_layer_diagnostics.svg", svg::render(diagnostics, 3));
}

std::vector<TrendRow> guarded_trend(Context& ctx, const std::vector<LayerCurve>& curves, const json& window, double alpha) {
    try {
        return trend_analysis(curves, window[0].get<double>(), window[1].get<double>(), alpha);
    } catch (const std::exception& e) {
        ctx.flag(std::string("trend analysis skipped: ") + e.what());
        return {};
    }
}

void run_probe_delta_style(Context& ctx) {
    const auto templates = ints(ctx.params.at("templates"));
    const ProbeOptions opts = probe_options(ctx);
    std::vector<LayerCurve> cont, ques, diffs, all;
    for (Attribute a : attrs(ctx.params.at("attributes"))) {
        const auto sc = capture_store(*ctx.runner, dataset(ctx.table, {a}, PromptStyle::continuation, templates));
        const auto sq = capture_store(*ctx.runner, dataset(ctx.table, {a}, PromptStyle::question, templates));
        cont.push_back(probe_sweep(sc, ctx.table, a, ProbeKind::regression, "continuation", opts).curve);
        ques.push_back(probe_sweep(sq, ctx.table, a, ProbeKind::regression, "question", opts).curve);
        LayerCurve d = difference(cont.back(), ques.back());
        d.id = std::string(attribute_id(a));
        d.condition = "delta";
        diffs.push_back(d);
    }
    all.insert(all.end(), cont.begin(), cont.end());
    all.insert(all.end(), ques.begin(), ques.end());
    all.insert(all.end(), diffs.begin(), diffs.end());
    svg::Panel mean_panel{"mean delta R2 (continuation - question)", "depth", "delta R2", {}, {}, {}, {}, {}};
    if (diffs.size() >= 2) {
        LayerCurve mean = delta_curve(cont, ques, ctx.params.at("level").get<double>());
        mean.id = "mean";
        mean.condition = "delta_mean";
        all.push_back(mean);
        mean_panel.lines.push_back(curve_line(mean, "mean"));
    } else {
        ctx.notes.push_back("mean delta needs at least two attributes; skipped");
    }
    ctx.out.write("curves.csv", curves_csv(all));
    const auto trend = guarded_trend(ctx, diffs, ctx.params.at("window"), ctx.params.at("alpha").get<double>());
    ctx.out.write("trend.csv", trend_csv(trend));

    svg::Panel per{"delta R2 per attribute", "depth", "delta R2", {}, {}, {}, {}, {}};
    for (const auto& d : diffs) per.lines.push_back(curve_line(d, d.id));
    ctx.out.write("delta_style.svg", svg::render({mean_panel, per}, 2));
}

// Template ids whose element mention comes before the attribute mention.
std::vector<int> element_first_templates(PromptStyle style) {
    std::vector<int> out;
    for (const auto& t : template_catalog(style)) {
        const PromptInstance p = render_prompt(t, "X", "A");
        if (p.element_span.begin < p.attribute_span.begin) out.push_back(t.id);
    }
    return out;
}

void run_indirect_recall(Context& ctx) {
    const Attribute target = parse_attribute(ctx.params.at("target").get<std::string>());
    const bool force = ctx.params.at("force").get<bool>();
    const auto templates = ints(ctx.params.at("templates"));
    const ProbeOptions opts = probe_options(ctx);

    std::vector<Attribute> mentioned = attrs(ctx.params.at("mentioned"));
    const bool defaulted = mentioned.empty();
    std::string screens = "pair,pearson_abs,spearman_abs,linear_r2,passes,status\n";
    if (defaulted) {
        for (const auto& [a, b] : tabled_pairs()) {
            if (a == target) mentioned.push_back(b);
            if (b == target) mentioned.push_back(a);
        }
        std::vector<Attribute> kept;
        for (Attribute m : mentioned) {
            const PairScreenReport r = screen_pair(ctx.table, target, m);
            const bool use = r.passes || force;
            screens += fmt::format("{},{},{},{},{},{}\n", pair_id(target, m), num_text(r.pearson_abs),
                                   num_text(r.spearman_abs), num_text(r.linear_r2), r.passes ? 1 : 0,
                                   use ? (r.passes ? "used" : "forced") : "refused");
            if (use) {
                kept.push_back(m);
            } else {
                ctx.notes.push_back(fmt::format("pair {} refused by screening", pair_id(target, m)));
            }
        }
        mentioned = kept;
    } else {
        for (Attribute m : mentioned) {
            const PairScreenReport r = screen_pair(ctx.table, target, m);
            screens += fmt::format("{},{},{},{},{},{}\n", pair_id(target, m), num_text(r.pearson_abs),
                                   num_text(r.spearman_abs), num_text(r.linear_r2), r.passes ? 1 : 0,
                                   r.passes ? "used" : (force ? "forced" : "refused"));
        }
    }
    ctx.out.write("screens.csv", screens);
    if (mentioned.empty()) throw Error("indirect recall: no non-matching pair passes screening for " + std::string(attribute_id(target)));

    const auto matching = capture_store(*ctx.runner, dataset(ctx.table, {target}, PromptStyle::continuation, templates));
    std::vector<ActivationStore> others;
    others.reserve(mentioned.size());
    for (Attribute m : mentioned) {
        others.push_back(capture_store(*ctx.runner, dataset(ctx.table, {m}, PromptStyle::continuation, templates)));
    }
    std::vector<int> early = element_first_templates(PromptStyle::continuation);
    if (!templates.empty()) {
        std::vector<int> both;
        for (int t : early) {
            if (std::find(templates.begin(), templates.end(), t) != templates.end()) both.push_back(t);
        }
        early = both;
    }
    if (early.empty()) throw Error("indirect recall: no selected template names the element before the attribute");
    const auto no_mention =
        capture_store(*ctx.runner, dataset(ctx.table, {target}, PromptStyle::continuation, early), true);

    std::vector<NonMatchingInput> inputs;
    for (std::size_t i = 0; i < mentioned.size(); ++i) inputs.push_back({mentioned[i], &others[i]});
    const IndirectRecallResult r = indirect_recall_experiment(matching, inputs, no_mention, ctx.table, target, opts, force);

    std::vector<LayerCurve> curves = {r.matching, r.non_matching, r.no_mention};
    curves.insert(curves.end(), r.non_matching_pairs.begin(), r.non_matching_pairs.end());
    ctx.out.write("curves.csv", curves_csv(curves));
    std::vector<LayerCurve> trend_inputs = r.non_matching_pairs;
    trend_inputs.push_back(r.no_mention);
    trend_inputs.back().id = "no_mention:" + r.no_mention.id;
    ctx.out.write("trend.csv",
                  trend_csv(guarded_trend(ctx, trend_inputs, ctx.params.at("window"), ctx.params.at("alpha").get<double>())));
    ctx.out.json_file("templates.json", {{"no_mention_templates", early}});

    svg::Panel p{fmt::format("indirect recall of {}", attribute_id(target)), "depth", "R2", {}, {}, {}, {}, {}};
    p.lines.push_back(curve_line(r.matching, "matching"));
    p.lines.push_back(curve_line(r.non_matching, "non-matching"));
    p.lines.push_back(curve_line(r.no_mention, "no-mention"));
    ctx.out.write("indirect_recall.svg", svg::render({p}, 1));
}

void run_rep_map(Context& ctx) {
    const PromptStyle style = parse_style(ctx.params.at("style").get<std::string>());
    const int tmpl = ctx.params.at("template").get<int>();
    RepMapOptions opts;
    opts.pca_dim = ctx.params.at("pca_dim").get<int>();
    opts.folds = ctx.params.at("folds").get<int>();
    opts.seed = ctx.seed;
    std::map<Attribute, ActivationStore> stores;
    const auto store_for = [&](Attribute a) -> const ActivationStore& {
        auto it = stores.find(a);
        if (it == stores.end()) it = stores.emplace(a, capture_store(*ctx.runner, dataset(ctx.table, {a}, style, {tmpl}))).first;
        return it->second;
    };
    std::vector<LayerCurve> curves;
    svg::Panel p{"representation map R2", "depth", "R2", {}, {}, {}, {}, {}};
    for (const auto& [a, b] : pairs_of(ctx.params.at("pairs"))) {
        LayerCurve c = representation_map(store_for(a), store_for(b), opts);
        c.id = pair_id(a, b);
        p.lines.push_back(curve_line(c, c.id));
        curves.push_back(std::move(c));
    }
    ctx.out.write("curves.csv", curves_csv(curves));
    ctx.out.write("rep_map.svg", svg::render({p}, 1));
}

void run_weight_similarity(Context& ctx) {
    const PromptStyle style = parse_style(ctx.params.at("style").get<std::string>());
    const auto templates = ints(ctx.params.at("templates"));
    const double level = ctx.params.at("level").get<double>();
    const ProbeOptions opts = probe_options(ctx);
    const int layers = ctx.runner->info().layer_count;
    std::map<Attribute, std::vector<ProbeResult>> sweeps;
    const auto results_for = [&](Attribute a) -> const std::vector<ProbeResult>& {
        auto it = sweeps.find(a);
        if (it == sweeps.end()) {
            const auto store = capture_store(*ctx.runner, dataset(ctx.table, {a}, style, templates));
            it = sweeps.emplace(a, probe_sweep(store, ctx.table, a, ProbeKind::regression, std::string(style_name(style)), opts).results).first;
        }
        return it->second;
    };
    std::string csv = "pair,layer,depth,cosine,band_half_width,outside_band\n";
    svg::Panel p{"probe weight cosine", "depth", "cosine", {}, {}, {}, {}, {}};
    double half = 0.0;
    for (const auto& [a, b] : pairs_of(ctx.params.at("pairs"))) {
        const auto rows = probe_weight_similarity(results_for(a), results_for(b), layers, level);
        svg::Line line;
        line.label = pair_id(a, b);
        for (const auto& r : rows) {
            csv += fmt::format("{},{},{},{},{},{}\n", pair_id(a, b), r.layer, num_text(r.depth), num_text(r.cosine),
                               num_text(r.half_width), r.outside_band ? 1 : 0);
            line.x.push_back(r.depth);
            line.y.push_back(r.cosine);
            half = r.half_width;
        }
        p.lines.push_back(std::move(line));
    }
    p.band = std::make_pair(-half, half);
    ctx.out.write("similarity.csv", csv);
    ctx.out.write("similarity.svg", svg::render({p}, 1));
}

std::string value_text(double v) {
    if (std::abs(v - std::round(v)) < 1e-9) return fmt::format("{}", static_cast<long long>(std::llround(v)));
    return fmt::format("{:g}", v);
}

void run_logit_lens(Context& ctx) {
    const Attribute attr = parse_attribute(ctx.params.at("attribute").get<std::string>());
    const auto& tmpl = template_catalog(PromptStyle::continuation)[static_cast<std::size_t>(ctx.params.at("template").get<int>() - 1)];
    const AttributeColumn column = attribute_values(ctx.table, attr);
    LensOptions opt;
    opt.top_k = ctx.params.at("top_k").get<int>();
    std::vector<LensTrace> traces;
    for (int z : ints(ctx.params.at("elements"))) {
        const std::size_t i = static_cast<std::size_t>(z - 1);
        if (!column.present[i]) {
            ctx.notes.push_back(fmt::format("element {} has no {} value; skipped", z, attribute_id(attr)));
            continue;
        }
        const PromptInstance p = render_prompt(tmpl, ctx.table[i].symbol, attribute_display_name(attr), z - 1, static_cast<int>(attr));
        std::string target = value_text(column.values[i]);
        if (attr == Attribute::category) target = std::string(category_name(ctx.table[i].category));
        if (!p.text.empty() && p.text.back() != ' ') target = " " + target;
        traces.push_back(logit_lens(*ctx.runner, p.text, target, opt));
    }
    std::ostringstream csv;
    write_lens_csv(csv, traces);
    ctx.out.write("logit_lens.csv", csv.str());

    svg::Panel prob{"target probability by layer", "layer", "probability", {}, {}, {}, {}, {}};
    svg::Panel rank{"target rank by layer", "layer", "rank", {}, {}, {}, {}, {}};
    for (const auto& t : traces) {
        for (std::size_t s = 0; s < t.steps.size(); ++s) {
            const std::string label = fmt::format("{} step {}", t.target, s);
            svg::Line a{label, {}, {}, {}, {}, false}, b{label, {}, {}, {}, {}, false};
            for (std::size_t l = 0; l < t.layers.size(); ++l) {
                a.x.push_back(t.layers[l]);
                a.y.push_back(t.steps[s].probability[l]);
                b.x.push_back(t.layers[l]);
                b.y.push_back(t.steps[s].rank[l]);
            }
            prob.lines.push_back(std::move(a));
            rank.lines.push_back(std::move(b));
        }
    }
    rank.band = std::make_pair(1.0, static_cast<double>(opt.top_k));
    ctx.out.write("logit_lens.svg", svg::render({prob, rank}, 2));
}

void run_tuned_lens(Context& ctx) {
    DatasetRequest req;
    req.attributes.assign(kAllAttributes.begin(), kAllAttributes.end());
    req.styles = {PromptStyle::continuation, PromptStyle::question};
    req.atomic_numbers = atomic_number_range();
    const auto pool = generate_dataset(ctx.table, req);
    const std::size_t n_train = ctx.params.at("train_prompts").get<std::size_t>();
    const std::size_t n_held = ctx.params.at("heldout_prompts").get<std::size_t>();
    if (n_train + n_held > pool.size()) throw Error("tuned lens: corpus larger than the prompt pool");
    SplitMix64 rng(ctx.seed ^ 0x7475ULL);
    const auto order = rng.permutation(pool.size());
    std::vector<std::string> train, held;
    for (std::size_t i = 0; i < n_train; ++i) train.push_back(pool[order[i]].text);
    for (std::size_t i = 0; i < n_held; ++i) held.push_back(pool[order[n_train + i]].text);

    TunedLensOptions opt;
    opt.iterations = ctx.params.at("iterations").get<int>();
    opt.learning_rate = ctx.params.at("learning_rate").get<double>();
    opt.batch_size = ctx.params.at("batch_size").get<std::size_t>();
    opt.seed = ctx.seed;
    opt.corpus_id = fmt::format("dataset-seed{}-train{}", ctx.seed, n_train);
    const LensCorpus train_corpus = collect_lens_corpus(*ctx.runner, train);
    const TunedLens lens = tuned_lens_train(*ctx.runner, train_corpus, opt);
    const LensCorpus held_corpus = collect_lens_corpus(*ctx.runner, held);
    const auto logit_train = lens_kl(*ctx.runner, train_corpus), tuned_train = lens_kl(*ctx.runner, train_corpus, &lens);
    const auto logit_held = lens_kl(*ctx.runner, held_corpus), tuned_held = lens_kl(*ctx.runner, held_corpus, &lens);

    std::string csv = "layer,logit_kl_train,tuned_kl_train,logit_kl_heldout,tuned_kl_heldout,best_iteration\n";
    svg::Line a{"logit lens (held-out)", {}, {}, {}, {}, false}, b{"tuned lens (held-out)", {}, {}, {}, {}, false};
    for (std::size_t l = 0; l < logit_train.size(); ++l) {
        const int best = l < lens.fits.size() ? lens.fits[l].best_iteration : 0;
        csv += fmt::format("{},{},{},{},{},{}\n", l, num_text(logit_train[l]), num_text(tuned_train[l]), num_text(logit_held[l]),
                           num_text(tuned_held[l]), best);
        a.x.push_back(static_cast<double>(l));
        a.y.push_back(logit_held[l]);
        b.x.push_back(static_cast<double>(l));
        b.y.push_back(tuned_held[l]);
    }
    ctx.out.write("tuned_lens.csv", csv);
    ctx.out.json_file("tuned_lens.json", {{"corpus_id", lens.corpus_id},
                                          {"iterations", lens.iterations},
                                          {"train_positions", train_corpus.positions()},
                                          {"heldout_positions", held_corpus.positions()}});
    svg::Panel p{"KL to final distribution", "layer", "KL", {a, b}, {}, {}, {}, {}};
    ctx.out.write("tuned_lens.svg", svg::render({p}, 1));
}

void run_attention(Context& ctx) {
    const PromptStyle style = parse_style(ctx.params.at("style").get<std::string>());
    const Attribute attr = parse_attribute(ctx.params.at("attribute").get<std::string>());
    const auto prompts = dataset(ctx.table, {attr}, style, {ctx.params.at("template").get<int>()}, ints(ctx.params.at("elements")));
    const auto rows = attention_profile(*ctx.runner, prompts);
    std::ostringstream csv;
    write_attention_csv(csv, ctx.runner->info().name, rows);
    ctx.out.write("attention.csv", csv.str());
    svg::Line el{"element", {}, {}, {}, {}, false}, at{"attribute", {}, {}, {}, {}, false},
        ot{"others (mean)", {}, {}, {}, {}, false}, en{"entropy", {}, {}, {}, {}, false};
    for (const auto& r : rows) {
        for (svg::Line* l : {&el, &at, &ot, &en}) l->x.push_back(r.layer);
        el.y.push_back(r.to_element);
        at.y.push_back(r.to_attribute);
        ot.y.push_back(r.to_others_mean);
        en.y.push_back(r.entropy);
    }
    svg::Panel mass{"final-position attention mass", "layer", "attention", {el, at, ot}, {}, {}, {}, {}};
    svg::Panel ent{"attention entropy", "layer", "nats", {en}, {}, {}, {}, {}};
    ctx.out.write("attention.svg", svg::render({mass, ent}, 2));
}

void run_number_distance(Context& ctx) {
    const NumberDistances d = number_embedding_distances(*ctx.runner, ctx.params.at("first").get<int>(),
                                                         ctx.params.at("last").get<int>(), ctx.params.at("folds").get<int>(), ctx.seed);
    ctx.out.store("distances.acts", distance_store(ctx.runner->info(), d));
    std::string csv = "number";
    for (int n : d.numbers) csv += fmt::format(",{}", n);
    csv += "\n";
    for (std::size_t i = 0; i < d.numbers.size(); ++i) {
        csv += fmt::format("{}", d.numbers[i]);
        for (std::size_t j = 0; j < d.numbers.size(); ++j) {
            csv += "," + num_text(d.distances(static_cast<num::Index>(i), static_cast<num::Index>(j)));
        }
        csv += "\n";
    }
    ctx.out.write("distances.csv", csv);
    json summary = {{"numbers", d.numbers}, {"skipped", d.skipped}, {"token_ids", d.token_ids}, {"cv_r2", d.cv_r2}, {"fold_r2", d.fold_r2}};
    const auto idx = [&](int n) -> std::optional<num::Index> {
        for (std::size_t i = 0; i < d.numbers.size(); ++i) {
            if (d.numbers[i] == n) return static_cast<num::Index>(i);
        }
        return std::nullopt;
    };
    if (auto a = idx(1), b = idx(2), c = idx(5); a && b && c) {
        summary["d_1_2"] = d.distances(*a, *b);
        summary["d_1_5"] = d.distances(*a, *c);
    }
    if (!d.skipped.empty()) ctx.notes.push_back(fmt::format("{} numbers need several tokens and were skipped", d.skipped.size()));
    ctx.out.json_file("summary.json", summary);
    svg::Panel p;
    p.title = "distances between pseudo-inverse number vectors";
    p.heatmap = d.distances;
    for (int n : d.numbers) p.heatmap_labels.push_back(std::to_string(n));
    ctx.out.write("distances.svg", svg::render({p}, 1, 460, 460));
}

using ExperimentFn = void (*)(Context&);

const std::map<std::string, ExperimentFn>& experiments() {
    static const std::map<std::string, ExperimentFn> table = {
        {"tsne", run_tsne},
        {"intervention", run_intervention_experiment},
        {"layer_sweep", run_layer_sweep},
        {"probe_direct", run_probe_direct},
        {"probe_delta_style", run_probe_delta_style},
        {"indirect_recall", run_indirect_recall},
        {"rep_map", run_rep_map},
        {"weight_similarity", run_weight_similarity},
        {"logit_lens", run_logit_lens},
        {"tuned_lens", run_tuned_lens},
        {"attention", run_attention},
        {"number_distance", run_number_distance},
        {"pair_screen", run_pair_screen},
    };
    return table;
}

}  // namespace

std::string_view software_version() { return LAB_VERSION; }

std::unique_ptr<Runner> make_backend(const nlohmann::json& config, const ElementTable& table) {
    const std::string backend = config.at("backend").get<std::string>();
    if (backend == "toy") {
        const json& t = config.at("toy");
        ToyConfig c;
        c.layers = t.at("layers").get<int>();
        c.hidden = t.at("hidden").get<int>();
        c.heads = t.at("heads").get<int>();
        return build_toy_model(t.at("weights_seed").get<std::uint64_t>(), c);
    }
    if (backend == "planted") {
        const json& p = config.at("planted");
        PlantedSpec spec;
        const std::uint64_t seed = p.at("seed").get<std::uint64_t>();
        spec.points = build_space(p.at("space").get<int>(), table, seed).points;
        spec.layers = p.at("layers").get<int>();
        spec.hidden = p.at("hidden").get<int>();
        spec.noise_rel = p.at("noise").get<double>();
        spec.seed = seed;
        return build_planted_runner(table, std::move(spec));
    }
    if (backend.rfind("http://", 0) == 0) return std::make_unique<HttpRunner>(backend);
    throw Error("unknown backend '" + backend + "'");
}

RunOutcome run_experiment(const nlohmann::json& config) {
    const std::string id = config.at("experiment").get<std::string>();
    const auto& fns = experiments();
    const auto fn = fns.find(id);
    if (fn == fns.end()) throw Error("unknown experiment id '" + id + "'");

    RunOutcome outcome;
    outcome.output_dir = config.at("output_dir").get<std::string>();
    fs::create_directories(outcome.output_dir);
    DirLock lock(outcome.output_dir / ".lock");

    std::optional<ElementTable> loaded;
    const std::string table_path = config.value("element_table", "");
    if (!table_path.empty()) loaded = ElementTable::load(table_path);
    const ElementTable& table = loaded ? *loaded : ElementTable::builtin();

    Artifacts artifacts(outcome.output_dir);
    Context ctx{config, config.at("params"), table, nullptr, artifacts, config.at("seed").get<std::uint64_t>(), {}, false};

    // The output location is not part of the experiment's identity.
    json identity = config;
    identity.erase("output_dir");
    json manifest = {{"software", {{"name", "lab"}, {"version", std::string(software_version())}}},
                     {"experiment", id},
                     {"config", identity},
                     {"config_hash", config_hash(identity)},
                     {"backend", config.at("backend")},
                     {"model", nullptr}};
    std::unique_ptr<Runner> runner;
    std::string failure;
    try {
        if (id != "pair_screen") {
            runner = make_backend(config, table);
            ctx.runner = runner.get();
            manifest["model"] = to_json(runner->info());
        }
        fn->second(ctx);
    } catch (const std::exception& e) {
        failure = e.what();
        ctx.partial = true;
    }
    manifest["artifacts"] = artifacts.listing();
    manifest["partial"] = ctx.partial;
    manifest["notes"] = ctx.notes;
    manifest["error"] = failure.empty() ? json(nullptr) : json(failure);
    {
        std::ofstream out(outcome.output_dir / "manifest.json", std::ios::binary | std::ios::trunc);
        out << manifest.dump(2) << "\n";
        if (!out) throw Error("cannot write manifest.json");
    }
    if (!failure.empty()) throw Error(id + ": " + failure);
    outcome.manifest = std::move(manifest);
    outcome.partial = ctx.partial;
    return outcome;
}

}  // namespace lab
