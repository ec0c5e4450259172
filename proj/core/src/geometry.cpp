#include "lab/geometry.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "lab/error.hpp"
#include "lab/prompts.hpp"
#include "lab/rng.hpp"
#include "lab/stats.hpp"

namespace lab {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double theta(int group) { return 2.0 * std::numbers::pi * group / 18.0; }

std::vector<std::size_t> training_rows(num::Index n, int holdout) {
    if (holdout < 0 || holdout >= n) throw Error("holdout index " + std::to_string(holdout) + " out of range");
    std::vector<std::size_t> rows;
    for (num::Index i = 0; i < n; ++i) {
        if (i != holdout) rows.push_back(static_cast<std::size_t>(i));
    }
    return rows;
}

num::Matrix take_rows(const num::Matrix& m, const std::vector<std::size_t>& rows) {
    num::Matrix out(static_cast<num::Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<num::Index>(r)) = m.row(static_cast<num::Index>(rows[r]));
    return out;
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

GeometrySpace build_space(int id, const ElementTable& table, std::uint64_t seed) {
    if (id < 1 || id > kSpaceCount) throw Error("invalid geometry space id " + std::to_string(id) + " (expected 1..10)");
    const auto& recs = table.records();
    const auto n = static_cast<num::Index>(recs.size());
    GeometrySpace s;
    s.id = id;

    if (id == 8 || id == 9) {
        s.rng_seed = seed;
        SplitMix64 rng(seed ^ (0x5bd1e995ULL * static_cast<std::uint64_t>(id)));
        for (std::size_t p : rng.permutation(recs.size())) s.permutation.push_back(static_cast<int>(p));
    }

    auto fill = [&](int cols, auto&& row) {
        s.points.resize(n, cols);
        for (num::Index i = 0; i < n; ++i) {
            const auto& e = recs[static_cast<std::size_t>(i)];
            const double r = e.atomic_number;
            const double t = theta(e.group);
            const double p = e.period;
            row(i, r, t, p, static_cast<double>(e.group));
        }
    };

    switch (id) {
        case 1:
            s.description = "linear in atomic number: r";
            fill(1, [&](num::Index i, double r, double, double, double) { s.points(i, 0) = r; });
            break;
        case 2:
            s.description = "cartesian grid: (r, g, p)";
            fill(3, [&](num::Index i, double r, double, double p, double g) { s.points.row(i) << r, g, p; });
            break;
        case 3:
        case 10:
            s.description = id == 3 ? "radial spiral: (r cos t, r sin t, r)" : "radial spiral on numeral prompts: (r cos t, r sin t, r)";
            fill(3, [&](num::Index i, double r, double t, double, double) { s.points.row(i) << r * std::cos(t), r * std::sin(t), r; });
            if (id == 10) s.prompt_mode = PromptMode::number_control;
            break;
        case 4:
            s.description = "spiral: (cos t, sin t, r)";
            fill(3, [&](num::Index i, double r, double t, double, double) { s.points.row(i) << std::cos(t), std::sin(t), r; });
            break;
        case 5:
            s.description = "periodic wave: (cos t, sin t, p)";
            fill(3, [&](num::Index i, double, double t, double p, double) { s.points.row(i) << std::cos(t), std::sin(t), p; });
            break;
        case 6:
            s.description = "radial lattice: (r cos t, r sin t, p)";
            fill(3, [&](num::Index i, double r, double t, double p, double) { s.points.row(i) << r * std::cos(t), r * std::sin(t), p; });
            break;
        case 7:
            s.description = "planar radial: (r cos t, r sin t)";
            fill(2, [&](num::Index i, double r, double t, double, double) { s.points.row(i) << r * std::cos(t), r * std::sin(t); });
            break;
        case 8:
            s.description = "shuffled atomic number: r_random";
            fill(1, [&](num::Index i, double, double, double, double) {
                s.points(i, 0) = recs[static_cast<std::size_t>(s.permutation[static_cast<std::size_t>(i)])].atomic_number;
            });
            break;
        case 9:
            s.description = "spiral with shuffled angle: (cos t_random, sin t_random, r)";
            fill(3, [&](num::Index i, double r, double, double, double) {
                const double t = theta(recs[static_cast<std::size_t>(s.permutation[static_cast<std::size_t>(i)])].group);
                s.points.row(i) << std::cos(t), std::sin(t), r;
            });
            break;
        default: break;
    }
    return s;
}

num::LinearMap fit_geometry_map(const num::Matrix& reps, const GeometrySpace& space, int holdout) {
    if (reps.rows() != space.points.rows()) throw Error("fit_geometry_map: reps and geometry row counts differ");
    const auto rows = training_rows(reps.rows(), holdout);
    const num::Matrix x = take_rows(reps, rows);
    const num::Matrix centred = x.rowwise() - x.colwise().mean();
    if (num::numerical_rank(centred) < space.dim()) {
        throw Error("degenerate representations: rank " + std::to_string(num::numerical_rank(centred)) +
                    " below space dimension " + std::to_string(space.dim()));
    }
    return num::least_squares(x, take_rows(space.points, rows));
}

num::Vector patch_vector(const num::Matrix& reps, const GeometrySpace& space, int holdout, const num::PcaModel& pca) {
    if (reps.cols() != pca.output_dim()) throw Error("patch_vector: reps width does not match the PCA model");
    const num::LinearMap map = fit_geometry_map(reps, space, holdout);
    const auto rows = training_rows(reps.rows(), holdout);
    const num::Vector centroid = take_rows(reps, rows).colwise().mean().transpose();
    const num::Vector z = map.apply(centroid);
    const num::Vector target = space.points.row(holdout).transpose();
    const num::Vector coords = centroid + num::pinv(map.weights) * (target - z);
    return num::pca_inverse(pca, coords.transpose()).row(0).transpose();
}

num::Vector predict_residual(const num::Matrix& residuals, const GeometrySpace& space, int holdout, int pca_dim) {
    if (residuals.rows() != space.points.rows()) throw Error("predict_residual: expected one residual row per element");
    const auto rows = training_rows(residuals.rows(), holdout);
    const num::Matrix train = take_rows(residuals, rows);
    const num::Index k = std::min<num::Index>({static_cast<num::Index>(pca_dim), residuals.cols(), train.rows() - 1});
    if (k < 1) throw Error("predict_residual: PCA dimension must be >= 1");
    // Round-off components would let the least-squares map put large
    // weights on directions that the pseudo-inverse then favours.
    const num::PcaModel pca = num::pca_drop_negligible(num::pca_fit(train, k));
    if (!(pca.explained_variance(0) > 0.0)) throw Error("predict_residual: training residuals have no variance");
    num::Matrix reps = num::Matrix::Zero(residuals.rows(), pca.output_dim());
    const num::Matrix projected = num::pca_transform(pca, train);
    for (std::size_t r = 0; r < rows.size(); ++r) reps.row(static_cast<num::Index>(rows[r])) = projected.row(static_cast<num::Index>(r));
    return patch_vector(reps, space, holdout, pca);
}

std::optional<int> parse_numeric(const std::vector<std::string>& token_texts) {
    auto is_digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
    for (std::size_t t = 0; t < token_texts.size(); ++t) {
        const std::string& tok = token_texts[t];
        const auto first = std::find_if(tok.begin(), tok.end(), is_digit);
        if (first == tok.end()) continue;
        const auto last = std::find_if_not(first, tok.end(), is_digit);
        std::string digits(first, last);
        if (last == tok.end() && t + 1 < token_texts.size()) {
            const std::string& next = token_texts[t + 1];
            const auto run_end = std::find_if_not(next.begin(), next.end(), is_digit);
            digits.append(next.begin(), run_end);
        }
        if (digits.size() > 9) return std::nullopt;
        return std::stoi(digits);
    }
    return std::nullopt;
}

int default_patch_layer(int layer_count) {
    return std::max(0, static_cast<int>(std::lround(0.25 * layer_count)));
}

std::string baseline_prompt(const ElementTable& table, int index, PromptMode mode) {
    if (mode == PromptMode::number_control) return std::string(kNumberControlPrompt) + " " + std::to_string(index + 1);
    return std::string(kInterventionPrompt) + " " + table[static_cast<std::size_t>(index)].symbol;
}

std::vector<num::Matrix> capture_baselines(Runner& runner, const ElementTable& table, PromptMode mode) {
    const ModelInfo info = runner.info();
    const auto n = static_cast<num::Index>(table.size());
    std::vector<num::Matrix> out(static_cast<std::size_t>(info.layer_count + 1), num::Matrix(n, info.hidden_dim));
    for (num::Index i = 0; i < n; ++i) {
        const CaptureResult c = runner.forward_capture(baseline_prompt(table, static_cast<int>(i), mode), CaptureSpec{});
        for (int l = 0; l <= info.layer_count; ++l) {
            const auto v = c.last(l);
            for (int k = 0; k < info.hidden_dim; ++k) out[static_cast<std::size_t>(l)](i, k) = v[static_cast<std::size_t>(k)];
        }
    }
    return out;
}

InterventionResult run_intervention(Runner& runner, const std::vector<num::Matrix>& baselines, const GeometrySpace& space,
                                    const InterventionOptions& options) {
    const ModelInfo info = runner.info();
    const int layer = options.layer < 0 ? default_patch_layer(info.layer_count) : options.layer;
    if (layer < 0 || static_cast<std::size_t>(layer) >= baselines.size()) {
        throw Error("intervention layer " + std::to_string(layer) + " out of range");
    }
    const num::Matrix& residuals = baselines[static_cast<std::size_t>(layer)];
    const std::string host = std::string(space.prompt_mode == PromptMode::element ? kInterventionPrompt : kNumberControlPrompt);

    InterventionResult result;
    result.space_id = space.id;
    result.layer = layer;
    result.permutation = space.permutation;
    std::vector<double> targets, parsed;
    int within = 0;
    double total_error = 0.0;
    for (num::Index i = 0; i < residuals.rows(); ++i) {
        ElementOutcome o;
        o.target = static_cast<int>(i) + 1;
        try {
            const num::Vector v = predict_residual(residuals, space, static_cast<int>(i), options.pca_dim);
            PatchSpec patch;
            patch.layer = layer;
            patch.replacement.resize(static_cast<std::size_t>(v.size()));
            for (num::Index k = 0; k < v.size(); ++k) patch.replacement[static_cast<std::size_t>(k)] = static_cast<float>(v(k));
            patch.max_new_tokens = options.max_new_tokens;
            const GenerationResult g = runner.forward_patched(host, patch);
            o.generated = g.text;
            o.parsed = parse_numeric(g.token_texts);
        } catch (const std::exception& e) {
            o.error = e.what();
        }
        if (o.parsed) {
            o.abs_error = static_cast<int>(std::min<long>(50, std::labs(static_cast<long>(*o.parsed) - o.target)));
            targets.push_back(o.target);
            parsed.push_back(*o.parsed);
        }
        if (o.abs_error <= 2) ++within;
        total_error += o.abs_error;
        result.outcomes.push_back(std::move(o));
    }
    const double n = static_cast<double>(result.outcomes.size());
    result.hits = static_cast<int>(parsed.size());
    result.frac_within_2 = within / n;
    result.mae = total_error / n;
    const bool varied = parsed.size() >= 2 && std::adjacent_find(parsed.begin(), parsed.end(), std::not_equal_to<>()) != parsed.end();
    result.r2 = parsed.size() >= 2 ? num::r2(targets, parsed) : kNan;
    result.pearson = varied ? num::pearson(targets, parsed) : kNan;
    return result;
}

InterventionResult run_intervention(Runner& runner, const ElementTable& table, const GeometrySpace& space,
                                    const InterventionOptions& options) {
    return run_intervention(runner, capture_baselines(runner, table, space.prompt_mode), space, options);
}

std::vector<SweepRow> layer_sweep(Runner& runner, const ElementTable& table, const GeometrySpace& space,
                                  const std::vector<int>& layers, const InterventionOptions& options) {
    if (layers.empty()) throw Error("layer_sweep: empty layer list");
    const auto baselines = capture_baselines(runner, table, space.prompt_mode);
    std::vector<SweepRow> rows;
    for (int layer : layers) {
        InterventionOptions o = options;
        o.layer = layer;
        const InterventionResult r = run_intervention(runner, baselines, space, o);
        SweepRow row;
        row.layer = layer;
        row.mae = r.mae;
        row.frac_within_2 = r.frac_within_2;
        row.min_abs_error = 50;
        row.max_abs_error = 0;
        for (const auto& e : r.outcomes) {
            row.min_abs_error = std::min(row.min_abs_error, e.abs_error);
            row.max_abs_error = std::max(row.max_abs_error, e.abs_error);
        }
        rows.push_back(row);
    }
    return rows;
}

nlohmann::json intervention_summary(const InterventionResult& r) {
    nlohmann::json j = {{"summary", true},
                        {"space", r.space_id},
                        {"layer", r.layer},
                        {"R2", number_or_null(r.r2)},
                        {"Pearson Correlation", number_or_null(r.pearson)},
                        {"Percentage of Abs. err <= 2", 100.0 * r.frac_within_2},
                        {"MAE", r.mae},
                        {"hits", r.hits}};
    if (!r.permutation.empty()) j["permutation"] = r.permutation;
    return j;
}

void write_intervention_jsonl(std::ostream& out, const InterventionResult& r) {
    for (const auto& o : r.outcomes) {
        nlohmann::json j = {{"space", r.space_id},
                            {"layer", r.layer},
                            {"target", o.target},
                            {"generated", o.generated},
                            {"parsed", o.parsed ? nlohmann::json(*o.parsed) : nlohmann::json(nullptr)},
                            {"abs_error", o.abs_error}};
        if (!o.error.empty()) j["error"] = o.error;
        out << j.dump() << '\n';
    }
    out << intervention_summary(r).dump() << '\n';
}

}  // namespace lab
