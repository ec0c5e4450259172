#include <cmath>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "lab/error.hpp"
#include "lab/geometry.hpp"
#include "lab/lenses.hpp"
#include "lab/planted.hpp"
#include "lab/prompts.hpp"
#include "lab/rng.hpp"
#include "lab/toy_model.hpp"

using namespace lab;

namespace {

std::string random_prompt(SplitMix64& rng) {
    static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz ,.MgNaHe0123456789";
    std::string s;
    const std::size_t n = 1 + rng.below(40);
    for (std::size_t i = 0; i < n; ++i) s += alphabet[rng.below(alphabet.size())];
    return s;
}

std::vector<std::string> sentences(std::uint64_t seed, int count) {
    SplitMix64 rng(seed);
    std::vector<std::string> out;
    for (int i = 0; i < count; ++i) out.push_back(random_prompt(rng) + " is " + random_prompt(rng));
    return out;
}

std::unique_ptr<PlantedRunner> planted() {
    const auto& t = ElementTable::builtin();
    return build_planted_runner(t, {.points = build_space(3, t).points, .layers = 4, .hidden = 48, .seed = 2});
}

}  // namespace

TEST(LogitLens, FinalLayerEqualsModelOutput) {
    auto model = build_toy_model(1);
    SplitMix64 rng(11);
    CaptureSpec spec;
    spec.capture_logits = true;
    spec.layers = {0};
    for (int trial = 0; trial < 100; ++trial) {
        const std::string prompt = random_prompt(rng);
        const auto dists = lens_distributions(*model, prompt);
        ASSERT_EQ(dists.size(), 5u);
        const auto expected = softmax(*model->forward_capture(prompt, spec).logits);
        double worst = 0.0;
        for (std::size_t v = 0; v < expected.size(); ++v) worst = std::max(worst, std::abs(dists.back()[v] - expected[v]));
        EXPECT_LE(worst, 1e-5) << prompt;
        for (const auto& layer : dists) {
            EXPECT_NEAR(std::accumulate(layer.begin(), layer.end(), 0.0), 1.0, 1e-6);
        }
    }
}

TEST(LogitLens, TraceRanksAndMultiTokenTargets) {
    auto model = build_toy_model(1);
    const auto trace = logit_lens(*model, "The atomic number of Mg is", " 12");
    ASSERT_EQ(trace.steps.size(), 3u);  // byte tokens
    EXPECT_EQ(trace.steps[1].context, "The atomic number of Mg is ");
    EXPECT_EQ(trace.target_token(), ' ');
    const auto dists = lens_distributions(*model, "The atomic number of Mg is");
    for (std::size_t l = 0; l < dists.size(); ++l) {
        const auto& step = trace.steps[0];
        EXPECT_NEAR(step.probability[l], dists[l][' '], 1e-12);
        EXPECT_GE(step.probability[l], 0.0);
        EXPECT_LE(step.probability[l], 1.0);
        const auto better = std::count_if(dists[l].begin(), dists[l].end(), [&](double p) { return p > step.probability[l]; });
        EXPECT_EQ(step.rank[l], better + 1);
        EXPECT_EQ(step.in_top_k[l], step.rank[l] <= 50);
    }
    std::ostringstream csv;
    write_lens_csv(csv, {trace});
    EXPECT_NE(csv.str().find("layer"), std::string::npos);
}

TEST(LogitLens, RejectsEmptyTarget) {
    auto model = build_toy_model(1);
    EXPECT_THROW(logit_lens(*model, "Mg", ""), Error);
    EXPECT_THROW(logit_lens(*model, "Mg", " 12", {.top_k = 0}), Error);
}

TEST(TunedLens, HeldOutKlNoWorseThanIdentity) {
    auto model = build_toy_model(1);
    const auto train = collect_lens_corpus(*model, sentences(21, 24));
    const auto heldout = collect_lens_corpus(*model, sentences(22, 12));
    const TunedLens lens = tuned_lens_train(*model, train, {.iterations = 300, .learning_rate = 1e-3, .seed = 3});
    ASSERT_EQ(lens.layer_count(), 4);
    ASSERT_EQ(lens.fits.size(), 4u);
    for (const auto& fit : lens.fits) EXPECT_LE(fit.final_kl, fit.initial_kl);

    const auto identity = lens_kl(*model, heldout);
    const auto tuned = lens_kl(*model, heldout, &lens);
    ASSERT_EQ(identity.size(), 5u);
    for (std::size_t l = 0; l < identity.size(); ++l) EXPECT_LE(tuned[l], identity[l]) << "layer " << l;
    EXPECT_NEAR(identity.back(), 0.0, 1e-9);
    EXPECT_NEAR(tuned.back(), 0.0, 1e-9);
}

TEST(TunedLens, DeterministicFromSeed) {
    auto model = build_toy_model(1);
    const auto corpus = collect_lens_corpus(*model, sentences(23, 8));
    const TunedLensOptions opt{.iterations = 20, .seed = 5, .batch_size = 64};
    const auto a = tuned_lens_train(*model, corpus, opt);
    const auto b = tuned_lens_train(*model, corpus, opt);
    for (int l = 0; l < a.layer_count(); ++l) {
        EXPECT_EQ(a.map(l).weights, b.map(l).weights);
        EXPECT_EQ(a.map(l).bias, b.map(l).bias);
    }
}

TEST(TunedLens, NearIdentityLayerStaysIdentity) {
    // The planted residual is the same at every layer.
    auto runner = planted();
    std::vector<std::string> prompts;
    for (const auto& e : ElementTable::builtin().records()) prompts.push_back(e.symbol + " has atomic number 3 and " + e.name);
    const auto corpus = collect_lens_corpus(*runner, prompts);
    const auto lens = tuned_lens_train(*runner, corpus, {.iterations = 50});
    EXPECT_LE(lens.fits.back().final_kl, 0.01);
    EXPECT_LE(lens_kl(*runner, corpus, &lens)[3], 0.01);
}

TEST(TunedLens, CorpusErrors) {
    auto model = build_toy_model(1);
    EXPECT_THROW(tuned_lens_train(*model, std::vector<std::string>{}), Error);
    EXPECT_THROW(tuned_lens_train(*model, std::vector<std::string>{"tiny"}), Error);
    EXPECT_THROW(TunedLens(0, 4), Error);
    const TunedLens lens(2, 3);
    EXPECT_THROW(lens.map(2), Error);
    EXPECT_EQ(lens.translate(1, std::vector<float>{1, 2, 3}), (std::vector<float>{1, 2, 3}));
}

TEST(Attention, EntropyCases) {
    EXPECT_EQ(attention_entropy(std::vector<float>{1.0f}), 0.0);
    for (int t : {2, 7, 64}) {
        const std::vector<float> row(static_cast<std::size_t>(t), 1.0f / static_cast<float>(t));
        EXPECT_NEAR(attention_entropy(row), std::log(t), 1e-6);
    }
    EXPECT_NEAR(attention_entropy(std::vector<float>{0.5f, 0.0f, 0.5f}), std::log(2.0), 1e-7);
}

TEST(Attention, SingleTokenRowIsOne) {
    auto model = build_toy_model(1);
    CaptureSpec spec;
    spec.capture_attention = true;
    const auto cap = model->forward_capture("M", spec);
    ASSERT_TRUE(cap.attention);
    ASSERT_EQ(cap.attention->size(), 4u);
    for (const auto& row : *cap.attention) {
        ASSERT_EQ(row.size(), 1u);
        EXPECT_NEAR(row[0], 1.0f, 1e-6f);
        EXPECT_NEAR(attention_entropy(row), 0.0, 1e-6);
    }
}

TEST(Attention, ProfileAggregates) {
    auto model = build_toy_model(1);
    const auto prompts = generate_dataset(ElementTable::builtin(),
                                          {.attributes = {Attribute::atomic_number},
                                           .styles = {PromptStyle::continuation},
                                           .atomic_numbers = {1, 12, 18}});
    const auto rows = attention_profile(*model, prompts);
    ASSERT_EQ(rows.size(), 4u);
    for (const auto& r : rows) {
        EXPECT_GE(r.to_element, 0.0);
        EXPECT_GE(r.to_attribute, 0.0);
        EXPECT_LE(r.to_element + r.to_attribute, 1.0 + 1e-9);
        EXPECT_GT(r.entropy, 0.0);
    }
    EXPECT_EQ(rows.front().layer, 1);
    auto runner = planted();
    EXPECT_THROW(attention_profile(*runner, prompts), Error);
}

TEST(NumberDistances, SymmetricWithZeroDiagonal) {
    auto model = build_toy_model(1);
    const auto nd = number_embedding_distances(*model, 1, 50);
    EXPECT_EQ(nd.numbers.size(), 9u);  // 1..9 are single bytes
    EXPECT_EQ(nd.skipped.size(), 41u);
    const auto& d = nd.distances;
    ASSERT_EQ(d.rows(), 9);
    for (num::Index i = 0; i < d.rows(); ++i) {
        EXPECT_EQ(d(i, i), 0.0);
        for (num::Index j = 0; j < d.cols(); ++j) EXPECT_EQ(d(i, j), d(j, i));
    }
}

TEST(NumberDistances, PlantedHelixOrdering) {
    auto runner = planted();
    const auto nd = number_embedding_distances(*runner, 1, 50);
    ASSERT_EQ(nd.numbers.size(), 50u);
    EXPECT_TRUE(nd.skipped.empty());
    EXPECT_LT(nd.distances(0, 1), nd.distances(0, 4));
    EXPECT_GT(nd.cv_r2, 0.99);
    const auto store = distance_store(runner->info(), nd);
    EXPECT_EQ(store.shape, (std::vector<std::size_t>{50, 50}));
}
