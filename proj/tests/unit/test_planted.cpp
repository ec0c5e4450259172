#include <gtest/gtest.h>

#include "lab/error.hpp"
#include "lab/geometry.hpp"
#include "lab/planted.hpp"
#include "lab/stats.hpp"

using namespace lab;

namespace {

std::unique_ptr<PlantedRunner> planted(int space, double noise, int hidden = 64) {
    const auto& t = ElementTable::builtin();
    return build_planted_runner(t, {.points = build_space(space, t).points, .layers = 4, .hidden = hidden,
                                    .noise_rel = noise, .seed = 11});
}

}  // namespace

TEST(Planted, Tokenizer) {
    auto r = planted(3, 0.0);
    const auto t = r->tokenize("The atomic number of Mg is");
    ASSERT_EQ(t.size(), 6u);
    EXPECT_EQ(t.ids[4], 51 + 11);
    EXPECT_EQ(t.ids[0], PlantedRunner::kUnknownToken);
    EXPECT_EQ(t.offsets[4], (CharSpan{21, 23}));
    EXPECT_EQ(r->tokenize("magnesium 12").ids, (std::vector<int>{62, 12}));
    EXPECT_EQ(r->decode(std::vector<int>{12, 62, 0}), "12 Mg <miss>");
    EXPECT_THROW(r->tokenize("   "), Error);
}

TEST(Planted, ResidualFollowsLatestMention) {
    auto r = planted(3, 0.0);
    const auto c = r->forward_capture("Fe then Mg is", {.positions = PositionMode::all});
    const auto fe = r->element_residual(26), mg = r->element_residual(12);
    for (std::size_t l = 0; l < c.layers.size(); ++l) {
        const auto a = c.residual(l, 1);
        const auto b = c.residual(l, 3);
        EXPECT_TRUE(std::equal(a.begin(), a.end(), fe.begin()));
        EXPECT_TRUE(std::equal(b.begin(), b.end(), mg.begin()));
    }
    EXPECT_THROW(r->forward_capture("Mg", {.capture_attention = true}), Error);
}

TEST(Planted, PatchWithPlantedVectorDecodesExactly) {
    auto r = planted(3, 0.0);
    for (int z = 1; z <= 50; ++z) {
        const auto g = r->forward_patched("The atomic number of element",
                                          {.layer = 2, .replacement = r->element_residual(z), .max_new_tokens = 4});
        ASSERT_EQ(g.token_texts.size(), 1u);
        EXPECT_EQ(g.token_texts[0], std::to_string(z));
    }
}

TEST(Planted, GenerateNamesTheMentionedElement) {
    auto r = planted(2, 0.0);
    EXPECT_EQ(r->generate("The atomic number of Mg is", 1).text, "12");
}

TEST(Planted, LinearProbeOfAtomicNumberIsExact) {
    auto r = planted(1, 0.0);
    num::Matrix x(50, 64);
    num::Matrix y(50, 1);
    for (int z = 1; z <= 50; ++z) {
        const auto v = r->element_residual(z);
        for (int k = 0; k < 64; ++k) x(z - 1, k) = v[static_cast<std::size_t>(k)];
        y(z - 1, 0) = z;
    }
    const auto map = num::least_squares(x, y);
    const num::Matrix pred = map.apply_rows(x);
    const std::vector<double> yt(y.data(), y.data() + 50), yp(pred.data(), pred.data() + 50);
    EXPECT_NEAR(num::r2(yt, yp), 1.0, 1e-6);
}

TEST(Planted, NoiseScale) {
    auto clean = planted(3, 0.0, 256);
    auto noisy = planted(3, 0.05, 256);
    double sq = 0.0;
    for (int z = 1; z <= 50; ++z) {
        const auto a = clean->element_residual(z), b = noisy->element_residual(z);
        for (std::size_t k = 0; k < a.size(); ++k) sq += (double(a[k]) - b[k]) * (double(a[k]) - b[k]);
    }
    const double rms = std::sqrt(sq / (50.0 * 256.0));
    EXPECT_NEAR(rms / clean->signal_scale(), 0.05, 0.005);
}

TEST(Planted, SpecValidation) {
    const auto& t = ElementTable::builtin();
    EXPECT_THROW(build_planted_runner(t, {.points = num::Matrix::Zero(49, 3)}), Error);
    EXPECT_THROW(build_planted_runner(t, {.points = build_space(3, t).points, .hidden = 2}), Error);
    EXPECT_THROW(build_planted_runner(t, {.points = build_space(3, t).points, .noise_rel = -1}), Error);
}
