#include <sstream>

#include <gtest/gtest.h>

#include "lab/elements.hpp"
#include "lab/error.hpp"
#include "lab/stats.hpp"

using namespace lab;

TEST(Elements, BuiltinLookups) {
    const auto& t = ElementTable::builtin();
    ASSERT_EQ(t.size(), 50u);
    EXPECT_EQ(t.by_atomic_number(1).symbol, "H");
    EXPECT_EQ(t.by_symbol("Mg").atomic_number, 12);
    EXPECT_EQ(t.by_symbol("Mg").group, 2);
    EXPECT_EQ(t.by_symbol("Sn").atomic_number, 50);
    EXPECT_THROW(t.by_symbol("Xx"), Error);
    EXPECT_THROW(t.by_atomic_number(51), Error);
}

TEST(Elements, MissingElectronegativityIsNobleGases) {
    const auto& t = ElementTable::builtin();
    const auto col = attribute_values(t, Attribute::electronegativity);
    std::vector<std::string> absent;
    for (std::size_t i = 0; i < col.present.size(); ++i) {
        if (!col.present[i]) absent.push_back(t[i].symbol);
    }
    EXPECT_EQ(absent, (std::vector<std::string>{"He", "Ne", "Ar"}));
}

TEST(Elements, AtomicNumberColumn) {
    const auto col = attribute_values(ElementTable::builtin(), Attribute::atomic_number);
    for (int i = 0; i < 50; ++i) {
        EXPECT_EQ(col.values[static_cast<std::size_t>(i)], i + 1);
        EXPECT_TRUE(col.present[static_cast<std::size_t>(i)]);
    }
}

TEST(Elements, CsvRoundTripAndShuffledRows) {
    const auto& t = ElementTable::builtin();
    std::stringstream out;
    t.write_csv(out);
    std::string header, line;
    std::getline(out, header);
    std::vector<std::string> rows;
    while (std::getline(out, line)) rows.push_back(line);
    std::reverse(rows.begin(), rows.end());
    std::stringstream in;
    in << header << "\n";
    for (const auto& r : rows) in << r << "\n";
    const ElementTable back = ElementTable::from_csv(in);
    ASSERT_EQ(back.size(), t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        EXPECT_EQ(back[i].symbol, t[i].symbol);
        EXPECT_EQ(back[i].group, t[i].group);
        EXPECT_EQ(back[i].atomic_mass, t[i].atomic_mass);
        EXPECT_EQ(back[i].electronegativity, t[i].electronegativity);
        EXPECT_EQ(back[i].category, t[i].category);
    }
}

TEST(Elements, CsvRejectsDuplicates) {
    std::stringstream in;
    in << "symbol,name,atomic_number,group,period,category,atomic_mass,electronegativity\n"
       << "H,Hydrogen,1,1,1,reactive_nonmetal,1.008,2.20\n"
       << "H,Hydrogen,1,1,1,reactive_nonmetal,1.008,2.20\n";
    EXPECT_THROW(ElementTable::from_csv(in), Error);
}

TEST(PairScreen, SelfPairFails) {
    const auto r = screen_pair(ElementTable::builtin(), Attribute::atomic_number, Attribute::atomic_number);
    EXPECT_NEAR(r.pearson_abs, 1.0, 1e-12);
    EXPECT_NEAR(r.linear_r2, 1.0, 1e-12);
    EXPECT_FALSE(r.passes);
}

TEST(PairScreen, PublishedGroupRows) {
    const auto& t = ElementTable::builtin();
    const auto gz = screen_pair(t, Attribute::group, Attribute::atomic_number);
    EXPECT_NEAR(gz.pearson_abs, 0.044, 0.02);
    EXPECT_NEAR(gz.spearman_abs, 0.070, 0.03);
    EXPECT_NEAR(gz.linear_r2, 0.002, 0.01);
    EXPECT_TRUE(gz.passes);
    const auto gp = screen_pair(t, Attribute::group, Attribute::period);
    EXPECT_NEAR(gp.pearson_abs, 0.255, 0.05);
    EXPECT_NEAR(gp.linear_r2, 0.065, 0.01);
}

TEST(PairScreen, SymmetricCorrelations) {
    const auto& t = ElementTable::builtin();
    for (const auto& [a, b] : tabled_pairs()) {
        const auto ab = screen_pair(t, a, b), ba = screen_pair(t, b, a);
        EXPECT_DOUBLE_EQ(ab.pearson_abs, ba.pearson_abs);
        EXPECT_DOUBLE_EQ(ab.spearman_abs, ba.spearman_abs);
    }
}

TEST(PairScreen, DropsRowsWithMissingValues) {
    const auto r = screen_pair(ElementTable::builtin(), Attribute::electronegativity, Attribute::atomic_number);
    EXPECT_EQ(r.complete_pairs, 47u);
}

TEST(PairScreen, MatchesDirectStatistics) {
    const auto& t = ElementTable::builtin();
    const auto g = attribute_values(t, Attribute::group).values;
    const auto p = attribute_values(t, Attribute::period).values;
    const auto r = screen_pair(t, Attribute::group, Attribute::period);
    EXPECT_NEAR(r.pearson_abs, std::abs(num::pearson(g, p)), 1e-12);
    EXPECT_NEAR(r.spearman_abs, std::abs(num::spearman(g, p)), 1e-12);
    // Simple regression: R^2 equals r^2.
    EXPECT_NEAR(r.linear_r2, r.pearson_abs * r.pearson_abs, 1e-12);
}

TEST(PairScreen, CategoryRejected) {
    EXPECT_THROW(screen_pair(ElementTable::builtin(), Attribute::category, Attribute::group), Error);
}

TEST(PairScreen, PairIdRoundTrip) {
    for (const auto& [a, b] : tabled_pairs()) {
        EXPECT_EQ(parse_pair(pair_id(a, b)), std::make_pair(a, b));
    }
    EXPECT_EQ(tabled_pairs().size(), 5u);
}

TEST(Elements, AttributeNames) {
    for (Attribute a : kAllAttributes) {
        EXPECT_EQ(parse_attribute(attribute_id(a)), a);
        EXPECT_EQ(parse_attribute(attribute_display_name(a)), a);
    }
    EXPECT_THROW(parse_attribute("melting point"), Error);
}
