#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lab {

enum class Category {
    alkali_metal,
    alkaline_earth_metal,
    transition_metal,
    post_transition_metal,
    metalloid,
    reactive_nonmetal,
    noble_gas,
    lanthanide,
    actinide,
};

inline constexpr std::size_t kCategoryCount = 9;

std::string_view category_name(Category c);
Category parse_category(std::string_view text);

enum class Attribute {
    atomic_number,
    group,
    period,
    category,
    atomic_mass,
    electronegativity,
};

inline constexpr std::array<Attribute, 6> kAllAttributes = {
    Attribute::atomic_number, Attribute::group,       Attribute::period,
    Attribute::category,      Attribute::atomic_mass, Attribute::electronegativity,
};

/// The five numeric attributes probed by regression.
inline constexpr std::array<Attribute, 5> kNumericAttributes = {
    Attribute::atomic_number, Attribute::group, Attribute::period,
    Attribute::atomic_mass,   Attribute::electronegativity,
};

/// Identifier such as "atomic_number".
std::string_view attribute_id(Attribute a);

/// Prose form used inside prompts, such as "atomic number".
std::string_view attribute_display_name(Attribute a);

/// Accepts either the identifier or the display name.
Attribute parse_attribute(std::string_view text);

struct ElementRecord {
    std::string symbol;
    std::string name;
    int atomic_number = 0;
    int group = 0;
    int period = 0;
    Category category = Category::reactive_nonmetal;
    double atomic_mass = 0.0;
    std::optional<double> electronegativity;
};

/// Ground truth for elements 1..50, ordered by atomic number. Immutable once
/// constructed.
class ElementTable {
  public:
    static constexpr int kSize = 50;

    /// Standard atomic masses (4 significant figures) and Pauling
    /// electronegativities; groups follow the 18-column convention.
    static const ElementTable& builtin();

    /// Parses the CSV format
    /// `symbol,name,atomic_number,group,period,category,atomic_mass,electronegativity`
    /// (header row required, empty field = missing). Rows may come in any
    /// order; the result is validated and sorted by atomic number.
    static ElementTable from_csv(std::istream& in);
    static ElementTable load(const std::filesystem::path& path);

    void write_csv(std::ostream& out) const;

    const std::vector<ElementRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }

    const ElementRecord& by_atomic_number(int z) const;
    const ElementRecord& by_symbol(std::string_view symbol) const;
    const ElementRecord& operator[](std::size_t index) const { return records_.at(index); }

  private:
    explicit ElementTable(std::vector<ElementRecord> records);
    std::vector<ElementRecord> records_;
};

struct AttributeColumn {
    std::vector<double> values;
    std::vector<bool> present;
};

/// Values in atomic-number order. Category is returned as its enum index.
AttributeColumn attribute_values(const ElementTable& table, Attribute attr);

struct PairScreenReport {
    Attribute attr_a = Attribute::group;
    Attribute attr_b = Attribute::atomic_number;
    std::size_t complete_pairs = 0;
    double pearson_abs = 0.0;
    double spearman_abs = 0.0;
    double linear_r2 = 0.0;  // R^2 of the least-squares line predicting b from a
    bool passes = false;
};

inline constexpr double kScreenCorrelationLimit = 0.30;
inline constexpr double kScreenR2Limit = 0.15;

/// Screens an attribute pair for direct statistical dependency. Rows where
/// either value is missing are dropped. Category is not accepted.
PairScreenReport screen_pair(const ElementTable& table, Attribute a, Attribute b);

/// The five attribute pairs tabulated for the non-matching condition, as
/// (target, mentioned) pairs. Note that the accompanying prose speaks of six
/// pairs; only five are tabulated.
const std::vector<std::pair<Attribute, Attribute>>& tabled_pairs();

std::string pair_id(Attribute a, Attribute b);
std::pair<Attribute, Attribute> parse_pair(std::string_view text);

}  // namespace lab
