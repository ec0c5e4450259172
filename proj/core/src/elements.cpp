#include "lab/elements.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "lab/error.hpp"
#include "lab/stats.hpp"

namespace lab {
namespace {

using C = Category;

struct Row {
    const char* symbol;
    const char* name;
    int group;
    int period;
    Category category;
    double mass;
    double electronegativity;  // < 0 means no accepted Pauling value
};

// clang-format off
constexpr Row kBuiltin[ElementTable::kSize] = {
    {"H",  "Hydrogen",   1,  1, C::reactive_nonmetal,     1.008,  2.20},
    {"He", "Helium",     18, 1, C::noble_gas,             4.003,  -1},
    {"Li", "Lithium",    1,  2, C::alkali_metal,          6.940,  0.98},
    {"Be", "Beryllium",  2,  2, C::alkaline_earth_metal,  9.012,  1.57},
    {"B",  "Boron",      13, 2, C::metalloid,             10.81,  2.04},
    {"C",  "Carbon",     14, 2, C::reactive_nonmetal,     12.01,  2.55},
    {"N",  "Nitrogen",   15, 2, C::reactive_nonmetal,     14.01,  3.04},
    {"O",  "Oxygen",     16, 2, C::reactive_nonmetal,     16.00,  3.44},
    {"F",  "Fluorine",   17, 2, C::reactive_nonmetal,     19.00,  3.98},
    {"Ne", "Neon",       18, 2, C::noble_gas,             20.18,  -1},
    {"Na", "Sodium",     1,  3, C::alkali_metal,          22.99,  0.93},
    {"Mg", "Magnesium",  2,  3, C::alkaline_earth_metal,  24.31,  1.31},
    {"Al", "Aluminium",  13, 3, C::post_transition_metal, 26.98,  1.61},
    {"Si", "Silicon",    14, 3, C::metalloid,             28.09,  1.90},
    {"P",  "Phosphorus", 15, 3, C::reactive_nonmetal,     30.97,  2.19},
    {"S",  "Sulfur",     16, 3, C::reactive_nonmetal,     32.06,  2.58},
    {"Cl", "Chlorine",   17, 3, C::reactive_nonmetal,     35.45,  3.16},
    {"Ar", "Argon",      18, 3, C::noble_gas,             39.95,  -1},
    {"K",  "Potassium",  1,  4, C::alkali_metal,          39.10,  0.82},
    {"Ca", "Calcium",    2,  4, C::alkaline_earth_metal,  40.08,  1.00},
    {"Sc", "Scandium",   3,  4, C::transition_metal,      44.96,  1.36},
    {"Ti", "Titanium",   4,  4, C::transition_metal,      47.87,  1.54},
    {"V",  "Vanadium",   5,  4, C::transition_metal,      50.94,  1.63},
    {"Cr", "Chromium",   6,  4, C::transition_metal,      52.00,  1.66},
    {"Mn", "Manganese",  7,  4, C::transition_metal,      54.94,  1.55},
    {"Fe", "Iron",       8,  4, C::transition_metal,      55.85,  1.83},
    {"Co", "Cobalt",     9,  4, C::transition_metal,      58.93,  1.88},
    {"Ni", "Nickel",     10, 4, C::transition_metal,      58.69,  1.91},
    {"Cu", "Copper",     11, 4, C::transition_metal,      63.55,  1.90},
    {"Zn", "Zinc",       12, 4, C::transition_metal,      65.38,  1.65},
    {"Ga", "Gallium",    13, 4, C::post_transition_metal, 69.72,  1.81},
    {"Ge", "Germanium",  14, 4, C::metalloid,             72.63,  2.01},
    {"As", "Arsenic",    15, 4, C::metalloid,             74.92,  2.18},
    {"Se", "Selenium",   16, 4, C::reactive_nonmetal,     78.97,  2.55},
    {"Br", "Bromine",    17, 4, C::reactive_nonmetal,     79.90,  2.96},
    {"Kr", "Krypton",    18, 4, C::noble_gas,             83.80,  3.00},
    {"Rb", "Rubidium",   1,  5, C::alkali_metal,          85.47,  0.82},
    {"Sr", "Strontium",  2,  5, C::alkaline_earth_metal,  87.62,  0.95},
    {"Y",  "Yttrium",    3,  5, C::transition_metal,      88.91,  1.22},
    {"Zr", "Zirconium",  4,  5, C::transition_metal,      91.22,  1.33},
    {"Nb", "Niobium",    5,  5, C::transition_metal,      92.91,  1.60},
    {"Mo", "Molybdenum", 6,  5, C::transition_metal,      95.95,  2.16},
    {"Tc", "Technetium", 7,  5, C::transition_metal,      98.00,  1.90},
    {"Ru", "Ruthenium",  8,  5, C::transition_metal,      101.1,  2.20},
    {"Rh", "Rhodium",    9,  5, C::transition_metal,      102.9,  2.28},
    {"Pd", "Palladium",  10, 5, C::transition_metal,      106.4,  2.20},
    {"Ag", "Silver",     11, 5, C::transition_metal,      107.9,  1.93},
    {"Cd", "Cadmium",    12, 5, C::transition_metal,      112.4,  1.69},
    {"In", "Indium",     13, 5, C::post_transition_metal, 114.8,  1.78},
    {"Sn", "Tin",        14, 5, C::post_transition_metal, 118.7,  1.96},
};
// clang-format on

constexpr std::array<std::string_view, kCategoryCount> kCategoryNames = {
    "alkali-metal",       "alkaline-earth-metal", "transition-metal",
    "post-transition-metal", "metalloid",          "reactive-nonmetal",
    "noble-gas",          "lanthanide",           "actinide",
};

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(current);
            current.clear();
        } else if (c != '\r') {
            current.push_back(c);
        }
    }
    fields.push_back(current);
    return fields;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

template <class T>
T parse_number(const std::string& field, std::size_t line, const char* column) {
    T value{};
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw Error("element table line " + std::to_string(line) + ": malformed " + column + " '" + field + "'");
    }
    return value;
}

void validate(const std::vector<ElementRecord>& records) {
    if (records.size() != static_cast<std::size_t>(ElementTable::kSize)) {
        throw Error("element table: expected 50 records, got " + std::to_string(records.size()));
    }
    std::set<int> seen;
    for (const auto& r : records) {
        if (!seen.insert(r.atomic_number).second) {
            throw Error("element table: duplicate atomic number " + std::to_string(r.atomic_number));
        }
        if (r.atomic_number < 1 || r.atomic_number > ElementTable::kSize) {
            throw Error("element table: atomic number " + std::to_string(r.atomic_number) + " out of range 1..50");
        }
        if (r.group < 1 || r.group > 18) {
            throw Error("element table: group " + std::to_string(r.group) + " out of range for " + r.symbol);
        }
        if (r.period < 1 || r.period > 5) {
            throw Error("element table: period " + std::to_string(r.period) + " out of range for " + r.symbol);
        }
        if (r.symbol.empty() || r.name.empty()) throw Error("element table: empty symbol or name");
    }
}

}  // namespace

std::string_view category_name(Category c) { return kCategoryNames[static_cast<std::size_t>(c)]; }

Category parse_category(std::string_view text) {
    std::string norm = trim(text);
    std::replace(norm.begin(), norm.end(), '_', '-');
    std::replace(norm.begin(), norm.end(), ' ', '-');
    std::transform(norm.begin(), norm.end(), norm.begin(), [](unsigned char c) { return std::tolower(c); });
    for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
        if (kCategoryNames[i] == norm) return static_cast<Category>(i);
    }
    throw Error("unknown element category '" + std::string(text) + "'");
}

std::string_view attribute_id(Attribute a) {
    switch (a) {
        case Attribute::atomic_number: return "atomic_number";
        case Attribute::group: return "group";
        case Attribute::period: return "period";
        case Attribute::category: return "category";
        case Attribute::atomic_mass: return "atomic_mass";
        case Attribute::electronegativity: return "electronegativity";
    }
    throw Error("invalid attribute");
}

std::string_view attribute_display_name(Attribute a) {
    switch (a) {
        case Attribute::atomic_number: return "atomic number";
        case Attribute::group: return "group";
        case Attribute::period: return "period";
        case Attribute::category: return "category";
        case Attribute::atomic_mass: return "atomic mass";
        case Attribute::electronegativity: return "electronegativity";
    }
    throw Error("invalid attribute");
}

Attribute parse_attribute(std::string_view text) {
    for (Attribute a : kAllAttributes) {
        if (text == attribute_id(a) || text == attribute_display_name(a)) return a;
    }
    throw Error("unknown attribute id '" + std::string(text) + "'");
}

ElementTable::ElementTable(std::vector<ElementRecord> records) : records_(std::move(records)) {
    validate(records_);
    std::sort(records_.begin(), records_.end(),
              [](const ElementRecord& a, const ElementRecord& b) { return a.atomic_number < b.atomic_number; });
}

const ElementTable& ElementTable::builtin() {
    static const ElementTable table = [] {
        std::vector<ElementRecord> records;
        records.reserve(kSize);
        for (int i = 0; i < kSize; ++i) {
            const Row& row = kBuiltin[i];
            ElementRecord r;
            r.symbol = row.symbol;
            r.name = row.name;
            r.atomic_number = i + 1;
            r.group = row.group;
            r.period = row.period;
            r.category = row.category;
            r.atomic_mass = row.mass;
            if (row.electronegativity >= 0.0) r.electronegativity = row.electronegativity;
            records.push_back(std::move(r));
        }
        return ElementTable(std::move(records));
    }();
    return table;
}

ElementTable ElementTable::from_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error("element table: empty input");
    const std::string expected = "symbol,name,atomic_number,group,period,category,atomic_mass,electronegativity";
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line != expected) throw Error("element table: unexpected header '" + line + "'");

    std::vector<ElementRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != 8) {
            throw Error("element table line " + std::to_string(line_no) + ": expected 8 fields, got " +
                        std::to_string(fields.size()));
        }
        ElementRecord r;
        r.symbol = trim(fields[0]);
        r.name = trim(fields[1]);
        r.atomic_number = parse_number<int>(trim(fields[2]), line_no, "atomic_number");
        r.group = parse_number<int>(trim(fields[3]), line_no, "group");
        r.period = parse_number<int>(trim(fields[4]), line_no, "period");
        r.category = parse_category(fields[5]);
        r.atomic_mass = parse_number<double>(trim(fields[6]), line_no, "atomic_mass");
        const std::string en = trim(fields[7]);
        if (!en.empty()) r.electronegativity = parse_number<double>(en, line_no, "electronegativity");
        records.push_back(std::move(r));
    }
    return ElementTable(std::move(records));
}

ElementTable ElementTable::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open element table '" + path.string() + "'");
    return from_csv(in);
}

void ElementTable::write_csv(std::ostream& out) const {
    out << "symbol,name,atomic_number,group,period,category,atomic_mass,electronegativity\n";
    for (const auto& r : records_) {
        out << r.symbol << ',' << r.name << ',' << r.atomic_number << ',' << r.group << ',' << r.period << ','
            << category_name(r.category) << ',' << r.atomic_mass << ',';
        if (r.electronegativity) out << *r.electronegativity;
        out << '\n';
    }
}

const ElementRecord& ElementTable::by_atomic_number(int z) const {
    if (z < 1 || z > static_cast<int>(records_.size())) {
        throw Error("no element with atomic number " + std::to_string(z));
    }
    return records_[static_cast<std::size_t>(z - 1)];
}

const ElementRecord& ElementTable::by_symbol(std::string_view symbol) const {
    for (const auto& r : records_) {
        if (r.symbol == symbol) return r;
    }
    throw Error("no element with symbol '" + std::string(symbol) + "'");
}

AttributeColumn attribute_values(const ElementTable& table, Attribute attr) {
    AttributeColumn col;
    col.values.reserve(table.size());
    col.present.reserve(table.size());
    for (const auto& r : table.records()) {
        double v = 0.0;
        bool present = true;
        switch (attr) {
            case Attribute::atomic_number: v = r.atomic_number; break;
            case Attribute::group: v = r.group; break;
            case Attribute::period: v = r.period; break;
            case Attribute::category: v = static_cast<double>(static_cast<int>(r.category)); break;
            case Attribute::atomic_mass: v = r.atomic_mass; break;
            case Attribute::electronegativity:
                present = r.electronegativity.has_value();
                v = r.electronegativity.value_or(0.0);
                break;
            default: throw Error("unknown attribute id");
        }
        col.values.push_back(v);
        col.present.push_back(present);
    }
    return col;
}

PairScreenReport screen_pair(const ElementTable& table, Attribute a, Attribute b) {
    if (a == Attribute::category || b == Attribute::category) {
        throw Error("screen_pair: category is not a numeric attribute");
    }
    const auto ca = attribute_values(table, a);
    const auto cb = attribute_values(table, b);
    std::vector<double> xa, xb;
    for (std::size_t i = 0; i < ca.values.size(); ++i) {
        if (ca.present[i] && cb.present[i]) {
            xa.push_back(ca.values[i]);
            xb.push_back(cb.values[i]);
        }
    }
    if (xa.size() < 3) throw Error("screen_pair: fewer than 3 complete pairs");

    PairScreenReport report;
    report.attr_a = a;
    report.attr_b = b;
    report.complete_pairs = xa.size();
    report.pearson_abs = std::abs(num::pearson(xa, xb));
    report.spearman_abs = std::abs(num::spearman(xa, xb));

    // Least-squares line b ~ a.
    const double ma = num::mean(xa);
    const double mb = num::mean(xb);
    double sab = 0.0, saa = 0.0;
    for (std::size_t i = 0; i < xa.size(); ++i) {
        sab += (xa[i] - ma) * (xb[i] - mb);
        saa += (xa[i] - ma) * (xa[i] - ma);
    }
    const double slope = sab / saa;
    std::vector<double> fitted(xa.size());
    for (std::size_t i = 0; i < xa.size(); ++i) fitted[i] = mb + slope * (xa[i] - ma);
    report.linear_r2 = num::r2(xb, fitted);

    report.passes = report.pearson_abs < kScreenCorrelationLimit && report.spearman_abs < kScreenCorrelationLimit &&
                    report.linear_r2 < kScreenR2Limit;
    return report;
}

const std::vector<std::pair<Attribute, Attribute>>& tabled_pairs() {
    static const std::vector<std::pair<Attribute, Attribute>> pairs = {
        {Attribute::group, Attribute::atomic_number},
        {Attribute::group, Attribute::period},
        {Attribute::group, Attribute::atomic_mass},
        {Attribute::electronegativity, Attribute::atomic_number},
        {Attribute::electronegativity, Attribute::atomic_mass},
    };
    return pairs;
}

std::string pair_id(Attribute a, Attribute b) {
    return std::string(attribute_id(a)) + ":" + std::string(attribute_id(b));
}

std::pair<Attribute, Attribute> parse_pair(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) throw Error("attribute pair must look like 'a:b', got '" + std::string(text) + "'");
    return {parse_attribute(text.substr(0, colon)), parse_attribute(text.substr(colon + 1))};
}

}  // namespace lab
