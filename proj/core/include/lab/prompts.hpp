#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lab/elements.hpp"

namespace lab {

enum class PromptStyle { continuation, question };

std::string_view style_name(PromptStyle s);
PromptStyle parse_style(std::string_view text);

/// Half-open character range [begin, end) into a prompt's text.
struct CharSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool overlaps(const CharSpan& other) const { return begin < other.end && other.begin < end; }
    friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

/// A pattern with exactly one `{A}` (attribute) and one `{X}` (element)
/// placeholder.
struct PromptTemplate {
    int id = 0;  // 1..11 within its style
    PromptStyle style = PromptStyle::continuation;
    std::string pattern;
};

inline constexpr int kTemplatesPerStyle = 11;

/// Prompt used to host the patched residual in geometric interventions.
inline constexpr std::string_view kInterventionPrompt = "In the periodic table, the atomic number of element";

/// Control prompt for the number-only space.
inline constexpr std::string_view kNumberControlPrompt = "In numbers, the Arabic numeral for number";

/// Eleven templates per style in fixed order. Templates 1 and 2 of each
/// style are the published ones; 3..11 are fixed paraphrases. Template 3 of
/// the continuation set is the one used for attention profiles.
const std::vector<PromptTemplate>& template_catalog(PromptStyle style);

struct PromptInstance {
    std::string text;
    int element_index = 0;    // row in the element table (atomic number - 1)
    int attribute_index = 0;  // Attribute enum value
    int template_index = 0;   // template id, 1..11
    PromptStyle style = PromptStyle::continuation;
    CharSpan element_span;
    CharSpan attribute_span;
};

/// Substitutes one element and one attribute into a template. Trailing
/// whitespace is preserved byte-for-byte.
PromptInstance render_prompt(const PromptTemplate& tmpl, std::string_view element, std::string_view attribute,
                             int element_index = 0, int attribute_index = 0);

struct DatasetRequest {
    std::vector<Attribute> attributes;
    std::vector<PromptStyle> styles;
    std::vector<int> atomic_numbers;  // subset of 1..50
    std::vector<int> template_ids;    // empty = all 11
};

/// Cartesian product of the request, ordered by (style, attribute,
/// element, template).
std::vector<PromptInstance> generate_dataset(const ElementTable& table, const DatasetRequest& request);

/// Atomic numbers lo..hi inclusive.
std::vector<int> atomic_number_range(int lo = 1, int hi = ElementTable::kSize);

nlohmann::json to_json(const PromptInstance& p);
PromptInstance prompt_from_json(const nlohmann::json& j);

/// One JSON object per line.
void write_jsonl(std::ostream& out, std::span<const PromptInstance> prompts);

}  // namespace lab
