#include "lab/prompts.hpp"

#include <algorithm>
#include <ostream>

#include "lab/error.hpp"

namespace lab {
namespace {

std::vector<PromptTemplate> build(PromptStyle style, std::initializer_list<const char*> patterns) {
    std::vector<PromptTemplate> out;
    int id = 1;
    for (const char* p : patterns) out.push_back(PromptTemplate{id++, style, p});
    return out;
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    std::size_t count = 0;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + 1)) {
        ++count;
    }
    return count;
}

}  // namespace

std::string_view style_name(PromptStyle s) { return s == PromptStyle::continuation ? "continuation" : "question"; }

PromptStyle parse_style(std::string_view text) {
    if (text == "continuation" || text == "cont") return PromptStyle::continuation;
    if (text == "question" || text == "ques") return PromptStyle::question;
    throw Error("unknown prompt style '" + std::string(text) + "'");
}

const std::vector<PromptTemplate>& template_catalog(PromptStyle style) {
    static const std::vector<PromptTemplate> continuation = build(PromptStyle::continuation, {
        "The {A} of {X} is ",
        "{X}'s {A} is ",
        "In the periodic table of elements, the {A} of {X} is ",
        "In the periodic table, the {A} of {X} is ",
        "Regarding {X}, its {A} is ",
        "For the element {X}, the {A} is ",
        "The {A} value of {X} is ",
        "According to chemistry references, the {A} of {X} is ",
        "The {A} for the element {X} is ",
        "Chemically speaking, {X}'s {A} is ",
        "In chemistry, the {A} of the element {X} is ",
    });
    static const std::vector<PromptTemplate> question = build(PromptStyle::question, {
        "What is the {A} of {X}?",
        "Which value represents {X}'s {A}?",
        "In the periodic table of elements, what is the {A} of {X}?",
        "In the periodic table, what is the {A} of {X}?",
        "Regarding {X}, what is its {A}?",
        "For the element {X}, what is the {A}?",
        "What {A} does {X} have?",
        "Can you tell me the {A} of {X}?",
        "What is the {A} for the element {X}?",
        "Do you know {X}'s {A}?",
        "In chemistry, what is the {A} of the element {X}?",
    });
    return style == PromptStyle::continuation ? continuation : question;
}

PromptInstance render_prompt(const PromptTemplate& tmpl, std::string_view element, std::string_view attribute,
                             int element_index, int attribute_index) {
    if (element.empty()) throw Error("render_prompt: empty element name");
    if (attribute.empty()) throw Error("render_prompt: empty attribute name");
    const std::string_view pattern = tmpl.pattern;
    if (count_occurrences(pattern, "{A}") != 1 || count_occurrences(pattern, "{X}") != 1) {
        throw Error("render_prompt: template " + std::to_string(tmpl.id) + " must contain {A} and {X} exactly once");
    }

    PromptInstance out;
    out.element_index = element_index;
    out.attribute_index = attribute_index;
    out.template_index = tmpl.id;
    out.style = tmpl.style;

    std::size_t pos = 0;
    while (pos < pattern.size()) {
        if (pattern.compare(pos, 3, "{A}") == 0) {
            out.attribute_span = {out.text.size(), out.text.size() + attribute.size()};
            out.text.append(attribute);
            pos += 3;
        } else if (pattern.compare(pos, 3, "{X}") == 0) {
            out.element_span = {out.text.size(), out.text.size() + element.size()};
            out.text.append(element);
            pos += 3;
        } else {
            out.text.push_back(pattern[pos++]);
        }
    }

    const std::string_view text = out.text;
    if (text.substr(out.element_span.begin, out.element_span.size()) != element ||
        text.substr(out.attribute_span.begin, out.attribute_span.size()) != attribute) {
        throw Error("render_prompt: span verification failed");
    }
    return out;
}

std::vector<int> atomic_number_range(int lo, int hi) {
    std::vector<int> out;
    for (int z = lo; z <= hi; ++z) out.push_back(z);
    return out;
}

std::vector<PromptInstance> generate_dataset(const ElementTable& table, const DatasetRequest& request) {
    if (request.attributes.empty() || request.styles.empty() || request.atomic_numbers.empty()) {
        throw Error("generate_dataset: empty selection");
    }
    for (int z : request.atomic_numbers) {
        if (z < 1 || z > ElementTable::kSize) throw Error("generate_dataset: atomic number outside 1..50");
    }
    std::vector<int> template_ids = request.template_ids;
    if (template_ids.empty()) template_ids = atomic_number_range(1, kTemplatesPerStyle);
    for (int k : template_ids) {
        if (k < 1 || k > kTemplatesPerStyle) throw Error("generate_dataset: template id outside 1..11");
    }

    std::vector<PromptStyle> styles = request.styles;
    std::sort(styles.begin(), styles.end());
    std::vector<Attribute> attributes = request.attributes;
    std::sort(attributes.begin(), attributes.end());
    std::vector<int> numbers = request.atomic_numbers;
    std::sort(numbers.begin(), numbers.end());
    std::sort(template_ids.begin(), template_ids.end());

    std::vector<PromptInstance> out;
    out.reserve(styles.size() * attributes.size() * numbers.size() * template_ids.size());
    for (PromptStyle style : styles) {
        const auto& catalog = template_catalog(style);
        for (Attribute attr : attributes) {
            for (int z : numbers) {
                const ElementRecord& element = table.by_atomic_number(z);
                for (int k : template_ids) {
                    out.push_back(render_prompt(catalog[static_cast<std::size_t>(k - 1)], element.symbol,
                                                attribute_display_name(attr), z - 1, static_cast<int>(attr)));
                }
            }
        }
    }
    return out;
}

nlohmann::json to_json(const PromptInstance& p) {
    return nlohmann::json{
        {"text", p.text},
        {"i", p.element_index},
        {"j", p.attribute_index},
        {"k", p.template_index},
        {"style", style_name(p.style)},
        {"spans",
         {{"element", {p.element_span.begin, p.element_span.end}},
          {"attribute", {p.attribute_span.begin, p.attribute_span.end}}}},
    };
}

PromptInstance prompt_from_json(const nlohmann::json& j) {
    PromptInstance p;
    p.text = j.at("text").get<std::string>();
    p.element_index = j.at("i").get<int>();
    p.attribute_index = j.at("j").get<int>();
    p.template_index = j.at("k").get<int>();
    p.style = parse_style(j.at("style").get<std::string>());
    const auto& spans = j.at("spans");
    p.element_span = {spans.at("element").at(0).get<std::size_t>(), spans.at("element").at(1).get<std::size_t>()};
    p.attribute_span = {spans.at("attribute").at(0).get<std::size_t>(), spans.at("attribute").at(1).get<std::size_t>()};
    return p;
}

void write_jsonl(std::ostream& out, std::span<const PromptInstance> prompts) {
    for (const auto& p : prompts) out << to_json(p).dump() << '\n';
}

}  // namespace lab
