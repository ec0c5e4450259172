#include "lab/config.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "lab/elements.hpp"
#include "lab/encoding.hpp"
#include "lab/error.hpp"
#include "lab/prompts.hpp"

namespace lab {
namespace {

using nlohmann::json;

class TomlParser {
  public:
    explicit TomlParser(std::string_view text) : text_(text) {}

    json parse() {
        json root = json::object();
        json* table = &root;
        while (true) {
            skip_blank_lines();
            if (at_end()) break;
            if (peek() == '[') {
                ++pos_;
                skip_spaces();
                const std::string name = parse_key();
                skip_spaces();
                expect(']');
                if (root.contains(name)) fail("table '" + name + "' defined twice");
                root[name] = json::object();
                table = &root[name];
            } else {
                const std::string key = parse_key();
                skip_spaces();
                expect('=');
                skip_spaces();
                if (table->contains(key)) fail("duplicate key '" + key + "'");
                (*table)[key] = parse_value();
            }
            finish_line();
        }
        return root;
    }

  private:
    std::string_view text_;
    std::size_t pos_ = 0;
    int line_ = 1;

    bool at_end() const { return pos_ >= text_.size(); }
    char peek() const { return at_end() ? '\0' : text_[pos_]; }

    [[noreturn]] void fail(const std::string& what) const {
        throw Error(fmt::format("config line {}: {}", line_, what));
    }

    void expect(char c) {
        if (peek() != c) fail(fmt::format("expected '{}'", c));
        ++pos_;
    }

    void skip_spaces() {
        while (!at_end() && (peek() == ' ' || peek() == '\t')) ++pos_;
    }

    void skip_comment() {
        if (peek() == '#') {
            while (!at_end() && peek() != '\n') ++pos_;
        }
    }

    void newline() {
        if (peek() == '\r') ++pos_;
        if (peek() != '\n') fail("expected end of line");
        ++pos_;
        ++line_;
    }

    void skip_blank_lines() {
        while (!at_end()) {
            skip_spaces();
            skip_comment();
            if (at_end()) return;
            if (peek() == '\n' || peek() == '\r') {
                newline();
            } else {
                return;
            }
        }
    }

    // Whitespace, comments and newlines inside arrays.
    void skip_array_space() {
        while (!at_end()) {
            skip_spaces();
            skip_comment();
            if (peek() == '\n' || peek() == '\r') {
                newline();
            } else {
                return;
            }
        }
    }

    void finish_line() {
        skip_spaces();
        skip_comment();
        if (!at_end()) newline();
    }

    std::string parse_key() {
        if (peek() == '"') return parse_basic_string();
        const std::size_t start = pos_;
        while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) ++pos_;
        if (pos_ == start) fail("expected a key");
        return std::string(text_.substr(start, pos_ - start));
    }

    std::string parse_basic_string() {
        expect('"');
        std::string out;
        while (true) {
            if (at_end() || peek() == '\n') fail("unterminated string");
            const char c = text_[pos_++];
            if (c == '"') break;
            if (c != '\\') {
                out += c;
                continue;
            }
            if (at_end()) fail("unterminated escape");
            const char e = text_[pos_++];
            switch (e) {
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case 'r': out += '\r'; break;
                default: fail(fmt::format("unsupported escape '\\{}'", e));
            }
        }
        return out;
    }

    std::string parse_literal_string() {
        expect('\'');
        const std::size_t start = pos_;
        while (!at_end() && peek() != '\'' && peek() != '\n') ++pos_;
        if (peek() != '\'') fail("unterminated string");
        std::string out(text_.substr(start, pos_ - start));
        ++pos_;
        return out;
    }

    json parse_value() {
        const char c = peek();
        if (c == '"') return parse_basic_string();
        if (c == '\'') return parse_literal_string();
        if (c == '[') return parse_array();
        return parse_scalar();
    }

    json parse_array() {
        expect('[');
        json arr = json::array();
        skip_array_space();
        while (peek() != ']') {
            if (at_end()) fail("unterminated array");
            arr.push_back(parse_value());
            skip_array_space();
            if (peek() == ',') {
                ++pos_;
                skip_array_space();
            } else if (peek() != ']') {
                fail("expected ',' or ']' in array");
            }
        }
        ++pos_;
        return arr;
    }

    json parse_scalar() {
        const std::size_t start = pos_;
        while (!at_end() && peek() != ',' && peek() != ']' && peek() != '#' && peek() != '\n' && peek() != '\r' &&
               peek() != ' ' && peek() != '\t') {
            ++pos_;
        }
        std::string token(text_.substr(start, pos_ - start));
        if (token.empty()) fail("expected a value");
        if (token == "true") return true;
        if (token == "false") return false;
        if (token == "inf" || token == "+inf") return std::numeric_limits<double>::infinity();
        if (token == "-inf") return -std::numeric_limits<double>::infinity();
        if (token == "nan" || token == "+nan" || token == "-nan") return std::numeric_limits<double>::quiet_NaN();

        std::string digits;
        for (std::size_t i = 0; i < token.size(); ++i) {
            if (token[i] != '_') {
                digits += token[i];
            } else if (i == 0 || i + 1 == token.size() || !std::isdigit(static_cast<unsigned char>(token[i - 1])) ||
                       !std::isdigit(static_cast<unsigned char>(token[i + 1]))) {
                fail("misplaced '_' in number '" + token + "'");
            }
        }
        const bool is_float = digits.find_first_of(".eE") != std::string::npos;
        errno = 0;
        char* end = nullptr;
        if (is_float) {
            const double v = std::strtod(digits.c_str(), &end);
            if (end != digits.c_str() + digits.size() || errno == ERANGE) fail("bad number '" + token + "'");
            return v;
        }
        const long long v = std::strtoll(digits.c_str(), &end, 10);
        if (digits.empty() || end != digits.c_str() + digits.size() || errno == ERANGE) {
            fail("bad value '" + token + "'");
        }
        return v;
    }
};

enum class Kind { integer, number, string, boolean, integers, numbers, strings };

struct Field {
    std::string key;
    Kind kind;
    json fallback;  // null = required (top level) or derived later
};

std::string_view kind_name(Kind k) {
    switch (k) {
        case Kind::integer: return "an integer";
        case Kind::number: return "a number";
        case Kind::string: return "a string";
        case Kind::boolean: return "a boolean";
        case Kind::integers: return "an array of integers";
        case Kind::numbers: return "an array of numbers";
        case Kind::strings: return "an array of strings";
    }
    return "?";
}

// Returns the coerced value, or nullopt on a type mismatch.
std::optional<json> coerce(const json& v, Kind k) {
    const auto is_num = [](const json& x) { return x.is_number(); };
    switch (k) {
        case Kind::integer:
            if (v.is_number_integer()) return std::optional<json>(std::in_place, v);
            return std::nullopt;
        case Kind::number:
            if (is_num(v)) return std::optional<json>(std::in_place, v.get<double>());
            return std::nullopt;
        case Kind::string:
            if (v.is_string()) return std::optional<json>(std::in_place, v);
            return std::nullopt;
        case Kind::boolean:
            if (v.is_boolean()) return std::optional<json>(std::in_place, v);
            return std::nullopt;
        case Kind::integers:
        case Kind::numbers:
        case Kind::strings: {
            if (!v.is_array()) return std::nullopt;
            json out = json::array();
            const Kind inner = k == Kind::integers ? Kind::integer : k == Kind::numbers ? Kind::number : Kind::string;
            for (const auto& e : v) {
                auto c = coerce(e, inner);
                if (!c) return std::nullopt;
                out.push_back(*c);
            }
            return out;
        }
    }
    return std::nullopt;
}

json numeric_attribute_ids() {
    json out = json::array();
    for (Attribute a : kNumericAttributes) out.push_back(std::string(attribute_id(a)));
    return out;
}

const std::map<std::string, std::vector<Field>>& param_schemas() {
    static const std::map<std::string, std::vector<Field>> schemas = {
        {"tsne",
         {{"attribute", Kind::string, "atomic_number"},
          {"style", Kind::string, "continuation"},
          {"layer", Kind::integer, -1},
          {"pca_dim", Kind::integer, 50},
          {"perplexity", Kind::number, 30.0},
          {"iterations", Kind::integer, 1000}}},
        {"intervention",
         {{"space", Kind::integer, 3},
          {"layer", Kind::integer, -1},
          {"pca_dim", Kind::integer, 30},
          {"max_new_tokens", Kind::integer, 4}}},
        {"layer_sweep",
         {{"space", Kind::integer, 3},
          {"layers", Kind::integers, json::array()},
          {"pca_dim", Kind::integer, 30},
          {"max_new_tokens", Kind::integer, 4}}},
        {"probe_direct",
         {{"regression", Kind::strings, numeric_attribute_ids()},
          {"classification", Kind::strings, json::array({"group", "period", "category"})},
          {"style", Kind::string, "continuation"},
          {"templates", Kind::integers, json::array()},
          {"folds", Kind::integer, 5}}},
        {"probe_delta_style",
         {{"attributes", Kind::strings, numeric_attribute_ids()},
          {"window", Kind::numbers, json::array({0.5, 1.0})},
          {"alpha", Kind::number, 0.05},
          {"level", Kind::number, 0.95},
          {"templates", Kind::integers, json::array()},
          {"folds", Kind::integer, 5}}},
        {"indirect_recall",
         {{"target", Kind::string, "group"},
          {"mentioned", Kind::strings, json::array()},
          {"force", Kind::boolean, false},
          {"templates", Kind::integers, json::array()},
          {"window", Kind::numbers, json::array({0.6, 1.0})},
          {"alpha", Kind::number, 0.05},
          {"folds", Kind::integer, 5}}},
        {"rep_map",
         {{"pairs", Kind::strings, json::array()},
          {"template", Kind::integer, 1},
          {"style", Kind::string, "continuation"},
          {"pca_dim", Kind::integer, 20},
          {"folds", Kind::integer, 5}}},
        {"weight_similarity",
         {{"pairs", Kind::strings, json::array()},
          {"style", Kind::string, "continuation"},
          {"templates", Kind::integers, json::array()},
          {"level", Kind::number, 0.999},
          {"folds", Kind::integer, 5}}},
        {"logit_lens",
         {{"elements", Kind::integers, json::array({12})},
          {"attribute", Kind::string, "atomic_number"},
          {"template", Kind::integer, 1},
          {"top_k", Kind::integer, 50}}},
        {"tuned_lens",
         {{"train_prompts", Kind::integer, 24},
          {"heldout_prompts", Kind::integer, 12},
          {"iterations", Kind::integer, 1000},
          {"learning_rate", Kind::number, 1e-3},
          {"batch_size", Kind::integer, 0}}},
        {"attention",
         {{"template", Kind::integer, 3},
          {"style", Kind::string, "continuation"},
          {"attribute", Kind::string, "atomic_number"},
          {"elements", Kind::integers, json::array()}}},
        {"number_distance",
         {{"first", Kind::integer, 1}, {"last", Kind::integer, 50}, {"folds", Kind::integer, 5}}},
        {"pair_screen", {{"pairs", Kind::strings, json::array()}}},
    };
    return schemas;
}

const std::vector<Field>& top_schema() {
    static const std::vector<Field> fields = {
        {"experiment", Kind::string, nullptr},
        {"seed", Kind::integer, nullptr},
        {"backend", Kind::string, "toy"},
        {"output_dir", Kind::string, nullptr},
        {"element_table", Kind::string, ""},
    };
    return fields;
}

const std::vector<Field>& toy_schema() {
    static const std::vector<Field> fields = {
        {"layers", Kind::integer, 8},
        {"hidden", Kind::integer, 32},
        {"heads", Kind::integer, 4},
        {"weights_seed", Kind::integer, nullptr},
    };
    return fields;
}

const std::vector<Field>& planted_schema() {
    static const std::vector<Field> fields = {
        {"space", Kind::integer, 3},
        {"noise", Kind::number, 0.05},
        {"layers", Kind::integer, 8},
        {"hidden", Kind::integer, 256},
        {"seed", Kind::integer, nullptr},
    };
    return fields;
}

json fill_table(const json& given, const std::vector<Field>& schema, const std::string& prefix,
                std::vector<std::string>& errors) {
    json out = json::object();
    if (!given.is_object()) {
        errors.push_back(prefix + ": expected a table");
        return out;
    }
    for (const auto& [key, value] : given.items()) {
        const bool known = std::any_of(schema.begin(), schema.end(), [&](const Field& f) { return f.key == key; });
        if (!known) errors.push_back(fmt::format("{}{}: unknown key", prefix.empty() ? "" : prefix + ".", key));
    }
    for (const Field& f : schema) {
        const std::string name = prefix.empty() ? f.key : prefix + "." + f.key;
        if (!given.contains(f.key)) {
            out[f.key] = f.fallback;
            continue;
        }
        auto v = coerce(given.at(f.key), f.kind);
        if (!v) {
            errors.push_back(fmt::format("{}: expected {}", name, kind_name(f.kind)));
            continue;
        }
        out[f.key] = *v;
    }
    return out;
}

// Value checks that need the domain parsers. Each failure names its key.
void check(std::vector<std::string>& errors, const std::string& key, const std::function<void()>& body) {
    try {
        body();
    } catch (const std::exception& e) {
        errors.push_back(key + ": " + e.what());
    }
}

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(what);
}

void check_params(const std::string& id, const json& p, std::vector<std::string>& errors) {
    const auto has = [&](const char* k) { return p.contains(k) && !p.at(k).is_null(); };
    const auto key = [](const char* k) { return std::string("params.") + k; };
    for (const char* k : {"attribute", "target"}) {
        if (has(k)) check(errors, key(k), [&] { parse_attribute(p.at(k).get<std::string>()); });
    }
    for (const char* k : {"regression", "classification", "attributes", "mentioned"}) {
        if (has(k)) {
            check(errors, key(k), [&] {
                for (const auto& a : p.at(k)) parse_attribute(a.get<std::string>());
            });
        }
    }
    if (has("regression")) {
        check(errors, key("regression"), [&] {
            for (const auto& a : p.at("regression")) {
                require(parse_attribute(a.get<std::string>()) != Attribute::category, "category has no regression target");
            }
        });
    }
    if (has("style")) check(errors, key("style"), [&] { parse_style(p.at("style").get<std::string>()); });
    if (has("pairs")) {
        check(errors, key("pairs"), [&] {
            for (const auto& a : p.at("pairs")) parse_pair(a.get<std::string>());
        });
    }
    if (has("space")) {
        check(errors, key("space"), [&] {
            const int s = p.at("space").get<int>();
            require(s >= 1 && s <= 10, "space must be in 1..10");
        });
    }
    if (has("window")) {
        check(errors, key("window"), [&] {
            const auto& w = p.at("window");
            require(w.size() == 2, "window needs two depths");
            const double lo = w[0].get<double>(), hi = w[1].get<double>();
            require(lo >= 0.0 && hi <= 1.0 && lo < hi, "window must satisfy 0 <= lo < hi <= 1");
        });
    }
    for (const char* k : {"template"}) {
        if (has(k)) {
            check(errors, key(k), [&] {
                const int t = p.at(k).get<int>();
                require(t >= 1 && t <= kTemplatesPerStyle, "template must be in 1..11");
            });
        }
    }
    if (has("templates")) {
        check(errors, key("templates"), [&] {
            for (const auto& t : p.at("templates")) {
                require(t.get<int>() >= 1 && t.get<int>() <= kTemplatesPerStyle, "templates must be in 1..11");
            }
        });
    }
    if (has("elements")) {
        check(errors, key("elements"), [&] {
            for (const auto& z : p.at("elements")) {
                require(z.get<int>() >= 1 && z.get<int>() <= ElementTable::kSize, "atomic numbers must be in 1..50");
            }
        });
    }
    for (const char* k : {"folds"}) {
        if (has(k)) check(errors, key(k), [&] { require(p.at(k).get<int>() >= 2, "need at least 2 folds"); });
    }
    for (const char* k : {"pca_dim", "iterations", "max_new_tokens", "top_k", "train_prompts", "heldout_prompts"}) {
        if (has(k)) check(errors, key(k), [&] { require(p.at(k).get<long long>() >= 1, "must be positive"); });
    }
    for (const char* k : {"alpha", "level"}) {
        if (has(k)) {
            check(errors, key(k), [&] {
                const double v = p.at(k).get<double>();
                require(v > 0.0 && v < 1.0, "must lie in (0, 1)");
            });
        }
    }
    if (has("learning_rate")) {
        check(errors, key("learning_rate"), [&] { require(p.at("learning_rate").get<double>() > 0.0, "must be positive"); });
    }
    if (has("perplexity")) {
        check(errors, key("perplexity"), [&] { require(p.at("perplexity").get<double>() > 0.0, "must be positive"); });
    }
    if (has("batch_size")) {
        check(errors, key("batch_size"), [&] { require(p.at("batch_size").get<long long>() >= 0, "must be non-negative"); });
    }
    if (id == "number_distance") {
        check(errors, key("last"), [&] {
            require(p.at("first").get<int>() >= 0 && p.at("first").get<int>() <= p.at("last").get<int>(),
                    "need 0 <= first <= last");
        });
    }
}

}  // namespace

nlohmann::json parse_toml(std::string_view text) { return TomlParser(text).parse(); }

const std::vector<std::string>& experiment_ids() {
    static const std::vector<std::string> ids = {
        "tsne",        "intervention", "layer_sweep",  "probe_direct", "probe_delta_style",
        "indirect_recall", "rep_map",  "weight_similarity", "logit_lens", "tuned_lens",
        "attention",   "number_distance", "pair_screen",
    };
    return ids;
}

ConfigCheck normalize_config(const nlohmann::json& raw, const std::optional<std::string>& backend_override) {
    ConfigCheck result;
    auto& errors = result.errors;
    if (!raw.is_object()) {
        errors.push_back("config: expected a table");
        return result;
    }

    json top_given = json::object();
    for (const auto& [key, value] : raw.items()) {
        if (key == "toy" || key == "planted" || key == "params") continue;
        top_given[key] = value;
    }
    json cfg = fill_table(top_given, top_schema(), "", errors);

    if (!raw.contains("experiment")) errors.push_back("experiment: missing");
    if (!raw.contains("seed")) errors.push_back("seed: missing (a seed is mandatory)");
    if (cfg.contains("seed") && cfg["seed"].is_number_integer() && cfg["seed"].get<long long>() < 0) {
        errors.push_back("seed: must be non-negative");
    }

    std::string id;
    if (cfg["experiment"].is_string()) {
        id = cfg["experiment"].get<std::string>();
        const auto& ids = experiment_ids();
        if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
            errors.push_back(fmt::format("experiment: unknown experiment id '{}'", id));
            id.clear();
        }
    }

    if (backend_override && !backend_override->empty()) cfg["backend"] = *backend_override;
    if (cfg["backend"].is_string()) {
        const std::string b = cfg["backend"].get<std::string>();
        if (b != "toy" && b != "planted" && b.rfind("http://", 0) != 0) {
            errors.push_back(fmt::format("backend: '{}' is not toy, planted or an http:// URL", b));
        }
    }
    if (cfg["output_dir"].is_null() && !id.empty()) cfg["output_dir"] = "runs/" + id;

    const json seed = cfg["seed"].is_number_integer() ? cfg["seed"] : json(0);
    cfg["toy"] = fill_table(raw.value("toy", json::object()), toy_schema(), "toy", errors);
    if (cfg["toy"].is_object()) {
        if (cfg["toy"]["weights_seed"].is_null()) cfg["toy"]["weights_seed"] = seed;
        for (const char* k : {"layers", "hidden", "heads"}) {
            if (cfg["toy"][k].is_number_integer() && cfg["toy"][k].get<long long>() < 1) {
                errors.push_back(fmt::format("toy.{}: must be positive", k));
            }
        }
    }
    cfg["planted"] = fill_table(raw.value("planted", json::object()), planted_schema(), "planted", errors);
    if (cfg["planted"].is_object()) {
        auto& pl = cfg["planted"];
        if (pl["seed"].is_null()) pl["seed"] = seed;
        if (pl["space"].is_number_integer() && (pl["space"].get<int>() < 1 || pl["space"].get<int>() > 10)) {
            errors.push_back("planted.space: must be in 1..10");
        }
        if (pl["noise"].is_number() && !(pl["noise"].get<double>() >= 0.0)) errors.push_back("planted.noise: must be >= 0");
        for (const char* k : {"layers", "hidden"}) {
            if (pl[k].is_number_integer() && pl[k].get<long long>() < 1) {
                errors.push_back(fmt::format("planted.{}: must be positive", k));
            }
        }
    }

    if (!id.empty()) {
        const auto& schema = param_schemas().at(id);
        const size_t before = errors.size();
        cfg["params"] = fill_table(raw.value("params", json::object()), schema, "params", errors);
        if (errors.size() == before) check_params(id, cfg["params"], errors);
    }

    if (errors.empty()) result.config = cfg;
    return result;
}

ConfigCheck validate_config(const std::filesystem::path& path) {
    ConfigCheck result;
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        result.errors.push_back("config: cannot read " + path.string());
        return result;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    json raw;
    try {
        raw = parse_toml(buf.str());
    } catch (const std::exception& e) {
        result.errors.push_back(e.what());
        return result;
    }
    std::optional<std::string> over;
    if (const char* env = std::getenv(std::string(kBackendEnv).c_str())) over = std::string(env);
    return normalize_config(raw, over);
}

std::string config_hash(const nlohmann::json& normalized) { return sha256_hex(normalized.dump()); }

}  // namespace lab
