#include "lab/activation_store.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "lab/encoding.hpp"
#include "lab/error.hpp"

namespace lab {
namespace {

constexpr std::string_view kMagic = "ACTS1";

}  // namespace

nlohmann::json to_json(const ModelInfo& info) {
    return {{"name", info.name},
            {"layer_count", info.layer_count},
            {"hidden_dim", info.hidden_dim},
            {"vocab_size", info.vocab_size},
            {"supports_attention_capture", info.supports_attention_capture},
            {"supports_patching", info.supports_patching}};
}

ModelInfo model_info_from_json(const nlohmann::json& j) {
    try {
        ModelInfo info;
        info.name = j.at("name").get<std::string>();
        info.layer_count = j.at("layer_count").get<int>();
        info.hidden_dim = j.at("hidden_dim").get<int>();
        info.vocab_size = j.at("vocab_size").get<int>();
        info.supports_attention_capture = j.value("supports_attention_capture", false);
        info.supports_patching = j.value("supports_patching", false);
        validate(info);
        return info;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed model info: ") + e.what());
    }
}

std::size_t ActivationStore::element_count() const {
    if (shape.empty()) return 0;
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

void ActivationStore::validate() const {
    if (shape.empty()) throw Error("activation store: empty shape");
    if (axes.size() != shape.size()) throw Error("activation store: axes and shape disagree");
    if (data.size() != element_count()) {
        throw Error("activation store: shape implies " + std::to_string(element_count()) + " values, payload has " +
                    std::to_string(data.size()));
    }
    if (prompts.size() != shape.front()) {
        throw Error("activation store: header has " + std::to_string(prompts.size()) + " prompt rows, shape has " +
                    std::to_string(shape.front()));
    }
}

std::vector<std::uint8_t> store_serialize(const ActivationStore& store) {
    store.validate();
    const nlohmann::json header = {{"model", store.model},
                                   {"dtype", "f32le"},
                                   {"shape", store.shape},
                                   {"axes", store.axes},
                                   {"prompts", store.prompts}};
    const std::string text = header.dump();
    std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
    const auto len = static_cast<std::uint32_t>(text.size());
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(len >> (8 * b)));
    out.insert(out.end(), text.begin(), text.end());
    const auto payload = f32le_bytes(store.data);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

ActivationStore store_parse(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kMagic.size() || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
        throw Error("bad magic");
    }
    std::size_t pos = kMagic.size();
    if (bytes.size() < pos + 4) throw Error("activation store: truncated header length");
    std::uint32_t len = 0;
    for (int b = 0; b < 4; ++b) len |= std::uint32_t{bytes[pos + static_cast<std::size_t>(b)]} << (8 * b);
    pos += 4;
    if (bytes.size() < pos + len) throw Error("activation store: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                       bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("activation store: malformed header: ") + e.what());
    }
    pos += len;

    ActivationStore store;
    try {
        if (header.at("dtype").get<std::string>() != "f32le") throw Error("activation store: unsupported dtype");
        store.model = header.at("model");
        store.shape = header.at("shape").get<std::vector<std::size_t>>();
        store.axes = header.at("axes").get<std::vector<std::string>>();
        store.prompts = header.at("prompts").get<std::vector<nlohmann::json>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("activation store: malformed header: ") + e.what());
    }
    const std::size_t payload = bytes.size() - pos;
    if (payload != store.element_count() * 4) {
        throw Error("activation store: payload has " + std::to_string(payload) + " bytes, shape requires " +
                    std::to_string(store.element_count() * 4));
    }
    store.data = f32le_values(bytes.subspan(pos));
    store.validate();
    return store;
}

void store_write(const ActivationStore& store, const std::filesystem::path& path) {
    const auto bytes = store_serialize(store);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + path.string());
}

ActivationStore store_read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return store_parse(bytes);
}

ActivationStore make_store(const ModelInfo& info, const std::vector<PromptInstance>& prompts,
                           const std::vector<CaptureResult>& captures) {
    if (prompts.size() != captures.size()) throw Error("make_store: prompt and capture counts differ");
    if (captures.empty()) throw Error("make_store: no captures");
    const auto& first = captures.front();
    ActivationStore store;
    store.model = to_json(info);
    store.shape = {captures.size(), first.layers.size(), first.positions.size(), static_cast<std::size_t>(first.hidden_dim)};
    store.axes = {"prompt", "layer", "position", "hidden"};
    store.data.reserve(store.element_count());
    for (std::size_t i = 0; i < captures.size(); ++i) {
        const auto& c = captures[i];
        if (c.layers != first.layers || c.positions.size() != first.positions.size() || c.hidden_dim != first.hidden_dim) {
            throw Error("make_store: captures have heterogeneous shapes");
        }
        store.data.insert(store.data.end(), c.residuals.begin(), c.residuals.end());
        store.prompts.push_back(to_json(prompts[i]));
    }
    store.validate();
    return store;
}

num::Matrix store_slice(const ActivationStore& store, std::size_t layer_slot, std::size_t position_slot) {
    store.validate();
    if (store.shape.size() != 4) throw Error("store_slice: expected a (prompt, layer, position, hidden) store");
    const std::size_t n = store.shape[0], layers = store.shape[1], positions = store.shape[2], d = store.shape[3];
    if (layer_slot >= layers || position_slot >= positions) throw Error("store_slice: index out of range");
    num::Matrix out(static_cast<num::Index>(n), static_cast<num::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
        const float* src = store.data.data() + ((i * layers + layer_slot) * positions + position_slot) * d;
        for (std::size_t k = 0; k < d; ++k) out(static_cast<num::Index>(i), static_cast<num::Index>(k)) = src[k];
    }
    return out;
}

}  // namespace lab
