#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lab/linalg.hpp"
#include "lab/prompts.hpp"
#include "lab/runner.hpp"

namespace lab {

nlohmann::json to_json(const ModelInfo& info);
ModelInfo model_info_from_json(const nlohmann::json& j);

/// Tensor plus metadata. On disk:
///   "ACTS1" | u32 little-endian header length | UTF-8 JSON header | f32le payload
/// with header {model, dtype: "f32le", shape, axes, prompts}. The first axis
/// indexes `prompts`.
struct ActivationStore {
    nlohmann::json model = nlohmann::json::object();
    std::vector<std::size_t> shape;
    std::vector<std::string> axes;
    std::vector<nlohmann::json> prompts;
    std::vector<float> data;

    std::size_t element_count() const;
    /// Throws when shape, axes, payload and prompt rows disagree.
    void validate() const;
};

std::vector<std::uint8_t> store_serialize(const ActivationStore& store);
ActivationStore store_parse(std::span<const std::uint8_t> bytes);

void store_write(const ActivationStore& store, const std::filesystem::path& path);
ActivationStore store_read(const std::filesystem::path& path);

/// Stacks homogeneous captures into shape (prompts, layers, positions, d).
ActivationStore make_store(const ModelInfo& info, const std::vector<PromptInstance>& prompts,
                           const std::vector<CaptureResult>& captures);

/// Rows of the (prompt, layer_slot, position_slot) slice, n x d.
num::Matrix store_slice(const ActivationStore& store, std::size_t layer_slot, std::size_t position_slot = 0);

}  // namespace lab
