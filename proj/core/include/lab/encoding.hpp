#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lab {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Little-endian float32 bytes.
std::vector<std::uint8_t> f32le_bytes(std::span<const float> values);
std::vector<float> f32le_values(std::span<const std::uint8_t> bytes);

std::string encode_f32(std::span<const float> values);
std::vector<float> decode_f32(std::string_view base64);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

}  // namespace lab
