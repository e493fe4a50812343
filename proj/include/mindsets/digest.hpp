#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace mindsets {

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

std::string hex64(std::uint64_t value);

/// Digest of the canonical (sorted-key, compact) JSON dump.
std::string config_digest(const nlohmann::json& config);

/// Digest of a file's bytes; throws Errc::Io if unreadable.
std::string file_digest(const std::string& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Little-endian f64 array <-> base64.
std::string encode_f64(std::span<const double> values);
std::vector<double> decode_f64(std::string_view text);

}  // namespace mindsets
