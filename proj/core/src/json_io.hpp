// Internal: JSON emission with fixed 17-significant-digit doubles so files
// are byte-stable across save/load/save cycles. Not installed.
#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace uspil::detail {

/// Serializes with 2-space indentation; every number_float is written via
/// format_g17. Key order is preserved (use nlohmann::ordered_json).
std::string dump_g17(const nlohmann::ordered_json& j);

void write_json_file(const nlohmann::ordered_json& j, const std::filesystem::path& file);

/// Parse with a ConfigError carrying the byte offset on failure.
nlohmann::ordered_json read_json_file(const std::filesystem::path& file);

}  // namespace uspil::detail
