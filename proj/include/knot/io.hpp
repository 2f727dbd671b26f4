#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace knot {

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);

std::vector<std::string> split_csv_line(std::string_view line);

/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace knot
