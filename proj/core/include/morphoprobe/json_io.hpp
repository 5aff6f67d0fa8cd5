#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

namespace morphoprobe {

using Json = nlohmann::json;

// "%.17g"; NaN and infinities render as "nan", "inf", "-inf".
std::string format_double(double value);

// Deterministic JSON text: object keys sorted, floats with 17 significant digits,
// non-finite floats as null. indent < 0 produces the compact form.
std::string dump_json(const Json& value, int indent = 2);

Json read_json_file(const std::filesystem::path& path);

// Writes through a temporary sibling file and renames it into place.
void write_text_file(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace morphoprobe
