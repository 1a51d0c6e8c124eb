#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

namespace rgcn {

using Json = nlohmann::json;

/// Every recognised key with its default value.
Json default_config();

/// Overlays `user` on the defaults. Unknown keys and mistyped values are
/// rejected with the offending dotted path.
Json resolve_config(const Json& user);
Json load_config(const std::filesystem::path& path);
Json parse_config(const std::string& text, const std::string& source = "<memory>");

/// `a.b.c=value`; the value is read as JSON when it parses, else as a string.
void apply_override(Json& config, std::string_view assignment);

/// Typed lookup by dotted path; errors name the path.
template <typename T>
T config_get(const Json& config, std::string_view path);

}  // namespace rgcn
