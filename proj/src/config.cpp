#include "config.hpp"

#include <vector>

#include "csv.hpp"
#include "error.hpp"

namespace rgcn {

namespace {

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    parts.emplace_back(path.substr(start, dot - start));
    if (parts.back().empty()) throw invalid_argument("empty component in key '" + std::string(path) + "'");
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return parts;
}

bool same_kind(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) {
    // integers stay integers; floats accept either
    if (a.is_number_float()) return true;
    return b.is_number_integer() || b.is_number_unsigned();
  }
  if (a.is_string() && b.is_string()) return true;
  if (a.is_boolean() && b.is_boolean()) return true;
  if (a.is_array() && b.is_array()) return true;
  if (a.is_object() && b.is_object()) return true;
  return false;
}

std::string kind_name(const Json& j) {
  if (j.is_number_float()) return "number";
  if (j.is_number()) return "integer";
  return j.type_name();
}

void overlay(Json& base, const Json& user, const std::string& prefix) {
  if (!user.is_object()) throw parse_error("config " + (prefix.empty() ? "root" : prefix) + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw parse_error("unknown config key '" + path + "'");
    Json& slot = base[key];
    if (!same_kind(slot, value)) {
      throw parse_error("config key '" + path + "' expects " + kind_name(slot) + ", got " +
                        kind_name(value));
    }
    if (!slot.is_number_float() && value.is_number_integer() && value.get<std::int64_t>() < 0)
      throw parse_error("config key '" + path + "' must be non-negative");
    if (slot.is_object()) {
      overlay(slot, value, path);
    } else {
      slot = value;
    }
  }
}

}  // namespace

Json default_config() {
  std::vector<int> r_values;
  for (int r = 5; r <= 50; r += 5) r_values.push_back(r);
  return Json{
      {"variant", "regiongcn"},
      {"seed", 0},
      {"runs", 1},
      {"compare_with", Json::array()},
      {"data",
       {{"nodes", ""},
        {"edges", ""},
        {"target", "target"},
        {"ignore", Json::array()},
        {"splits", ""},
        {"ratios", {0.6, 0.2, 0.2}},
        {"standardize", true},
        {"flows", false},
        {"dem", ""},
        {"rep", ""}}},
      {"network", {{"layers", 2}, {"hidden", 0}, {"activation", "relu"}, {"output", "sigmoid"}}},
      {"stage1", {{"learning_rate", 1e-3}, {"l2", 0.0}, {"max_epochs", 3000}, {"patience", 1000}}},
      {"stage2",
       {{"learning_rate", 1e-3},
        {"l2", 0.0},
        {"max_epochs", 3000},
        {"patience", 20},
        {"region_interval", 10}}},
      {"regions",
       {{"p", 3}, {"init", "grow"}, {"file", ""}, {"adaptive", true}, {"contiguous", false}}},
      {"deepwalk",
       {{"enabled", false},
        {"dim", 14},
        {"walk_length", 20},
        {"walks_per_node", 20},
        {"context_size", 10},
        {"negatives", 5},
        {"epochs", 100},
        {"learning_rate", 0.01},
        {"batch_walks", 16}}},
      {"ensemble",
       {{"schemes", Json::array()}, {"r_values", r_values}, {"u", 6000.0}, {"trials", 8}}},
      {"synth",
       {{"grid", 20},
        {"regions", 3},
        {"noise_sd", 0.05},
        {"gamma", 0.3},
        {"features", 4},
        {"models", {"ann", "gcn", "gwgcn", "regiongcn", "lr"}},
        {"p_sweep", Json::array()},
        {"random_baselines", 10}}},
      {"metrics", {{"predictions", Json::array()}, {"split", "test"}}},
  };
}

Json resolve_config(const Json& user) {
  Json config = default_config();
  overlay(config, user, "");
  return config;
}

Json parse_config(const std::string& text, const std::string& source) {
  Json user;
  try {
    user = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw parse_error(source + ": " + e.what());
  }
  return resolve_config(user);
}

Json load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.string());
}

void apply_override(Json& config, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw invalid_argument("override '" + std::string(assignment) + "' is not key=value");
  }
  const auto parts = split_path(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  // string keys keep the raw text even when it happens to parse (e.g. a numeric column name)
  const Json* slot = &config;
  for (const auto& part : parts) slot = slot && slot->is_object() && slot->contains(part) ? &(*slot)[part] : nullptr;
  if (slot && slot->is_string()) value = raw;

  // build a nested object and overlay it so the usual checks apply
  Json patch = value;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = Json{{*it, patch}};
  overlay(config, patch, "");
}

template <typename T>
T config_get(const Json& config, std::string_view path) {
  const Json* node = &config;
  for (const auto& part : split_path(path)) {
    if (!node->is_object() || !node->contains(part))
      throw parse_error("missing config key '" + std::string(path) + "'");
    node = &(*node)[part];
  }
  try {
    return node->get<T>();
  } catch (const Json::exception& e) {
    throw parse_error("config key '" + std::string(path) + "': " + e.what());
  }
}

template bool config_get<bool>(const Json&, std::string_view);
template double config_get<double>(const Json&, std::string_view);
template std::size_t config_get<std::size_t>(const Json&, std::string_view);
template std::string config_get<std::string>(const Json&, std::string_view);
template std::vector<std::string> config_get<std::vector<std::string>>(const Json&, std::string_view);
template std::vector<std::size_t> config_get<std::vector<std::size_t>>(const Json&, std::string_view);
template std::vector<double> config_get<std::vector<double>>(const Json&, std::string_view);

}  // namespace rgcn
