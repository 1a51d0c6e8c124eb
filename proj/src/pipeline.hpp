#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "config.hpp"
#include "regions.hpp"

namespace rgcn {

/// train, ensemble, synth, embed or metrics. Files are written to a staging
/// directory under `out_dir` and moved into place once everything succeeded;
/// on failure the partial outputs end up in `out_dir/quarantine` and the
/// error is rethrown. Returns the report that was written as report.json.
Json run_command(std::string_view command, const Json& config, const std::filesystem::path& out_dir);

/// `node_id,region` with one-based regions, in dataset node order.
std::string format_regions_csv(std::span<const std::string> node_ids, const Allocation& alloc);
Allocation read_regions_csv(const std::filesystem::path& path, std::span<const std::string> node_ids);

}  // namespace rgcn
