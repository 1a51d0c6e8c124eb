#pragma once

#include <optional>
#include <string>

#include "baselines.hpp"
#include "config.hpp"
#include "model.hpp"
#include "regions.hpp"

namespace rgcn {

struct ExportedModel {
  NetworkConfig network;
  ModelParams params;
  std::optional<Allocation> allocation;
};

/// Tensors as {rows, cols, values}; the allocation uses one-based regions.
Json model_to_json(const NetworkConfig& network, const ModelParams& params,
                   const Allocation* allocation = nullptr);
ExportedModel model_from_json(const Json& doc);

Json linear_to_json(const LinearModel& model, const std::string& name);

/// Deterministic text form used for every emitted document.
std::string dump_json(const Json& doc);

}  // namespace rgcn
