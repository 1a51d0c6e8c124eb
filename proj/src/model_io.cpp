#include "model_io.hpp"

#include "error.hpp"

namespace rgcn {

namespace {

Json matrix_to_json(const Matrix& m) {
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"values", m.values()}};
}

Matrix matrix_from_json(const Json& j, const std::string& name) {
  try {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("values").get<std::vector<double>>());
  } catch (const Json::exception& e) {
    throw parse_error("tensor '" + name + "': " + e.what());
  }
}

}  // namespace

Json model_to_json(const NetworkConfig& network, const ModelParams& params,
                   const Allocation* allocation) {
  Json doc;
  doc["variant"] = std::string(to_string(network.variant));
  doc["dims"] = network.dims;
  doc["hidden_activation"] = std::string(to_string(network.hidden));
  doc["output_activation"] = std::string(to_string(network.output));
  doc["regions"] = network.regions;
  Json tensors = Json::array();
  ModelParams copy = params;
  for (const auto& t : trainable_tensors(copy, network.variant))
    tensors.push_back(Json{{"name", t.name}, {"tensor", matrix_to_json(*t.value)}});
  doc["tensors"] = tensors;
  if (allocation) {
    std::vector<std::size_t> labels;
    for (std::size_t l : allocation->labels) labels.push_back(l + 1);
    doc["allocation"] = labels;
  }
  return doc;
}

ExportedModel model_from_json(const Json& doc) {
  ExportedModel out;
  try {
    out.network.variant = variant_from_string(doc.at("variant").get<std::string>());
    out.network.dims = doc.at("dims").get<std::vector<std::size_t>>();
    out.network.hidden = activation_from_string(doc.at("hidden_activation").get<std::string>());
    out.network.output = activation_from_string(doc.at("output_activation").get<std::string>());
    out.network.regions = doc.at("regions").get<std::size_t>();
  } catch (const Json::exception& e) {
    throw parse_error(std::string("model document: ") + e.what());
  }
  out.network.validate();

  std::size_t n = 1;
  if (doc.contains("allocation")) {
    std::vector<std::size_t> labels = doc["allocation"].get<std::vector<std::size_t>>();
    for (auto& l : labels) {
      if (l == 0) throw parse_error("allocation labels are one-based");
      --l;
    }
    n = labels.size();
    out.allocation = Allocation(std::move(labels), out.network.regions);
  }
  // shapes come from the stored tensors; local weights need the node count
  for (const auto& t : doc.at("tensors"))
    if (t.at("name").get<std::string>().ends_with(".local_omega"))
      n = t.at("tensor").at("rows").get<std::size_t>();
  Prng unused(0);
  out.params = zeros_like(init_params(out.network, n, unused));

  auto refs = trainable_tensors(out.params, out.network.variant);
  const Json& tensors = doc.at("tensors");
  if (tensors.size() != refs.size()) {
    throw parse_error("model document has " + std::to_string(tensors.size()) + " tensors, expected " +
                      std::to_string(refs.size()));
  }
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const std::string name = tensors[k].at("name").get<std::string>();
    if (name != refs[k].name) throw parse_error("expected tensor '" + refs[k].name + "', got '" + name + "'");
    Matrix m = matrix_from_json(tensors[k].at("tensor"), name);
    if (m.rows() != refs[k].value->rows() || m.cols() != refs[k].value->cols())
      throw parse_error("tensor '" + name + "' has the wrong shape");
    *refs[k].value = std::move(m);
  }
  return out;
}

Json linear_to_json(const LinearModel& model, const std::string& name) {
  Json coefs = Json::object();
  for (std::size_t k = 0; k < model.coefficients.size(); ++k) {
    const std::string key =
        k < model.feature_names.size() ? model.feature_names[k] : "x" + std::to_string(k + 1);
    coefs[key] = model.coefficients[k];
  }
  return Json{{"model", name}, {"intercept", model.intercept}, {"coefficients", coefs}};
}

std::string dump_json(const Json& doc) {
  return doc.dump(2, ' ', false, Json::error_handler_t::strict) + "\n";
}

}  // namespace rgcn
