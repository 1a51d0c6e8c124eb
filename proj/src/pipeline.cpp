#include "pipeline.hpp"

#include <algorithm>
#include <map>
#include <optional>

#include "baselines.hpp"
#include "csv.hpp"
#include "data.hpp"
#include "deepwalk.hpp"
#include "ensemble.hpp"
#include "error.hpp"
#include "model.hpp"
#include "model_io.hpp"

namespace rgcn {

namespace fs = std::filesystem;

namespace {

class Staging {
 public:
  Staging(const fs::path& out, std::string_view command)
      : out_(out), dir_(out / (".staging-" + std::string(command))) {
    std::error_code ec;
    fs::create_directories(out_, ec);
    if (ec) throw io_error("cannot create output directory '" + out_.string() + "': " + ec.message());
    fs::remove_all(dir_, ec);
    fs::create_directories(dir_, ec);
    if (ec) throw io_error("cannot create staging directory '" + dir_.string() + "'");
  }

  void write(const std::string& name, const std::string& contents) {
    write_file_atomic(dir_ / name, contents);
    names_.push_back(name);
  }

  void commit() {
    for (const auto& name : names_) {
      std::error_code ec;
      fs::rename(dir_ / name, out_ / name, ec);
      if (ec) throw io_error("cannot move '" + name + "' into '" + out_.string() + "': " + ec.message());
    }
    fs::remove_all(dir_);
  }

  void quarantine() noexcept {
    std::error_code ec;
    const fs::path q = out_ / "quarantine";
    fs::remove_all(q, ec);
    fs::rename(dir_, q, ec);
  }

 private:
  fs::path out_;
  fs::path dir_;
  std::vector<std::string> names_;
};

std::size_t get_size(const Json& cfg, std::string_view path) { return config_get<std::size_t>(cfg, path); }
double get_double(const Json& cfg, std::string_view path) { return config_get<double>(cfg, path); }
std::string get_string(const Json& cfg, std::string_view path) {
  return config_get<std::string>(cfg, path);
}
bool get_bool(const Json& cfg, std::string_view path) { return config_get<bool>(cfg, path); }

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

Json metrics_json(const Metrics& m) { return Json{{"rmse", m.rmse}, {"mae", m.mae}, {"r2", m.r2}}; }

// ---- data ------------------------------------------------------------------

struct Prepared {
  Dataset data;
  SpatialGraph graph;
  Json notes = Json::object();
};

fs::path require_file(const Json& cfg, std::string_view key) {
  const std::string p = get_string(cfg, key);
  if (p.empty()) throw invalid_argument("config key '" + std::string(key) + "' is required");
  if (!fs::exists(p)) throw io_error("file '" + p + "' (" + std::string(key) + ") does not exist");
  return p;
}

LoadOptions load_options(const Json& cfg) {
  LoadOptions opt;
  opt.target_column = get_string(cfg, "data.target");
  opt.ignore_columns = config_get<std::vector<std::string>>(cfg, "data.ignore");
  opt.symmetrize_flows = get_bool(cfg, "data.flows");
  const std::string dem = get_string(cfg, "data.dem");
  const std::string rep = get_string(cfg, "data.rep");
  if (dem.empty() != rep.empty()) throw invalid_argument("data.dem and data.rep must be given together");
  if (!dem.empty()) {
    opt.dem_column = dem;
    opt.rep_column = rep;
  }
  return opt;
}

EmbeddingOptions embedding_options(const Json& cfg) {
  EmbeddingOptions o;
  o.dim = get_size(cfg, "deepwalk.dim");
  o.context_size = get_size(cfg, "deepwalk.context_size");
  o.negatives = get_size(cfg, "deepwalk.negatives");
  o.epochs = get_size(cfg, "deepwalk.epochs");
  o.learning_rate = get_double(cfg, "deepwalk.learning_rate");
  o.batch_walks = get_size(cfg, "deepwalk.batch_walks");
  return o;
}

EmbeddingResult embed_graph(const Json& cfg, const SpatialGraph& g, std::uint64_t seed) {
  const Prng master(seed);
  const WalkCorpus corpus = sample_walks(g, get_size(cfg, "deepwalk.walk_length"),
                                         get_size(cfg, "deepwalk.walks_per_node"), master);
  Prng rng = master.substream("embed");
  return train_embeddings(corpus, g.size(), embedding_options(cfg), rng);
}

Prepared prepare(Dataset data, SpatialGraph graph, const Json& cfg) {
  Prepared p{std::move(data), std::move(graph), Json::object()};
  if (get_bool(cfg, "data.standardize")) p.data = standardize(std::move(p.data));
  if (get_bool(cfg, "deepwalk.enabled")) {
    const auto emb = embed_graph(cfg, p.graph, get_size(cfg, "seed"));
    const std::size_t d = emb.vectors.cols();
    std::vector<std::string> names;
    for (std::size_t k = 0; k < d; ++k) names.push_back("dw" + std::to_string(k + 1));
    p.data.features = augment_features(p.data.features, standardize_columns(emb.vectors, names));
    p.data.feature_names.insert(p.data.feature_names.end(), names.begin(), names.end());
    p.notes["deepwalk_final_loss"] = emb.epoch_losses.empty() ? 0.0 : emb.epoch_losses.back();
  }
  return p;
}

Prepared load_prepared(const Json& cfg) {
  const fs::path nodes = require_file(cfg, "data.nodes");
  const fs::path edges = require_file(cfg, "data.edges");
  LoadedData loaded = load_dataset(nodes, edges, load_options(cfg));
  return prepare(std::move(loaded.dataset), std::move(loaded.graph), cfg);
}

SplitRatios split_ratios(const Json& cfg) {
  const auto r = config_get<std::vector<double>>(cfg, "data.ratios");
  if (r.size() != 3) throw invalid_argument("data.ratios needs three values");
  return {r[0], r[1], r[2]};
}

Dataset split_for_run(const Dataset& base, const Json& cfg, std::uint64_t run_seed) {
  const std::string file = get_string(cfg, "data.splits");
  if (!file.empty()) return apply_split_table(base, read_csv(file));
  Prng rng = Prng(run_seed).substream("split");
  return split(base, split_ratios(cfg), rng);
}

// ---- models ----------------------------------------------------------------

struct ModelRun {
  std::string name;
  std::vector<double> predictions;
  Metrics test;
  std::optional<Allocation> allocation;
  Json exported;
  Json details = Json::object();
};

bool is_linear(const std::string& name) { return name == "lr" || name == "slx"; }

std::vector<double> test_values(const Dataset& d, std::span<const double> pred, std::vector<double>* truth) {
  std::vector<double> out;
  for (std::size_t i : d.nodes_with(Role::Test)) {
    out.push_back(pred[i]);
    truth->push_back(*d.target[i]);
  }
  return out;
}

Metrics test_metrics(const Dataset& d, std::span<const double> pred) {
  std::vector<double> truth;
  const auto p = test_values(d, pred, &truth);
  if (truth.empty()) throw invalid_argument("dataset has no test nodes");
  return eval_metrics(truth, p);
}

TrainConfig stage_config(const Json& cfg, const std::string& stage) {
  TrainConfig t;
  t.learning_rate = get_double(cfg, stage + ".learning_rate");
  t.l2 = get_double(cfg, stage + ".l2");
  t.max_epochs = get_size(cfg, stage + ".max_epochs");
  t.patience = get_size(cfg, stage + ".patience");
  if (stage == "stage2") t.region_interval = get_size(cfg, "stage2.region_interval");
  return t;
}

TrainSpec train_spec(const std::string& name, const Json& cfg, const Dataset& data,
                     std::size_t regions, const std::optional<Allocation>& fixed) {
  std::string variant = name;
  RegionOptions ro;
  ro.init = region_init_from_string(get_string(cfg, "regions.init"));
  ro.adaptive = get_bool(cfg, "regions.adaptive");
  ro.contiguous = get_bool(cfg, "regions.contiguous");
  if (name == "regiongcn-r" || name == "regiongcn-p") {
    variant = "regiongcn";
    ro.init = name == "regiongcn-r" ? RegionInit::Grow : RegionInit::KMeans;
    ro.adaptive = false;
  }
  if (variant == "regiongcn" && ro.init == RegionInit::Fixed) {
    if (!fixed) throw invalid_argument("regions.init=fixed needs regions.file");
    ro.fixed = fixed;
    ro.adaptive = false;
    regions = fixed->regions;
  }
  TrainSpec spec;
  spec.network = default_network(variant_from_string(variant), data.features.cols(), regions,
                                 get_size(cfg, "network.layers"));
  const std::size_t hidden = get_size(cfg, "network.hidden");
  if (hidden > 0)
    for (std::size_t l = 1; l < spec.network.dims.size(); ++l) spec.network.dims[l] = hidden;
  spec.network.hidden = activation_from_string(get_string(cfg, "network.activation"));
  spec.network.output = activation_from_string(get_string(cfg, "network.output"));
  spec.stage1 = stage_config(cfg, "stage1");
  spec.stage2 = stage_config(cfg, "stage2");
  spec.regions = ro;
  return spec;
}

ModelRun run_linear(const std::string& name, const Dataset& d, const SpatialGraph& g) {
  std::vector<std::size_t> fit_nodes = d.nodes_with(Role::Train);
  const auto val = d.nodes_with(Role::Validation);
  fit_nodes.insert(fit_nodes.end(), val.begin(), val.end());
  std::sort(fit_nodes.begin(), fit_nodes.end());
  Matrix x = d.features;
  std::vector<std::string> names = d.feature_names;
  if (name == "slx") {
    x = slx_augment(g, d.features);
    names = slx_names(d.feature_names);
  }
  Matrix xf(fit_nodes.size(), x.cols());
  std::vector<double> yf;
  for (std::size_t r = 0; r < fit_nodes.size(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) xf(r, c) = x(fit_nodes[r], c);
    yf.push_back(*d.target[fit_nodes[r]]);
  }
  const LinearModel m = ols_fit(xf, yf, names);
  ModelRun run;
  run.name = name;
  run.predictions = m.predict(x);
  run.test = test_metrics(d, run.predictions);
  run.exported = linear_to_json(m, name);
  return run;
}

ModelRun run_model(const std::string& name, const Json& cfg, const Dataset& d, const SpatialGraph& g,
                   std::uint64_t run_seed, std::size_t regions,
                   const std::optional<Allocation>& fixed) {
  if (is_linear(name)) return run_linear(name, d, g);
  const TrainSpec spec = train_spec(name, cfg, d, regions, fixed);
  Prng rng(run_seed);
  TrainResult tr = train(d, g, spec, rng);
  const ModelContext ctx = ModelContext::build(tr.network.variant, g);
  ModelRun run;
  run.name = name;
  const Allocation* alloc = tr.allocation ? &*tr.allocation : nullptr;
  run.predictions = forward(tr.params, tr.network, ctx, d.features, alloc);
  run.test = test_metrics(d, run.predictions);
  run.allocation = tr.allocation;
  Json doc = model_to_json(tr.network, tr.params, alloc);
  doc["model"] = name;
  run.exported = std::move(doc);
  run.details["stage1_best_epoch"] = tr.stage1_best_epoch;
  run.details["epochs"] = tr.log.size();
  if (tr.allocation) {
    run.details["stage2_best_epoch"] = tr.stage2_best_epoch;
    run.details["zoning_moves"] = tr.zoning_moves;
    run.details["nonempty_regions"] = tr.allocation->nonempty_regions();
  }
  return run;
}

std::string format_predictions(const Dataset& d, std::span<const double> pred) {
  CsvTable t;
  t.header = {"node_id", "split", "target", "prediction"};
  for (std::size_t i = 0; i < d.size(); ++i) {
    t.rows.push_back({d.node_ids[i], std::string(to_string(d.roles[i])),
                      d.target[i] ? format_double(*d.target[i]) : "", format_double(pred[i])});
  }
  return format_csv(t);
}

std::optional<Allocation> fixed_allocation(const Json& cfg, const Dataset& d) {
  const std::string file = get_string(cfg, "regions.file");
  if (file.empty()) return std::nullopt;
  return read_regions_csv(file, d.node_ids);
}

Json summarize(const std::map<std::string, std::vector<Metrics>>& per_model,
               const std::vector<std::string>& order) {
  Json summary = Json::object();
  for (const auto& name : order) {
    const auto& ms = per_model.at(name);
    Json entry;
    auto add = [&](const char* key, double Metrics::*field) {
      std::vector<double> v;
      for (const auto& m : ms) v.push_back(m.*field);
      entry[key] = Json{{"mean", mean(v)}, {"median", median(v)}, {"values", v}};
    };
    add("rmse", &Metrics::rmse);
    add("mae", &Metrics::mae);
    add("r2", &Metrics::r2);
    summary[name] = entry;
  }
  return summary;
}

Json paired_tests(const std::map<std::string, std::vector<Metrics>>& per_model,
                  const std::string& main, const std::vector<std::string>& others) {
  Json tests = Json::array();
  const auto& a = per_model.at(main);
  if (a.size() < 2) return tests;
  std::vector<double> main_rmse;
  for (const auto& m : a) main_rmse.push_back(m.rmse);
  for (const auto& other : others) {
    std::vector<double> b;
    for (const auto& m : per_model.at(other)) b.push_back(m.rmse);
    // positive difference: the main model has lower error
    const PairedTTest t = paired_t_test(b, main_rmse);
    tests.push_back(Json{{"baseline", other},
                         {"model", main},
                         {"metric", "rmse"},
                         {"mean_difference", t.mean_difference},
                         {"t", t.t},
                         {"df", t.df},
                         {"p_value", t.p_value}});
  }
  return tests;
}

std::vector<std::string> unique_models(std::string main, const std::vector<std::string>& extra) {
  std::vector<std::string> out{std::move(main)};
  for (const auto& m : extra)
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  return out;
}

void check_model_name(const std::string& name) {
  static const std::vector<std::string> known{"ann", "gcn", "gwgcn", "basic_gcn", "regiongcn",
                                               "regiongcn-r", "regiongcn-p", "lr", "slx"};
  if (std::find(known.begin(), known.end(), name) == known.end())
    throw invalid_argument("unknown model '" + name + "'");
}

std::vector<std::uint64_t> run_seeds(const Json& cfg) {
  const std::size_t runs = get_size(cfg, "runs");
  if (runs == 0) throw invalid_argument("runs must be at least 1");
  const std::uint64_t seed = get_size(cfg, "seed");
  std::vector<std::uint64_t> seeds;
  for (std::size_t k = 0; k < runs; ++k) seeds.push_back(seed + k);
  return seeds;
}

// ---- commands --------------------------------------------------------------

Json cmd_train(const Json& cfg, Staging& out) {
  const Prepared prep = load_prepared(cfg);
  const std::string main = get_string(cfg, "variant");
  const auto models = unique_models(main, config_get<std::vector<std::string>>(cfg, "compare_with"));
  for (const auto& m : models) check_model_name(m);
  const auto fixed = fixed_allocation(cfg, prep.data);
  const std::size_t p = get_size(cfg, "regions.p");
  const auto seeds = run_seeds(cfg);

  std::map<std::string, std::vector<Metrics>> per_model;
  Json runs = Json::array();
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    const Dataset d = split_for_run(prep.data, cfg, seeds[k]);
    Json run{{"run", k + 1}, {"seed", seeds[k]}};
    run["sizes"] = Json{{"train", d.nodes_with(Role::Train).size()},
                        {"val", d.nodes_with(Role::Validation).size()},
                        {"test", d.nodes_with(Role::Test).size()}};
    Json results = Json::object();
    for (const auto& name : models) {
      ModelRun mr = run_model(name, cfg, d, prep.graph, seeds[k], p, fixed);
      per_model[name].push_back(mr.test);
      Json entry = metrics_json(mr.test);
      entry.update(mr.details);
      results[name] = entry;
      if (name == main) {
        const std::string suffix = "_run" + std::to_string(k + 1);
        out.write("predictions" + suffix + ".csv", format_predictions(d, mr.predictions));
        out.write("model" + suffix + ".json", dump_json(mr.exported));
        if (mr.allocation) out.write("regions" + suffix + ".csv", format_regions_csv(d.node_ids, *mr.allocation));
      }
    }
    run["models"] = results;
    runs.push_back(run);
  }
  Json report;
  report["command"] = "train";
  report["model"] = main;
  report["seeds"] = seeds;
  report["runs"] = runs;
  report["summary"] = summarize(per_model, models);
  report["paired_tests"] = paired_tests(per_model, main, {models.begin() + 1, models.end()});
  if (!prep.notes.empty()) report["notes"] = prep.notes;
  return report;
}

Json region_table(const Dataset& raw, const Allocation& alloc) {
  Json rows = Json::array();
  const auto members = alloc.members();
  for (std::size_t r = 0; r < members.size(); ++r) {
    double sum = 0.0;
    std::size_t labeled = 0;
    for (std::size_t i : members[r]) {
      if (raw.target[i]) {
        sum += *raw.target[i];
        ++labeled;
      }
    }
    Json row{{"region", r + 1}, {"size", members[r].size()}, {"labeled", labeled}};
    row["mean_target"] = labeled ? Json(sum / static_cast<double>(labeled)) : Json(nullptr);
    rows.push_back(row);
  }
  return rows;
}

Json cmd_ensemble(const Json& cfg, Staging& out) {
  const Prepared prep = load_prepared(cfg);
  const auto files = config_get<std::vector<std::string>>(cfg, "ensemble.schemes");
  std::vector<Allocation> schemes;
  Json sources = Json::array();
  if (!files.empty()) {
    for (const auto& f : files) {
      schemes.push_back(read_regions_csv(f, prep.data.node_ids));
      sources.push_back(f);
    }
  } else {
    // no inputs: produce schemes with inline regiongcn runs
    const std::size_t p = get_size(cfg, "regions.p");
    for (std::uint64_t s : run_seeds(cfg)) {
      const Dataset d = split_for_run(prep.data, cfg, s);
      ModelRun mr = run_model("regiongcn", cfg, d, prep.graph, s, p, std::nullopt);
      schemes.push_back(*mr.allocation);
      sources.push_back("regiongcn seed " + std::to_string(s));
    }
  }
  if (schemes.empty()) throw invalid_argument("ensemble needs at least one region scheme");

  const SimilarityGraph gs = co_assignment_graph(prep.graph, schemes);
  const auto candidates = config_get<std::vector<std::size_t>>(cfg, "ensemble.r_values");
  if (candidates.empty()) throw invalid_argument("ensemble.r_values is empty");
  const double u = get_double(cfg, "ensemble.u");
  PartitionOptions opts;
  opts.trials = get_size(cfg, "ensemble.trials");
  opts.seed = get_size(cfg, "seed");
  const RSelection sel = select_r(gs, candidates, u, schemes, opts);

  std::size_t best_index = 0;
  while (sel.table[best_index].first != sel.best_r) ++best_index;
  const PartitionResult& best = sel.partitions[best_index];

  CsvTable anmi_csv;
  anmi_csv.header = {"R", "anmi"};
  Json table = Json::array();
  for (const auto& [r, a] : sel.table) {
    anmi_csv.rows.push_back({std::to_string(r), format_double(a)});
    table.push_back(Json{{"R", r}, {"anmi", a}});
  }
  out.write("anmi_table.csv", format_csv(anmi_csv));
  out.write("ensemble_regions.csv", format_regions_csv(prep.data.node_ids, best.allocation));

  // region means on the untouched target values
  Json report;
  report["command"] = "ensemble";
  report["seed"] = get_size(cfg, "seed");
  report["schemes"] = sources;
  report["anmi_table"] = table;
  report["chosen_r"] = sel.best_r;
  report["anmi"] = sel.table[best_index].second;
  report["regions_file"] = "ensemble_regions.csv";
  report["target_regions"] = sel.best_r;
  report["achieved_regions"] = best.allocation.nonempty_regions();
  report["cut"] = best.cut;
  report["balance"] = Json{{"u", u},
                           {"cap", best.cap},
                           {"max_size_before_repair", best.max_size_before_repair},
                           {"max_size_after_repair", best.max_size_after_repair},
                           {"fragments_merged", best.fragments_merged},
                           {"sizes", best.allocation.region_sizes()}};
  report["region_targets"] = region_table(prep.data, best.allocation);
  return report;
}

Json cmd_synth(const Json& cfg, Staging& out) {
  SynthOptions so;
  so.grid = get_size(cfg, "synth.grid");
  so.regions = get_size(cfg, "synth.regions");
  so.noise_sd = get_double(cfg, "synth.noise_sd");
  so.gamma = get_double(cfg, "synth.gamma");
  so.features = get_size(cfg, "synth.features");
  so.seed = get_size(cfg, "seed");
  SyntheticTruth truth = synth_generate(so);
  out.write("nodes.csv", format_node_csv(truth.dataset));
  out.write("edges.csv", format_edge_csv(truth.graph));
  out.write("truth_regions.csv", format_regions_csv(truth.dataset.node_ids, truth.allocation));

  const Prepared prep = prepare(truth.dataset, truth.graph, cfg);
  const auto models = config_get<std::vector<std::string>>(cfg, "synth.models");
  for (const auto& m : models) check_model_name(m);
  const std::size_t p = get_size(cfg, "regions.p");
  const auto seeds = run_seeds(cfg);

  std::map<std::string, std::vector<Metrics>> per_model;
  std::map<std::string, std::vector<double>> per_model_nmi;
  Json runs = Json::array();
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    const Dataset d = split_for_run(prep.data, cfg, seeds[k]);
    Json results = Json::object();
    for (const auto& name : models) {
      ModelRun mr = run_model(name, cfg, d, prep.graph, seeds[k], p, std::nullopt);
      per_model[name].push_back(mr.test);
      Json entry = metrics_json(mr.test);
      entry.update(mr.details);
      if (mr.allocation) {
        const double v = nmi(*mr.allocation, truth.allocation);
        per_model_nmi[name].push_back(v);
        entry["nmi"] = v;
      }
      results[name] = entry;
    }
    runs.push_back(Json{{"run", k + 1}, {"seed", seeds[k]}, {"models", results}});
  }

  std::vector<double> random_nmi;
  const Prng base(get_size(cfg, "seed"));
  for (std::size_t b = 0; b < get_size(cfg, "synth.random_baselines"); ++b) {
    Prng rng = base.substream("random-regions", b);
    random_nmi.push_back(nmi(grow_regions(truth.graph, so.regions, rng), truth.allocation));
  }

  Json report;
  report["command"] = "synth";
  report["seeds"] = seeds;
  report["runs"] = runs;
  Json summary = summarize(per_model, models);
  for (const auto& [name, v] : per_model_nmi)
    summary[name]["nmi"] = Json{{"mean", mean(v)}, {"median", median(v)}, {"values", v}};
  report["summary"] = summary;
  report["random_regions_nmi"] = Json{{"median", median(random_nmi)}, {"values", random_nmi}};

  const auto sweep = config_get<std::vector<std::size_t>>(cfg, "synth.p_sweep");
  Json sweep_rows = Json::array();
  for (std::size_t q : sweep) {
    std::vector<double> rmse, r2;
    for (std::uint64_t s : seeds) {
      const Dataset d = split_for_run(prep.data, cfg, s);
      const ModelRun mr = run_model("regiongcn", cfg, d, prep.graph, s, q, std::nullopt);
      rmse.push_back(mr.test.rmse);
      r2.push_back(mr.test.r2);
    }
    sweep_rows.push_back(Json{{"p", q}, {"rmse", mean(rmse)}, {"r2", mean(r2)}});
  }
  if (!sweep.empty()) report["p_sweep"] = sweep_rows;
  return report;
}

Json cmd_embed(const Json& cfg, Staging& out) {
  const fs::path nodes = require_file(cfg, "data.nodes");
  const fs::path edges = require_file(cfg, "data.edges");
  const LoadedData loaded = load_dataset(nodes, edges, load_options(cfg));
  const auto emb = embed_graph(cfg, loaded.graph, get_size(cfg, "seed"));
  CsvTable t;
  t.header = {"node_id"};
  for (std::size_t k = 0; k < emb.vectors.cols(); ++k) t.header.push_back("dw" + std::to_string(k + 1));
  for (std::size_t i = 0; i < loaded.dataset.size(); ++i) {
    std::vector<std::string> row{loaded.dataset.node_ids[i]};
    for (std::size_t k = 0; k < emb.vectors.cols(); ++k) row.push_back(format_double(emb.vectors(i, k)));
    t.rows.push_back(std::move(row));
  }
  out.write("embeddings.csv", format_csv(t));
  Json report;
  report["command"] = "embed";
  report["seed"] = get_size(cfg, "seed");
  report["nodes"] = loaded.dataset.size();
  report["dim"] = emb.vectors.cols();
  report["epoch_losses"] = emb.epoch_losses;
  return report;
}

Json cmd_metrics(const Json& cfg) {
  const auto files = config_get<std::vector<std::string>>(cfg, "metrics.predictions");
  if (files.empty()) throw invalid_argument("metrics.predictions lists no files");
  const std::string which = get_string(cfg, "metrics.split");
  Json results = Json::array();
  for (const auto& f : files) {
    const CsvTable t = read_csv(f);
    const std::size_t split_col = t.column("split");
    const std::size_t target_col = t.column("target");
    const std::size_t pred_col = t.column("prediction");
    std::vector<double> y, yhat;
    for (const auto& row : t.rows) {
      if (row[target_col].empty()) continue;
      if (which != "all" && row[split_col] != which) continue;
      y.push_back(parse_double(row[target_col], f + " target"));
      yhat.push_back(parse_double(row[pred_col], f + " prediction"));
    }
    if (y.empty()) throw invalid_argument(f + ": no labelled rows in split '" + which + "'");
    Json entry = metrics_json(eval_metrics(y, yhat));
    entry["file"] = f;
    entry["count"] = y.size();
    results.push_back(entry);
  }
  return Json{{"command", "metrics"}, {"split", which}, {"files", results}};
}

}  // namespace

std::string format_regions_csv(std::span<const std::string> node_ids, const Allocation& alloc) {
  if (node_ids.size() != alloc.size()) throw dimension_mismatch("region table: node count differs");
  CsvTable t;
  t.header = {"node_id", "region"};
  for (std::size_t i = 0; i < alloc.size(); ++i) t.rows.push_back({node_ids[i], std::to_string(alloc[i] + 1)});
  return format_csv(t);
}

Allocation read_regions_csv(const fs::path& path, std::span<const std::string> node_ids) {
  const CsvTable t = read_csv(path);
  const std::size_t id_col = t.column("node_id");
  const std::size_t region_col = t.column("region");
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < node_ids.size(); ++i) index.emplace(node_ids[i], i);
  std::vector<std::size_t> labels(node_ids.size(), 0);
  std::vector<char> seen(node_ids.size(), 0);
  std::size_t p = 0;
  for (const auto& row : t.rows) {
    const auto it = index.find(row[id_col]);
    if (it == index.end()) throw parse_error(path.string() + ": unknown node '" + row[id_col] + "'");
    const double r = parse_double(row[region_col], path.string() + " region");
    if (r < 1 || r != static_cast<double>(static_cast<std::size_t>(r)))
      throw parse_error(path.string() + ": region of node '" + row[id_col] + "' must be a positive integer");
    if (seen[it->second]) throw parse_error(path.string() + ": node '" + row[id_col] + "' listed twice");
    seen[it->second] = 1;
    labels[it->second] = static_cast<std::size_t>(r) - 1;
    p = std::max(p, static_cast<std::size_t>(r));
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i]) throw parse_error(path.string() + ": node '" + node_ids[i] + "' has no region");
  return Allocation(std::move(labels), p);
}

Json run_command(std::string_view command, const Json& config, const fs::path& out_dir) {
  if (command != "train" && command != "ensemble" && command != "synth" && command != "embed" &&
      command != "metrics")
    throw invalid_argument("unknown command '" + std::string(command) + "'");
  const Json cfg = resolve_config(config);
  Staging out(out_dir, command);
  try {
    Json report;
    if (command == "train") report = cmd_train(cfg, out);
    if (command == "ensemble") report = cmd_ensemble(cfg, out);
    if (command == "synth") report = cmd_synth(cfg, out);
    if (command == "embed") report = cmd_embed(cfg, out);
    if (command == "metrics") report = cmd_metrics(cfg);
    report["config"] = cfg;
    out.write("report.json", dump_json(report));
    out.commit();
    return report;
  } catch (...) {
    out.quarantine();
    throw;
  }
}

}  // namespace rgcn
