// Command-line front end; goes through the C interface only.
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "regiongcn/regiongcn.h"

namespace {

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> runs;
};

int fail(const char* what) {
  std::fprintf(stderr, "error: %s: %s\n", what, rgcn_last_error());
  return 1;
}

int run(const std::string& command, const Options& opt) {
  rgcn_config* cfg = nullptr;
  rgcn_status st = opt.config.empty() ? rgcn_config_new(&cfg) : rgcn_config_load(opt.config.c_str(), &cfg);
  if (st != RGCN_OK) return fail("config");
  std::vector<std::string> sets = opt.sets;
  if (opt.seed) sets.push_back("seed=" + std::to_string(*opt.seed));
  if (opt.runs) sets.push_back("runs=" + std::to_string(*opt.runs));
  for (const auto& s : sets) {
    if (rgcn_config_set(cfg, s.c_str()) != RGCN_OK) {
      rgcn_config_free(cfg);
      return fail(s.c_str());
    }
  }
  st = rgcn_run(command.c_str(), cfg, opt.out.c_str(), nullptr);
  rgcn_config_free(cfg);
  if (st != RGCN_OK) return fail(command.c_str());
  std::printf("%s: wrote %s/report.json\n", command.c_str(), opt.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regional graph convolutional regression"};
  app.set_version_flag("--version", std::string(rgcn_version()));
  app.require_subcommand(1);

  Options opt;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"train", "train the configured model over K seeded splits"},
      {"ensemble", "consensus regions from several region schemes"},
      {"synth", "synthetic regime data and a model comparison"},
      {"embed", "DeepWalk node embeddings"},
      {"metrics", "error metrics of prediction files"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--set", opt.sets, "override, key.path=value (repeatable)");
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
    sub->add_option("--seed", opt.seed, "master seed");
    sub->add_option("--runs", opt.runs, "number of runs K");
  }
  CLI11_PARSE(app, argc, argv);
  return run(app.get_subcommands().front()->get_name(), opt);
}
