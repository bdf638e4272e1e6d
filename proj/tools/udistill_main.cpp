// udistill: command-line driver for the distillation pipeline.
//
//   udistill run --config run.json
//   udistill sample|cluster|calibrate|annotate|emit --config run.json
//   udistill eval --config run.json --method ud
//   udistill synth --out demo --items 200

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "udistill/annotator.hpp"
#include "udistill/calibrator.hpp"
#include "udistill/errors.hpp"
#include "udistill/pipeline.hpp"
#include "udistill/synthetic.hpp"

namespace fs = std::filesystem;
using namespace udistill;

namespace {

int cmd_stage(const fs::path& config_path, Stage last) {
  Pipeline p(load_config(config_path));
  p.run_through(last);
  std::printf("run dir: %s\n", p.run_dir().c_str());
  for (const auto& [stage, rec] : p.manifest().stages()) {
    std::printf("  %-12s %s\n", stage.c_str(), std::string(to_string(rec.status)).c_str());
  }
  if (auto sft = p.manifest().artifact("sft")) std::printf("sft: %s\n", sft->c_str());
  return 0;
}

int cmd_eval(const fs::path& config_path, const std::string& method) {
  Pipeline p(load_config(config_path));
  const auto report = p.run_eval(parse_eval_method(method));
  std::cout << format_summary(report);
  return 0;
}

int cmd_synth(const fs::path& out, std::size_t items, std::uint64_t seed, std::size_t n_samples,
              const std::string& echo_from) {
  fs::create_directories(out);
  SyntheticOptions opts;
  opts.n_items = items;
  opts.seed = seed;
  opts.distortion = Distortion::square();
  auto bench = make_synthetic_mcq(opts);
  save_dataset(bench.dataset, out / "dataset.jsonl");
  save_mock_spec(bench.spec, out / "mock.json");

  nlohmann::json cfg = {
      {"dataset", {{"path", "dataset.jsonl"}, {"format", "mcq"}}},
      {"seed", seed},
      {"split", {{"fractions", {0.6, 0.1, 0.3}}}},
      {"backend", {{"type", "mock"}, {"spec", "mock.json"}, {"parallelism", 4}}},
      {"sampling", {{"n", n_samples}, {"temperature", 1.0}}},
      {"judge", {{"type", "exact"}}},
      {"calibration", {{"kind", "isotonic"}}},
      {"augment", {{"max_incorrect", 1}}},
      {"output_dir", "runs"},
  };
  if (!echo_from.empty()) {
    const auto map = CalibrationMap::load(echo_from);
    const BinningScheme scheme;
    MockModelSpec echo;
    echo.name = "distilled";
    echo.supports_logprobs = false;
    echo.echo_table = make_echo_table(bench, bench.dataset, [&](double p) {
      return scheme.label(scheme.bin_of(map.apply(p)));
    });
    save_mock_spec(echo, out / "echo.json");
    cfg["eval"] = {{"backend", {{"type", "mock"}, {"spec", "echo.json"}}}};
  }
  std::ofstream(out / "config.json") << cfg.dump(2) << '\n';
  std::printf("wrote %zu items to %s\n", bench.dataset.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"udistill - uncertainty distillation pipeline"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  fs::path config_path;
  std::map<std::string, Stage> stage_cmds = {{"sample", Stage::sample},
                                             {"cluster", Stage::cluster},
                                             {"calibrate", Stage::calibrate},
                                             {"annotate", Stage::annotate},
                                             {"emit", Stage::emit},
                                             {"run", Stage::emit}};
  std::map<std::string, CLI::App*> stage_apps;
  for (const auto& [name, stage] : stage_cmds) {
    auto* sub = app.add_subcommand(name, name == "run" ? "run every distillation stage"
                                                       : "run stages up to " + name);
    sub->add_option("-c,--config", config_path, "run config (JSON)")->required()->check(CLI::ExistingFile);
    stage_apps[name] = sub;
  }

  std::string method = "ud";
  auto* eval = app.add_subcommand("eval", "evaluate a method on the test split");
  eval->add_option("-c,--config", config_path, "run config (JSON)")->required()->check(CLI::ExistingFile);
  eval->add_option("-m,--method", method, "ud | lexical | prompting | semantic_entropy")
      ->check(CLI::IsMember({"ud", "lexical", "prompting", "semantic_entropy"}));

  fs::path synth_out = "demo";
  std::size_t synth_items = 200, synth_n = 100;
  std::uint64_t synth_seed = 1;
  std::string echo_from;
  auto* synth = app.add_subcommand("synth", "write a synthetic MCQ dataset, mock spec and config");
  synth->add_option("-o,--out", synth_out, "output directory");
  synth->add_option("--items", synth_items, "number of items")->check(CLI::PositiveNumber);
  synth->add_option("--samples", synth_n, "samples per item")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "seed");
  synth->add_option("--echo-from", echo_from, "calibration map; also write an echo spec for eval")
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (eval->parsed()) return cmd_eval(config_path, method);
    if (synth->parsed()) return cmd_synth(synth_out, synth_items, synth_seed, synth_n, echo_from);
    for (const auto& [name, sub] : stage_apps) {
      if (sub->parsed()) return cmd_stage(config_path, stage_cmds.at(name));
    }
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
