#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "udistill/config.hpp"
#include "udistill/evaluator.hpp"
#include "udistill/judge.hpp"
#include "udistill/manifest.hpp"
#include "udistill/model_client.hpp"
#include "udistill/qa_dataset.hpp"

namespace udistill {

enum class Stage { sample, cluster, calibrate, annotate, emit };
inline constexpr Stage kAllStages[] = {Stage::sample, Stage::cluster, Stage::calibrate,
                                       Stage::annotate, Stage::emit};

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view name);

enum class EvalMethod { ud, lexical, prompting, semantic_entropy };

std::string_view to_string(EvalMethod method);
EvalMethod parse_eval_method(std::string_view name);

// Clients used by a run. Empty slots are built from the config.
struct Backends {
  std::shared_ptr<ModelClient> sampler;    // base model: sampling and baselines
  std::shared_ptr<ModelClient> evaluated;  // distilled model for `ud` evaluation
  std::shared_ptr<ModelClient> judge;      // LLM judge for open answers
};

std::shared_ptr<ModelClient> make_client(const BackendConfig& config);

// Orchestrates sample -> cluster -> calibrate -> annotate -> emit, plus
// evaluation. Artifacts and the manifest live under
// <output_dir>/<config hash>/; finished stages are skipped on rerun.
class Pipeline {
 public:
  // Validates the config; throws ConfigError before touching any backend.
  explicit Pipeline(RunConfig config, Backends backends = {});

  const RunConfig& config() const noexcept { return config_; }
  const std::filesystem::path& run_dir() const noexcept { return run_dir_; }
  const RunManifest& manifest() const noexcept { return manifest_; }
  std::filesystem::path cache_root() const;

  const DatasetSplits& splits();

  // Runs every pending stage up to and including `last`.
  void run_through(Stage last);
  const RunManifest& run_distill();
  EvalReport run_eval(EvalMethod method);

 private:
  ModelClient& sampler();
  ModelClient& evaluated();
  EquivalenceJudge& judge();

  void run_stage(Stage stage);
  void stage_sample();
  void stage_cluster();
  void stage_calibrate();
  void stage_annotate();
  void stage_emit();
  void save_manifest() const;
  std::filesystem::path artifact_path(std::string_view name) const;

  RunConfig config_;
  Backends backends_;
  std::unique_ptr<EquivalenceJudge> judge_;
  std::filesystem::path run_dir_;
  RunManifest manifest_;
  std::optional<DatasetSplits> splits_;
};

RunManifest run_distill(const RunConfig& config, Backends backends = {});
EvalReport run_eval(const RunConfig& config, EvalMethod method, Backends backends = {});

}  // namespace udistill
