#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "udistill/annotator.hpp"
#include "udistill/evaluator.hpp"
#include "udistill/model_client.hpp"
#include "udistill/qa_dataset.hpp"
#include "udistill/remote_client.hpp"

namespace udistill {

struct BackendConfig {
  enum class Type { mock, remote };
  Type type = Type::mock;
  std::filesystem::path mock_spec;
  RemoteConfig remote;
  int parallelism = 4;
};

struct JudgeConfig {
  enum class Type { exact, remote };
  Type type = Type::exact;
  BackendConfig backend;  // used when type == remote
  int max_attempts = 3;
};

struct CalibrationConfig {
  enum class Kind { isotonic, temperature, none };
  Kind kind = Kind::isotonic;
  bool gate = true;  // consult should_calibrate before fitting
  double ece_threshold = 0.05;
  std::size_t ece_bins = 30;
};

struct DatasetRef {
  std::filesystem::path path;
  DatasetFormat format = DatasetFormat::mcq;
};

struct EvalConfig {
  std::optional<BackendConfig> backend;  // the distilled model; defaults to the sampling backend
  std::optional<DatasetRef> dataset;     // evaluate on this file instead of the test split
  std::size_t se_samples = 20;
  double temperature = 0.0;  // single-answer methods (ud, prompting, lexical)
  LexicalMean lexical_mean = LexicalMean::arithmetic;

  nlohmann::json raw;
};

// Declarative description of one run. Relative paths resolve against the
// directory of the config file.
struct RunConfig {
  DatasetRef dataset;
  SplitSpec split;
  BackendConfig backend;
  std::size_t n_samples = 100;
  GenParams gen;
  JudgeConfig judge;
  CalibrationConfig calibration;
  BinningScheme binning;
  AugmentPolicy augment;
  bool keep_absent = true;
  std::filesystem::path output_dir = "runs";
  std::optional<std::filesystem::path> cache_dir;
  std::uint64_t seed = 0;
  EvalConfig eval;

  // The parsed document, used for hashing.
  nlohmann::json raw;

  // 16 hex digits over everything except the eval section.
  std::string hash() const;
};

RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

// Checks that referenced files exist. Throws ConfigError.
void validate_config(const RunConfig& config);

}  // namespace udistill
