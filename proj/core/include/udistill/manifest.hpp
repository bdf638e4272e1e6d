#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace udistill {

enum class StageStatus { pending, done, failed };

std::string_view to_string(StageStatus status);
StageStatus parse_stage_status(std::string_view name);

struct StageRecord {
  StageStatus status = StageStatus::pending;
  std::string started_at;
  std::string finished_at;
  std::string error;
};

// Durable record of a run. Saved atomically (write to a temp file, then
// rename) after every stage transition.
class RunManifest {
 public:
  RunManifest() = default;
  explicit RunManifest(std::string config_hash) : config_hash_(std::move(config_hash)) {}

  const std::string& config_hash() const noexcept { return config_hash_; }

  StageStatus status(const std::string& stage) const;
  const StageRecord* record(const std::string& stage) const;
  const std::map<std::string, StageRecord>& stages() const noexcept { return stages_; }

  void mark_started(const std::string& stage);
  void mark_done(const std::string& stage);
  void mark_failed(const std::string& stage, const std::string& error);

  void set_artifact(const std::string& name, const std::filesystem::path& path);
  std::optional<std::filesystem::path> artifact(const std::string& name) const;
  const std::map<std::string, std::string>& artifacts() const noexcept { return artifacts_; }

  void add_decision(nlohmann::json decision);
  const std::vector<nlohmann::json>& decisions() const noexcept { return decisions_; }

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);

  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);

 private:
  std::string config_hash_;
  std::map<std::string, StageRecord> stages_;
  std::map<std::string, std::string> artifacts_;
  std::vector<nlohmann::json> decisions_;
};

}  // namespace udistill
