#include "udistill/manifest.hpp"

#include <fstream>

#include "udistill/errors.hpp"
#include "udistill/hashing.hpp"

namespace udistill {

using nlohmann::json;

std::string_view to_string(StageStatus status) {
  switch (status) {
    case StageStatus::pending: return "pending";
    case StageStatus::done: return "done";
    case StageStatus::failed: return "failed";
  }
  return "pending";
}

StageStatus parse_stage_status(std::string_view name) {
  if (name == "done") return StageStatus::done;
  if (name == "failed") return StageStatus::failed;
  return StageStatus::pending;
}

StageStatus RunManifest::status(const std::string& stage) const {
  auto it = stages_.find(stage);
  return it == stages_.end() ? StageStatus::pending : it->second.status;
}

const StageRecord* RunManifest::record(const std::string& stage) const {
  auto it = stages_.find(stage);
  return it == stages_.end() ? nullptr : &it->second;
}

void RunManifest::mark_started(const std::string& stage) {
  auto& r = stages_[stage];
  r.status = StageStatus::pending;
  r.started_at = utc_timestamp();
  r.finished_at.clear();
  r.error.clear();
}

void RunManifest::mark_done(const std::string& stage) {
  auto& r = stages_[stage];
  r.status = StageStatus::done;
  r.finished_at = utc_timestamp();
  r.error.clear();
}

void RunManifest::mark_failed(const std::string& stage, const std::string& error) {
  auto& r = stages_[stage];
  r.status = StageStatus::failed;
  r.finished_at = utc_timestamp();
  r.error = error;
}

void RunManifest::set_artifact(const std::string& name, const std::filesystem::path& path) {
  artifacts_[name] = path.string();
}

std::optional<std::filesystem::path> RunManifest::artifact(const std::string& name) const {
  auto it = artifacts_.find(name);
  if (it == artifacts_.end()) return std::nullopt;
  return std::filesystem::path(it->second);
}

void RunManifest::add_decision(json decision) {
  decision["at"] = utc_timestamp();
  decisions_.push_back(std::move(decision));
}

json RunManifest::to_json() const {
  json stages = json::object();
  for (const auto& [name, r] : stages_) {
    stages[name] = {{"status", to_string(r.status)},
                    {"started_at", r.started_at},
                    {"finished_at", r.finished_at},
                    {"error", r.error}};
  }
  return {{"config_hash", config_hash_}, {"stages", stages}, {"artifacts", artifacts_},
          {"decisions", decisions_}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m(j.at("config_hash").get<std::string>());
  for (const auto& [name, r] : j.at("stages").items()) {
    m.stages_[name] = {parse_stage_status(r.at("status").get<std::string>()),
                       r.value("started_at", ""), r.value("finished_at", ""), r.value("error", "")};
  }
  m.artifacts_ = j.value("artifacts", std::map<std::string, std::string>{});
  for (const auto& d : j.value("decisions", json::array())) m.decisions_.push_back(d);
  return m;
}

void RunManifest::save(const std::filesystem::path& path) const {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + tmp);
    out << to_json().dump(2) << '\n';
    out.flush();
    if (!out) throw IoError("write failed for manifest " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ParseError("manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace udistill
