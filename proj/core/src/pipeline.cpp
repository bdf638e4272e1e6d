#include "udistill/pipeline.hpp"

#include <fstream>

#include <spdlog/spdlog.h>

#include "udistill/annotator.hpp"
#include "udistill/calibrator.hpp"
#include "udistill/errors.hpp"
#include "udistill/hashing.hpp"
#include "udistill/mc_sampler.hpp"
#include "udistill/mock_model.hpp"
#include "udistill/prompts.hpp"
#include "udistill/remote_client.hpp"
#include "udistill/semantic_norm.hpp"

namespace udistill {

using nlohmann::json;

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::sample: return "sample";
    case Stage::cluster: return "cluster";
    case Stage::calibrate: return "calibrate";
    case Stage::annotate: return "annotate";
    case Stage::emit: return "emit";
  }
  return "sample";
}

Stage parse_stage(std::string_view name) {
  for (auto s : kAllStages) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

std::string_view to_string(EvalMethod method) {
  switch (method) {
    case EvalMethod::ud: return "ud";
    case EvalMethod::lexical: return "lexical";
    case EvalMethod::prompting: return "prompting";
    case EvalMethod::semantic_entropy: return "semantic_entropy";
  }
  return "ud";
}

EvalMethod parse_eval_method(std::string_view name) {
  for (auto m : {EvalMethod::ud, EvalMethod::lexical, EvalMethod::prompting, EvalMethod::semantic_entropy}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown eval method '" + std::string(name) + "'");
}

std::shared_ptr<ModelClient> make_client(const BackendConfig& config) {
  if (config.type == BackendConfig::Type::mock) {
    return std::make_shared<MockModel>(load_mock_spec(config.mock_spec));
  }
  return std::make_shared<RemoteClient>(config.remote);
}

namespace {

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), line_no);
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

std::string sampling_template(const QaItem& item) {
  return std::string(item.is_mcq() ? prompts::kMcqSampling : prompts::kOpenSampling);
}

}  // namespace

Pipeline::Pipeline(RunConfig config, Backends backends)
    : config_(std::move(config)), backends_(std::move(backends)) {
  validate_config(config_);
  run_dir_ = config_.output_dir / config_.hash();
  std::filesystem::create_directories(run_dir_);
  const auto manifest_path = run_dir_ / "manifest.json";
  if (std::filesystem::exists(manifest_path)) {
    manifest_ = RunManifest::load(manifest_path);
    if (manifest_.config_hash() != config_.hash()) {
      throw ConfigError("manifest in " + run_dir_.string() + " belongs to a different config");
    }
  } else {
    manifest_ = RunManifest(config_.hash());
    write_json(run_dir_ / "config.json", config_.raw);
    save_manifest();
  }
}

std::filesystem::path Pipeline::cache_root() const {
  return config_.cache_dir ? *config_.cache_dir : run_dir_ / "cache";
}

std::filesystem::path Pipeline::artifact_path(std::string_view name) const {
  return run_dir_ / std::string(name);
}

void Pipeline::save_manifest() const { manifest_.save(run_dir_ / "manifest.json"); }

const DatasetSplits& Pipeline::splits() {
  if (!splits_) {
    const auto dataset = load_dataset(config_.dataset.path, config_.dataset.format);
    splits_ = split(dataset, config_.split);
  }
  return *splits_;
}

ModelClient& Pipeline::sampler() {
  if (!backends_.sampler) backends_.sampler = make_client(config_.backend);
  return *backends_.sampler;
}

ModelClient& Pipeline::evaluated() {
  if (!backends_.evaluated) {
    backends_.evaluated = config_.eval.backend ? make_client(*config_.eval.backend) : nullptr;
    if (!backends_.evaluated) return sampler();
  }
  return *backends_.evaluated;
}

EquivalenceJudge& Pipeline::judge() {
  if (!judge_) {
    if (config_.judge.type == JudgeConfig::Type::exact) {
      judge_ = std::make_unique<ExactJudge>();
    } else {
      if (!backends_.judge) backends_.judge = make_client(config_.judge.backend);
      auto llm = std::make_unique<LlmJudge>(backends_.judge, config_.judge.max_attempts);
      llm->cache().load(artifact_path("judge_cache.jsonl"));
      judge_ = std::move(llm);
    }
  }
  return *judge_;
}

void Pipeline::run_stage(Stage stage) {
  const std::string name(to_string(stage));
  manifest_.mark_started(name);
  save_manifest();
  try {
    switch (stage) {
      case Stage::sample: stage_sample(); break;
      case Stage::cluster: stage_cluster(); break;
      case Stage::calibrate: stage_calibrate(); break;
      case Stage::annotate: stage_annotate(); break;
      case Stage::emit: stage_emit(); break;
    }
  } catch (const std::exception& e) {
    manifest_.mark_failed(name, e.what());
    save_manifest();
    spdlog::error("stage {} failed: {}", name, e.what());
    throw;
  }
  manifest_.mark_done(name);
  save_manifest();
  spdlog::info("stage {} done", name);
}

void Pipeline::run_through(Stage last) {
  for (auto s : kAllStages) {
    if (manifest_.status(std::string(to_string(s))) != StageStatus::done) run_stage(s);
    if (s == last) break;
  }
}

const RunManifest& Pipeline::run_distill() {
  run_through(Stage::emit);
  return manifest_;
}

void Pipeline::stage_sample() {
  const auto& cal = splits().calibration;
  if (cal.empty()) throw ValidationError("calibration split is empty");
  SampleCache cache(cache_root());
  json summary = json::object();
  std::size_t failed = 0, new_requests = 0;
  for (const auto& item : cal) {
    SampleOptions opts;
    opts.parallelism = config_.backend.parallelism;
    opts.cache = &cache;
    opts.prompt_template = sampling_template(item);
    const auto set = sample_n(sampler(), item, prompts::sampling_prompt(item), config_.n_samples,
                              config_.gen, opts);
    new_requests += set.n_new_requests;
    if (set.failed) {
      ++failed;
      spdlog::warn("item '{}' failed: {} of {} draws failed", item.id, set.n_failed, set.n_requested);
    }
    summary[item.id] = {{"fingerprint", set.backend_fingerprint},
                        {"n_effective", set.n_effective()},
                        {"n_failed", set.n_failed},
                        {"failed", set.failed},
                        {"errors", set.errors}};
  }
  if (failed == cal.size()) throw Error("sampling failed for every calibration item");
  const auto path = artifact_path("samples.json");
  write_json(path, summary);
  manifest_.set_artifact("cache_dir", cache_root());
  manifest_.set_artifact("samples", path);
  manifest_.add_decision({{"stage", "sample"},
                          {"items", cal.size()},
                          {"failed_items", failed},
                          {"new_requests", new_requests},
                          {"n_samples", config_.n_samples}});
}

void Pipeline::stage_cluster() {
  std::ifstream in(artifact_path("samples.json"));
  if (!in) throw IoError("samples.json missing; rerun the sample stage");
  const json summary = json::parse(in);
  SampleCache cache(cache_root());
  std::vector<json> rows;
  std::size_t failed = 0;
  ClusterOptions copts;
  copts.keep_absent = config_.keep_absent;
  copts.seed = config_.seed;

  for (const auto& item : splits().calibration) {
    const auto s = summary.find(item.id);
    if (s == summary.end() || s->at("failed").get<bool>()) {
      rows.push_back({{"item_id", item.id}, {"failed", true}, {"error", "sampling failed"}});
      ++failed;
      continue;
    }
    // Read back from the cache only; this stage never calls the sampler.
    SampleSet set;
    set.item_id = item.id;
    set.n_requested = config_.n_samples;
    set.params = config_.gen;
    set.backend_fingerprint = s->at("fingerprint").get<std::string>();
    for (auto& [draw, gen] : cache.load(set.backend_fingerprint, item.id, config_.gen)) {
      if (draw >= config_.n_samples) break;
      set.draw_indices.push_back(draw);
      set.generations.push_back(std::move(gen));
    }
    try {
      const auto clusters = cluster_samples(set, item, judge(), copts);
      std::size_t n_eff = 0;
      for (const auto& c : clusters) n_eff += c.count;
      if (n_eff == 0) throw ValidationError("no extractable generations");
      auto row = frequency_table_to_json(relative_frequencies(clusters, n_eff, item.id));
      row["failed"] = false;
      rows.push_back(std::move(row));
    } catch (const TransportError& e) {
      rows.push_back({{"item_id", item.id}, {"failed", true}, {"error", e.what()}});
      ++failed;
    } catch (const ValidationError& e) {
      rows.push_back({{"item_id", item.id}, {"failed", true}, {"error", e.what()}});
      ++failed;
    }
  }
  if (auto* llm = dynamic_cast<LlmJudge*>(judge_.get())) {
    llm->cache().save(artifact_path("judge_cache.jsonl"));
    manifest_.set_artifact("judge_cache", artifact_path("judge_cache.jsonl"));
  }
  const auto path = artifact_path("clusters.jsonl");
  write_jsonl(path, rows);
  manifest_.set_artifact("frequency_tables", path);
  manifest_.add_decision({{"stage", "cluster"}, {"items", rows.size()}, {"failed_items", failed}});
}

void Pipeline::stage_calibrate() {
  std::vector<ScoredPrediction> scored;
  std::vector<json> scored_rows;
  for (const auto& row : read_jsonl(artifact_path("clusters.jsonl"))) {
    if (row.value("failed", false)) continue;
    const auto table = frequency_table_from_json(row);
    for (const auto& e : table.entries) {
      scored.push_back({table.item_id, e.canonical_key, e.f, e.matches_gold ? 1 : 0, e.representative_text});
      scored_rows.push_back({{"item_id", table.item_id},
                             {"cluster_key", e.canonical_key},
                             {"f", e.f},
                             {"correct", e.matches_gold ? 1 : 0}});
    }
  }
  if (scored.size() < 2) throw ValidationError("fewer than 2 scored predictions to calibrate on");
  write_jsonl(artifact_path("scored.jsonl"), scored_rows);
  const auto pairs = to_pairs(scored);

  const auto& cc = config_.calibration;
  bool fit = cc.kind != CalibrationConfig::Kind::none;
  json decision = {{"stage", "calibrate"}, {"pairs", pairs.size()}};
  if (fit && cc.gate) {
    const auto d = should_calibrate(pairs, cc.ece_threshold, cc.ece_bins);
    decision["measured_ece"] = d.measured_ece;
    decision["ece_bins"] = d.n_bins;
    decision["threshold"] = d.threshold;
    decision["should_calibrate"] = to_string(d.verdict);
    fit = d.verdict == CalibrationVerdict::calibrate;
  }
  CalibrationMap map = CalibrationMap::identity();
  if (fit) {
    map = cc.kind == CalibrationConfig::Kind::isotonic ? fit_isotonic(pairs) : fit_temperature(pairs);
  }
  decision["map_kind"] = to_string(map.kind());
  const auto path = artifact_path("calibration_map.json");
  map.save(path);
  manifest_.set_artifact("calibration_map", path);
  manifest_.set_artifact("scored", artifact_path("scored.jsonl"));
  manifest_.add_decision(std::move(decision));
}

void Pipeline::stage_annotate() {
  const auto map = CalibrationMap::load(artifact_path("calibration_map.json"));
  std::map<std::string, const QaItem*> by_id;
  for (const auto& item : splits().calibration) by_id[item.id] = &item;

  std::vector<ItemCandidates> candidates;
  for (const auto& row : read_jsonl(artifact_path("clusters.jsonl"))) {
    if (row.value("failed", false)) continue;
    const auto table = frequency_table_from_json(row);
    const auto it = by_id.find(table.item_id);
    if (it == by_id.end()) throw ValidationError("clusters.jsonl names unknown item '" + table.item_id + "'");
    ItemCandidates ic{table.item_id, prompts::sampling_prompt(*it->second), {}};
    for (const auto& e : table.entries) {
      ic.clusters.push_back({e.canonical_key, e.f, e.matches_gold, e.representative_text});
    }
    candidates.push_back(std::move(ic));
  }
  SftBuildStats stats;
  const auto examples = build_sft_dataset(candidates, map, config_.binning, config_.augment, config_.seed, &stats);
  std::vector<json> rows;
  rows.reserve(examples.size());
  for (const auto& e : examples) rows.push_back(annotated_to_json(e));
  const auto path = artifact_path("annotated.jsonl");
  write_jsonl(path, rows);
  manifest_.set_artifact("annotated", path);
  manifest_.add_decision({{"stage", "annotate"},
                          {"examples", examples.size()},
                          {"items", stats.items},
                          {"items_without_correct", stats.items_without_correct},
                          {"items_contributing_nothing", stats.items_contributing_nothing},
                          {"max_incorrect", config_.augment.max_incorrect_per_question}});
}

void Pipeline::stage_emit() {
  std::vector<AnnotatedExample> examples;
  for (const auto& row : read_jsonl(artifact_path("annotated.jsonl"))) {
    examples.push_back(annotated_from_json(row));
  }
  const auto path = artifact_path("sft.jsonl");
  emit_sft_jsonl(examples, path);
  manifest_.set_artifact("sft", path);
}

EvalReport Pipeline::run_eval(EvalMethod method) {
  const std::string mname(to_string(method));
  const std::string stage_key =
      "eval:" + mname + ":" + to_hex(fnv1a64(config_.eval.raw.dump() + mname)).substr(0, 8);
  const auto json_path = artifact_path("eval_" + mname + "_" + stage_key.substr(stage_key.size() - 8) + ".json");
  const auto csv_path = artifact_path("eval_" + mname + "_" + stage_key.substr(stage_key.size() - 8) + "_reliability.csv");
  const auto preds_path = artifact_path("eval_" + mname + "_" + stage_key.substr(stage_key.size() - 8) + "_predictions.jsonl");

  if (manifest_.status(stage_key) == StageStatus::done && std::filesystem::exists(json_path)) {
    std::ifstream in(json_path);
    return report_from_json(json::parse(in));
  }

  Dataset external;
  const Dataset* test = nullptr;
  if (config_.eval.dataset) {
    external = load_dataset(config_.eval.dataset->path, config_.eval.dataset->format);
    test = &external;
  } else {
    test = &splits().test;
  }
  if (test->empty()) throw ValidationError("eval: test set is empty");
  if (method == EvalMethod::lexical && !sampler().supports_logprobs()) {
    throw UnsupportedBackend("lexical baseline needs token logprobs; backend '" +
                             sampler().fingerprint() + "' does not provide them");
  }

  manifest_.mark_started(stage_key);
  save_manifest();
  EvalReport report;
  try {
    GenParams single = config_.gen;
    single.temperature = config_.eval.temperature;
    switch (method) {
      case EvalMethod::ud: {
        EvalContext ctx{evaluated(), judge(), config_.binning, single, config_.backend.parallelism, config_.seed};
        report = verbalized_eval(*test, ctx);
        break;
      }
      case EvalMethod::prompting: {
        EvalContext ctx{sampler(), judge(), config_.binning, single, config_.backend.parallelism, config_.seed};
        report = prompting_baseline(*test, ctx);
        break;
      }
      case EvalMethod::lexical: {
        EvalContext ctx{sampler(), judge(), config_.binning, single, config_.backend.parallelism, config_.seed};
        report = lexical_baseline(splits().calibration, *test, ctx, config_.eval.lexical_mean);
        break;
      }
      case EvalMethod::semantic_entropy: {
        const Dataset* val = &splits().validation;
        if (val->empty()) {
          spdlog::info("semantic_entropy: validation split empty; fitting the range binner on calibration items");
          val = &splits().calibration;
        }
        EvalContext ctx{sampler(), judge(), config_.binning, config_.gen, config_.backend.parallelism, config_.seed};
        ClusterOptions copts;
        copts.keep_absent = config_.keep_absent;
        report = semantic_entropy_baseline(*val, *test, ctx, config_.eval.se_samples, copts);
        break;
      }
    }
    write_report(report, json_path, csv_path);
    std::vector<json> rows;
    for (const auto& p : report.predictions) rows.push_back(prediction_to_json(p));
    write_jsonl(preds_path, rows);
  } catch (const std::exception& e) {
    manifest_.mark_failed(stage_key, e.what());
    save_manifest();
    throw;
  }
  manifest_.set_artifact("eval_" + mname, json_path);
  manifest_.set_artifact("eval_" + mname + "_reliability", csv_path);
  manifest_.add_decision({{"stage", stage_key}, {"model_calls", report.model_calls}, {"test_items", test->size()}});
  manifest_.mark_done(stage_key);
  save_manifest();
  return report;
}

RunManifest run_distill(const RunConfig& config, Backends backends) {
  Pipeline p(config, std::move(backends));
  return p.run_distill();
}

EvalReport run_eval(const RunConfig& config, EvalMethod method, Backends backends) {
  Pipeline p(config, std::move(backends));
  return p.run_eval(method);
}

}  // namespace udistill
