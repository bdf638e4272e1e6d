#include "udistill/config.hpp"

#include <fstream>

#include "udistill/errors.hpp"
#include "udistill/hashing.hpp"

namespace udistill {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

BackendConfig parse_backend(const json& j, const std::filesystem::path& base) {
  if (!j.is_object()) throw ConfigError("backend must be an object");
  BackendConfig b;
  const auto type = get_or<std::string>(j, "type", "mock");
  b.parallelism = get_or<int>(j, "parallelism", 4);
  if (b.parallelism < 1) throw ConfigError("backend.parallelism must be >= 1");
  if (type == "mock") {
    b.type = BackendConfig::Type::mock;
    if (!j.contains("spec")) throw ConfigError("mock backend needs 'spec'");
    b.mock_spec = resolve(base, j.at("spec").get<std::string>());
  } else if (type == "remote") {
    b.type = BackendConfig::Type::remote;
    b.remote.endpoint = get_or<std::string>(j, "endpoint", "");
    b.remote.model = get_or<std::string>(j, "model", "");
    if (b.remote.endpoint.empty() || b.remote.model.empty()) {
      throw ConfigError("remote backend needs 'endpoint' and 'model'");
    }
    b.remote.api_key = api_key_from_env();
    b.remote.logprobs_supported = get_or<bool>(j, "logprobs", true);
    b.remote.timeout = std::chrono::seconds(get_or<int>(j, "timeout_s", 120));
    b.remote.retry.max_attempts = get_or<int>(j, "max_attempts", 5);
    b.remote.retry.initial_backoff = std::chrono::milliseconds(get_or<int>(j, "initial_backoff_ms", 500));
  } else {
    throw ConfigError("unknown backend type '" + type + "'");
  }
  return b;
}

}  // namespace

std::string RunConfig::hash() const {
  json copy = raw;
  copy.erase("eval");
  return to_hex(fnv1a64(copy.dump()));
}

RunConfig parse_config(const json& doc, const std::filesystem::path& base) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  c.raw = doc;

  const auto& ds = doc.contains("dataset") ? doc.at("dataset") : throw ConfigError("config needs 'dataset'");
  c.dataset.path = resolve(base, ds.at("path").get<std::string>());
  c.dataset.format = parse_dataset_format(get_or<std::string>(ds, "format", "mcq"));

  c.seed = get_or<std::uint64_t>(doc, "seed", 0);

  const json split = doc.value("split", json::object());
  if (split.contains("caps")) {
    const auto caps = split.at("caps").get<std::vector<std::size_t>>();
    if (caps.size() != 3) throw ConfigError("split.caps needs [calibration, validation, test]");
    c.split = SplitSpec::from_caps(caps[0], caps[1], caps[2], c.seed);
  } else {
    const auto fr = get_or<std::vector<double>>(split, "fractions", {0.8, 0.1, 0.1});
    if (fr.size() != 3) throw ConfigError("split.fractions needs [calibration, validation, test]");
    c.split = SplitSpec::from_fractions(fr[0], fr[1], fr[2], c.seed);
  }

  if (!doc.contains("backend")) throw ConfigError("config needs 'backend'");
  c.backend = parse_backend(doc.at("backend"), base);

  const json sampling = doc.value("sampling", json::object());
  c.n_samples = get_or<std::size_t>(sampling, "n", 100);
  if (c.n_samples < 1) throw ConfigError("sampling.n must be >= 1");
  c.gen.temperature = get_or<double>(sampling, "temperature", 1.0);
  c.gen.max_tokens = get_or<int>(sampling, "max_tokens", 512);
  c.gen.seed = c.seed;
  c.keep_absent = get_or<bool>(sampling, "keep_absent", true);
  try {
    c.gen.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }

  const json judge = doc.value("judge", json::object());
  const auto judge_type = get_or<std::string>(judge, "type", "exact");
  if (judge_type == "exact") {
    c.judge.type = JudgeConfig::Type::exact;
  } else if (judge_type == "remote") {
    c.judge.type = JudgeConfig::Type::remote;
    json backend = judge;
    backend["type"] = "remote";
    c.judge.backend = parse_backend(backend, base);
    c.judge.max_attempts = get_or<int>(judge, "max_attempts", 3);
  } else {
    throw ConfigError("unknown judge type '" + judge_type + "'");
  }

  const json cal = doc.value("calibration", json::object());
  const auto kind = get_or<std::string>(cal, "kind", "isotonic");
  if (kind == "isotonic") c.calibration.kind = CalibrationConfig::Kind::isotonic;
  else if (kind == "temperature") c.calibration.kind = CalibrationConfig::Kind::temperature;
  else if (kind == "none") c.calibration.kind = CalibrationConfig::Kind::none;
  else throw ConfigError("unknown calibration kind '" + kind + "'");
  c.calibration.gate = get_or<bool>(cal, "gate", true);
  c.calibration.ece_threshold = get_or<double>(cal, "ece_threshold", 0.05);
  c.calibration.ece_bins = get_or<std::size_t>(cal, "ece_bins", 30);

  try {
    c.binning = BinningScheme::from_json(doc.value("binning", json::object()));
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }

  const json aug = doc.value("augment", json::object());
  c.augment.max_incorrect_per_question = get_or<std::size_t>(aug, "max_incorrect", 1);
  c.augment.include_correct = get_or<bool>(aug, "include_correct", true);
  c.augment.emit_without_correct = get_or<bool>(aug, "emit_without_correct", true);
  const auto style = get_or<std::string>(aug, "style", "tags");
  if (style != "tags" && style != "prose") throw ConfigError("augment.style must be tags or prose");
  c.augment.style = style == "tags" ? ConfidenceStyle::tags : ConfidenceStyle::prose;

  c.output_dir = resolve(base, get_or<std::string>(doc, "output_dir", "runs"));
  if (doc.contains("cache_dir")) c.cache_dir = resolve(base, doc.at("cache_dir").get<std::string>());

  const json ev = doc.value("eval", json::object());
  c.eval.raw = ev;
  if (ev.contains("backend")) c.eval.backend = parse_backend(ev.at("backend"), base);
  if (ev.contains("dataset")) {
    const auto& d = ev.at("dataset");
    c.eval.dataset = DatasetRef{resolve(base, d.at("path").get<std::string>()),
                                parse_dataset_format(get_or<std::string>(d, "format", "mcq"))};
  }
  c.eval.se_samples = get_or<std::size_t>(ev, "se_samples", 20);
  if (c.eval.se_samples < 2) throw ConfigError("eval.se_samples must be >= 2");
  c.eval.temperature = get_or<double>(ev, "temperature", 0.0);
  if (!(c.eval.temperature >= 0.0)) throw ConfigError("eval.temperature must be >= 0");
  const auto mean = get_or<std::string>(ev, "lexical_mean", "arithmetic");
  if (mean != "arithmetic" && mean != "geometric") throw ConfigError("eval.lexical_mean must be arithmetic or geometric");
  c.eval.lexical_mean = mean == "arithmetic" ? LexicalMean::arithmetic : LexicalMean::geometric;
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  try {
    return parse_config(doc, std::filesystem::absolute(path).parent_path());
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

void validate_config(const RunConfig& c) {
  auto require = [](const std::filesystem::path& p, const char* what) {
    if (!std::filesystem::is_regular_file(p)) {
      throw ConfigError(std::string(what) + " not found: " + p.string());
    }
  };
  require(c.dataset.path, "dataset");
  if (c.backend.type == BackendConfig::Type::mock) require(c.backend.mock_spec, "mock spec");
  if (c.eval.backend && c.eval.backend->type == BackendConfig::Type::mock) {
    require(c.eval.backend->mock_spec, "eval mock spec");
  }
  if (c.eval.dataset) require(c.eval.dataset->path, "eval dataset");
  if (c.calibration.ece_bins < 1) throw ConfigError("calibration.ece_bins must be >= 1");
}

}  // namespace udistill
