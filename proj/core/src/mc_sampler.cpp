#include "udistill/mc_sampler.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>

#include "udistill/errors.hpp"
#include "udistill/hashing.hpp"

namespace udistill {

using nlohmann::json;

namespace {

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

std::string path_safe(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (char c : s) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc) || c == '-' || c == '_' || c == '.') {
      out += c;
    } else {
      out += '%';
      out += kHex[uc >> 4];
      out += kHex[uc & 0xf];
    }
  }
  if (out.empty() || out == "." || out == "..") out = "%" + out;
  return out;
}

std::string backend_fingerprint(const ModelClient& client, std::string_view prompt_template) {
  return client.fingerprint() + "-p" + to_hex(fnv1a64(prompt_template)).substr(0, 8);
}

SampleCache::SampleCache(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path SampleCache::item_path(const std::string& fingerprint,
                                             const std::string& item_id) const {
  return root_ / path_safe(fingerprint) / (path_safe(item_id) + ".jsonl");
}

std::string SampleCache::draw_key(const std::string& fingerprint, const std::string& item_id,
                                  const GenParams& params, std::uint64_t draw_index) {
  const std::string seed = params.seed ? std::to_string(*params.seed) : "-";
  return to_hex(hash_fields({item_id, fingerprint, format_double(params.temperature),
                             std::to_string(params.max_tokens), seed,
                             params.want_logprobs ? "lp" : "-", std::to_string(draw_index)}));
}

std::map<std::uint64_t, Generation> SampleCache::load(const std::string& fingerprint,
                                                      const std::string& item_id,
                                                      const GenParams& params) const {
  std::map<std::uint64_t, Generation> out;
  const auto path = item_path(fingerprint, item_id);
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto corrupt = [&](const std::string& why) {
      return CacheCorruption("cache " + path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw corrupt(e.what());
    }
    try {
      if (j.at("item_id").get<std::string>() != item_id) throw corrupt("item id mismatch");
      const auto draw = j.at("draw").get<std::uint64_t>();
      GenParams stored = params;
      stored.temperature = j.at("temperature").get<double>();
      stored.max_tokens = j.at("max_tokens").get<int>();
      stored.seed = j.at("seed").is_null() ? std::nullopt
                                           : std::optional<std::uint64_t>(j["seed"].get<std::uint64_t>());
      stored.want_logprobs = j.at("logprobs").get<bool>();
      if (j.at("key").get<std::string>() != draw_key(fingerprint, item_id, stored, draw)) {
        throw corrupt("key does not match record contents");
      }
      if (stored.temperature != params.temperature || stored.max_tokens != params.max_tokens ||
          stored.seed != params.seed || stored.want_logprobs != params.want_logprobs) {
        continue;
      }
      if (j.at("digest").get<std::string>() != to_hex(hash_fields({j.at("generation").dump()}))) {
        throw corrupt("generation does not match its digest");
      }
      out.insert_or_assign(draw, generation_from_json(j.at("generation")));
    } catch (const json::exception& e) {
      throw corrupt(e.what());
    }
  }
  return out;
}

std::mutex& SampleCache::file_mutex(const std::filesystem::path& path) {
  std::lock_guard lock(registry_mu_);
  auto& slot = file_mu_[path.string()];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

void SampleCache::append(const std::string& fingerprint, const std::string& item_id,
                         const GenParams& params,
                         const std::vector<std::pair<std::uint64_t, Generation>>& draws) {
  if (draws.empty()) return;
  const auto path = item_path(fingerprint, item_id);
  std::lock_guard lock(file_mutex(path));
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to cache " + path.string());
  for (const auto& [draw, gen] : draws) {
    json j = {{"key", draw_key(fingerprint, item_id, params, draw)},
              {"item_id", item_id},
              {"draw", draw},
              {"temperature", params.temperature},
              {"max_tokens", params.max_tokens},
              {"seed", params.seed ? json(*params.seed) : json(nullptr)},
              {"logprobs", params.want_logprobs},
              {"generation", generation_to_json(gen)}};
    j["digest"] = to_hex(hash_fields({j["generation"].dump()}));
    out << j.dump() << '\n';
  }
  out.flush();
  if (!out) throw IoError("write failed for cache " + path.string());
}

SampleSet sample_n(ModelClient& client, const QaItem& item, const std::string& prompt,
                   std::size_t n, const GenParams& params, const SampleOptions& options) {
  if (n < 1) throw ValidationError("sample_n needs n >= 1");
  params.validate();

  SampleSet set;
  set.item_id = item.id;
  set.n_requested = n;
  set.params = params;
  set.created_at = utc_timestamp();
  set.backend_fingerprint =
      options.fingerprint.empty() ? backend_fingerprint(client, options.prompt_template)
                                  : options.fingerprint;

  std::map<std::uint64_t, Generation> have;
  if (options.cache) have = options.cache->load(set.backend_fingerprint, item.id, params);

  std::vector<GenRequest> requests;
  for (std::uint64_t i = 0; i < n; ++i) {
    if (!have.contains(i)) requests.push_back(GenRequest{prompt, item.id, i});
  }
  set.n_new_requests = requests.size();

  if (!requests.empty()) {
    const auto results = try_generate_batch(client, requests, params, options.parallelism);
    std::vector<std::pair<std::uint64_t, Generation>> fresh;
    for (std::size_t k = 0; k < results.size(); ++k) {
      if (results[k].ok()) {
        fresh.emplace_back(requests[k].draw_index, *results[k].generation);
      } else {
        ++set.n_failed;
        if (set.errors.size() < 5) set.errors.push_back(results[k].error);
      }
    }
    if (options.cache) options.cache->append(set.backend_fingerprint, item.id, params, fresh);
    for (auto& [draw, gen] : fresh) have.insert_or_assign(draw, std::move(gen));
  }

  for (auto& [draw, gen] : have) {
    if (draw >= n) break;
    set.draw_indices.push_back(draw);
    set.generations.push_back(std::move(gen));
  }
  set.failed = 2 * set.n_failed > n;
  return set;
}

FrequencyTable relative_frequencies(const std::vector<SemanticCluster>& clusters,
                                    std::size_t n_effective, std::string item_id) {
  if (n_effective == 0) throw ValidationError("relative_frequencies: n_effective is zero");
  std::size_t total = 0;
  for (const auto& c : clusters) total += c.count;
  if (total != n_effective) {
    throw ValidationError("cluster counts sum to " + std::to_string(total) + ", expected " +
                          std::to_string(n_effective));
  }
  FrequencyTable table;
  table.item_id = std::move(item_id);
  table.n_effective = n_effective;
  for (const auto& c : clusters) {
    table.entries.push_back({c.cluster_id, c.canonical_key, c.representative, c.count,
                             static_cast<double>(c.count) / static_cast<double>(n_effective),
                             c.matches_gold, c.has_answer});
  }
  std::stable_sort(table.entries.begin(), table.entries.end(),
                   [](const FrequencyEntry& a, const FrequencyEntry& b) { return a.count > b.count; });
  return table;
}

json frequency_table_to_json(const FrequencyTable& table) {
  json entries = json::array();
  for (const auto& e : table.entries) {
    entries.push_back({{"cluster_id", e.cluster_id},
                       {"key", e.canonical_key},
                       {"representative", e.representative_text},
                       {"count", e.count},
                       {"f", e.f},
                       {"matches_gold", e.matches_gold},
                       {"has_answer", e.has_answer}});
  }
  return {{"item_id", table.item_id}, {"n_effective", table.n_effective}, {"entries", entries}};
}

FrequencyTable frequency_table_from_json(const json& j) {
  FrequencyTable t;
  t.item_id = j.at("item_id").get<std::string>();
  t.n_effective = j.at("n_effective").get<std::size_t>();
  for (const auto& e : j.at("entries")) {
    t.entries.push_back({e.at("cluster_id").get<std::size_t>(), e.at("key").get<std::string>(),
                         e.at("representative").get<std::string>(), e.at("count").get<std::size_t>(),
                         e.at("f").get<double>(), e.at("matches_gold").get<bool>(),
                         e.value("has_answer", true)});
  }
  return t;
}

}  // namespace udistill
