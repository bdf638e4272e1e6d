#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "udistill/model_client.hpp"
#include "udistill/qa_dataset.hpp"
#include "udistill/sample_set.hpp"
#include "udistill/semantic_norm.hpp"

namespace udistill {

// Append-only JSONL store of draws:
//   <root>/<backend_fingerprint>/<item_id>.jsonl
// Each line holds one draw with its cache key. Appends are serialized per
// item file.
class SampleCache {
 public:
  explicit SampleCache(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path item_path(const std::string& fingerprint, const std::string& item_id) const;

  // Draws stored for (fingerprint, item, params), by draw index. Throws
  // CacheCorruption naming file and line on unreadable or inconsistent lines.
  std::map<std::uint64_t, Generation> load(const std::string& fingerprint,
                                           const std::string& item_id,
                                           const GenParams& params) const;

  void append(const std::string& fingerprint, const std::string& item_id, const GenParams& params,
              const std::vector<std::pair<std::uint64_t, Generation>>& draws);

  static std::string draw_key(const std::string& fingerprint, const std::string& item_id,
                              const GenParams& params, std::uint64_t draw_index);

 private:
  std::mutex& file_mutex(const std::filesystem::path& path);

  std::filesystem::path root_;
  std::mutex registry_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> file_mu_;
};

// Makes a string safe to use as a single path component.
std::string path_safe(std::string_view s);

// Model id + prompt template version, as used in cache paths.
std::string backend_fingerprint(const ModelClient& client, std::string_view prompt_template);

struct SampleOptions {
  int parallelism = 1;
  SampleCache* cache = nullptr;  // optional
  // Instruction template the prompt was rendered from; versions the cache.
  std::string prompt_template;
  // Overrides the fingerprint derived from client + prompt_template.
  std::string fingerprint;
};

// Collects `n` draws (indices 0..n-1) for `item`, reusing cached draws and
// requesting only the shortfall. Failed draws are excluded and reported;
// more than 50% failures marks the set failed.
SampleSet sample_n(ModelClient& client, const QaItem& item, const std::string& prompt,
                   std::size_t n, const GenParams& params, const SampleOptions& options = {});

struct FrequencyEntry {
  std::size_t cluster_id = 0;
  std::string canonical_key;
  std::string representative_text;
  std::size_t count = 0;
  double f = 0.0;
  bool matches_gold = false;
  bool has_answer = true;
};

struct FrequencyTable {
  std::string item_id;
  std::vector<FrequencyEntry> entries;  // descending count, ties by cluster id
  std::size_t n_effective = 0;
};

// f = count / n_effective for each cluster.
FrequencyTable relative_frequencies(const std::vector<SemanticCluster>& clusters,
                                    std::size_t n_effective, std::string item_id = {});

nlohmann::json frequency_table_to_json(const FrequencyTable& table);
FrequencyTable frequency_table_from_json(const nlohmann::json& j);

}  // namespace udistill
