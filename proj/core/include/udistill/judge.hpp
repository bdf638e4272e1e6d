#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>

#include "udistill/model_client.hpp"

namespace udistill {

// Symmetric, thread-safe memo of judge verdicts keyed by
// (question hash, {a, b}).
class JudgeCache {
 public:
  std::optional<bool> get(std::string_view question, std::string_view a, std::string_view b) const;
  void put(std::string_view question, std::string_view a, std::string_view b, bool verdict);
  std::size_t size() const;

  // JSONL of {question_hash, a, b, verdict}.
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  using Key = std::tuple<std::string, std::string, std::string>;
  static Key make_key(std::string_view question, std::string_view a, std::string_view b);
  static Key make_key_hashed(std::string qhash, std::string_view a, std::string_view b);

  mutable std::mutex mu_;
  std::map<Key, bool> verdicts_;
};

// Decides whether two answers to a question mean the same thing.
class EquivalenceJudge {
 public:
  virtual ~EquivalenceJudge() = default;

  // Reflexive without consulting the backend.
  bool equivalent(std::string_view question, std::string_view a, std::string_view b);
  // Compares an answer with the gold answer as phrased by gold_text().
  bool matches_gold(std::string_view question, std::string_view answer, std::string_view gold);

  virtual std::string gold_text(std::string_view gold) const { return std::string(gold); }

 protected:
  virtual bool decide(std::string_view question, std::string_view a, std::string_view b) = 0;
};

// String equality after trimming surrounding whitespace.
class ExactJudge final : public EquivalenceJudge {
 protected:
  bool decide(std::string_view question, std::string_view a, std::string_view b) override;
};

// Parses a judge reply: true for "equivalent", false for "contradictory",
// nullopt otherwise. Case-insensitive, tolerant of quotes and punctuation.
std::optional<bool> parse_verdict(std::string_view reply);

// Asks a chat model the equivalence question. Unparseable replies are
// retried; after `max_attempts` the pair is treated as not equivalent.
// Transport failures propagate.
class LlmJudge final : public EquivalenceJudge {
 public:
  explicit LlmJudge(std::shared_ptr<ModelClient> client, int max_attempts = 3);

  std::string gold_text(std::string_view gold) const override;

  JudgeCache& cache() noexcept { return cache_; }
  const JudgeCache& cache() const noexcept { return cache_; }
  std::uint64_t unparseable_verdicts() const noexcept { return unparseable_.load(); }

 protected:
  bool decide(std::string_view question, std::string_view a, std::string_view b) override;

 private:
  std::shared_ptr<ModelClient> client_;
  int max_attempts_;
  GenParams params_;
  JudgeCache cache_;
  std::atomic<std::uint64_t> unparseable_{0};
};

bool judge_equivalence(std::string_view question, std::string_view a, std::string_view b,
                       EquivalenceJudge& judge);

}  // namespace udistill
