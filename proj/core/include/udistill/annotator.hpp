#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "udistill/calibrator.hpp"

namespace udistill {

// B fixed-width bins over [0,1] with one verbal label each. Bins are
// left-closed and right-open except the last, which is closed.
class BinningScheme {
 public:
  // Five bins labelled "very low" .. "very high".
  BinningScheme();
  explicit BinningScheme(std::vector<std::string> labels);

  // "0-20%", "20-40%", ... for n bins.
  static BinningScheme percentages(std::size_t n_bins);

  std::size_t n_bins() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::vector<double>& edges() const noexcept { return edges_; }

  // 1-based bin index of p (clamped to [0,1]).
  std::size_t bin_of(double p) const;
  // Label of 1-based bin.
  const std::string& label(std::size_t bin) const;

  nlohmann::json to_json() const;
  static BinningScheme from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> labels_;
  std::vector<double> edges_;
};

std::size_t bin_of(double p, const BinningScheme& scheme);

// Appends the confidence request to an instruction. See prompts.hpp.
std::string augment_instruction(std::string_view prompt);

enum class ConfidenceStyle { tags, prose };

struct AugmentPolicy {
  std::size_t max_incorrect_per_question = 1;  // K
  bool include_correct = true;
  // Emit incorrect examples for items whose gold answer was never sampled.
  bool emit_without_correct = true;
  ConfidenceStyle style = ConfidenceStyle::tags;
};

// One sampled cluster of one item, ready for annotation.
struct ClusterCandidate {
  std::string cluster_key;
  double f = 0.0;
  bool correct = false;
  std::string representative;  // full generation text
};

struct ItemCandidates {
  std::string item_id;
  std::string prompt;  // sampling prompt; augmented during annotation
  std::vector<ClusterCandidate> clusters;
};

struct AnnotatedExample {
  std::string item_id;
  std::string prompt;
  std::string target;
  bool is_correct = false;
  std::size_t source_bin = 0;
  double calibrated_p = 0.0;
  std::string cluster_key;
};

nlohmann::json annotated_to_json(const AnnotatedExample& e);
AnnotatedExample annotated_from_json(const nlohmann::json& j);

// "<reasoning> .. </reasoning> <answer> .. </answer> <confidence> L </confidence>"
// (reasoning omitted when the representative has none). Prose style ends
// with "(with L confidence)" instead of the confidence tag.
std::string render_target(std::string_view answer, std::string_view reasoning,
                          std::string_view label, ConfidenceStyle style);

struct SftBuildStats {
  std::size_t items = 0;
  std::size_t items_without_correct = 0;
  std::size_t items_contributing_nothing = 0;
  std::size_t clusters_without_answer = 0;
};

// Applies the filter step (correct cluster if present, plus the K most
// frequent incorrect clusters with an answer), labels each kept cluster with
// bin(map(f)), and shuffles deterministically with `seed`.
std::vector<AnnotatedExample> build_sft_dataset(const std::vector<ItemCandidates>& items,
                                                const CalibrationMap& map,
                                                const BinningScheme& scheme,
                                                const AugmentPolicy& policy, std::uint64_t seed,
                                                SftBuildStats* stats = nullptr);

// {"messages":[{"role":"user",...},{"role":"model",...}]} per line.
void emit_sft_jsonl(const std::vector<AnnotatedExample>& examples,
                    const std::filesystem::path& path);

nlohmann::json sft_record(const AnnotatedExample& example);

}  // namespace udistill
