#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "udistill/judge.hpp"
#include "udistill/qa_dataset.hpp"
#include "udistill/sample_set.hpp"

namespace udistill {

// Tagged spans of a generation. Absent spans are nullopt.
struct ExtractedAnswer {
  std::string raw_text;
  std::optional<std::string> answer_span;
  std::optional<std::string> reasoning_span;
  std::optional<std::string> confidence_span;
};

// Content of the last well-formed <tag>...</tag> pair, trimmed.
std::optional<std::string> extract_tag(std::string_view text, std::string_view tag);

ExtractedAnswer extract_answer(std::string_view text);

// Lowercase, punctuation replaced by spaces, whitespace collapsed.
std::string normalize_text(std::string_view text);

// Maps an answer span to a choice letter, or nullopt (unmapped). A lone
// letter wins, then an exact match against a choice body, then a leading
// letter token.
std::optional<std::string> normalize_mcq(std::string_view answer_span,
                                         const std::vector<Choice>& choices);

struct SemanticCluster {
  std::size_t cluster_id = 0;
  std::string canonical_key;
  std::string representative;  // full generation text of one member
  std::size_t representative_index = 0;
  std::vector<std::size_t> member_indices;  // into SampleSet::generations
  std::size_t count = 0;
  bool matches_gold = false;
  bool has_answer = true;  // false for generations without an answer span
};

struct ClusterOptions {
  // Keep answer-less generations as singleton clusters; when false they
  // are dropped and do not count toward any frequency.
  bool keep_absent = true;
  std::uint64_t seed = 0;  // picks each cluster's representative
};

// Groups the generations of one item. MCQ items group by normalized
// letter; open items are compared with the judge, first against the gold
// answer, then against existing clusters in creation order (first match
// wins). Judge transport failures propagate.
std::vector<SemanticCluster> cluster_samples(const SampleSet& samples, const QaItem& item,
                                             EquivalenceJudge& judge,
                                             const ClusterOptions& options = {});

}  // namespace udistill
