#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "udistill/annotator.hpp"
#include "udistill/judge.hpp"
#include "udistill/model_client.hpp"
#include "udistill/qa_dataset.hpp"
#include "udistill/semantic_norm.hpp"

namespace udistill {

struct ParsedPrediction {
  std::string item_id;
  std::optional<std::string> answer_key;  // nullopt when unmapped / absent
  std::optional<std::size_t> bin;         // nullopt when unparsed
  int correct = 0;
  std::string raw_text;
  std::optional<double> score;  // raw method score before binning, if any
};

struct ReliabilityRow {
  std::size_t bin = 0;
  std::string label;
  std::size_t count = 0;
  double accuracy = 0.0;  // 0 when count is 0
  bool suppressed = false;  // fewer than kMinPlotCount samples
};

inline constexpr std::size_t kMinPlotCount = 10;

struct EvalReport {
  std::string method;
  std::optional<double> auroc;
  double accuracy = 0.0;
  std::optional<double> high_accuracy;
  double high_pct = 0.0;
  std::vector<ReliabilityRow> reliability;
  double unparsed_rate = 0.0;
  std::size_t n_predictions = 0;
  std::size_t n_parsed = 0;
  std::uint64_t model_calls = 0;
  std::vector<ParsedPrediction> predictions;
};

// Bin of the last <confidence> span, matched case- and punctuation-
// insensitively against the scheme labels.
std::optional<std::size_t> parse_confidence(std::string_view text, const BinningScheme& scheme);

// Mann-Whitney AUROC with half credit for ties. Throws ValidationError
// unless both labels are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

EvalReport aggregate(std::vector<ParsedPrediction> preds, const BinningScheme& scheme,
                     std::string method = "ud");

nlohmann::json report_to_json(const EvalReport& report);
// Inverse of report_to_json; predictions are not part of the summary.
EvalReport report_from_json(const nlohmann::json& j);
nlohmann::json prediction_to_json(const ParsedPrediction& p);
// bin,label,count,accuracy,suppressed
std::string reliability_csv(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& json_path,
                  const std::filesystem::path& csv_path);
// Fixed-order one-line-per-metric summary.
std::string format_summary(const EvalReport& report);

// Equal-width bins over [min, max] learned from validation scores; scores
// outside the range clamp to the end bins.
class RangeBinner {
 public:
  RangeBinner(double min, double max, std::size_t n_bins);

  double min() const noexcept { return min_; }
  double max() const noexcept { return max_; }
  std::size_t n_bins() const noexcept { return n_bins_; }
  std::vector<double> edges() const;
  std::size_t bin_of(double score) const;  // 1-based

 private:
  double min_, max_;
  std::size_t n_bins_;
};

RangeBinner fit_range_binner(std::span<const double> validation_scores, std::size_t n_bins);

// -sum p ln p over cluster counts.
double semantic_entropy(std::span<const std::size_t> counts);

enum class LexicalMean { arithmetic, geometric };

// Mean per-token probability (arithmetic) or exp(mean logprob) (geometric).
double mean_token_probability(std::span<const TokenLogprob> tokens, LexicalMean mean);

// Tokens overlapping the <answer> span of the generation; all tokens when
// the span is absent or the tokens do not reassemble the text.
std::vector<TokenLogprob> answer_span_tokens(const Generation& generation);

// Raw lexical score of one generation. Throws UnsupportedBackend when the
// generation carries no logprobs.
double lexical_score(const Generation& generation, LexicalMean mean);

// Answer key and correctness of a response to `item`.
struct AnswerCheck {
  std::optional<std::string> key;
  bool correct = false;
};
AnswerCheck check_answer(const QaItem& item, std::string_view text, EquivalenceJudge& judge);

struct EvalContext {
  ModelClient& client;
  EquivalenceJudge& judge;
  BinningScheme scheme;
  GenParams params;  // sampling parameters; greedy methods override temperature
  int parallelism = 1;
  std::uint64_t seed = 0;
};

// One generation per item with the confidence-augmented prompt, scored by
// its verbalized bin. Used for the distilled model.
EvalReport verbalized_eval(const Dataset& test, EvalContext& ctx);

// Same protocol but with the base model's confidence prompt.
EvalReport prompting_baseline(const Dataset& test, EvalContext& ctx);

// Greedy answer per item scored by mean token probability, isotonic-
// calibrated on `calibration`, binned with the fixed-width scheme.
EvalReport lexical_baseline(const Dataset& calibration, const Dataset& test, EvalContext& ctx,
                            LexicalMean mean = LexicalMean::arithmetic);

// m samples per item, clustered; confidence = -entropy, binned with a range
// binner fitted on `validation`; prediction = modal cluster.
EvalReport semantic_entropy_baseline(const Dataset& validation, const Dataset& test,
                                     EvalContext& ctx, std::size_t m,
                                     const ClusterOptions& cluster_options = {});

}  // namespace udistill
