#include "udistill/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "udistill/calibrator.hpp"
#include "udistill/errors.hpp"
#include "udistill/mc_sampler.hpp"
#include "udistill/prompts.hpp"

namespace udistill {

using nlohmann::json;

std::optional<std::size_t> parse_confidence(std::string_view text, const BinningScheme& scheme) {
  const auto span = extract_tag(text, "confidence");
  if (!span) return std::nullopt;
  const auto norm = normalize_text(*span);
  if (norm.empty()) return std::nullopt;
  for (std::size_t b = 1; b <= scheme.n_bins(); ++b) {
    if (normalize_text(scheme.label(b)) == norm) return b;
  }
  return std::nullopt;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("auroc: scores and labels differ in size");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Twice the U statistic stays an exact integer.
  std::uint64_t twice_u = 0, n_neg_below = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? pos : neg) += 1;
      ++j;
    }
    twice_u += pos * (2 * n_neg_below + neg);
    n_neg_below += neg;
    n_pos += pos;
    n_neg += neg;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) throw ValidationError("auroc needs both correct and incorrect predictions");
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

EvalReport aggregate(std::vector<ParsedPrediction> preds, const BinningScheme& scheme,
                     std::string method) {
  if (preds.empty()) throw ValidationError("aggregate: no predictions");
  EvalReport r;
  r.method = std::move(method);
  r.n_predictions = preds.size();

  const auto b = scheme.n_bins();
  std::vector<std::size_t> count(b + 1, 0), correct(b + 1, 0);
  std::vector<double> scores;
  std::vector<int> labels;
  std::size_t n_correct = 0;
  for (const auto& p : preds) {
    n_correct += p.correct ? 1 : 0;
    if (!p.bin) continue;
    if (*p.bin < 1 || *p.bin > b) throw ValidationError("prediction bin out of range");
    ++count[*p.bin];
    correct[*p.bin] += p.correct ? 1 : 0;
    scores.push_back(static_cast<double>(*p.bin));
    labels.push_back(p.correct ? 1 : 0);
  }
  r.n_parsed = scores.size();
  r.accuracy = static_cast<double>(n_correct) / static_cast<double>(preds.size());
  r.unparsed_rate = 1.0 - static_cast<double>(r.n_parsed) / static_cast<double>(preds.size());

  const bool both = std::find(labels.begin(), labels.end(), 1) != labels.end() &&
                    std::find(labels.begin(), labels.end(), 0) != labels.end();
  if (both) r.auroc = auroc(scores, labels);

  for (std::size_t k = 1; k <= b; ++k) {
    r.reliability.push_back({k, scheme.label(k), count[k],
                             count[k] ? static_cast<double>(correct[k]) / static_cast<double>(count[k]) : 0.0,
                             count[k] < kMinPlotCount});
  }
  const std::size_t high_count = count[b] + count[b - 1];
  const std::size_t high_correct = correct[b] + correct[b - 1];
  if (r.n_parsed > 0) {
    r.high_pct = 100.0 * static_cast<double>(high_count) / static_cast<double>(r.n_parsed);
  }
  if (high_count > 0) {
    r.high_accuracy = static_cast<double>(high_correct) / static_cast<double>(high_count);
  }
  r.predictions = std::move(preds);
  return r;
}

json report_to_json(const EvalReport& r) {
  json rows = json::array();
  for (const auto& row : r.reliability) {
    rows.push_back({{"bin", row.bin},
                    {"label", row.label},
                    {"count", row.count},
                    {"accuracy", row.accuracy},
                    {"suppressed", row.suppressed}});
  }
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"method", r.method},
          {"auroc", opt(r.auroc)},
          {"accuracy", r.accuracy},
          {"high_accuracy", opt(r.high_accuracy)},
          {"high_pct", r.high_pct},
          {"unparsed_rate", r.unparsed_rate},
          {"n_predictions", r.n_predictions},
          {"n_parsed", r.n_parsed},
          {"model_calls", r.model_calls},
          {"reliability", rows}};
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  r.method = j.at("method").get<std::string>();
  if (!j.at("auroc").is_null()) r.auroc = j["auroc"].get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  if (!j.at("high_accuracy").is_null()) r.high_accuracy = j["high_accuracy"].get<double>();
  r.high_pct = j.at("high_pct").get<double>();
  r.unparsed_rate = j.at("unparsed_rate").get<double>();
  r.n_predictions = j.at("n_predictions").get<std::size_t>();
  r.n_parsed = j.at("n_parsed").get<std::size_t>();
  r.model_calls = j.value("model_calls", std::uint64_t{0});
  for (const auto& row : j.at("reliability")) {
    r.reliability.push_back({row.at("bin").get<std::size_t>(), row.at("label").get<std::string>(),
                             row.at("count").get<std::size_t>(), row.at("accuracy").get<double>(),
                             row.at("suppressed").get<bool>()});
  }
  return r;
}

json prediction_to_json(const ParsedPrediction& p) {
  return {{"item_id", p.item_id},
          {"answer_key", p.answer_key ? json(*p.answer_key) : json(nullptr)},
          {"bin", p.bin ? json(*p.bin) : json(nullptr)},
          {"correct", p.correct},
          {"score", p.score ? json(*p.score) : json(nullptr)},
          {"raw_text", p.raw_text}};
}

std::string reliability_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "bin,label,count,accuracy,suppressed\n";
  for (const auto& row : report.reliability) {
    std::string label = row.label;
    if (label.find_first_of(",\"") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : label) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      label = quoted + "\"";
    }
    char acc[32];
    std::snprintf(acc, sizeof(acc), "%.6f", row.accuracy);
    out << row.bin << ',' << label << ',' << row.count << ',' << acc << ','
        << (row.suppressed ? "true" : "false") << '\n';
  }
  return out.str();
}

void write_report(const EvalReport& report, const std::filesystem::path& json_path,
                  const std::filesystem::path& csv_path) {
  {
    std::ofstream out(json_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + json_path.string());
    out << report_to_json(report).dump(2) << '\n';
  }
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + csv_path.string());
  out << reliability_csv(report);
}

std::string format_summary(const EvalReport& r) {
  auto fmt_opt = [](const std::optional<double>& v, int prec) {
    if (!v) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, *v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "method        " << r.method << '\n'
      << "predictions   " << r.n_predictions << '\n'
      << "auroc         " << fmt_opt(r.auroc, 3) << '\n'
      << "accuracy      " << fmt_opt(r.accuracy, 3) << '\n'
      << "high_accuracy " << fmt_opt(r.high_accuracy, 3) << '\n'
      << "high_pct      " << fmt_opt(r.high_pct, 1) << '\n'
      << "unparsed_rate " << fmt_opt(r.unparsed_rate, 3) << '\n'
      << "model_calls   " << r.model_calls << '\n';
  return out.str();
}

RangeBinner::RangeBinner(double min, double max, std::size_t n_bins)
    : min_(min), max_(max), n_bins_(n_bins) {
  if (!(min < max)) throw ValidationError("range binner needs min < max");
  if (n_bins < 1) throw ValidationError("range binner needs >= 1 bin");
}

std::vector<double> RangeBinner::edges() const {
  std::vector<double> e(n_bins_ + 1);
  for (std::size_t i = 0; i <= n_bins_; ++i) {
    e[i] = min_ + (max_ - min_) * static_cast<double>(i) / static_cast<double>(n_bins_);
  }
  e.back() = max_;
  return e;
}

std::size_t RangeBinner::bin_of(double score) const {
  if (score <= min_) return 1;
  if (score >= max_) return n_bins_;
  const auto e = edges();
  const auto it = std::upper_bound(e.begin(), e.end(), score);
  return std::clamp<std::size_t>(static_cast<std::size_t>(it - e.begin()), 1, n_bins_);
}

RangeBinner fit_range_binner(std::span<const double> validation_scores, std::size_t n_bins) {
  if (validation_scores.size() < 2) throw ValidationError("range binner needs >= 2 scores");
  const auto [lo, hi] = std::minmax_element(validation_scores.begin(), validation_scores.end());
  if (*lo == *hi) throw ValidationError("range binner: validation scores are constant");
  return RangeBinner(*lo, *hi, n_bins);
}

double semantic_entropy(std::span<const std::size_t> counts) {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  if (total <= 0) throw ValidationError("semantic_entropy of empty counts");
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h;
}

double mean_token_probability(std::span<const TokenLogprob> tokens, LexicalMean mean) {
  if (tokens.empty()) throw ValidationError("mean_token_probability: no tokens");
  double acc = 0.0;
  for (const auto& t : tokens) acc += mean == LexicalMean::arithmetic ? std::exp(t.logprob) : t.logprob;
  acc /= static_cast<double>(tokens.size());
  return mean == LexicalMean::arithmetic ? acc : std::exp(acc);
}

std::vector<TokenLogprob> answer_span_tokens(const Generation& generation) {
  if (!generation.token_logprobs) throw UnsupportedBackend("generation carries no token logprobs");
  const auto& toks = *generation.token_logprobs;
  const std::string& text = generation.text;

  const auto close = text.rfind("</answer>");
  const auto open = close == std::string::npos ? std::string::npos : text.rfind("<answer>", close);
  std::string joined;
  for (const auto& t : toks) joined += t.token;
  if (open == std::string::npos || joined != text) return toks;

  std::size_t begin = open + std::string_view("<answer>").size();
  std::size_t end = close;
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  if (begin == end) return toks;

  std::vector<TokenLogprob> out;
  std::size_t pos = 0;
  for (const auto& t : toks) {
    const std::size_t t_begin = pos, t_end = pos + t.token.size();
    pos = t_end;
    if (t_end > begin && t_begin < end) out.push_back(t);
  }
  return out.empty() ? toks : out;
}

double lexical_score(const Generation& generation, LexicalMean mean) {
  return mean_token_probability(answer_span_tokens(generation), mean);
}

AnswerCheck check_answer(const QaItem& item, std::string_view text, EquivalenceJudge& judge) {
  AnswerCheck out;
  const auto span = extract_tag(text, "answer");
  if (!span || span->empty()) return out;
  if (item.is_mcq()) {
    out.key = normalize_mcq(*span, item.choices);
    out.correct = out.key && *out.key == item.gold;
  } else {
    out.key = *span;
    out.correct = judge.matches_gold(item.question, *span, item.gold);
  }
  return out;
}

namespace {

std::vector<GenRequest> single_requests(const Dataset& items, auto&& prompt_for) {
  std::vector<GenRequest> reqs;
  reqs.reserve(items.size());
  for (const auto& item : items) reqs.push_back({prompt_for(item), item.id, 0});
  return reqs;
}

EvalReport single_shot_eval(const Dataset& test, EvalContext& ctx, std::string method,
                            std::string (*prompt_for)(const QaItem&)) {
  if (test.empty()) throw ValidationError(method + ": empty test set");
  const auto calls_before = ctx.client.calls();
  const auto reqs = single_requests(test, prompt_for);
  GenParams params = ctx.params;
  params.want_logprobs = false;
  const auto results = generate_batch(ctx.client, reqs, params, ctx.parallelism);

  std::vector<ParsedPrediction> preds;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (!results[i].ok()) {
      ++failures;
      continue;
    }
    const auto& text = results[i].generation->text;
    const auto check = check_answer(test[i], text, ctx.judge);
    preds.push_back({test[i].id, check.key, parse_confidence(text, ctx.scheme), check.correct ? 1 : 0,
                     text, std::nullopt});
  }
  if (failures) spdlog::warn("{}: {} of {} items failed and were skipped", method, failures, test.size());
  auto report = aggregate(std::move(preds), ctx.scheme, std::move(method));
  report.model_calls = ctx.client.calls() - calls_before;
  return report;
}

std::string augmented_prompt(const QaItem& item) {
  return prompts::augment_instruction(prompts::sampling_prompt(item));
}

std::string base_confidence_prompt(const QaItem& item) { return prompts::confidence_prompt(item); }

}  // namespace

EvalReport verbalized_eval(const Dataset& test, EvalContext& ctx) {
  return single_shot_eval(test, ctx, "ud", &augmented_prompt);
}

EvalReport prompting_baseline(const Dataset& test, EvalContext& ctx) {
  return single_shot_eval(test, ctx, "prompting", &base_confidence_prompt);
}

EvalReport lexical_baseline(const Dataset& calibration, const Dataset& test, EvalContext& ctx,
                            LexicalMean mean) {
  if (!ctx.client.supports_logprobs()) {
    throw UnsupportedBackend("lexical baseline needs token logprobs; backend '" +
                             ctx.client.fingerprint() + "' does not provide them");
  }
  if (test.empty()) throw ValidationError("lexical: empty test set");
  const auto calls_before = ctx.client.calls();
  GenParams params = ctx.params;
  params.temperature = 0.0;
  params.want_logprobs = true;

  auto run = [&](const Dataset& items) {
    const auto reqs =
        single_requests(items, [](const QaItem& item) { return prompts::sampling_prompt(item); });
    return generate_batch(ctx.client, reqs, params, ctx.parallelism);
  };

  std::vector<CalibrationPair> pairs;
  const auto cal_results = run(calibration);
  for (std::size_t i = 0; i < calibration.size(); ++i) {
    if (!cal_results[i].ok()) continue;
    const auto& g = *cal_results[i].generation;
    pairs.push_back({lexical_score(g, mean), check_answer(calibration[i], g.text, ctx.judge).correct ? 1 : 0});
  }
  const CalibrationMap map = fit_isotonic(pairs);

  const auto test_results = run(test);
  std::vector<ParsedPrediction> preds;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (!test_results[i].ok()) continue;
    const auto& g = *test_results[i].generation;
    const double raw = lexical_score(g, mean);
    const auto check = check_answer(test[i], g.text, ctx.judge);
    preds.push_back({test[i].id, check.key, ctx.scheme.bin_of(map.apply(raw)), check.correct ? 1 : 0,
                     g.text, raw});
  }
  auto report = aggregate(std::move(preds), ctx.scheme, "lexical");
  report.model_calls = ctx.client.calls() - calls_before;
  return report;
}

EvalReport semantic_entropy_baseline(const Dataset& validation, const Dataset& test,
                                     EvalContext& ctx, std::size_t m,
                                     const ClusterOptions& cluster_options) {
  if (m < 2) throw ValidationError("semantic entropy needs m >= 2");
  if (test.empty()) throw ValidationError("semantic_entropy: empty test set");
  const auto calls_before = ctx.client.calls();
  GenParams params = ctx.params;
  params.want_logprobs = false;
  if (!params.seed) params.seed = ctx.seed;

  struct Scored {
    ParsedPrediction pred;
    double score;
  };
  auto score_items = [&](const Dataset& items) {
    std::vector<Scored> out;
    for (const auto& item : items) {
      SampleOptions opts;
      opts.parallelism = ctx.parallelism;
      opts.prompt_template = std::string(item.is_mcq() ? prompts::kMcqSampling : prompts::kOpenSampling);
      const auto samples = sample_n(ctx.client, item, prompts::sampling_prompt(item), m, params, opts);
      if (samples.n_effective() == 0) {
        spdlog::warn("semantic_entropy: all {} samples failed for item '{}'; skipped", m, item.id);
        continue;
      }
      ClusterOptions copts = cluster_options;
      copts.seed = ctx.seed;
      const auto clusters = cluster_samples(samples, item, ctx.judge, copts);
      if (clusters.empty()) {
        spdlog::warn("semantic_entropy: no clusters for item '{}'; skipped", item.id);
        continue;
      }
      std::vector<std::size_t> counts;
      std::size_t modal = 0;
      for (std::size_t c = 0; c < clusters.size(); ++c) {
        counts.push_back(clusters[c].count);
        if (clusters[c].count > clusters[modal].count) modal = c;
      }
      const double se = semantic_entropy(counts);
      const auto& mc = clusters[modal];
      ParsedPrediction p;
      p.item_id = item.id;
      if (mc.has_answer) p.answer_key = mc.canonical_key;
      p.correct = mc.matches_gold ? 1 : 0;
      p.raw_text = mc.representative;
      p.score = -se;
      out.push_back({std::move(p), -se});
    }
    return out;
  };

  const auto val = score_items(validation);
  std::vector<double> val_scores;
  for (const auto& s : val) val_scores.push_back(s.score);
  const RangeBinner binner = fit_range_binner(val_scores, ctx.scheme.n_bins());

  auto scored_test = score_items(test);
  std::vector<ParsedPrediction> preds;
  for (auto& s : scored_test) {
    s.pred.bin = binner.bin_of(s.score);
    preds.push_back(std::move(s.pred));
  }
  if (preds.empty()) throw ValidationError("semantic_entropy: every test item failed");
  auto report = aggregate(std::move(preds), ctx.scheme, "semantic_entropy");
  report.model_calls = ctx.client.calls() - calls_before;
  return report;
}

}  // namespace udistill
