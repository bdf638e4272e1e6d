#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "udistill/errors.hpp"
#include "udistill/evaluator.hpp"
#include "udistill/hashing.hpp"
#include "udistill/mock_model.hpp"

using namespace udistill;
namespace ut = udistill::testing;

namespace {

ParsedPrediction pred(std::size_t bin, int correct) {
  ParsedPrediction p;
  p.item_id = "q";
  p.bin = bin;
  p.correct = correct;
  return p;
}

Dataset mcq_items(std::size_t n, const std::string& prefix = "t") {
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    d.push_back({prefix + std::to_string(i), "Q" + std::to_string(i), {{"A", "a"}, {"B", "b"}, {"C", "c"}}, i % 3 == 0 ? "A" : "B", {}});
  }
  return d;
}

}  // namespace

TEST(ParseConfidence, Labels) {
  const BinningScheme s;
  EXPECT_EQ(parse_confidence("<confidence> very high </confidence>", s), 5u);
  EXPECT_EQ(parse_confidence("<confidence>MEDIUM.</confidence>", s), 3u);
  EXPECT_FALSE(parse_confidence("I think the answer is B.", s));
  EXPECT_FALSE(parse_confidence("<confidence> sure </confidence>", s));
  EXPECT_EQ(parse_confidence("<answer> B </answer> <confidence> high </confidence>", s), 4u);
}

TEST(Auroc, Examples) {
  const std::vector<double> sep = {0.1, 0.2, 0.8, 0.9};
  const std::vector<int> lab = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auroc(sep, lab), 1.0);
  const std::vector<double> flat = {3, 3, 3, 3};
  EXPECT_DOUBLE_EQ(auroc(flat, lab), 0.5);
  const std::vector<double> s = {5, 4, 2, 2};
  const std::vector<int> y = {1, 0, 1, 0};
  EXPECT_EQ(auroc(s, y), 0.625);
  const std::vector<int> one_class = {1, 1, 1, 1};
  EXPECT_THROW(auroc(s, one_class), ValidationError);
}

TEST(Auroc, MatchesPairEnumeration) {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = 2 + rng.below(80);
    std::vector<double> s;
    std::vector<int> y;
    for (std::uint64_t i = 0; i < n; ++i) {
      s.push_back(static_cast<double>(rng.below(7)));
      y.push_back(i == 0 ? 0 : i == 1 ? 1 : static_cast<int>(rng.below(2)));
    }
    EXPECT_NEAR(auroc(s, y), ut::pair_auroc(s, y), 1e-12);
  }
}

TEST(Aggregate, SingleClassAllHigh) {
  std::vector<ParsedPrediction> preds(20, pred(5, 1));
  const auto r = aggregate(preds, BinningScheme{});
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.high_pct, 100.0);
  EXPECT_DOUBLE_EQ(*r.high_accuracy, 1.0);
  EXPECT_FALSE(r.auroc);
}

TEST(Aggregate, ReliabilityMatchesConstruction) {
  // Bin k holds 20 predictions, (k - 0.5) / 5 of them correct... times 20.
  std::vector<ParsedPrediction> preds;
  std::vector<double> s;
  std::vector<int> y;
  for (std::size_t k = 1; k <= 5; ++k) {
    const auto n_correct = static_cast<std::size_t>(std::lround((static_cast<double>(k) - 0.5) / 5.0 * 20));
    for (std::size_t i = 0; i < 20; ++i) {
      const int c = i < n_correct ? 1 : 0;
      preds.push_back(pred(k, c));
      s.push_back(static_cast<double>(k));
      y.push_back(c);
    }
  }
  const auto r = aggregate(preds, BinningScheme{});
  for (std::size_t k = 1; k <= 5; ++k) {
    EXPECT_EQ(r.reliability[k - 1].count, 20u);
    EXPECT_NEAR(r.reliability[k - 1].accuracy, (static_cast<double>(k) - 0.5) / 5.0, 1e-12);
    EXPECT_FALSE(r.reliability[k - 1].suppressed);
  }
  ASSERT_TRUE(r.auroc);
  EXPECT_NEAR(*r.auroc, ut::pair_auroc(s, y), 1e-12);
  EXPECT_DOUBLE_EQ(r.high_pct, 40.0);
  EXPECT_NEAR(*r.high_accuracy, (14.0 + 18.0) / 40.0, 1e-12);
}

TEST(Aggregate, UnparsedAndSuppressed) {
  std::vector<ParsedPrediction> preds = {pred(1, 0), pred(5, 1)};
  ParsedPrediction unparsed;
  unparsed.item_id = "u";
  preds.push_back(unparsed);
  const auto r = aggregate(preds, BinningScheme{});
  EXPECT_NEAR(r.unparsed_rate, 1.0 / 3.0, 1e-12);
  EXPECT_EQ(r.n_parsed, 2u);
  EXPECT_TRUE(r.reliability[0].suppressed);
}

TEST(Report, JsonAndCsv) {
  ut::TempDir dir;
  std::vector<ParsedPrediction> preds = {pred(1, 0), pred(5, 1), pred(4, 1)};
  const auto r = aggregate(preds, BinningScheme{}, "ud");
  write_report(r, dir / "r.json", dir / "r.csv");
  std::ifstream in(dir / "r.json");
  const auto back = report_from_json(nlohmann::json::parse(in));
  EXPECT_EQ(back.method, "ud");
  EXPECT_EQ(back.auroc, r.auroc);
  EXPECT_EQ(back.reliability.size(), 5u);
  EXPECT_EQ(ut::count_lines(dir / "r.csv"), 6u);
  std::ifstream csv(dir / "r.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "bin,label,count,accuracy,suppressed");
}

TEST(RangeBinner, EdgesAndClamp) {
  const std::vector<double> val = {-2.0, -1.3, 0.0, -0.4};
  const auto b = fit_range_binner(val, 5);
  const auto e = b.edges();
  const std::vector<double> expected = {-2.0, -1.6, -1.2, -0.8, -0.4, 0.0};
  for (std::size_t i = 0; i < e.size(); ++i) EXPECT_NEAR(e[i], expected[i], 1e-12);
  EXPECT_EQ(b.bin_of(-3.0), 1u);
  EXPECT_EQ(b.bin_of(1.0), 5u);
  EXPECT_EQ(b.bin_of(-1.0), 3u);
  const std::vector<double> flat = {1.0, 1.0};
  EXPECT_THROW(fit_range_binner(flat, 5), ValidationError);
}

TEST(RangeBinner, UniformOccupancy) {
  SplitMix64 rng(8);
  std::vector<double> v;
  for (int i = 0; i < 10000; ++i) v.push_back(rng.uniform());
  const auto b = fit_range_binner(v, 5);
  std::vector<double> occ(6, 0);
  for (double x : v) occ[b.bin_of(x)] += 1;
  for (std::size_t k = 1; k <= 5; ++k) EXPECT_LE(std::abs(occ[k] - 2000.0), 4.0 * std::sqrt(10000.0));
}

TEST(SemanticEntropy, Analytic) {
  const std::vector<std::size_t> one = {20};
  EXPECT_DOUBLE_EQ(semantic_entropy(one), 0.0);
  const std::vector<std::size_t> four = {5, 5, 5, 5};
  EXPECT_NEAR(semantic_entropy(four), std::log(4.0), 1e-12);
  const std::vector<std::size_t> mixed = {12, 5, 3};
  EXPECT_NEAR(semantic_entropy(mixed), ut::entropy_nats({0.6, 0.25, 0.15}), 1e-12);
  EXPECT_NEAR(semantic_entropy(mixed), 0.9376, 5e-4);
}

TEST(Lexical, MeanTokenProbability) {
  const std::vector<TokenLogprob> ones = {{"a", 0.0}, {"b", 0.0}};
  EXPECT_DOUBLE_EQ(mean_token_probability(ones, LexicalMean::arithmetic), 1.0);
  const std::vector<TokenLogprob> half = {{"a", std::log(0.5)}, {"b", 0.0}};
  EXPECT_NEAR(mean_token_probability(half, LexicalMean::arithmetic), 0.75, 1e-12);
  EXPECT_NEAR(mean_token_probability(half, LexicalMean::geometric), std::sqrt(0.5), 1e-12);
}

TEST(Lexical, AnswerSpanSelection) {
  Generation g{"<reasoning> r </reasoning> <answer> B </answer>",
               std::vector<TokenLogprob>{{"<reasoning> r </reasoning> ", -3.0}, {"<answer> ", -0.1}, {"B", std::log(0.5)},
                                         {" </answer>", -0.2}},
               FinishReason::stop};
  const auto span = answer_span_tokens(g);
  ASSERT_EQ(span.size(), 1u);
  EXPECT_EQ(span[0].token, "B");
  EXPECT_NEAR(lexical_score(g, LexicalMean::arithmetic), 0.5, 1e-12);
  g.token_logprobs = std::nullopt;
  EXPECT_THROW(answer_span_tokens(g), UnsupportedBackend);
}

TEST(Verbalized, OneCallPerItemAndEchoParsed) {
  MockModelSpec spec;
  const auto test = mcq_items(50);
  for (const auto& item : test) spec.echo_table[item.id] = "<answer> B </answer> <confidence> high </confidence>";
  MockModel m(spec);
  ExactJudge judge;
  EvalContext ctx{m, judge, BinningScheme{}, GenParams{}, 4, 0};
  const auto r = verbalized_eval(test, ctx);
  EXPECT_EQ(m.calls(), 50u);
  EXPECT_EQ(r.model_calls, 50u);
  EXPECT_EQ(r.reliability[3].count, 50u);
  for (const auto& p : r.predictions) EXPECT_EQ(p.bin, 4u);
}

TEST(Verbalized, UnparsedRate) {
  MockModelSpec spec;
  const auto test = mcq_items(100);
  for (std::size_t i = 0; i < test.size(); ++i) {
    spec.echo_table[test[i].id] =
        i % 10 == 0 ? "<answer> B </answer>" : "<answer> B </answer> <confidence> low </confidence>";
  }
  MockModel m(spec);
  ExactJudge judge;
  EvalContext ctx{m, judge, BinningScheme{}, GenParams{}, 2, 0};
  EXPECT_NEAR(prompting_baseline(test, ctx).unparsed_rate, 0.10, 1e-12);
}

TEST(LexicalBaseline, UnsupportedBackendBeforeAnyCall) {
  MockModelSpec spec;
  spec.supports_logprobs = false;
  const auto test = mcq_items(5);
  for (const auto& item : test) spec.items[item.id].answers = {{"<answer> A </answer>", 1.0, std::nullopt}};
  MockModel m(spec);
  ExactJudge judge;
  EvalContext ctx{m, judge, BinningScheme{}, GenParams{}, 1, 0};
  EXPECT_THROW(lexical_baseline(test, test, ctx), UnsupportedBackend);
  EXPECT_EQ(m.calls(), 0u);
}

TEST(LexicalBaseline, ScriptedLogprobsMatchPairOracle) {
  MockModelSpec spec;
  SplitMix64 rng(21);
  const auto cal = mcq_items(60, "c");
  const auto test = mcq_items(50, "t");
  for (const auto* part : {&cal, &test}) {
    for (const auto& item : *part) {
      const double p = 0.05 + 0.9 * rng.uniform();
      const std::string letter = rng.uniform() < p ? item.gold : (item.gold == "A" ? "C" : "A");
      spec.items[item.id].answers = {{"<answer> " + letter + " </answer>", 1.0,
                                      std::vector<TokenLogprob>{{"<answer> ", 0.0}, {letter, std::log(p)}, {" </answer>", 0.0}}}};
    }
  }
  MockModel m(spec);
  ExactJudge judge;
  EvalContext ctx{m, judge, BinningScheme{}, GenParams{}, 4, 0};
  const auto r = lexical_baseline(cal, test, ctx);
  EXPECT_EQ(r.model_calls, 110u);
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& p : r.predictions) {
    s.push_back(static_cast<double>(*p.bin));
    y.push_back(p.correct);
  }
  ASSERT_TRUE(r.auroc);
  EXPECT_NEAR(*r.auroc, ut::pair_auroc(s, y), 1e-9);
}

TEST(SemanticEntropyBaseline, CallsScaleWithM) {
  MockModelSpec spec;
  const auto val = mcq_items(10, "v");
  const auto test = mcq_items(20, "t");
  for (const auto* part : {&val, &test}) {
    for (std::size_t i = 0; i < part->size(); ++i) {
      const double p = 0.3 + 0.05 * static_cast<double>(i % 10);
      spec.items[(*part)[i].id].answers = {{"<answer> A </answer>", p, std::nullopt},
                                           {"<answer> B </answer>", 1 - p, std::nullopt}};
    }
  }
  MockModel m(spec);
  ExactJudge judge;
  GenParams params;
  params.seed = 1;
  EvalContext ctx{m, judge, BinningScheme{}, params, 4, 0};
  const auto r8 = semantic_entropy_baseline(val, test, ctx, 8);
  const auto r32 = semantic_entropy_baseline(val, test, ctx, 32);
  EXPECT_EQ(r8.model_calls, 8u * 30u);
  EXPECT_EQ(r32.model_calls, 32u * 30u);
  EXPECT_DOUBLE_EQ(static_cast<double>(r32.model_calls) / static_cast<double>(r8.model_calls), 4.0);
}
