#include <fstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "udistill/annotator.hpp"
#include "udistill/calibrator.hpp"
#include "udistill/errors.hpp"
#include "udistill/evaluator.hpp"
#include "udistill/hashing.hpp"
#include "udistill/prompts.hpp"

using namespace udistill;
namespace ut = udistill::testing;
using nlohmann::json;

namespace {

std::string gen(const std::string& answer) {
  return "<reasoning> because </reasoning> <answer> " + answer + " </answer>";
}

ItemCandidates item_with(std::size_t n_wrong, const std::string& id = "q1") {
  ItemCandidates ic{id, std::string(prompts::kMcqSampling) + "\n\nQ?", {}};
  ic.clusters.push_back({"A", 0.5, true, gen("A")});
  for (std::size_t i = 0; i < n_wrong; ++i) {
    ic.clusters.push_back({std::string(1, static_cast<char>('B' + i)), 0.4 / static_cast<double>(i + 2), false,
                           gen(std::string(1, static_cast<char>('B' + i)))});
  }
  return ic;
}

}  // namespace

TEST(Binning, DefaultLabelsAndBoundaries) {
  BinningScheme s;
  EXPECT_EQ(s.n_bins(), 5u);
  EXPECT_EQ(s.bin_of(0.9), 5u);
  EXPECT_EQ(s.label(5), "very high");
  EXPECT_EQ(s.bin_of(0.0), 1u);
  EXPECT_EQ(s.label(1), "very low");
  EXPECT_EQ(s.bin_of(0.2), 2u);
  EXPECT_EQ(s.bin_of(0.19999), 1u);
  EXPECT_EQ(s.bin_of(1.0), 5u);
  EXPECT_EQ(bin_of(0.5, s), 3u);
}

TEST(Binning, PercentLabelsAndValidation) {
  const auto s = BinningScheme::percentages(10);
  EXPECT_EQ(s.n_bins(), 10u);
  EXPECT_EQ(s.label(1), "0-10%");
  EXPECT_EQ(s.bin_of(0.95), 10u);
  EXPECT_THROW(BinningScheme({"low", "Low"}), ValidationError);
  EXPECT_THROW(BinningScheme(std::vector<std::string>{}), ValidationError);
  EXPECT_EQ(BinningScheme::from_json(s.to_json()).labels(), s.labels());
}

TEST(AugmentInstruction, Rules) {
  const std::string sni = "Given a sentence, classify its sentiment.";
  EXPECT_EQ(augment_instruction(sni), sni + " Additionally state how confident you are in your answer");
  EXPECT_EQ(augment_instruction(augment_instruction(sni)), augment_instruction(sni));
  EXPECT_EQ(augment_instruction(""), "Additionally state how confident you are in your answer");
  const std::string mcq = std::string(prompts::kMcqSampling) + "\n\nQ?";
  EXPECT_EQ(augment_instruction(mcq), std::string(prompts::kMcqConfidence) + "\n\nQ?");
  EXPECT_EQ(augment_instruction(augment_instruction(mcq)), augment_instruction(mcq));
}

TEST(BuildSft, TwoClusterExample) {
  ItemCandidates ic{"q1", "prompt", {{"B", 0.9, true, gen("B")}, {"C", 0.1, false, gen("C")}}};
  AugmentPolicy policy;
  policy.style = ConfidenceStyle::prose;
  const auto out = build_sft_dataset({ic}, CalibrationMap::identity(), BinningScheme{}, policy, 0);
  ASSERT_EQ(out.size(), 2u);
  const auto& right = out[0].is_correct ? out[0] : out[1];
  const auto& wrong = out[0].is_correct ? out[1] : out[0];
  EXPECT_EQ(right.target, "<reasoning> because </reasoning> <answer> B </answer> (with very high confidence)");
  EXPECT_EQ(wrong.target, "<reasoning> because </reasoning> <answer> C </answer> (with very low confidence)");
  EXPECT_EQ(right.prompt, augment_instruction("prompt"));
}

TEST(BuildSft, KZeroKeepsOnlyCorrect) {
  AugmentPolicy policy;
  policy.max_incorrect_per_question = 0;
  const auto out = build_sft_dataset({item_with(3)}, CalibrationMap::identity(), BinningScheme{}, policy, 0);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_TRUE(out[0].is_correct);
  EXPECT_EQ(out[0].target, "<reasoning> because </reasoning> <answer> A </answer> <confidence> medium </confidence>");
}

TEST(BuildSft, KeepsMostFrequentIncorrect) {
  AugmentPolicy policy;
  policy.max_incorrect_per_question = 2;
  const auto out = build_sft_dataset({item_with(3)}, CalibrationMap::identity(), BinningScheme{}, policy, 0);
  std::set<std::string> keys;
  for (const auto& e : out) keys.insert(e.cluster_key);
  EXPECT_EQ(keys, (std::set<std::string>{"A", "B", "C"}));
}

TEST(BuildSft, SizeScalesWithK) {
  // Oracle: direct count of 1 + min(K, incorrect clusters) per item.
  std::vector<ItemCandidates> items;
  SplitMix64 rng(4);
  std::size_t wrong_total[4] = {0, 0, 0, 0};
  for (int i = 0; i < 100; ++i) {
    const auto wrong = rng.below(5);
    items.push_back(item_with(wrong, "q" + std::to_string(i)));
    for (std::size_t k = 0; k < 4; ++k) wrong_total[k] += std::min<std::size_t>(k, wrong);
  }
  for (std::size_t k = 0; k < 4; ++k) {
    AugmentPolicy policy;
    policy.max_incorrect_per_question = k;
    const auto out = build_sft_dataset(items, CalibrationMap::identity(), BinningScheme{}, policy, 1);
    EXPECT_EQ(out.size(), 100 + wrong_total[k]);
  }
}

TEST(BuildSft, SkipsClustersWithoutAnswerAndHonoursPolicy) {
  ItemCandidates ic{"q", "p", {{"<absent>", 0.6, false, "no tags"}, {"B", 0.4, false, gen("B")}}};
  SftBuildStats stats;
  AugmentPolicy policy;
  auto out = build_sft_dataset({ic}, CalibrationMap::identity(), BinningScheme{}, policy, 0, &stats);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].cluster_key, "B");
  EXPECT_EQ(stats.items_without_correct, 1u);
  EXPECT_EQ(stats.clusters_without_answer, 1u);
  policy.emit_without_correct = false;
  out = build_sft_dataset({ic}, CalibrationMap::identity(), BinningScheme{}, policy, 0, &stats);
  EXPECT_TRUE(out.empty());
  EXPECT_EQ(stats.items_contributing_nothing, 1u);
}

TEST(BuildSft, LabelsFollowCalibrationMap) {
  const auto map = CalibrationMap::isotonic({{0.0, 0.0}, {0.5, 0.1}, {1.0, 0.95}});
  ItemCandidates ic{"q", "p", {{"A", 0.5, true, gen("A")}}};
  const auto out = build_sft_dataset({ic}, map, BinningScheme{}, AugmentPolicy{}, 0);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].calibrated_p, 0.1);
  EXPECT_EQ(out[0].source_bin, 1u);
  EXPECT_EQ(parse_confidence(out[0].target, BinningScheme{}), 1u);
}

TEST(BuildSft, ShuffleIsSeeded) {
  std::vector<ItemCandidates> items;
  for (int i = 0; i < 30; ++i) items.push_back(item_with(2, "q" + std::to_string(i)));
  auto ids = [](const std::vector<AnnotatedExample>& v) {
    std::vector<std::string> out;
    for (const auto& e : v) out.push_back(e.item_id + e.cluster_key);
    return out;
  };
  const CalibrationMap id = CalibrationMap::identity();
  EXPECT_EQ(ids(build_sft_dataset(items, id, {}, {}, 3)), ids(build_sft_dataset(items, id, {}, {}, 3)));
  EXPECT_NE(ids(build_sft_dataset(items, id, {}, {}, 3)), ids(build_sft_dataset(items, id, {}, {}, 4)));
}

TEST(EmitSft, RoundTripsAndEscapes) {
  ut::TempDir dir;
  AnnotatedExample a{"q1", "line one\nline \"two\"", "<answer> \"B\" </answer>\n<confidence> high </confidence>",
                     true, 4, 0.7, "B"};
  AnnotatedExample b{"q2", "p", "t", false, 1, 0.1, "C"};
  emit_sft_jsonl({a, b}, dir / "sft.jsonl");
  EXPECT_EQ(ut::count_lines(dir / "sft.jsonl"), 2u);
  std::ifstream in(dir / "sft.jsonl");
  std::string line;
  std::getline(in, line);
  const auto j = json::parse(line);
  EXPECT_EQ(j.at("messages")[0].at("role"), "user");
  EXPECT_EQ(j.at("messages")[0].at("content"), a.prompt);
  EXPECT_EQ(j.at("messages")[1].at("role"), "model");
  EXPECT_EQ(j.at("messages")[1].at("content"), a.target);
  EXPECT_EQ(annotated_from_json(annotated_to_json(a)).target, a.target);
}

TEST(EmitSft, LargeAndEmpty) {
  ut::TempDir dir;
  std::vector<AnnotatedExample> many(10000, AnnotatedExample{"q", "p", "t", true, 5, 0.9, "A"});
  emit_sft_jsonl(many, dir / "big.jsonl");
  EXPECT_EQ(ut::count_lines(dir / "big.jsonl"), 10000u);
  EXPECT_THROW(emit_sft_jsonl({}, dir / "empty.jsonl"), ValidationError);
}
