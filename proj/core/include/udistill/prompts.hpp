#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "udistill/qa_dataset.hpp"

namespace udistill::prompts {

// Instruction used when sampling multiple-choice answers (and for the
// lexical baseline).
extern const std::string_view kMcqSampling;
// Instruction asking for answer plus verbalized confidence.
extern const std::string_view kMcqConfidence;
extern const std::string_view kOpenSampling;
extern const std::string_view kOpenConfidence;
// Suffix appended to task instructions that have no dedicated template.
extern const std::string_view kConfidenceSuffix;

// "Q\nA) x\nB) y" block for an item.
std::string render_question(const QaItem& item);

std::string sampling_prompt(const QaItem& item);
std::string confidence_prompt(const QaItem& item);

// Turns a sampling prompt into one that also asks for a confidence.
// Known sampling templates are swapped for their confidence counterpart;
// anything else gets kConfidenceSuffix appended. Idempotent.
std::string augment_instruction(std::string_view prompt);

// Equivalence question sent to an LLM judge.
std::string judge_prompt(std::string_view question, std::string_view answer1,
                         std::string_view answer2);

// How the gold answer is phrased when compared against a sampled answer.
std::string render_gold(std::string_view gold);

}  // namespace udistill::prompts
