#include "udistill/prompts.hpp"

namespace udistill::prompts {

const std::string_view kMcqSampling =
    "Answer the following question. Enclose concise reasoning in <reasoning> </reasoning> tags "
    "and the letter of your FINAL answer in <answer> </answer> tags without any of your work, "
    "like this: \"If each of Lisa's 7 chickens lays 6 eggs, how many eggs does Lisa have?\n"
    "A) 24\nB) 35\nC) 42\nD) 50\n"
    "<reasoning> This can be solved with multiplication. The answer is 7*6, or 42.</reasoning> "
    "<answer> C) 42 </answer>.\" Your answer should not include words.";

const std::string_view kMcqConfidence =
    "Answer the following question and state confidence in the answer (very low, low, medium, "
    "high, very high). Enclose concise reasoning in <reasoning> </reasoning> tags, confidence in "
    "<confidence> </confidence> tags, and the letter of your FINAL answer in <answer> </answer> "
    "tags without any of your work, like this: \"If each of Lisa's 7 chickens lays 6 eggs, how "
    "many eggs does Lisa have?\nA) 24\nB) 35\nC) 42\nD) 50\n"
    "<reasoning> This can be solved with multiplication. The answer is 7*6, or 42.</reasoning> "
    "<answer> C) 42 </answer> <confidence>very high</confidence>.\" Your answer should not "
    "include words.";

// The open-answer templates add an <answer> tag request so that answer
// extraction works the same way for both item kinds.
const std::string_view kOpenSampling =
    "You are a helpful AI assistant. Answer the following math question as briefly as possible "
    "and accurately. Enclose the final answer in <answer> </answer> tags.";

const std::string_view kOpenConfidence =
    "You are a helpful AI assistant. Answer the following math question as briefly as possible "
    "and accurately. Enclose the final answer in <answer> </answer> tags. Enclose confidence in "
    "the answer (very low, low, medium, high, very high) after the answer in "
    "<confidence> </confidence> tags, like so: <confidence> very high </confidence>.";

const std::string_view kConfidenceSuffix = "Additionally state how confident you are in your answer";

std::string render_question(const QaItem& item) {
  std::string out = item.question;
  for (const auto& c : item.choices) {
    out += '\n';
    out += c.letter;
    out += ") ";
    out += c.text;
  }
  return out;
}

std::string sampling_prompt(const QaItem& item) {
  return std::string(item.is_mcq() ? kMcqSampling : kOpenSampling) + "\n\n" + render_question(item);
}

std::string confidence_prompt(const QaItem& item) {
  return std::string(item.is_mcq() ? kMcqConfidence : kOpenConfidence) + "\n\n" +
         render_question(item);
}

std::string augment_instruction(std::string_view prompt) {
  if (prompt.starts_with(kMcqConfidence) || prompt.starts_with(kOpenConfidence)) {
    return std::string(prompt);
  }
  if (prompt.starts_with(kMcqSampling)) {
    return std::string(kMcqConfidence) + std::string(prompt.substr(kMcqSampling.size()));
  }
  if (prompt.starts_with(kOpenSampling)) {
    return std::string(kOpenConfidence) + std::string(prompt.substr(kOpenSampling.size()));
  }
  if (prompt.find(kConfidenceSuffix) != std::string_view::npos) return std::string(prompt);
  if (prompt.empty()) return std::string(kConfidenceSuffix);
  return std::string(prompt) + " " + std::string(kConfidenceSuffix);
}

std::string judge_prompt(std::string_view question, std::string_view answer1,
                         std::string_view answer2) {
  std::string out = "We are evaluating answers to the question \"";
  out += question;
  out += "\"\nHere are two possible answers:\nPossible Answer 1: ";
  out += answer1;
  out += "\nPossible Answer 2: ";
  out += answer2;
  out +=
      "\nIs Possible Answer 1 equivalent to Possible Answer 2, or do the answers contradict? "
      "Respond only with 'equivalent' or 'contradictory'.";
  return out;
}

std::string render_gold(std::string_view gold) {
  return "The correct answer is " + std::string(gold);
}

}  // namespace udistill::prompts
