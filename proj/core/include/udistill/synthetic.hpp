#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "udistill/mock_model.hpp"
#include "udistill/qa_dataset.hpp"

namespace udistill {

// How the gold letter relates to the mock's answer distribution.
enum class GoldAssignment {
  // Every sampled answer with probability p is gold with probability
  // pi(p) / max(1, sum_j pi(p_j)); otherwise gold is a letter the mock never
  // produces. With pi = identity or square this makes
  // P(correct | answer probability = p) = pi(p) for every answer.
  per_cluster,
  // Only the modal answer can be gold, with probability pi(p_modal);
  // otherwise gold is a uniformly chosen other letter.
  modal_only,
};

struct SyntheticOptions {
  std::size_t n_items = 100;
  std::size_t n_choices = 5;
  std::size_t min_answers = 2;  // distinct letters the mock can produce
  std::size_t max_answers = 3;
  double concentration = 1.0;  // Dirichlet alpha over the answer letters
  Distortion distortion = Distortion::identity();
  GoldAssignment gold = GoldAssignment::per_cluster;
  // Spread each letter's mass over surface forms ("C", "C) body", "c.").
  bool surface_variants = true;
  bool with_logprobs = true;
  std::vector<std::string> reasoning_templates = {"Recall the relevant fact.",
                                                  "Eliminate the implausible options.",
                                                  "Work through it step by step."};
  std::string id_prefix = "syn";
  std::uint64_t seed = 0;
};

// Ground truth for one synthetic item.
struct SyntheticTruth {
  std::vector<std::string> letters;  // letters the mock can produce
  std::vector<double> probabilities;  // per letter, summing to 1
  std::vector<double> gold_weights;   // P(letter is gold)
  std::size_t modal = 0;               // index of the most probable letter
  std::string gold;
};

struct SyntheticBenchmark {
  Dataset dataset;
  MockModelSpec spec;
  std::map<std::string, SyntheticTruth> truth;
};

SyntheticBenchmark make_synthetic_mcq(const SyntheticOptions& options);

// Responses of an idealized distilled model: the modal answer with the label
// `label_for(p_modal)`. Returned as an echo table keyed by item id.
std::map<std::string, std::string> make_echo_table(
    const SyntheticBenchmark& bench, const Dataset& items,
    const std::function<std::string(double p_modal)>& label_for);

}  // namespace udistill
