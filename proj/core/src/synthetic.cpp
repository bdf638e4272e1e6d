#include "udistill/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "udistill/errors.hpp"

namespace udistill {

namespace {

std::string letter_at(std::size_t i) { return std::string(1, static_cast<char>('A' + i)); }

}  // namespace

SyntheticBenchmark make_synthetic_mcq(const SyntheticOptions& o) {
  if (o.n_choices < 2 || o.n_choices > 10) throw ValidationError("synthetic: n_choices must be in [2,10]");
  if (o.min_answers < 1 || o.min_answers > o.max_answers) {
    throw ValidationError("synthetic: need 1 <= min_answers <= max_answers");
  }
  if (o.gold == GoldAssignment::per_cluster ? o.max_answers >= o.n_choices : o.max_answers > o.n_choices) {
    throw ValidationError("synthetic: too many answers for the number of choices");
  }

  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::gamma_distribution<double> gamma(o.concentration, 1.0);

  SyntheticBenchmark bench;
  bench.spec.name = "synthetic-" + o.id_prefix;
  bench.spec.distortion = o.distortion;
  bench.spec.reasoning_templates = o.reasoning_templates;
  bench.spec.supports_logprobs = o.with_logprobs;

  const int width = static_cast<int>(std::to_string(o.n_items).size());
  for (std::size_t i = 0; i < o.n_items; ++i) {
    char idbuf[64];
    std::snprintf(idbuf, sizeof(idbuf), "%s%0*zu", o.id_prefix.c_str(), width, i);
    QaItem item;
    item.id = idbuf;
    item.question = "Synthetic question " + std::to_string(i) + ": which option applies?";
    for (std::size_t c = 0; c < o.n_choices; ++c) {
      item.choices.push_back({letter_at(c), "option " + std::to_string(i) + "." + std::to_string(c)});
    }

    const std::size_t k =
        o.min_answers + static_cast<std::size_t>(rng() % (o.max_answers - o.min_answers + 1));
    std::vector<std::size_t> perm(o.n_choices);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);

    SyntheticTruth truth;
    double total = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
      truth.letters.push_back(letter_at(perm[a]));
      truth.probabilities.push_back(std::max(gamma(rng), 1e-12));
      total += truth.probabilities.back();
    }
    for (auto& p : truth.probabilities) p /= total;
    truth.modal = static_cast<std::size_t>(
        std::max_element(truth.probabilities.begin(), truth.probabilities.end()) - truth.probabilities.begin());

    truth.gold_weights.assign(k, 0.0);
    if (o.gold == GoldAssignment::per_cluster) {
      double mass = 0.0;
      for (std::size_t a = 0; a < k; ++a) mass += o.distortion(truth.probabilities[a]);
      const double scale = std::max(1.0, mass);
      for (std::size_t a = 0; a < k; ++a) truth.gold_weights[a] = o.distortion(truth.probabilities[a]) / scale;
    } else {
      truth.gold_weights[truth.modal] = o.distortion(truth.probabilities[truth.modal]);
    }

    const double u = unit(rng);
    double acc = 0.0;
    for (std::size_t a = 0; a < k && truth.gold.empty(); ++a) {
      acc += truth.gold_weights[a];
      if (u < acc) truth.gold = truth.letters[a];
    }
    if (truth.gold.empty()) {
      std::vector<std::string> others;
      for (std::size_t c = 0; c < o.n_choices; ++c) {
        const auto l = letter_at(c);
        const bool produced = std::find(truth.letters.begin(), truth.letters.end(), l) != truth.letters.end();
        const bool excluded = o.gold == GoldAssignment::per_cluster ? produced : l == truth.letters[truth.modal];
        if (!excluded) others.push_back(l);
      }
      truth.gold = others[rng() % others.size()];
    }
    item.gold = truth.gold;

    MockItem mi;
    for (std::size_t a = 0; a < k; ++a) {
      const auto& letter = truth.letters[a];
      const double p = truth.probabilities[a];
      const std::size_t choice_idx = static_cast<std::size_t>(letter[0] - 'A');
      std::vector<std::string> forms = {letter};
      if (o.surface_variants) {
        forms.push_back(letter + ") " + item.choices[choice_idx].text);
        forms.push_back(std::string(1, static_cast<char>(std::tolower(letter[0]))) + ".");
      }
      std::vector<double> shares(forms.size());
      double share_total = 0.0;
      for (auto& s : shares) share_total += (s = 0.2 + unit(rng));
      for (std::size_t f = 0; f < forms.size(); ++f) {
        MockAnswer ans;
        ans.text = "<answer> " + forms[f] + " </answer>";
        ans.probability = p * shares[f] / share_total;
        if (o.with_logprobs) {
          ans.logprobs = std::vector<TokenLogprob>{
              {"<answer> ", 0.0}, {forms[f], std::log(p)}, {" </answer>", 0.0}};
        }
        mi.answers.push_back(std::move(ans));
      }
    }
    // Renormalize to absorb rounding so the spec validates at 1e-9.
    double sum = 0.0;
    for (const auto& a : mi.answers) sum += a.probability;
    for (auto& a : mi.answers) a.probability /= sum;

    bench.spec.items.emplace(item.id, std::move(mi));
    bench.truth.emplace(item.id, std::move(truth));
    bench.dataset.push_back(std::move(item));
  }
  return bench;
}

std::map<std::string, std::string> make_echo_table(
    const SyntheticBenchmark& bench, const Dataset& items,
    const std::function<std::string(double)>& label_for) {
  std::map<std::string, std::string> table;
  for (const auto& item : items) {
    const auto it = bench.truth.find(item.id);
    if (it == bench.truth.end()) throw ValidationError("echo: no synthetic truth for '" + item.id + "'");
    const auto& t = it->second;
    const double p = t.probabilities[t.modal];
    table[item.id] = "<reasoning> Recall the relevant fact. </reasoning> <answer> " + t.letters[t.modal] +
                     " </answer> <confidence> " + label_for(p) + " </confidence>";
  }
  return table;
}

}  // namespace udistill
