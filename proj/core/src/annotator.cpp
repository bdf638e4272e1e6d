#include "udistill/annotator.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <spdlog/spdlog.h>

#include "udistill/errors.hpp"
#include "udistill/hashing.hpp"
#include "udistill/prompts.hpp"
#include "udistill/semantic_norm.hpp"

namespace udistill {

using nlohmann::json;

BinningScheme::BinningScheme()
    : BinningScheme({"very low", "low", "medium", "high", "very high"}) {}

BinningScheme::BinningScheme(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.size() < 2) throw ValidationError("binning scheme needs at least 2 bins");
  std::set<std::string> distinct;
  for (const auto& l : labels_) {
    if (normalize_text(l).empty()) throw ValidationError("binning labels must be nonempty");
    if (!distinct.insert(normalize_text(l)).second) {
      throw ValidationError("binning labels must be distinct: '" + l + "'");
    }
  }
  const auto b = labels_.size();
  edges_.resize(b + 1);
  for (std::size_t i = 0; i <= b; ++i) edges_[i] = static_cast<double>(i) / static_cast<double>(b);
}

BinningScheme BinningScheme::percentages(std::size_t n_bins) {
  if (n_bins < 2) throw ValidationError("binning scheme needs at least 2 bins");
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < n_bins; ++i) {
    const auto lo = static_cast<long>(std::lround(100.0 * static_cast<double>(i) / static_cast<double>(n_bins)));
    const auto hi = static_cast<long>(std::lround(100.0 * static_cast<double>(i + 1) / static_cast<double>(n_bins)));
    labels.push_back(std::to_string(lo) + "-" + std::to_string(hi) + "%");
  }
  return BinningScheme(std::move(labels));
}

std::size_t BinningScheme::bin_of(double p) const {
  p = std::clamp(p, 0.0, 1.0);
  const auto b = n_bins();
  // Compare against the stored edges so boundaries like 0.2 land in the
  // upper bin regardless of floating-point rounding in p * B.
  const auto it = std::upper_bound(edges_.begin(), edges_.end(), p);
  const auto idx = static_cast<std::size_t>(it - edges_.begin());
  return std::clamp<std::size_t>(idx, 1, b);
}

const std::string& BinningScheme::label(std::size_t bin) const {
  if (bin < 1 || bin > n_bins()) throw ValidationError("bin index out of range");
  return labels_[bin - 1];
}

json BinningScheme::to_json() const { return {{"n_bins", n_bins()}, {"labels", labels_}}; }

BinningScheme BinningScheme::from_json(const json& j) {
  if (j.contains("labels")) {
    const auto& labels = j.at("labels");
    if (labels.is_string()) {
      if (labels.get<std::string>() != "percent") throw ConfigError("labels must be a list or \"percent\"");
      return percentages(j.value("n_bins", std::size_t{5}));
    }
    auto list = labels.get<std::vector<std::string>>();
    if (j.contains("n_bins") && j["n_bins"].get<std::size_t>() != list.size()) {
      throw ConfigError("n_bins does not match the number of labels");
    }
    return BinningScheme(std::move(list));
  }
  const auto n = j.value("n_bins", std::size_t{5});
  if (n == 5) return BinningScheme();
  return percentages(n);
}

std::size_t bin_of(double p, const BinningScheme& scheme) { return scheme.bin_of(p); }

std::string augment_instruction(std::string_view prompt) { return prompts::augment_instruction(prompt); }

json annotated_to_json(const AnnotatedExample& e) {
  return {{"item_id", e.item_id},       {"prompt", e.prompt},
          {"target", e.target},         {"is_correct", e.is_correct},
          {"source_bin", e.source_bin}, {"calibrated_p", e.calibrated_p},
          {"cluster_key", e.cluster_key}};
}

AnnotatedExample annotated_from_json(const json& j) {
  AnnotatedExample e;
  e.item_id = j.at("item_id").get<std::string>();
  e.prompt = j.at("prompt").get<std::string>();
  e.target = j.at("target").get<std::string>();
  e.is_correct = j.at("is_correct").get<bool>();
  e.source_bin = j.at("source_bin").get<std::size_t>();
  e.calibrated_p = j.at("calibrated_p").get<double>();
  e.cluster_key = j.value("cluster_key", std::string());
  return e;
}

std::string render_target(std::string_view answer, std::string_view reasoning,
                          std::string_view label, ConfidenceStyle style) {
  std::string out;
  if (!reasoning.empty()) {
    out += "<reasoning> ";
    out += reasoning;
    out += " </reasoning> ";
  }
  out += "<answer> ";
  out += answer;
  out += " </answer> ";
  if (style == ConfidenceStyle::tags) {
    out += "<confidence> ";
    out += label;
    out += " </confidence>";
  } else {
    out += "(with ";
    out += label;
    out += " confidence)";
  }
  return out;
}

std::vector<AnnotatedExample> build_sft_dataset(const std::vector<ItemCandidates>& items,
                                                const CalibrationMap& map,
                                                const BinningScheme& scheme,
                                                const AugmentPolicy& policy, std::uint64_t seed,
                                                SftBuildStats* stats) {
  SftBuildStats local;
  std::vector<AnnotatedExample> out;

  auto annotate = [&](const ItemCandidates& item, const ClusterCandidate& c, const std::string& prompt,
                      const std::string& answer, const std::optional<std::string>& reasoning) {
    AnnotatedExample e;
    e.item_id = item.item_id;
    e.prompt = prompt;
    e.is_correct = c.correct;
    e.calibrated_p = map.apply(c.f);
    e.source_bin = scheme.bin_of(e.calibrated_p);
    e.cluster_key = c.cluster_key;
    e.target = render_target(answer, reasoning.value_or(""), scheme.label(e.source_bin), policy.style);
    out.push_back(std::move(e));
  };

  for (const auto& item : items) {
    ++local.items;
    const std::string prompt = prompts::augment_instruction(item.prompt);

    struct Kept {
      const ClusterCandidate* cluster;
      ExtractedAnswer parts;
    };
    std::optional<Kept> correct;
    std::vector<Kept> incorrect;
    for (const auto& c : item.clusters) {
      auto parts = extract_answer(c.representative);
      if (!parts.answer_span || parts.answer_span->empty()) {
        ++local.clusters_without_answer;
        continue;
      }
      if (c.correct) {
        correct = Kept{&c, std::move(parts)};
      } else {
        incorrect.push_back(Kept{&c, std::move(parts)});
      }
    }
    std::stable_sort(incorrect.begin(), incorrect.end(),
                     [](const Kept& a, const Kept& b) { return a.cluster->f > b.cluster->f; });

    const std::size_t before = out.size();
    if (correct && policy.include_correct) {
      annotate(item, *correct->cluster, prompt, *correct->parts.answer_span, correct->parts.reasoning_span);
    }
    if (!correct) ++local.items_without_correct;
    if (correct || policy.emit_without_correct) {
      const auto k = std::min(policy.max_incorrect_per_question, incorrect.size());
      for (std::size_t i = 0; i < k; ++i) {
        annotate(item, *incorrect[i].cluster, prompt, *incorrect[i].parts.answer_span,
                 incorrect[i].parts.reasoning_span);
      }
    }
    if (out.size() == before) {
      ++local.items_contributing_nothing;
      spdlog::debug("annotate: item '{}' contributes no examples", item.item_id);
    }
  }

  SplitMix64 rng(mix64(seed ^ 0xa5a5a5a5a5a5a5a5ULL));
  for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[rng.below(i)]);

  if (local.items_contributing_nothing > 0) {
    spdlog::info("annotate: {} of {} items contributed no examples", local.items_contributing_nothing,
                 local.items);
  }
  if (stats) *stats = local;
  return out;
}

json sft_record(const AnnotatedExample& example) {
  return {{"messages", json::array({{{"role", "user"}, {"content", example.prompt}},
                                    {{"role", "model"}, {"content", example.target}}})}};
}

void emit_sft_jsonl(const std::vector<AnnotatedExample>& examples, const std::filesystem::path& path) {
  if (examples.empty()) throw ValidationError("emit_sft_jsonl: no examples to emit");
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write SFT file " + path.string());
  for (const auto& e : examples) out << sft_record(e).dump() << '\n';
  out.flush();
  if (!out) throw IoError("write failed for SFT file " + path.string());
}

}  // namespace udistill
