#include "udistill/semantic_norm.hpp"

#include <cctype>
#include <unordered_map>

#include "udistill/hashing.hpp"

namespace udistill {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

constexpr std::string_view kAbsentKey = "<absent>";

}  // namespace

std::optional<std::string> extract_tag(std::string_view text, std::string_view tag) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  const auto close_pos = text.rfind(close);
  if (close_pos == std::string_view::npos) return std::nullopt;
  const auto open_pos = text.rfind(open, close_pos);
  if (open_pos == std::string_view::npos) return std::nullopt;
  const auto body = text.substr(open_pos + open.size(), close_pos - open_pos - open.size());
  // A nested opening tag means the pair is not well formed.
  if (body.find(open) != std::string_view::npos) return std::nullopt;
  return std::string(trim(body));
}

ExtractedAnswer extract_answer(std::string_view text) {
  ExtractedAnswer out;
  out.raw_text = std::string(text);
  out.answer_span = extract_tag(text, "answer");
  out.reasoning_span = extract_tag(text, "reasoning");
  out.confidence_span = extract_tag(text, "confidence");
  return out;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isspace(uc) || (uc < 0x80 && std::ispunct(uc))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += static_cast<char>(std::tolower(uc));
  }
  return out;
}

std::optional<std::string> normalize_mcq(std::string_view answer_span,
                                         const std::vector<Choice>& choices) {
  const std::string norm = normalize_text(answer_span);
  if (norm.empty()) return std::nullopt;

  auto letter_for = [&](char lower) -> std::optional<std::string> {
    for (const auto& c : choices) {
      if (c.letter.size() == 1 && std::tolower(static_cast<unsigned char>(c.letter[0])) == lower) {
        return c.letter;
      }
    }
    return std::nullopt;
  };

  if (norm.size() == 1) return letter_for(norm[0]);
  for (const auto& c : choices) {
    if (!c.text.empty() && normalize_text(c.text) == norm) return c.letter;
  }
  if (norm.size() >= 2 && norm[1] == ' ') return letter_for(norm[0]);
  return std::nullopt;
}

std::vector<SemanticCluster> cluster_samples(const SampleSet& samples, const QaItem& item,
                                             EquivalenceJudge& judge,
                                             const ClusterOptions& options) {
  std::vector<SemanticCluster> clusters;
  std::unordered_map<std::string, std::size_t> by_key;
  std::vector<std::string> founders;  // answer span that opened each cluster
  std::optional<std::size_t> gold_cluster;

  auto open_cluster = [&](std::string key, std::string founder, bool gold, bool has_answer) {
    SemanticCluster c;
    c.cluster_id = clusters.size();
    c.canonical_key = std::move(key);
    c.matches_gold = gold;
    c.has_answer = has_answer;
    clusters.push_back(std::move(c));
    founders.push_back(std::move(founder));
    return clusters.size() - 1;
  };

  for (std::size_t i = 0; i < samples.generations.size(); ++i) {
    const auto answer = extract_tag(samples.generations[i].text, "answer");
    std::size_t target;
    if (!answer || answer->empty()) {
      if (!options.keep_absent) continue;
      target = open_cluster(std::string(kAbsentKey), {}, false, false);
    } else if (item.is_mcq()) {
      if (auto letter = normalize_mcq(*answer, item.choices)) {
        auto it = by_key.find(*letter);
        if (it == by_key.end()) {
          target = open_cluster(*letter, *answer, *letter == item.gold, true);
          by_key.emplace(*letter, target);
        } else {
          target = it->second;
        }
      } else {
        target = open_cluster(normalize_text(*answer), *answer, false, true);
      }
    } else if (auto it = by_key.find(*answer); it != by_key.end()) {
      // Same string as an earlier answer: the judge is reflexive and its
      // verdicts are deterministic, so the outcome is already known.
      target = it->second;
    } else {
      std::optional<std::size_t> match;
      if (judge.matches_gold(item.question, *answer, item.gold)) {
        match = gold_cluster ? *gold_cluster : open_cluster(item.gold, *answer, true, true);
        gold_cluster = match;
      } else {
        for (std::size_t c = 0; c < clusters.size(); ++c) {
          if (clusters[c].matches_gold || !clusters[c].has_answer) continue;
          if (judge.equivalent(item.question, *answer, founders[c])) {
            match = c;
            break;
          }
        }
      }
      target = match ? *match : open_cluster(std::string(trim(*answer)), *answer, false, true);
      by_key.emplace(*answer, target);
    }
    clusters[target].member_indices.push_back(i);
  }

  for (auto& c : clusters) {
    c.count = c.member_indices.size();
    SplitMix64 rng(mix64(hash_fields({samples.item_id, std::to_string(c.cluster_id)}) ^
                         mix64(options.seed)));
    c.representative_index = c.member_indices[rng.below(c.member_indices.size())];
    c.representative = samples.generations[c.representative_index].text;
  }
  return clusters;
}

}  // namespace udistill
