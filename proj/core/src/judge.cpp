#include "udistill/judge.hpp"

#include <cctype>
#include <fstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "udistill/errors.hpp"
#include "udistill/hashing.hpp"
#include "udistill/prompts.hpp"

namespace udistill {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

JudgeCache::Key JudgeCache::make_key_hashed(std::string qhash, std::string_view a,
                                            std::string_view b) {
  if (b < a) std::swap(a, b);
  return {std::move(qhash), std::string(a), std::string(b)};
}

JudgeCache::Key JudgeCache::make_key(std::string_view question, std::string_view a,
                                     std::string_view b) {
  return make_key_hashed(to_hex(fnv1a64(question)), a, b);
}

std::optional<bool> JudgeCache::get(std::string_view question, std::string_view a,
                                    std::string_view b) const {
  const auto key = make_key(question, a, b);
  std::lock_guard lock(mu_);
  auto it = verdicts_.find(key);
  if (it == verdicts_.end()) return std::nullopt;
  return it->second;
}

void JudgeCache::put(std::string_view question, std::string_view a, std::string_view b,
                     bool verdict) {
  auto key = make_key(question, a, b);
  std::lock_guard lock(mu_);
  verdicts_.insert_or_assign(std::move(key), verdict);
}

std::size_t JudgeCache::size() const {
  std::lock_guard lock(mu_);
  return verdicts_.size();
}

void JudgeCache::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write judge cache " + path.string());
  std::lock_guard lock(mu_);
  for (const auto& [key, verdict] : verdicts_) {
    const auto& [qhash, a, b] = key;
    out << json{{"question_hash", qhash}, {"a", a}, {"b", b}, {"verdict", verdict}}.dump() << '\n';
  }
}

void JudgeCache::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  std::lock_guard lock(mu_);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      verdicts_.insert_or_assign(
          make_key_hashed(j.at("question_hash").get<std::string>(), j.at("a").get<std::string>(),
                          j.at("b").get<std::string>()),
          j.at("verdict").get<bool>());
    } catch (const json::exception& e) {
      throw CacheCorruption("judge cache " + path.string() + ":" + std::to_string(line_no) + ": " +
                            e.what());
    }
  }
}

bool EquivalenceJudge::equivalent(std::string_view question, std::string_view a,
                                  std::string_view b) {
  if (a == b) return true;
  return decide(question, a, b);
}

bool EquivalenceJudge::matches_gold(std::string_view question, std::string_view answer,
                                    std::string_view gold) {
  return equivalent(question, answer, gold_text(gold));
}

bool ExactJudge::decide(std::string_view, std::string_view a, std::string_view b) {
  return trim(a) == trim(b);
}

std::optional<bool> parse_verdict(std::string_view reply) {
  std::string cleaned;
  for (char c : reply) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalpha(uc)) {
      cleaned += static_cast<char>(std::tolower(uc));
    } else if (std::isspace(uc)) {
      cleaned += ' ';
    } else if (c != '\'' && c != '"' && c != '.' && c != '!' && c != '*' && c != '`') {
      return std::nullopt;
    }
  }
  const std::string_view word = trim(cleaned);
  if (word == "equivalent") return true;
  if (word == "contradictory") return false;
  return std::nullopt;
}

LlmJudge::LlmJudge(std::shared_ptr<ModelClient> client, int max_attempts)
    : client_(std::move(client)), max_attempts_(max_attempts) {
  if (!client_) throw ConfigError("LLM judge needs a client");
  if (max_attempts_ < 1) throw ConfigError("judge max_attempts must be >= 1");
  params_.temperature = 0.0;
  params_.max_tokens = 8;
}

std::string LlmJudge::gold_text(std::string_view gold) const { return prompts::render_gold(gold); }

bool LlmJudge::decide(std::string_view question, std::string_view a, std::string_view b) {
  if (auto cached = cache_.get(question, a, b)) return *cached;
  const std::string prompt = prompts::judge_prompt(question, a, b);
  std::string last_reply;
  for (int attempt = 0; attempt < max_attempts_; ++attempt) {
    GenRequest req{prompt, {}, static_cast<std::uint64_t>(attempt)};
    last_reply = client_->generate(req, params_).text;
    if (auto verdict = parse_verdict(last_reply)) {
      cache_.put(question, a, b, *verdict);
      return *verdict;
    }
  }
  unparseable_.fetch_add(1);
  spdlog::warn("judge: unparseable verdict after {} attempts (last reply '{}'); treating as not equivalent",
               max_attempts_, last_reply);
  cache_.put(question, a, b, false);
  return false;
}

bool judge_equivalence(std::string_view question, std::string_view a, std::string_view b,
                       EquivalenceJudge& judge) {
  return judge.equivalent(question, a, b);
}

}  // namespace udistill
