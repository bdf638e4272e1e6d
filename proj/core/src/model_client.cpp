#include "udistill/model_client.hpp"

#include <algorithm>
#include <map>
#include <thread>

#include "udistill/errors.hpp"

namespace udistill {

using nlohmann::json;

void GenParams::validate() const {
  if (!(temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
  if (max_tokens < 1) throw ValidationError("max_tokens must be >= 1");
}

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

FinishReason parse_finish_reason(std::string_view name) {
  if (name == "stop") return FinishReason::stop;
  if (name == "length") return FinishReason::length;
  return FinishReason::error;
}

json generation_to_json(const Generation& g) {
  json j = {{"text", g.text}, {"finish_reason", to_string(g.finish_reason)}};
  if (g.token_logprobs) {
    json lp = json::array();
    for (const auto& t : *g.token_logprobs) lp.push_back(json::array({t.token, t.logprob}));
    j["logprobs"] = std::move(lp);
  }
  return j;
}

Generation generation_from_json(const json& j) {
  Generation g;
  g.text = j.at("text").get<std::string>();
  if (auto it = j.find("finish_reason"); it != j.end()) {
    g.finish_reason = parse_finish_reason(it->get<std::string>());
  }
  if (auto it = j.find("logprobs"); it != j.end() && !it->is_null()) {
    std::vector<TokenLogprob> lp;
    for (const auto& t : *it) lp.push_back({t.at(0).get<std::string>(), t.at(1).get<double>()});
    g.token_logprobs = std::move(lp);
  }
  return g;
}

Generation ModelClient::generate(const GenRequest& request, const GenParams& params) {
  params.validate();
  calls_.fetch_add(1, std::memory_order_relaxed);
  return do_generate(request, params);
}

Generation ModelClient::generate(std::string_view prompt, const GenParams& params) {
  return generate(GenRequest{std::string(prompt), {}, 0}, params);
}

std::vector<BatchEntry> try_generate_batch(ModelClient& client,
                                           const std::vector<GenRequest>& requests,
                                           const GenParams& params, int parallelism) {
  if (parallelism < 1) throw ValidationError("parallelism must be >= 1");
  std::vector<BatchEntry> results(requests.size());
  if (requests.empty()) return results;

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < requests.size(); i = next.fetch_add(1)) {
      try {
        results[i].generation = client.generate(requests[i], params);
      } catch (const std::exception& e) {
        results[i].error = e.what();
      }
    }
  };

  const auto n_threads =
      static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(parallelism), requests.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  return results;
}

std::vector<BatchEntry> generate_batch(ModelClient& client, const std::vector<GenRequest>& requests,
                                       const GenParams& params, int parallelism) {
  auto results = try_generate_batch(client, requests, params, parallelism);
  if (results.empty()) return results;

  if (std::none_of(results.begin(), results.end(), [](const BatchEntry& e) { return e.ok(); })) {
    std::map<std::string, std::size_t> causes;
    for (const auto& e : results) ++causes[e.error];
    std::string summary = "all " + std::to_string(results.size()) + " requests failed:";
    for (const auto& [cause, count] : causes) {
      summary += " [" + std::to_string(count) + "x] " + cause + ";";
    }
    throw BatchError(summary);
  }
  return results;
}

}  // namespace udistill
