#include "udistill/remote_client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "udistill/errors.hpp"
#include "udistill/hashing.hpp"

namespace udistill {

using nlohmann::json;

std::chrono::milliseconds RetryPolicy::delay_for(int attempt, double unit_noise) const {
  if (attempt <= 1) return std::chrono::milliseconds{0};
  double base = static_cast<double>(initial_backoff.count()) * std::pow(multiplier, attempt - 2);
  base = std::min(base, static_cast<double>(max_backoff.count()));
  const double factor = 1.0 + jitter * (2.0 * unit_noise - 1.0);
  return std::chrono::milliseconds{static_cast<long long>(std::max(0.0, base * factor))};
}

std::string api_key_from_env() {
  const char* key = std::getenv("UD_API_KEY");
  return key ? key : "";
}

namespace {

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

RemoteClient::RemoteClient(RemoteConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)) {
  if (config_.endpoint.empty()) throw ConfigError("remote backend needs an endpoint");
  if (config_.retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
  std::string url = config_.endpoint;
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must include a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  origin_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string RemoteClient::fingerprint() const {
  return "remote:" + config_.model + ":" + to_hex(fnv1a64(config_.endpoint));
}

json RemoteClient::build_request_body(const std::string& model, const std::string& prompt,
                                      const GenParams& params) {
  json body = {{"model", model},
               {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
               {"temperature", params.temperature},
               {"max_tokens", params.max_tokens}};
  if (params.want_logprobs) body["logprobs"] = true;
  return body;
}

Generation RemoteClient::parse_response_body(const json& body, bool want_logprobs) {
  const auto choices = body.find("choices");
  if (choices == body.end() || !choices->is_array() || choices->empty()) {
    throw TransportError("response has no choices");
  }
  const json& choice = (*choices)[0];
  Generation g;
  const auto& content = choice.at("message").at("content");
  g.text = content.is_string() ? content.get<std::string>() : std::string();
  if (auto fr = choice.find("finish_reason"); fr != choice.end() && fr->is_string()) {
    g.finish_reason = parse_finish_reason(fr->get<std::string>());
  }
  if (want_logprobs) {
    auto lp = choice.find("logprobs");
    if (lp != choice.end() && lp->is_object()) {
      auto toks = lp->find("content");
      if (toks != lp->end() && toks->is_array()) {
        std::vector<TokenLogprob> out;
        out.reserve(toks->size());
        for (const auto& t : *toks) {
          out.push_back({t.at("token").get<std::string>(), std::min(0.0, t.at("logprob").get<double>())});
        }
        g.token_logprobs = std::move(out);
      }
    }
  }
  return g;
}

Generation RemoteClient::do_generate(const GenRequest& request, const GenParams& params) {
  const std::string body = build_request_body(config_.model, request.prompt, params).dump();
  const std::string path = path_prefix_ + "/chat/completions";

  std::mt19937_64 jitter_rng(std::random_device{}());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::string last_error;
  int last_status = 0;

  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    if (attempt > 1) sleeper_(config_.retry.delay_for(attempt, unit(jitter_rng)));

    httplib::Client cli(origin_);
    cli.set_connection_timeout(config_.timeout);
    cli.set_read_timeout(config_.timeout);
    cli.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto res = cli.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      last_status = 0;
      spdlog::warn("remote attempt {}/{} failed: {}", attempt, config_.retry.max_attempts, last_error);
      continue;
    }
    if (res->status == 200) {
      try {
        return parse_response_body(json::parse(res->body), params.want_logprobs);
      } catch (const json::exception& e) {
        throw TransportError(std::string("malformed response: ") + e.what(), res->status);
      }
    }
    last_status = res->status;
    last_error = "HTTP " + std::to_string(res->status);
    if (!retryable_status(res->status)) {
      throw TransportError(last_error + ": " + res->body.substr(0, 200), res->status);
    }
    spdlog::warn("remote attempt {}/{} failed: {}", attempt, config_.retry.max_attempts, last_error);
  }
  throw TransportError("giving up after " + std::to_string(config_.retry.max_attempts) +
                           " attempts: " + last_error,
                       last_status);
}

}  // namespace udistill
