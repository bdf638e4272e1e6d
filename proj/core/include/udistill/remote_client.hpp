#pragma once

#include <chrono>
#include <functional>
#include <string>

#include "udistill/model_client.hpp"

namespace udistill {

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::milliseconds max_backoff{20'000};
  double multiplier = 2.0;
  double jitter = 0.25;  // +/- fraction applied to each delay

  // Delay before attempt `attempt` (1-based; attempt 1 has no delay).
  std::chrono::milliseconds delay_for(int attempt, double unit_noise) const;
};

struct RemoteConfig {
  // Base URL, e.g. "https://api.example.com/v1"; requests go to
  // <endpoint>/chat/completions.
  std::string endpoint;
  std::string model;
  std::string api_key;  // sent as a bearer token when nonempty
  bool logprobs_supported = true;
  std::chrono::seconds timeout{120};
  RetryPolicy retry;
};

// Reads the API key from UD_API_KEY (empty when unset).
std::string api_key_from_env();

// Chat-completions client. Retries transport failures, 429 and 5xx with
// exponential backoff and jitter; other HTTP errors surface immediately.
class RemoteClient final : public ModelClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit RemoteClient(RemoteConfig config, Sleeper sleeper = {});

  bool supports_logprobs() const override { return config_.logprobs_supported; }
  std::string fingerprint() const override;

  const RemoteConfig& config() const noexcept { return config_; }

  // Wire helpers, exposed for tests.
  static nlohmann::json build_request_body(const std::string& model, const std::string& prompt,
                                           const GenParams& params);
  static Generation parse_response_body(const nlohmann::json& body, bool want_logprobs);

 protected:
  Generation do_generate(const GenRequest& request, const GenParams& params) override;

 private:
  RemoteConfig config_;
  std::string origin_;
  std::string path_prefix_;
  Sleeper sleeper_;
};

}  // namespace udistill
