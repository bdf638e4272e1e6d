#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace udistill {

struct GenParams {
  double temperature = 1.0;
  int max_tokens = 512;
  std::optional<std::uint64_t> seed;  // honoured by the mock only
  bool want_logprobs = false;

  void validate() const;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;

  bool operator==(const TokenLogprob&) const = default;
};

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason reason);
FinishReason parse_finish_reason(std::string_view name);

struct Generation {
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  FinishReason finish_reason = FinishReason::stop;

  bool operator==(const Generation&) const = default;
};

nlohmann::json generation_to_json(const Generation& g);
Generation generation_from_json(const nlohmann::json& j);

// What the backend is asked to complete. `item_id` and `draw_index` are
// routing metadata: the remote client ignores them, the mock derives its
// answer distribution and per-draw seed from them.
struct GenRequest {
  std::string prompt;
  std::string item_id;
  std::uint64_t draw_index = 0;
};

// Uniform generation interface. Implementations must be safe to call from
// several threads at once.
class ModelClient {
 public:
  virtual ~ModelClient() = default;

  Generation generate(const GenRequest& request, const GenParams& params);
  Generation generate(std::string_view prompt, const GenParams& params);

  virtual bool supports_logprobs() const = 0;
  // Identifies model + backend configuration; part of every cache key.
  virtual std::string fingerprint() const = 0;

  // Number of generate() calls issued against this client, including
  // calls that failed.
  std::uint64_t calls() const noexcept { return calls_.load(std::memory_order_relaxed); }

 protected:
  virtual Generation do_generate(const GenRequest& request, const GenParams& params) = 0;

 private:
  std::atomic<std::uint64_t> calls_{0};
};

// Adapts a callable into a client; handy for scripted judges and tests.
class CallbackClient final : public ModelClient {
 public:
  using Fn = std::function<Generation(const GenRequest&, const GenParams&)>;

  CallbackClient(Fn fn, std::string fingerprint, bool logprobs = false)
      : fn_(std::move(fn)), fingerprint_(std::move(fingerprint)), logprobs_(logprobs) {}

  bool supports_logprobs() const override { return logprobs_; }
  std::string fingerprint() const override { return fingerprint_; }

 protected:
  Generation do_generate(const GenRequest& request, const GenParams& params) override {
    return fn_(request, params);
  }

 private:
  Fn fn_;
  std::string fingerprint_;
  bool logprobs_;
};

struct BatchEntry {
  std::optional<Generation> generation;
  std::string error;  // set when generation is empty

  bool ok() const noexcept { return generation.has_value(); }
};

// Runs requests with at most `parallelism` in flight; never throws for
// per-request failures.
std::vector<BatchEntry> try_generate_batch(ModelClient& client,
                                           const std::vector<GenRequest>& requests,
                                           const GenParams& params, int parallelism);

// Runs requests with at most `parallelism` in flight. Results are aligned
// with `requests`; per-request failures are recorded in the entry. Throws
// BatchError when every request failed.
std::vector<BatchEntry> generate_batch(ModelClient& client, const std::vector<GenRequest>& requests,
                                       const GenParams& params, int parallelism);

}  // namespace udistill
