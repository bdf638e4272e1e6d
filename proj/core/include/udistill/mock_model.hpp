#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "udistill/model_client.hpp"

namespace udistill {

// Monotone map pi: [0,1] -> [0,1] describing how the probability of an
// answer relates to the probability that it is correct.
class Distortion {
 public:
  enum class Kind { identity, square, sqrt, piecewise };

  Distortion() = default;
  static Distortion identity() { return Distortion(Kind::identity, {}); }
  static Distortion square() { return Distortion(Kind::square, {}); }
  static Distortion sqrt() { return Distortion(Kind::sqrt, {}); }
  // Knots must have strictly increasing x in [0,1] and nondecreasing y in [0,1].
  static Distortion piecewise(std::vector<std::pair<double, double>> knots);
  static Distortion from_json(const nlohmann::json& j);

  double operator()(double f) const;
  Kind kind() const noexcept { return kind_; }
  nlohmann::json to_json() const;

 private:
  Distortion(Kind kind, std::vector<std::pair<double, double>> knots)
      : kind_(kind), knots_(std::move(knots)) {}

  Kind kind_ = Kind::identity;
  std::vector<std::pair<double, double>> knots_;
};

struct MockAnswer {
  std::string text;
  double probability = 0.0;
  std::optional<std::vector<TokenLogprob>> logprobs;
};

struct MockItem {
  std::vector<MockAnswer> answers;
};

struct MockModelSpec {
  std::string name = "mock";
  std::map<std::string, MockItem> items;
  Distortion distortion;
  std::vector<std::string> reasoning_templates;
  // Item id -> fixed response; stands in for a fine-tuned model.
  std::map<std::string, std::string> echo_table;
  // Items whose every request fails with a transport error.
  std::set<std::string> fail_items;
  bool supports_logprobs = true;

  // Throws ValidationError on bad probabilities or logprobs.
  void validate() const;

  static MockModelSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

MockModelSpec load_mock_spec(const std::filesystem::path& path);
void save_mock_spec(const MockModelSpec& spec, const std::filesystem::path& path);

// Deterministic synthetic model. A response is a pure function of
// (item id, params.seed, draw index, temperature); the per-draw seed is
// derived from seed + draw index so batches are order independent.
class MockModel final : public ModelClient {
 public:
  explicit MockModel(MockModelSpec spec);

  bool supports_logprobs() const override { return spec_.supports_logprobs; }
  std::string fingerprint() const override { return fingerprint_; }

  const MockModelSpec& spec() const noexcept { return spec_; }

  // Index into the item's answers chosen for one draw. Temperature 0 picks
  // the most probable answer; other temperatures reweight p^(1/T).
  std::size_t draw_answer(const MockItem& item, const std::string& item_id, std::uint64_t seed,
                          std::uint64_t draw_index, double temperature) const;

 protected:
  Generation do_generate(const GenRequest& request, const GenParams& params) override;

 private:
  MockModelSpec spec_;
  std::string fingerprint_;
};

}  // namespace udistill
