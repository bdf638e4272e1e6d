#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace udistill {

// One (raw score, outcome) observation. In the distillation loop every
// sampled cluster of every calibration item contributes one pair.
struct ScoredPrediction {
  std::string item_id;
  std::string cluster_key;
  double f = 0.0;
  int correct = 0;
  std::string text;
};

struct CalibrationPair {
  double score = 0.0;
  int correct = 0;
};

std::vector<CalibrationPair> to_pairs(const std::vector<ScoredPrediction>& scored);

// Monotone map from raw frequency to probability.
class CalibrationMap {
 public:
  enum class Kind { identity, isotonic, temperature };

  static CalibrationMap identity();
  // Knot x strictly increasing, c nondecreasing in [0,1].
  static CalibrationMap isotonic(std::vector<std::pair<double, double>> knots);
  static CalibrationMap temperature(double t);

  Kind kind() const noexcept { return kind_; }
  const std::vector<std::pair<double, double>>& knots() const noexcept { return knots_; }
  double temperature_value() const noexcept { return temperature_; }

  // Total on the reals; isotonic interpolates linearly between knots and
  // clamps to the boundary knot values outside them.
  double apply(double f) const;

  nlohmann::json to_json() const;
  static CalibrationMap from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static CalibrationMap load(const std::filesystem::path& path);

 private:
  Kind kind_ = Kind::identity;
  std::vector<std::pair<double, double>> knots_;
  double temperature_ = 1.0;
};

std::string_view to_string(CalibrationMap::Kind kind);

inline constexpr double kLogitEpsilon = 1e-4;

double logit(double p);
double sigmoid(double z);

// Weighted pool-adjacent-violators over (x, y, weight) triples whose x is
// already strictly increasing. Returns the fitted value per triple.
std::vector<double> pava(const std::vector<double>& y, const std::vector<double>& weights);

// Least-squares monotone fit over f-sorted pairs. Ties in f are pooled by
// their mean outcome first. A single distinct f yields a constant map.
CalibrationMap fit_isotonic(const std::vector<CalibrationPair>& pairs);

// Bernoulli negative log-likelihood of sigmoid(logit(f)/T).
double temperature_nll(const std::vector<CalibrationPair>& pairs, double t);

// Golden-section search for T on log T in [-3, 3]. Needs both outcomes.
CalibrationMap fit_temperature(const std::vector<CalibrationPair>& pairs);

// Equal-width ECE on [0,1]; the last bin is right-closed.
double ece(const std::vector<CalibrationPair>& pairs, std::size_t n_bins = 30);

enum class CalibrationVerdict { calibrate, skip };

struct CalibrationDecision {
  CalibrationVerdict verdict = CalibrationVerdict::calibrate;
  double measured_ece = 0.0;
  double threshold = 0.05;
  std::size_t n_bins = 30;
};

std::string_view to_string(CalibrationVerdict verdict);

// Calibrate iff the measured ECE reaches the threshold (inclusive).
CalibrationVerdict decide_calibration(double measured_ece, double threshold = 0.05);

CalibrationDecision should_calibrate(const std::vector<CalibrationPair>& training_pairs,
                                     double threshold = 0.05, std::size_t n_bins = 30);

}  // namespace udistill
