#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "udistill/calibrator.hpp"
#include "udistill/errors.hpp"
#include "udistill/hashing.hpp"

using namespace udistill;
namespace ut = udistill::testing;

namespace {

std::vector<CalibrationPair> pairs_from(std::initializer_list<std::pair<double, int>> xs) {
  std::vector<CalibrationPair> out;
  for (auto [s, y] : xs) out.push_back({s, y});
  return out;
}

std::vector<CalibrationPair> temperature_stream(double t_star, std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<CalibrationPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = 0.02 + 0.96 * rng.uniform();
    const double p = sigmoid(logit(f) / t_star);
    out.push_back({f, rng.uniform() < p ? 1 : 0});
  }
  return out;
}

double grid_scan_temperature(const std::vector<CalibrationPair>& pairs) {
  double best_t = 1.0, best = std::numeric_limits<double>::infinity();
  for (double lt = -3.0; lt <= 3.0; lt += 0.001) {
    const double nll = temperature_nll(pairs, std::exp(lt));
    if (nll < best) {
      best = nll;
      best_t = std::exp(lt);
    }
  }
  return best_t;
}

}  // namespace

TEST(Pava, HandTrace) {
  const auto fit = pava({0, 1, 0, 1}, {1, 1, 1, 1});
  ASSERT_EQ(fit.size(), 4u);
  EXPECT_DOUBLE_EQ(fit[0], 0.0);
  EXPECT_DOUBLE_EQ(fit[1], 0.5);
  EXPECT_DOUBLE_EQ(fit[2], 0.5);
  EXPECT_DOUBLE_EQ(fit[3], 1.0);
}

TEST(Pava, WeightedPooling) {
  const auto fit = pava({1.0, 0.0}, {3.0, 1.0});
  EXPECT_DOUBLE_EQ(fit[0], 0.75);
  EXPECT_DOUBLE_EQ(fit[1], 0.75);
}

TEST(FitIsotonic, AlreadyMonotone) {
  const auto map = fit_isotonic(pairs_from({{0.1, 0}, {0.9, 1}}));
  ASSERT_EQ(map.kind(), CalibrationMap::Kind::isotonic);
  ASSERT_EQ(map.knots().size(), 2u);
  EXPECT_DOUBLE_EQ(map.knots()[0].first, 0.1);
  EXPECT_DOUBLE_EQ(map.knots()[0].second, 0.0);
  EXPECT_DOUBLE_EQ(map.knots()[1].first, 0.9);
  EXPECT_DOUBLE_EQ(map.knots()[1].second, 1.0);
}

TEST(FitIsotonic, ViolatorPooledAgainstGridOracle) {
  const auto pairs = pairs_from({{0.1, 0}, {0.4, 1}, {0.5, 0}, {0.9, 1}});
  const auto map = fit_isotonic(pairs);
  const std::vector<double> expected = {0.0, 0.5, 0.5, 1.0};
  const auto grid = ut::grid_isotonic({0, 1, 0, 1}, 0.001);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_NEAR(map.apply(pairs[i].score), expected[i], 1e-12);
    EXPECT_NEAR(map.apply(pairs[i].score), grid[i], 1e-3);
  }
}

TEST(FitIsotonic, ConstantLabels) {
  const auto map = fit_isotonic(pairs_from({{0.1, 1}, {0.3, 1}, {0.8, 1}}));
  for (double f : {0.0, 0.1, 0.5, 0.95, 1.0}) EXPECT_DOUBLE_EQ(map.apply(f), 1.0);
}

TEST(FitIsotonic, TiesArePooled) {
  const auto map = fit_isotonic(pairs_from({{0.5, 0}, {0.5, 1}, {0.5, 1}, {0.7, 1}}));
  EXPECT_NEAR(map.apply(0.5), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(map.apply(0.7), 1.0, 1e-12);
}

TEST(FitIsotonic, RejectsBadInput) {
  EXPECT_THROW(fit_isotonic(pairs_from({{0.5, 1}})), ValidationError);
  EXPECT_THROW(fit_isotonic(pairs_from({{0.5, 1}, {1.5, 0}})), ValidationError);
}

TEST(FitIsotonic, MatchesBruteForceOnRandomSmallSets) {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = 2 + rng.below(7);
    std::vector<CalibrationPair> pairs;
    std::vector<double> s;
    std::vector<int> y;
    for (std::uint64_t i = 0; i < n; ++i) {
      const double score = trial % 2 ? static_cast<double>(rng.below(6)) / 5.0 : rng.uniform();
      const int label = static_cast<int>(rng.below(2));
      pairs.push_back({score, label});
      s.push_back(score);
      y.push_back(label);
    }
    const auto map = fit_isotonic(pairs);
    for (const auto& [x, v] : ut::brute_isotonic(s, y)) EXPECT_NEAR(map.apply(x), v, 1e-9);
  }
}

TEST(CalibrationMap, ApplyRules) {
  EXPECT_DOUBLE_EQ(CalibrationMap::identity().apply(0.37), 0.37);
  const auto iso = CalibrationMap::isotonic({{0.1, 0.0}, {0.9, 1.0}});
  EXPECT_DOUBLE_EQ(iso.apply(0.5), 0.5);
  EXPECT_DOUBLE_EQ(iso.apply(0.0), 0.0);
  EXPECT_DOUBLE_EQ(iso.apply(1.0), 1.0);
  const auto t1 = CalibrationMap::temperature(1.0);
  for (double f : {0.001, 0.2, 0.5, 0.77, 0.999}) EXPECT_NEAR(t1.apply(f), f, 1e-12);
  EXPECT_THROW(CalibrationMap::isotonic({{0.5, 0.2}, {0.4, 0.3}}), ValidationError);
  EXPECT_THROW(CalibrationMap::isotonic({{0.1, 0.6}, {0.4, 0.3}}), ValidationError);
}

TEST(CalibrationMap, JsonRoundTrip) {
  ut::TempDir dir;
  for (const auto& m : {CalibrationMap::identity(), CalibrationMap::isotonic({{0.1, 0.05}, {0.6, 0.5}, {0.9, 0.97}}),
                        CalibrationMap::temperature(1.7)}) {
    m.save(dir / "map.json");
    const auto back = CalibrationMap::load(dir / "map.json");
    EXPECT_EQ(back.kind(), m.kind());
    for (double f = 0.0; f <= 1.0; f += 0.05) EXPECT_DOUBLE_EQ(back.apply(f), m.apply(f));
  }
}

TEST(FitTemperature, RecoversUnitTemperature) {
  const auto pairs = temperature_stream(1.0, 5000, 1);
  const auto map = fit_temperature(pairs);
  EXPECT_GE(map.temperature_value(), 0.9);
  EXPECT_LE(map.temperature_value(), 1.1);
  EXPECT_NEAR(map.temperature_value(), grid_scan_temperature(pairs), 0.01);
}

TEST(FitTemperature, RecoversOverconfidence) {
  const auto pairs = temperature_stream(2.0, 5000, 2);
  const auto map = fit_temperature(pairs);
  EXPECT_GE(map.temperature_value(), 1.8);
  EXPECT_LE(map.temperature_value(), 2.2);
  EXPECT_NEAR(map.temperature_value(), grid_scan_temperature(pairs), 0.01);
}

TEST(FitTemperature, SingleClassThrows) {
  EXPECT_THROW(fit_temperature(pairs_from({{0.2, 1}, {0.7, 1}})), ValidationError);
}

TEST(Ece, HandComputed) {
  std::vector<CalibrationPair> all_right(20, {1.0, 1});
  EXPECT_DOUBLE_EQ(ece(all_right), 0.0);
  std::vector<CalibrationPair> ten;
  for (int i = 0; i < 10; ++i) ten.push_back({0.8, i < 6 ? 1 : 0});
  EXPECT_NEAR(ece(ten), 0.2, 1e-12);
  // Two occupied bins, weights 1/2 each: |0.1-0| and |0.9-1|.
  EXPECT_NEAR(ece(pairs_from({{0.1, 0}, {0.9, 1}}), 10), 0.1, 1e-12);
}

TEST(ShouldCalibrate, Thresholds) {
  EXPECT_EQ(decide_calibration(0.100), CalibrationVerdict::calibrate);
  EXPECT_EQ(decide_calibration(0.026), CalibrationVerdict::skip);
  EXPECT_EQ(decide_calibration(0.05), CalibrationVerdict::calibrate);
  std::vector<CalibrationPair> ten;
  for (int i = 0; i < 10; ++i) ten.push_back({0.8, i < 6 ? 1 : 0});
  const auto d = should_calibrate(ten);
  EXPECT_EQ(d.verdict, CalibrationVerdict::calibrate);
  EXPECT_NEAR(d.measured_ece, 0.2, 1e-12);
  EXPECT_EQ(d.n_bins, 30u);
}
