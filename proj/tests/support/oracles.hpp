#pragma once

// Reference implementations used as test oracles. Deliberately naive.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace udistill::testing {

// Least-squares nondecreasing fit by exhaustive search over contiguous
// partitions of the distinct scores. Returns (score, fitted value) for each
// distinct score in increasing order. Exponential; keep inputs small.
std::vector<std::pair<double, double>> brute_isotonic(const std::vector<double>& scores,
                                                      const std::vector<int>& labels);

// Monotone least squares on a grid of step `step` over [0,1] by dynamic
// programming over the grid values. Returns one fitted value per point,
// points taken in the given (already increasing) order.
std::vector<double> grid_isotonic(const std::vector<double>& y, double step);

// AUROC by enumerating every (positive, negative) pair.
double pair_auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// ln P(X = k) for X ~ Binomial(n, p).
double binomial_log_pmf(std::size_t n, std::size_t k, double p);

// Central interval [lo, hi] of Binomial(n, p) holding at least `level` mass,
// with at most (1 - level) / 2 in each tail.
std::pair<std::size_t, std::size_t> binomial_interval(std::size_t n, double p, double level);

// Shannon entropy in nats, written out term by term.
double entropy_nats(const std::vector<double>& probabilities);

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::size_t count_lines(const std::filesystem::path& path);

}  // namespace udistill::testing
