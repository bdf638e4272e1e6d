#include "udistill/calibrator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <spdlog/spdlog.h>

#include "udistill/errors.hpp"

namespace udistill {

using nlohmann::json;

std::vector<CalibrationPair> to_pairs(const std::vector<ScoredPrediction>& scored) {
  std::vector<CalibrationPair> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back({s.f, s.correct});
  return out;
}

CalibrationMap CalibrationMap::identity() { return CalibrationMap{}; }

CalibrationMap CalibrationMap::isotonic(std::vector<std::pair<double, double>> knots) {
  if (knots.empty()) throw ValidationError("isotonic map needs at least one knot");
  for (std::size_t i = 0; i < knots.size(); ++i) {
    if (knots[i].second < 0.0 || knots[i].second > 1.0) {
      throw ValidationError("isotonic knot values must lie in [0,1]");
    }
    if (i > 0 && (knots[i].first <= knots[i - 1].first || knots[i].second < knots[i - 1].second)) {
      throw ValidationError("isotonic knots must be strictly increasing in x and monotone in c");
    }
  }
  CalibrationMap m;
  m.kind_ = Kind::isotonic;
  m.knots_ = std::move(knots);
  return m;
}

CalibrationMap CalibrationMap::temperature(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw ValidationError("temperature must be positive");
  CalibrationMap m;
  m.kind_ = Kind::temperature;
  m.temperature_ = t;
  return m;
}

double logit(double p) {
  p = std::clamp(p, kLogitEpsilon, 1.0 - kLogitEpsilon);
  return std::log(p) - std::log1p(-p);
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double CalibrationMap::apply(double f) const {
  switch (kind_) {
    case Kind::identity: return std::clamp(f, 0.0, 1.0);
    case Kind::temperature: return sigmoid(logit(f) / temperature_);
    case Kind::isotonic: {
      if (f <= knots_.front().first) return knots_.front().second;
      if (f >= knots_.back().first) return knots_.back().second;
      const auto hi = std::upper_bound(knots_.begin(), knots_.end(), f,
                                       [](double v, const auto& k) { return v < k.first; });
      const auto lo = hi - 1;
      const double t = (f - lo->first) / (hi->first - lo->first);
      return lo->second + t * (hi->second - lo->second);
    }
  }
  return f;
}

std::string_view to_string(CalibrationMap::Kind kind) {
  switch (kind) {
    case CalibrationMap::Kind::identity: return "identity";
    case CalibrationMap::Kind::isotonic: return "isotonic";
    case CalibrationMap::Kind::temperature: return "temperature";
  }
  return "identity";
}

json CalibrationMap::to_json() const {
  json j = {{"kind", to_string(kind_)}};
  if (kind_ == Kind::isotonic) {
    json k = json::array();
    for (const auto& [x, c] : knots_) k.push_back({x, c});
    j["knots"] = std::move(k);
  } else if (kind_ == Kind::temperature) {
    j["T"] = temperature_;
  }
  return j;
}

CalibrationMap CalibrationMap::from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "identity") return identity();
  if (kind == "temperature") return temperature(j.at("T").get<double>());
  if (kind == "isotonic") {
    std::vector<std::pair<double, double>> knots;
    for (const auto& k : j.at("knots")) knots.emplace_back(k.at(0).get<double>(), k.at(1).get<double>());
    return isotonic(std::move(knots));
  }
  throw ValidationError("unknown calibration map kind '" + kind + "'");
}

void CalibrationMap::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write calibration map " + path.string());
  out << to_json().dump(2) << '\n';
}

CalibrationMap CalibrationMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open calibration map " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ParseError("calibration map " + path.string() + ": " + e.what());
  }
}

std::vector<double> pava(const std::vector<double>& y, const std::vector<double>& weights) {
  struct Block {
    double sum_wy;
    double sum_w;
    std::size_t length;
    double mean() const { return sum_wy / sum_w; }
  };
  std::vector<Block> stack;
  stack.reserve(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    stack.push_back({weights[i] * y[i], weights[i], 1});
    while (stack.size() > 1 && stack[stack.size() - 2].mean() > stack.back().mean()) {
      Block top = stack.back();
      stack.pop_back();
      stack.back().sum_wy += top.sum_wy;
      stack.back().sum_w += top.sum_w;
      stack.back().length += top.length;
    }
  }
  std::vector<double> fitted;
  fitted.reserve(y.size());
  for (const auto& b : stack) fitted.insert(fitted.end(), b.length, b.mean());
  return fitted;
}

CalibrationMap fit_isotonic(const std::vector<CalibrationPair>& pairs) {
  if (pairs.size() < 2) throw ValidationError("fit_isotonic needs at least 2 pairs");
  std::vector<CalibrationPair> sorted = pairs;
  for (const auto& p : sorted) {
    if (!(p.score >= 0.0 && p.score <= 1.0)) throw ValidationError("scores must lie in [0,1]");
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const CalibrationPair& a, const CalibrationPair& b) { return a.score < b.score; });

  std::vector<double> xs, ys, ws;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) sum += sorted[j++].correct;
    xs.push_back(sorted[i].score);
    ws.push_back(static_cast<double>(j - i));
    ys.push_back(sum / static_cast<double>(j - i));
    i = j;
  }
  if (xs.size() == 1) {
    spdlog::warn("fit_isotonic: all {} pairs share f={}; map is constant {}", pairs.size(), xs[0], ys[0]);
  }
  const auto fitted = pava(ys, ws);
  std::vector<std::pair<double, double>> knots;
  knots.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    // Means of 0/1 outcomes can overshoot [0,1] by an ulp; keep the map in range.
    const double c = std::clamp(fitted[i], 0.0, 1.0);
    knots.emplace_back(xs[i], knots.empty() ? c : std::max(c, knots.back().second));
  }
  return CalibrationMap::isotonic(std::move(knots));
}

double temperature_nll(const std::vector<CalibrationPair>& pairs, double t) {
  double nll = 0.0;
  for (const auto& p : pairs) {
    const double z = logit(p.score) / t;
    // -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
    const double s = p.correct ? -z : z;
    nll += s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
  }
  return nll;
}

CalibrationMap fit_temperature(const std::vector<CalibrationPair>& pairs) {
  if (pairs.size() < 2) throw ValidationError("fit_temperature needs at least 2 pairs");
  const bool any_pos = std::any_of(pairs.begin(), pairs.end(), [](auto& p) { return p.correct != 0; });
  const bool any_neg = std::any_of(pairs.begin(), pairs.end(), [](auto& p) { return p.correct == 0; });
  if (!any_pos || !any_neg) {
    throw ValidationError("fit_temperature needs both correct and incorrect outcomes");
  }
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = -3.0, b = 3.0;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = temperature_nll(pairs, std::exp(c)), fd = temperature_nll(pairs, std::exp(d));
  while (b - a > 1e-7) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = temperature_nll(pairs, std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = temperature_nll(pairs, std::exp(d));
    }
  }
  return CalibrationMap::temperature(std::exp(0.5 * (a + b)));
}

double ece(const std::vector<CalibrationPair>& pairs, std::size_t n_bins) {
  if (n_bins < 1) throw ValidationError("ece needs n_bins >= 1");
  if (pairs.empty()) throw ValidationError("ece of an empty set");
  std::vector<double> conf(n_bins, 0.0), acc(n_bins, 0.0);
  std::vector<std::size_t> count(n_bins, 0);
  for (const auto& p : pairs) {
    const double s = std::clamp(p.score, 0.0, 1.0);
    auto b = static_cast<std::size_t>(s * static_cast<double>(n_bins));
    b = std::min(b, n_bins - 1);
    conf[b] += s;
    acc[b] += p.correct;
    ++count[b];
  }
  double total = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (count[b] == 0) continue;
    total += std::abs(acc[b] - conf[b]);  // n_b * |acc_b - conf_b|
  }
  return total / static_cast<double>(pairs.size());
}

std::string_view to_string(CalibrationVerdict verdict) {
  return verdict == CalibrationVerdict::calibrate ? "calibrate" : "skip";
}

CalibrationVerdict decide_calibration(double measured_ece, double threshold) {
  return measured_ece >= threshold ? CalibrationVerdict::calibrate : CalibrationVerdict::skip;
}

CalibrationDecision should_calibrate(const std::vector<CalibrationPair>& training_pairs,
                                     double threshold, std::size_t n_bins) {
  CalibrationDecision d;
  d.measured_ece = ece(training_pairs, n_bins);
  d.threshold = threshold;
  d.n_bins = n_bins;
  d.verdict = decide_calibration(d.measured_ece, threshold);
  spdlog::info("should_calibrate: ECE({} bins) = {:.4f}, threshold {:.4f} -> {}", n_bins,
               d.measured_ece, threshold, to_string(d.verdict));
  return d;
}

}  // namespace udistill
