#include "udistill/mock_model.hpp"

#include <cmath>
#include <fstream>

#include "udistill/errors.hpp"
#include "udistill/hashing.hpp"

namespace udistill {

using nlohmann::json;

Distortion Distortion::piecewise(std::vector<std::pair<double, double>> knots) {
  if (knots.size() < 2) throw ValidationError("piecewise distortion needs >= 2 knots");
  for (std::size_t i = 0; i < knots.size(); ++i) {
    const auto [x, y] = knots[i];
    if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0) {
      throw ValidationError("piecewise distortion knots must lie in [0,1]^2");
    }
    if (i > 0 && (x <= knots[i - 1].first || y < knots[i - 1].second)) {
      throw ValidationError("piecewise distortion must be monotone with increasing x");
    }
  }
  return Distortion(Kind::piecewise, std::move(knots));
}

Distortion Distortion::from_json(const json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "identity") return identity();
    if (name == "square") return square();
    if (name == "sqrt") return sqrt();
    throw ValidationError("unknown distortion '" + name + "'");
  }
  if (j.is_object() && j.contains("piecewise")) {
    std::vector<std::pair<double, double>> knots;
    for (const auto& k : j.at("piecewise")) knots.emplace_back(k.at(0).get<double>(), k.at(1).get<double>());
    return piecewise(std::move(knots));
  }
  throw ValidationError("distortion must be a name or {\"piecewise\": [[x,y],...]}");
}

double Distortion::operator()(double f) const {
  f = std::clamp(f, 0.0, 1.0);
  switch (kind_) {
    case Kind::identity: return f;
    case Kind::square: return f * f;
    case Kind::sqrt: return std::sqrt(f);
    case Kind::piecewise: {
      if (f <= knots_.front().first) return knots_.front().second;
      if (f >= knots_.back().first) return knots_.back().second;
      for (std::size_t i = 1; i < knots_.size(); ++i) {
        if (f <= knots_[i].first) {
          const auto [x0, y0] = knots_[i - 1];
          const auto [x1, y1] = knots_[i];
          return y0 + (y1 - y0) * (f - x0) / (x1 - x0);
        }
      }
      return knots_.back().second;
    }
  }
  return f;
}

json Distortion::to_json() const {
  switch (kind_) {
    case Kind::identity: return "identity";
    case Kind::square: return "square";
    case Kind::sqrt: return "sqrt";
    case Kind::piecewise: {
      json k = json::array();
      for (const auto& [x, y] : knots_) k.push_back({x, y});
      return json{{"piecewise", k}};
    }
  }
  return "identity";
}

void MockModelSpec::validate() const {
  for (const auto& [id, item] : items) {
    if (item.answers.empty()) throw ValidationError("mock item '" + id + "' has no answers");
    double total = 0.0;
    for (const auto& a : item.answers) {
      if (!(a.probability >= 0.0)) throw ValidationError("mock item '" + id + "': negative probability");
      total += a.probability;
      if (a.logprobs) {
        for (const auto& t : *a.logprobs) {
          if (t.logprob > 0.0) throw ValidationError("mock item '" + id + "': logprob > 0");
        }
      }
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ValidationError("mock item '" + id + "': probabilities sum to " + std::to_string(total));
    }
  }
}

MockModelSpec MockModelSpec::from_json(const json& j) {
  MockModelSpec s;
  s.name = j.value("name", std::string("mock"));
  if (auto it = j.find("items"); it != j.end()) {
    for (const auto& [id, item] : it->items()) {
      MockItem mi;
      for (const auto& a : item.at("answers")) {
        MockAnswer ma;
        ma.text = a.at("text").get<std::string>();
        ma.probability = a.at("p").get<double>();
        if (auto lp = a.find("logprobs"); lp != a.end() && !lp->is_null()) {
          std::vector<TokenLogprob> toks;
          for (const auto& t : *lp) toks.push_back({t.at(0).get<std::string>(), t.at(1).get<double>()});
          ma.logprobs = std::move(toks);
        }
        mi.answers.push_back(std::move(ma));
      }
      s.items.emplace(id, std::move(mi));
    }
  }
  if (auto it = j.find("distortion"); it != j.end()) s.distortion = Distortion::from_json(*it);
  if (auto it = j.find("reasoning_templates"); it != j.end()) {
    s.reasoning_templates = it->get<std::vector<std::string>>();
  }
  if (auto it = j.find("echo_table"); it != j.end()) {
    s.echo_table = it->get<std::map<std::string, std::string>>();
  }
  if (auto it = j.find("fail_items"); it != j.end()) {
    s.fail_items = it->get<std::set<std::string>>();
  }
  s.supports_logprobs = j.value("supports_logprobs", true);
  s.validate();
  return s;
}

json MockModelSpec::to_json() const {
  json items_json = json::object();
  for (const auto& [id, item] : items) {
    json answers = json::array();
    for (const auto& a : item.answers) {
      json aj = {{"text", a.text}, {"p", a.probability}};
      if (a.logprobs) {
        json lp = json::array();
        for (const auto& t : *a.logprobs) lp.push_back({t.token, t.logprob});
        aj["logprobs"] = std::move(lp);
      }
      answers.push_back(std::move(aj));
    }
    items_json[id] = {{"answers", std::move(answers)}};
  }
  json j = {{"name", name},
            {"items", std::move(items_json)},
            {"distortion", distortion.to_json()},
            {"reasoning_templates", reasoning_templates},
            {"echo_table", echo_table},
            {"fail_items", fail_items},
            {"supports_logprobs", supports_logprobs}};
  return j;
}

MockModelSpec load_mock_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mock spec " + path.string());
  try {
    return MockModelSpec::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ParseError("mock spec " + path.string() + ": " + e.what());
  }
}

void save_mock_spec(const MockModelSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write mock spec " + path.string());
  out << spec.to_json().dump() << '\n';
}

MockModel::MockModel(MockModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  fingerprint_ = "mock:" + spec_.name + ":" + to_hex(fnv1a64(spec_.to_json().dump()));
}

std::size_t MockModel::draw_answer(const MockItem& item, const std::string& item_id,
                                   std::uint64_t seed, std::uint64_t draw_index,
                                   double temperature) const {
  const auto& answers = item.answers;
  if (temperature <= 0.0) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < answers.size(); ++i) {
      if (answers[i].probability > answers[best].probability) best = i;
    }
    return best;
  }
  SplitMix64 rng(mix64(fnv1a64(item_id) ^ mix64(seed + draw_index)));
  const double u = rng.uniform();
  if (temperature == 1.0) {
    double acc = 0.0;
    for (std::size_t i = 0; i < answers.size(); ++i) {
      acc += answers[i].probability;
      if (u < acc) return i;
    }
  } else {
    std::vector<double> w(answers.size());
    double total = 0.0;
    for (std::size_t i = 0; i < answers.size(); ++i) {
      w[i] = answers[i].probability > 0.0 ? std::pow(answers[i].probability, 1.0 / temperature) : 0.0;
      total += w[i];
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < answers.size(); ++i) {
      acc += w[i] / total;
      if (u < acc) return i;
    }
  }
  // Rounding slack: fall back to the last answer with positive mass.
  for (std::size_t i = answers.size(); i-- > 0;) {
    if (answers[i].probability > 0.0) return i;
  }
  return answers.size() - 1;
}

Generation MockModel::do_generate(const GenRequest& request, const GenParams& params) {
  const std::string& id = request.item_id.empty() ? request.prompt : request.item_id;
  if (spec_.fail_items.contains(id)) {
    throw TransportError("mock: injected failure for item '" + id + "'");
  }
  if (auto echo = spec_.echo_table.find(id); echo != spec_.echo_table.end()) {
    return Generation{echo->second, std::nullopt, FinishReason::stop};
  }
  auto it = spec_.items.find(id);
  if (it == spec_.items.end()) throw ValidationError("mock: unknown item id '" + id + "'");

  const std::uint64_t seed = params.seed.value_or(0);
  const std::size_t k = draw_answer(it->second, id, seed, request.draw_index, params.temperature);
  const MockAnswer& answer = it->second.answers[k];

  Generation g;
  std::string prefix;
  if (!spec_.reasoning_templates.empty()) {
    std::size_t r = 0;
    if (params.temperature > 0.0) {
      SplitMix64 rng(mix64(fnv1a64(id) ^ mix64(seed + request.draw_index) ^ 0x5bd1e995ULL));
      r = rng.below(spec_.reasoning_templates.size());
    }
    prefix = "<reasoning> " + spec_.reasoning_templates[r] + " </reasoning> ";
  }
  g.text = prefix + answer.text;

  if (params.want_logprobs && spec_.supports_logprobs) {
    std::vector<TokenLogprob> toks;
    if (!prefix.empty()) toks.push_back({prefix, 0.0});
    if (answer.logprobs) {
      toks.insert(toks.end(), answer.logprobs->begin(), answer.logprobs->end());
    } else {
      toks.push_back({answer.text, answer.probability > 0.0 ? std::log(answer.probability) : -1e9});
    }
    g.token_logprobs = std::move(toks);
  }
  return g;
}

}  // namespace udistill
