#include "udistill/qa_dataset.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "udistill/errors.hpp"
#include "udistill/hashing.hpp"

namespace udistill {

using nlohmann::json;

DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "mcq") return DatasetFormat::mcq;
  if (name == "open") return DatasetFormat::open;
  throw ConfigError("unknown dataset format '" + std::string(name) + "' (expected mcq or open)");
}

std::string_view to_string(DatasetFormat format) {
  return format == DatasetFormat::mcq ? "mcq" : "open";
}

bool is_choice_letter(std::string_view letter) {
  return letter.size() == 1 && letter[0] >= 'A' && letter[0] <= 'J';
}

void validate_item(const QaItem& item, DatasetFormat format) {
  if (item.id.empty()) throw ValidationError("item with empty id");
  if (format == DatasetFormat::mcq && item.choices.empty()) {
    throw ValidationError("item '" + item.id + "': mcq dataset requires choices");
  }
  if (format == DatasetFormat::open && !item.choices.empty()) {
    throw ValidationError("item '" + item.id + "': open dataset must not carry choices");
  }
  if (item.choices.empty()) {
    if (item.gold.empty()) throw ValidationError("item '" + item.id + "': empty gold answer");
    return;
  }
  std::unordered_set<std::string> letters;
  bool gold_found = false;
  for (const auto& c : item.choices) {
    if (!is_choice_letter(c.letter)) {
      throw ValidationError("item '" + item.id + "': invalid choice letter '" + c.letter + "'");
    }
    if (!letters.insert(c.letter).second) {
      throw ValidationError("item '" + item.id + "': duplicate choice letter '" + c.letter + "'");
    }
    gold_found = gold_found || c.letter == item.gold;
  }
  if (!gold_found) {
    throw ValidationError("item '" + item.id + "': gold '" + item.gold + "' is not among the choices");
  }
}

QaItem item_from_json(const json& record) {
  if (!record.is_object()) throw ParseError("record is not a JSON object");
  auto required_string = [&](const char* key) {
    auto it = record.find(key);
    if (it == record.end() || !it->is_string()) {
      throw ParseError(std::string("missing or non-string field '") + key + "'");
    }
    return it->get<std::string>();
  };
  QaItem item;
  item.id = required_string("id");
  item.question = required_string("question");
  item.gold = required_string("gold");
  if (auto it = record.find("choices"); it != record.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError("field 'choices' must be an array");
    for (const auto& c : *it) {
      if (!c.is_object() || !c.contains("letter") || !c.contains("text") ||
          !c["letter"].is_string() || !c["text"].is_string()) {
        throw ParseError("choice entries need string 'letter' and 'text'");
      }
      item.choices.push_back({c["letter"].get<std::string>(), c["text"].get<std::string>()});
    }
  }
  if (auto it = record.find("subject"); it != record.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError("field 'subject' must be a string");
    item.subject = it->get<std::string>();
  }
  return item;
}

json item_to_json(const QaItem& item) {
  json j = {{"id", item.id}, {"question", item.question}, {"gold", item.gold}};
  if (!item.choices.empty()) {
    json choices = json::array();
    for (const auto& c : item.choices) choices.push_back({{"letter", c.letter}, {"text", c.text}});
    j["choices"] = std::move(choices);
  }
  if (item.subject) j["subject"] = *item.subject;
  return j;
}

Dataset parse_dataset(std::istream& in, DatasetFormat format) {
  Dataset out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    QaItem item;
    try {
      item = item_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(e.what(), line_no);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
    try {
      validate_item(item, format);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(item.id).second) {
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate id '" + item.id + "'");
    }
    out.push_back(std::move(item));
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  return parse_dataset(in, format);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write dataset " + path.string());
  for (const auto& item : dataset) out << item_to_json(item).dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

SplitSpec SplitSpec::from_fractions(double cal, double val, double test, std::uint64_t seed) {
  SplitSpec s;
  s.fractions = Fractions{cal, val, test};
  s.seed = seed;
  return s;
}

SplitSpec SplitSpec::from_caps(std::size_t cal, std::size_t val, std::size_t test,
                               std::uint64_t seed) {
  SplitSpec s;
  s.caps = Caps{cal, val, test};
  s.seed = seed;
  return s;
}

DatasetSplits split(const Dataset& dataset, const SplitSpec& spec) {
  const std::size_t n = dataset.size();
  std::size_t n_cal = 0, n_val = 0, n_test = 0;
  if (spec.caps && spec.fractions) throw ConfigError("split spec sets both caps and fractions");
  if (spec.caps) {
    n_cal = spec.caps->calibration;
    n_val = spec.caps->validation;
    n_test = spec.caps->test;
    if (n_cal + n_val + n_test > n) {
      throw ValidationError("split caps " + std::to_string(n_cal) + "/" + std::to_string(n_val) +
                            "/" + std::to_string(n_test) + " exceed dataset size " +
                            std::to_string(n));
    }
  } else if (spec.fractions) {
    const auto& f = *spec.fractions;
    for (double x : {f.calibration, f.validation, f.test}) {
      if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("split fractions must lie in [0,1]");
    }
    if (std::abs(f.calibration + f.validation + f.test - 1.0) > 1e-9) {
      throw ValidationError("split fractions must sum to 1");
    }
    n_cal = static_cast<std::size_t>(std::llround(f.calibration * static_cast<double>(n)));
    n_val = static_cast<std::size_t>(std::llround(f.validation * static_cast<double>(n)));
    n_cal = std::min(n_cal, n);
    n_val = std::min(n_val, n - n_cal);
    n_test = n - n_cal - n_val;
  } else {
    throw ConfigError("split spec needs caps or fractions");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng(mix64(spec.seed));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }

  DatasetSplits out;
  auto take = [&](Dataset& dst, std::size_t begin, std::size_t count) {
    dst.reserve(count);
    for (std::size_t i = begin; i < begin + count; ++i) dst.push_back(dataset[order[i]]);
  };
  take(out.calibration, 0, n_cal);
  take(out.validation, n_cal, n_val);
  take(out.test, n_cal + n_val, n_test);
  return out;
}

}  // namespace udistill
