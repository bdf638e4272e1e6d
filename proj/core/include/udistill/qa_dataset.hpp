#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace udistill {

struct Choice {
  std::string letter;
  std::string text;

  bool operator==(const Choice&) const = default;
};

// One question. Multiple-choice when `choices` is nonempty (gold is a
// letter), open-answer otherwise (gold is the canonical answer string).
struct QaItem {
  std::string id;
  std::string question;
  std::vector<Choice> choices;
  std::string gold;
  std::optional<std::string> subject;

  bool is_mcq() const noexcept { return !choices.empty(); }
  bool operator==(const QaItem&) const = default;
};

enum class DatasetFormat { mcq, open };

DatasetFormat parse_dataset_format(std::string_view name);
std::string_view to_string(DatasetFormat format);

using Dataset = std::vector<QaItem>;

// Letters A-J are the accepted choice labels.
bool is_choice_letter(std::string_view letter);

// Throws ValidationError when `item` breaks a QaItem invariant for `format`.
void validate_item(const QaItem& item, DatasetFormat format);

QaItem item_from_json(const nlohmann::json& record);
nlohmann::json item_to_json(const QaItem& item);

// Parses line-delimited records. Blank lines are skipped; a malformed record
// throws ParseError carrying its line number, a duplicate id or an invalid
// item throws ValidationError.
Dataset parse_dataset(std::istream& in, DatasetFormat format);
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

// Either fractions (summing to 1) or explicit per-split caps.
struct SplitSpec {
  struct Fractions {
    double calibration = 1.0;
    double validation = 0.0;
    double test = 0.0;
  };
  struct Caps {
    std::size_t calibration = 0;
    std::size_t validation = 0;
    std::size_t test = 0;
  };

  std::optional<Fractions> fractions;
  std::optional<Caps> caps;
  std::uint64_t seed = 0;

  static SplitSpec from_fractions(double cal, double val, double test, std::uint64_t seed);
  static SplitSpec from_caps(std::size_t cal, std::size_t val, std::size_t test, std::uint64_t seed);
};

struct DatasetSplits {
  Dataset calibration;
  Dataset validation;
  Dataset test;
};

// Seeded shuffle followed by prefix slicing: calibration, then validation,
// then test. Membership depends only on (dataset order, seed).
DatasetSplits split(const Dataset& dataset, const SplitSpec& spec);

}  // namespace udistill
