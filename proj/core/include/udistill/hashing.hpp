#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace udistill {

// Stable 64-bit FNV-1a. Used for cache keys and config hashes, so the value
// must never depend on the platform or the standard library.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Hashes a sequence of fields with an unambiguous separator.
std::uint64_t hash_fields(std::initializer_list<std::string_view> fields);

std::string to_hex(std::uint64_t value);

// SplitMix64 finalizer; turns structured seeds into well-mixed 64-bit values.
std::uint64_t mix64(std::uint64_t x);

// Minimal SplitMix64 generator. Satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()();
  // Uniform double in [0, 1).
  double uniform();
  // Uniform integer in [0, bound); bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::uint64_t state_;
};

// Current UTC time as ISO-8601 (seconds precision).
std::string utc_timestamp();

}  // namespace udistill
