#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "udistill/model_client.hpp"

namespace udistill {

// The N draws collected for one item. `generations[i]` came from draw
// `draw_indices[i]`; failed draws are absent from both.
struct SampleSet {
  std::string item_id;
  std::size_t n_requested = 0;
  std::vector<Generation> generations;
  std::vector<std::uint64_t> draw_indices;
  GenParams params;
  std::string created_at;
  std::string backend_fingerprint;

  std::size_t n_failed = 0;
  std::size_t n_new_requests = 0;
  bool failed = false;  // more than half of the draws failed
  std::vector<std::string> errors;

  std::size_t n_effective() const noexcept { return generations.size(); }
};

}  // namespace udistill
