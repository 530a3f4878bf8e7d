#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lenscam/nn.hpp"

namespace lenscam {

// Inputs of the closed-form cost evaluation. A single-entry embed_dims list
// evaluates one block with L = embed_dims[0]; longer lists sum per-stage
// evaluations under the stacked-stage symbol mapping (see arch_cost).
struct ArchInput {
  int H = 160, W = 160, C = 3;
  int P = 4;
  int m = 6;
  BlockKind kind = BlockKind::gmlp;
  std::vector<int> embed_dims = {512};
  int precision = 4;              // bytes per value (4 or 2)
  double device_tflops = 45e12;

  void validate() const;
};

struct StageCost {
  std::string label;
  std::uint64_t params = 0;
  std::uint64_t mults = 0;
};

struct CostEstimate {
  std::uint64_t params = 0;
  std::uint64_t mults = 0;
  double est_seconds = 0.0;
  double est_bytes = 0.0;  // (params + 2*mults) * precision
  std::vector<StageCost> stages;
};

std::uint64_t count_params(const ArchInput& arch);
std::uint64_t count_mults(const ArchInput& arch);
CostEstimate estimate(const ArchInput& arch);

// Stacked-stage symbol mapping, printed in every report:
//   stage 1            H,W = image dims, C = image channels, P = patch,
//                      L = embed_dims[0]
//   stage k >= 2       H,W = stage-1 token grid (H/P, W/P), P = 1,
//                      C = embed_dims[k-2], L = embed_dims[k-1]
std::string stacked_mapping_note();

// Builds the full comparison table from a config document (the bundled
// data/table3.json): one output row per config row with computed values,
// reported values, ratio columns, and feasibility flags (memory > 15 GB or
// time > 1 s). Returns a JSON report; the text/csv renderers format it.
nlohmann::json table3_report(const nlohmann::json& config);
std::string table3_text(const nlohmann::json& report);
std::string table3_csv(const nlohmann::json& report);

}  // namespace lenscam
