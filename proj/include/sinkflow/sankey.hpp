#pragma once

#include <string>
#include <vector>

#include "sinkflow/types.hpp"

#include <json.hpp>

namespace sinkflow {

// Renderer-agnostic flow document: a column of faction masses per step and a
// ribbon bundle per adjacent pair. `given_steps` marks how many leading
// columns are observed history; anything after it is model output.
struct SankeyDocument {
  int k = 0;
  std::vector<std::string> labels;             // one per faction
  std::vector<std::vector<double>> marginals;  // n columns
  std::vector<Matrix> flows;                   // n - 1 ribbon bundles
  int given_steps = 0;                         // in [1, n]

  // Shape checks plus the mass constraint: flows[t] row i must sum to
  // marginals[t][i] within 1e-9.
  void validate() const;
  nlohmann::json to_json() const;
  static SankeyDocument from_json(const nlohmann::json& j);
};

// Default labels "F0".."F{k-1}".
std::vector<std::string> default_faction_labels(int k);

// Static SVG rendering of the document. The effective run configuration is
// echoed into a leading XML comment so the artifact is self-describing.
std::string sankey_svg(const SankeyDocument& doc,
                       const nlohmann::json& config_echo = nullptr);

}  // namespace sinkflow
