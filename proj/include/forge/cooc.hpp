#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "forge/presence.hpp"

namespace forge {

struct CoocEdge {
  std::uint32_t a = 0;  // column index, a < b
  std::uint32_t b = 0;
  std::size_t count = 0;    // C_ab
  double jaccard = 0.0;     // C_ab / (C_aa + C_bb - C_ab)
  std::uint32_t rank = 0;   // best 1-based neighbor rank among the endpoints that kept it
};

/// Sparsified, symmetric co-occurrence graph at one granularity.
struct CoocGraph {
  Granularity granularity = Granularity::Sentence;
  FeatureColumns columns;
  std::vector<std::size_t> diag;       // C_aa per column
  std::vector<std::uint32_t> nodes;    // columns with C_aa > 0, ascending
  std::vector<CoocEdge> edges;         // sorted by (a, b)
  std::size_t top_k = 0;

  /// {"kind": "cooc", "granularity", "site", "top_k",
  ///  "nodes": [{"id", "count"}], "edges": [{"source", "target", "count", "jaccard", "rank"}]}
  nlohmann::json to_json() const;
  static CoocGraph from_json(const nlohmann::json& doc);
};

/// Off-diagonal C = X^T X: counts[a][b] for every b != a with C_ab >= 1.
std::vector<std::map<std::uint32_t, std::size_t>> cooccurrence_counts(const PresenceMatrix& x);

inline double jaccard(std::size_t c_ab, std::size_t c_aa, std::size_t c_bb) {
  const auto denom = c_aa + c_bb - c_ab;
  return denom == 0 ? 0.0 : static_cast<double>(c_ab) / static_cast<double>(denom);
}

/// Keeps each node's top_k neighbours by Jaccard (ties: higher C, then lower
/// feature id), symmetrizes by union, and drops features never present.
/// Throws ConfigError when top_k < 1.
CoocGraph build_cooc_graph(const PresenceMatrix& x, std::size_t top_k = 10);

}  // namespace forge
