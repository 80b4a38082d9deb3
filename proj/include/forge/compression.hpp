#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/hierarchy.hpp"
#include "forge/mechanism.hpp"

namespace forge {

/// One directed leaf-level payload edge.
struct LeafEdge {
  FeatureKey source;
  FeatureKey target;
  double weight = 0.0;
  std::uint32_t strongest_latent = 0;
};

std::vector<LeafEdge> payload_edges(const DynamicMechanismGraph& graph);

/// Tree nodes that may not collapse: every edge's lowest common ancestor and
/// all of its ancestors. Throws NotFoundError when an endpoint is not a leaf.
std::vector<bool> compute_blocked_set(std::span<const LeafEdge> edges, const AbstractionTree& tree);

struct CompressConfig {
  /// Maximum descendant-leaf count of a collapsed node.
  std::size_t cap = 64;
  /// Node ids that must stay expanded (drill-down).
  std::vector<std::string> exclude;
};

struct DisplayNode {
  std::size_t tree_node = 0;
  std::string id;
  bool supernode = false;
  std::string label;
  std::vector<FeatureKey> members;  // active leaves covered
  std::size_t descendant_leaves = 0;
};

struct SuperEdge {
  std::size_t source = 0;  // display node index
  std::size_t target = 0;
  double weight = 0.0;
  std::vector<std::size_t> contributing;  // payload edge indices, ascending
};

struct CompressedGraph {
  std::vector<DisplayNode> nodes;  // ordered by first tree preorder position
  std::vector<SuperEdge> edges;    // weight descending, then (source, target)
  std::vector<LeafEdge> payload;
  std::vector<std::string> blocked;  // blocked internal node ids
  CompressConfig config;
  double payload_weight = 0.0;
  double displayed_weight = 0.0;
  nlohmann::json context = nlohmann::json::object();  // unit, modes, captions

  nlohmann::json to_json() const;
};

/// Mixed cover: the highest eligible node on each root-to-leaf path, else the
/// active leaf itself. Eligible = at least two active leaves, not blocked,
/// at most `cap` descendant leaves, not excluded. Leaf edges are projected
/// onto the cover and summed.
CompressedGraph compress_graph(std::span<const LeafEdge> edges, const AbstractionTree& tree,
                               const std::vector<bool>& blocked, const CompressConfig& config = {});

/// Blocks, compresses, and carries the payload's unit, modes and captions.
CompressedGraph compress_mechanism(const DynamicMechanismGraph& graph, const AbstractionTree& tree,
                                   const CompressConfig& config = {});

}  // namespace forge
