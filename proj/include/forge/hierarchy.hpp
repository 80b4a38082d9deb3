#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "forge/catalog.hpp"
#include "forge/clients.hpp"
#include "forge/feature_key.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// Embedding geometry
// ---------------------------------------------------------------------------

struct GeometryConfig {
  std::size_t pca_dim = 50;
  std::size_t k = 15;
};

/// Row-wise projection onto the top principal axes of the centered data.
/// Each axis is sign-flipped so its largest-magnitude loading is positive.
/// `dim` is clamped to min(dim, rows - 1, cols) and to at least 1.
Eigen::MatrixXd pca_project(const Eigen::MatrixXd& data, std::size_t dim);

/// k nearest neighbours of every row by Euclidean distance, ties broken by
/// lower row index. k is clamped to rows - 1.
std::vector<std::vector<std::uint32_t>> knn_lists(const Eigen::MatrixXd& points, std::size_t k);

/// Symmetric adjacency keeping a-b iff each is in the other's kNN list.
std::vector<std::vector<std::uint32_t>> mutual_knn(const Eigen::MatrixXd& points, std::size_t k);

struct NeighborGeometry {
  std::vector<FeatureKey> features;  // row order, ascending
  Eigen::MatrixXd coords;            // projected, one row per feature
  std::size_t pca_dim = 0;           // after clamping
  std::size_t k = 0;
  std::vector<std::vector<std::uint32_t>> adjacency;  // mutual kNN, sorted
};

/// Throws NotFoundError when a feature has no catalog embedding and
/// ShapeError when embedding lengths disagree.
NeighborGeometry build_neighbor_geometry(const FeatureCatalog& catalog, std::span<const FeatureKey> universe,
                                         const GeometryConfig& config = {});

// ---------------------------------------------------------------------------
// Abstraction tree
// ---------------------------------------------------------------------------

struct TreeConfig {
  std::size_t max_leaf_group = 8;
  std::size_t min_branching = 2;
  std::size_t max_branching = 12;
  double diffuse_ratio = 1.5;  // child mean radius vs mean seed spacing
};

/// Branching factor for a node of n points: clamp(ceil(cbrt(n)), min, max).
std::size_t branching_factor(std::size_t n, const TreeConfig& config = {});

struct Grounding {
  std::vector<std::string> representatives;     // child ids nearest the centroid
  std::vector<std::string> extremes;            // farthest pair of children
  std::vector<FeatureKey> boundary_negatives;   // nearest non-descendant leaves
  std::vector<std::string> leaf_anchors;        // descendant leaf descriptions
};

struct TreeNode {
  std::string id;
  std::optional<std::size_t> parent;
  std::vector<std::size_t> children;
  std::optional<FeatureKey> feature;   // set on leaves
  std::vector<FeatureKey> leaves;      // descendant leaves, ascending
  std::size_t depth = 0;
  std::string label;
  bool label_fallback = false;
  Grounding grounding;

  bool is_leaf() const { return feature.has_value(); }
};

/// Recursive grouping of the retained universe. Node 0 is the root; leaf ids
/// are feature keys ("src:12"), internal ids are "n<index>".
class AbstractionTree {
 public:
  AbstractionTree() = default;
  explicit AbstractionTree(std::vector<TreeNode> nodes);

  std::size_t size() const { return nodes_.size(); }
  std::size_t root() const { return 0; }
  const TreeNode& node(std::size_t i) const { return nodes_[i]; }
  TreeNode& mutable_node(std::size_t i) { return nodes_[i]; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  /// Throws NotFoundError.
  std::size_t index_of(std::string_view id) const;
  std::optional<std::size_t> find(std::string_view id) const;
  std::optional<std::size_t> leaf_of(FeatureKey key) const;
  std::vector<FeatureKey> leaves() const;

  /// Ancestors of i from its parent up to the root.
  std::vector<std::size_t> ancestors(std::size_t i) const;
  bool is_ancestor(std::size_t ancestor, std::size_t node) const;
  std::size_t lca(std::size_t a, std::size_t b) const;

  /// Union of descendant leaves of the named nodes, ascending. Throws
  /// NotFoundError on an unknown id.
  std::vector<FeatureKey> slice(std::span<const std::string> ids) const;

  nlohmann::json to_json() const;
  static AbstractionTree from_json(const nlohmann::json& doc);

  nlohmann::json metadata = nlohmann::json::object();

 private:
  std::vector<TreeNode> nodes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<FeatureKey, std::size_t> leaf_index_;
};

/// Unsummarized tree: farthest-first seeding, connectivity-preferring
/// assignment, one reseed of incoherent children, recursion down to
/// max_leaf_group.
AbstractionTree grow_abstraction_tree(const NeighborGeometry& geometry, const TreeConfig& config = {});

/// Fills grounding bundles and labels bottom-up. Leaves take their catalog
/// description. A client failure or empty label yields "group:<id>" with
/// label_fallback set.
void summarize_tree(AbstractionTree& tree, const NeighborGeometry& geometry, const FeatureCatalog& catalog,
                    TextClient& summarizer);

/// Grounding bundle of one internal node.
Grounding ground_node(const AbstractionTree& tree, std::size_t node, const NeighborGeometry& geometry,
                      const FeatureCatalog& catalog);

nlohmann::json summary_request(const AbstractionTree& tree, std::size_t node);

/// Joins the two most frequent content words of the leaf anchors.
class StubSummarizer final : public TextClient {
 public:
  std::string id() const override { return "stub-summarizer"; }
  std::string send(const nlohmann::json& request) override;
};

}  // namespace forge
