#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/cooc.hpp"
#include "forge/corpus.hpp"
#include "forge/presence.hpp"

namespace forge {

inline constexpr std::size_t kNoUnit = static_cast<std::size_t>(-1);

/// Dominant chapter and subchapter of every column: the unit holding most
/// of the column's present sentences, ties to the lower unit index.
/// Columns never present get kNoUnit.
struct DominantUnits {
  std::vector<std::size_t> chapter;
  std::vector<std::size_t> subchapter;
};

DominantUnits dominant_units(const PresenceMatrix& sentence_presence, const CorpusStructure& corpus);

struct WeightedEdge {
  std::size_t a = 0;
  std::size_t b = 0;
  double weight = 0.0;
};

/// Deterministic Louvain-style modularity optimisation: nodes are visited in
/// index order and move to the neighbouring community with the largest gain
/// (ties: lower community id), then communities are aggregated and the pass
/// repeats. Community ids are renumbered by first appearance.
std::vector<std::size_t> detect_communities(std::size_t num_nodes, const std::vector<WeightedEdge>& edges);

double modularity(std::size_t num_nodes, const std::vector<WeightedEdge>& edges,
                  const std::vector<std::size_t>& community);

/// Mutual information in nats between two labelings of the same items.
double mutual_information(const std::vector<std::size_t>& x, const std::vector<std::size_t>& y);

struct LayoutPoint {
  double x = 0.0;
  double y = 0.0;
};

struct LayoutConfig {
  std::uint64_t seed = 7;
  std::size_t iterations = 300;
  double component_gap = 0.5;
};

/// Force-directed coordinates for the graph's nodes.
struct SharedLayout {
  Granularity granularity = Granularity::Sentence;
  LayoutConfig config;
  std::vector<std::uint32_t> nodes;   // graph columns
  std::vector<FeatureKey> keys;
  std::vector<LayoutPoint> points;    // aligned with nodes
  /// chapter id -> per-node weight sum_{s in chapter} X(s,v) m(s,v)
  std::vector<std::pair<std::string, std::vector<double>>> chapter_weights;

  nlohmann::json to_json() const;
};

/// Seeded Fruchterman-Reingold with a fixed iteration count, run per
/// connected component; components are packed left to right into disjoint
/// boxes and a lone node sits at the origin.
SharedLayout compute_shared_layout(const CoocGraph& graph, const LayoutConfig& config = {});

/// Fills chapter_weights from sentence scores and presence over the layout's
/// columns.
void attach_chapter_weights(SharedLayout& layout, const SentenceScores& scores, const PresenceMatrix& presence,
                            const CorpusStructure& corpus);

enum class DistanceMode : std::uint8_t { Layout, Graph };

struct MetricsConfig {
  LayoutConfig layout;
  DistanceMode distance = DistanceMode::Layout;
};

struct StructureMetricsRow {
  std::string level;
  std::optional<double> chapter_align;
  std::optional<double> subchapter_align;
  std::optional<double> same_chapter_mass;
  std::optional<double> within_between;
  std::size_t communities = 0;
  std::size_t nodes = 0;
  std::size_t edges = 0;

  bool is_null() const { return !chapter_align.has_value(); }
  nlohmann::json to_json() const;
};

/// `sentence_presence` must share the graph's columns. A graph without edges
/// yields a null row.
StructureMetricsRow compute_structure_metrics(const CoocGraph& graph, const PresenceMatrix& sentence_presence,
                                              const CorpusStructure& corpus, const MetricsConfig& config = {});

std::string metrics_csv(const std::vector<StructureMetricsRow>& rows);

/// Values reported for the original textbook corpus. Kept for display only;
/// they cannot be reproduced without that corpus.
struct ReferenceRow {
  const char* level;
  double chapter_align;
  double subchapter_align;
  double same_chapter_mass;
  double within_between;
};

inline constexpr ReferenceRow kReferenceRows[] = {
    {"sentence", 2.005, 0.849, 0.870, 0.828},
    {"paragraph", 2.190, 0.836, 0.811, 0.781},
    {"subchapter", 1.109, 0.226, 0.575, 0.849},
    {"chapter", 0.995, 0.247, 0.230, 0.983},
};

nlohmann::json reference_metadata();

}  // namespace forge
