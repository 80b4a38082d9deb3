#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/catalog.hpp"
#include "forge/hierarchy.hpp"
#include "forge/mechanism.hpp"
#include "forge/pipeline.hpp"

namespace forge {

inline constexpr char kBundleMagic[8] = "SAEBND1";
inline constexpr int kBundleVersion = 1;

/// Everything the graph service reads, in one file: "SAEBND1", the 16 hex
/// digit FNV-1a digest of the payload, then the payload as a CBOR document. Artifact documents are kept verbatim so responses are the
/// same bytes the CLI wrote; the mechanism inputs are kept typed so dynamic
/// graphs can be rebuilt on demand.
///
/// Stores and supports are restricted to the retained universe, which is all
/// a restricted dynamic graph can read. Captions are precomputed for every
/// latent in both caption modes.
struct GraphBundle {
  nlohmann::json manifest;
  nlohmann::json universe;
  std::map<std::string, nlohmann::json> graphs;  // granularity -> cooc document
  nlohmann::json tree;
  std::map<std::string, nlohmann::json> labels;  // graph name -> label set
  std::map<std::string, nlohmann::json> mech;    // unit -> stored dynamic payload
  nlohmann::json layout;
  nlohmann::json metrics;

  FeatureCatalog catalog;  // descriptions only
  AbstractionTree tree_index;
  MechContext mechanism;
  std::map<CaptionMode, std::map<std::uint32_t, LatentCaption>> captions;

  nlohmann::json to_json() const;
  static GraphBundle from_json(const nlohmann::json& doc);
};

/// Every cross-reference that fails to resolve, as readable messages.
std::vector<std::string> dangling_references(const GraphBundle& bundle);

/// Throws IncompleteWorkspaceError when a required stage is missing and
/// SchemaError when the assembled bundle has dangling references.
GraphBundle build_graph_bundle(const Workspace& ws);
void save_graph_bundle(const GraphBundle& bundle, const std::filesystem::path& path);
GraphBundle load_graph_bundle(const std::filesystem::path& path);

/// build + save.
GraphBundle export_graph_bundle(const Workspace& ws, const std::filesystem::path& path);

/// Stages a bundle cannot be built without.
std::vector<std::string> bundle_required_stages();

}  // namespace forge
