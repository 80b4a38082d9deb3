#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "forge/clients.hpp"
#include "forge/compression.hpp"
#include "forge/config.hpp"
#include "forge/cooc.hpp"
#include "forge/filter.hpp"
#include "forge/hierarchy.hpp"
#include "forge/mechanism.hpp"
#include "forge/metrics.hpp"
#include "forge/relate.hpp"
#include "forge/workspace.hpp"

namespace forge {

/// "stub" or "http". `role` picks the stub: adjudicator, summarizer or relator.
std::unique_ptr<TextClient> make_client(const std::string& kind, const std::string& role,
                                        const std::string& url = {}, const std::string& path = {});

struct ContrastSource {
  std::string name;
  std::filesystem::path corpus;
  std::map<std::string, std::filesystem::path> activations;  // "src" / "tgt"
};

struct IngestRequest {
  std::map<std::string, std::filesystem::path> activations;  // "src", "tgt", "latent"
  std::filesystem::path corpus;
  std::filesystem::path stack;
  std::filesystem::path catalog;
  std::vector<ContrastSource> contrasts;
};

/// Loads and cross-validates every artifact, then writes canonical copies
/// into the workspace. Throws the loader's error on the first violation and
/// ShapeError when stores, stack and corpus disagree on sizes.
void run_ingest(const IngestRequest& request, Workspace& ws);

/// Also writes the per-site thresholds used by later stages.
RetainedUniverse run_filter_stage(Workspace& ws, const FilterConfig& config, TextClient& adjudicator);

/// Sentence scores and presence of the retained features of one site.
struct SitePresence {
  SentenceScores scores;
  PresenceMatrix sentence;
};
SitePresence site_presence(const Workspace& ws, const CorpusStructure& corpus, const RetainedUniverse& universe,
                           Site site);

CoocGraph run_cooc_stage(Workspace& ws, Granularity g, std::size_t top_k, Site site = Site::Source);

AbstractionTree run_hierarchy_stage(Workspace& ws, const GeometryConfig& geometry, const TreeConfig& tree,
                                    TextClient& summarizer);

/// Everything needed to build dynamic graphs, owned in one place.
struct MechContext {
  CorpusStructure corpus;
  TokenActivationStore source;
  TokenActivationStore target;
  TokenActivationStore latent;
  SupportMatrices supports;
  ThresholdVector source_thresholds;
  ThresholdVector target_thresholds;
  std::vector<std::uint32_t> source_universe;
  std::vector<std::uint32_t> target_universe;

  MechInputs inputs() const;
};
MechContext load_mech_context(const Workspace& ws);

/// Dynamic graph with captions of its strongest latents.
DynamicMechanismGraph build_captioned_graph(const MechContext& ctx, const SparseStack& stack,
                                            const FeatureCatalog& catalog, std::string_view unit,
                                            const MechConfig& mech, const CaptionConfig& captions);

DynamicMechanismGraph run_mech_stage(Workspace& ws, std::string_view unit, const MechConfig& mech,
                                     const CaptionConfig& captions);

LabelSet run_relate_cooc(Workspace& ws, const CoocGraph& graph, TextClient& relator, const RelateConfig& config);
LabelSet run_relate_mech(Workspace& ws, const DynamicMechanismGraph& graph, TextClient& relator,
                         const RelateConfig& config);

struct MetricsOutput {
  std::vector<StructureMetricsRow> rows;
  SharedLayout layout;
};
/// Needs the co-occurrence graph of every requested level. Writes
/// metrics.csv, metrics.json and layout.json.
MetricsOutput run_metrics_stage(Workspace& ws, const std::vector<Granularity>& levels, const MetricsConfig& config);

}  // namespace forge
