#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/activation_store.hpp"
#include "forge/catalog.hpp"
#include "forge/corpus.hpp"
#include "forge/feature_key.hpp"
#include "forge/presence.hpp"
#include "forge/sparse_stack.hpp"

namespace forge {

/// Pipeline stage names, in run order.
inline constexpr const char* kStageNames[] = {"ingest", "filter", "cooc", "hierarchy",
                                              "mech",   "relate", "metrics"};

/// Activation store file for a site: "src", "tgt" or "latent".
inline constexpr const char* kLatentSite = "latent";

/// 64-bit FNV-1a, hex encoded. Used for content hashes in manifests.
std::string fnv1a_hex(std::string_view bytes);
std::string file_hash(const std::filesystem::path& path);

/// Writes `doc.dump(2)` plus a newline. Every JSON artifact and every service
/// response goes through this so bytes agree between the two paths.
std::string json_text(const nlohmann::json& doc);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// On-disk pipeline state.
///
///   manifest.json                      stage records (config hash, outputs)
///   corpus.json  catalog.json  stack/
///   activations/{src,tgt,latent}.act
///   contrast/<name>/corpus.json, contrast/<name>/{src,tgt}.act
///   universe.json  thresholds/{src,tgt}.json
///   graphs/cooc_<granularity>.json
///   tree.json
///   mech/<unit>.json  mech/<unit>.compressed.json
///   labels/<graph>.json
///   metrics.csv  metrics.json  layout.json
class Workspace {
 public:
  explicit Workspace(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path(const std::string& relative) const { return root_ / relative; }

  std::filesystem::path corpus_path() const { return path("corpus.json"); }
  std::filesystem::path catalog_path() const { return path("catalog.json"); }
  std::filesystem::path stack_dir() const { return path("stack"); }
  std::filesystem::path activation_path(std::string_view site) const;
  std::filesystem::path contrast_dir(std::string_view name) const;
  std::filesystem::path universe_path() const { return path("universe.json"); }
  std::filesystem::path thresholds_path(Site site) const;
  std::filesystem::path cooc_path(Granularity g) const;
  std::filesystem::path tree_path() const { return path("tree.json"); }
  std::filesystem::path mech_path(std::string_view unit) const;
  std::filesystem::path compressed_path(std::string_view unit) const;
  std::filesystem::path labels_path(std::string_view graph) const;
  std::filesystem::path metrics_csv_path() const { return path("metrics.csv"); }
  std::filesystem::path metrics_json_path() const { return path("metrics.json"); }
  std::filesystem::path layout_path() const { return path("layout.json"); }

  /// Contrast corpus names, sorted.
  std::vector<std::string> contrasts() const;

  nlohmann::json manifest() const;
  /// Records a finished stage in the manifest.
  void record_stage(const std::string& stage, nlohmann::json record);

  /// Whether a stage's outputs are present on disk.
  bool has_stage(const std::string& stage) const;
  /// Throws IncompleteWorkspaceError naming every absent stage.
  void require(const std::vector<std::string>& stages) const;

  CorpusStructure load_corpus() const;
  FeatureCatalog load_catalog() const;
  SparseStack load_stack() const;
  TokenActivationStore load_store(std::string_view site) const;
  CorpusStructure load_contrast_corpus(const std::string& name) const;
  TokenActivationStore load_contrast_store(const std::string& name, Site site) const;
  ThresholdVector load_thresholds(Site site) const;

 private:
  std::filesystem::path root_;
};

}  // namespace forge
