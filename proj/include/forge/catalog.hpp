#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "forge/feature_key.hpp"

namespace forge {

struct CatalogEntry {
  std::string description;             // may be empty
  std::vector<double> embedding;       // empty when not provided
  std::string source;                  // external provenance tag
};

/// Per-feature descriptions and description embeddings, ingested as-is.
///
/// JSON: { "features": [ {"site": "src", "index": 3, "description": "...",
///                         "embedding": [..], "source": "..."} ] }
class FeatureCatalog {
 public:
  static FeatureCatalog from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  void insert(FeatureKey key, CatalogEntry entry);
  bool contains(FeatureKey key) const { return entries_.count(key) != 0; }
  const CatalogEntry& at(FeatureKey key) const;
  /// Empty string when the feature has no row.
  const std::string& description(FeatureKey key) const;

  /// Throws SchemaError unless every index below `num_features` on `site`
  /// has a row.
  void require_coverage(Site site, std::size_t num_features) const;

  const std::map<FeatureKey, CatalogEntry>& entries() const { return entries_; }

 private:
  std::map<FeatureKey, CatalogEntry> entries_;
};

FeatureCatalog load_feature_catalog(const std::filesystem::path& path);
void save_feature_catalog(const FeatureCatalog& catalog, const std::filesystem::path& path);

}  // namespace forge
