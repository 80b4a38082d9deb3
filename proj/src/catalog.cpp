#include "forge/catalog.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "forge/errors.hpp"

namespace forge {

using nlohmann::json;

FeatureCatalog FeatureCatalog::from_json(const json& doc) {
  FeatureCatalog cat;
  auto it = doc.find("features");
  if (it == doc.end() || !it->is_array()) throw SchemaError("catalog needs a 'features' array");
  for (const auto& row : *it) {
    FeatureKey key;
    try {
      key.site = parse_site(row.at("site").get<std::string>());
      key.index = row.at("index").get<std::uint32_t>();
    } catch (const json::exception& e) {
      throw SchemaError(std::string("catalog row without site/index: ") + e.what());
    }
    CatalogEntry entry;
    entry.description = row.value("description", std::string());
    entry.source = row.value("source", std::string());
    if (auto emb = row.find("embedding"); emb != row.end() && !emb->is_null()) {
      entry.embedding = emb->get<std::vector<double>>();
      for (double v : entry.embedding) {
        if (!std::isfinite(v)) throw ValueError("non-finite embedding for " + to_string(key));
      }
    }
    if (cat.contains(key)) throw SchemaError("duplicate catalog row for " + to_string(key));
    cat.insert(key, std::move(entry));
  }
  return cat;
}

json FeatureCatalog::to_json() const {
  json rows = json::array();
  for (const auto& [key, e] : entries_) {
    json row = {{"site", site_name(key.site)}, {"index", key.index}, {"description", e.description}};
    if (!e.embedding.empty()) row["embedding"] = e.embedding;
    if (!e.source.empty()) row["source"] = e.source;
    rows.push_back(std::move(row));
  }
  return {{"features", std::move(rows)}};
}

void FeatureCatalog::insert(FeatureKey key, CatalogEntry entry) {
  entries_[key] = std::move(entry);
}

const CatalogEntry& FeatureCatalog::at(FeatureKey key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw NotFoundError("no catalog row for " + to_string(key));
  return it->second;
}

const std::string& FeatureCatalog::description(FeatureKey key) const {
  static const std::string empty;
  auto it = entries_.find(key);
  return it == entries_.end() ? empty : it->second.description;
}

void FeatureCatalog::require_coverage(Site site, std::size_t num_features) const {
  for (std::uint32_t i = 0; i < num_features; ++i) {
    if (!contains({site, i})) {
      throw SchemaError("catalog has no row for " + to_string({site, i}));
    }
  }
}

FeatureCatalog load_feature_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open catalog " + path.string());
  try {
    return FeatureCatalog::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

void save_feature_catalog(const FeatureCatalog& catalog, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  out << catalog.to_json().dump() << '\n';
}

}  // namespace forge
