#include "forge/workspace.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "forge/errors.hpp"

namespace forge {

namespace fs = std::filesystem;

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return fnv1a_hex(buf.str());
}

std::string json_text(const nlohmann::json& doc) { return doc.dump(2) + "\n"; }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ForgeError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const nlohmann::json& doc) { write_text(path, json_text(doc)); }

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

Workspace::Workspace(fs::path root) : root_(std::move(root)) {}

fs::path Workspace::activation_path(std::string_view site) const {
  return root_ / "activations" / (std::string(site) + ".act");
}

fs::path Workspace::contrast_dir(std::string_view name) const { return root_ / "contrast" / std::string(name); }

fs::path Workspace::thresholds_path(Site site) const {
  return root_ / "thresholds" / (std::string(site_name(site)) + ".json");
}

fs::path Workspace::cooc_path(Granularity g) const {
  return root_ / "graphs" / ("cooc_" + std::string(granularity_name(g)) + ".json");
}

fs::path Workspace::mech_path(std::string_view unit) const { return root_ / "mech" / (std::string(unit) + ".json"); }

fs::path Workspace::compressed_path(std::string_view unit) const {
  return root_ / "mech" / (std::string(unit) + ".compressed.json");
}

fs::path Workspace::labels_path(std::string_view graph) const {
  std::string name(graph);
  std::replace(name.begin(), name.end(), ':', '_');
  return root_ / "labels" / (name + ".json");
}

std::vector<std::string> Workspace::contrasts() const {
  std::vector<std::string> names;
  const auto dir = root_ / "contrast";
  if (!fs::is_directory(dir)) return names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

nlohmann::json Workspace::manifest() const {
  const auto p = path("manifest.json");
  if (!fs::exists(p)) return {{"kind", "workspace"}, {"version", 1}, {"stages", nlohmann::json::object()}};
  return read_json(p);
}

void Workspace::record_stage(const std::string& stage, nlohmann::json record) {
  auto m = manifest();
  m["stages"][stage] = std::move(record);
  write_json(path("manifest.json"), m);
}

bool Workspace::has_stage(const std::string& stage) const {
  if (stage == "ingest") {
    if (!fs::exists(corpus_path()) || !fs::exists(catalog_path())) return false;
    for (const char* f : kStackFiles) {
      if (!fs::exists(stack_dir() / f)) return false;
    }
    for (const char* site : {"src", "tgt", kLatentSite}) {
      if (!fs::exists(activation_path(site))) return false;
    }
    return true;
  }
  if (stage == "filter") {
    return fs::exists(universe_path()) && fs::exists(thresholds_path(Site::Source)) &&
           fs::exists(thresholds_path(Site::Target));
  }
  if (stage == "cooc") return fs::exists(cooc_path(Granularity::Sentence));
  if (stage == "hierarchy") return fs::exists(tree_path());
  if (stage == "metrics") return fs::exists(metrics_json_path()) && fs::exists(layout_path());
  if (stage == "mech") return fs::is_directory(path("mech")) && !fs::is_empty(path("mech"));
  if (stage == "relate") return fs::is_directory(path("labels")) && !fs::is_empty(path("labels"));
  throw NotFoundError("unknown stage '" + stage + "'");
}

void Workspace::require(const std::vector<std::string>& stages) const {
  std::vector<std::string> missing;
  for (const auto& s : stages) {
    if (!has_stage(s)) missing.push_back(s);
  }
  if (!missing.empty()) throw IncompleteWorkspaceError(missing);
}

CorpusStructure Workspace::load_corpus() const { return load_corpus_structure(corpus_path()); }
FeatureCatalog Workspace::load_catalog() const { return load_feature_catalog(catalog_path()); }
SparseStack Workspace::load_stack() const { return load_sparse_stack(stack_dir()); }

TokenActivationStore Workspace::load_store(std::string_view site) const {
  return load_activation_store(activation_path(site), std::string(site));
}

CorpusStructure Workspace::load_contrast_corpus(const std::string& name) const {
  return load_corpus_structure(contrast_dir(name) / "corpus.json");
}

TokenActivationStore Workspace::load_contrast_store(const std::string& name, Site site) const {
  const std::string s(site_name(site));
  return load_activation_store(contrast_dir(name) / (s + ".act"), s);
}

ThresholdVector Workspace::load_thresholds(Site site) const {
  return ThresholdVector::from_json(read_json(thresholds_path(site)));
}

}  // namespace forge
