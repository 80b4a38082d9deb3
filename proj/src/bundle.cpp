#include "forge/bundle.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "forge/errors.hpp"

namespace forge {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::vector<std::string> bundle_required_stages() { return {"ingest", "filter", "cooc", "hierarchy", "metrics"}; }

namespace {

json store_json(const TokenActivationStore& store, const std::vector<std::uint32_t>* keep) {
  std::vector<std::uint32_t> tokens, features;
  std::vector<float> values;
  for (const auto& t : store.entries()) {
    if (keep && !std::binary_search(keep->begin(), keep->end(), t.feature)) continue;
    tokens.push_back(t.token);
    features.push_back(t.feature);
    values.push_back(t.value);
  }
  return {{"site", store.site_id()},         {"num_tokens", store.num_tokens()},
          {"num_features", store.num_features()}, {"tokens", tokens},
          {"features", features},           {"values", values},
          {"mask", store.special_token_mask()}};
}

TokenActivationStore store_from_json(const json& j) {
  const auto tokens = j.at("tokens").get<std::vector<std::uint32_t>>();
  const auto features = j.at("features").get<std::vector<std::uint32_t>>();
  const auto values = j.at("values").get<std::vector<float>>();
  if (tokens.size() != features.size() || tokens.size() != values.size()) {
    throw SchemaError("bundle store arrays differ in length");
  }
  std::vector<Triplet> entries(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) entries[i] = {tokens[i], features[i], values[i]};
  return TokenActivationStore(j.at("site").get<std::string>(), j.at("num_tokens").get<std::uint64_t>(),
                              j.at("num_features").get<std::uint64_t>(), std::move(entries),
                              j.at("mask").get<std::vector<std::uint8_t>>());
}

json captions_json(const std::map<std::uint32_t, LatentCaption>& caps) {
  json out = json::array();
  for (const auto& [k, c] : caps) out.push_back(c.to_json());
  return out;
}

FeatureCatalog descriptions_only(const FeatureCatalog& full) {
  FeatureCatalog out;
  for (const auto& [key, e] : full.entries()) out.insert(key, CatalogEntry{e.description, {}, e.source});
  return out;
}

}  // namespace

json GraphBundle::to_json() const {
  json caps = json::object();
  for (const auto& [mode, m] : captions) caps[std::string(caption_mode_name(mode))] = captions_json(m);
  const auto& mc = mechanism;
  return {{"kind", "bundle"},
          {"version", kBundleVersion},
          {"manifest", manifest},
          {"universe", universe},
          {"graphs", graphs},
          {"tree", tree},
          {"labels", labels},
          {"mech", mech},
          {"layout", layout},
          {"metrics", metrics},
          {"catalog", catalog.to_json()},
          {"corpus", mc.corpus.to_json()},
          {"mechanism",
           {{"supports", mc.supports.to_json(&mc.source_universe, &mc.target_universe)},
            {"source_universe", mc.source_universe},
            {"target_universe", mc.target_universe},
            {"source_thresholds", mc.source_thresholds.to_json()},
            {"target_thresholds", mc.target_thresholds.to_json()},
            {"stores",
             {{"src", store_json(mc.source, &mc.source_universe)},
              {"tgt", store_json(mc.target, &mc.target_universe)},
              {std::string(kLatentSite), store_json(mc.latent, nullptr)}}},
            {"captions", caps}}}};
}

GraphBundle GraphBundle::from_json(const json& doc) {
  if (doc.value("kind", std::string()) != "bundle") throw SchemaError("not a graph bundle");
  if (doc.value("version", 0) != kBundleVersion) throw SchemaError("unsupported bundle version");
  GraphBundle b;
  b.manifest = doc.at("manifest");
  b.universe = doc.at("universe");
  b.graphs = doc.at("graphs").get<std::map<std::string, json>>();
  b.tree = doc.at("tree");
  b.labels = doc.at("labels").get<std::map<std::string, json>>();
  b.mech = doc.at("mech").get<std::map<std::string, json>>();
  b.layout = doc.at("layout");
  b.metrics = doc.at("metrics");
  b.catalog = FeatureCatalog::from_json(doc.at("catalog"));
  b.tree_index = AbstractionTree::from_json(b.tree);

  const auto& m = doc.at("mechanism");
  auto& mc = b.mechanism;
  mc.corpus = CorpusStructure::from_json(doc.at("corpus"));
  mc.supports = SupportMatrices::from_json(m.at("supports"));
  mc.source_universe = m.at("source_universe").get<std::vector<std::uint32_t>>();
  mc.target_universe = m.at("target_universe").get<std::vector<std::uint32_t>>();
  mc.source_thresholds = ThresholdVector::from_json(m.at("source_thresholds"));
  mc.target_thresholds = ThresholdVector::from_json(m.at("target_thresholds"));
  const auto& stores = m.at("stores");
  mc.source = store_from_json(stores.at("src"));
  mc.target = store_from_json(stores.at("tgt"));
  mc.latent = store_from_json(stores.at(kLatentSite));
  for (const auto& [name, arr] : m.at("captions").items()) {
    auto& dst = b.captions[parse_caption_mode(name)];
    for (const auto& c : arr) {
      auto cap = LatentCaption::from_json(c);
      dst.emplace(cap.latent, std::move(cap));
    }
  }
  return b;
}

std::vector<std::string> dangling_references(const GraphBundle& b) {
  std::vector<std::string> out;
  const auto& corpus = b.mechanism.corpus;
  std::set<std::string> retained;
  for (const auto& k : b.universe.at("retained")) retained.insert(k.get<std::string>());

  auto feature_known = [&](const std::string& id) {
    try {
      return b.catalog.contains(parse_feature_key(id));
    } catch (const ForgeError&) {
      return false;
    }
  };
  auto need_retained = [&](const std::string& id, const std::string& where) {
    if (!retained.count(id)) out.push_back(where + ": feature " + id + " is not in the retained universe");
  };
  auto need_sentence = [&](const std::string& id, const std::string& where) {
    if (!corpus.find_sentence(id)) out.push_back(where + ": sentence " + id + " does not resolve");
  };

  for (const auto& id : retained) {
    if (!feature_known(id)) out.push_back("universe: feature " + id + " has no catalog row");
  }
  for (const auto& r : b.universe.at("records")) {
    const auto& packet = r.at("packet");
    for (const auto& s : packet.value("target_evidence", json::array())) {
      need_sentence(s.at("sentence_id").get<std::string>(), "universe packet " + r.at("feature").get<std::string>());
    }
  }

  for (const auto& [name, g] : b.graphs) {
    for (const auto& n : g.at("nodes")) need_retained(n.at("id").get<std::string>(), "graph " + name);
    for (const auto& e : g.at("edges")) {
      need_retained(e.at("source").get<std::string>(), "graph " + name);
      need_retained(e.at("target").get<std::string>(), "graph " + name);
    }
  }

  std::set<std::string> leaves;
  for (const auto& k : b.tree_index.leaves()) leaves.insert(to_string(k));
  for (const auto& id : leaves) need_retained(id, "tree");
  for (const auto& id : retained) {
    if (!leaves.count(id)) out.push_back("tree: retained feature " + id + " has no leaf");
  }
  for (const auto& n : b.tree_index.nodes()) {
    for (const auto& r : n.grounding.representatives) {
      if (!b.tree_index.find(r)) out.push_back("tree: node " + n.id + " cites unknown node " + r);
    }
    for (const auto& r : n.grounding.extremes) {
      if (!b.tree_index.find(r)) out.push_back("tree: node " + n.id + " cites unknown node " + r);
    }
    for (const auto& k : n.grounding.boundary_negatives) need_retained(to_string(k), "tree node " + n.id);
  }

  for (const auto& [name, set] : b.labels) {
    std::set<std::string> packet_ids;
    for (const auto& p : set.at("packets")) {
      packet_ids.insert(p.at("packet_id").get<std::string>());
      for (const char* field : {"joint", "source_only", "target_only"}) {
        for (const auto& l : p.at(field)) need_sentence(l.at("sentence_id").get<std::string>(), "labels " + name);
      }
    }
    for (const auto& l : set.at("labels")) {
      if (!packet_ids.count(l.at("packet_id").get<std::string>())) {
        out.push_back("labels " + name + ": label cites unknown packet " + l.at("packet_id").get<std::string>());
      }
      need_retained(l.at("source").get<std::string>(), "labels " + name);
      need_retained(l.at("target").get<std::string>(), "labels " + name);
    }
  }

  for (const auto& [unit, g] : b.mech) {
    if (!corpus.find_unit(unit)) out.push_back("mech: unit " + unit + " does not resolve");
    const bool restricted = g.value("restricted", true);
    for (const auto& e : g.at("edges")) {
      for (const char* end : {"source", "target"}) {
        const auto id = e.at(end).get<std::string>();
        if (restricted) {
          need_retained(id, "mech " + unit);
        } else if (!feature_known(id)) {
          out.push_back("mech " + unit + ": feature " + id + " has no catalog row");
        }
      }
    }
    for (const auto& c : g.at("captions")) {
      for (const auto& t : c.at("sources")) {
        if (!b.catalog.contains({Site::Source, t.at("feature").get<std::uint32_t>()})) {
          out.push_back("mech " + unit + ": caption source feature has no catalog row");
        }
      }
      for (const auto& t : c.at("targets")) {
        if (!b.catalog.contains({Site::Target, t.at("feature").get<std::uint32_t>()})) {
          out.push_back("mech " + unit + ": caption target feature has no catalog row");
        }
      }
    }
  }

  for (const auto& n : b.layout.at("nodes")) need_retained(n.at("id").get<std::string>(), "layout");
  for (const auto& [ch, w] : b.layout.at("chapter_weights").items()) {
    auto ref = corpus.find_unit(ch);
    if (!ref || ref->granularity != Granularity::Chapter) out.push_back("layout: chapter " + ch + " does not resolve");
    for (const auto& [id, v] : w.items()) need_retained(id, "layout weights");
  }
  return out;
}

GraphBundle build_graph_bundle(const Workspace& ws) {
  ws.require(bundle_required_stages());
  GraphBundle b;
  const auto catalog = ws.load_catalog();
  const auto stack = ws.load_stack();
  b.catalog = descriptions_only(catalog);
  b.universe = read_json(ws.universe_path());
  for (auto g : kAllGranularities) {
    if (fs::exists(ws.cooc_path(g))) b.graphs[std::string(granularity_name(g))] = read_json(ws.cooc_path(g));
  }
  b.tree = read_json(ws.tree_path());
  b.tree_index = AbstractionTree::from_json(b.tree);
  if (fs::is_directory(ws.path("labels"))) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(ws.path("labels"))) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      auto doc = read_json(f);
      const auto name = doc.at("graph").get<std::string>();
      b.labels[name] = std::move(doc);
    }
  }
  if (fs::is_directory(ws.path("mech"))) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(ws.path("mech"))) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      auto doc = read_json(f);
      if (doc.value("kind", std::string()) != "mech") continue;
      const auto unit = doc.at("unit").get<std::string>();
      b.mech[unit] = std::move(doc);
    }
  }
  b.layout = read_json(ws.layout_path());
  b.metrics = read_json(ws.metrics_json_path());
  b.mechanism = load_mech_context(ws);
  for (auto mode : {CaptionMode::TopFunctional, CaptionMode::ConstrainedNnls}) {
    CaptionConfig cfg;
    cfg.mode = mode;
    b.captions[mode] = caption_all_latents(b.mechanism.supports, stack, catalog, cfg);
  }

  const auto m = ws.manifest();
  json stages = json::object();
  for (const auto& [name, rec] : m.at("stages").items()) stages[name] = rec.value("version", 1);
  json config_hashes = json::object();
  if (m["stages"].contains("filter")) config_hashes["filter"] = m["stages"]["filter"].value("config_hash", "");
  config_hashes["tree"] = fnv1a_hex(b.tree.at("metadata").dump());
  b.manifest = {{"corpus_id", b.mechanism.corpus.corpus_id()},
                {"corpus_hash", file_hash(ws.corpus_path())},
                {"catalog_hash", file_hash(ws.catalog_path())},
                {"config_hashes", config_hashes},
                {"stage_versions", stages},
                {"units", b.mech.size()}};

  const auto problems = dangling_references(b);
  if (!problems.empty()) {
    std::string msg = std::to_string(problems.size()) + " dangling references, first: " + problems.front();
    throw SchemaError(msg);
  }
  return b;
}

void save_graph_bundle(const GraphBundle& bundle, const fs::path& path) {
  const auto bytes = json::to_cbor(bundle.to_json());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ForgeError("cannot write " + path.string());
  const auto digest = fnv1a_hex(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  out.write(kBundleMagic, 7);
  out.write(digest.data(), static_cast<std::streamsize>(digest.size()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

GraphBundle load_graph_bundle(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot read bundle " + path.string());
  char magic[7];
  if (!in.read(magic, 7) || std::memcmp(magic, kBundleMagic, 7) != 0) throw FormatError("not a graph bundle file");
  std::string digest(16, '\0');
  if (!in.read(digest.data(), 16)) throw FormatError("truncated graph bundle");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (fnv1a_hex(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())) != digest) {
    throw FormatError("bundle checksum mismatch");
  }
  json doc;
  try {
    doc = json::from_cbor(bytes);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bundle payload: ") + e.what());
  }
  auto b = GraphBundle::from_json(doc);
  const auto problems = dangling_references(b);
  if (!problems.empty()) throw SchemaError("bundle has dangling reference: " + problems.front());
  return b;
}

GraphBundle export_graph_bundle(const Workspace& ws, const fs::path& path) {
  auto b = build_graph_bundle(ws);
  save_graph_bundle(b, path);
  spdlog::info("bundle written to {} ({} graphs, {} label sets, {} payloads)", path.string(), b.graphs.size(),
               b.labels.size(), b.mech.size());
  return b;
}

}  // namespace forge
