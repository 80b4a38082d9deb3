#include "forge/pipeline.hpp"

#include <spdlog/spdlog.h>

#include "forge/errors.hpp"

namespace forge {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::unique_ptr<TextClient> make_client(const std::string& kind, const std::string& role, const std::string& url,
                                        const std::string& path) {
  if (kind == "http") {
    if (url.empty()) throw ConfigError("an http " + role + " needs a url");
    return std::make_unique<HttpTextClient>(url, path.empty() ? "/" + role : path);
  }
  if (kind != "stub") throw ConfigError("unknown client kind '" + kind + "' (expected stub or http)");
  if (role == "adjudicator") return std::make_unique<StubAdjudicator>();
  if (role == "summarizer") return std::make_unique<StubSummarizer>();
  if (role == "relator") return std::make_unique<StubRelator>();
  throw ConfigError("unknown client role '" + role + "'");
}

namespace {

const fs::path& need(const std::map<std::string, fs::path>& m, const std::string& key, const std::string& what) {
  auto it = m.find(key);
  if (it == m.end()) throw ConfigError(what + " is missing activations for site '" + key + "'");
  return it->second;
}

void check_tokens(const TokenActivationStore& store, const CorpusStructure& corpus, const std::string& what) {
  if (store.num_tokens() != corpus.num_tokens()) {
    throw ShapeError(what + ": store has " + std::to_string(store.num_tokens()) + " tokens, corpus has " +
                     std::to_string(corpus.num_tokens()));
  }
}

void check_features(const TokenActivationStore& store, Eigen::Index expected, const std::string& what) {
  if (store.num_features() != static_cast<std::uint64_t>(expected)) {
    throw ShapeError(what + ": store has " + std::to_string(store.num_features()) + " features, stack has " +
                     std::to_string(expected));
  }
}

}  // namespace

void run_ingest(const IngestRequest& request, Workspace& ws) {
  const auto corpus = load_corpus_structure(request.corpus);
  const auto stack = load_sparse_stack(request.stack);
  const auto shape = stack.validate();
  const auto catalog = load_feature_catalog(request.catalog);
  catalog.require_coverage(Site::Source, static_cast<std::size_t>(shape.f_src));
  catalog.require_coverage(Site::Target, static_cast<std::size_t>(shape.f_tgt));

  const auto src = load_activation_store(need(request.activations, "src", "target corpus"), "src");
  const auto tgt = load_activation_store(need(request.activations, "tgt", "target corpus"), "tgt");
  const auto lat = load_activation_store(need(request.activations, kLatentSite, "target corpus"), kLatentSite);
  check_tokens(src, corpus, "src");
  check_tokens(tgt, corpus, "tgt");
  check_tokens(lat, corpus, kLatentSite);
  check_features(src, shape.f_src, "src");
  check_features(tgt, shape.f_tgt, "tgt");
  check_features(lat, shape.latents, kLatentSite);

  fs::create_directories(ws.root());
  save_corpus_structure(corpus, ws.corpus_path());
  save_sparse_stack(stack, ws.stack_dir());
  save_feature_catalog(catalog, ws.catalog_path());
  fs::create_directories(ws.path("activations"));
  save_activation_store(src, ws.activation_path("src"));
  save_activation_store(tgt, ws.activation_path("tgt"));
  save_activation_store(lat, ws.activation_path(kLatentSite));

  json contrasts = json::array();
  for (const auto& c : request.contrasts) {
    if (c.name.empty() || c.name.find('/') != std::string::npos) throw ConfigError("bad contrast name '" + c.name + "'");
    const auto cc = load_corpus_structure(c.corpus);
    const auto dir = ws.contrast_dir(c.name);
    fs::create_directories(dir);
    save_corpus_structure(cc, dir / "corpus.json");
    for (Site site : {Site::Source, Site::Target}) {
      const std::string s(site_name(site));
      const auto store = load_activation_store(need(c.activations, s, "contrast '" + c.name + "'"), s);
      check_tokens(store, cc, c.name + "/" + s);
      check_features(store, site == Site::Source ? shape.f_src : shape.f_tgt, c.name + "/" + s);
      save_activation_store(store, dir / (s + ".act"));
    }
    contrasts.push_back({{"name", c.name}, {"sentences", cc.num_sentences()}, {"corpus_hash", file_hash(dir / "corpus.json")}});
  }
  ws.record_stage("ingest", {{"version", 1},
                             {"corpus_id", corpus.corpus_id()},
                             {"corpus_hash", file_hash(ws.corpus_path())},
                             {"catalog_hash", file_hash(ws.catalog_path())},
                             {"shape", {{"d_model", shape.d_model}, {"f_src", shape.f_src}, {"f_tgt", shape.f_tgt},
                                        {"latents", shape.latents}}},
                             {"contrasts", contrasts}});
  spdlog::info("ingested {} sentences, stack {}", corpus.num_sentences(), shape.to_string());
}

RetainedUniverse run_filter_stage(Workspace& ws, const FilterConfig& config, TextClient& adjudicator) {
  ws.require({"ingest"});
  const auto names = ws.contrasts();
  if (names.empty()) throw ConfigError("the filter needs at least one contrast corpus in the workspace");
  const auto corpus = ws.load_corpus();
  const auto catalog = ws.load_catalog();

  std::vector<CorpusStructure> contrast_corpora;
  for (const auto& n : names) contrast_corpora.push_back(ws.load_contrast_corpus(n));

  std::vector<TokenActivationStore> stores;  // target src, target tgt, then (contrast, site) pairs
  stores.reserve(2 + 2 * names.size());
  stores.push_back(ws.load_store("src"));
  stores.push_back(ws.load_store("tgt"));
  for (const auto& n : names) {
    stores.push_back(ws.load_contrast_store(n, Site::Source));
    stores.push_back(ws.load_contrast_store(n, Site::Target));
  }

  std::vector<SiteInputs> sites;
  for (Site site : {Site::Source, Site::Target}) {
    const std::size_t s = static_cast<std::size_t>(site);
    SiteInputs in;
    in.site = site;
    in.target = {corpus.corpus_id(), &corpus, &stores[s]};
    for (std::size_t i = 0; i < names.size(); ++i) {
      in.contrasts.push_back({names[i], &contrast_corpora[i], &stores[2 + 2 * i + s]});
    }
    sites.push_back(std::move(in));
  }
  auto universe = run_filter(sites, catalog, config, adjudicator);
  write_json(ws.universe_path(), universe.to_json());

  for (Site site : {Site::Source, Site::Target}) {
    const auto& store = stores[static_cast<std::size_t>(site)];
    const auto scores = compute_sentence_scores(store, corpus);
    write_json(ws.thresholds_path(site), calibrate_thresholds(scores, config.shortlist.thresholds).to_json());
  }
  ws.record_stage("filter", {{"version", 1},
                             {"config_hash", fnv1a_hex(universe.config.dump())},
                             {"adjudicator", adjudicator.id()},
                             {"retained", universe.features.size()}});
  spdlog::info("retained {} of {} shortlisted features", universe.features.size(), universe.shortlist.size());
  return universe;
}

SitePresence site_presence(const Workspace& ws, const CorpusStructure& corpus, const RetainedUniverse& universe,
                           Site site) {
  const auto indices = universe.site_indices(site);
  SitePresence out;
  if (indices.empty()) {
    out.scores = SentenceScores(FeatureColumns(site, {}), std::vector<SentenceScores::Row>(corpus.num_sentences()));
  } else {
    const auto store = ws.load_store(site_name(site));
    out.scores = compute_sentence_scores(store, corpus, indices);
  }
  out.sentence = sentence_presence(out.scores, ws.load_thresholds(site));
  return out;
}

namespace {

RetainedUniverse load_universe(const Workspace& ws) { return RetainedUniverse::from_json(read_json(ws.universe_path())); }

}  // namespace

CoocGraph run_cooc_stage(Workspace& ws, Granularity g, std::size_t top_k, Site site) {
  ws.require({"ingest", "filter"});
  const auto corpus = ws.load_corpus();
  const auto universe = load_universe(ws);
  const auto p = site_presence(ws, corpus, universe, site);
  const auto x = g == Granularity::Sentence ? p.sentence : lift_presence(p.sentence, corpus, g);
  auto graph = build_cooc_graph(x, top_k);
  if (site == Site::Source) {
    write_json(ws.cooc_path(g), graph.to_json());
    auto m = ws.manifest();
    json rec = m["stages"].value("cooc", json::object());
    rec["version"] = 1;
    rec["site"] = site_name(site);
    rec["graphs"][std::string(granularity_name(g))] = {{"top_k", top_k}, {"nodes", graph.nodes.size()},
                                                       {"edges", graph.edges.size()}};
    ws.record_stage("cooc", rec);
  }
  return graph;
}

AbstractionTree run_hierarchy_stage(Workspace& ws, const GeometryConfig& geometry, const TreeConfig& tree,
                                    TextClient& summarizer) {
  ws.require({"ingest", "filter"});
  const auto catalog = ws.load_catalog();
  const auto universe = load_universe(ws);
  const auto geo = build_neighbor_geometry(catalog, universe.features, geometry);
  auto t = grow_abstraction_tree(geo, tree);
  summarize_tree(t, geo, catalog, summarizer);
  t.metadata["summarizer"] = summarizer.id();
  write_json(ws.tree_path(), t.to_json());
  ws.record_stage("hierarchy", {{"version", 1}, {"nodes", t.size()}, {"summarizer", summarizer.id()}});
  return t;
}

MechInputs MechContext::inputs() const {
  MechInputs in;
  in.corpus = &corpus;
  in.source = &source;
  in.target = &target;
  in.latent = &latent;
  in.supports = &supports;
  in.source_universe = source_universe;
  in.target_universe = target_universe;
  in.source_thresholds = &source_thresholds;
  in.target_thresholds = &target_thresholds;
  return in;
}

MechContext load_mech_context(const Workspace& ws) {
  ws.require({"ingest", "filter"});
  MechContext ctx;
  ctx.corpus = ws.load_corpus();
  ctx.source = ws.load_store("src");
  ctx.target = ws.load_store("tgt");
  ctx.latent = ws.load_store(kLatentSite);
  ctx.supports = compute_support_matrices(ws.load_stack());
  ctx.source_thresholds = ws.load_thresholds(Site::Source);
  ctx.target_thresholds = ws.load_thresholds(Site::Target);
  const auto universe = load_universe(ws);
  ctx.source_universe = universe.site_indices(Site::Source);
  ctx.target_universe = universe.site_indices(Site::Target);
  return ctx;
}

DynamicMechanismGraph build_captioned_graph(const MechContext& ctx, const SparseStack& stack,
                                            const FeatureCatalog& catalog, std::string_view unit,
                                            const MechConfig& mech, const CaptionConfig& captions) {
  auto graph = build_dynamic_graph(unit, ctx.inputs(), mech);
  std::map<std::uint32_t, LatentCaption> caps;
  for (const auto& e : graph.edges) {
    if (!caps.count(e.strongest_latent)) {
      caps.emplace(e.strongest_latent, caption_latent(e.strongest_latent, ctx.supports, stack, catalog, captions));
    }
  }
  attach_captions(graph, caps, captions.mode);
  return graph;
}

DynamicMechanismGraph run_mech_stage(Workspace& ws, std::string_view unit, const MechConfig& mech,
                                     const CaptionConfig& captions) {
  const auto ctx = load_mech_context(ws);
  auto graph = build_captioned_graph(ctx, ws.load_stack(), ws.load_catalog(), unit, mech, captions);
  write_json(ws.mech_path(unit), graph.to_json());
  auto m = ws.manifest();
  json rec = m["stages"].value("mech", json::object());
  rec["version"] = 1;
  rec["units"][std::string(unit)] = {{"edges", graph.edges.size()}, {"edges_total", graph.edges_total},
                                     {"gate_mode", gate_mode_name(mech.gate_mode)},
                                     {"caption_mode", caption_mode_name(captions.mode)}};
  ws.record_stage("mech", rec);
  return graph;
}

namespace {

void record_labels(Workspace& ws, const LabelSet& set) {
  write_json(ws.labels_path(set.graph), set.to_json());
  auto m = ws.manifest();
  json rec = m["stages"].value("relate", json::object());
  rec["version"] = 1;
  rec["graphs"][set.graph] = {{"relator", set.relator}, {"labels", set.labels.size()}, {"budget", set.budget}};
  ws.record_stage("relate", rec);
}

}  // namespace

LabelSet run_relate_cooc(Workspace& ws, const CoocGraph& graph, TextClient& relator, const RelateConfig& config) {
  ws.require({"ingest", "filter"});
  const auto corpus = ws.load_corpus();
  const auto catalog = ws.load_catalog();
  const auto p = site_presence(ws, corpus, load_universe(ws), graph.columns.site());
  if (p.sentence.columns.indices() != graph.columns.indices()) {
    throw PreconditionError("graph columns do not match the workspace universe; rerun cooc");
  }
  SiteSentenceView view{&corpus, &p.scores, &p.sentence};
  auto set = relate_cooc_graph(graph, view, catalog, relator, config);
  record_labels(ws, set);
  return set;
}

LabelSet run_relate_mech(Workspace& ws, const DynamicMechanismGraph& graph, TextClient& relator,
                         const RelateConfig& config) {
  const auto ctx = load_mech_context(ws);
  auto set = relate_mech_graph(graph, ctx.inputs(), ws.load_catalog(), relator, config);
  record_labels(ws, set);
  return set;
}

MetricsOutput run_metrics_stage(Workspace& ws, const std::vector<Granularity>& levels, const MetricsConfig& config) {
  ws.require({"ingest", "filter", "cooc"});
  const auto corpus = ws.load_corpus();
  const auto universe = load_universe(ws);
  MetricsOutput out;
  std::optional<SitePresence> presence;
  for (auto g : levels) {
    const auto path = ws.cooc_path(g);
    if (!fs::exists(path)) {
      throw IncompleteWorkspaceError({"cooc:" + std::string(granularity_name(g))});
    }
    const auto graph = CoocGraph::from_json(read_json(path));
    if (!presence || presence->sentence.columns.site() != graph.columns.site()) {
      presence = site_presence(ws, corpus, universe, graph.columns.site());
    }
    out.rows.push_back(compute_structure_metrics(graph, presence->sentence, corpus, config));
  }
  const auto sentence_graph = CoocGraph::from_json(read_json(ws.cooc_path(Granularity::Sentence)));
  presence = site_presence(ws, corpus, universe, sentence_graph.columns.site());
  out.layout = compute_shared_layout(sentence_graph, config.layout);
  attach_chapter_weights(out.layout, presence->scores, presence->sentence, corpus);

  write_text(ws.metrics_csv_path(), metrics_csv(out.rows));
  json rows = json::array();
  for (const auto& r : out.rows) rows.push_back(r.to_json());
  write_json(ws.metrics_json_path(), {{"kind", "metrics"}, {"rows", rows}, {"reference", reference_metadata()}});
  write_json(ws.layout_path(), out.layout.to_json());
  ws.record_stage("metrics", {{"version", 1}, {"levels", out.rows.size()}});
  return out;
}

}  // namespace forge
