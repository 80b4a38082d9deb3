// Command-line front end for the forge pipeline.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "forge/bundle.hpp"
#include "forge/config.hpp"
#include "forge/errors.hpp"
#include "forge/fixture.hpp"
#include "forge/pipeline.hpp"
#include "forge/service.hpp"
#include "forge/workspace.hpp"

namespace fs = std::filesystem;
using namespace forge;

namespace {

std::pair<std::string, std::string> split_assignment(const std::string& s, const std::string& flag) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
    throw ConfigError(flag + " expects name=path, got '" + s + "'");
  }
  return {s.substr(0, eq), s.substr(eq + 1)};
}

void maybe_copy(const fs::path& written, const std::string& out) {
  if (out.empty()) return;
  const fs::path dst(out);
  if (fs::exists(dst) && fs::equivalent(dst, written)) return;
  if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
  fs::copy_file(written, dst, fs::copy_options::overwrite_existing);
}

std::vector<Granularity> parse_levels(const std::string& s) {
  if (s == "all") return {kAllGranularities.begin(), kAllGranularities.end()};
  std::vector<Granularity> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    out.push_back(parse_granularity(s.substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forge: feature graphs from sparse autoencoder activations"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  // fixture
  auto* fixture = app.add_subcommand("fixture", "Write the synthetic three-chapter fixture as ingest inputs");
  std::string fixture_out;
  std::uint64_t fixture_seed = FixtureConfig{}.seed;
  fixture->add_option("--out", fixture_out, "Output directory")->required();
  fixture->add_option("--seed", fixture_seed, "Generator seed");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate inputs and create a workspace");
  std::vector<std::string> activations, contrasts;
  std::string corpus, stack, catalog, ingest_out;
  ingest->add_option("--activations", activations,
                     "site=path for src, tgt, latent; <contrast>/site=path for contrast corpora")
      ->required();
  ingest->add_option("--corpus", corpus, "Corpus JSON")->required();
  ingest->add_option("--stack", stack, "Directory with E_src/D_src/E_tgt/D_tgt/R/W .mat files")->required();
  ingest->add_option("--catalog", catalog, "Feature catalog JSON")->required();
  ingest->add_option("--contrast", contrasts, "name=corpus.json for each contrast corpus");
  ingest->add_option("--out", ingest_out, "Workspace directory")->required();

  // filter
  auto* filter = app.add_subcommand("filter", "Shortlist, build evidence packets, adjudicate");
  std::string ws_dir, filter_config, adjudicator = "stub", client_url, filter_out;
  bool print_config = false;
  filter->add_option("--workspace", ws_dir, "Workspace directory");
  filter->add_option("--config", filter_config, "Filter settings (TOML)");
  filter->add_option("--adjudicator", adjudicator, "stub or http")->check(CLI::IsMember({"stub", "http"}));
  filter->add_option("--url", client_url, "Base URL of an http adjudicator (overrides the config)");
  filter->add_option("--out", filter_out, "Extra copy of universe.json");
  filter->add_flag("--print-default-config", print_config, "Print the default settings and exit");

  // cooc
  auto* cooc = app.add_subcommand("cooc", "Build co-occurrence graphs");
  std::string granularity = "sentence", cooc_out, cooc_site = "src";
  std::size_t top_k = 10;
  cooc->add_option("--workspace", ws_dir)->required();
  cooc->add_option("--granularity", granularity, "sentence, paragraph, subchapter, chapter or all");
  cooc->add_option("--top-k", top_k, "Neighbours kept per node before union symmetrization");
  cooc->add_option("--site", cooc_site, "Feature site")->check(CLI::IsMember({"src", "tgt"}));
  cooc->add_option("--out", cooc_out, "Output path (single granularity only)");

  // hierarchy
  auto* hierarchy = app.add_subcommand("hierarchy", "Grow and summarize the abstraction tree");
  GeometryConfig geometry;
  TreeConfig tree_cfg;
  std::string summarizer = "stub", hierarchy_out;
  hierarchy->add_option("--workspace", ws_dir)->required();
  hierarchy->add_option("--k", geometry.k, "Neighbours for the mutual kNN graph");
  hierarchy->add_option("--pca", geometry.pca_dim, "PCA dimensions");
  hierarchy->add_option("--max-leaf-group", tree_cfg.max_leaf_group, "Largest node split into leaves directly");
  hierarchy->add_option("--summarizer", summarizer, "stub or http")->check(CLI::IsMember({"stub", "http"}));
  hierarchy->add_option("--url", client_url, "Base URL of an http summarizer");
  hierarchy->add_option("--out", hierarchy_out, "Extra copy of tree.json");

  // mech
  auto* mech = app.add_subcommand("mech", "Build a unit-conditioned mechanism graph");
  std::string unit, caption_mode = "top", gate_mode = "positive", mech_out;
  MechConfig mech_cfg;
  bool unrestricted = false;
  mech->add_option("--workspace", ws_dir)->required();
  mech->add_option("--unit", unit, "Sentence, paragraph, subchapter or chapter id")->required();
  mech->add_option("--caption-mode", caption_mode)->check(CLI::IsMember({"top", "nnls"}));
  mech->add_option("--gate-mode", gate_mode)->check(CLI::IsMember({"positive", "threshold"}));
  mech->add_option("--gate-tol", mech_cfg.gate_tol, "Activation above which a gate is on");
  mech->add_option("--edge-cap", mech_cfg.edge_cap, "Edges kept by weight");
  mech->add_flag("--unrestricted", unrestricted, "Do not restrict endpoints to the retained universe");
  mech->add_option("--out", mech_out, "Extra copy of the payload");

  // compress
  auto* compress = app.add_subcommand("compress", "Compress a mechanism payload with the tree");
  std::string mech_in, tree_in, compress_out;
  CompressConfig compress_cfg;
  compress->add_option("--mech", mech_in, "Mechanism payload JSON")->required();
  compress->add_option("--tree", tree_in, "Tree JSON")->required();
  compress->add_option("--cap", compress_cfg.cap, "Largest collapsible node, in leaves");
  compress->add_option("--exclude", compress_cfg.exclude, "Node ids kept expanded")->delimiter(',');
  compress->add_option("--out", compress_out, "Output path")->required();

  // relate
  auto* relate = app.add_subcommand("relate", "Label graph edges");
  std::string graph_in, relator = "stub", relate_out;
  RelateConfig relate_cfg;
  relate->add_option("--workspace", ws_dir)->required();
  relate->add_option("--graph", graph_in, "Co-occurrence graph or mechanism payload JSON")->required();
  relate->add_option("--relator", relator, "stub or http")->check(CLI::IsMember({"stub", "http"}));
  relate->add_option("--url", client_url, "Base URL of an http relator");
  relate->add_option("--budget", relate_cfg.budget, "Edges sent to the relator, highest weight first");
  relate->add_option("--out", relate_out, "Extra copy of the label set");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Structure-recovery metrics and the shared layout");
  std::string levels = "all", distance = "layout", metrics_out;
  MetricsConfig metrics_cfg;
  metrics->add_option("--workspace", ws_dir)->required();
  metrics->add_option("--levels", levels, "all or a comma list of granularities");
  metrics->add_option("--distance", distance)->check(CLI::IsMember({"layout", "graph"}));
  metrics->add_option("--seed", metrics_cfg.layout.seed, "Layout seed");
  metrics->add_option("--out", metrics_out, "Extra copy of metrics.csv");

  // export
  auto* exp = app.add_subcommand("export", "Write a graph bundle");
  std::string bundle_out;
  exp->add_option("--workspace", ws_dir)->required();
  exp->add_option("--out", bundle_out, "Bundle path")->required();

  // serve
  auto* serve = app.add_subcommand("serve", "Serve a bundle over HTTP");
  std::string bundle_in, host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--bundle", bundle_in)->required();
  serve->add_option("--port", port);
  serve->add_option("--host", host);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    const auto t0 = std::chrono::steady_clock::now();
    if (*fixture) {
      FixtureConfig cfg;
      cfg.seed = fixture_seed;
      const auto req = write_fixture(build_fixture(cfg), fixture_out);
      std::cout << "wrote fixture to " << fixture_out << "\n";
    } else if (*ingest) {
      IngestRequest req;
      req.corpus = corpus;
      req.stack = stack;
      req.catalog = catalog;
      std::map<std::string, ContrastSource> cs;
      for (const auto& c : contrasts) {
        auto [name, path] = split_assignment(c, "--contrast");
        cs[name].name = name;
        cs[name].corpus = path;
      }
      for (const auto& a : activations) {
        auto [name, path] = split_assignment(a, "--activations");
        if (auto slash = name.find('/'); slash != std::string::npos) {
          const auto cname = name.substr(0, slash);
          if (!cs.count(cname)) throw ConfigError("activations for unknown contrast '" + cname + "'");
          cs[cname].activations[name.substr(slash + 1)] = path;
        } else {
          req.activations[name] = path;
        }
      }
      for (auto& [name, c] : cs) req.contrasts.push_back(std::move(c));
      Workspace ws(ingest_out);
      run_ingest(req, ws);
    } else if (*filter) {
      if (print_config) {
        std::cout << default_filter_config_text();
        return 0;
      }
      if (ws_dir.empty()) throw ConfigError("--workspace is required");
      FilterFileConfig cfg;
      if (!filter_config.empty()) cfg = load_filter_config(filter_config);
      if (!client_url.empty()) cfg.adjudicator_url = client_url;
      Workspace ws(ws_dir);
      auto client = make_client(adjudicator, "adjudicator", cfg.adjudicator_url, cfg.adjudicator_path);
      run_filter_stage(ws, cfg.filter, *client);
      maybe_copy(ws.universe_path(), filter_out);
    } else if (*cooc) {
      Workspace ws(ws_dir);
      const auto gs = parse_levels(granularity);
      if (gs.size() > 1 && !cooc_out.empty()) throw ConfigError("--out needs a single granularity");
      for (auto g : gs) {
        const auto graph = run_cooc_stage(ws, g, top_k, parse_site(cooc_site));
        if (!cooc_out.empty()) write_json(cooc_out, graph.to_json());
        spdlog::info("{} graph: {} nodes, {} edges", granularity_name(g), graph.nodes.size(), graph.edges.size());
      }
    } else if (*hierarchy) {
      Workspace ws(ws_dir);
      auto client = make_client(summarizer, "summarizer", client_url);
      const auto tree = run_hierarchy_stage(ws, geometry, tree_cfg, *client);
      spdlog::info("tree with {} nodes", tree.size());
      maybe_copy(ws.tree_path(), hierarchy_out);
    } else if (*mech) {
      Workspace ws(ws_dir);
      mech_cfg.gate_mode = parse_gate_mode(gate_mode);
      mech_cfg.restrict_to_universe = !unrestricted;
      CaptionConfig caps;
      caps.mode = parse_caption_mode(caption_mode);
      const auto g = run_mech_stage(ws, unit, mech_cfg, caps);
      spdlog::info("{}: {} edges ({} before cap)", unit, g.edges.size(), g.edges_total);
      maybe_copy(ws.mech_path(unit), mech_out);
    } else if (*compress) {
      const auto graph = DynamicMechanismGraph::from_json(read_json(mech_in));
      const auto tree = AbstractionTree::from_json(read_json(tree_in));
      const auto out = compress_mechanism(graph, tree, compress_cfg);
      write_json(compress_out, out.to_json());
      spdlog::info("{} display nodes, {} edges", out.nodes.size(), out.edges.size());
    } else if (*relate) {
      Workspace ws(ws_dir);
      auto client = make_client(relator, "relator", client_url);
      const auto doc = read_json(graph_in);
      const auto kind = doc.value("kind", std::string());
      LabelSet set;
      if (kind == "cooc") {
        set = run_relate_cooc(ws, CoocGraph::from_json(doc), *client, relate_cfg);
      } else if (kind == "mech") {
        set = run_relate_mech(ws, DynamicMechanismGraph::from_json(doc), *client, relate_cfg);
      } else {
        throw SchemaError("--graph must be a co-occurrence graph or a mechanism payload");
      }
      spdlog::info("{}: {} labels", set.graph, set.labels.size());
      maybe_copy(ws.labels_path(set.graph), relate_out);
    } else if (*metrics) {
      Workspace ws(ws_dir);
      metrics_cfg.distance = distance == "graph" ? DistanceMode::Graph : DistanceMode::Layout;
      run_metrics_stage(ws, parse_levels(levels), metrics_cfg);
      maybe_copy(ws.metrics_csv_path(), metrics_out);
    } else if (*exp) {
      export_graph_bundle(Workspace(ws_dir), bundle_out);
    } else if (*serve) {
      auto bundle = std::make_shared<const GraphBundle>(load_graph_bundle(bundle_in));
      serve_bundle(bundle, host, port);
    }
    const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    spdlog::debug("done in {:.1f} ms", ms);
  } catch (const IncompleteWorkspaceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ForgeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
