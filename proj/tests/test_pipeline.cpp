#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <thread>

#include "forge/bundle.hpp"
#include "forge/errors.hpp"
#include "forge/service.hpp"
#include "support.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose _res macro breaks Eigen headers.
#include <httplib.h>

using namespace forge;
using namespace forge::testing;

namespace {

using Query = std::multimap<std::string, std::string>;

const fs::path& shared_run() {
  static const fs::path root = [] {
    const auto r = temp_dir("pipeline_shared");
    run_fixture_pipeline(r);
    return r;
  }();
  return root;
}

class RejectAll final : public TextClient {
 public:
  std::string id() const override { return "reject-all"; }
  std::string send(const nlohmann::json&) override {
    return R"({"visible": false, "evidence_sentence_ids": [], "belongs_here": false,
               "distinctiveness": "low", "justification": "no"})";
  }
};

}  // namespace

TEST_CASE("workspace stage checks") {
  const auto root = temp_dir("pipeline_missing");
  const auto req = write_fixture(build_fixture(), root / "in");
  Workspace ws(root / "ws");
  run_ingest(req, ws);
  StubAdjudicator adj;
  run_filter_stage(ws, FilterConfig{}, adj);
  for (auto g : kAllGranularities) run_cooc_stage(ws, g, 10);
  try {
    build_graph_bundle(ws);
    FAIL("expected IncompleteWorkspaceError");
  } catch (const IncompleteWorkspaceError& e) {
    const auto& m = e.missing_stages();
    CHECK(std::find(m.begin(), m.end(), "hierarchy") != m.end());
    CHECK(std::string(e.what()).find("hierarchy") != std::string::npos);
  }
}

TEST_CASE("bundle round trip has no dangling references") {
  Workspace ws(shared_run() / "ws");
  const auto path = shared_run() / "bundle.sae";
  const auto b = export_graph_bundle(ws, path);
  CHECK(dangling_references(b).empty());
  const auto back = load_graph_bundle(path);
  CHECK(dangling_references(back).empty());
  CHECK(back.universe == b.universe);
  CHECK(back.graphs.size() == 4);

  // Corrupt one byte of the payload.
  auto bytes = slurp(path);
  bytes[bytes.size() / 2] ^= 0x5a;
  std::ofstream(shared_run() / "bad.sae", std::ios::binary) << bytes;
  CHECK_THROWS_AS(load_graph_bundle(shared_run() / "bad.sae"), ForgeError);
  std::ofstream(shared_run() / "junk.sae", std::ios::binary) << "NOTABUNDLE";
  CHECK_THROWS_AS(load_graph_bundle(shared_run() / "junk.sae"), FormatError);
}

TEST_CASE("dangling references are reported") {
  Workspace ws(shared_run() / "ws");
  auto b = build_graph_bundle(ws);
  b.graphs.at("sentence")["edges"][0]["source"] = "src:9999";
  CHECK(!dangling_references(b).empty());
}

TEST_CASE("empty universe gives a valid empty bundle") {
  const auto root = temp_dir("pipeline_empty");
  const auto req = write_fixture(build_fixture(), root / "in");
  Workspace ws(root / "ws");
  run_ingest(req, ws);
  RejectAll adj;
  const auto u = run_filter_stage(ws, FilterConfig{}, adj);
  CHECK(u.features.empty());
  for (auto g : kAllGranularities) CHECK(run_cooc_stage(ws, g, 10).edges.empty());
  StubSummarizer sum;
  run_hierarchy_stage(ws, GeometryConfig{}, TreeConfig{}, sum);
  run_metrics_stage(ws, {kAllGranularities.begin(), kAllGranularities.end()}, MetricsConfig{});
  const auto b = build_graph_bundle(ws);
  CHECK(dangling_references(b).empty());
  for (const auto& [g, doc] : b.graphs) CHECK(doc.at("edges").empty());
}

TEST_CASE("service endpoints") {
  Workspace ws(shared_run() / "ws");
  auto bundle = std::make_shared<const GraphBundle>(build_graph_bundle(ws));
  GraphService svc(bundle);

  CHECK(svc.handle("/universe", {}).body == slurp(ws.universe_path()));
  CHECK(svc.handle("/tree", {}).body == slurp(ws.tree_path()));
  CHECK(svc.handle("/graph/sentence", {}).body == slurp(ws.cooc_path(Granularity::Sentence)));
  CHECK(svc.handle("/labels/mech:s17", {}).body == slurp(ws.labels_path("mech:s17")));
  CHECK(svc.handle("/graph/page", {}).status == 404);
  CHECK(svc.handle("/nothing", {}).status == 404);
  CHECK(svc.handle("/slice", {}).status == 400);
  CHECK(svc.handle("/slice", Query{{"nodes", "nope"}}).status == 404);
  CHECK(svc.handle("/mech/s17", Query{{"cap", "abc"}}).status == 400);
  CHECK(svc.handle("/mech/s999", {}).status == 404);

  const auto root_slice = nlohmann::json::parse(svc.handle("/slice", Query{{"nodes", "n0"}}).body);
  CHECK(root_slice.at("leaves").size() == bundle->tree_index.node(0).leaves.size());

  // Same bytes as mech + compress on the workspace.
  const auto tree = AbstractionTree::from_json(read_json(ws.tree_path()));
  const auto g = DynamicMechanismGraph::from_json(read_json(ws.mech_path("s17")));
  const auto want = json_text(compress_mechanism(g, tree, {}).to_json());
  const auto got = svc.handle("/mech/s17", Query{{"cap", "64"}});
  CHECK(got.status == 200);
  CHECK(got.body == want);
  CHECK(svc.cache_size() == 1);
  CHECK(svc.handle("/mech/s17", Query{{"cap", "64"}}).body == want);
  CHECK(svc.cache_size() == 1);

  // Any unit can be requested, not only the stored ones.
  CHECK(svc.handle("/mech/s3", {}).status == 200);
  CHECK(svc.handle("/mech/p2", Query{{"caption", "nnls"}}).status == 200);
}

TEST_CASE("concurrent requests agree") {
  Workspace ws(shared_run() / "ws");
  GraphService svc(std::make_shared<const GraphBundle>(build_graph_bundle(ws)));
  std::vector<std::string> out(8);
  std::vector<std::thread> ts;
  for (std::size_t i = 0; i < out.size(); ++i) {
    ts.emplace_back([&, i] { out[i] = svc.handle("/mech/s20", Query{{"cap", std::to_string(8 + i % 2)}}).body; });
  }
  for (auto& t : ts) t.join();
  for (std::size_t i = 2; i < out.size(); ++i) CHECK(out[i] == out[i % 2]);
}

TEST_CASE("CLI and HTTP agree byte for byte") {
  const auto dir = temp_dir("pipeline_cli");
  for (const auto& cmd : cli_chain(FORGE_BIN, dir)) REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(std::system((std::string(FORGE_BIN) + " export --workspace " + (dir / "nowhere").string() + " --out " +
                     (dir / "x.sae").string() + " --log-level off")
                        .c_str()) != 0);

  const int port = 18000 + static_cast<int>(std::chrono::steady_clock::now().time_since_epoch().count() % 1000);
  const auto pidfile = (dir / "pid").string();
  const auto serve = std::string(FORGE_BIN) + " serve --bundle " + (dir / "bundle.sae").string() + " --port " +
                     std::to_string(port) + " --log-level warn > /dev/null 2>&1 & echo $! > " + pidfile;
  REQUIRE(std::system(serve.c_str()) == 0);
  httplib::Client cli("127.0.0.1", port);
  httplib::Result res;
  for (int i = 0; i < 100 && !(res = cli.Get("/universe")); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body == slurp(dir / "ws" / "universe.json"));
  auto mech = cli.Get("/mech/s17?cap=64");
  REQUIRE(mech);
  CHECK(mech->body == slurp(dir / "ws" / "mech" / "s17.compressed.json"));
  auto missing = cli.Get("/graph/page");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  std::system(("kill $(cat " + pidfile + ")").c_str());
}
