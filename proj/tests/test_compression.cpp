#include <doctest.h>

#include "forge/errors.hpp"
#include "support.hpp"

using namespace forge;
using namespace forge::testing;

namespace {

FeatureKey K(const char* s) { return parse_feature_key(s); }

// Root with groups A, B, C of two leaves each.
AbstractionTree figure_tree() {
  return make_tree({{"root", "", ""},
                    {"A", "root", ""},
                    {"B", "root", ""},
                    {"C", "root", ""},
                    {"src:1", "A", "src:1"},
                    {"src:2", "A", "src:2"},
                    {"src:3", "B", "src:3"},
                    {"tgt:3", "B", "tgt:3"},
                    {"tgt:1", "C", "tgt:1"},
                    {"tgt:2", "C", "tgt:2"}});
}

std::vector<std::string> blocked_ids(const AbstractionTree& t, const std::vector<bool>& b) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (b[i]) out.push_back(t.node(i).id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("blocked set") {
  const auto t = figure_tree();
  SUBCASE("siblings block their parent and its ancestors") {
    std::vector<LeafEdge> e{{K("src:3"), K("tgt:3"), 1.0, 0}};
    CHECK(blocked_ids(t, compute_blocked_set(e, t)) == std::vector<std::string>{"B", "root"});
  }
  SUBCASE("edges across root children block only the root") {
    std::vector<LeafEdge> e{{K("src:1"), K("tgt:2"), 1.0, 0}};
    const auto b = compute_blocked_set(e, t);
    CHECK(blocked_ids(t, b) == std::vector<std::string>{"root"});
    CHECK(lca_oracle(t, t.index_of("src:1"), t.index_of("tgt:2")) == t.root());
  }
  SUBCASE("empty payload") {
    std::vector<LeafEdge> e;
    CHECK(blocked_ids(t, compute_blocked_set(e, t)).empty());
  }
  SUBCASE("unknown endpoint") {
    std::vector<LeafEdge> e{{K("src:9"), K("tgt:2"), 1.0, 0}};
    CHECK_THROWS_AS(compute_blocked_set(e, t), NotFoundError);
  }
}

TEST_CASE("figure scenario") {
  const auto t = figure_tree();
  std::vector<LeafEdge> e{{K("src:1"), K("tgt:1"), 1.0, 0},
                          {K("src:2"), K("tgt:2"), 2.0, 0},
                          {K("src:1"), K("tgt:2"), 0.5, 0},
                          {K("src:3"), K("tgt:3"), 4.0, 1}};
  const auto g = compress_graph(e, t, compute_blocked_set(e, t), {});
  std::vector<std::string> ids;
  for (const auto& n : g.nodes) ids.push_back(n.id);
  CHECK(ids == std::vector<std::string>{"A", "src:3", "tgt:3", "C"});
  REQUIRE(g.edges.size() == 2);
  CHECK(g.nodes[g.edges[0].source].id == "src:3");
  CHECK(g.nodes[g.edges[0].target].id == "tgt:3");
  CHECK(g.edges[0].weight == 4.0);
  CHECK(g.nodes[g.edges[1].source].id == "A");
  CHECK(g.nodes[g.edges[1].target].id == "C");
  CHECK(g.edges[1].weight == 3.5);
  CHECK(g.edges[1].contributing == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("cap and drill-down keep nodes expanded") {
  const auto t = figure_tree();
  std::vector<LeafEdge> e{{K("src:1"), K("tgt:1"), 1.0, 0}, {K("src:2"), K("tgt:2"), 2.0, 0}};
  const auto blocked = compute_blocked_set(e, t);
  CompressConfig tiny;
  tiny.cap = 1;
  CHECK(compress_graph(e, t, blocked, tiny).nodes.size() == 4);
  CompressConfig drill;
  drill.exclude = {"A"};
  const auto g = compress_graph(e, t, blocked, drill);
  CHECK(g.nodes.size() == 3);
  CHECK(g.nodes[0].id == "src:1");
}

TEST_CASE("fully blocked payload is shown as is") {
  // A and C hold one active leaf each and B is blocked by its own edge, so
  // nothing collapses.
  const auto t = figure_tree();
  std::vector<LeafEdge> e{{K("src:1"), K("tgt:1"), 1.0, 0}, {K("src:3"), K("tgt:3"), 2.0, 0}};
  const auto g = compress_graph(e, t, compute_blocked_set(e, t), {});
  CHECK(g.nodes.size() == 4);
  for (const auto& n : g.nodes) CHECK(!n.supernode);
  CHECK(g.edges.size() == 2);
}

TEST_CASE("random payloads project like the oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<FeatureKey> leaves;
    const auto ns = 3 + rng.index(10), nt = 3 + rng.index(10);
    for (std::uint32_t i = 0; i < ns; ++i) leaves.push_back({Site::Source, i});
    for (std::uint32_t i = 0; i < nt; ++i) leaves.push_back({Site::Target, i});
    const auto t = random_tree(rng, leaves);
    std::vector<LeafEdge> e;
    std::set<std::pair<FeatureKey, FeatureKey>> seen;
    const auto n = 1 + rng.index(20);
    for (std::size_t i = 0; i < n; ++i) {
      FeatureKey a{Site::Source, static_cast<std::uint32_t>(rng.index(ns))};
      FeatureKey b{Site::Target, static_cast<std::uint32_t>(rng.index(nt))};
      if (seen.insert({a, b}).second) e.push_back({a, b, rng.uniform(0.1, 5.0), 0});
    }
    const auto blocked = compute_blocked_set(e, t);
    // Blocked = every LCA and its ancestors, by path intersection.
    std::vector<bool> want(t.size(), false);
    for (const auto& x : e) {
      auto l = lca_oracle(t, *t.leaf_of(x.source), *t.leaf_of(x.target));
      want[l] = true;
      while (t.node(l).parent) want[l = *t.node(l).parent] = true;
    }
    CHECK(blocked == want);

    CompressConfig cfg;
    cfg.cap = 2 + rng.index(10);
    const auto g = compress_graph(e, t, blocked, cfg);
    std::map<FeatureKey, std::size_t> owner;
    for (std::size_t d = 0; d < g.nodes.size(); ++d) {
      for (auto k : g.nodes[d].members) CHECK(owner.emplace(k, d).second);
    }
    std::map<std::pair<std::size_t, std::size_t>, double> proj;
    double total = 0;
    for (const auto& x : e) {
      const auto s = owner.at(x.source), d = owner.at(x.target);
      CHECK(s != d);
      proj[{s, d}] += x.weight;
      total += x.weight;
    }
    REQUIRE(g.edges.size() == proj.size());
    double shown = 0;
    for (const auto& se : g.edges) {
      CHECK(rel_close(se.weight, proj.at({se.source, se.target}), 1e-12));
      shown += se.weight;
    }
    CHECK(rel_close(shown, total, 1e-12));
    CHECK(rel_close(g.displayed_weight, g.payload_weight, 1e-12));
  }
}
