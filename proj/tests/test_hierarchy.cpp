#include <doctest.h>

#include <sstream>

#include "forge/errors.hpp"
#include "support.hpp"

using namespace forge;
using namespace forge::testing;

namespace {

std::set<std::pair<std::uint32_t, std::uint32_t>> as_pairs(const std::vector<std::vector<std::uint32_t>>& adj) {
  std::set<std::pair<std::uint32_t, std::uint32_t>> out;
  for (std::uint32_t i = 0; i < adj.size(); ++i) {
    for (auto j : adj[i]) out.insert({std::min(i, j), std::max(i, j)});
  }
  return out;
}

bool symmetric(const std::vector<std::vector<std::uint32_t>>& adj) {
  for (std::uint32_t i = 0; i < adj.size(); ++i) {
    for (auto j : adj[i]) {
      if (!std::binary_search(adj[j].begin(), adj[j].end(), i)) return false;
    }
  }
  return true;
}

std::vector<FeatureKey> universe_of(std::size_t n) {
  std::vector<FeatureKey> u;
  for (std::uint32_t i = 0; i < n; ++i) u.push_back({Site::Source, i});
  return u;
}

// Every internal node's children partition its leaves.
void check_partition(const AbstractionTree& t, const std::vector<FeatureKey>& universe) {
  CHECK(t.node(0).leaves == universe);
  for (const auto& n : t.nodes()) {
    if (n.is_leaf()) continue;
    std::vector<FeatureKey> u;
    for (auto c : n.children) u.insert(u.end(), t.node(c).leaves.begin(), t.node(c).leaves.end());
    const auto total = u.size();
    std::sort(u.begin(), u.end());
    CHECK(std::adjacent_find(u.begin(), u.end()) == u.end());
    CHECK(total == n.leaves.size());
    CHECK(u == n.leaves);
  }
}

class EmptyClient final : public TextClient {
 public:
  std::string id() const override { return "empty"; }
  std::string send(const nlohmann::json&) override { return R"({"label": ""})"; }
};

}  // namespace

TEST_CASE("branching factor") {
  CHECK(branching_factor(8) == 2);
  CHECK(branching_factor(40) == 4);
  CHECK(branching_factor(27) == 3);
  CHECK(branching_factor(100000) == 12);
}

TEST_CASE("collinear points with k = 1") {
  Eigen::MatrixXd p(3, 1);
  p << 0.0, 1.0, 3.0;
  const auto adj = mutual_knn(p, 1);
  CHECK(as_pairs(adj) == std::set<std::pair<std::uint32_t, std::uint32_t>>{{0, 1}});
}

TEST_CASE("k at least n - 1 gives the complete graph") {
  Rng rng(1);
  Eigen::MatrixXd p(6, 3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.normal();
  CHECK(as_pairs(mutual_knn(p, 10)).size() == 15);
}

TEST_CASE("hub edges are dropped") {
  // Hub at the origin; each spoke's nearest point is the hub, but the hub's
  // own k = 2 list holds only the two closest spokes. The spokes are far
  // from each other.
  Eigen::MatrixXd p(6, 2);
  p << 0, 0, 1, 0, 0, 1.1, -1.2, 0, 0, -1.3, 0.9, 0.9;
  const auto adj = mutual_knn(p, 2);
  CHECK(as_pairs(adj) == mutual_knn_oracle(p, 2));
  CHECK(adj[0].size() <= 2);
}

TEST_CASE("mutual kNN matches brute force") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const auto n = 5 + rng.index(196);
    Eigen::MatrixXd p(static_cast<Eigen::Index>(n), 4);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.normal();
    const auto k = 1 + rng.index(15);
    const auto adj = mutual_knn(p, k);
    CHECK(symmetric(adj));
    CHECK(as_pairs(adj) == mutual_knn_oracle(p, k));
  }
}

TEST_CASE("four blobs split at the root") {
  Rng rng(9);
  std::vector<std::vector<double>> pts;
  for (int b = 0; b < 4; ++b) {
    for (int i = 0; i < 10; ++i) {
      std::vector<double> x(6, 0.0);
      x[static_cast<std::size_t>(b)] = 20.0;
      for (auto& v : x) v += 0.3 * rng.normal();
      pts.push_back(x);
    }
  }
  const auto cat = embedding_catalog(pts);
  const auto u = universe_of(40);
  const auto geo = build_neighbor_geometry(cat, u);
  const auto tree = grow_abstraction_tree(geo);
  check_partition(tree, u);
  REQUIRE(tree.node(0).children.size() == 4);
  std::set<std::set<std::uint32_t>> got, want;
  for (auto c : tree.node(0).children) {
    std::set<std::uint32_t> s;
    for (auto k : tree.node(c).leaves) s.insert(k.index);
    got.insert(s);
  }
  for (std::uint32_t b = 0; b < 4; ++b) {
    std::set<std::uint32_t> s;
    for (std::uint32_t i = 0; i < 10; ++i) s.insert(b * 10 + i);
    want.insert(s);
  }
  CHECK(got == want);
}

TEST_CASE("small universe is a single root over leaves") {
  Rng rng(4);
  std::vector<std::vector<double>> pts(6, std::vector<double>(3));
  for (auto& p : pts) {
    for (auto& v : p) v = rng.normal();
  }
  const auto geo = build_neighbor_geometry(embedding_catalog(pts), universe_of(6));
  const auto tree = grow_abstraction_tree(geo);
  CHECK(tree.size() == 7);
  CHECK(tree.node(0).children.size() == 6);
}

TEST_CASE("duplicate embeddings still give a deterministic tree") {
  std::vector<std::vector<double>> pts(30, std::vector<double>{1.0, 2.0, 3.0});
  const auto u = universe_of(30);
  const auto geo = build_neighbor_geometry(embedding_catalog(pts), u);
  const auto a = grow_abstraction_tree(geo);
  const auto b = grow_abstraction_tree(geo);
  check_partition(a, u);
  CHECK(a.to_json() == b.to_json());
  std::set<std::size_t> sizes;
  for (auto c : a.node(0).children) sizes.insert(a.node(c).leaves.size());
  CHECK(*sizes.rbegin() - *sizes.begin() <= 1);
}

TEST_CASE("geometry errors") {
  FeatureCatalog cat;
  cat.insert({Site::Source, 0}, {"a", {1.0, 2.0}, ""});
  cat.insert({Site::Source, 1}, {"b", {1.0}, ""});
  cat.insert({Site::Source, 2}, {"c", {}, ""});
  std::vector<FeatureKey> u{{Site::Source, 0}, {Site::Source, 1}};
  CHECK_THROWS_AS(build_neighbor_geometry(cat, u), ShapeError);
  std::vector<FeatureKey> v{{Site::Source, 0}, {Site::Source, 2}};
  CHECK_THROWS_AS(build_neighbor_geometry(cat, v), NotFoundError);
}

TEST_CASE("summaries and grounding") {
  // Three topics of 9 points each.
  Rng rng(21);
  std::vector<std::vector<double>> pts;
  std::vector<std::string> desc;
  const std::vector<std::string> names{"glacier moraine", "volcanic caldera", "river delta"};
  for (int t = 0; t < 3; ++t) {
    for (int i = 0; i < 9; ++i) {
      std::vector<double> x(4, 0.0);
      x[static_cast<std::size_t>(t)] = 10.0;
      for (auto& v : x) v += 0.2 * rng.normal();
      pts.push_back(x);
      desc.push_back(names[static_cast<std::size_t>(t)]);
    }
  }
  const auto cat = embedding_catalog(pts, desc);
  const auto u = universe_of(27);
  const auto geo = build_neighbor_geometry(cat, u);
  auto tree = grow_abstraction_tree(geo);
  StubSummarizer stub;
  summarize_tree(tree, geo, cat, stub);
  REQUIRE(tree.node(0).children.size() == 3);
  for (auto c : tree.node(0).children) {
    const auto& n = tree.node(c);
    const auto topic = n.leaves.front().index / 9;
    for (auto k : n.leaves) CHECK(k.index / 9 == topic);
    auto words = [](const std::string& s) {
      std::set<std::string> w;
      std::istringstream in(s);
      for (std::string x; in >> x;) w.insert(x);
      return w;
    };
    CHECK(words(n.label) == words(names[topic]));
    CHECK(!n.grounding.boundary_negatives.empty());
    for (auto k : n.grounding.boundary_negatives) CHECK(k.index / 9 != topic);
  }
  EmptyClient empty;
  summarize_tree(tree, geo, cat, empty);
  CHECK(tree.node(0).label == "group:" + tree.node(0).id);
  CHECK(tree.node(0).label_fallback);
  CHECK(AbstractionTree::from_json(tree.to_json()).to_json() == tree.to_json());
}

TEST_CASE("slices") {
  const auto t = make_tree({{"r", "", ""},
                            {"x", "r", ""},
                            {"y", "r", ""},
                            {"x1", "x", ""},
                            {"src:1", "x1", "src:1"},
                            {"src:2", "x1", "src:2"},
                            {"src:3", "x", "src:3"},
                            {"tgt:1", "y", "tgt:1"},
                            {"tgt:2", "y", "tgt:2"}});
  std::vector<std::string> root{"r"};
  CHECK(t.slice(root) == t.leaves());
  std::vector<std::string> sib{"x", "y"};
  CHECK(t.slice(sib).size() == 5);
  std::vector<std::string> nested{"x1", "x"};
  CHECK(t.slice(nested) == t.node(t.index_of("x")).leaves);
  std::vector<std::string> bad{"nope"};
  CHECK_THROWS_AS(t.slice(bad), NotFoundError);
  CHECK(t.lca(t.index_of("src:1"), t.index_of("src:3")) == t.index_of("x"));
}
