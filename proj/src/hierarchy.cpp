#include "forge/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "forge/errors.hpp"
#include "forge/text.hpp"

namespace forge {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

Eigen::MatrixXd pca_project(const Eigen::MatrixXd& data, std::size_t dim) {
  const auto n = data.rows();
  const auto d = data.cols();
  if (n == 0 || d == 0) return Eigen::MatrixXd(n, 0);
  auto p = static_cast<Eigen::Index>(dim);
  p = std::min({p, d, std::max<Eigen::Index>(n - 1, 1)});
  p = std::max<Eigen::Index>(p, 1);

  const Eigen::RowVectorXd mean = data.colwise().mean();
  const Eigen::MatrixXd centered = data.rowwise() - mean;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  Eigen::MatrixXd axes = svd.matrixV();
  p = std::min(p, axes.cols());
  axes.conservativeResize(Eigen::NoChange, p);
  for (Eigen::Index c = 0; c < p; ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < axes.rows(); ++r) {
      if (std::abs(axes(r, c)) > std::abs(axes(best, c)) + 1e-12) best = r;
    }
    if (axes(best, c) < 0.0) axes.col(c) *= -1.0;
  }
  return centered * axes;
}

namespace {

double sq_dist(const Eigen::MatrixXd& pts, Eigen::Index a, Eigen::Index b) {
  return (pts.row(a) - pts.row(b)).squaredNorm();
}

double dist_to(const Eigen::MatrixXd& pts, Eigen::Index a, const Eigen::RowVectorXd& c) {
  return (pts.row(a) - c).norm();
}

}  // namespace

std::vector<std::vector<std::uint32_t>> knn_lists(const Eigen::MatrixXd& points, std::size_t k) {
  const auto n = static_cast<std::size_t>(points.rows());
  std::vector<std::vector<std::uint32_t>> out(n);
  if (n < 2) return out;
  k = std::min(k, n - 1);
  std::vector<std::pair<double, std::uint32_t>> cand;
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) {
        cand.emplace_back(sq_dist(points, static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)),
                          static_cast<std::uint32_t>(j));
      }
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t r = 0; r < k; ++r) out[i].push_back(cand[r].second);
  }
  return out;
}

std::vector<std::vector<std::uint32_t>> mutual_knn(const Eigen::MatrixXd& points, std::size_t k) {
  const auto lists = knn_lists(points, k);
  std::vector<std::set<std::uint32_t>> sets(lists.size());
  for (std::size_t i = 0; i < lists.size(); ++i) sets[i].insert(lists[i].begin(), lists[i].end());
  std::vector<std::vector<std::uint32_t>> adj(lists.size());
  for (std::size_t i = 0; i < lists.size(); ++i) {
    for (auto j : sets[i]) {
      if (sets[j].count(static_cast<std::uint32_t>(i))) adj[i].push_back(j);
    }
  }
  return adj;
}

NeighborGeometry build_neighbor_geometry(const FeatureCatalog& catalog, std::span<const FeatureKey> universe,
                                         const GeometryConfig& config) {
  NeighborGeometry g;
  g.features.assign(universe.begin(), universe.end());
  std::sort(g.features.begin(), g.features.end());
  g.features.erase(std::unique(g.features.begin(), g.features.end()), g.features.end());
  g.k = config.k;
  if (g.features.empty()) return g;

  std::size_t dim = 0;
  for (auto key : g.features) {
    if (!catalog.contains(key) || catalog.at(key).embedding.empty()) {
      throw NotFoundError("feature " + to_string(key) + " has no description embedding");
    }
    const auto len = catalog.at(key).embedding.size();
    if (dim == 0) dim = len;
    if (len != dim) throw ShapeError("embedding of " + to_string(key) + " has length " + std::to_string(len) +
                                     ", expected " + std::to_string(dim));
  }
  Eigen::MatrixXd data(static_cast<Eigen::Index>(g.features.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < g.features.size(); ++i) {
    const auto& e = catalog.at(g.features[i]).embedding;
    for (std::size_t j = 0; j < dim; ++j) data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = e[j];
  }
  g.coords = pca_project(data, config.pca_dim);
  g.pca_dim = static_cast<std::size_t>(g.coords.cols());
  g.adjacency = mutual_knn(g.coords, config.k);
  return g;
}

// ---------------------------------------------------------------------------
// Tree structure
// ---------------------------------------------------------------------------

std::size_t branching_factor(std::size_t n, const TreeConfig& config) {
  const auto b = static_cast<std::size_t>(std::ceil(std::cbrt(static_cast<double>(n)) - 1e-12));
  return std::clamp(b, config.min_branching, config.max_branching);
}

AbstractionTree::AbstractionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw SchemaError("tree has no root");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!index_.emplace(nodes_[i].id, i).second) throw SchemaError("duplicate tree node id '" + nodes_[i].id + "'");
    if (nodes_[i].feature && !leaf_index_.emplace(*nodes_[i].feature, i).second) {
      throw SchemaError("feature " + to_string(*nodes_[i].feature) + " appears in two leaves");
    }
    if ((i == 0) != !nodes_[i].parent.has_value()) throw SchemaError("node 0 must be the only parentless node");
    for (auto c : nodes_[i].children) {
      if (c >= nodes_.size() || nodes_[c].parent != i) throw SchemaError("inconsistent parent/child link at " + nodes_[i].id);
    }
  }
  // Depths top-down, leaf sets bottom-up; children always follow parents.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].parent) {
      if (*nodes_[i].parent >= i) throw SchemaError("tree nodes must be listed parent-first");
      nodes_[i].depth = nodes_[*nodes_[i].parent].depth + 1;
    }
  }
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    auto& n = nodes_[i];
    n.leaves.clear();
    if (n.feature) {
      if (!n.children.empty()) throw SchemaError("leaf " + n.id + " has children");
      n.leaves.push_back(*n.feature);
      continue;
    }
    for (auto c : n.children) n.leaves.insert(n.leaves.end(), nodes_[c].leaves.begin(), nodes_[c].leaves.end());
    std::sort(n.leaves.begin(), n.leaves.end());
  }
}

std::optional<std::size_t> AbstractionTree::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t AbstractionTree::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  throw NotFoundError("unknown tree node '" + std::string(id) + "'");
}

std::optional<std::size_t> AbstractionTree::leaf_of(FeatureKey key) const {
  auto it = leaf_index_.find(key);
  if (it == leaf_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<FeatureKey> AbstractionTree::leaves() const { return nodes_.front().leaves; }

std::vector<std::size_t> AbstractionTree::ancestors(std::size_t i) const {
  std::vector<std::size_t> out;
  while (nodes_[i].parent) {
    i = *nodes_[i].parent;
    out.push_back(i);
  }
  return out;
}

bool AbstractionTree::is_ancestor(std::size_t ancestor, std::size_t node) const {
  while (nodes_[node].depth > nodes_[ancestor].depth) node = *nodes_[node].parent;
  return node == ancestor;
}

std::size_t AbstractionTree::lca(std::size_t a, std::size_t b) const {
  while (nodes_[a].depth > nodes_[b].depth) a = *nodes_[a].parent;
  while (nodes_[b].depth > nodes_[a].depth) b = *nodes_[b].parent;
  while (a != b) {
    a = *nodes_[a].parent;
    b = *nodes_[b].parent;
  }
  return a;
}

std::vector<FeatureKey> AbstractionTree::slice(std::span<const std::string> ids) const {
  std::set<FeatureKey> out;
  for (const auto& id : ids) {
    const auto& leaves = nodes_[index_of(id)].leaves;
    out.insert(leaves.begin(), leaves.end());
  }
  return {out.begin(), out.end()};
}

json AbstractionTree::to_json() const {
  json nodes = json::array();
  for (const auto& n : nodes_) {
    json children = json::array();
    for (auto c : n.children) children.push_back(nodes_[c].id);
    json negatives = json::array();
    for (auto k : n.grounding.boundary_negatives) negatives.push_back(to_string(k));
    json j = {{"id", n.id},
              {"parent", n.parent ? json(nodes_[*n.parent].id) : json(nullptr)},
              {"children", std::move(children)},
              {"size", n.leaves.size()},
              {"label", n.label},
              {"label_fallback", n.label_fallback}};
    if (n.feature) j["feature"] = to_string(*n.feature);
    if (!n.is_leaf()) {
      j["grounding"] = {{"representatives", n.grounding.representatives},
                        {"extremes", n.grounding.extremes},
                        {"boundary_negatives", std::move(negatives)},
                        {"leaf_anchors", n.grounding.leaf_anchors}};
    }
    nodes.push_back(std::move(j));
  }
  return {{"kind", "tree"}, {"metadata", metadata}, {"nodes", std::move(nodes)}};
}

AbstractionTree AbstractionTree::from_json(const json& doc) {
  if (doc.value("kind", std::string()) != "tree") throw SchemaError("not a tree document");
  const auto& arr = doc.at("nodes");
  std::unordered_map<std::string, std::size_t> ids;
  for (std::size_t i = 0; i < arr.size(); ++i) ids.emplace(arr[i].at("id").get<std::string>(), i);
  auto resolve = [&](const std::string& id) {
    auto it = ids.find(id);
    if (it == ids.end()) throw SchemaError("tree references unknown node '" + id + "'");
    return it->second;
  };
  std::vector<TreeNode> nodes(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& j = arr[i];
    auto& n = nodes[i];
    n.id = j.at("id").get<std::string>();
    if (!j.at("parent").is_null()) n.parent = resolve(j.at("parent").get<std::string>());
    for (const auto& c : j.at("children")) n.children.push_back(resolve(c.get<std::string>()));
    if (j.contains("feature")) n.feature = parse_feature_key(j.at("feature").get<std::string>());
    n.label = j.value("label", std::string());
    n.label_fallback = j.value("label_fallback", false);
    if (j.contains("grounding")) {
      const auto& g = j.at("grounding");
      n.grounding.representatives = g.at("representatives").get<std::vector<std::string>>();
      n.grounding.extremes = g.at("extremes").get<std::vector<std::string>>();
      for (const auto& k : g.at("boundary_negatives")) n.grounding.boundary_negatives.push_back(parse_feature_key(k.get<std::string>()));
      n.grounding.leaf_anchors = g.at("leaf_anchors").get<std::vector<std::string>>();
    }
  }
  AbstractionTree tree(std::move(nodes));
  tree.metadata = doc.value("metadata", json::object());
  return tree;
}

// ---------------------------------------------------------------------------
// Growth
// ---------------------------------------------------------------------------

namespace {

class TreeGrower {
 public:
  TreeGrower(const NeighborGeometry& g, const TreeConfig& c) : geo_(g), cfg_(c) {}

  std::vector<TreeNode> run() {
    std::vector<std::uint32_t> all(geo_.features.size());
    std::iota(all.begin(), all.end(), 0u);
    nodes_.clear();
    nodes_.push_back(TreeNode{});
    nodes_[0].id = "n0";
    expand(0, all);
    return std::move(nodes_);
  }

 private:
  const NeighborGeometry& geo_;
  const TreeConfig& cfg_;
  std::vector<TreeNode> nodes_;
  std::size_t internal_count_ = 1;

  double dist(std::uint32_t a, std::uint32_t b) const { return std::sqrt(sq_dist(geo_.coords, a, b)); }

  Eigen::RowVectorXd centroid(const std::vector<std::uint32_t>& pts) const {
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(geo_.coords.cols());
    for (auto p : pts) c += geo_.coords.row(p);
    return pts.empty() ? c : Eigen::RowVectorXd(c / static_cast<double>(pts.size()));
  }

  // Connected-component id of each point within the induced mutual-kNN subgraph.
  std::unordered_map<std::uint32_t, std::size_t> components(const std::vector<std::uint32_t>& pts,
                                                            std::size_t* count = nullptr) const {
    std::unordered_map<std::uint32_t, std::size_t> comp;
    std::set<std::uint32_t> members(pts.begin(), pts.end());
    std::size_t next = 0;
    for (auto p : pts) {
      if (comp.count(p)) continue;
      std::vector<std::uint32_t> stack = {p};
      comp[p] = next;
      while (!stack.empty()) {
        auto u = stack.back();
        stack.pop_back();
        for (auto v : geo_.adjacency[u]) {
          if (members.count(v) && !comp.count(v)) {
            comp[v] = next;
            stack.push_back(v);
          }
        }
      }
      ++next;
    }
    if (count) *count = next;
    return comp;
  }

  std::vector<std::uint32_t> farthest_first(const std::vector<std::uint32_t>& pts, std::size_t b) const {
    const auto c = centroid(pts);
    std::vector<std::uint32_t> seeds;
    std::uint32_t first = pts.front();
    double best = -1.0;
    for (auto p : pts) {
      const double d = dist_to(geo_.coords, p, c);
      if (d > best + 1e-12) {
        best = d;
        first = p;
      }
    }
    seeds.push_back(first);
    std::vector<double> nearest(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) nearest[i] = dist(pts[i], first);
    while (seeds.size() < b) {
      std::size_t pick = pts.size();
      double far = -1.0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (std::find(seeds.begin(), seeds.end(), pts[i]) != seeds.end()) continue;
        if (nearest[i] > far + 1e-12) {
          far = nearest[i];
          pick = i;
        }
      }
      if (pick == pts.size()) break;
      seeds.push_back(pts[pick]);
      for (std::size_t i = 0; i < pts.size(); ++i) nearest[i] = std::min(nearest[i], dist(pts[i], pts[pick]));
    }
    return seeds;
  }

  std::vector<std::vector<std::uint32_t>> assign(const std::vector<std::uint32_t>& pts,
                                                 const std::vector<std::uint32_t>& seeds) const {
    const auto comp = components(pts);
    std::vector<std::vector<std::uint32_t>> groups(seeds.size());
    for (auto p : pts) {
      std::size_t best = seeds.size();
      double best_d = 0.0;
      bool best_reachable = false;
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        const bool reachable = comp.at(p) == comp.at(seeds[s]);
        const double d = dist(p, seeds[s]);
        const bool better = best == seeds.size() || (reachable && !best_reachable) ||
                            (reachable == best_reachable && d < best_d - 1e-12);
        if (better) {
          best = s;
          best_d = d;
          best_reachable = reachable;
        }
      }
      groups[best].push_back(p);
    }
    return groups;
  }

  bool coherent(const std::vector<std::uint32_t>& child, double spacing) const {
    if (child.empty()) return false;
    const auto c = centroid(child);
    double radius = 0.0;
    for (auto p : child) radius += dist_to(geo_.coords, p, c);
    radius /= static_cast<double>(child.size());
    std::size_t ncomp = 0;
    components(child, &ncomp);
    const auto allowed = (child.size() + 3) / 4;
    return radius <= cfg_.diffuse_ratio * spacing && ncomp <= allowed;
  }

  std::uint32_t medoid(const std::vector<std::uint32_t>& child) const {
    std::uint32_t best = child.front();
    double best_sum = std::numeric_limits<double>::infinity();
    for (auto p : child) {
      double s = 0.0;
      for (auto q : child) s += dist(p, q);
      if (s < best_sum - 1e-12) {
        best_sum = s;
        best = p;
      }
    }
    return best;
  }

  std::vector<std::vector<std::uint32_t>> split(const std::vector<std::uint32_t>& pts) const {
    const auto b = std::min(branching_factor(pts.size(), cfg_), pts.size());
    auto seeds = farthest_first(pts, b);
    auto groups = assign(pts, seeds);

    double spacing = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      for (std::size_t j = i + 1; j < seeds.size(); ++j, ++pairs) spacing += dist(seeds[i], seeds[j]);
    }
    spacing = pairs ? spacing / static_cast<double>(pairs) : 0.0;

    bool reseeded = false;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      if (!groups[s].empty() && !coherent(groups[s], spacing)) {
        seeds[s] = medoid(groups[s]);
        reseeded = true;
      }
    }
    if (reseeded) groups = assign(pts, seeds);

    const bool degenerate = std::any_of(groups.begin(), groups.end(), [&](const auto& g) {
      return g.empty() || g.size() == pts.size();
    });
    if (degenerate) {
      // Coincident or otherwise unsplittable points: equal chunks in index order.
      groups.assign(b, {});
      for (std::size_t i = 0; i < pts.size(); ++i) groups[i * b / pts.size()].push_back(pts[i]);
    }
    for (auto& g : groups) std::sort(g.begin(), g.end());
    std::sort(groups.begin(), groups.end(), [](const auto& x, const auto& y) { return x.front() < y.front(); });
    return groups;
  }

  std::size_t add_leaf(std::size_t parent, std::uint32_t p) {
    TreeNode leaf;
    leaf.feature = geo_.features[p];
    leaf.id = to_string(*leaf.feature);
    leaf.parent = parent;
    nodes_.push_back(std::move(leaf));
    return nodes_.size() - 1;
  }

  void expand(std::size_t node, const std::vector<std::uint32_t>& pts) {
    if (pts.size() <= cfg_.max_leaf_group) {
      for (auto p : pts) {
        const auto leaf = add_leaf(node, p);
        nodes_[node].children.push_back(leaf);
      }
      return;
    }
    for (const auto& group : split(pts)) {
      if (group.size() == 1) {
        const auto leaf = add_leaf(node, group.front());
        nodes_[node].children.push_back(leaf);
        continue;
      }
      TreeNode child;
      child.id = "n" + std::to_string(internal_count_++);
      child.parent = node;
      nodes_.push_back(std::move(child));
      const auto idx = nodes_.size() - 1;
      nodes_[node].children.push_back(idx);
      expand(idx, group);
    }
  }
};

}  // namespace

AbstractionTree grow_abstraction_tree(const NeighborGeometry& geometry, const TreeConfig& config) {
  if (config.max_leaf_group < 1 || config.min_branching < 2 || config.max_branching < config.min_branching) {
    throw ConfigError("invalid tree limits");
  }
  AbstractionTree tree(TreeGrower(geometry, config).run());
  tree.metadata = {{"max_leaf_group", config.max_leaf_group},
                   {"branching", "clamp(ceil(cbrt(n)), " + std::to_string(config.min_branching) + ", " +
                                     std::to_string(config.max_branching) + ")"},
                   {"diffuse_ratio", config.diffuse_ratio},
                   {"pca_dim", geometry.pca_dim},
                   {"k", geometry.k},
                   {"leaves", geometry.features.size()}};
  return tree;
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

namespace {

std::size_t row_of(const NeighborGeometry& g, FeatureKey key) {
  auto it = std::lower_bound(g.features.begin(), g.features.end(), key);
  if (it == g.features.end() || *it != key) throw NotFoundError("feature " + to_string(key) + " not in geometry");
  return static_cast<std::size_t>(it - g.features.begin());
}

Eigen::RowVectorXd leaf_centroid(const NeighborGeometry& g, const std::vector<FeatureKey>& leaves) {
  Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(g.coords.cols());
  for (auto k : leaves) c += g.coords.row(static_cast<Eigen::Index>(row_of(g, k)));
  return leaves.empty() ? c : Eigen::RowVectorXd(c / static_cast<double>(leaves.size()));
}

}  // namespace

Grounding ground_node(const AbstractionTree& tree, std::size_t node, const NeighborGeometry& geometry,
                      const FeatureCatalog& catalog) {
  const auto& n = tree.node(node);
  Grounding g;
  if (n.is_leaf() || n.leaves.empty()) return g;
  const auto center = leaf_centroid(geometry, n.leaves);

  std::vector<Eigen::RowVectorXd> pos;
  for (auto c : n.children) pos.push_back(leaf_centroid(geometry, tree.node(c).leaves));

  std::vector<std::size_t> order(n.children.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return (pos[a] - center).norm() < (pos[b] - center).norm(); });
  for (std::size_t i = 0; i < std::min<std::size_t>(4, order.size()); ++i) {
    g.representatives.push_back(tree.node(n.children[order[i]]).id);
  }

  if (n.children.size() >= 2) {
    std::size_t bi = 0, bj = 1;
    double far = -1.0;
    for (std::size_t i = 0; i < pos.size(); ++i) {
      for (std::size_t j = i + 1; j < pos.size(); ++j) {
        const double d = (pos[i] - pos[j]).norm();
        if (d > far + 1e-12) {
          far = d;
          bi = i;
          bj = j;
        }
      }
    }
    g.extremes = {tree.node(n.children[bi]).id, tree.node(n.children[bj]).id};
  }

  auto by_distance = [&](std::vector<FeatureKey> keys) {
    std::vector<std::pair<double, FeatureKey>> ranked;
    for (auto k : keys) {
      ranked.emplace_back((geometry.coords.row(static_cast<Eigen::Index>(row_of(geometry, k))) - center).norm(), k);
    }
    std::sort(ranked.begin(), ranked.end());
    return ranked;
  };

  std::vector<FeatureKey> outside;
  for (auto k : tree.node(tree.root()).leaves) {
    if (!std::binary_search(n.leaves.begin(), n.leaves.end(), k)) outside.push_back(k);
  }
  for (const auto& [d, k] : by_distance(outside)) {
    if (g.boundary_negatives.size() == 3) break;
    g.boundary_negatives.push_back(k);
  }
  for (const auto& [d, k] : by_distance(n.leaves)) {
    if (g.leaf_anchors.size() == 5) break;
    const auto& desc = catalog.description(k);
    if (!text::trim(desc).empty()) g.leaf_anchors.push_back(desc);
  }
  return g;
}

json summary_request(const AbstractionTree& tree, std::size_t node) {
  const auto& n = tree.node(node);
  auto labelled = [&](const std::vector<std::string>& ids) {
    json arr = json::array();
    for (const auto& id : ids) arr.push_back({{"id", id}, {"label", tree.node(tree.index_of(id)).label}});
    return arr;
  };
  json negatives = json::array();
  for (auto k : n.grounding.boundary_negatives) {
    negatives.push_back({{"id", to_string(k)}, {"label", tree.node(*tree.leaf_of(k)).label}});
  }
  json children = json::array();
  for (auto c : n.children) children.push_back({{"id", tree.node(c).id}, {"label", tree.node(c).label}});
  return {{"task", "summarize_group"},
          {"node_id", n.id},
          {"children", std::move(children)},
          {"representatives", labelled(n.grounding.representatives)},
          {"extremes", labelled(n.grounding.extremes)},
          {"boundary_negatives", std::move(negatives)},
          {"leaf_anchors", n.grounding.leaf_anchors},
          {"response_fields", {"label"}}};
}

void summarize_tree(AbstractionTree& tree, const NeighborGeometry& geometry, const FeatureCatalog& catalog,
                    TextClient& summarizer) {
  for (std::size_t i = tree.size(); i-- > 0;) {
    auto& n = tree.mutable_node(i);
    if (n.is_leaf()) {
      n.label = catalog.description(*n.feature);
      continue;
    }
    n.grounding = ground_node(tree, i, geometry, catalog);
    std::string label;
    try {
      const auto reply = json::parse(summarizer.send(summary_request(tree, i)), nullptr, false);
      if (reply.is_object() && reply.contains("label") && reply["label"].is_string()) {
        label = text::trim(reply["label"].get<std::string>());
      }
    } catch (const TransportError& e) {
      spdlog::warn("summary for {} failed: {}", n.id, e.what());
    }
    auto& node = tree.mutable_node(i);
    node.label_fallback = label.empty();
    node.label = label.empty() ? "group:" + node.id : label;
  }
  tree.metadata["summarizer"] = summarizer.id();
}

std::string StubSummarizer::send(const json& request) {
  const auto anchors = request.at("leaf_anchors").get<std::vector<std::string>>();
  std::string label;
  for (const auto& w : text::top_content_words(anchors, 2)) label += (label.empty() ? "" : " ") + w;
  return json{{"label", label}}.dump();
}

}  // namespace forge
