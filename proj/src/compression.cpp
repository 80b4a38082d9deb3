#include "forge/compression.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "forge/errors.hpp"

namespace forge {

using nlohmann::json;

std::vector<LeafEdge> payload_edges(const DynamicMechanismGraph& graph) {
  std::vector<LeafEdge> out;
  out.reserve(graph.edges.size());
  for (const auto& e : graph.edges) {
    out.push_back({{Site::Source, e.source}, {Site::Target, e.target}, e.weight, e.strongest_latent});
  }
  return out;
}

namespace {

std::size_t leaf_or_throw(const AbstractionTree& tree, FeatureKey key) {
  if (auto i = tree.leaf_of(key)) return *i;
  throw NotFoundError("payload endpoint " + to_string(key) + " is not a leaf of the tree");
}

}  // namespace

std::vector<bool> compute_blocked_set(std::span<const LeafEdge> edges, const AbstractionTree& tree) {
  std::vector<bool> blocked(tree.size(), false);
  for (const auto& e : edges) {
    auto node = tree.lca(leaf_or_throw(tree, e.source), leaf_or_throw(tree, e.target));
    while (true) {
      if (blocked[node]) break;  // ancestors already marked
      blocked[node] = true;
      if (!tree.node(node).parent) break;
      node = *tree.node(node).parent;
    }
  }
  return blocked;
}

CompressedGraph compress_graph(std::span<const LeafEdge> edges, const AbstractionTree& tree,
                               const std::vector<bool>& blocked, const CompressConfig& config) {
  if (blocked.size() != tree.size()) throw PreconditionError("blocked set does not match the tree");
  CompressedGraph out;
  out.config = config;
  out.payload.assign(edges.begin(), edges.end());

  std::vector<bool> excluded(tree.size(), false);
  for (const auto& id : config.exclude) excluded[tree.index_of(id)] = true;

  std::set<FeatureKey> active;
  for (const auto& e : edges) {
    leaf_or_throw(tree, e.source);
    leaf_or_throw(tree, e.target);
    active.insert(e.source);
    active.insert(e.target);
  }
  for (std::size_t i = 0; i < tree.size(); ++i) {
    if (blocked[i] && !tree.node(i).is_leaf()) out.blocked.push_back(tree.node(i).id);
  }
  std::sort(out.blocked.begin(), out.blocked.end());

  // Greedy top-down cover in preorder.
  std::map<FeatureKey, std::size_t> cover;
  std::vector<std::size_t> stack = {tree.root()};
  while (!stack.empty()) {
    const auto i = stack.back();
    stack.pop_back();
    const auto& n = tree.node(i);
    std::vector<FeatureKey> members;
    for (auto k : n.leaves) {
      if (active.count(k)) members.push_back(k);
    }
    if (members.empty()) continue;
    const bool eligible = !n.is_leaf() && members.size() >= 2 && !blocked[i] && n.leaves.size() <= config.cap &&
                          !excluded[i];
    if (n.is_leaf() || eligible) {
      DisplayNode d;
      d.tree_node = i;
      d.id = n.id;
      d.supernode = !n.is_leaf();
      d.label = n.label;
      d.members = members;
      d.descendant_leaves = n.leaves.size();
      for (auto k : members) cover[k] = out.nodes.size();
      out.nodes.push_back(std::move(d));
      continue;
    }
    for (auto c = n.children.rbegin(); c != n.children.rend(); ++c) stack.push_back(*c);
  }

  std::map<std::pair<std::size_t, std::size_t>, SuperEdge> agg;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto s = cover.at(edges[i].source);
    const auto t = cover.at(edges[i].target);
    if (s == t) throw PreconditionError("blocked set does not cover edge " + to_string(edges[i].source) + " -> " +
                                        to_string(edges[i].target));
    auto& se = agg[{s, t}];
    se.source = s;
    se.target = t;
    se.weight += edges[i].weight;
    se.contributing.push_back(i);
    out.payload_weight += edges[i].weight;
  }
  for (auto& [key, se] : agg) {
    out.displayed_weight += se.weight;
    out.edges.push_back(std::move(se));
  }
  std::stable_sort(out.edges.begin(), out.edges.end(),
                   [](const SuperEdge& a, const SuperEdge& b) { return a.weight > b.weight; });
  return out;
}

CompressedGraph compress_mechanism(const DynamicMechanismGraph& graph, const AbstractionTree& tree,
                                   const CompressConfig& config) {
  const auto edges = payload_edges(graph);
  auto out = compress_graph(edges, tree, compute_blocked_set(edges, tree), config);
  json caps = json::array();
  for (const auto& [k, c] : graph.captions) caps.push_back(c.to_json());
  out.context = {{"unit", graph.unit},
                 {"granularity", granularity_name(graph.granularity)},
                 {"gate_mode", gate_mode_name(graph.config.gate_mode)},
                 {"caption_mode", graph.caption_mode},
                 {"edges_total", graph.edges_total},
                 {"edge_cap", graph.config.edge_cap},
                 {"captions", std::move(caps)}};
  return out;
}

json CompressedGraph::to_json() const {
  json nodes_json = json::array();
  for (const auto& n : nodes) {
    json members_json = json::array();
    for (auto k : n.members) members_json.push_back(to_string(k));
    nodes_json.push_back({{"id", n.id},
                          {"kind", n.supernode ? "supernode" : "leaf"},
                          {"label", n.label},
                          {"members", std::move(members_json)},
                          {"descendant_leaves", n.descendant_leaves}});
  }
  json edges_json = json::array();
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    json contrib = json::array();
    for (auto c : e.contributing) {
      const auto& p = payload[c];
      contrib.push_back({{"source", to_string(p.source)},
                         {"target", to_string(p.target)},
                         {"weight", p.weight},
                         {"strongest_latent", p.strongest_latent}});
    }
    edges_json.push_back({{"id", i + 1},
                          {"source", nodes[e.source].id},
                          {"target", nodes[e.target].id},
                          {"weight", e.weight},
                          {"aggregated", nodes[e.source].supernode || nodes[e.target].supernode},
                          {"contributing", std::move(contrib)}});
  }
  json j = {{"kind", "compressed"},
            {"cap", config.cap},
            {"cap_rule", "max_descendant_leaves"},
            {"excluded", config.exclude},
            {"blocked", blocked},
            {"payload_weight", payload_weight},
            {"displayed_weight", displayed_weight},
            {"nodes", std::move(nodes_json)},
            {"edges", std::move(edges_json)}};
  for (const auto& [k, v] : context.items()) j[k] = v;
  return j;
}

}  // namespace forge
