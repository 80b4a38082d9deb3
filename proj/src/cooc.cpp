#include "forge/cooc.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "forge/errors.hpp"

namespace forge {

using nlohmann::json;

std::vector<std::map<std::uint32_t, std::size_t>> cooccurrence_counts(const PresenceMatrix& x) {
  std::vector<std::map<std::uint32_t, std::size_t>> counts(x.columns.size());
  for (const auto& row : x.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      for (std::size_t j = i + 1; j < row.size(); ++j) {
        ++counts[row[i]][row[j]];
        ++counts[row[j]][row[i]];
      }
    }
  }
  return counts;
}

CoocGraph build_cooc_graph(const PresenceMatrix& x, std::size_t top_k) {
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  CoocGraph g;
  g.granularity = x.granularity;
  g.columns = x.columns;
  g.top_k = top_k;
  g.diag = x.column_counts();
  for (std::uint32_t c = 0; c < g.diag.size(); ++c) {
    if (g.diag[c] > 0) g.nodes.push_back(c);
  }

  const auto counts = cooccurrence_counts(x);
  // (a, b) with a < b -> best rank
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> kept;
  struct Candidate {
    std::uint32_t col;
    std::size_t count;
    double j;
  };
  std::vector<Candidate> cands;
  for (auto a : g.nodes) {
    cands.clear();
    for (const auto& [b, c] : counts[a]) cands.push_back({b, c, jaccard(c, g.diag[a], g.diag[b])});
    const auto keep = std::min(top_k, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [&](const Candidate& l, const Candidate& r) {
                        if (l.j != r.j) return l.j > r.j;
                        if (l.count != r.count) return l.count > r.count;
                        return l.col < r.col;  // columns ascend with feature index
                      });
    for (std::size_t r = 0; r < keep; ++r) {
      const auto key = std::minmax(a, cands[r].col);
      const auto rank = static_cast<std::uint32_t>(r + 1);
      auto [it, inserted] = kept.emplace(key, rank);
      if (!inserted) it->second = std::min(it->second, rank);
    }
  }
  g.edges.reserve(kept.size());
  for (const auto& [ab, rank] : kept) {
    const auto c = counts[ab.first].at(ab.second);
    g.edges.push_back({ab.first, ab.second, c, jaccard(c, g.diag[ab.first], g.diag[ab.second]), rank});
  }
  return g;
}

json CoocGraph::to_json() const {
  json jn = json::array();
  for (auto c : nodes) jn.push_back({{"id", to_string(columns.key(c))}, {"count", diag[c]}});
  json je = json::array();
  for (const auto& e : edges) {
    je.push_back({{"source", to_string(columns.key(e.a))},
                  {"target", to_string(columns.key(e.b))},
                  {"count", e.count},
                  {"jaccard", e.jaccard},
                  {"rank", e.rank}});
  }
  return {{"kind", "cooc"},
          {"granularity", granularity_name(granularity)},
          {"site", site_name(columns.site())},
          {"top_k", top_k},
          {"nodes", std::move(jn)},
          {"edges", std::move(je)}};
}

CoocGraph CoocGraph::from_json(const json& doc) {
  if (doc.value("kind", std::string()) != "cooc") throw SchemaError("not a co-occurrence graph document");
  CoocGraph g;
  g.granularity = parse_granularity(doc.at("granularity").get<std::string>());
  g.top_k = doc.at("top_k").get<std::size_t>();
  const Site site = parse_site(doc.at("site").get<std::string>());
  std::vector<std::uint32_t> idx;
  for (const auto& n : doc.at("nodes")) idx.push_back(parse_feature_key(n.at("id").get<std::string>()).index);
  g.columns = FeatureColumns(site, idx);
  g.diag.assign(g.columns.size(), 0);
  for (const auto& n : doc.at("nodes")) {
    const auto c = g.columns.column_of(parse_feature_key(n.at("id").get<std::string>()).index);
    g.diag[c] = n.at("count").get<std::size_t>();
  }
  for (std::uint32_t c = 0; c < g.columns.size(); ++c) {
    if (g.diag[c] > 0) g.nodes.push_back(c);
  }
  auto col = [&](const json& v) {
    const auto key = parse_feature_key(v.get<std::string>());
    const auto c = g.columns.column_of(key.index);
    if (key.site != site || c < 0) throw SchemaError("edge endpoint " + v.get<std::string>() + " is not a node");
    return static_cast<std::uint32_t>(c);
  };
  for (const auto& e : doc.at("edges")) {
    CoocEdge edge;
    edge.a = col(e.at("source"));
    edge.b = col(e.at("target"));
    edge.count = e.at("count").get<std::size_t>();
    edge.jaccard = e.at("jaccard").get<double>();
    edge.rank = e.at("rank").get<std::uint32_t>();
    g.edges.push_back(edge);
  }
  return g;
}

}  // namespace forge
