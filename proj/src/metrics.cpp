#include "forge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>

#include "forge/errors.hpp"

namespace forge {

using nlohmann::json;

DominantUnits dominant_units(const PresenceMatrix& x, const CorpusStructure& corpus) {
  if (x.granularity != Granularity::Sentence || x.num_units() != corpus.num_sentences()) {
    throw PreconditionError("dominant units need sentence-level presence over the same corpus");
  }
  const auto ncol = x.columns.size();
  auto argmax = [&](Granularity g) {
    std::vector<std::vector<std::size_t>> counts(ncol, std::vector<std::size_t>(corpus.num_units(g), 0));
    for (std::size_t s = 0; s < x.num_units(); ++s) {
      const auto u = corpus.unit_of_sentence(s, g);
      for (auto c : x.rows[s]) ++counts[c][u];
    }
    std::vector<std::size_t> out(ncol, kNoUnit);
    for (std::size_t c = 0; c < ncol; ++c) {
      std::size_t best = 0;
      for (std::size_t u = 0; u < counts[c].size(); ++u) {
        if (counts[c][u] > best) {
          best = counts[c][u];
          out[c] = u;
        }
      }
    }
    return out;
  };
  return {argmax(Granularity::Chapter), argmax(Granularity::Subchapter)};
}

// ---------------------------------------------------------------------------
// Communities
// ---------------------------------------------------------------------------

double modularity(std::size_t n, const std::vector<WeightedEdge>& edges, const std::vector<std::size_t>& comm) {
  std::vector<double> degree(n, 0.0);
  double m2 = 0.0;
  double inside = 0.0;
  for (const auto& e : edges) {
    degree[e.a] += e.weight;
    degree[e.b] += e.weight;
    m2 += 2.0 * e.weight;
    if (comm[e.a] == comm[e.b]) inside += 2.0 * e.weight;
  }
  if (m2 <= 0.0) return 0.0;
  std::map<std::size_t, double> tot;
  for (std::size_t i = 0; i < n; ++i) tot[comm[i]] += degree[i];
  double q = inside / m2;
  for (const auto& [c, t] : tot) q -= (t / m2) * (t / m2);
  return q;
}

namespace {

// One aggregation level: returns a community per node (renumbered).
std::vector<std::size_t> local_moves(std::size_t n, const std::vector<std::map<std::size_t, double>>& adj,
                                     const std::vector<double>& self_loops) {
  std::vector<double> k(n, 0.0);
  double m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [j, w] : adj[i]) k[i] += w;
    k[i] += 2.0 * self_loops[i];
    m2 += k[i];
  }
  std::vector<std::size_t> comm(n);
  std::iota(comm.begin(), comm.end(), 0);
  if (m2 <= 0.0) return comm;
  std::vector<double> tot = k;

  for (int pass = 0; pass < 100; ++pass) {
    bool moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::map<std::size_t, double> links;
      for (const auto& [j, w] : adj[i]) links[comm[j]] += w;
      const auto old = comm[i];
      tot[old] -= k[i];
      std::size_t best = old;
      double best_gain = links[old] - tot[old] * k[i] / m2;
      for (const auto& [c, w] : links) {
        const double gain = w - tot[c] * k[i] / m2;
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best = c;
        }
      }
      tot[best] += k[i];
      comm[i] = best;
      if (best != old) moved = true;
    }
    if (!moved) break;
  }
  std::map<std::size_t, std::size_t> renumber;
  for (auto& c : comm) {
    auto it = renumber.emplace(c, renumber.size()).first;
    c = it->second;
  }
  return comm;
}

}  // namespace

std::vector<std::size_t> detect_communities(std::size_t n, const std::vector<WeightedEdge>& edges) {
  std::vector<std::map<std::size_t, double>> adj(n);
  std::vector<double> self(n, 0.0);
  for (const auto& e : edges) {
    if (e.a >= n || e.b >= n) throw BoundsError("edge endpoint outside the node range");
    if (e.a == e.b) {
      self[e.a] += e.weight;
    } else {
      adj[e.a][e.b] += e.weight;
      adj[e.b][e.a] += e.weight;
    }
  }
  std::vector<std::size_t> membership(n);
  std::iota(membership.begin(), membership.end(), 0);
  std::size_t size = n;
  while (size > 0) {
    const auto comm = local_moves(size, adj, self);
    const auto count = comm.empty() ? 0 : *std::max_element(comm.begin(), comm.end()) + 1;
    for (auto& m : membership) m = comm[m];
    if (count == size) break;
    std::vector<std::map<std::size_t, double>> next(count);
    std::vector<double> next_self(count, 0.0);
    for (std::size_t i = 0; i < size; ++i) {
      next_self[comm[i]] += self[i];
      for (const auto& [j, w] : adj[i]) {
        if (comm[i] == comm[j]) {
          next_self[comm[i]] += w / 2.0;  // each internal edge is seen from both ends
        } else {
          next[comm[i]][comm[j]] += w;
        }
      }
    }
    adj = std::move(next);
    self = std::move(next_self);
    size = count;
  }
  return membership;
}

double mutual_information(const std::vector<std::size_t>& x, const std::vector<std::size_t>& y) {
  if (x.size() != y.size()) throw ShapeError("labelings differ in length");
  if (x.empty()) return 0.0;
  const double n = static_cast<double>(x.size());
  std::map<std::pair<std::size_t, std::size_t>, double> joint;
  std::map<std::size_t, double> px, py;
  for (std::size_t i = 0; i < x.size(); ++i) {
    joint[{x[i], y[i]}] += 1.0;
    px[x[i]] += 1.0;
    py[y[i]] += 1.0;
  }
  double mi = 0.0;
  for (const auto& [key, c] : joint) mi += (c / n) * std::log(c * n / (px[key.first] * py[key.second]));
  return std::max(0.0, mi);
}

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

SharedLayout compute_shared_layout(const CoocGraph& graph, const LayoutConfig& config) {
  SharedLayout out;
  out.granularity = graph.granularity;
  out.config = config;
  out.nodes = graph.nodes;
  for (auto c : graph.nodes) out.keys.push_back(graph.columns.key(c));
  const auto n = out.nodes.size();
  out.points.assign(n, {});
  if (n == 0) return out;

  std::map<std::uint32_t, std::size_t> pos;
  for (std::size_t i = 0; i < n; ++i) pos[out.nodes[i]] = i;
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
  for (const auto& e : graph.edges) {
    const auto a = pos.at(e.a), b = pos.at(e.b);
    adj[a].emplace_back(b, e.jaccard);
    adj[b].emplace_back(a, e.jaccard);
  }

  // Components in order of their smallest node.
  std::vector<std::size_t> comp(n, kNoUnit);
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] != kNoUnit) continue;
    members.emplace_back();
    std::queue<std::size_t> q;
    q.push(s);
    comp[s] = members.size() - 1;
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      members.back().push_back(u);
      for (const auto& [v, w] : adj[u]) {
        if (comp[v] == kNoUnit) {
          comp[v] = comp[s];
          q.push(v);
        }
      }
    }
    std::sort(members.back().begin(), members.back().end());
  }

  std::mt19937_64 rng(config.seed);
  double offset = 0.0;
  for (const auto& mem : members) {
    const auto m = mem.size();
    std::vector<double> x(m), y(m);
    for (std::size_t i = 0; i < m; ++i) {
      x[i] = uniform01(rng);
      y[i] = uniform01(rng);
    }
    if (m > 1) {
      std::map<std::size_t, std::size_t> local;
      for (std::size_t i = 0; i < m; ++i) local[mem[i]] = i;
      const double k = std::sqrt(1.0 / static_cast<double>(m));
      const double t0 = 0.1;
      std::vector<double> dx(m), dy(m);
      for (std::size_t it = 0; it < config.iterations; ++it) {
        std::fill(dx.begin(), dx.end(), 0.0);
        std::fill(dy.begin(), dy.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = i + 1; j < m; ++j) {
            double ddx = x[i] - x[j], ddy = y[i] - y[j];
            const double d = std::max(std::hypot(ddx, ddy), 1e-9);
            const double f = k * k / d;
            dx[i] += ddx / d * f;
            dy[i] += ddy / d * f;
            dx[j] -= ddx / d * f;
            dy[j] -= ddy / d * f;
          }
        }
        for (std::size_t i = 0; i < m; ++i) {
          for (const auto& [v, w] : adj[mem[i]]) {
            const auto j = local.at(v);
            if (j <= i) continue;
            double ddx = x[i] - x[j], ddy = y[i] - y[j];
            const double d = std::max(std::hypot(ddx, ddy), 1e-9);
            const double f = w * d * d / k;
            dx[i] -= ddx / d * f;
            dy[i] -= ddy / d * f;
            dx[j] += ddx / d * f;
            dy[j] += ddy / d * f;
          }
        }
        const double temp = t0 * (1.0 - static_cast<double>(it) / static_cast<double>(config.iterations));
        for (std::size_t i = 0; i < m; ++i) {
          const double len = std::max(std::hypot(dx[i], dy[i]), 1e-12);
          const double step = std::min(len, temp);
          x[i] += dx[i] / len * step;
          y[i] += dy[i] / len * step;
        }
      }
    }
    const double minx = *std::min_element(x.begin(), x.end());
    const double maxx = *std::max_element(x.begin(), x.end());
    const double miny = *std::min_element(y.begin(), y.end());
    for (std::size_t i = 0; i < m; ++i) out.points[mem[i]] = {x[i] - minx + offset, y[i] - miny};
    offset += (maxx - minx) + config.component_gap;
  }
  return out;
}

void attach_chapter_weights(SharedLayout& layout, const SentenceScores& scores, const PresenceMatrix& presence,
                            const CorpusStructure& corpus) {
  layout.chapter_weights.clear();
  const auto nch = corpus.num_units(Granularity::Chapter);
  for (std::size_t ch = 0; ch < nch; ++ch) {
    std::vector<double> w(layout.nodes.size(), 0.0);
    for (auto s : corpus.unit_sentences(Granularity::Chapter, ch)) {
      for (std::size_t i = 0; i < layout.nodes.size(); ++i) {
        const auto col = scores.columns().column_of(layout.keys[i].index);
        const auto pcol = presence.columns.column_of(layout.keys[i].index);
        if (col < 0 || pcol < 0) continue;
        if (presence.present(s, static_cast<std::size_t>(pcol))) w[i] += scores.score(s, static_cast<std::size_t>(col));
      }
    }
    layout.chapter_weights.emplace_back(corpus.unit_id(Granularity::Chapter, ch), std::move(w));
  }
}

json SharedLayout::to_json() const {
  json nodes_json = json::array();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    nodes_json.push_back({{"id", to_string(keys[i])}, {"x", points[i].x}, {"y", points[i].y}});
  }
  json weights = json::object();
  for (const auto& [ch, w] : chapter_weights) {
    json per = json::object();
    for (std::size_t i = 0; i < keys.size(); ++i) per[to_string(keys[i])] = w[i];
    weights[ch] = std::move(per);
  }
  return {{"kind", "layout"},
          {"granularity", granularity_name(granularity)},
          {"seed", config.seed},
          {"iterations", config.iterations},
          {"nodes", std::move(nodes_json)},
          {"chapter_weights", std::move(weights)}};
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

json StructureMetricsRow::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"level", level},
          {"chapter_align", opt(chapter_align)},
          {"subchapter_align", opt(subchapter_align)},
          {"same_chapter_mass", opt(same_chapter_mass)},
          {"within_between", opt(within_between)},
          {"communities", communities},
          {"nodes", nodes},
          {"edges", edges}};
}

StructureMetricsRow compute_structure_metrics(const CoocGraph& graph, const PresenceMatrix& sentence_presence,
                                              const CorpusStructure& corpus, const MetricsConfig& config) {
  if (sentence_presence.columns.indices() != graph.columns.indices()) {
    throw PreconditionError("presence columns differ from the graph's columns");
  }
  StructureMetricsRow row;
  row.level = std::string(granularity_name(graph.granularity));
  row.nodes = graph.nodes.size();
  row.edges = graph.edges.size();
  if (graph.edges.empty()) return row;

  const auto dom = dominant_units(sentence_presence, corpus);
  std::map<std::uint32_t, std::size_t> pos;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) pos[graph.nodes[i]] = i;
  std::vector<WeightedEdge> edges;
  for (const auto& e : graph.edges) edges.push_back({pos.at(e.a), pos.at(e.b), e.jaccard});

  const auto comm = detect_communities(graph.nodes.size(), edges);
  row.communities = comm.empty() ? 0 : *std::max_element(comm.begin(), comm.end()) + 1;
  std::vector<std::size_t> chapters, subchapters;
  for (auto c : graph.nodes) {
    chapters.push_back(dom.chapter[c]);
    subchapters.push_back(dom.subchapter[c]);
  }
  const auto distinct = [](std::vector<std::size_t> v) {
    std::sort(v.begin(), v.end());
    return static_cast<double>(std::unique(v.begin(), v.end()) - v.begin());
  };
  const double parts = static_cast<double>(row.communities);
  row.chapter_align = mutual_information(comm, chapters) * parts / distinct(chapters);
  row.subchapter_align = mutual_information(comm, subchapters) * parts / distinct(subchapters);

  double same = 0.0, total = 0.0;
  for (const auto& e : edges) {
    total += e.weight;
    if (chapters[e.a] == chapters[e.b]) same += e.weight;
  }
  row.same_chapter_mass = total > 0.0 ? same / total : 0.0;

  const auto n = graph.nodes.size();
  std::vector<std::vector<double>> dist;
  if (config.distance == DistanceMode::Layout) {
    const auto layout = compute_shared_layout(graph, config.layout);
    dist.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        dist[i][j] = std::hypot(layout.points[i].x - layout.points[j].x, layout.points[i].y - layout.points[j].y);
      }
    }
  } else {
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& e : edges) {
      adj[e.a].push_back(e.b);
      adj[e.b].push_back(e.a);
    }
    dist.assign(n, std::vector<double>(n, -1.0));
    for (std::size_t s = 0; s < n; ++s) {
      std::queue<std::size_t> q;
      q.push(s);
      dist[s][s] = 0.0;
      while (!q.empty()) {
        const auto u = q.front();
        q.pop();
        for (auto v : adj[u]) {
          if (dist[s][v] < 0.0) {
            dist[s][v] = dist[s][u] + 1.0;
            q.push(v);
          }
        }
      }
    }
  }
  double within = 0.0, between = 0.0;
  std::size_t nw = 0, nb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (dist[i][j] < 0.0) continue;  // unreachable under graph distance
      if (chapters[i] == chapters[j]) {
        within += dist[i][j];
        ++nw;
      } else {
        between += dist[i][j];
        ++nb;
      }
    }
  }
  if (nw > 0 && nb > 0 && between > 0.0) {
    row.within_between = (within / static_cast<double>(nw)) / (between / static_cast<double>(nb));
  }
  return row;
}

std::string metrics_csv(const std::vector<StructureMetricsRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "level,chapter_align,subchapter_align,same_chapter_mass,within_between,communities,nodes,edges\n";
  auto cell = [&](const std::optional<double>& v) {
    if (v) {
      out << *v;
    } else {
      out << "null";
    }
  };
  for (const auto& r : rows) {
    out << r.level << ',';
    cell(r.chapter_align);
    out << ',';
    cell(r.subchapter_align);
    out << ',';
    cell(r.same_chapter_mass);
    out << ',';
    cell(r.within_between);
    out << ',' << r.communities << ',' << r.nodes << ',' << r.edges << '\n';
  }
  return out.str();
}

json reference_metadata() {
  json rows = json::array();
  for (const auto& r : kReferenceRows) {
    rows.push_back({{"level", r.level},
                    {"chapter_align", r.chapter_align},
                    {"subchapter_align", r.subchapter_align},
                    {"same_chapter_mass", r.same_chapter_mass},
                    {"within_between", r.within_between}});
  }
  return {{"reproducible", false},
          {"note", "reported on the original textbook corpus; not recomputable from the fixture"},
          {"rows", std::move(rows)},
          {"alignment_scaling", "mutual information (nats) x |partition| / |labels|"}};
}

}  // namespace forge
