// Shared helpers for the test suite: seeded generators, small builders and
// brute-force oracles that share no code with the library paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/activation_store.hpp"
#include "forge/compression.hpp"
#include "forge/cooc.hpp"
#include "forge/corpus.hpp"
#include "forge/fixture.hpp"
#include "forge/hierarchy.hpp"
#include "forge/mechanism.hpp"
#include "forge/metrics.hpp"
#include "forge/pipeline.hpp"
#include "forge/presence.hpp"

namespace forge::testing {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  double uniform() { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen() % n); }
  bool chance(double p) { return uniform() < p; }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen); }
};

inline fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("forge_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---------------------------------------------------------------------------
// Corpora
// ---------------------------------------------------------------------------

/// `shape[c][u][p]` = sentence count of paragraph p of subchapter u of
/// chapter c. Every sentence spans `tokens_per` tokens. Ids: c<i>, u<i>, p<i>,
/// s<i>, numbered from 1 in document order.
inline json corpus_doc(const std::vector<std::vector<std::vector<std::size_t>>>& shape, std::size_t tokens_per) {
  json ch = json::array(), sub = json::array(), par = json::array(), sen = json::array();
  std::size_t ui = 0, pi = 0, si = 0;
  std::uint64_t tok = 0;
  for (std::size_t c = 0; c < shape.size(); ++c) {
    const auto cid = "c" + std::to_string(c + 1);
    ch.push_back({{"id", cid}, {"title", "Chapter " + std::to_string(c + 1)}});
    for (const auto& u : shape[c]) {
      const auto uid = "u" + std::to_string(++ui);
      sub.push_back({{"id", uid}, {"title", "Sub " + uid}, {"chapter_id", cid}});
      for (auto n : u) {
        const auto pid = "p" + std::to_string(++pi);
        par.push_back({{"id", pid}, {"subchapter_id", uid}});
        for (std::size_t s = 0; s < n; ++s) {
          sen.push_back({{"id", "s" + std::to_string(++si)},
                         {"token_span", {tok, tok + tokens_per}},
                         {"paragraph_id", pid},
                         {"subchapter_id", uid},
                         {"chapter_id", cid},
                         {"text", "sentence " + std::to_string(si)}});
          tok += tokens_per;
        }
      }
    }
  }
  return {{"corpus_id", "test"}, {"num_tokens", tok}, {"chapters", ch}, {"subchapters", sub},
          {"paragraphs", par},   {"sentences", sen}};
}

/// Random containment tree with `units` sentences in total.
inline CorpusStructure random_corpus(Rng& rng, std::size_t sentences, std::size_t tokens_per = 1) {
  std::vector<std::vector<std::vector<std::size_t>>> shape;
  std::size_t left = sentences;
  while (left > 0) {
    shape.emplace_back();
    const auto subs = 1 + rng.index(3);
    for (std::size_t u = 0; u < subs && left > 0; ++u) {
      shape.back().emplace_back();
      const auto paras = 1 + rng.index(3);
      for (std::size_t p = 0; p < paras && left > 0; ++p) {
        const auto n = std::min(left, 1 + rng.index(4));
        shape.back().back().push_back(n);
        left -= n;
      }
    }
  }
  return CorpusStructure::from_json(corpus_doc(shape, tokens_per));
}

// ---------------------------------------------------------------------------
// Presence and co-occurrence
// ---------------------------------------------------------------------------

inline PresenceMatrix random_presence(Rng& rng, std::size_t units, std::size_t features, double density,
                                      Granularity g = Granularity::Sentence) {
  PresenceMatrix x;
  x.granularity = g;
  std::vector<std::uint32_t> idx(features);
  for (std::size_t f = 0; f < features; ++f) idx[f] = static_cast<std::uint32_t>(3 * f + 1);  // sparse ids
  x.columns = FeatureColumns(Site::Source, idx);
  x.rows.resize(units);
  for (auto& row : x.rows) {
    for (std::uint32_t f = 0; f < features; ++f) {
      if (rng.chance(density)) row.push_back(f);
    }
  }
  return x;
}

inline std::vector<std::vector<int>> dense(const PresenceMatrix& x) {
  std::vector<std::vector<int>> d(x.rows.size(), std::vector<int>(x.columns.size(), 0));
  for (std::size_t u = 0; u < x.rows.size(); ++u) {
    for (auto c : x.rows[u]) d[u][c] = 1;
  }
  return d;
}

struct OracleEdge {
  std::size_t count;
  double jaccard;
};

/// C = X^T X by triple loop, J from its definition, per-node top-k by a full
/// sort with the documented tie rule, union symmetrization.
inline std::map<std::pair<std::uint32_t, std::uint32_t>, OracleEdge> cooc_oracle(const PresenceMatrix& x,
                                                                                std::size_t top_k,
                                                                                std::vector<std::size_t>* diag = nullptr,
                                                                                std::vector<std::vector<std::size_t>>* full = nullptr) {
  const auto d = dense(x);
  const std::size_t n = x.columns.size();
  std::vector<std::vector<std::size_t>> c(n, std::vector<std::size_t>(n, 0));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t u = 0; u < d.size(); ++u) c[a][b] += static_cast<std::size_t>(d[u][a] * d[u][b]);
    }
  }
  if (full) *full = c;
  if (diag) {
    diag->assign(n, 0);
    for (std::size_t a = 0; a < n; ++a) (*diag)[a] = c[a][a];
  }
  auto jac = [&](std::size_t a, std::size_t b) {
    const double den = static_cast<double>(c[a][a] + c[b][b] - c[a][b]);
    return den == 0 ? 0.0 : static_cast<double>(c[a][b]) / den;
  };
  std::map<std::pair<std::uint32_t, std::uint32_t>, OracleEdge> out;
  for (std::size_t a = 0; a < n; ++a) {
    if (c[a][a] == 0) continue;
    std::vector<std::size_t> nb;
    for (std::size_t b = 0; b < n; ++b) {
      if (b != a && c[a][b] > 0) nb.push_back(b);
    }
    std::sort(nb.begin(), nb.end(), [&](std::size_t l, std::size_t r) {
      if (jac(a, l) != jac(a, r)) return jac(a, l) > jac(a, r);
      if (c[a][l] != c[a][r]) return c[a][l] > c[a][r];
      return x.columns.feature(l) < x.columns.feature(r);
    });
    for (std::size_t i = 0; i < std::min(top_k, nb.size()); ++i) {
      const auto lo = static_cast<std::uint32_t>(std::min(a, nb[i]));
      const auto hi = static_cast<std::uint32_t>(std::max(a, nb[i]));
      out[{lo, hi}] = {c[lo][hi], jac(lo, hi)};
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mechanism
// ---------------------------------------------------------------------------

/// A random small transcoder setup with dense activations kept alongside the
/// stores so the oracle can index them directly.
struct RandomMech {
  CorpusStructure corpus;
  SparseStack stack;
  TokenActivationStore src, tgt, lat;
  std::vector<std::vector<double>> zs, zt, t;  // token x feature / latent
  SupportMatrices supports;
  std::vector<std::uint32_t> su, tu;           // universes

  MechInputs inputs() const {
    MechInputs in;
    in.corpus = &corpus;
    in.source = &src;
    in.target = &tgt;
    in.latent = &lat;
    in.supports = &supports;
    in.source_universe = su;
    in.target_universe = tu;
    return in;
  }
};

inline TokenActivationStore store_from_dense(const std::string& site, const std::vector<std::vector<double>>& m,
                                             std::size_t features, std::vector<std::uint8_t> mask) {
  std::vector<Triplet> e;
  for (std::uint32_t i = 0; i < m.size(); ++i) {
    for (std::uint32_t f = 0; f < features; ++f) {
      if (m[i][f] != 0.0) e.push_back({i, f, static_cast<float>(m[i][f])});
    }
  }
  return TokenActivationStore(site, m.size(), features, std::move(e), std::move(mask));
}

inline RandomMech random_mech(Rng& rng, std::size_t d, std::size_t K, std::size_t fs, std::size_t ft,
                              std::size_t sentences, std::size_t tokens_per) {
  RandomMech m;
  m.corpus = random_corpus(rng, sentences, tokens_per);
  const auto T = m.corpus.num_tokens();
  auto mat = [&](std::size_t r, std::size_t c) {
    Matrix x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = static_cast<double>(static_cast<float>(rng.normal()));
    }
    return x;
  };
  m.stack.encoder_src = mat(fs, d);
  m.stack.decoder_src = mat(d, fs);
  m.stack.encoder_tgt = mat(ft, d);
  m.stack.decoder_tgt = mat(d, ft);
  m.stack.read = mat(K, d);
  m.stack.write = mat(d, K);
  auto act = [&](std::size_t n, double p) {
    std::vector<std::vector<double>> a(T, std::vector<double>(n, 0.0));
    for (auto& row : a) {
      for (auto& v : row) {
        if (rng.chance(p)) v = static_cast<double>(static_cast<float>(rng.uniform(0.05, 3.0)));
      }
    }
    return a;
  };
  m.zs = act(fs, 0.4);
  m.zt = act(ft, 0.4);
  m.t = act(K, 0.5);
  std::vector<std::uint8_t> mask(T, 0);
  m.src = store_from_dense("src", m.zs, fs, mask);
  m.tgt = store_from_dense("tgt", m.zt, ft, mask);
  m.lat = store_from_dense("latent", m.t, K, mask);
  m.supports = compute_support_matrices(m.stack);
  for (std::uint32_t a = 0; a < fs; ++a) {
    if (rng.chance(0.8)) m.su.push_back(a);
  }
  for (std::uint32_t b = 0; b < ft; ++b) {
    if (rng.chance(0.8)) m.tu.push_back(b);
  }
  return m;
}

/// E[(a,b)][k] by five nested loops (a, b, k, token) with the factors
/// recomputed from the stack by explicit inner products.
inline std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<double>> mech_oracle(
    const RandomMech& m, const std::vector<std::uint64_t>& tokens, bool restrict = true) {
  const auto d = static_cast<std::size_t>(m.stack.read.cols());
  const auto K = static_cast<std::size_t>(m.stack.read.rows());
  const auto fs = static_cast<std::size_t>(m.stack.decoder_src.cols());
  const auto ft = static_cast<std::size_t>(m.stack.encoder_tgt.rows());
  auto inner_a = [&](std::size_t a, std::size_t k) {
    double s = 0;
    for (std::size_t i = 0; i < d; ++i) s += m.stack.decoder_src(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) *
                                             m.stack.read(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
    return std::max(s, 0.0);
  };
  auto inner_g = [&](std::size_t b, std::size_t k) {
    double s = 0;
    for (std::size_t i = 0; i < d; ++i) s += m.stack.encoder_tgt(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) *
                                             m.stack.write(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    return std::max(s, 0.0);
  };
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<double>> out;
  for (std::uint32_t a = 0; a < fs; ++a) {
    if (restrict && !std::binary_search(m.su.begin(), m.su.end(), a)) continue;
    for (std::uint32_t b = 0; b < ft; ++b) {
      if (restrict && !std::binary_search(m.tu.begin(), m.tu.end(), b)) continue;
      std::vector<double> e(K, 0.0);
      bool any = false;
      for (std::size_t k = 0; k < K; ++k) {
        const double ap = inner_a(a, k), gp = inner_g(b, k);
        for (auto i : tokens) {
          const double gs = m.zs[i][a] > 0.0 ? 1.0 : 0.0;
          const double gt = m.zt[i][b] > 0.0 ? 1.0 : 0.0;
          e[k] += gs * ap * m.t[i][k] * gp * gt;
        }
        any = any || e[k] > 0.0;
      }
      if (any) out[{a, b}] = e;
    }
  }
  return out;
}

/// |x - y| <= tol * max(|x|, |y|); exact zeros must match exactly.
inline bool rel_close(double x, double y, double tol) {
  return std::abs(x - y) <= tol * std::max(std::abs(x), std::abs(y));
}

// ---------------------------------------------------------------------------
// Trees
// ---------------------------------------------------------------------------

/// Builds a tree from (id, parent id, feature or empty) rows listed
/// parent-first.
inline AbstractionTree make_tree(const std::vector<std::tuple<std::string, std::string, std::string>>& rows) {
  std::vector<TreeNode> nodes;
  std::map<std::string, std::size_t> idx;
  for (const auto& [id, parent, feature] : rows) {
    TreeNode n;
    n.id = id;
    if (!parent.empty()) {
      n.parent = idx.at(parent);
      nodes[*n.parent].children.push_back(nodes.size());
    }
    if (!feature.empty()) n.feature = parse_feature_key(feature);
    n.label = id;
    idx[id] = nodes.size();
    nodes.push_back(std::move(n));
  }
  return AbstractionTree(std::move(nodes));
}

/// LCA by intersecting root paths.
inline std::size_t lca_oracle(const AbstractionTree& t, std::size_t a, std::size_t b) {
  auto path = [&](std::size_t x) {
    std::vector<std::size_t> p{x};
    while (t.node(x).parent) {
      x = *t.node(x).parent;
      p.push_back(x);
    }
    std::reverse(p.begin(), p.end());
    return p;
  };
  const auto pa = path(a), pb = path(b);
  std::size_t i = 0;
  while (i < pa.size() && i < pb.size() && pa[i] == pb[i]) ++i;
  return pa[i - 1];
}

/// Random tree over `leaves` feature keys.
inline AbstractionTree random_tree(Rng& rng, const std::vector<FeatureKey>& leaves) {
  std::vector<std::tuple<std::string, std::string, std::string>> rows;
  rows.emplace_back("n0", "", "");
  std::vector<std::string> internal{"n0"};
  std::size_t next = 1;
  const auto extra = leaves.size() / 2;
  for (std::size_t i = 0; i < extra; ++i) {
    const auto parent = internal[rng.index(internal.size())];
    internal.push_back("n" + std::to_string(next++));
    rows.emplace_back(internal.back(), parent, "");
  }
  for (const auto& k : leaves) rows.emplace_back(to_string(k), internal[rng.index(internal.size())], "");
  for (std::size_t i = rows.size() - leaves.size(); i < rows.size(); ++i) std::get<2>(rows[i]) = std::get<0>(rows[i]);
  return make_tree(rows);
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Mutual kNN by sorting every full distance row (ties: lower index).
inline std::set<std::pair<std::uint32_t, std::uint32_t>> mutual_knn_oracle(const Eigen::MatrixXd& p, std::size_t k) {
  const auto n = static_cast<std::size_t>(p.rows());
  k = std::min(k, n == 0 ? 0 : n - 1);
  std::vector<std::set<std::uint32_t>> nn(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::uint32_t>> d;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = 0;
      for (Eigen::Index c = 0; c < p.cols(); ++c) {
        const double diff = p(static_cast<Eigen::Index>(i), c) - p(static_cast<Eigen::Index>(j), c);
        s += diff * diff;
      }
      d.emplace_back(s, static_cast<std::uint32_t>(j));
    }
    std::sort(d.begin(), d.end());
    for (std::size_t r = 0; r < k; ++r) nn[i].insert(d[r].second);
  }
  std::set<std::pair<std::uint32_t, std::uint32_t>> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    for (auto j : nn[i]) {
      if (nn[j].count(i)) out.insert({std::min(i, j), std::max(i, j)});
    }
  }
  return out;
}

/// Catalog with the given embeddings on src features 0..n-1.
inline FeatureCatalog embedding_catalog(const std::vector<std::vector<double>>& points,
                                        const std::vector<std::string>& descriptions = {}) {
  FeatureCatalog cat;
  for (std::size_t i = 0; i < points.size(); ++i) {
    CatalogEntry e;
    e.embedding = points[i];
    e.description = i < descriptions.size() ? descriptions[i] : "feature " + std::to_string(i);
    cat.insert({Site::Source, static_cast<std::uint32_t>(i)}, std::move(e));
  }
  return cat;
}

// ---------------------------------------------------------------------------
// Metric graphs
// ---------------------------------------------------------------------------

/// A corpus of one sentence per chapter, features present only in their
/// assigned chapter's sentence, and a hand-specified unit-weight graph.
struct MetricFixture {
  CorpusStructure corpus;
  PresenceMatrix presence;
  CoocGraph graph;
};

inline MetricFixture metric_fixture(const std::vector<std::size_t>& chapter_of, std::size_t chapters,
                                    std::set<std::pair<std::uint32_t, std::uint32_t>> edges) {
  MetricFixture m;
  std::vector<std::vector<std::vector<std::size_t>>> shape(chapters, {{1}});
  m.corpus = CorpusStructure::from_json(corpus_doc(shape, 1));
  std::vector<std::uint32_t> idx(chapter_of.size());
  for (std::uint32_t i = 0; i < idx.size(); ++i) idx[i] = i;
  m.presence.columns = FeatureColumns(Site::Source, idx);
  m.presence.rows.resize(chapters);
  for (std::uint32_t f = 0; f < chapter_of.size(); ++f) m.presence.rows[chapter_of[f]].push_back(f);
  m.graph.columns = m.presence.columns;
  m.graph.diag.assign(idx.size(), 1);
  m.graph.nodes = idx;
  m.graph.top_k = 10;
  for (auto [a, b] : edges) m.graph.edges.push_back({std::min(a, b), std::max(a, b), 1, 1.0, 1});
  std::sort(m.graph.edges.begin(), m.graph.edges.end(),
            [](const CoocEdge& x, const CoocEdge& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
  return m;
}

/// Disjoint cliques of `size` nodes; node i sits in clique i / size.
inline std::set<std::pair<std::uint32_t, std::uint32_t>> clique_edges(std::size_t cliques, std::size_t size) {
  std::set<std::pair<std::uint32_t, std::uint32_t>> e;
  for (std::size_t c = 0; c < cliques; ++c) {
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = i + 1; j < size; ++j) {
        e.insert({static_cast<std::uint32_t>(c * size + i), static_cast<std::uint32_t>(c * size + j)});
      }
    }
  }
  return e;
}

// ---------------------------------------------------------------------------
// Fixture pipeline
// ---------------------------------------------------------------------------

/// Ingest through metrics on the default fixture, in process, with stub
/// clients. Returns the workspace.
inline Workspace run_fixture_pipeline(const fs::path& root, const FixtureConfig& cfg = {},
                                      const std::vector<std::string>& units = {"s17"}) {
  const auto req = write_fixture(build_fixture(cfg), root / "inputs");
  Workspace ws(root / "ws");
  run_ingest(req, ws);
  StubAdjudicator adj;
  run_filter_stage(ws, FilterConfig{}, adj);
  for (auto g : kAllGranularities) run_cooc_stage(ws, g, 10);
  StubSummarizer sum;
  run_hierarchy_stage(ws, GeometryConfig{}, TreeConfig{}, sum);
  StubRelator rel;
  for (const auto& u : units) {
    const auto g = run_mech_stage(ws, u, MechConfig{}, CaptionConfig{});
    run_relate_mech(ws, g, rel, RelateConfig{});
  }
  run_relate_cooc(ws, CoocGraph::from_json(read_json(ws.cooc_path(Granularity::Sentence))), rel, RelateConfig{});
  run_metrics_stage(ws, {kAllGranularities.begin(), kAllGranularities.end()}, MetricsConfig{});
  return ws;
}

/// The documented CLI chain over the fixture, one shell command per step.
inline std::vector<std::string> cli_chain(const std::string& bin, const fs::path& dir) {
  const auto in = (dir / "inputs").string(), ws = (dir / "ws").string();
  const std::string q = " --log-level warn";
  std::vector<std::string> c;
  c.push_back(bin + " fixture --out " + in + q);
  c.push_back(bin + " ingest --activations src=" + in + "/activations/src.act tgt=" + in +
              "/activations/tgt.act latent=" + in + "/activations/latent.act" + " history/src=" + in +
              "/contrast/history/src.act history/tgt=" + in + "/contrast/history/tgt.act geology/src=" + in +
              "/contrast/geology/src.act geology/tgt=" + in + "/contrast/geology/tgt.act --contrast history=" + in +
              "/contrast/history/corpus.json geology=" + in + "/contrast/geology/corpus.json --corpus " + in +
              "/corpus.json --stack " + in + "/stack --catalog " + in + "/catalog.json --out " + ws + q);
  c.push_back(bin + " filter --workspace " + ws + q);
  c.push_back(bin + " cooc --workspace " + ws + " --granularity all" + q);
  c.push_back(bin + " hierarchy --workspace " + ws + q);
  c.push_back(bin + " mech --workspace " + ws + " --unit s17" + q);
  c.push_back(bin + " compress --mech " + ws + "/mech/s17.json --tree " + ws + "/tree.json --cap 64 --out " + ws +
              "/mech/s17.compressed.json" + q);
  c.push_back(bin + " relate --workspace " + ws + " --graph " + ws + "/graphs/cooc_sentence.json" + q);
  c.push_back(bin + " relate --workspace " + ws + " --graph " + ws + "/mech/s17.json" + q);
  c.push_back(bin + " metrics --workspace " + ws + q);
  c.push_back(bin + " export --workspace " + ws + " --out " + (dir / "bundle.sae").string() + q);
  return c;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace forge::testing
