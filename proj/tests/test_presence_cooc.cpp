#include <doctest.h>

#include "forge/errors.hpp"
#include "support.hpp"

using namespace forge;
using namespace forge::testing;

namespace {

TokenActivationStore random_store(Rng& rng, const CorpusStructure& c, std::uint32_t features, double density) {
  std::vector<Triplet> e;
  std::vector<std::uint8_t> mask(c.num_tokens(), 0);
  for (std::uint32_t t = 0; t < c.num_tokens(); ++t) {
    mask[t] = rng.chance(0.1) ? 1 : 0;
    for (std::uint32_t f = 0; f < features; ++f) {
      if (rng.chance(density)) e.push_back({t, f, static_cast<float>(rng.uniform(-1.0, 4.0))});
    }
  }
  return TokenActivationStore("src", c.num_tokens(), features, std::move(e), std::move(mask));
}

}  // namespace

TEST_CASE("nearest-rank threshold") {
  std::vector<double> xs{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(nearest_rank_quantile(xs, 0.9) == 9.0);

  const auto c = CorpusStructure::from_json(corpus_doc({{{10}}}, 1));
  std::vector<Triplet> e;
  for (std::uint32_t s = 0; s < 10; ++s) e.push_back({s, 0, static_cast<float>(s + 1)});
  e.push_back({0, 1, 8.0f});
  e.push_back({1, 1, 3.0f});
  e.push_back({2, 1, 1.0f});
  TokenActivationStore st("src", 10, 3, e, std::vector<std::uint8_t>(10, 0));
  std::vector<std::uint32_t> all{0, 1, 2};
  const auto th = calibrate_thresholds(st, c, all);
  CHECK(th.of(0) == 9.0);
  CHECK(th.of(1) == 4.0);  // 3 nonzero sentences: safeguard 0.5 * max
  CHECK(th.rule[1] == ThresholdRule::RareSafeguard);
  CHECK(std::isinf(th.of(2)));
  const auto x = sentence_presence(st, c, th);
  CHECK(x.column_counts() == std::vector<std::size_t>{1, 1, 0});
  CHECK_THROWS_AS(calibrate_thresholds(st, c, std::vector<std::uint32_t>{}), ConfigError);
}

TEST_CASE("presence boundaries") {
  const auto c = CorpusStructure::from_json(corpus_doc({{{2}}}, 2));
  TokenActivationStore st("src", 4, 2, {{0, 0, -1.0f}, {1, 0, -2.0f}, {2, 1, 5.0f}}, {0, 0, 0, 0});
  ThresholdVector th;
  th.columns = FeatureColumns(Site::Source, {0, 1});
  th.theta = {0.0, 5.0};
  th.rule = {ThresholdRule::Quantile, ThresholdRule::Quantile};
  const auto x = sentence_presence(st, c, th);
  CHECK(x.rows[0].empty());  // negative activations only
  CHECK(x.rows[1].empty());  // h == theta is not present
}

TEST_CASE("presence equals the triple loop on random fixtures") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = random_corpus(rng, 20, 3);
    const auto st = random_store(rng, c, 6, 0.3);
    std::vector<std::uint32_t> all{0, 1, 2, 3, 4, 5};
    const auto th = calibrate_thresholds(st, c, all);
    const auto x = sentence_presence(st, c, th);
    for (std::size_t s = 0; s < c.num_sentences(); ++s) {
      for (std::uint32_t f = 0; f < 6; ++f) {
        double m = 0.0;
        for (auto t = c.sentence(s).token_begin; t < c.sentence(s).token_end; ++t) {
          if (!st.is_special(t)) m = std::max(m, st.value(t, f));
        }
        CHECK(x.present(s, f) == (m > th.theta[f]));
      }
    }
  }
}

TEST_CASE("lift is an OR over member sentences") {
  Rng rng(5);
  const auto c = random_corpus(rng, 30);
  auto x = random_presence(rng, 30, 8, 0.2);
  for (auto g : kAllGranularities) {
    const auto l = lift_presence(x, c, g);
    REQUIRE(l.num_units() == c.num_units(g));
    for (std::size_t u = 0; u < l.num_units(); ++u) {
      for (std::size_t f = 0; f < 8; ++f) {
        bool any = false;
        for (auto s : c.unit_sentences(g, u)) any = any || x.present(s, f);
        CHECK(l.present(u, f) == any);
      }
    }
  }
  PresenceMatrix none = x;
  for (auto& r : none.rows) r.clear();
  CHECK(lift_presence(none, c, Granularity::Chapter).column_counts() == std::vector<std::size_t>(8, 0));
}

TEST_CASE("co-occurrence edge cases") {
  PresenceMatrix x;
  x.columns = FeatureColumns(Site::Source, {0, 1, 2});
  x.rows = {{0, 1}, {0, 1}, {2}};
  const auto g = build_cooc_graph(x, 3);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].jaccard == 1.0);
  CHECK(g.edges[0].count == 2);
  CHECK_THROWS_AS(build_cooc_graph(x, 0), ConfigError);
}

TEST_CASE("co-occurrence matches the brute-force oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    const auto x = random_presence(rng, 30, 12, rng.uniform(0.1, 0.5));
    std::vector<std::size_t> diag;
    const auto want = cooc_oracle(x, 3, &diag);
    const auto g = build_cooc_graph(x, 3);
    CHECK(g.diag == diag);
    REQUIRE(g.edges.size() == want.size());
    for (const auto& e : g.edges) {
      const auto it = want.find({e.a, e.b});
      REQUIRE(it != want.end());
      CHECK(e.count == it->second.count);
      CHECK(e.jaccard == it->second.jaccard);
    }
  }
}

TEST_CASE("cooc graph JSON round trip") {
  Rng rng(3);
  const auto g = build_cooc_graph(random_presence(rng, 20, 10, 0.3), 4);
  const auto back = CoocGraph::from_json(g.to_json());
  CHECK(back.to_json() == g.to_json());
}
