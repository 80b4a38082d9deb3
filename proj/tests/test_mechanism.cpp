#include <doctest.h>

#include "forge/errors.hpp"
#include "forge/nnls.hpp"
#include "support.hpp"

using namespace forge;
using namespace forge::testing;

namespace {

FeatureCatalog word_catalog(std::size_t fs, std::size_t ft) {
  FeatureCatalog cat;
  for (std::uint32_t i = 0; i < fs; ++i) cat.insert({Site::Source, i}, {"source word" + std::to_string(i), {}, ""});
  for (std::uint32_t i = 0; i < ft; ++i) cat.insert({Site::Target, i}, {"target word" + std::to_string(i), {}, ""});
  return cat;
}

SparseStack stack_with(const Matrix& dsrc, const Matrix& read, std::size_t ft = 2) {
  SparseStack s;
  const auto d = dsrc.rows();
  s.decoder_src = dsrc;
  s.encoder_src = dsrc.transpose();
  s.encoder_tgt = Matrix::Identity(static_cast<Eigen::Index>(ft), d);
  s.decoder_tgt = s.encoder_tgt.transpose();
  s.read = read;
  s.write = Matrix::Ones(d, read.rows());
  return s;
}

double alpha_of(const LatentCaption& c, std::uint32_t f) {
  for (auto [k, v] : c.alpha) {
    if (k == f) return v;
  }
  return 0.0;
}

}  // namespace

TEST_CASE("support matrices equal explicit inner products") {
  Rng rng(16);
  const auto m = random_mech(rng, 16, 5, 7, 6, 3, 2);
  const auto& s = m.stack;
  for (std::uint32_t a = 0; a < 7; ++a) {
    for (std::uint32_t k = 0; k < 5; ++k) {
      double v = 0;
      for (Eigen::Index i = 0; i < 16; ++i) v += s.decoder_src(i, a) * s.read(k, i);
      CHECK(m.supports.a_func(a, k) == doctest::Approx(v).epsilon(1e-12));
      CHECK(m.supports.a_plus(a, k) == doctest::Approx(std::max(v, 0.0)).epsilon(1e-12));
    }
  }
  for (std::uint32_t b = 0; b < 6; ++b) {
    for (std::uint32_t k = 0; k < 5; ++k) {
      double v = 0;
      for (Eigen::Index i = 0; i < 16; ++i) v += s.encoder_tgt(b, i) * s.write(i, k);
      CHECK(m.supports.g_func(b, k) == doctest::Approx(v).epsilon(1e-12));
    }
  }
}

TEST_CASE("read vector orthogonal to every decoder column") {
  Matrix d = Matrix::Zero(4, 3);
  d(0, 0) = d(1, 1) = d(2, 2) = 1.0;
  Matrix r = Matrix::Zero(1, 4);
  r(0, 3) = 1.0;
  auto st = stack_with(d, r);
  const auto sup = compute_support_matrices(st);
  for (std::uint32_t a = 0; a < 3; ++a) CHECK(sup.a_plus(a, 0) == 0.0);
  CHECK(!caption_latent(0, sup, st, word_catalog(3, 2)).vacuous);  // the write side still has support
  st.write.setZero();
  CHECK(caption_latent(0, compute_support_matrices(st), st, word_catalog(3, 2)).vacuous);
}

TEST_CASE("static prior") {
  Rng rng(8);
  SUBCASE("single latent is rank one") {
    const auto m = random_mech(rng, 8, 1, 5, 5, 2, 2);
    const auto p = compute_static_prior(m.supports);
    Matrix dense = Matrix::Zero(5, 5);
    for (const auto& e : p.entries) dense(e.source, e.target) = e.value;
    Eigen::JacobiSVD<Matrix> svd(dense);
    CHECK(svd.singularValues()(1) <= 1e-9 * std::max(1.0, svd.singularValues()(0)));
  }
  SUBCASE("zero supports give zero prior") {
    SupportMatrices z;
    z.latents = 3;
    CHECK(compute_static_prior(z).entries.empty());
  }
  SUBCASE("random prior equals the triple loop") {
    const auto m = random_mech(rng, 12, 6, 9, 8, 2, 2);
    const auto p = compute_static_prior(m.supports);
    for (std::uint32_t a = 0; a < 9; ++a) {
      for (std::uint32_t b = 0; b < 8; ++b) {
        double v = 0;
        for (std::uint32_t k = 0; k < 6; ++k) v += m.supports.a_plus(a, k) * m.supports.g_plus(b, k);
        CHECK(p.value(a, b) == doctest::Approx(v).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("nnls solver") {
  Rng rng(3);
  Matrix a(10, 4);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  Vector x(4);
  x << 1.5, 0.0, 2.0, 0.0;
  const auto r = nnls(a, a * x);
  CHECK(r.converged);
  CHECK((r.x - x).norm() < 1e-9);
  const Vector b = Vector::Random(10);
  const auto r2 = nnls(a, b);
  CHECK(r2.x.minCoeff() >= 0.0);
  CHECK(projected_gradient_norm(a, b, r2.x) < 1e-7);
}

TEST_CASE("nnls captions") {
  CaptionConfig cfg;
  cfg.mode = CaptionMode::ConstrainedNnls;
  SUBCASE("exact single column") {
    Rng rng(5);
    Matrix d(12, 20);
    for (Eigen::Index j = 0; j < 20; ++j) {
      for (Eigen::Index i = 0; i < 12; ++i) d(i, j) = rng.normal();
      d.col(j).normalize();
    }
    Matrix r = d.col(7).transpose();
    const auto st = stack_with(d, r);
    const auto c = caption_latent(0, compute_support_matrices(st), st, word_catalog(20, 2), cfg);
    CHECK(std::abs(alpha_of(c, 7) - 1.0) <= 1e-6);
    for (auto [f, v] : c.alpha) {
      if (f != 7) CHECK(std::abs(v) <= 1e-6);
    }
  }
  SUBCASE("orthogonal dictionary") {
    Matrix d = Matrix::Identity(8, 8);
    Matrix r = Matrix::Zero(1, 8);
    r(0, 1) = 2.0;
    r(0, 5) = 3.0;
    const auto st = stack_with(d, r);
    const auto c = caption_latent(0, compute_support_matrices(st), st, word_catalog(8, 2), cfg);
    CHECK(alpha_of(c, 1) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(alpha_of(c, 5) == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(c.alpha.size() == 2);
  }
  SUBCASE("fit stays inside the candidates") {
    Matrix d(3, 3);
    d << 0.9, 0.9, 0.3,  //
        0.4, 0.0, 0.0,   //
        0.0, 0.4, 0.0;
    Matrix r(1, 3);
    r << 1.0, 0.0, 0.0;
    const auto st = stack_with(d, r);
    const auto full = nnls(d, r.row(0).transpose());
    REQUIRE(full.x(2) > 1.0);  // the free fit wants feature 2
    cfg.candidates = 2;
    const auto c = caption_latent(0, compute_support_matrices(st), st, word_catalog(3, 2), cfg);
    CHECK(c.source_candidates == std::vector<std::uint32_t>{0, 1});
    CHECK(alpha_of(c, 2) == 0.0);
    for (auto [f, v] : c.alpha) {
      CHECK(v > 0.0);
      CHECK(f != 2);
    }
  }
}

TEST_CASE("single-token mechanism") {
  const auto corpus = CorpusStructure::from_json(corpus_doc({{{1}}}, 1));
  TokenActivationStore src("src", 1, 1, {{0, 0, 1.0f}}, {0});
  TokenActivationStore tgt("tgt", 1, 1, {{0, 0, 1.0f}}, {0});
  TokenActivationStore lat("latent", 1, 1, {{0, 0, 0.5f}}, {0});
  SupportMatrices sup;
  sup.latents = 1;
  sup.source_pos[0] = {{0, 2.0}};
  sup.target_pos[0] = {{0, 3.0}};
  MechInputs in{&corpus, &src, &tgt, &lat, &sup, {0}, {0}, nullptr, nullptr};
  const auto g = build_dynamic_graph("s1", in);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].weight == 3.0);
  CHECK_THROWS_AS(build_dynamic_graph("s404", in), NotFoundError);
}

TEST_CASE("dynamic graph matches the five-loop oracle") {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    auto m = random_mech(rng, 8, 4, 6, 6, 1, 5);
    const auto in = m.inputs();
    const auto g = build_dynamic_graph("s1", in);
    const auto tokens = unit_token_set(in, "s1");
    const auto want = mech_oracle(m, tokens);
    REQUIRE(g.edges.size() == want.size());
    for (const auto& e : g.edges) {
      const auto& ek = want.at({e.source, e.target});
      double f = 0;
      for (auto v : ek) f += v;
      CHECK(rel_close(e.weight, f, 1e-12));
      std::size_t nz = 0;
      for (const auto& l : e.latents) {
        CHECK(rel_close(l.evidence, ek[l.latent], 1e-12));
        CHECK(rel_close(l.rho, ek[l.latent] / (f + 1e-9), 1e-12));
      }
      for (auto v : ek) nz += v > 0.0;
      CHECK(e.latents.size() == nz);
    }
  }
}

TEST_CASE("dynamic graph JSON round trip and edge cap") {
  Rng rng(12);
  auto m = random_mech(rng, 8, 4, 8, 8, 4, 4);
  MechConfig cfg;
  cfg.edge_cap = 3;
  const auto g = build_dynamic_graph("c1", m.inputs(), cfg);
  CHECK(g.edges.size() <= 3);
  CHECK(g.edges_total >= g.edges.size());
  CHECK(DynamicMechanismGraph::from_json(g.to_json()).to_json() == g.to_json());
}
