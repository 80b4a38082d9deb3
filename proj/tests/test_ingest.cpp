#include <doctest.h>

#include <cstring>

#include "forge/errors.hpp"
#include "support.hpp"

using namespace forge;
using namespace forge::testing;

namespace {

// Hand-rolled writer for the triplet layout, independent of the library's.
void write_raw_act(const fs::path& p, std::uint64_t tokens, std::uint64_t features,
                   const std::vector<std::tuple<std::uint32_t, std::uint32_t, float>>& trip,
                   std::string magic = "SAEACT1") {
  std::ofstream out(p, std::ios::binary);
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  auto put = [&](auto v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  put(tokens);
  put(features);
  put(static_cast<std::uint64_t>(trip.size()));
  for (auto [t, f, v] : trip) {
    put(t);
    put(f);
    put(v);
  }
  for (std::uint64_t i = 0; i < tokens; ++i) put(std::uint8_t{0});
}

}  // namespace

TEST_CASE("empty store keeps its token count") {
  TokenActivationStore s("src", 10, 4, {}, std::vector<std::uint8_t>(10, 0));
  CHECK(s.num_tokens() == 10);
  CHECK(s.nnz() == 0);
}

TEST_CASE("three triplets densify to the hand-written matrix") {
  const auto dir = temp_dir("ingest_act");
  write_raw_act(dir / "a.act", 4, 5, {{3, 0, 1.5f}, {0, 4, 2.0f}, {2, 2, -0.5f}});
  const auto s = load_activation_store(dir / "a.act", "src");
  const double expect[4][5] = {{0, 0, 0, 0, 2.0}, {0, 0, 0, 0, 0}, {0, 0, -0.5, 0, 0}, {1.5, 0, 0, 0, 0}};
  const auto d = s.dense();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 5; ++j) CHECK(d[static_cast<std::size_t>(i * 5 + j)] == expect[i][j]);
  }
  save_activation_store(s, dir / "b.act");
  save_activation_store(load_activation_store(dir / "b.act", "src"), dir / "c.act");
  CHECK(slurp(dir / "b.act") == slurp(dir / "c.act"));
}

TEST_CASE("activation store errors") {
  const auto dir = temp_dir("ingest_err");
  write_raw_act(dir / "bad.act", 2, 2, {}, "NOTACT1");
  CHECK_THROWS_AS(load_activation_store(dir / "bad.act", "src"), FormatError);
  write_raw_act(dir / "oob.act", 2, 2, {{0, 5, 1.0f}});
  CHECK_THROWS_AS(load_activation_store(dir / "oob.act", "src"), BoundsError);
  write_raw_act(dir / "nan.act", 2, 2, {{0, 1, std::nanf("")}});
  CHECK_THROWS_AS(load_activation_store(dir / "nan.act", "src"), ValueError);
  CHECK_THROWS_AS(TokenActivationStore("src", 2, 2, {{0, 1, 1.0f}, {0, 1, 2.0f}}, {0, 0}), BoundsError);
}

TEST_CASE("corpus structure") {
  SUBCASE("single path") {
    const auto c = CorpusStructure::from_json(corpus_doc({{{1}}}, 3));
    CHECK(c.num_sentences() == 1);
    CHECK(c.unit_of_sentence(0, Granularity::Chapter) == 0);
  }
  SUBCASE("3x3x4x5 book") {
    const auto data = build_fixture();
    const auto& c = data.target.corpus;
    std::size_t n = 0;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      for (std::size_t u = 0; u < 3; ++u) {
        for (std::size_t p = 0; p < 4; ++p) {
          for (std::size_t s = 0; s < 5; ++s, ++n) {
            CHECK(c.unit_of_sentence(n, Granularity::Chapter) == ch);
            CHECK(c.unit_of_sentence(n, Granularity::Subchapter) == ch * 3 + u);
            CHECK(c.unit_of_sentence(n, Granularity::Paragraph) == (ch * 3 + u) * 4 + p);
          }
        }
      }
    }
    CHECK(c.num_sentences() == 180);
    CHECK(n == 180);
  }
  SUBCASE("schema violations") {
    auto doc = corpus_doc({{{2}}, {{1}}}, 2);
    auto bad = doc;
    bad["sentences"][0]["chapter_id"] = "c2";
    CHECK_THROWS_AS(CorpusStructure::from_json(bad), SchemaError);
    bad = doc;
    bad["sentences"][0]["paragraph_id"] = "p9";
    CHECK_THROWS_AS(CorpusStructure::from_json(bad), SchemaError);
    bad = doc;
    bad["sentences"][1]["token_span"] = {1, 4};
    CHECK_THROWS_AS(CorpusStructure::from_json(bad), SchemaError);
  }
}

TEST_CASE("sparse stack shapes") {
  SparseStack id;
  id.encoder_src = id.decoder_src = id.encoder_tgt = id.decoder_tgt = Matrix::Identity(4, 4);
  id.read = Matrix::Identity(2, 4);
  id.write = Matrix::Identity(4, 2);
  const auto r = id.validate();
  CHECK(r.d_model == 4);
  CHECK(r.latents == 2);

  const auto data = build_fixture();
  const auto fr = data.stack.validate();
  CHECK(fr == ShapeReport{64, 200, 200, 32});

  auto bad = data.stack;
  bad.read = Matrix::Zero(32, 32);
  CHECK_THROWS_AS(bad.validate(), ShapeError);

  const auto dir = temp_dir("ingest_stack");
  save_sparse_stack(data.stack, dir);
  const auto back = load_sparse_stack(dir);
  CHECK(back.read == data.stack.read);
}

TEST_CASE("ingest cross-validation") {
  const auto root = temp_dir("ingest_run");
  const auto req = write_fixture(build_fixture(), root / "in");
  {
    Workspace ws(root / "ok");
    run_ingest(req, ws);
    CHECK(ws.has_stage("ingest"));
    CHECK(load_activation_store(ws.activation_path("src"), "src").num_features() == 200);
  }
  {
    // latent store with the wrong latent count
    auto r = req;
    const auto lat = load_activation_store(r.activations.at("latent"), "latent");
    TokenActivationStore small("latent", lat.num_tokens(), 8, {}, lat.special_token_mask());
    save_activation_store(small, root / "small.act");
    r.activations["latent"] = root / "small.act";
    Workspace ws(root / "bad");
    CHECK_THROWS_AS(run_ingest(r, ws), ShapeError);
  }
  {
    auto r = req;
    r.catalog = root / "cat.json";
    auto cat = read_json(req.catalog);
    cat["features"].erase(cat["features"].begin());
    write_json(r.catalog, cat);
    Workspace ws(root / "bad2");
    CHECK_THROWS_AS(run_ingest(r, ws), SchemaError);
  }
}
