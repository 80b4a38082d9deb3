#include <doctest.h>

#include <atomic>

#include "forge/errors.hpp"
#include "support.hpp"

using namespace forge;
using namespace forge::testing;

namespace {

class CountingClient final : public TextClient {
 public:
  std::atomic<int> calls{0};
  bool fail = false;
  std::string id() const override { return "counting"; }
  std::string send(const nlohmann::json& request) override {
    ++calls;
    if (fail) throw TransportError("down");
    return stub.send(request);
  }
  StubRelator stub;
};

struct SentenceFixture {
  FixtureData data = build_fixture();
  std::vector<std::uint32_t> universe;
  SentenceScores scores;
  ThresholdVector thresholds;
  PresenceMatrix presence;
  CoocGraph graph;

  SentenceFixture() {
    for (std::uint32_t f = 0; f < data.config.planted; ++f) universe.push_back(f);
    const auto& store = data.target.stores.at("src");
    scores = compute_sentence_scores(store, data.target.corpus, universe);
    thresholds = calibrate_thresholds(scores);
    presence = sentence_presence(scores, thresholds);
    graph = build_cooc_graph(presence, 10);
  }
  SiteSentenceView view() const { return {&data.target.corpus, &scores, &presence}; }
};

EdgeEvidencePacket mech_packet(std::string hint = {}) {
  EdgeEvidencePacket p;
  p.id = "mech:s1:src:0|tgt:0";
  p.kind = EdgeKind::Mech;
  p.a = {Site::Source, 0};
  p.b = {Site::Target, 0};
  p.a_description = "the color yellow";
  p.b_description = "national parks";
  p.hint = std::move(hint);
  return p;
}

EdgeLabel proposal(const EdgeEvidencePacket& p, std::string phrase) {
  EdgeLabel l;
  l.packet_id = p.id;
  l.a = p.a;
  l.b = p.b;
  l.phrase = std::move(phrase);
  l.status = LabelStatus::Rejected;
  return l;
}

}  // namespace

TEST_CASE("cooc JOINT ranking equals the min-score sort") {
  SentenceFixture fx;
  REQUIRE(!fx.graph.edges.empty());
  for (const auto& e : fx.graph.edges) {
    const auto p = build_cooc_packet(e, fx.graph, fx.view(), fx.data.catalog);
    std::vector<std::pair<double, std::size_t>> joint;
    for (std::size_t s = 0; s < fx.data.target.corpus.num_sentences(); ++s) {
      if (fx.presence.present(s, e.a) && fx.presence.present(s, e.b)) {
        joint.push_back({-std::min(fx.scores.score(s, e.a), fx.scores.score(s, e.b)), s});
      }
    }
    std::sort(joint.begin(), joint.end());
    REQUIRE(p.joint.size() == std::min<std::size_t>(6, joint.size()));
    for (std::size_t i = 0; i < p.joint.size(); ++i) {
      CHECK(p.joint[i].sentence_id == fx.data.target.corpus.sentence(joint[i].second).id);
    }
    CHECK(p.evidence_poor == joint.empty());
  }
}

TEST_CASE("one shared sentence is the whole JOINT") {
  const auto c = CorpusStructure::from_json(corpus_doc({{{4}}}, 1));
  PresenceMatrix x;
  x.columns = FeatureColumns(Site::Source, {0, 1});
  x.rows = {{0}, {0, 1}, {1}, {}};
  std::vector<SentenceScores::Row> rows = {{{0, 1.0}}, {{0, 2.0}, {1, 3.0}}, {{1, 1.0}}, {}};
  SentenceScores scores(x.columns, rows);
  const auto g = build_cooc_graph(x, 2);
  FeatureCatalog cat;
  const auto p = build_cooc_packet(g.edges.at(0), g, {&c, &scores, &x}, cat);
  REQUIRE(p.joint.size() == 1);
  CHECK(p.joint[0].sentence_id == "s2");
  CHECK(p.only_a.size() == 1);
  CHECK(p.only_b.size() == 1);
}

TEST_CASE("mech packet hint is the strongest latent caption") {
  const auto corpus = CorpusStructure::from_json(corpus_doc({{{1}}}, 2));
  TokenActivationStore src("src", 2, 1, {{0, 0, 1.0f}, {1, 0, 1.0f}}, {0, 0});
  TokenActivationStore tgt("tgt", 2, 1, {{0, 0, 1.0f}}, {0, 0});
  TokenActivationStore lat("latent", 2, 2, {{0, 1, 0.5f}}, {0, 0});
  SupportMatrices sup;
  sup.latents = 2;
  sup.source_pos[0] = {{0, 1.0}, {1, 2.0}};
  sup.target_pos[0] = {{0, 1.0}, {1, 3.0}};
  MechInputs in{&corpus, &src, &tgt, &lat, &sup, {0}, {0}, nullptr, nullptr};
  auto g = build_dynamic_graph("s1", in);
  REQUIRE(g.edges.size() == 1);
  REQUIRE(g.edges[0].latents.size() == 1);
  LatentCaption cap;
  cap.latent = 1;
  cap.label = "lava to basalt";
  attach_captions(g, {{1, cap}}, CaptionMode::TopFunctional);
  FeatureCatalog cat;
  cat.insert({Site::Source, 0}, {"lava flows", {}, ""});
  cat.insert({Site::Target, 0}, {"basalt columns", {}, ""});
  const auto p = build_mech_packet(g.edges[0], g, in, cat);
  CHECK(p.hint == "lava to basalt");
  CHECK(p.joint.size() == 1);
  CHECK(p.only_a.size() == 0);  // token 1 gates src but the sentence also holds tgt
}

TEST_CASE("validation rules") {
  const auto p = mech_packet("color to parks");
  const RelateConfig cfg;
  auto check = [&](const std::string& phrase) { return validate_label(proposal(p, phrase), p, cfg); };
  CHECK(check("related to").rejection_reason == "generic phrase");
  CHECK(check("national parks").rejection_reason == "copies an endpoint description");
  CHECK(check("yellow parks").rejection_reason == "no directional verb");
  CHECK(check("color to parks").status == LabelStatus::Fallback);
  const auto ok = check("converts detected place names into park references");
  CHECK(ok.status == LabelStatus::Accepted);
  CHECK(ok.directional);
  EdgeEvidencePacket cooc = p;
  cooc.kind = EdgeKind::Cooc;
  cooc.hint.clear();
  CHECK(validate_label(proposal(cooc, "names the park after"), cooc, cfg).status == LabelStatus::Accepted);
}

TEST_CASE("labeling falls back") {
  SentenceFixture fx;
  const auto p = build_cooc_packet(fx.graph.edges.at(0), fx.graph, fx.view(), fx.data.catalog);
  SUBCASE("evidence-poor packets never reach the client") {
    auto poor = p;
    poor.joint.clear();
    poor.evidence_poor = true;
    CountingClient c;
    const auto l = label_edge(poor, c);
    CHECK(c.calls == 0);
    CHECK(l.status == LabelStatus::Fallback);
    CHECK(l.phrase == "co-occurs with");
  }
  SUBCASE("transport failure retries once") {
    CountingClient c;
    c.fail = true;
    const auto l = label_edge(p, c);
    CHECK(c.calls == 2);
    CHECK(l.status == LabelStatus::Fallback);
  }
  SUBCASE("stage one reject keeps the justification") {
    auto missing = p;
    missing.a_description = "obsidian";  // keyword absent from every JOINT line
    StubRelator stub;
    const auto l = label_edge(missing, stub);
    CHECK(l.status == LabelStatus::Fallback);
    CHECK(l.justification == "An endpoint keyword is missing from the joint evidence.");
    CHECK(l.provenance == "stub-relator");
  }
  SUBCASE("stub phrase is deterministic") {
    StubRelator stub;
    const auto a = label_edge(p, stub);
    const auto b = label_edge(p, stub);
    CHECK(a.to_json() == b.to_json());
    CHECK(a.status == LabelStatus::Accepted);
    CHECK(a.phrase.find("co-occurs with") != std::string::npos);
    CHECK(a.phrase.find("contexts") != std::string::npos);
  }
  SUBCASE("budget sends only the heaviest packets") {
    std::vector<EdgeEvidencePacket> ps;
    for (const auto& e : fx.graph.edges) ps.push_back(build_cooc_packet(e, fx.graph, fx.view(), fx.data.catalog));
    RelateConfig cfg;
    cfg.budget = 3;
    CountingClient c;
    const auto labels = label_packets(ps, c, cfg);
    std::size_t budgeted = 0;
    for (const auto& l : labels) budgeted += l.justification == "outside labeling budget";
    CHECK(budgeted == ps.size() - 3);
  }
}

TEST_CASE("fallback fixed point") {
  const RelateConfig cfg;
  SentenceFixture fx;
  for (const auto& e : fx.graph.edges) {
    const auto p = build_cooc_packet(e, fx.graph, fx.view(), fx.data.catalog);
    const auto fb = fallback_label(p, cfg, "x");
    CHECK(validate_label(fb, p, cfg).to_json() == fb.to_json());
    CHECK(validate_label(proposal(p, fb.phrase), p, cfg).status == LabelStatus::Accepted);
  }
  const auto mp = mech_packet("lava to basalt");
  CHECK(validate_label(proposal(mp, fallback_label(mp, cfg, "x").phrase), mp, cfg).status == LabelStatus::Accepted);
}
