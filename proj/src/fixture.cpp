#include "forge/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "forge/errors.hpp"

namespace forge {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Nine topic vocabularies, one per target subchapter.
const char* const kTopicWords[][4] = {
    {"membrane", "channel", "diffusion", "gradient"},    {"enzyme", "substrate", "catalysis", "inhibitor"},
    {"polymerase", "replication", "strand", "helix"},    {"chlorophyll", "photon", "thylakoid", "pigment"},
    {"mitochondria", "glucose", "respiration", "oxygen"}, {"allele", "dominant", "recessive", "inheritance"},
    {"selection", "fitness", "mutation", "species"},      {"predator", "prey", "population", "habitat"},
    {"antibody", "antigen", "lymphocyte", "pathogen"},
};
const char* const kTopicNames[] = {"transport", "enzymes",     "copying",    "photosynthesis", "energy",
                                   "genetics",  "evolution",   "ecology",    "immunity"};
const char* const kChapterTitles[] = {"Cells", "Energy and Inheritance", "Populations"};

const char* const kContrastWords[][4] = {
    {"empire", "treaty", "dynasty", "revolution"}, {"senate", "monarch", "colony", "charter"},
    {"granite", "basalt", "sediment", "erosion"},  {"tectonic", "magma", "fault", "glacier"},
};

const char* const kTemplates[] = {
    "The {0} and the {1} depend on {2} near the {3}.",
    "Readers observe how {0} shapes {1} through {2} and {3}.",
    "Each {0} links {1} with {2} across the {3}.",
    "Models of {0} explain {1}, {2} and {3} together.",
    "Here {0} meets {1} while {2} follows {3}.",
};

const char* const kGenericDescriptions[] = {
    "numbers and quantities", "plural nouns",      "past tense verbs",  "sentence openings",
    "comparisons between things", "negation words", "time expressions", "lists of items",
    "abstract nouns",         "questions to the reader",
};
const char* const kSurfaceDescriptions[] = {"punctuation marks", "capitalization of words", "commas"};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }
  bool chance(double p) { return uniform() < p; }
  double normal() {
    const double u1 = std::max(uniform(), 1e-300), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 gen_;
};

std::string fill(const char* tmpl, const std::vector<std::string>& w) {
  std::string out(tmpl);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const std::string tag = "{" + std::to_string(i) + "}";
    out.replace(out.find(tag), tag.size(), w[i]);
  }
  return out;
}

struct Layout {
  json doc;
  std::uint64_t tokens = 0;
  std::vector<std::uint8_t> mask;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> content;  // per sentence, non-special tokens
  std::vector<std::size_t> sentence_sub;                          // subchapter index per sentence
};

/// `words(sub, s)` returns the four vocabulary words of sentence s in
/// subchapter sub.
template <class WordsFn>
Layout make_corpus(const std::string& prefix, const std::string& corpus_id, std::size_t chapters,
                   std::size_t subs, std::size_t paras, std::size_t sents, std::size_t tokens_per,
                   const std::vector<std::string>& chapter_titles, const std::vector<std::string>& sub_titles,
                   WordsFn words) {
  Layout L;
  json jc = json::array(), js = json::array(), jp = json::array(), jsent = json::array();
  std::size_t sub_index = 0, para_index = 0, sent_index = 0;
  for (std::size_t c = 0; c < chapters; ++c) {
    const auto cid = prefix + "ch" + std::to_string(c + 1);
    jc.push_back({{"id", cid}, {"title", chapter_titles[c % chapter_titles.size()]}});
    for (std::size_t u = 0; u < subs; ++u, ++sub_index) {
      const auto sid = prefix + "sub" + std::to_string(sub_index + 1);
      js.push_back({{"id", sid}, {"title", sub_titles[sub_index % sub_titles.size()]}, {"chapter_id", cid}});
      for (std::size_t p = 0; p < paras; ++p, ++para_index) {
        const auto pid = prefix + "p" + std::to_string(para_index + 1);
        jp.push_back({{"id", pid}, {"subchapter_id", sid}});
        for (std::size_t s = 0; s < sents; ++s, ++sent_index) {
          const bool chapter_start = u == 0 && p == 0 && s == 0;
          const auto begin = L.tokens;
          if (chapter_start) {
            L.mask.push_back(1);
            ++L.tokens;
          }
          const auto content_begin = L.tokens;
          for (std::size_t t = 0; t < tokens_per; ++t) L.mask.push_back(0);
          L.tokens += tokens_per;
          L.content.emplace_back(content_begin, L.tokens);
          L.sentence_sub.push_back(sub_index);
          auto w = words(sub_index, sent_index);
          // Rotate so sentences do not all open with the same word.
          std::rotate(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(sent_index % w.size()), w.end());
          jsent.push_back({{"id", prefix + "s" + std::to_string(sent_index + 1)},
                           {"token_span", {begin, L.tokens}},
                           {"paragraph_id", pid},
                           {"subchapter_id", sid},
                           {"chapter_id", cid},
                           {"text", fill(kTemplates[sent_index % 5], w)}});
        }
      }
    }
  }
  L.doc = {{"corpus_id", corpus_id},
           {"num_tokens", L.tokens},
           {"chapters", jc},
           {"subchapters", js},
           {"paragraphs", jp},
           {"sentences", jsent}};
  return L;
}

using Entries = std::map<std::pair<std::uint32_t, std::uint32_t>, float>;

void put(Entries& e, std::uint64_t token, std::size_t feature, double value) {
  e[{static_cast<std::uint32_t>(token), static_cast<std::uint32_t>(feature)}] = static_cast<float>(value);
}

TokenActivationStore to_store(const std::string& site, const Layout& L, std::size_t features, const Entries& e) {
  std::vector<Triplet> t;
  t.reserve(e.size());
  for (const auto& [k, v] : e) t.push_back({k.first, k.second, v});
  return TokenActivationStore(site, L.tokens, features, std::move(t), L.mask);
}

/// Generic features shared by every corpus: common background features, plus
/// on the target only the sparse, weak and special-only roles.
void add_generic(Entries& e, const Layout& L, const FixtureConfig& cfg, Rng& rng, bool target) {
  for (std::size_t f = cfg.planted; f < cfg.features; ++f) {
    const auto role = fixture_role(f, cfg);
    if (role == FixtureRole::Common) {
      for (std::uint64_t tok = 0; tok < L.tokens; ++tok) {
        if (!L.mask[tok] && rng.chance(0.04)) put(e, tok, f, rng.uniform(0.5, 2.0));
      }
    } else if (target && role == FixtureRole::Sparse) {
      for (int r = 0; r < 2; ++r) {
        const auto s = rng.index(L.content.size());
        put(e, L.content[s].first + rng.index(L.content[s].second - L.content[s].first), f, 6.0 + r);
      }
    } else if (target && role == FixtureRole::Weak) {
      const auto s = rng.index(L.content.size());
      put(e, L.content[s].first, f, rng.uniform(0.2, 0.8));
    } else if (target && role == FixtureRole::SpecialOnly) {
      for (std::uint64_t tok = 0; tok < L.tokens; ++tok) {
        if (L.mask[tok]) put(e, tok, f, 8.0);
      }
    }
  }
}

Eigen::VectorXd random_unit(std::size_t d, Rng& rng) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  return v / v.norm();
}

}  // namespace

FixtureRole fixture_role(std::size_t f, const FixtureConfig& cfg) {
  if (f < cfg.planted) return FixtureRole::Planted;
  const std::size_t g = f - cfg.planted;
  const std::size_t n = cfg.features - cfg.planted;
  if (f + 1 == cfg.features) return FixtureRole::SpecialOnly;
  if (g < n * 100 / 160) return FixtureRole::Common;
  if (g < n * 140 / 160) return FixtureRole::Sparse;
  if (g < n * 150 / 160) return FixtureRole::Weak;
  return FixtureRole::Silent;
}

FixtureData build_fixture(const FixtureConfig& cfg) {
  if (cfg.chapters * cfg.subchapters > 9 || cfg.chapters > 3) throw ConfigError("fixture supports at most 3x3 topics");
  if (cfg.planted > cfg.features || cfg.features < cfg.planted + 8) throw ConfigError("fixture needs generic features");
  if (cfg.latents < cfg.chapters * cfg.subchapters) throw ConfigError("fixture needs a latent per topic");
  Rng rng(cfg.seed);
  FixtureData fx;
  fx.config = cfg;
  const std::size_t T = cfg.chapters * cfg.subchapters;
  const std::size_t F = cfg.features;
  const std::size_t K = cfg.latents;
  const std::size_t d = cfg.d_model;

  fx.roles.resize(F);
  fx.topic.assign(F, static_cast<std::size_t>(-1));
  for (std::size_t f = 0; f < F; ++f) {
    fx.roles[f] = fixture_role(f, cfg);
    if (f < cfg.planted) fx.topic[f] = f % T;
  }

  // Target corpus.
  std::vector<std::string> titles(kChapterTitles, kChapterTitles + 3), sub_titles;
  for (std::size_t t = 0; t < T; ++t) sub_titles.push_back(std::string("The study of ") + kTopicNames[t]);
  const auto L = make_corpus("", "fixture-textbook", cfg.chapters, cfg.subchapters, cfg.paragraphs, cfg.sentences,
                             cfg.tokens_per_sentence, titles, sub_titles, [](std::size_t sub, std::size_t) {
                               return std::vector<std::string>(kTopicWords[sub], kTopicWords[sub] + 4);
                             });
  fx.target.name = "fixture-textbook";
  fx.target.corpus = CorpusStructure::from_json(L.doc);

  // Source activations: planted features follow a per-sentence topic
  // intensity so same-topic features share their strongest sentences, and
  // leak faint activity everywhere else so quantile thresholds keep only
  // the on-topic peaks.
  Entries src, tgt;
  std::vector<double> intensity(L.content.size());
  for (auto& v : intensity) v = rng.uniform(1.0, 4.0);
  for (std::size_t f = 0; f < cfg.planted; ++f) {
    for (std::size_t s = 0; s < L.content.size(); ++s) {
      const auto [b, e] = L.content[s];
      const auto n = e - b;
      if (L.sentence_sub[s] == fx.topic[f]) {
        if (!rng.chance(0.85)) continue;
        for (int r = 0; r < 2; ++r) {
          const auto tok = b + rng.index(n);
          const double v = intensity[s] * rng.uniform(0.8, 1.2);
          put(src, tok, f, v);
          put(tgt, tok, f, v * rng.uniform(0.6, 1.0));
        }
      } else if (rng.chance(0.6)) {
        const auto tok = b + rng.index(n);
        put(src, tok, f, rng.uniform(0.01, 0.1));
        put(tgt, tok, f, rng.uniform(0.01, 0.1));
      }
    }
  }
  add_generic(src, L, cfg, rng, true);
  add_generic(tgt, L, cfg, rng, true);
  fx.target.stores.emplace("src", to_store("src", L, F, src));
  fx.target.stores.emplace("tgt", to_store("tgt", L, F, tgt));

  // Stack: random unit dictionaries, tied encoders; topic latents read the
  // sum of their planted source directions and write the planted targets.
  SparseStack& st = fx.stack;
  st.decoder_src.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(F));
  st.encoder_tgt.resize(static_cast<Eigen::Index>(F), static_cast<Eigen::Index>(d));
  for (std::size_t f = 0; f < F; ++f) st.decoder_src.col(static_cast<Eigen::Index>(f)) = random_unit(d, rng);
  for (std::size_t f = 0; f < F; ++f) st.encoder_tgt.row(static_cast<Eigen::Index>(f)) = random_unit(d, rng).transpose();
  st.encoder_src = st.decoder_src.transpose();
  st.decoder_tgt = st.encoder_tgt.transpose();
  st.read.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(d));
  st.write.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(K));
  for (std::size_t k = 0; k < K; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    if (k < T) {
      Eigen::VectorXd r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
      Eigen::VectorXd w = r;
      for (std::size_t f = 0; f < cfg.planted; ++f) {
        if (fx.topic[f] != k) continue;
        r += st.decoder_src.col(static_cast<Eigen::Index>(f));
        w += st.encoder_tgt.row(static_cast<Eigen::Index>(f)).transpose();
      }
      st.read.row(kk) = (r / r.norm()).transpose();
      st.write.col(kk) = w / w.norm();
    } else {
      st.read.row(kk) = 0.5 * random_unit(d, rng).transpose();
      st.write.col(kk) = 0.5 * random_unit(d, rng);
    }
  }
  // Round through f32 so the in-memory stack equals what a reader sees.
  for (Matrix* m : {&st.encoder_src, &st.decoder_src, &st.encoder_tgt, &st.decoder_tgt, &st.read, &st.write}) {
    *m = m->cast<float>().cast<double>();
  }

  // Latent activations t = JumpReLU(R D_src z_src).
  {
    const auto& store = fx.target.stores.at("src");
    Entries lat;
    for (std::uint64_t tok = 0; tok < L.tokens; ++tok) {
      Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
      for (const auto& t : store.token_entries(tok)) {
        x += static_cast<double>(t.value) * st.decoder_src.col(t.feature);
      }
      const Eigen::VectorXd pre = st.read * x;
      for (std::size_t k = 0; k < K; ++k) {
        if (pre[static_cast<Eigen::Index>(k)] > cfg.latent_threshold) put(lat, tok, k, pre[static_cast<Eigen::Index>(k)]);
      }
    }
    fx.target.stores.emplace(kLatentSite, to_store(kLatentSite, L, K, lat));
  }

  // Contrast corpora carry generic features only.
  const char* const contrast_names[] = {"history", "geology"};
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<std::string> ct = {c == 0 ? "Ancient States" : "Rocks", c == 0 ? "Modern States" : "Landforms"};
    std::vector<std::string> cs = {"Part one", "Part two", "Part three", "Part four"};
    const auto CL = make_corpus(std::string(contrast_names[c]).substr(0, 1) + "_", contrast_names[c], 2, 2, 3, 5,
                                cfg.tokens_per_sentence, ct, cs, [c](std::size_t sub, std::size_t) {
                                  const auto& w = kContrastWords[2 * c + sub % 2];
                                  return std::vector<std::string>(w, w + 4);
                                });
    FixtureCorpus fc;
    fc.name = contrast_names[c];
    fc.corpus = CorpusStructure::from_json(CL.doc);
    Entries cs_src, cs_tgt;
    add_generic(cs_src, CL, cfg, rng, false);
    add_generic(cs_tgt, CL, cfg, rng, false);
    fc.stores.emplace("src", to_store("src", CL, F, cs_src));
    fc.stores.emplace("tgt", to_store("tgt", CL, F, cs_tgt));
    fx.contrasts.push_back(std::move(fc));
  }

  // Catalog: planted descriptions open with a topic word; embeddings cluster
  // by topic.
  std::vector<Eigen::VectorXd> centers;
  for (std::size_t t = 0; t < T; ++t) centers.push_back(3.0 * random_unit(cfg.embedding_dim, rng));
  for (Site site : {Site::Source, Site::Target}) {
    for (std::size_t f = 0; f < F; ++f) {
      CatalogEntry e;
      e.source = "fixture";
      Eigen::VectorXd emb(static_cast<Eigen::Index>(cfg.embedding_dim));
      for (Eigen::Index i = 0; i < emb.size(); ++i) emb[i] = rng.normal();
      switch (fx.roles[f]) {
        case FixtureRole::Planted: {
          const auto t = fx.topic[f];
          e.description = std::string(kTopicWords[t][(f / T) % 4]) + " in " + kTopicNames[t];
          emb = centers[t] + 0.15 * emb;
          break;
        }
        case FixtureRole::SpecialOnly:
          e.description = "start of document marker";
          break;
        default:
          if (f % 10 == 0) {
            e.description = "";
          } else if (f % 10 == 5) {
            e.description = kSurfaceDescriptions[f % 3];
          } else {
            e.description = kGenericDescriptions[f % 10];
          }
      }
      e.embedding.assign(emb.data(), emb.data() + emb.size());
      for (auto& v : e.embedding) v = std::round(v * 1e6) / 1e6;
      fx.catalog.insert({site, static_cast<std::uint32_t>(f)}, std::move(e));
    }
  }
  return fx;
}

IngestRequest write_fixture(const FixtureData& data, const fs::path& dir) {
  fs::create_directories(dir / "activations");
  IngestRequest req;
  req.corpus = dir / "corpus.json";
  req.stack = dir / "stack";
  req.catalog = dir / "catalog.json";
  save_corpus_structure(data.target.corpus, req.corpus);
  save_sparse_stack(data.stack, req.stack);
  save_feature_catalog(data.catalog, req.catalog);
  for (const auto& [site, store] : data.target.stores) {
    const auto p = dir / "activations" / (site + ".act");
    save_activation_store(store, p);
    req.activations[site] = p;
  }
  for (const auto& c : data.contrasts) {
    ContrastSource cs;
    cs.name = c.name;
    cs.corpus = dir / "contrast" / c.name / "corpus.json";
    fs::create_directories(cs.corpus.parent_path());
    save_corpus_structure(c.corpus, cs.corpus);
    for (const auto& [site, store] : c.stores) {
      const auto p = dir / "contrast" / c.name / (site + ".act");
      save_activation_store(store, p);
      cs.activations[site] = p;
    }
    req.contrasts.push_back(std::move(cs));
  }
  return req;
}

}  // namespace forge
