#include "forge/filter.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <regex>
#include <set>

#include <spdlog/spdlog.h>

#include "forge/errors.hpp"
#include "forge/text.hpp"

namespace forge {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void ShortlistConfig::validate() const {
  if (!(bottom_percent_drop >= 0.0 && bottom_percent_drop < 1.0)) {
    throw ConfigError("bottom_percent_drop must lie in [0, 1)");
  }
  if (shortlist_size < 1) throw ConfigError("shortlist_size must be at least 1");
  if (min_support_rate < 0.0 || min_activation_mass < 0.0) {
    throw ConfigError("gate thresholds must be nonnegative");
  }
  if (!(enrichment_epsilon > 0.0)) throw ConfigError("enrichment_epsilon must be positive");
}

json ShortlistConfig::to_json() const {
  return {{"min_support_rate", min_support_rate},
          {"min_activation_mass", min_activation_mass},
          {"bottom_percent_drop", bottom_percent_drop},
          {"shortlist_size", shortlist_size},
          {"weights",
           {{"enrichment", weights.enrichment},
            {"localization", weights.localization},
            {"synergy", weights.synergy}}},
          {"enrichment_epsilon", enrichment_epsilon},
          {"threshold_quantile", thresholds.quantile},
          {"threshold_min_nonzero", thresholds.min_nonzero},
          {"threshold_safeguard_fraction", thresholds.safeguard_fraction}};
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

SiteEvidence SiteEvidence::build(Site site, const CorpusActivations& target,
                                 std::span<const CorpusActivations> contrasts,
                                 const ThresholdConfig& thresholds) {
  if (contrasts.empty()) throw ConfigError("contrastive statistics need at least one contrast corpus");
  if (!target.corpus || !target.store) throw ConfigError("target corpus activations are missing");

  SiteEvidence ev;
  ev.site_ = site;
  std::vector<std::uint32_t> all(target.store->num_features());
  for (std::uint32_t f = 0; f < all.size(); ++f) all[f] = f;

  ev.target_.name = target.name;
  ev.target_.corpus = target.corpus;
  ev.target_.scores = compute_sentence_scores(*target.store, *target.corpus, all);
  ev.thresholds_ = calibrate_thresholds(ev.target_.scores, thresholds);
  ev.target_.presence = sentence_presence(ev.target_.scores, ev.thresholds_);

  for (const auto& c : contrasts) {
    if (!c.corpus || !c.store) throw ConfigError("contrast corpus '" + c.name + "' is incomplete");
    if (c.store->num_features() != target.store->num_features()) {
      throw ShapeError("contrast '" + c.name + "' has a different feature count");
    }
    Side side;
    side.name = c.name;
    side.corpus = c.corpus;
    side.scores = compute_sentence_scores(*c.store, *c.corpus, all);
    side.presence = sentence_presence(side.scores, ev.thresholds_);
    ev.contrasts_.push_back(std::move(side));
  }

  ev.mass_.assign(all.size(), 0.0);
  for (const auto& e : target.store->entries()) {
    if (e.value > 0.0f && !target.store->is_special(e.token)) ev.mass_[e.feature] += e.value;
  }
  return ev;
}

json FeatureStatsRow::to_json() const {
  return {{"feature", to_string(feature)},
          {"support_sentences", support_sentences},
          {"support_rate", support_rate},
          {"activation_mass", activation_mass},
          {"contrast_support", contrast_support},
          {"contrast_support_max", contrast_support_max},
          {"enrichment", enrichment},
          {"localization", localization},
          {"synergy", synergy},
          {"combined_score", combined_score}};
}

const FeatureStatsRow* FeatureStatsTable::find(FeatureKey key) const {
  auto it = std::lower_bound(rows.begin(), rows.end(), key,
                             [](const FeatureStatsRow& r, FeatureKey k) { return r.feature < k; });
  return (it != rows.end() && it->feature == key) ? &*it : nullptr;
}

void FeatureStatsTable::merge(FeatureStatsTable other) {
  rows.insert(rows.end(), std::make_move_iterator(other.rows.begin()),
              std::make_move_iterator(other.rows.end()));
  std::sort(rows.begin(), rows.end(),
            [](const FeatureStatsRow& a, const FeatureStatsRow& b) { return a.feature < b.feature; });
}

void score_feature_stats(FeatureStatsTable& table, const ScoreWeights& weights) {
  for (Site site : {Site::Source, Site::Target}) {
    std::vector<FeatureStatsRow*> rows;
    for (auto& r : table.rows) {
      if (r.feature.site == site) rows.push_back(&r);
    }
    if (rows.empty()) continue;
    auto normalize = [&](double FeatureStatsRow::*src, double FeatureStatsRow::*dst) {
      double lo = rows.front()->*src;
      double hi = lo;
      for (auto* r : rows) {
        lo = std::min(lo, r->*src);
        hi = std::max(hi, r->*src);
      }
      for (auto* r : rows) r->*dst = hi > lo ? (r->*src - lo) / (hi - lo) : 0.0;
    };
    normalize(&FeatureStatsRow::enrichment, &FeatureStatsRow::enrichment_norm);
    normalize(&FeatureStatsRow::localization, &FeatureStatsRow::localization_norm);
    normalize(&FeatureStatsRow::synergy, &FeatureStatsRow::synergy_norm);
    for (auto* r : rows) {
      r->combined_score = weights.enrichment * r->enrichment_norm +
                          weights.localization * r->localization_norm +
                          weights.synergy * r->synergy_norm;
    }
  }
}

FeatureStatsTable compute_feature_stats(const SiteEvidence& ev, const ShortlistConfig& config) {
  config.validate();
  const auto& target = ev.target();
  const auto& cols = target.scores.columns();
  const auto n_sent = target.corpus->num_sentences();
  const auto n_sub = target.corpus->num_units(Granularity::Subchapter);

  FeatureStatsTable table;
  table.rows.resize(cols.size());
  const auto counts = target.presence.column_counts();
  std::vector<std::vector<std::size_t>> contrast_counts;
  for (const auto& c : ev.contrasts()) contrast_counts.push_back(c.presence.column_counts());

  // Score-weighted support per (column, subchapter).
  std::vector<std::map<std::size_t, double>> sub_mass(cols.size());
  std::vector<double> total_mass(cols.size(), 0.0);
  for (std::size_t s = 0; s < n_sent; ++s) {
    const auto sub = target.corpus->unit_of_sentence(s, Granularity::Subchapter);
    for (auto c : target.presence.rows[s]) {
      const double m = target.scores.score(s, c);
      sub_mass[c][sub] += m;
      total_mass[c] += m;
    }
  }
  (void)n_sub;

  for (std::size_t c = 0; c < cols.size(); ++c) {
    auto& r = table.rows[c];
    r.feature = cols.key(c);
    r.support_sentences = counts[c];
    r.support_rate = n_sent ? static_cast<double>(counts[c]) / static_cast<double>(n_sent) : 0.0;
    r.activation_mass = ev.mass()[cols.feature(c)];
    for (std::size_t k = 0; k < ev.contrasts().size(); ++k) {
      const auto n = ev.contrasts()[k].corpus->num_sentences();
      const double rate = n ? static_cast<double>(contrast_counts[k][c]) / static_cast<double>(n) : 0.0;
      r.contrast_support.push_back(rate);
      r.contrast_support_max = std::max(r.contrast_support_max, rate);
    }
    const double eps = config.enrichment_epsilon;
    r.enrichment = std::log((r.support_rate + eps) / (r.contrast_support_max + eps));
    if (total_mass[c] > 0.0) {
      double best = 0.0;
      for (const auto& [sub, m] : sub_mass[c]) best = std::max(best, m);
      r.localization = std::min(1.0, best / total_mass[c]);
    }
    r.synergy = r.enrichment * r.localization;
  }
  score_feature_stats(table, config.weights);
  return table;
}

FeatureStatsTable compute_feature_stats(Site site, const CorpusActivations& target,
                                        std::span<const CorpusActivations> contrasts,
                                        const ShortlistConfig& config) {
  return compute_feature_stats(SiteEvidence::build(site, target, contrasts, config.thresholds), config);
}

// ---------------------------------------------------------------------------
// Shortlist
// ---------------------------------------------------------------------------

const ShortlistEntry* ShortlistResult::find(FeatureKey key) const {
  for (const auto& e : entries) {
    if (e.feature == key) return &e;
  }
  return nullptr;
}

ShortlistResult shortlist(const FeatureStatsTable& stats, const ShortlistConfig& config) {
  config.validate();
  ShortlistResult out;
  std::vector<const FeatureStatsRow*> survivors;
  for (Site site : {Site::Source, Site::Target}) {
    std::vector<const FeatureStatsRow*> site_rows;
    for (const auto& r : stats.rows) {
      if (r.feature.site != site) continue;
      if (r.support_rate < config.min_support_rate) {
        out.failed_support.push_back(r.feature);
      } else if (r.activation_mass < config.min_activation_mass) {
        out.failed_mass.push_back(r.feature);
      } else {
        site_rows.push_back(&r);
      }
    }
    std::stable_sort(site_rows.begin(), site_rows.end(), [](const auto* a, const auto* b) {
      if (a->support_rate != b->support_rate) return a->support_rate < b->support_rate;
      return a->feature < b->feature;
    });
    const auto drop = static_cast<std::size_t>(
        std::floor(config.bottom_percent_drop * static_cast<double>(site_rows.size()) + 1e-9));
    for (std::size_t i = 0; i < site_rows.size(); ++i) {
      if (i < drop) {
        out.dropped_bottom.push_back(site_rows[i]->feature);
      } else {
        survivors.push_back(site_rows[i]);
      }
    }
  }
  std::sort(out.dropped_bottom.begin(), out.dropped_bottom.end());

  std::sort(survivors.begin(), survivors.end(), [](const auto* a, const auto* b) {
    if (a->combined_score != b->combined_score) return a->combined_score > b->combined_score;
    return a->feature < b->feature;
  });

  std::vector<double> support;
  for (const auto* r : survivors) support.push_back(r->support_rate);
  std::sort(support.begin(), support.end());
  const double median_support = support.empty() ? 0.0 : support[support.size() / 2];

  for (std::size_t i = 0; i < survivors.size(); ++i) {
    const auto* r = survivors[i];
    if (i >= config.shortlist_size) {
      out.below_cut.push_back(r->feature);
      continue;
    }
    ShortlistEntry e;
    e.feature = r->feature;
    e.score = r->combined_score;
    e.rank = i + 1;
    if (r->support_rate >= median_support) e.tags.push_back("support");
    if (r->enrichment_norm >= 0.5) e.tags.push_back("enrichment");
    if (r->localization_norm >= 0.5) e.tags.push_back("localization");
    if (r->synergy_norm >= 0.5) e.tags.push_back("synergy");
    if (e.tags.empty()) e.tags.push_back("score");
    out.entries.push_back(std::move(e));
  }
  if (out.entries.empty()) spdlog::warn("shortlist is empty: every feature was gated out");
  return out;
}

// ---------------------------------------------------------------------------
// Evidence packets
// ---------------------------------------------------------------------------

std::string_view screen_label_name(ScreenLabel label) {
  switch (label) {
    case ScreenLabel::Candidate: return "candidate";
    case ScreenLabel::SurfaceForm: return "surface_form";
    case ScreenLabel::Missing: return "missing";
  }
  return "?";
}

namespace {

ScreenLabel parse_screen_label(std::string_view s) {
  if (s == "candidate") return ScreenLabel::Candidate;
  if (s == "surface_form") return ScreenLabel::SurfaceForm;
  if (s == "missing") return ScreenLabel::Missing;
  throw SchemaError("unknown screen label '" + std::string(s) + "'");
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return (na > 0.0 && nb > 0.0) ? dot / std::sqrt(na * nb) : 0.0;
}

json sentence_json(const EvidenceSentence& s) {
  return {{"corpus", s.corpus}, {"sentence_id", s.sentence_id}, {"text", s.text}, {"activation", s.activation}};
}

EvidenceSentence sentence_from_json(const json& j) {
  return {j.at("corpus").get<std::string>(), j.at("sentence_id").get<std::string>(),
          j.at("text").get<std::string>(), j.at("activation").get<double>()};
}

json unit_json(const PacketUnit& u) {
  return {{"id", u.id},
          {"title", u.title},
          {"chapter_id", u.chapter_id},
          {"supporting_sentences", u.supporting_sentences},
          {"mass", u.mass}};
}

PacketUnit unit_from_json(const json& j) {
  return {j.at("id").get<std::string>(), j.at("title").get<std::string>(),
          j.at("chapter_id").get<std::string>(), j.at("supporting_sentences").get<std::size_t>(),
          j.at("mass").get<double>()};
}

}  // namespace

ScreenLabel screen_description(std::string_view description, const PacketConfig& config) {
  const auto trimmed = text::trim(description);
  if (trimmed.empty()) return ScreenLabel::Missing;
  for (const auto& pattern : config.surface_patterns) {
    const std::regex re(pattern, std::regex::ECMAScript | std::regex::icase);
    if (std::regex_search(trimmed, re)) return ScreenLabel::SurfaceForm;
  }
  return ScreenLabel::Candidate;
}

json EvidencePacket::to_json() const {
  json tgt = json::array();
  for (const auto& s : target_evidence) tgt.push_back(sentence_json(s));
  json con = json::array();
  for (const auto& s : contrast_evidence) con.push_back(sentence_json(s));
  json act = json::array();
  for (const auto& u : activated_units) act.push_back(unit_json(u));
  json cmp = json::array();
  for (const auto& u : comparator_units) cmp.push_back(unit_json(u));
  json chs = json::array();
  for (const auto& [id, title] : chapters) chs.push_back({{"id", id}, {"title", title}});
  json dups = json::array();
  for (auto k : duplicate_hints) dups.push_back(to_string(k));
  return {{"packet_id", id()},
          {"feature", to_string(feature)},
          {"description", description},
          {"screen_label", screen_label_name(screen_label)},
          {"local_reject", local_reject()},
          {"target_evidence", std::move(tgt)},
          {"contrast_evidence", std::move(con)},
          {"activated_units", std::move(act)},
          {"comparator_units", std::move(cmp)},
          {"chapters", std::move(chs)},
          {"reason_tags", reason_tags},
          {"duplicate_hints", std::move(dups)},
          {"target_stats", target_stats},
          {"contrast_stats", contrast_stats}};
}

EvidencePacket EvidencePacket::from_json(const json& doc) {
  EvidencePacket p;
  p.feature = parse_feature_key(doc.at("feature").get<std::string>());
  p.description = doc.at("description").get<std::string>();
  p.screen_label = parse_screen_label(doc.at("screen_label").get<std::string>());
  for (const auto& s : doc.at("target_evidence")) p.target_evidence.push_back(sentence_from_json(s));
  for (const auto& s : doc.at("contrast_evidence")) p.contrast_evidence.push_back(sentence_from_json(s));
  for (const auto& u : doc.at("activated_units")) p.activated_units.push_back(unit_from_json(u));
  for (const auto& u : doc.at("comparator_units")) p.comparator_units.push_back(unit_from_json(u));
  for (const auto& c : doc.at("chapters")) {
    p.chapters.emplace_back(c.at("id").get<std::string>(), c.at("title").get<std::string>());
  }
  p.reason_tags = doc.at("reason_tags").get<std::vector<std::string>>();
  for (const auto& d : doc.at("duplicate_hints")) p.duplicate_hints.push_back(parse_feature_key(d.get<std::string>()));
  p.target_stats = doc.value("target_stats", json::object());
  p.contrast_stats = doc.value("contrast_stats", json::object());
  return p;
}

EvidencePacket build_evidence_packet(FeatureKey feature, const FeatureStatsTable& stats,
                                     const ShortlistResult& shortlisted, const SiteEvidence& evidence,
                                     const FeatureCatalog& catalog, const PacketConfig& config) {
  const auto* row = stats.find(feature);
  if (!row || feature.site != evidence.site()) {
    throw NotFoundError("no statistics for feature " + to_string(feature));
  }
  const auto* entry = shortlisted.find(feature);
  if (!entry) throw PreconditionError("feature " + to_string(feature) + " is not shortlisted");

  const auto& target = evidence.target();
  const auto col = target.scores.columns().column_of(feature.index);
  if (col < 0) throw NotFoundError("feature " + to_string(feature) + " has no sentence scores");
  const auto c = static_cast<std::size_t>(col);
  const auto& corpus = *target.corpus;

  EvidencePacket p;
  p.feature = feature;
  p.description = catalog.description(feature);
  p.screen_label = screen_description(p.description, config);
  p.reason_tags = entry->tags;

  // Target evidence: strongest sentence scores, ties by sentence order.
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t s = 0; s < corpus.num_sentences(); ++s) {
    const double m = target.scores.score(s, c);
    if (m > 0.0) ranked.emplace_back(m, s);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; i < std::min(config.evidence_count, ranked.size()); ++i) {
    const auto& sent = corpus.sentence(ranked[i].second);
    p.target_evidence.push_back({target.name, sent.id, sent.text, ranked[i].first});
  }

  struct ContrastHit {
    double m;
    std::size_t corpus;
    std::size_t sentence;
  };
  std::vector<ContrastHit> hits;
  for (std::size_t k = 0; k < evidence.contrasts().size(); ++k) {
    const auto& side = evidence.contrasts()[k];
    const auto cc = side.scores.columns().column_of(feature.index);
    if (cc < 0) continue;
    for (std::size_t s = 0; s < side.corpus->num_sentences(); ++s) {
      const double m = side.scores.score(s, static_cast<std::size_t>(cc));
      if (m > 0.0) hits.push_back({m, k, s});
    }
  }
  std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.m > b.m; });
  for (std::size_t i = 0; i < std::min(config.evidence_count, hits.size()); ++i) {
    const auto& side = evidence.contrasts()[hits[i].corpus];
    const auto& sent = side.corpus->sentence(hits[i].sentence);
    p.contrast_evidence.push_back({side.name, sent.id, sent.text, hits[i].m});
  }

  // Subchapter context.
  const auto n_sub = corpus.num_units(Granularity::Subchapter);
  std::vector<std::size_t> supporting(n_sub, 0);
  std::vector<double> mass(n_sub, 0.0);
  for (std::size_t s = 0; s < corpus.num_sentences(); ++s) {
    const auto sub = corpus.unit_of_sentence(s, Granularity::Subchapter);
    mass[sub] += target.scores.score(s, c);
    if (target.presence.present(s, c)) ++supporting[sub];
  }
  auto make_unit = [&](std::size_t sub) {
    const auto& members = corpus.unit_sentences(Granularity::Subchapter, sub);
    const auto chapter = members.empty() ? std::string() : corpus.unit_id(Granularity::Chapter, corpus.sentence(members.front()).chapter);
    return PacketUnit{corpus.unit_id(Granularity::Subchapter, sub), corpus.unit_title(Granularity::Subchapter, sub),
                      chapter, supporting[sub], mass[sub]};
  };
  std::vector<std::size_t> others;
  std::set<std::string> seen_chapters;
  for (std::size_t sub = 0; sub < n_sub; ++sub) {
    if (supporting[sub] == 0) {
      others.push_back(sub);
      continue;
    }
    p.activated_units.push_back(make_unit(sub));
    const auto& ch = p.activated_units.back().chapter_id;
    if (!ch.empty() && seen_chapters.insert(ch).second) {
      const auto ref = corpus.find_unit(ch);
      p.chapters.emplace_back(ch, corpus.unit_title(Granularity::Chapter, ref->index));
    }
  }
  std::stable_sort(others.begin(), others.end(), [&](auto a, auto b) { return mass[a] > mass[b]; });
  for (std::size_t i = 0; i < std::min(others.size(), p.activated_units.size()); ++i) {
    p.comparator_units.push_back(make_unit(others[i]));
  }

  // Nearby-duplicate hints among shortlisted features of the same site.
  if (catalog.contains(feature)) {
    const auto& emb = catalog.at(feature).embedding;
    for (const auto& other : shortlisted.entries) {
      if (other.feature == feature || other.feature.site != feature.site || !catalog.contains(other.feature)) continue;
      if (cosine(emb, catalog.at(other.feature).embedding) >= config.duplicate_cosine) {
        p.duplicate_hints.push_back(other.feature);
      }
    }
    std::sort(p.duplicate_hints.begin(), p.duplicate_hints.end());
  }

  p.target_stats = {{"corpus", target.name},
                    {"support_rate", row->support_rate},
                    {"support_sentences", row->support_sentences},
                    {"activation_mass", row->activation_mass},
                    {"enrichment", row->enrichment},
                    {"localization", row->localization},
                    {"combined_score", row->combined_score}};
  p.contrast_stats = json::object();
  for (std::size_t k = 0; k < evidence.contrasts().size(); ++k) {
    p.contrast_stats[evidence.contrasts()[k].name] = {{"support_rate", row->contrast_support.at(k)}};
  }
  return p;
}

// ---------------------------------------------------------------------------
// Adjudication
// ---------------------------------------------------------------------------

json AdjudicationResult::to_json() const {
  return {{"visibility", {{"visible", visible}, {"evidence_sentence_ids", evidence_sentence_ids}}},
          {"relevance",
           {{"belongs_here", belongs_here}, {"distinctiveness", distinctiveness}, {"justification", justification}}}};
}

AdjudicationResult parse_adjudication(std::string_view reply, const EvidencePacket& packet) {
  json doc = json::parse(reply, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw SchemaError("adjudicator reply is not a JSON object");
  const json& vis = doc.contains("visibility") ? doc["visibility"] : doc;
  const json& rel = doc.contains("relevance") ? doc["relevance"] : doc;
  if (!vis.is_object() || !rel.is_object()) throw SchemaError("visibility/relevance must be objects");

  auto need = [](const json& obj, const char* key, bool (json::*is)() const noexcept, const char* type) -> const json& {
    auto it = obj.find(key);
    if (it == obj.end() || !((*it).*is)()) {
      throw SchemaError(std::string("adjudicator reply needs ") + type + " field '" + key + "'");
    }
    return *it;
  };
  AdjudicationResult r;
  r.visible = need(vis, "visible", &json::is_boolean, "boolean").get<bool>();
  for (const auto& id : need(vis, "evidence_sentence_ids", &json::is_array, "array")) {
    if (!id.is_string()) throw SchemaError("evidence_sentence_ids must hold strings");
    r.evidence_sentence_ids.push_back(id.get<std::string>());
  }
  r.belongs_here = need(rel, "belongs_here", &json::is_boolean, "boolean").get<bool>();
  r.distinctiveness = need(rel, "distinctiveness", &json::is_string, "string").get<std::string>();
  r.justification = need(rel, "justification", &json::is_string, "string").get<std::string>();

  if (r.distinctiveness != "low" && r.distinctiveness != "medium" && r.distinctiveness != "high") {
    throw SchemaError("distinctiveness must be low, medium, or high");
  }
  if (text::trim(r.justification).empty()) throw SchemaError("justification must not be empty");
  if (r.visible && r.evidence_sentence_ids.empty()) {
    throw SchemaError("visible=true requires at least one evidence sentence id");
  }
  std::set<std::string> allowed;
  for (const auto& s : packet.target_evidence) allowed.insert(s.sentence_id);
  for (const auto& id : r.evidence_sentence_ids) {
    if (!allowed.count(id)) throw SchemaError("evidence sentence '" + id + "' is not in the packet");
  }
  return r;
}

json AdjudicationOutcome::to_json() const {
  return {{"status", status == AdjudicationStatus::Decided ? "decided" : "indeterminate"},
          {"result", result ? result->to_json() : json(nullptr)},
          {"attempts", attempts},
          {"errors", errors},
          {"client", client_id}};
}

json adjudication_request(const EvidencePacket& packet, const json& domain_profile) {
  return {{"task", "adjudicate_feature"},
          {"domain_profile", domain_profile},
          {"packet", packet.to_json()},
          {"response_fields",
           {"visible", "evidence_sentence_ids", "belongs_here", "distinctiveness", "justification"}}};
}

AdjudicationOutcome adjudicate_feature(const EvidencePacket& packet, TextClient& adjudicator,
                                       const AdjudicationConfig& config) {
  if (packet.screen_label != ScreenLabel::Candidate) {
    throw PreconditionError("packet " + packet.id() + " is " +
                            std::string(screen_label_name(packet.screen_label)) + "; only candidates are adjudicated");
  }
  const auto request = adjudication_request(packet, config.domain_profile);
  AdjudicationOutcome out;
  out.client_id = adjudicator.id();
  std::size_t transport_failures = 0;
  std::size_t schema_failures = 0;
  while (true) {
    std::string reply;
    ++out.attempts;
    try {
      reply = adjudicator.send(request);
    } catch (const TransportError& e) {
      out.errors.emplace_back(e.what());
      if (++transport_failures > config.transport_retries) {
        throw AdjudicatorError("adjudication of " + packet.id() + " failed: " + e.what());
      }
      continue;
    }
    try {
      out.result = parse_adjudication(reply, packet);
      out.status = AdjudicationStatus::Decided;
      return out;
    } catch (const SchemaError& e) {
      out.errors.emplace_back(e.what());
      if (++schema_failures >= 2) {
        out.status = AdjudicationStatus::Indeterminate;
        return out;
      }
    }
  }
}

std::string StubAdjudicator::send(const json& request) {
  const auto& packet = request.at("packet");
  const auto kw = text::keyword(packet.at("description").get<std::string>());
  std::vector<std::string> ids;
  for (const auto& s : packet.at("target_evidence")) {
    if (!kw.empty() && text::contains_word(s.at("text").get<std::string>(), kw)) {
      ids.push_back(s.at("sentence_id").get<std::string>());
    }
  }
  std::size_t contrast_hits = 0;
  for (const auto& s : packet.at("contrast_evidence")) {
    if (!kw.empty() && text::contains_word(s.at("text").get<std::string>(), kw)) ++contrast_hits;
  }
  const bool visible = ids.size() >= 2;
  const bool distinct = contrast_hits * 2 < ids.size();
  const std::string grade = contrast_hits == 0 ? "high" : (distinct ? "medium" : "low");
  json reply;
  reply["visibility"] = {{"visible", visible}, {"evidence_sentence_ids", visible ? ids : std::vector<std::string>{}}};
  reply["relevance"] = {{"belongs_here", visible && distinct},
                        {"distinctiveness", grade},
                        {"justification", "Keyword '" + kw + "' appears in " + std::to_string(ids.size()) +
                                              " target and " + std::to_string(contrast_hits) +
                                              " contrast evidence sentences."}};
  return reply.dump();
}

// ---------------------------------------------------------------------------
// Filtering stage
// ---------------------------------------------------------------------------

std::string_view decision_name(FeatureDecision d) {
  switch (d) {
    case FeatureDecision::Retained: return "retained";
    case FeatureDecision::Rejected: return "rejected";
    case FeatureDecision::Indeterminate: return "indeterminate";
    case FeatureDecision::LocalReject: return "local_reject";
  }
  return "?";
}

bool RetainedUniverse::contains(FeatureKey key) const {
  return std::binary_search(features.begin(), features.end(), key);
}

std::vector<std::uint32_t> RetainedUniverse::site_indices(Site site) const {
  std::vector<std::uint32_t> out;
  for (auto k : features) {
    if (k.site == site) out.push_back(k.index);
  }
  return out;
}

namespace {

json keys_json(const std::vector<FeatureKey>& keys) {
  json out = json::array();
  for (auto k : keys) out.push_back(to_string(k));
  return out;
}

std::vector<FeatureKey> keys_from_json(const json& arr) {
  std::vector<FeatureKey> out;
  for (const auto& v : arr) out.push_back(parse_feature_key(v.get<std::string>()));
  return out;
}

FeatureDecision parse_decision(const std::string& s) {
  for (auto d : {FeatureDecision::Retained, FeatureDecision::Rejected, FeatureDecision::Indeterminate,
                 FeatureDecision::LocalReject}) {
    if (decision_name(d) == s) return d;
  }
  throw SchemaError("unknown decision '" + s + "'");
}

AdjudicationOutcome outcome_from_json(const json& j) {
  AdjudicationOutcome o;
  o.status = j.at("status").get<std::string>() == "decided" ? AdjudicationStatus::Decided
                                                            : AdjudicationStatus::Indeterminate;
  o.attempts = j.at("attempts").get<std::size_t>();
  o.errors = j.at("errors").get<std::vector<std::string>>();
  o.client_id = j.at("client").get<std::string>();
  if (!j.at("result").is_null()) {
    const auto& r = j.at("result");
    AdjudicationResult res;
    res.visible = r.at("visibility").at("visible").get<bool>();
    res.evidence_sentence_ids = r.at("visibility").at("evidence_sentence_ids").get<std::vector<std::string>>();
    res.belongs_here = r.at("relevance").at("belongs_here").get<bool>();
    res.distinctiveness = r.at("relevance").at("distinctiveness").get<std::string>();
    res.justification = r.at("relevance").at("justification").get<std::string>();
    o.result = std::move(res);
  }
  return o;
}

}  // namespace

json RetainedUniverse::to_json() const {
  json sl = json::array();
  for (const auto& e : shortlist) {
    sl.push_back({{"feature", to_string(e.feature)}, {"score", e.score}, {"rank", e.rank}, {"tags", e.tags}});
  }
  json recs = json::array();
  for (const auto& [key, rec] : records) {
    recs.push_back({{"feature", to_string(key)},
                    {"decision", decision_name(rec.decision)},
                    {"packet", rec.packet.to_json()},
                    {"adjudication", rec.outcome ? rec.outcome->to_json() : json(nullptr)}});
  }
  json st = json::array();
  for (const auto& r : shortlist_stats) st.push_back(r.to_json());
  return {{"kind", "universe"},
          {"version", 1},
          {"config", config},
          {"retained", keys_json(features)},
          {"shortlist", std::move(sl)},
          {"candidates", keys_json(candidates)},
          {"adjudicated", keys_json(adjudicated)},
          {"stats", std::move(st)},
          {"records", std::move(recs)}};
}

RetainedUniverse RetainedUniverse::from_json(const json& doc) {
  if (doc.value("kind", std::string()) != "universe") throw SchemaError("not a universe document");
  RetainedUniverse u;
  u.config = doc.value("config", json::object());
  u.features = keys_from_json(doc.at("retained"));
  std::sort(u.features.begin(), u.features.end());
  for (const auto& e : doc.at("shortlist")) {
    u.shortlist.push_back({parse_feature_key(e.at("feature").get<std::string>()), e.at("score").get<double>(),
                           e.at("rank").get<std::size_t>(), e.at("tags").get<std::vector<std::string>>()});
  }
  u.candidates = keys_from_json(doc.at("candidates"));
  u.adjudicated = keys_from_json(doc.at("adjudicated"));
  for (const auto& r : doc.at("records")) {
    FeatureRecord rec;
    rec.packet = EvidencePacket::from_json(r.at("packet"));
    rec.decision = parse_decision(r.at("decision").get<std::string>());
    if (!r.at("adjudication").is_null()) rec.outcome = outcome_from_json(r.at("adjudication"));
    u.records.emplace(parse_feature_key(r.at("feature").get<std::string>()), std::move(rec));
  }
  for (const auto& s : doc.value("stats", json::array())) {
    FeatureStatsRow row;
    row.feature = parse_feature_key(s.at("feature").get<std::string>());
    row.support_sentences = s.at("support_sentences").get<std::size_t>();
    row.support_rate = s.at("support_rate").get<double>();
    row.activation_mass = s.at("activation_mass").get<double>();
    row.contrast_support = s.at("contrast_support").get<std::vector<double>>();
    row.contrast_support_max = s.at("contrast_support_max").get<double>();
    row.enrichment = s.at("enrichment").get<double>();
    row.localization = s.at("localization").get<double>();
    row.synergy = s.at("synergy").get<double>();
    row.combined_score = s.at("combined_score").get<double>();
    u.shortlist_stats.push_back(std::move(row));
  }
  return u;
}

RetainedUniverse run_filter(std::span<const SiteInputs> sites, const FeatureCatalog& catalog,
                            const FilterConfig& config, TextClient& adjudicator) {
  config.shortlist.validate();
  std::vector<SiteEvidence> evidence;
  FeatureStatsTable stats;
  for (const auto& site : sites) {
    evidence.push_back(SiteEvidence::build(site.site, site.target, site.contrasts, config.shortlist.thresholds));
    stats.merge(compute_feature_stats(evidence.back(), config.shortlist));
  }
  const auto sl = shortlist(stats, config.shortlist);

  RetainedUniverse u;
  u.config = {{"shortlist", config.shortlist.to_json()},
              {"evidence_count", config.packets.evidence_count},
              {"surface_patterns", config.packets.surface_patterns},
              {"duplicate_cosine", config.packets.duplicate_cosine},
              {"transport_retries", config.adjudication.transport_retries},
              {"domain_profile", config.adjudication.domain_profile},
              {"adjudicator", adjudicator.id()}};
  u.shortlist = sl.entries;
  for (const auto& e : sl.entries) {
    const SiteEvidence* ev = nullptr;
    for (const auto& candidate : evidence) {
      if (candidate.site() == e.feature.site) ev = &candidate;
    }
    FeatureRecord rec;
    rec.packet = build_evidence_packet(e.feature, stats, sl, *ev, catalog, config.packets);
    if (!rec.packet.local_reject()) u.candidates.push_back(e.feature);
    u.records.emplace(e.feature, std::move(rec));
    u.shortlist_stats.push_back(*stats.find(e.feature));
  }
  std::sort(u.candidates.begin(), u.candidates.end());
  std::sort(u.shortlist_stats.begin(), u.shortlist_stats.end(),
            [](const auto& a, const auto& b) { return a.feature < b.feature; });

  // Bounded in-flight adjudication; results land in key order regardless of
  // completion order.
  const std::size_t cap = std::max<std::size_t>(1, config.adjudication.max_in_flight);
  for (std::size_t start = 0; start < u.candidates.size(); start += cap) {
    const auto end = std::min(u.candidates.size(), start + cap);
    std::vector<std::future<AdjudicationOutcome>> inflight;
    for (auto i = start; i < end; ++i) {
      const auto& packet = u.records.at(u.candidates[i]).packet;
      inflight.push_back(std::async(std::launch::async, [&packet, &adjudicator, &config] {
        return adjudicate_feature(packet, adjudicator, config.adjudication);
      }));
    }
    for (auto i = start; i < end; ++i) {
      auto& rec = u.records.at(u.candidates[i]);
      try {
        rec.outcome = inflight[i - start].get();
      } catch (const AdjudicatorError& e) {
        AdjudicationOutcome failed;
        failed.client_id = adjudicator.id();
        failed.errors.emplace_back(e.what());
        rec.outcome = std::move(failed);
      }
      if (rec.outcome->status == AdjudicationStatus::Indeterminate) {
        rec.decision = FeatureDecision::Indeterminate;
        continue;
      }
      u.adjudicated.push_back(u.candidates[i]);
      rec.decision = rec.outcome->retained() ? FeatureDecision::Retained : FeatureDecision::Rejected;
      if (rec.decision == FeatureDecision::Retained) u.features.push_back(u.candidates[i]);
    }
  }
  spdlog::info("filter: {} shortlisted, {} candidates, {} adjudicated, {} retained", u.shortlist.size(),
               u.candidates.size(), u.adjudicated.size(), u.features.size());
  return u;
}

}  // namespace forge
