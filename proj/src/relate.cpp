#include "forge/relate.hpp"

#include <algorithm>
#include <future>
#include <map>
#include <numeric>
#include <set>

#include "forge/errors.hpp"
#include "forge/text.hpp"

namespace forge {

using nlohmann::json;

std::string_view edge_kind_name(EdgeKind kind) { return kind == EdgeKind::Cooc ? "cooc" : "mech"; }

std::string_view label_status_name(LabelStatus status) {
  switch (status) {
    case LabelStatus::Accepted: return "accepted";
    case LabelStatus::Fallback: return "fallback";
    case LabelStatus::Rejected: return "rejected";
  }
  return "?";
}

namespace {

json lines_json(const std::vector<EvidenceLine>& lines) {
  json out = json::array();
  for (const auto& l : lines) out.push_back({{"sentence_id", l.sentence_id}, {"text", l.text}, {"score", l.score}});
  return out;
}

struct Scored {
  double score;
  std::size_t sentence;
};

std::vector<EvidenceLine> top_lines(std::vector<Scored> scored, const CorpusStructure& corpus, std::size_t n) {
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& x, const Scored& y) { return x.score > y.score; });
  std::vector<EvidenceLine> out;
  for (std::size_t i = 0; i < std::min(n, scored.size()); ++i) {
    const auto& s = corpus.sentence(scored[i].sentence);
    out.push_back({s.id, s.text, scored[i].score});
  }
  return out;
}

}  // namespace

json EdgeEvidencePacket::to_json() const {
  json j = {{"packet_id", id},
            {"kind", edge_kind_name(kind)},
            {"source", to_string(a)},
            {"target", to_string(b)},
            {"source_description", a_description},
            {"target_description", b_description},
            {"joint", lines_json(joint)},
            {"source_only", lines_json(only_a)},
            {"target_only", lines_json(only_b)},
            {"weight", weight},
            {"evidence_poor", evidence_poor}};
  if (kind == EdgeKind::Cooc) {
    j["count"] = count;
    j["jaccard"] = jaccard;
  } else {
    j["hint"] = hint;
    j["strongest_latent"] = strongest_latent;
  }
  return j;
}

json EdgeLabel::to_json() const {
  json j = {{"packet_id", packet_id},
            {"source", to_string(a)},
            {"target", to_string(b)},
            {"phrase", phrase},
            {"directional", directional},
            {"status", label_status_name(status)},
            {"justification", justification},
            {"provenance", provenance}};
  if (!rejected_phrase.empty()) {
    j["rejected_phrase"] = rejected_phrase;
    j["rejection_reason"] = rejection_reason;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Packets
// ---------------------------------------------------------------------------

EdgeEvidencePacket build_cooc_packet(const CoocEdge& edge, const CoocGraph& graph, const SiteSentenceView& view,
                                     const FeatureCatalog& catalog, const RelateConfig& config) {
  if (!view.corpus || !view.scores || !view.presence) throw ConfigError("sentence view is incomplete");
  const auto ka = graph.columns.key(edge.a);
  const auto kb = graph.columns.key(edge.b);
  const auto ca = view.scores->columns().column_of(ka.index);
  const auto cb = view.scores->columns().column_of(kb.index);
  if (ca < 0 || cb < 0) throw NotFoundError("edge endpoints are not scored in the sentence view");

  EdgeEvidencePacket p;
  p.kind = EdgeKind::Cooc;
  p.a = ka;
  p.b = kb;
  p.id = "cooc:" + std::string(granularity_name(graph.granularity)) + ":" + to_string(ka) + "|" + to_string(kb);
  p.a_description = catalog.description(ka);
  p.b_description = catalog.description(kb);
  p.count = static_cast<double>(edge.count);
  p.jaccard = edge.jaccard;
  p.weight = edge.jaccard;

  std::vector<Scored> joint, only_a, only_b;
  for (std::size_t s = 0; s < view.corpus->num_sentences(); ++s) {
    const bool pa = view.presence->present(s, static_cast<std::size_t>(ca));
    const bool pb = view.presence->present(s, static_cast<std::size_t>(cb));
    const double ma = view.scores->score(s, static_cast<std::size_t>(ca));
    const double mb = view.scores->score(s, static_cast<std::size_t>(cb));
    if (pa && pb) {
      joint.push_back({std::min(ma, mb), s});
    } else if (pa) {
      only_a.push_back({ma, s});
    } else if (pb) {
      only_b.push_back({mb, s});
    }
  }
  p.joint = top_lines(std::move(joint), *view.corpus, config.joint_lines);
  p.only_a = top_lines(std::move(only_a), *view.corpus, config.contrast_lines);
  p.only_b = top_lines(std::move(only_b), *view.corpus, config.contrast_lines);
  p.evidence_poor = p.joint.empty();
  return p;
}

namespace {

bool gated(const TokenActivationStore& store, std::uint64_t token, std::uint32_t feature, const MechConfig& cfg,
           const ThresholdVector* thresholds, double* value) {
  *value = store.value(token, feature);
  if (cfg.gate_mode == GateMode::Positive) return *value > cfg.gate_tol;
  if (!thresholds) return false;
  const auto col = thresholds->columns.column_of(feature);
  return col >= 0 && *value > thresholds->theta[static_cast<std::size_t>(col)];
}

}  // namespace

EdgeEvidencePacket build_mech_packet(const MechEdge& edge, const DynamicMechanismGraph& graph,
                                     const MechInputs& inputs, const FeatureCatalog& catalog,
                                     const RelateConfig& config) {
  if (!inputs.corpus || !inputs.source || !inputs.target || !inputs.latent || !inputs.supports) {
    throw ConfigError("mechanism inputs are incomplete");
  }
  const auto& corpus = *inputs.corpus;
  EdgeEvidencePacket p;
  p.kind = EdgeKind::Mech;
  p.a = {Site::Source, edge.source};
  p.b = {Site::Target, edge.target};
  p.id = "mech:" + graph.unit + ":" + to_string(p.a) + "|" + to_string(p.b);
  p.a_description = catalog.description(p.a);
  p.b_description = catalog.description(p.b);
  p.weight = edge.weight;
  p.strongest_latent = edge.strongest_latent;
  if (auto it = graph.captions.find(edge.strongest_latent); it != graph.captions.end()) p.hint = it->second.label;

  std::vector<double> a_row(inputs.supports->latents, 0.0), ab(inputs.supports->latents, 0.0);
  for (std::uint32_t k = 0; k < a_row.size(); ++k) {
    a_row[k] = inputs.supports->a_plus(edge.source, k);
    ab[k] = a_row[k] * inputs.supports->g_plus(edge.target, k);
  }

  std::vector<Scored> joint, only_a, only_b;
  for (std::size_t s = 0; s < corpus.num_sentences(); ++s) {
    const auto tokens = unit_token_set(inputs, corpus.sentence(s).id);
    std::vector<double> e(ab.size(), 0.0);
    bool any_a = false, any_b = false;
    double best_a = 0.0, best_b = 0.0;
    for (auto i : tokens) {
      double za = 0.0, zb = 0.0;
      const bool ga = gated(*inputs.source, i, edge.source, graph.config, inputs.source_thresholds, &za);
      const bool gb = gated(*inputs.target, i, edge.target, graph.config, inputs.target_thresholds, &zb);
      if (ga) {
        any_a = true;
        best_a = std::max(best_a, za);
      }
      if (gb) {
        any_b = true;
        best_b = std::max(best_b, zb);
      }
      if (!ga || !gb) continue;
      for (const auto& l : inputs.latent->token_entries(i)) {
        if (l.value > 0.0 && l.feature < ab.size()) e[l.feature] += a_row[l.feature] * l.value * inputs.supports->g_plus(edge.target, l.feature);
      }
    }
    const double peak = e.empty() ? 0.0 : *std::max_element(e.begin(), e.end());
    if (peak > 0.0) {
      joint.push_back({peak, s});
    } else if (any_a && !any_b) {
      only_a.push_back({best_a, s});
    } else if (any_b && !any_a) {
      only_b.push_back({best_b, s});
    }
  }
  p.joint = top_lines(std::move(joint), corpus, config.joint_lines);
  p.only_a = top_lines(std::move(only_a), corpus, config.contrast_lines);
  p.only_b = top_lines(std::move(only_b), corpus, config.contrast_lines);
  p.evidence_poor = p.joint.empty();
  return p;
}

// ---------------------------------------------------------------------------
// Labeling
// ---------------------------------------------------------------------------

EdgeLabel fallback_label(const EdgeEvidencePacket& packet, const RelateConfig& config, std::string justification) {
  EdgeLabel l;
  l.packet_id = packet.id;
  l.a = packet.a;
  l.b = packet.b;
  l.phrase = packet.kind == EdgeKind::Cooc ? config.cooc_fallback : config.mech_fallback;
  l.directional = packet.kind == EdgeKind::Mech;
  l.status = LabelStatus::Fallback;
  l.justification = std::move(justification);
  l.provenance = "fallback";
  return l;
}

EdgeLabel validate_label(EdgeLabel label, const EdgeEvidencePacket& packet, const RelateConfig& config) {
  if (label.status == LabelStatus::Fallback) return label;
  const auto phrase = text::normalize(label.phrase);
  std::string reason;
  if (phrase.empty()) {
    reason = "empty phrase";
  } else if (std::any_of(config.blocklist.begin(), config.blocklist.end(),
                         [&](const std::string& g) { return text::normalize(g) == phrase; })) {
    reason = "generic phrase";
  } else if (text::token_set_overlap(phrase, packet.a_description) > config.copy_overlap ||
             text::token_set_overlap(phrase, packet.b_description) > config.copy_overlap) {
    reason = "copies an endpoint description";
  } else if (packet.kind == EdgeKind::Mech &&
             std::none_of(config.directional_verbs.begin(), config.directional_verbs.end(),
                          [&](const std::string& v) { return text::contains_word(phrase, v); })) {
    reason = "no directional verb";
  } else if (!packet.hint.empty() && phrase == text::normalize(packet.hint)) {
    reason = "repeats the latent hint";
  }
  if (reason.empty()) {
    label.status = LabelStatus::Accepted;
    if (packet.kind == EdgeKind::Mech) label.directional = true;
    return label;
  }
  auto fb = fallback_label(packet, config, label.justification);
  fb.rejected_phrase = label.phrase;
  fb.rejection_reason = reason;
  fb.provenance = label.provenance;
  return fb;
}

json relate_request(const EdgeEvidencePacket& packet, std::string_view stage) {
  json fields = stage == "presence" ? json{"supported", "justification"}
                                    : json{"phrase", "directional", "justification"};
  return {{"task", "relate_edge"}, {"stage", stage}, {"packet", packet.to_json()}, {"response_fields", fields}};
}

namespace {

// Sends with transport retries; nullopt when the client stays unreachable.
std::optional<json> ask(TextClient& client, const json& request, std::size_t retries, std::string* error) {
  for (std::size_t attempt = 0; attempt <= retries; ++attempt) {
    try {
      auto reply = json::parse(client.send(request), nullptr, false);
      if (reply.is_discarded() || !reply.is_object()) {
        *error = "reply is not a JSON object";
        return std::nullopt;
      }
      return reply;
    } catch (const TransportError& e) {
      *error = e.what();
    }
  }
  return std::nullopt;
}

}  // namespace

EdgeLabel label_edge(const EdgeEvidencePacket& packet, TextClient& relator, const RelateConfig& config) {
  if (packet.evidence_poor) return fallback_label(packet, config, "no joint evidence");
  std::string error;
  const auto presence = ask(relator, relate_request(packet, "presence"), config.transport_retries, &error);
  if (!presence) return fallback_label(packet, config, "presence pass failed: " + error);
  if (!presence->value("supported", false)) {
    auto fb = fallback_label(packet, config, presence->value("justification", std::string("endpoints not supported")));
    fb.provenance = relator.id();
    return fb;
  }
  const auto relation = ask(relator, relate_request(packet, "relation"), config.transport_retries, &error);
  if (!relation) return fallback_label(packet, config, "relation pass failed: " + error);
  EdgeLabel l;
  l.packet_id = packet.id;
  l.a = packet.a;
  l.b = packet.b;
  l.phrase = text::trim(relation->value("phrase", std::string()));
  l.directional = relation->value("directional", false);
  l.justification = relation->value("justification", std::string());
  l.provenance = relator.id();
  l.status = LabelStatus::Rejected;  // until validated
  return validate_label(std::move(l), packet, config);
}

std::vector<EdgeLabel> label_packets(const std::vector<EdgeEvidencePacket>& packets, TextClient& relator,
                                     const RelateConfig& config) {
  std::vector<std::size_t> order(packets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto x, auto y) {
    if (packets[x].weight != packets[y].weight) return packets[x].weight > packets[y].weight;
    return packets[x].id < packets[y].id;
  });
  std::vector<EdgeLabel> out(packets.size());
  const auto funded = std::min(config.budget, order.size());
  for (std::size_t r = funded; r < order.size(); ++r) {
    out[order[r]] = fallback_label(packets[order[r]], config, "outside labeling budget");
  }
  const std::size_t cap = std::max<std::size_t>(1, config.max_in_flight);
  for (std::size_t start = 0; start < funded; start += cap) {
    const auto end = std::min(funded, start + cap);
    std::vector<std::future<EdgeLabel>> inflight;
    for (auto r = start; r < end; ++r) {
      const auto& packet = packets[order[r]];
      inflight.push_back(std::async(std::launch::async, [&packet, &relator, &config] {
        return label_edge(packet, relator, config);
      }));
    }
    for (auto r = start; r < end; ++r) out[order[r]] = inflight[r - start].get();
  }
  return out;
}

json LabelSet::to_json() const {
  json p = json::array();
  for (const auto& x : packets) p.push_back(x.to_json());
  json l = json::array();
  for (const auto& x : labels) l.push_back(x.to_json());
  return {{"kind", "labels"},
          {"graph", graph},
          {"edge_kind", edge_kind_name(kind)},
          {"relator", relator},
          {"budget", budget},
          {"labels", std::move(l)},
          {"packets", std::move(p)}};
}

LabelSet relate_cooc_graph(const CoocGraph& graph, const SiteSentenceView& view, const FeatureCatalog& catalog,
                           TextClient& relator, const RelateConfig& config) {
  LabelSet set;
  set.graph = "cooc_" + std::string(granularity_name(graph.granularity));
  set.kind = EdgeKind::Cooc;
  set.relator = relator.id();
  set.budget = std::min(config.budget, graph.edges.size());
  for (const auto& e : graph.edges) set.packets.push_back(build_cooc_packet(e, graph, view, catalog, config));
  set.labels = label_packets(set.packets, relator, config);
  return set;
}

LabelSet relate_mech_graph(const DynamicMechanismGraph& graph, const MechInputs& inputs,
                           const FeatureCatalog& catalog, TextClient& relator, const RelateConfig& config) {
  LabelSet set;
  set.graph = "mech:" + graph.unit;
  set.kind = EdgeKind::Mech;
  set.relator = relator.id();
  set.budget = std::min(config.budget, graph.edges.size());
  for (const auto& e : graph.edges) set.packets.push_back(build_mech_packet(e, graph, inputs, catalog, config));
  set.labels = label_packets(set.packets, relator, config);
  return set;
}

// ---------------------------------------------------------------------------
// Stub relator
// ---------------------------------------------------------------------------

std::string StubRelator::send(const json& request) {
  const auto& packet = request.at("packet");
  const auto stage = request.at("stage").get<std::string>();
  const auto ka = text::keyword(packet.at("source_description").get<std::string>());
  const auto kb = text::keyword(packet.at("target_description").get<std::string>());
  std::vector<std::string> joint;
  for (const auto& l : packet.at("joint")) joint.push_back(l.at("text").get<std::string>());
  auto in_joint = [&](const std::string& kw) {
    return !kw.empty() && std::any_of(joint.begin(), joint.end(), [&](const auto& t) { return text::contains_word(t, kw); });
  };

  if (stage == "presence") {
    const bool ok = in_joint(ka) && in_joint(kb);
    return json{{"supported", ok},
                {"justification", ok ? "Both endpoint keywords occur in the joint evidence."
                                     : "An endpoint keyword is missing from the joint evidence."}}
        .dump();
  }
  if (packet.at("kind") == "mech") {
    return json{{"phrase", ka + " drives " + kb},
                {"directional", true},
                {"justification", "Joint evidence shows " + ka + " feeding " + kb + "."}}
        .dump();
  }
  std::string shared;
  for (const auto& w : text::top_content_words(joint, 8)) {
    if (w != ka && w != kb) {
      shared = w;
      break;
    }
  }
  const auto phrase = shared.empty() ? ka + " co-occurs with " + kb
                                     : ka + " co-occurs with " + kb + " in " + shared + " contexts";
  return json{{"phrase", phrase}, {"directional", false}, {"justification", "Shared joint keyword: " + shared + "."}}.dump();
}

}  // namespace forge
