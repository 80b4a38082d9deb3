#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/catalog.hpp"
#include "forge/clients.hpp"
#include "forge/cooc.hpp"
#include "forge/mechanism.hpp"
#include "forge/presence.hpp"

namespace forge {

enum class EdgeKind : std::uint8_t { Cooc, Mech };
std::string_view edge_kind_name(EdgeKind kind);

struct EvidenceLine {
  std::string sentence_id;
  std::string text;
  double score = 0.0;
};

struct EdgeEvidencePacket {
  std::string id;  // "cooc:<granularity>:<a>|<b>" or "mech:<unit>:<a>|<b>"
  EdgeKind kind = EdgeKind::Cooc;
  FeatureKey a;
  FeatureKey b;
  std::string a_description;
  std::string b_description;
  std::vector<EvidenceLine> joint;
  std::vector<EvidenceLine> only_a;  // a without b
  std::vector<EvidenceLine> only_b;  // b without a
  double count = 0.0;                // C_ab (cooc)
  double jaccard = 0.0;              // cooc
  double weight = 0.0;               // J (cooc) or F (mech); labeling priority
  std::string hint;                  // strongest-latent caption label (mech)
  std::uint32_t strongest_latent = 0;
  bool evidence_poor = false;

  nlohmann::json to_json() const;
};

struct RelateConfig {
  std::size_t joint_lines = 6;
  std::size_t contrast_lines = 6;
  std::size_t budget = static_cast<std::size_t>(-1);
  std::size_t transport_retries = 1;
  std::size_t max_in_flight = 4;
  double copy_overlap = 0.8;
  std::vector<std::string> blocklist = {"related to", "associated with", "connected to", "linked to",
                                        "relates to", "is related to", "is associated with", "involves",
                                        "and", "with", "about", "similar to", "same as"};
  std::vector<std::string> directional_verbs = {
      "supports", "drives",   "activates", "triggers", "causes",  "produces", "converts", "transforms",
      "promotes", "inhibits", "enables",   "leads",    "feeds",   "maps",     "turns",    "signals",
      "predicts", "precedes", "implies",   "selects",  "routes",  "writes",   "reads",    "amplifies"};
  std::string cooc_fallback = "co-occurs with";
  std::string mech_fallback = "supports";
};

enum class LabelStatus : std::uint8_t { Accepted, Fallback, Rejected };
std::string_view label_status_name(LabelStatus status);

struct EdgeLabel {
  std::string packet_id;
  FeatureKey a;
  FeatureKey b;
  std::string phrase;
  bool directional = false;
  LabelStatus status = LabelStatus::Fallback;
  std::string justification;
  std::string provenance;       // client id, or "fallback"
  std::string rejected_phrase;  // set when validation replaced a proposal
  std::string rejection_reason;

  nlohmann::json to_json() const;
};

/// Sentence-level scores and presence for the features of one site.
struct SiteSentenceView {
  const CorpusStructure* corpus = nullptr;
  const SentenceScores* scores = nullptr;
  const PresenceMatrix* presence = nullptr;
};

/// JOINT = sentences where both endpoints are present, ranked by
/// min(m_a, m_b); contrast lines are one-sided sentences ranked by the
/// present endpoint's score. Ties keep sentence order.
EdgeEvidencePacket build_cooc_packet(const CoocEdge& edge, const CoocGraph& graph, const SiteSentenceView& view,
                                     const FeatureCatalog& catalog, const RelateConfig& config = {});

/// JOINT = corpus sentences ranked by max_k E(a,b,k) computed on that
/// sentence; contrast lines are sentences where only one endpoint gates on.
EdgeEvidencePacket build_mech_packet(const MechEdge& edge, const DynamicMechanismGraph& graph,
                                     const MechInputs& inputs, const FeatureCatalog& catalog,
                                     const RelateConfig& config = {});

EdgeLabel fallback_label(const EdgeEvidencePacket& packet, const RelateConfig& config, std::string justification);

/// Applies the generic, copy, directional-verb and hint rules. A rejected
/// proposal is replaced by the fallback relation; fallback labels pass
/// through unchanged.
EdgeLabel validate_label(EdgeLabel label, const EdgeEvidencePacket& packet, const RelateConfig& config = {});

nlohmann::json relate_request(const EdgeEvidencePacket& packet, std::string_view stage);

/// Presence pass then relation proposal, then validation. Evidence-poor
/// packets fall back without contacting the client; transport failures are
/// retried `transport_retries` times, then fall back.
EdgeLabel label_edge(const EdgeEvidencePacket& packet, TextClient& relator, const RelateConfig& config = {});

/// Labels every packet. The `budget` highest-weight packets (ties: packet id)
/// go to the client; the rest fall back.
std::vector<EdgeLabel> label_packets(const std::vector<EdgeEvidencePacket>& packets, TextClient& relator,
                                     const RelateConfig& config = {});

struct LabelSet {
  std::string graph;  // e.g. "cooc_sentence" or "mech:s17"
  EdgeKind kind = EdgeKind::Cooc;
  std::string relator;
  std::size_t budget = 0;
  std::vector<EdgeEvidencePacket> packets;
  std::vector<EdgeLabel> labels;  // same order as packets

  nlohmann::json to_json() const;
};

LabelSet relate_cooc_graph(const CoocGraph& graph, const SiteSentenceView& view, const FeatureCatalog& catalog,
                           TextClient& relator, const RelateConfig& config = {});
LabelSet relate_mech_graph(const DynamicMechanismGraph& graph, const MechInputs& inputs,
                           const FeatureCatalog& catalog, TextClient& relator, const RelateConfig& config = {});

/// Deterministic relator. Presence: both endpoint keywords occur in the JOINT
/// lines. Relation: "X co-occurs with Y in <shared keyword> contexts" for
/// co-occurrence edges, "X drives Y" for mechanism edges.
class StubRelator final : public TextClient {
 public:
  std::string id() const override { return "stub-relator"; }
  std::string send(const nlohmann::json& request) override;
};

}  // namespace forge
