#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/catalog.hpp"
#include "forge/clients.hpp"
#include "forge/presence.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// Activation statistics and the recall-oriented shortlist
// ---------------------------------------------------------------------------

struct ScoreWeights {
  double enrichment = 1.0;
  double localization = 1.0;
  double synergy = 0.25;
};

struct ShortlistConfig {
  double min_support_rate = 5e-4;
  double min_activation_mass = 10.0;
  double bottom_percent_drop = 0.20;
  std::size_t shortlist_size = 30000;
  ScoreWeights weights;
  double enrichment_epsilon = 1e-6;
  ThresholdConfig thresholds;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
  nlohmann::json to_json() const;
};

/// One corpus seen through one site's activations.
struct CorpusActivations {
  std::string name;
  const CorpusStructure* corpus = nullptr;
  const TokenActivationStore* store = nullptr;
};

/// Sentence scores and presence for one site on the target corpus and every
/// contrast corpus. Thresholds are calibrated on the target corpus and reused
/// for the contrasts so support rates are comparable.
class SiteEvidence {
 public:
  struct Side {
    std::string name;
    const CorpusStructure* corpus = nullptr;
    SentenceScores scores;
    PresenceMatrix presence;
  };

  /// Throws ConfigError when `contrasts` is empty.
  static SiteEvidence build(Site site, const CorpusActivations& target,
                            std::span<const CorpusActivations> contrasts,
                            const ThresholdConfig& thresholds = {});

  Site site() const { return site_; }
  const Side& target() const { return target_; }
  const std::vector<Side>& contrasts() const { return contrasts_; }
  const ThresholdVector& thresholds() const { return thresholds_; }
  /// Positive activation mass per feature over non-special target tokens.
  const std::vector<double>& mass() const { return mass_; }

 private:
  Site site_ = Site::Source;
  Side target_;
  std::vector<Side> contrasts_;
  ThresholdVector thresholds_;
  std::vector<double> mass_;
};

struct FeatureStatsRow {
  FeatureKey feature;
  std::size_t support_sentences = 0;
  double support_rate = 0.0;          // target sentences present / target sentences
  double activation_mass = 0.0;
  std::vector<double> contrast_support;
  double contrast_support_max = 0.0;
  double enrichment = 0.0;            // ln((target + eps) / (max contrast + eps))
  double localization = 0.0;          // score-weighted share in the best subchapter
  double synergy = 0.0;               // enrichment * localization
  double enrichment_norm = 0.0;       // min-max within the site
  double localization_norm = 0.0;
  double synergy_norm = 0.0;
  double combined_score = 0.0;

  nlohmann::json to_json() const;
};

struct FeatureStatsTable {
  std::vector<FeatureStatsRow> rows;  // ascending feature key

  const FeatureStatsRow* find(FeatureKey key) const;
  /// Appends another site's rows, keeping key order.
  void merge(FeatureStatsTable other);
};

FeatureStatsTable compute_feature_stats(const SiteEvidence& evidence, const ShortlistConfig& config);
FeatureStatsTable compute_feature_stats(Site site, const CorpusActivations& target,
                                        std::span<const CorpusActivations> contrasts,
                                        const ShortlistConfig& config);

/// Min-max normalizes the three score axes within each site and fills in the
/// combined score. Called by compute_feature_stats; exposed for tables that
/// are assembled by hand.
void score_feature_stats(FeatureStatsTable& table, const ScoreWeights& weights);

struct ShortlistEntry {
  FeatureKey feature;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based
  std::vector<std::string> tags;
};

struct ShortlistResult {
  std::vector<ShortlistEntry> entries;  // best first
  std::vector<FeatureKey> failed_support;
  std::vector<FeatureKey> failed_mass;
  std::vector<FeatureKey> dropped_bottom;
  std::vector<FeatureKey> below_cut;    // survived gates, outside shortlist_size

  const ShortlistEntry* find(FeatureKey key) const;
};

/// Gates in order: min support rate, min activation mass, then the bottom
/// fraction by target support within each site (floor of the count; ties drop
/// the lower feature id first). Survivors are ranked by combined score
/// (ties: ascending id) and cut at shortlist_size.
ShortlistResult shortlist(const FeatureStatsTable& stats, const ShortlistConfig& config);

// ---------------------------------------------------------------------------
// Evidence packets
// ---------------------------------------------------------------------------

enum class ScreenLabel : std::uint8_t { Candidate, SurfaceForm, Missing };
std::string_view screen_label_name(ScreenLabel label);

struct EvidenceSentence {
  std::string corpus;
  std::string sentence_id;
  std::string text;
  double activation = 0.0;
};

struct PacketUnit {
  std::string id;
  std::string title;
  std::string chapter_id;
  std::size_t supporting_sentences = 0;
  double mass = 0.0;  // sum of sentence scores inside the unit
};

struct EvidencePacket {
  FeatureKey feature;
  std::string description;
  ScreenLabel screen_label = ScreenLabel::Candidate;
  std::vector<EvidenceSentence> target_evidence;
  std::vector<EvidenceSentence> contrast_evidence;
  std::vector<PacketUnit> activated_units;   // subchapters holding a supporting sentence
  std::vector<PacketUnit> comparator_units;  // strongest non-activated subchapters
  std::vector<std::pair<std::string, std::string>> chapters;  // (id, title) of activated units
  std::vector<std::string> reason_tags;
  std::vector<FeatureKey> duplicate_hints;
  nlohmann::json target_stats;
  nlohmann::json contrast_stats;

  /// Missing and surface-form packets never reach the adjudicator.
  bool local_reject() const { return screen_label != ScreenLabel::Candidate; }
  std::string id() const { return "packet:" + to_string(feature); }

  nlohmann::json to_json() const;
  static EvidencePacket from_json(const nlohmann::json& doc);
};

struct PacketConfig {
  std::size_t evidence_count = 8;
  /// Case-insensitive ECMAScript regexes matched against descriptions.
  std::vector<std::string> surface_patterns = {
      R"(\bpunctuation\b)", R"(\b(comma|period|colon|semicolon|apostrophe)s?\b)",
      R"(\b(whitespace|newline|indentation)\b)", R"(\bcapitali[sz]ation\b)",
      R"(^(the )?(word|token|letter|character|suffix|prefix)s?\b)", R"(\bformatting\b)",
      R"(\b(bracket|parenthes[ie]s|quotation)\b)", R"(^[^a-zA-Z]*$)"};
  /// Cosine similarity on description embeddings at or above which two
  /// shortlisted features are flagged as possible duplicates.
  double duplicate_cosine = 0.95;
};

ScreenLabel screen_description(std::string_view description, const PacketConfig& config);

/// Throws NotFoundError when the feature has no stats row, PreconditionError
/// when it is not shortlisted.
EvidencePacket build_evidence_packet(FeatureKey feature, const FeatureStatsTable& stats,
                                     const ShortlistResult& shortlisted, const SiteEvidence& evidence,
                                     const FeatureCatalog& catalog, const PacketConfig& config = {});

// ---------------------------------------------------------------------------
// Adjudication
// ---------------------------------------------------------------------------

struct AdjudicationResult {
  bool visible = false;
  std::vector<std::string> evidence_sentence_ids;
  bool belongs_here = false;
  std::string distinctiveness;  // low | medium | high
  std::string justification;

  nlohmann::json to_json() const;
};

/// Parses a client reply. Accepts the fields at top level or nested under
/// "visibility" / "relevance". Throws SchemaError on any violation, including
/// visible=true with no evidence ids or ids outside the packet.
AdjudicationResult parse_adjudication(std::string_view reply, const EvidencePacket& packet);

enum class AdjudicationStatus : std::uint8_t { Decided, Indeterminate };

struct AdjudicationOutcome {
  AdjudicationStatus status = AdjudicationStatus::Indeterminate;
  std::optional<AdjudicationResult> result;
  std::size_t attempts = 0;
  std::vector<std::string> errors;
  std::string client_id;

  bool retained() const {
    return status == AdjudicationStatus::Decided && result->visible && result->belongs_here;
  }
  nlohmann::json to_json() const;
};

struct AdjudicationConfig {
  std::size_t transport_retries = 2;
  std::size_t max_in_flight = 4;
  nlohmann::json domain_profile = nlohmann::json::object();
};

nlohmann::json adjudication_request(const EvidencePacket& packet, const nlohmann::json& domain_profile);

/// Sends a candidate packet. A schema-violating reply is retried once, then
/// the outcome is Indeterminate. Transport failures are retried
/// `transport_retries` times, then AdjudicatorError is thrown. Packets that
/// are not candidates raise PreconditionError without contacting the client.
AdjudicationOutcome adjudicate_feature(const EvidencePacket& packet, TextClient& adjudicator,
                                       const AdjudicationConfig& config = {});

/// Deterministic adjudicator for tests and offline runs. Takes the first
/// content word of the description as the keyword: visible when at least two
/// target evidence sentences contain it, belongs here when fewer than half as
/// many contrast sentences do.
class StubAdjudicator final : public TextClient {
 public:
  std::string id() const override { return "stub-adjudicator"; }
  std::string send(const nlohmann::json& request) override;
};

// ---------------------------------------------------------------------------
// Full filtering stage
// ---------------------------------------------------------------------------

struct FilterConfig {
  ShortlistConfig shortlist;
  PacketConfig packets;
  AdjudicationConfig adjudication;
};

enum class FeatureDecision : std::uint8_t {
  Retained, Rejected, Indeterminate, LocalReject
};
std::string_view decision_name(FeatureDecision d);

struct FeatureRecord {
  EvidencePacket packet;
  std::optional<AdjudicationOutcome> outcome;
  FeatureDecision decision = FeatureDecision::LocalReject;
};

/// The strict retained concept universe with its provenance.
struct RetainedUniverse {
  std::vector<FeatureKey> features;     // retained, ascending
  std::vector<ShortlistEntry> shortlist;
  std::vector<FeatureKey> candidates;   // passed the local description screen
  std::vector<FeatureKey> adjudicated;  // received a schema-valid decision
  std::map<FeatureKey, FeatureRecord> records;
  std::vector<FeatureStatsRow> shortlist_stats;
  nlohmann::json config;

  bool contains(FeatureKey key) const;
  std::vector<std::uint32_t> site_indices(Site site) const;

  nlohmann::json to_json() const;
  static RetainedUniverse from_json(const nlohmann::json& doc);
};

struct SiteInputs {
  Site site = Site::Source;
  CorpusActivations target;
  std::vector<CorpusActivations> contrasts;
};

RetainedUniverse run_filter(std::span<const SiteInputs> sites, const FeatureCatalog& catalog,
                            const FilterConfig& config, TextClient& adjudicator);

}  // namespace forge
