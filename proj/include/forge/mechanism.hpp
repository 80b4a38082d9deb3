#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/activation_store.hpp"
#include "forge/catalog.hpp"
#include "forge/clients.hpp"
#include "forge/corpus.hpp"
#include "forge/presence.hpp"
#include "forge/sparse_stack.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// Static supports
// ---------------------------------------------------------------------------

using SparseRow = std::vector<std::pair<std::uint32_t, double>>;  // (latent, value), ascending latent

/// Readable interface of the transcoder. A(a,k) = <d_a^src, r_k>,
/// G(b,k) = <e_b^tgt, w_k>. The positive parts are kept as sparse rows with
/// entries <= drop_tol removed; the dense matrices are optional so that a
/// bundle can carry only the rows it needs.
struct SupportMatrices {
  std::size_t latents = 0;
  double drop_tol = 0.0;
  std::map<std::uint32_t, SparseRow> source_pos;  // src feature -> A+ row
  std::map<std::uint32_t, SparseRow> target_pos;  // tgt feature -> G+ row
  Matrix a_func;                                  // F_src x K (may be empty)
  Matrix g_func;                                  // F_tgt x K (may be empty)

  double a_plus(std::uint32_t a, std::uint32_t k) const;
  double g_plus(std::uint32_t b, std::uint32_t k) const;

  /// Sparse positive parts only, optionally restricted to feature subsets.
  nlohmann::json to_json(const std::vector<std::uint32_t>* sources = nullptr,
                         const std::vector<std::uint32_t>* targets = nullptr) const;
  static SupportMatrices from_json(const nlohmann::json& doc);
};

SupportMatrices compute_support_matrices(const SparseStack& stack, double drop_tol = 0.0);

struct PriorEntry {
  std::uint32_t source = 0;
  std::uint32_t target = 0;
  double value = 0.0;
};

/// M(a,b) = sum_k A+(a,k) G+(b,k), stored sparse above `floor`.
struct StaticPrior {
  std::vector<PriorEntry> entries;  // sorted by (source, target)
  double floor = 0.0;

  double value(std::uint32_t a, std::uint32_t b) const;
};

StaticPrior compute_static_prior(const SupportMatrices& supports, double floor = 0.0);

// ---------------------------------------------------------------------------
// Captions
// ---------------------------------------------------------------------------

enum class CaptionMode : std::uint8_t { TopFunctional, ConstrainedNnls };
std::string_view caption_mode_name(CaptionMode mode);
CaptionMode parse_caption_mode(std::string_view name);

struct CaptionConfig {
  CaptionMode mode = CaptionMode::TopFunctional;
  std::size_t candidates = 12;  // m: NNLS support is restricted to these
  std::size_t summary_size = 3;
};

struct CaptionTerm {
  std::uint32_t feature = 0;
  double weight = 0.0;  // A+ / G+ in top mode, fitted coefficient in nnls mode
  std::string description;
};

struct LatentCaption {
  std::uint32_t latent = 0;
  CaptionMode mode = CaptionMode::TopFunctional;
  std::vector<CaptionTerm> sources;  // S_k
  std::vector<CaptionTerm> targets;  // T_k
  std::vector<std::pair<std::uint32_t, double>> alpha;    // nnls only, positive coefficients
  std::vector<std::pair<std::uint32_t, double>> beta;
  std::vector<std::uint32_t> source_candidates;           // nnls only
  std::vector<std::uint32_t> target_candidates;
  std::string label;
  bool vacuous = false;

  nlohmann::json to_json() const;
  static LatentCaption from_json(const nlohmann::json& doc);
};

/// The label comes from `labeler` when given, else from the top content word
/// of the first source and first target summary ("x to y").
LatentCaption caption_latent(std::uint32_t k, const SupportMatrices& supports, const SparseStack& stack,
                             const FeatureCatalog& catalog, const CaptionConfig& config = {},
                             TextClient* labeler = nullptr);

std::map<std::uint32_t, LatentCaption> caption_all_latents(const SupportMatrices& supports, const SparseStack& stack,
                                                           const FeatureCatalog& catalog,
                                                           const CaptionConfig& config = {},
                                                           TextClient* labeler = nullptr);

// ---------------------------------------------------------------------------
// Dynamic mechanism graphs
// ---------------------------------------------------------------------------

enum class GateMode : std::uint8_t { Positive, Threshold };
std::string_view gate_mode_name(GateMode mode);
GateMode parse_gate_mode(std::string_view name);

struct MechConfig {
  GateMode gate_mode = GateMode::Positive;
  double gate_tol = 0.0;
  double epsilon = 1e-9;
  std::size_t edge_cap = 400;
  bool restrict_to_universe = true;
};

struct LatentEvidence {
  std::uint32_t latent = 0;
  double evidence = 0.0;  // E(a,b,k)
  double rho = 0.0;       // E / (F + eps)
};

struct MechEdge {
  std::uint32_t source = 0;  // src feature
  std::uint32_t target = 0;  // tgt feature
  double weight = 0.0;       // F = sum_k E, ascending k
  std::uint32_t strongest_latent = 0;
  std::vector<LatentEvidence> latents;  // ascending latent, E > 0
};

struct DynamicMechanismGraph {
  std::string unit;
  Granularity granularity = Granularity::Sentence;
  std::size_t tokens = 0;        // |I_q| after excluding special tokens
  std::size_t edges_total = 0;   // before the edge cap
  MechConfig config;
  std::vector<MechEdge> edges;   // F descending, then (source, target)
  std::map<std::uint32_t, LatentCaption> captions;  // strongest latents
  std::string caption_mode;

  nlohmann::json to_json() const;
  static DynamicMechanismGraph from_json(const nlohmann::json& doc);
};

struct MechInputs {
  const CorpusStructure* corpus = nullptr;
  const TokenActivationStore* source = nullptr;
  const TokenActivationStore* target = nullptr;
  const TokenActivationStore* latent = nullptr;
  const SupportMatrices* supports = nullptr;
  /// Retained feature indices; used when config.restrict_to_universe.
  std::vector<std::uint32_t> source_universe;
  std::vector<std::uint32_t> target_universe;
  /// Presence thresholds, used by GateMode::Threshold. Untracked features
  /// never gate on.
  const ThresholdVector* source_thresholds = nullptr;
  const ThresholdVector* target_thresholds = nullptr;
};

/// Tokens of a unit id (sentence, paragraph, subchapter, or chapter) with
/// special tokens removed. Throws NotFoundError.
std::vector<std::uint64_t> unit_token_set(const MechInputs& inputs, std::string_view unit, Granularity* level = nullptr);

/// Throws NotFoundError when the unit id does not resolve.
DynamicMechanismGraph build_dynamic_graph(std::string_view unit, const MechInputs& inputs,
                                          const MechConfig& config = {});

/// Attaches the captions of every strongest latent in the graph.
void attach_captions(DynamicMechanismGraph& graph, const std::map<std::uint32_t, LatentCaption>& captions,
                     CaptionMode mode);

}  // namespace forge
