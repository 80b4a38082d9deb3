#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "forge/activation_store.hpp"
#include "forge/corpus.hpp"
#include "forge/feature_key.hpp"

namespace forge {

/// Column layout shared by score and presence matrices: the tracked features
/// of one site, in ascending index order.
class FeatureColumns {
 public:
  FeatureColumns() = default;
  FeatureColumns(Site site, std::vector<std::uint32_t> indices);

  Site site() const { return site_; }
  std::size_t size() const { return indices_.size(); }
  std::uint32_t feature(std::size_t col) const { return indices_[col]; }
  FeatureKey key(std::size_t col) const { return {site_, indices_[col]}; }
  const std::vector<std::uint32_t>& indices() const { return indices_; }
  /// Column of a feature index, or -1 if untracked.
  std::int64_t column_of(std::uint32_t feature) const;

 private:
  Site site_ = Site::Source;
  std::vector<std::uint32_t> indices_;
};

/// m[s][v]: strongest positive activation of feature v over the non-special
/// tokens of sentence s. Stored sparsely; absent means 0.
class SentenceScores {
 public:
  using Row = std::vector<std::pair<std::uint32_t, double>>;  // (column, score>0), by column

  SentenceScores() = default;
  SentenceScores(FeatureColumns columns, std::vector<Row> rows);

  const FeatureColumns& columns() const { return columns_; }
  std::size_t num_sentences() const { return rows_.size(); }
  const Row& row(std::size_t s) const { return rows_[s]; }
  double score(std::size_t s, std::size_t col) const;

 private:
  FeatureColumns columns_;
  std::vector<Row> rows_;
};

/// Scores for the given features (all of the store's features when empty).
SentenceScores compute_sentence_scores(const TokenActivationStore& store,
                                       const CorpusStructure& corpus,
                                       std::span<const std::uint32_t> features = {});

struct ThresholdConfig {
  double quantile = 0.90;
  std::size_t min_nonzero = 5;      // fewer nonzero sentences triggers the safeguard
  double safeguard_fraction = 0.5;  // theta = fraction * max score under the safeguard
};

enum class ThresholdRule : std::uint8_t { Quantile, RareSafeguard, NeverActive };

/// Per-feature presence thresholds. Never-active features carry +infinity.
struct ThresholdVector {
  FeatureColumns columns;
  std::vector<double> theta;
  std::vector<ThresholdRule> rule;
  ThresholdConfig config;

  nlohmann::json to_json() const;
  static ThresholdVector from_json(const nlohmann::json& doc);
  /// Threshold of a feature index; throws NotFoundError if untracked.
  double of(std::uint32_t feature) const;
};

inline constexpr double kNeverPresent = std::numeric_limits<double>::infinity();

/// Nearest-rank quantile of an ascending-sorted, nonempty sample.
double nearest_rank_quantile(std::span<const double> sorted, double q);

/// Calibrates theta from each feature's nonzero sentence scores. Throws
/// ConfigError when `scores` tracks no features.
ThresholdVector calibrate_thresholds(const SentenceScores& scores, const ThresholdConfig& config = {});
ThresholdVector calibrate_thresholds(const TokenActivationStore& store,
                                     const CorpusStructure& corpus,
                                     std::span<const std::uint32_t> universe,
                                     const ThresholdConfig& config = {});

/// Binary unit x feature presence, stored as unit -> sorted column list.
struct PresenceMatrix {
  Granularity granularity = Granularity::Sentence;
  FeatureColumns columns;
  std::vector<std::vector<std::uint32_t>> rows;

  std::size_t num_units() const { return rows.size(); }
  bool present(std::size_t unit, std::size_t col) const;
  /// Number of units in which each column is present.
  std::vector<std::size_t> column_counts() const;
};

/// X[s][v] = 1 iff m[s][v] > theta_v (strict). Thresholds must cover every
/// scored column.
PresenceMatrix sentence_presence(const SentenceScores& scores, const ThresholdVector& thresholds);
PresenceMatrix sentence_presence(const TokenActivationStore& store, const CorpusStructure& corpus,
                                 const ThresholdVector& thresholds);

/// Existential OR of sentence presence over each unit of a coarser level.
PresenceMatrix lift_presence(const PresenceMatrix& sentence, const CorpusStructure& corpus,
                             Granularity g);

}  // namespace forge
