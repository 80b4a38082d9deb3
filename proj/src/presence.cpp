#include "forge/presence.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "forge/errors.hpp"

namespace forge {

using nlohmann::json;

FeatureColumns::FeatureColumns(Site site, std::vector<std::uint32_t> indices)
    : site_(site), indices_(std::move(indices)) {
  std::sort(indices_.begin(), indices_.end());
  indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
}

std::int64_t FeatureColumns::column_of(std::uint32_t feature) const {
  auto it = std::lower_bound(indices_.begin(), indices_.end(), feature);
  if (it == indices_.end() || *it != feature) return -1;
  return it - indices_.begin();
}

SentenceScores::SentenceScores(FeatureColumns columns, std::vector<Row> rows)
    : columns_(std::move(columns)), rows_(std::move(rows)) {}

double SentenceScores::score(std::size_t s, std::size_t col) const {
  const auto& r = rows_.at(s);
  auto it = std::lower_bound(r.begin(), r.end(), col,
                             [](const auto& e, std::size_t c) { return e.first < c; });
  return (it != r.end() && it->first == col) ? it->second : 0.0;
}

SentenceScores compute_sentence_scores(const TokenActivationStore& store,
                                       const CorpusStructure& corpus,
                                       std::span<const std::uint32_t> features) {
  const Site site = parse_site(store.site_id().substr(store.site_id().rfind('/') + 1));
  std::vector<std::uint32_t> idx(features.begin(), features.end());
  if (idx.empty()) {
    idx.resize(store.num_features());
    for (std::uint32_t f = 0; f < idx.size(); ++f) idx[f] = f;
  }
  FeatureColumns columns(site, std::move(idx));
  std::vector<std::int64_t> col_of(store.num_features(), -1);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns.feature(c) >= store.num_features()) {
      throw BoundsError("feature " + std::to_string(columns.feature(c)) + " outside store");
    }
    col_of[columns.feature(c)] = static_cast<std::int64_t>(c);
  }
  if (corpus.num_tokens() > store.num_tokens()) {
    throw BoundsError("corpus spans exceed activation store '" + store.site_id() + "'");
  }

  std::vector<SentenceScores::Row> rows(corpus.num_sentences());
  std::vector<double> best(columns.size(), 0.0);
  std::vector<std::uint32_t> touched;
  for (std::size_t s = 0; s < corpus.num_sentences(); ++s) {
    const auto& sent = corpus.sentence(s);
    std::size_t live_tokens = 0;
    for (auto t = sent.token_begin; t < sent.token_end; ++t) {
      if (store.is_special(t)) continue;
      ++live_tokens;
      for (const auto& e : store.token_entries(t)) {
        const auto c = col_of[e.feature];
        if (c < 0 || e.value <= 0.0f) continue;
        if (best[c] == 0.0) touched.push_back(static_cast<std::uint32_t>(c));
        best[c] = std::max(best[c], static_cast<double>(e.value));
      }
    }
    if (live_tokens == 0) spdlog::debug("sentence {} has no tokens after masking", sent.id);
    std::sort(touched.begin(), touched.end());
    auto& row = rows[s];
    row.reserve(touched.size());
    for (auto c : touched) {
      row.emplace_back(c, best[c]);
      best[c] = 0.0;
    }
    touched.clear();
  }
  return SentenceScores(std::move(columns), std::move(rows));
}

double nearest_rank_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ValueError("quantile of empty sample");
  const double n = static_cast<double>(sorted.size());
  // 1e-9 keeps q*n that is integral in exact arithmetic from rounding up.
  auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

ThresholdVector calibrate_thresholds(const SentenceScores& scores, const ThresholdConfig& config) {
  if (scores.columns().size() == 0) throw ConfigError("threshold calibration needs a nonempty universe");
  if (!(config.quantile > 0.0 && config.quantile <= 1.0)) {
    throw ConfigError("threshold quantile must lie in (0, 1]");
  }
  const auto ncols = scores.columns().size();
  std::vector<std::vector<double>> samples(ncols);
  for (std::size_t s = 0; s < scores.num_sentences(); ++s) {
    for (const auto& [c, m] : scores.row(s)) samples[c].push_back(m);
  }
  ThresholdVector out;
  out.columns = scores.columns();
  out.config = config;
  out.theta.resize(ncols);
  out.rule.resize(ncols);
  for (std::size_t c = 0; c < ncols; ++c) {
    auto& v = samples[c];
    if (v.empty()) {
      out.theta[c] = kNeverPresent;
      out.rule[c] = ThresholdRule::NeverActive;
      continue;
    }
    std::sort(v.begin(), v.end());
    if (v.size() < config.min_nonzero) {
      out.theta[c] = config.safeguard_fraction * v.back();
      out.rule[c] = ThresholdRule::RareSafeguard;
    } else {
      out.theta[c] = nearest_rank_quantile(v, config.quantile);
      out.rule[c] = ThresholdRule::Quantile;
    }
  }
  return out;
}

ThresholdVector calibrate_thresholds(const TokenActivationStore& store,
                                     const CorpusStructure& corpus,
                                     std::span<const std::uint32_t> universe,
                                     const ThresholdConfig& config) {
  if (universe.empty()) throw ConfigError("threshold calibration needs a nonempty universe");
  return calibrate_thresholds(compute_sentence_scores(store, corpus, universe), config);
}

double ThresholdVector::of(std::uint32_t feature) const {
  const auto c = columns.column_of(feature);
  if (c < 0) throw NotFoundError("no threshold for feature " + std::to_string(feature));
  return theta[c];
}

namespace {
const char* rule_name(ThresholdRule r) {
  switch (r) {
    case ThresholdRule::Quantile: return "quantile";
    case ThresholdRule::RareSafeguard: return "rare_safeguard";
    case ThresholdRule::NeverActive: return "never_active";
  }
  return "?";
}
ThresholdRule parse_rule(const std::string& s) {
  if (s == "quantile") return ThresholdRule::Quantile;
  if (s == "rare_safeguard") return ThresholdRule::RareSafeguard;
  if (s == "never_active") return ThresholdRule::NeverActive;
  throw SchemaError("unknown threshold rule '" + s + "'");
}
}  // namespace

json ThresholdVector::to_json() const {
  json rows = json::array();
  for (std::size_t c = 0; c < columns.size(); ++c) {
    json t = std::isfinite(theta[c]) ? json(theta[c]) : json(nullptr);
    rows.push_back({{"feature", to_string(columns.key(c))}, {"theta", t}, {"rule", rule_name(rule[c])}});
  }
  return {{"site", site_name(columns.site())},
          {"quantile", config.quantile},
          {"min_nonzero", config.min_nonzero},
          {"safeguard_fraction", config.safeguard_fraction},
          {"thresholds", std::move(rows)}};
}

ThresholdVector ThresholdVector::from_json(const json& doc) {
  ThresholdVector out;
  const Site site = parse_site(doc.at("site").get<std::string>());
  out.config.quantile = doc.at("quantile").get<double>();
  out.config.min_nonzero = doc.at("min_nonzero").get<std::size_t>();
  out.config.safeguard_fraction = doc.at("safeguard_fraction").get<double>();
  std::vector<std::uint32_t> idx;
  std::vector<std::pair<std::uint32_t, std::pair<double, ThresholdRule>>> rows;
  for (const auto& r : doc.at("thresholds")) {
    const auto key = parse_feature_key(r.at("feature").get<std::string>());
    const double theta = r.at("theta").is_null() ? kNeverPresent : r.at("theta").get<double>();
    rows.push_back({key.index, {theta, parse_rule(r.at("rule").get<std::string>())}});
    idx.push_back(key.index);
  }
  out.columns = FeatureColumns(site, idx);
  out.theta.resize(out.columns.size());
  out.rule.resize(out.columns.size());
  for (const auto& [f, tr] : rows) {
    const auto c = out.columns.column_of(f);
    out.theta[c] = tr.first;
    out.rule[c] = tr.second;
  }
  return out;
}

bool PresenceMatrix::present(std::size_t unit, std::size_t col) const {
  const auto& r = rows.at(unit);
  return std::binary_search(r.begin(), r.end(), static_cast<std::uint32_t>(col));
}

std::vector<std::size_t> PresenceMatrix::column_counts() const {
  std::vector<std::size_t> counts(columns.size(), 0);
  for (const auto& r : rows) {
    for (auto c : r) ++counts[c];
  }
  return counts;
}

PresenceMatrix sentence_presence(const SentenceScores& scores, const ThresholdVector& thresholds) {
  PresenceMatrix x;
  x.granularity = Granularity::Sentence;
  x.columns = scores.columns();
  std::vector<double> theta(x.columns.size());
  for (std::size_t c = 0; c < x.columns.size(); ++c) theta[c] = thresholds.of(x.columns.feature(c));
  x.rows.resize(scores.num_sentences());
  for (std::size_t s = 0; s < scores.num_sentences(); ++s) {
    for (const auto& [c, m] : scores.row(s)) {
      if (m > theta[c]) x.rows[s].push_back(c);
    }
  }
  return x;
}

PresenceMatrix sentence_presence(const TokenActivationStore& store, const CorpusStructure& corpus,
                                 const ThresholdVector& thresholds) {
  return sentence_presence(compute_sentence_scores(store, corpus, thresholds.columns.indices()),
                           thresholds);
}

PresenceMatrix lift_presence(const PresenceMatrix& sentence, const CorpusStructure& corpus,
                             Granularity g) {
  if (sentence.granularity != Granularity::Sentence) {
    throw PreconditionError("lift_presence expects a sentence-level matrix");
  }
  if (sentence.num_units() != corpus.num_sentences()) {
    throw BoundsError("presence matrix rows do not match corpus sentences");
  }
  if (g == Granularity::Sentence) return sentence;
  PresenceMatrix out;
  out.granularity = g;
  out.columns = sentence.columns;
  out.rows.resize(corpus.num_units(g));
  for (std::size_t u = 0; u < out.rows.size(); ++u) {
    auto& row = out.rows[u];
    for (auto s : corpus.unit_sentences(g, u)) {
      row.insert(row.end(), sentence.rows[s].begin(), sentence.rows[s].end());
    }
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  return out;
}

}  // namespace forge
