#include "forge/mechanism.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "forge/errors.hpp"
#include "forge/nnls.hpp"
#include "forge/text.hpp"

namespace forge {

using nlohmann::json;

namespace {

double row_lookup(const std::map<std::uint32_t, SparseRow>& rows, std::uint32_t f, std::uint32_t k) {
  auto it = rows.find(f);
  if (it == rows.end()) return 0.0;
  const auto& row = it->second;
  auto pos = std::lower_bound(row.begin(), row.end(), k, [](const auto& e, std::uint32_t key) { return e.first < key; });
  return (pos != row.end() && pos->first == k) ? pos->second : 0.0;
}

std::map<std::uint32_t, SparseRow> positive_rows(const Matrix& m, double tol) {
  std::map<std::uint32_t, SparseRow> out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    SparseRow row;
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      if (m(r, k) > 0.0 && m(r, k) > tol) row.emplace_back(static_cast<std::uint32_t>(k), m(r, k));
    }
    if (!row.empty()) out.emplace(static_cast<std::uint32_t>(r), std::move(row));
  }
  return out;
}

json rows_json(const std::map<std::uint32_t, SparseRow>& rows, const std::vector<std::uint32_t>* keep) {
  json out = json::array();
  for (const auto& [f, row] : rows) {
    if (keep && !std::binary_search(keep->begin(), keep->end(), f)) continue;
    json entries = json::array();
    for (const auto& [k, v] : row) entries.push_back({k, v});
    out.push_back({{"feature", f}, {"entries", std::move(entries)}});
  }
  return out;
}

std::map<std::uint32_t, SparseRow> rows_from_json(const json& arr) {
  std::map<std::uint32_t, SparseRow> out;
  for (const auto& r : arr) {
    SparseRow row;
    for (const auto& e : r.at("entries")) row.emplace_back(e.at(0).get<std::uint32_t>(), e.at(1).get<double>());
    out.emplace(r.at("feature").get<std::uint32_t>(), std::move(row));
  }
  return out;
}

}  // namespace

double SupportMatrices::a_plus(std::uint32_t a, std::uint32_t k) const { return row_lookup(source_pos, a, k); }
double SupportMatrices::g_plus(std::uint32_t b, std::uint32_t k) const { return row_lookup(target_pos, b, k); }

json SupportMatrices::to_json(const std::vector<std::uint32_t>* sources,
                              const std::vector<std::uint32_t>* targets) const {
  return {{"latents", latents},
          {"drop_tol", drop_tol},
          {"source", rows_json(source_pos, sources)},
          {"target", rows_json(target_pos, targets)}};
}

SupportMatrices SupportMatrices::from_json(const json& doc) {
  SupportMatrices s;
  s.latents = doc.at("latents").get<std::size_t>();
  s.drop_tol = doc.at("drop_tol").get<double>();
  s.source_pos = rows_from_json(doc.at("source"));
  s.target_pos = rows_from_json(doc.at("target"));
  return s;
}

SupportMatrices compute_support_matrices(const SparseStack& stack, double drop_tol) {
  const auto shape = stack.validate();
  if (drop_tol < 0.0) throw ConfigError("drop_tol must be nonnegative");
  SupportMatrices s;
  s.latents = static_cast<std::size_t>(shape.latents);
  s.drop_tol = drop_tol;
  s.a_func = stack.decoder_src.transpose() * stack.read.transpose();
  s.g_func = stack.encoder_tgt * stack.write;
  s.source_pos = positive_rows(s.a_func, drop_tol);
  s.target_pos = positive_rows(s.g_func, drop_tol);
  return s;
}

double StaticPrior::value(std::uint32_t a, std::uint32_t b) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), std::make_pair(a, b), [](const PriorEntry& e, const auto& key) {
    return std::make_pair(e.source, e.target) < key;
  });
  return (it != entries.end() && it->source == a && it->target == b) ? it->value : 0.0;
}

StaticPrior compute_static_prior(const SupportMatrices& supports, double floor) {
  // Column lists per latent, then an outer product per latent.
  std::vector<SparseRow> by_latent_src(supports.latents), by_latent_tgt(supports.latents);
  for (const auto& [a, row] : supports.source_pos) {
    for (const auto& [k, v] : row) by_latent_src[k].emplace_back(a, v);
  }
  for (const auto& [b, row] : supports.target_pos) {
    for (const auto& [k, v] : row) by_latent_tgt[k].emplace_back(b, v);
  }
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> acc;
  for (std::size_t k = 0; k < supports.latents; ++k) {
    for (const auto& [a, av] : by_latent_src[k]) {
      for (const auto& [b, gv] : by_latent_tgt[k]) acc[{a, b}] += av * gv;
    }
  }
  StaticPrior prior;
  prior.floor = floor;
  for (const auto& [key, v] : acc) {
    if (v > floor) prior.entries.push_back({key.first, key.second, v});
  }
  return prior;
}

// ---------------------------------------------------------------------------
// Captions
// ---------------------------------------------------------------------------

std::string_view caption_mode_name(CaptionMode mode) {
  return mode == CaptionMode::TopFunctional ? "top" : "nnls";
}

CaptionMode parse_caption_mode(std::string_view name) {
  if (name == "top" || name == "top_functional") return CaptionMode::TopFunctional;
  if (name == "nnls" || name == "constrained_nnls") return CaptionMode::ConstrainedNnls;
  throw ConfigError("unknown caption mode '" + std::string(name) + "'");
}

namespace {

json terms_json(const std::vector<CaptionTerm>& terms) {
  json out = json::array();
  for (const auto& t : terms) out.push_back({{"feature", t.feature}, {"weight", t.weight}, {"description", t.description}});
  return out;
}

std::vector<CaptionTerm> terms_from_json(const json& arr) {
  std::vector<CaptionTerm> out;
  for (const auto& t : arr) {
    out.push_back({t.at("feature").get<std::uint32_t>(), t.at("weight").get<double>(), t.at("description").get<std::string>()});
  }
  return out;
}

json coeffs_json(const std::vector<std::pair<std::uint32_t, double>>& c) {
  json out = json::array();
  for (const auto& [f, v] : c) out.push_back({f, v});
  return out;
}

std::vector<std::pair<std::uint32_t, double>> coeffs_from_json(const json& arr) {
  std::vector<std::pair<std::uint32_t, double>> out;
  for (const auto& e : arr) out.emplace_back(e.at(0).get<std::uint32_t>(), e.at(1).get<double>());
  return out;
}

// Features with a positive support on latent k, strongest first (ties: lower id).
std::vector<std::pair<std::uint32_t, double>> ranked_support(const std::map<std::uint32_t, SparseRow>& rows,
                                                             std::uint32_t k) {
  std::vector<std::pair<std::uint32_t, double>> out;
  for (const auto& [f, row] : rows) {
    const double v = row_lookup(rows, f, k);
    if (v > 0.0) out.emplace_back(f, v);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

// Restricted NNLS fit of `target` on dictionary columns `cols`.
std::vector<std::pair<std::uint32_t, double>> fit(const Matrix& dictionary, const std::vector<std::uint32_t>& cols,
                                                  const Vector& target) {
  if (cols.empty()) return {};
  Matrix sub(dictionary.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) sub.col(static_cast<Eigen::Index>(i)) = dictionary.col(cols[i]);
  const auto res = nnls(sub, target);
  std::vector<std::pair<std::uint32_t, double>> out;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (res.x[static_cast<Eigen::Index>(i)] > 0.0) out.emplace_back(cols[i], res.x[static_cast<Eigen::Index>(i)]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<CaptionTerm> summarize_terms(std::vector<std::pair<std::uint32_t, double>> weighted, Site site,
                                         const FeatureCatalog& catalog, std::size_t n) {
  std::stable_sort(weighted.begin(), weighted.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<CaptionTerm> out;
  for (std::size_t i = 0; i < std::min(n, weighted.size()); ++i) {
    out.push_back({weighted[i].first, weighted[i].second, catalog.description({site, weighted[i].first})});
  }
  return out;
}

}  // namespace

json LatentCaption::to_json() const {
  json j = {{"latent", latent},
            {"mode", caption_mode_name(mode)},
            {"label", label},
            {"vacuous", vacuous},
            {"sources", terms_json(sources)},
            {"targets", terms_json(targets)}};
  if (mode == CaptionMode::ConstrainedNnls) {
    j["alpha"] = coeffs_json(alpha);
    j["beta"] = coeffs_json(beta);
    j["source_candidates"] = source_candidates;
    j["target_candidates"] = target_candidates;
  }
  return j;
}

LatentCaption LatentCaption::from_json(const json& doc) {
  LatentCaption c;
  c.latent = doc.at("latent").get<std::uint32_t>();
  c.mode = parse_caption_mode(doc.at("mode").get<std::string>());
  c.label = doc.at("label").get<std::string>();
  c.vacuous = doc.at("vacuous").get<bool>();
  c.sources = terms_from_json(doc.at("sources"));
  c.targets = terms_from_json(doc.at("targets"));
  if (c.mode == CaptionMode::ConstrainedNnls) {
    c.alpha = coeffs_from_json(doc.at("alpha"));
    c.beta = coeffs_from_json(doc.at("beta"));
    c.source_candidates = doc.at("source_candidates").get<std::vector<std::uint32_t>>();
    c.target_candidates = doc.at("target_candidates").get<std::vector<std::uint32_t>>();
  }
  return c;
}

LatentCaption caption_latent(std::uint32_t k, const SupportMatrices& supports, const SparseStack& stack,
                             const FeatureCatalog& catalog, const CaptionConfig& config, TextClient* labeler) {
  if (k >= supports.latents) throw NotFoundError("latent " + std::to_string(k) + " out of range");
  LatentCaption cap;
  cap.latent = k;
  cap.mode = config.mode;
  auto src = ranked_support(supports.source_pos, k);
  auto tgt = ranked_support(supports.target_pos, k);
  cap.vacuous = src.empty() && tgt.empty();

  if (config.mode == CaptionMode::TopFunctional) {
    cap.sources = summarize_terms(src, Site::Source, catalog, config.summary_size);
    cap.targets = summarize_terms(tgt, Site::Target, catalog, config.summary_size);
  } else {
    for (std::size_t i = 0; i < std::min(config.candidates, src.size()); ++i) cap.source_candidates.push_back(src[i].first);
    for (std::size_t i = 0; i < std::min(config.candidates, tgt.size()); ++i) cap.target_candidates.push_back(tgt[i].first);
    std::sort(cap.source_candidates.begin(), cap.source_candidates.end());
    std::sort(cap.target_candidates.begin(), cap.target_candidates.end());
    cap.alpha = fit(stack.decoder_src, cap.source_candidates, stack.read.row(k).transpose());
    cap.beta = fit(stack.decoder_tgt, cap.target_candidates, stack.write.col(k));
    cap.sources = summarize_terms(cap.alpha, Site::Source, catalog, config.summary_size);
    cap.targets = summarize_terms(cap.beta, Site::Target, catalog, config.summary_size);
  }

  if (labeler && !cap.vacuous) {
    try {
      const auto reply = json::parse(labeler->send({{"task", "caption_latent"}, {"caption", cap.to_json()}, {"response_fields", {"label"}}}),
                                     nullptr, false);
      if (reply.is_object() && reply.contains("label") && reply["label"].is_string()) {
        cap.label = text::trim(reply["label"].get<std::string>());
      }
    } catch (const TransportError&) {
    }
  }
  if (cap.label.empty()) {
    const auto from = cap.sources.empty() ? std::string() : text::keyword(cap.sources.front().description);
    const auto to = cap.targets.empty() ? std::string() : text::keyword(cap.targets.front().description);
    if (!from.empty() && !to.empty()) {
      cap.label = from + " to " + to;
    } else if (!from.empty() || !to.empty()) {
      cap.label = from.empty() ? to : from;
    } else {
      cap.label = "latent " + std::to_string(k);
    }
  }
  return cap;
}

std::map<std::uint32_t, LatentCaption> caption_all_latents(const SupportMatrices& supports, const SparseStack& stack,
                                                           const FeatureCatalog& catalog, const CaptionConfig& config,
                                                           TextClient* labeler) {
  std::map<std::uint32_t, LatentCaption> out;
  for (std::uint32_t k = 0; k < supports.latents; ++k) {
    out.emplace(k, caption_latent(k, supports, stack, catalog, config, labeler));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dynamic graphs
// ---------------------------------------------------------------------------

std::string_view gate_mode_name(GateMode mode) { return mode == GateMode::Positive ? "positive" : "threshold"; }

GateMode parse_gate_mode(std::string_view name) {
  if (name == "positive") return GateMode::Positive;
  if (name == "threshold") return GateMode::Threshold;
  throw ConfigError("unknown gate mode '" + std::string(name) + "'");
}

json DynamicMechanismGraph::to_json() const {
  json edges_json = json::array();
  for (const auto& e : edges) {
    json lat = json::array();
    for (const auto& l : e.latents) lat.push_back({{"latent", l.latent}, {"evidence", l.evidence}, {"rho", l.rho}});
    edges_json.push_back({{"source", to_string({Site::Source, e.source})},
                          {"target", to_string({Site::Target, e.target})},
                          {"weight", e.weight},
                          {"strongest_latent", e.strongest_latent},
                          {"latents", std::move(lat)}});
  }
  json caps = json::array();
  for (const auto& [k, c] : captions) caps.push_back(c.to_json());
  return {{"kind", "mech"},
          {"unit", unit},
          {"granularity", granularity_name(granularity)},
          {"tokens", tokens},
          {"gate_mode", gate_mode_name(config.gate_mode)},
          {"gate_tol", config.gate_tol},
          {"epsilon", config.epsilon},
          {"edge_cap", config.edge_cap},
          {"restricted", config.restrict_to_universe},
          {"edges_total", edges_total},
          {"caption_mode", caption_mode},
          {"edges", std::move(edges_json)},
          {"captions", std::move(caps)}};
}

DynamicMechanismGraph DynamicMechanismGraph::from_json(const json& doc) {
  if (doc.value("kind", std::string()) != "mech") throw SchemaError("not a mechanism document");
  DynamicMechanismGraph g;
  g.unit = doc.at("unit").get<std::string>();
  g.granularity = parse_granularity(doc.at("granularity").get<std::string>());
  g.tokens = doc.at("tokens").get<std::size_t>();
  g.config.gate_mode = parse_gate_mode(doc.at("gate_mode").get<std::string>());
  g.config.gate_tol = doc.at("gate_tol").get<double>();
  g.config.epsilon = doc.at("epsilon").get<double>();
  g.config.edge_cap = doc.at("edge_cap").get<std::size_t>();
  g.config.restrict_to_universe = doc.at("restricted").get<bool>();
  g.edges_total = doc.at("edges_total").get<std::size_t>();
  g.caption_mode = doc.value("caption_mode", std::string());
  for (const auto& e : doc.at("edges")) {
    MechEdge edge;
    const auto s = parse_feature_key(e.at("source").get<std::string>());
    const auto t = parse_feature_key(e.at("target").get<std::string>());
    if (s.site != Site::Source || t.site != Site::Target) throw SchemaError("mechanism edges run src -> tgt");
    edge.source = s.index;
    edge.target = t.index;
    edge.weight = e.at("weight").get<double>();
    edge.strongest_latent = e.at("strongest_latent").get<std::uint32_t>();
    for (const auto& l : e.at("latents")) {
      edge.latents.push_back({l.at("latent").get<std::uint32_t>(), l.at("evidence").get<double>(), l.at("rho").get<double>()});
    }
    g.edges.push_back(std::move(edge));
  }
  for (const auto& c : doc.at("captions")) {
    auto cap = LatentCaption::from_json(c);
    g.captions.emplace(cap.latent, std::move(cap));
  }
  return g;
}

std::vector<std::uint64_t> unit_token_set(const MechInputs& inputs, std::string_view unit, Granularity* level) {
  if (!inputs.corpus) throw ConfigError("mechanism inputs lack a corpus");
  const auto ref = inputs.corpus->find_unit(unit);
  if (!ref) throw NotFoundError("unit '" + std::string(unit) + "' does not resolve in the corpus");
  if (level) *level = ref->granularity;
  std::vector<std::uint64_t> out;
  for (auto t : inputs.corpus->unit_tokens(*ref)) {
    bool special = false;
    for (const auto* store : {inputs.source, inputs.target, inputs.latent}) {
      if (store && t < store->num_tokens() && store->is_special(t)) special = true;
    }
    if (!special) out.push_back(t);
  }
  return out;
}

namespace {

std::vector<std::uint32_t> active_features(const TokenActivationStore& store, std::uint64_t token, GateMode mode,
                                           double tol, const ThresholdVector* thresholds,
                                           const std::vector<std::uint32_t>* universe) {
  std::vector<std::uint32_t> out;
  if (token >= store.num_tokens()) return out;
  for (const auto& e : store.token_entries(token)) {
    if (universe && !std::binary_search(universe->begin(), universe->end(), e.feature)) continue;
    bool on = false;
    if (mode == GateMode::Positive) {
      on = e.value > tol;
    } else if (thresholds) {
      const auto col = thresholds->columns.column_of(e.feature);
      on = col >= 0 && e.value > thresholds->theta[static_cast<std::size_t>(col)];
    }
    if (on) out.push_back(e.feature);
  }
  return out;
}

}  // namespace

DynamicMechanismGraph build_dynamic_graph(std::string_view unit, const MechInputs& inputs, const MechConfig& config) {
  if (!inputs.source || !inputs.target || !inputs.latent || !inputs.supports) {
    throw ConfigError("mechanism inputs are incomplete");
  }
  if (config.gate_mode == GateMode::Threshold && (!inputs.source_thresholds || !inputs.target_thresholds)) {
    throw ConfigError("threshold gating needs presence thresholds for both sites");
  }
  DynamicMechanismGraph g;
  g.unit = std::string(unit);
  g.config = config;
  const auto tokens = unit_token_set(inputs, unit, &g.granularity);
  g.tokens = tokens.size();

  const auto* su = config.restrict_to_universe ? &inputs.source_universe : nullptr;
  const auto* tu = config.restrict_to_universe ? &inputs.target_universe : nullptr;
  const auto& sup = *inputs.supports;

  // E(a,b,k) accumulated over tokens in ascending order.
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::map<std::uint32_t, double>> evidence;
  for (auto i : tokens) {
    if (i >= inputs.latent->num_tokens()) continue;
    const auto lat = inputs.latent->token_entries(i);
    if (lat.empty()) continue;
    const auto src = active_features(*inputs.source, i, config.gate_mode, config.gate_tol, inputs.source_thresholds, su);
    const auto tgt = active_features(*inputs.target, i, config.gate_mode, config.gate_tol, inputs.target_thresholds, tu);
    if (src.empty() || tgt.empty()) continue;
    for (const auto& l : lat) {
      const double t = l.value;
      if (!(t > 0.0)) continue;
      for (auto a : src) {
        const double av = sup.a_plus(a, l.feature);
        if (av <= 0.0) continue;
        for (auto b : tgt) {
          const double gv = sup.g_plus(b, l.feature);
          if (gv <= 0.0) continue;
          evidence[{a, b}][l.feature] += av * t * gv;
        }
      }
    }
  }

  for (auto& [key, per_latent] : evidence) {
    MechEdge e;
    e.source = key.first;
    e.target = key.second;
    double best = -1.0;
    for (const auto& [k, v] : per_latent) {
      if (!(v > 0.0)) continue;
      e.weight += v;
      e.latents.push_back({k, v, 0.0});
      if (v > best) {
        best = v;
        e.strongest_latent = k;
      }
    }
    if (!(e.weight > 0.0)) continue;
    for (auto& l : e.latents) l.rho = l.evidence / (e.weight + config.epsilon);
    g.edges.push_back(std::move(e));
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const MechEdge& x, const MechEdge& y) {
    if (x.weight != y.weight) return x.weight > y.weight;
    return std::tie(x.source, x.target) < std::tie(y.source, y.target);
  });
  g.edges_total = g.edges.size();
  if (g.edges.size() > config.edge_cap) g.edges.resize(config.edge_cap);
  return g;
}

void attach_captions(DynamicMechanismGraph& graph, const std::map<std::uint32_t, LatentCaption>& captions,
                     CaptionMode mode) {
  graph.caption_mode = std::string(caption_mode_name(mode));
  graph.captions.clear();
  for (const auto& e : graph.edges) {
    auto it = captions.find(e.strongest_latent);
    if (it != captions.end()) graph.captions.emplace(e.strongest_latent, it->second);
  }
}

}  // namespace forge
