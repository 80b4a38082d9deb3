#include "forge/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "forge/errors.hpp"

namespace forge {

namespace pt = boost::property_tree;

namespace {

std::string unquote(std::string v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

double as_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
}

std::size_t as_count(const std::string& key, const std::string& v) {
  const double d = as_double(key, v);
  if (d < 0 || d != static_cast<double>(static_cast<std::size_t>(d))) {
    throw ConfigError("'" + key + "' expects a nonnegative integer, got '" + v + "'");
  }
  return static_cast<std::size_t>(d);
}

}  // namespace

FilterFileConfig parse_filter_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("filter config: ") + e.what());
  }
  FilterFileConfig cfg;
  auto& f = cfg.filter;
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ConfigError("filter config: key '" + section + "' outside a section");
    for (const auto& [key, node] : body) {
      const auto name = section + "." + key;
      const auto v = unquote(node.data());
      if (name == "shortlist.min_support_rate") f.shortlist.min_support_rate = as_double(name, v);
      else if (name == "shortlist.min_activation_mass") f.shortlist.min_activation_mass = as_double(name, v);
      else if (name == "shortlist.bottom_percent_drop") f.shortlist.bottom_percent_drop = as_double(name, v);
      else if (name == "shortlist.shortlist_size") f.shortlist.shortlist_size = as_count(name, v);
      else if (name == "shortlist.enrichment_epsilon") f.shortlist.enrichment_epsilon = as_double(name, v);
      else if (name == "weights.enrichment") f.shortlist.weights.enrichment = as_double(name, v);
      else if (name == "weights.localization") f.shortlist.weights.localization = as_double(name, v);
      else if (name == "weights.synergy") f.shortlist.weights.synergy = as_double(name, v);
      else if (name == "thresholds.quantile") f.shortlist.thresholds.quantile = as_double(name, v);
      else if (name == "thresholds.min_nonzero") f.shortlist.thresholds.min_nonzero = as_count(name, v);
      else if (name == "thresholds.safeguard_fraction") f.shortlist.thresholds.safeguard_fraction = as_double(name, v);
      else if (name == "packets.evidence_count") f.packets.evidence_count = as_count(name, v);
      else if (name == "packets.duplicate_cosine") f.packets.duplicate_cosine = as_double(name, v);
      else if (name == "adjudication.transport_retries") f.adjudication.transport_retries = as_count(name, v);
      else if (name == "adjudication.max_in_flight") f.adjudication.max_in_flight = as_count(name, v);
      else if (name == "adjudication.domain_profile") f.adjudication.domain_profile = nlohmann::json{{"profile", v}};
      else if (name == "adjudication.url") cfg.adjudicator_url = v;
      else if (name == "adjudication.path") cfg.adjudicator_path = v;
      else throw ConfigError("filter config: unknown key '" + name + "'");
    }
  }
  f.shortlist.validate();
  return cfg;
}

FilterFileConfig load_filter_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open filter config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_filter_config(buf.str());
}

std::string default_filter_config_text() {
  const FilterConfig d;
  std::ostringstream out;
  out.precision(17);
  out << "[shortlist]\n"
      << "min_support_rate = " << d.shortlist.min_support_rate << "\n"
      << "min_activation_mass = " << d.shortlist.min_activation_mass << "\n"
      << "bottom_percent_drop = " << d.shortlist.bottom_percent_drop << "\n"
      << "shortlist_size = " << d.shortlist.shortlist_size << "\n\n"
      << "[weights]\n"
      << "enrichment = " << d.shortlist.weights.enrichment << "\n"
      << "localization = " << d.shortlist.weights.localization << "\n"
      << "synergy = " << d.shortlist.weights.synergy << "\n\n"
      << "[thresholds]\n"
      << "quantile = " << d.shortlist.thresholds.quantile << "\n"
      << "min_nonzero = " << d.shortlist.thresholds.min_nonzero << "\n"
      << "safeguard_fraction = " << d.shortlist.thresholds.safeguard_fraction << "\n\n"
      << "[packets]\n"
      << "evidence_count = " << d.packets.evidence_count << "\n"
      << "duplicate_cosine = " << d.packets.duplicate_cosine << "\n\n"
      << "[adjudication]\n"
      << "transport_retries = " << d.adjudication.transport_retries << "\n"
      << "max_in_flight = " << d.adjudication.max_in_flight << "\n";
  return out.str();
}

}  // namespace forge
