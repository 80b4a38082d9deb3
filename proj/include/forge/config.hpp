#pragma once

#include <filesystem>
#include <string>

#include "forge/filter.hpp"

namespace forge {

/// Filter settings read from a flat TOML file: [section] headers with
/// `key = value` lines, numbers, booleans and double-quoted strings. Arrays
/// and inline tables are not supported. Unknown keys raise ConfigError.
///
///   [shortlist]    min_support_rate, min_activation_mass, bottom_percent_drop,
///                  shortlist_size, enrichment_epsilon
///   [weights]      enrichment, localization, synergy
///   [thresholds]   quantile, min_nonzero, safeguard_fraction
///   [packets]      evidence_count, duplicate_cosine
///   [adjudication] transport_retries, max_in_flight, domain_profile, url, path
struct FilterFileConfig {
  FilterConfig filter;
  std::string adjudicator_url;
  std::string adjudicator_path = "/adjudicate";
};

FilterFileConfig parse_filter_config(const std::string& text);
FilterFileConfig load_filter_config(const std::filesystem::path& path);

/// The defaults written out in the same format.
std::string default_filter_config_text();

}  // namespace forge
