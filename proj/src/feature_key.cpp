#include "forge/feature_key.hpp"

#include <charconv>

#include "forge/errors.hpp"

namespace forge {

std::string_view site_name(Site site) { return site == Site::Source ? "src" : "tgt"; }

Site parse_site(std::string_view name) {
  if (name == "src") return Site::Source;
  if (name == "tgt") return Site::Target;
  throw ValueError("unknown feature site '" + std::string(name) + "'");
}

std::string to_string(FeatureKey key) {
  return std::string(site_name(key.site)) + ":" + std::to_string(key.index);
}

FeatureKey parse_feature_key(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw ValueError("malformed feature id '" + std::string(text) + "'");
  }
  FeatureKey key;
  key.site = parse_site(text.substr(0, colon));
  const auto digits = text.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), key.index);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty()) {
    throw ValueError("malformed feature id '" + std::string(text) + "'");
  }
  return key;
}

}  // namespace forge
