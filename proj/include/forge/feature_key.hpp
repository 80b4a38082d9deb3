#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace forge {

/// Which SAE dictionary a feature belongs to: the transcoder's source site or
/// its target site.
enum class Site : std::uint8_t { Source = 0, Target = 1 };

std::string_view site_name(Site site);
Site parse_site(std::string_view name);

/// Identity of one SAE feature. Ordered by (site, index); this order is the
/// tie-break used everywhere a ranking needs one.
struct FeatureKey {
  Site site = Site::Source;
  std::uint32_t index = 0;

  auto operator<=>(const FeatureKey&) const = default;
};

/// "src:12" / "tgt:7".
std::string to_string(FeatureKey key);
FeatureKey parse_feature_key(std::string_view text);

}  // namespace forge

template <>
struct std::hash<forge::FeatureKey> {
  std::size_t operator()(const forge::FeatureKey& k) const noexcept {
    return (static_cast<std::size_t>(k.site) << 32) ^ k.index;
  }
};
