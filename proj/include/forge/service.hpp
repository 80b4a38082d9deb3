#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include "forge/bundle.hpp"
#include "forge/compression.hpp"

namespace forge {

struct ServiceResponse {
  int status = 200;
  std::string body;
};

/// Parameters of an on-demand compressed mechanism view.
struct MechQuery {
  std::string unit;
  GateMode gate_mode = GateMode::Positive;
  CaptionMode caption_mode = CaptionMode::TopFunctional;
  std::size_t cap = 64;
  std::vector<std::string> exclude;

  std::string cache_key() const;
};

/// Read-only JSON API over one immutable bundle.
///
///   GET /universe  /graph/{granularity}  /tree  /slice?nodes=a,b
///   GET /mech/{unit}?cap=&mode=&caption=&exclude=a,b
///   GET /labels/{graph}  /layout  /metrics
///
/// Responses depend only on the bundle and the request. The compressed
/// mechanism cache is the only shared mutable state.
class GraphService {
 public:
  explicit GraphService(std::shared_ptr<const GraphBundle> bundle);

  ServiceResponse handle(const std::string& path, const std::multimap<std::string, std::string>& query) const;

  /// Same bytes as `forge mech` followed by `forge compress`.
  std::string mechanism_view(const MechQuery& query) const;

  std::size_t cache_size() const;

 private:
  std::shared_ptr<const GraphBundle> bundle_;
  mutable std::shared_mutex cache_mutex_;
  mutable std::unordered_map<std::string, std::string> cache_;
};

/// Blocks serving HTTP on host:port until the process is stopped.
void serve_bundle(std::shared_ptr<const GraphBundle> bundle, const std::string& host, int port);

}  // namespace forge
