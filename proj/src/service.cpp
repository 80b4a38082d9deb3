#include "forge/service.hpp"

#include <algorithm>
#include <mutex>
#include <set>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "forge/errors.hpp"
#include "forge/text.hpp"
#include "forge/workspace.hpp"

namespace forge {

using json = nlohmann::json;

std::string MechQuery::cache_key() const {
  auto ex = exclude;
  std::sort(ex.begin(), ex.end());
  std::string key = unit + "|" + std::string(gate_mode_name(gate_mode)) + "|" + std::to_string(cap) + "|" +
                    std::string(caption_mode_name(caption_mode));
  for (const auto& e : ex) key += "|" + e;
  return key;
}

GraphService::GraphService(std::shared_ptr<const GraphBundle> bundle) : bundle_(std::move(bundle)) {
  if (!bundle_) throw PreconditionError("graph service needs a bundle");
}

std::size_t GraphService::cache_size() const {
  std::shared_lock lock(cache_mutex_);
  return cache_.size();
}

std::string GraphService::mechanism_view(const MechQuery& q) const {
  const auto key = q.cache_key();
  {
    std::shared_lock lock(cache_mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  MechConfig mc;
  mc.gate_mode = q.gate_mode;
  auto graph = build_dynamic_graph(q.unit, bundle_->mechanism.inputs(), mc);
  auto caps = bundle_->captions.find(q.caption_mode);
  if (caps == bundle_->captions.end()) throw NotFoundError("bundle has no captions for this mode");
  attach_captions(graph, caps->second, q.caption_mode);
  CompressConfig cc;
  cc.cap = q.cap;
  cc.exclude = q.exclude;
  auto body = json_text(compress_mechanism(graph, bundle_->tree_index, cc).to_json());
  std::unique_lock lock(cache_mutex_);
  return cache_.emplace(key, std::move(body)).first->second;
}

namespace {

ServiceResponse error(int status, const std::string& msg) { return {status, json_text({{"error", msg}})}; }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    auto item = text::trim(std::string_view(s).substr(start, end - start));
    if (!item.empty()) out.push_back(item);
    start = end + 1;
  }
  return out;
}

std::string param(const std::multimap<std::string, std::string>& q, const std::string& key, std::string def = {}) {
  auto it = q.find(key);
  return it == q.end() ? def : it->second;
}

std::vector<std::string> list_param(const std::multimap<std::string, std::string>& q, const std::string& key) {
  std::vector<std::string> out;
  auto [lo, hi] = q.equal_range(key);
  for (auto it = lo; it != hi; ++it) {
    for (auto& v : split_list(it->second)) out.push_back(std::move(v));
  }
  return out;
}

}  // namespace

ServiceResponse GraphService::handle(const std::string& path,
                                     const std::multimap<std::string, std::string>& query) const {
  const auto& b = *bundle_;
  auto tail = [&](const std::string& prefix) -> std::optional<std::string> {
    if (path.rfind(prefix, 0) != 0 || path.size() == prefix.size()) return std::nullopt;
    auto rest = path.substr(prefix.size());
    if (rest.find('/') != std::string::npos) return std::nullopt;
    return rest;
  };
  try {
    if (path == "/universe") return {200, json_text(b.universe)};
    if (path == "/tree") return {200, json_text(b.tree)};
    if (path == "/layout") return {200, json_text(b.layout)};
    if (path == "/metrics") return {200, json_text(b.metrics)};
    if (auto g = tail("/graph/")) {
      auto it = b.graphs.find(*g);
      if (it == b.graphs.end()) return error(404, "no co-occurrence graph at granularity '" + *g + "'");
      return {200, json_text(it->second)};
    }
    if (auto g = tail("/labels/")) {
      auto it = b.labels.find(*g);
      if (it == b.labels.end()) return error(404, "no labels for graph '" + *g + "'");
      return {200, json_text(it->second)};
    }
    if (path == "/slice") {
      const auto ids = list_param(query, "nodes");
      if (ids.empty()) return error(400, "slice needs ?nodes=");
      const auto& tree = b.tree_index;
      json groups = json::array();
      for (const auto& id : ids) {
        const auto& n = tree.node(tree.index_of(id));
        json leaves = json::array();
        for (auto k : n.leaves) leaves.push_back(to_string(k));
        groups.push_back({{"id", n.id}, {"label", n.label}, {"leaves", std::move(leaves)}});
      }
      const auto keys = tree.slice(ids);
      json leaves = json::array();
      for (auto k : keys) leaves.push_back(to_string(k));
      json edges = json::array();
      if (auto it = b.graphs.find("sentence"); it != b.graphs.end()) {
        std::set<std::string> in;
        for (auto k : keys) in.insert(to_string(k));
        for (const auto& e : it->second.at("edges")) {
          if (in.count(e.at("source").get<std::string>()) && in.count(e.at("target").get<std::string>())) {
            edges.push_back(e);
          }
        }
      }
      return {200, json_text({{"kind", "slice"}, {"groups", groups}, {"leaves", leaves}, {"edges", edges}})};
    }
    if (auto unit = tail("/mech/")) {
      MechQuery q;
      q.unit = *unit;
      const auto cap = param(query, "cap", "64");
      try {
        std::size_t used = 0;
        const long v = std::stol(cap, &used);
        if (used != cap.size() || v < 0) throw std::invalid_argument(cap);
        q.cap = static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        return error(400, "cap must be a nonnegative integer");
      }
      q.gate_mode = parse_gate_mode(param(query, "mode", "positive"));
      q.caption_mode = parse_caption_mode(param(query, "caption", "top"));
      q.exclude = list_param(query, "exclude");
      return {200, mechanism_view(q)};
    }
    return error(404, "unknown endpoint " + path);
  } catch (const NotFoundError& e) {
    return error(404, e.what());
  } catch (const ConfigError& e) {
    return error(400, e.what());
  } catch (const ForgeError& e) {
    return error(400, e.what());
  }
}

void serve_bundle(std::shared_ptr<const GraphBundle> bundle, const std::string& host, int port) {
  auto service = std::make_shared<GraphService>(std::move(bundle));
  httplib::Server server;
  server.Get(R"(/.*)", [service](const httplib::Request& req, httplib::Response& res) {
    std::multimap<std::string, std::string> q(req.params.begin(), req.params.end());
    const auto r = service->handle(req.path, q);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body, "application/json");
  });
  spdlog::info("serving on http://{}:{}", host, port);
  if (!server.listen(host, port)) throw TransportError("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace forge
