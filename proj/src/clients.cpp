#include "forge/clients.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "forge/errors.hpp"

namespace forge {

HttpTextClient::HttpTextClient(std::string base_url, std::string path, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), path_(std::move(path)), timeout_(timeout) {
  if (path_.empty() || path_.front() != '/') path_.insert(path_.begin(), '/');
}

std::string HttpTextClient::send(const nlohmann::json& request) {
  httplib::Client client(base_url_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  auto res = client.Post(path_, request.dump(), "application/json");
  if (!res) {
    throw TransportError("request to " + id() + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status >= 500 || res->status == 429) {
    throw TransportError("request to " + id() + " returned HTTP " + std::to_string(res->status));
  }
  return res->body;
}

}  // namespace forge
