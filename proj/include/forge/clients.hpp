#pragma once

#include <chrono>
#include <memory>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace forge {

/// External decision/text service: adjudicator, summarizer, or relator.
///
/// Requests and replies are JSON documents; the reply is returned raw so the
/// caller can schema-validate it. Implementations must be safe to call from
/// several threads.
class TextClient {
 public:
  virtual ~TextClient() = default;

  /// Provenance tag recorded next to every decision the client makes.
  virtual std::string id() const = 0;

  /// Throws TransportError when the service cannot be reached.
  virtual std::string send(const nlohmann::json& request) = 0;
};

/// POSTs each request as application/json to `base_url` + `path`.
class HttpTextClient final : public TextClient {
 public:
  HttpTextClient(std::string base_url, std::string path,
                 std::chrono::seconds timeout = std::chrono::seconds(60));

  std::string id() const override { return "http:" + base_url_ + path_; }
  std::string send(const nlohmann::json& request) override;

 private:
  std::string base_url_;
  std::string path_;
  std::chrono::seconds timeout_;
};

}  // namespace forge
