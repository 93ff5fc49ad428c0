// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsm/action_pipeline.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace lsm {

struct HttpRequest {
  std::string method;
  std::string path;
  /// Header names are matched case-insensitively.
  std::map<std::string, std::string> headers;
  std::string body;
};

struct HttpResponse {
  int status = 200;
  std::string body;
};

inline constexpr std::string_view kApiPrefix = "/api/v1";

int http_status(std::string_view error_code);

struct HttpAdapterOptions {
  /// Bearer token -> user.
  std::map<std::string, std::string> tokens;
  /// User for requests without an Authorization header; 401 when unset.
  /// With an empty token table it applies to every request.
  std::optional<std::string> anonymous_user;
  /// When set and false, every request gets 503.
  std::function<bool()> available;
};

/// REST mapping of the resource tree:
///   GET variable -> READ, GET object/function -> browse document,
///   PUT variable -> UPDATE with {"value":..}, POST function -> invoke,
///   POST object -> CREATE, DELETE -> DELETE, anything else -> 405.
class HttpAdapter {
 public:
  HttpAdapter(Pipeline& pipeline, HttpAdapterOptions options);

  HttpResponse handle(const HttpRequest& request) const;

 private:
  HttpResponse browse(const std::string& user, const ResourceId& id) const;

  Pipeline& pipeline_;
  HttpAdapterOptions options_;
};

/// HTTP/1.1 server in front of an adapter.
class HttpServer {
 public:
  HttpServer(const HttpAdapter& adapter, std::string host, std::uint16_t port);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  std::uint16_t start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lsm
