// SPDX-License-Identifier: Apache-2.0
#include "lsm/http_adapter.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <thread>

namespace lsm {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

HttpResponse error_response(std::string_view code, std::string message) {
  return {http_status(code), serialize_envelope(ActionResponse::error(code, std::move(message)))};
}

HttpResponse from(const ActionResponse& response) {
  return {response.ok() ? 200 : http_status(response.error().code), serialize_envelope(response)};
}

std::optional<std::string> header(const HttpRequest& request, const std::string& name) {
  for (const auto& [key, value] : request.headers) {
    if (lower(key) == name) return value;
  }
  return std::nullopt;
}

std::string href(const ResourceId& id) { return std::string(kApiPrefix) + "/" + (id.is_root() ? "" : id.str()); }

}  // namespace

int http_status(std::string_view code) {
  static const std::map<std::string_view, int> statuses{
      {errc::bad_payload, 400},  {errc::unauthorized, 401}, {errc::forbidden, 403}, {errc::not_found, 404},
      {errc::invalid_action, 405}, {errc::internal, 500},   {errc::unavailable, 503}};
  auto it = statuses.find(code);
  return it == statuses.end() ? 500 : it->second;
}

HttpAdapter::HttpAdapter(Pipeline& pipeline, HttpAdapterOptions options)
    : pipeline_(pipeline), options_(std::move(options)) {}

HttpResponse HttpAdapter::handle(const HttpRequest& request) const {
  try {
    if (options_.available && !options_.available()) {
      return error_response(errc::unavailable, "the device is not reachable");
    }

    // Without a token table every request acts as the anonymous user.
    std::string user;
    if (options_.tokens.empty() && options_.anonymous_user) {
      user = *options_.anonymous_user;
    } else if (auto auth = header(request, "authorization")) {
      static constexpr std::string_view scheme = "bearer ";
      if (auth->size() <= scheme.size() || lower(auth->substr(0, scheme.size())) != scheme) {
        return error_response(errc::unauthorized, "expected a bearer token");
      }
      auto it = options_.tokens.find(auth->substr(scheme.size()));
      if (it == options_.tokens.end()) return error_response(errc::unauthorized, "unknown token");
      user = it->second;
    } else if (options_.anonymous_user) {
      user = *options_.anonymous_user;
    } else {
      return error_response(errc::unauthorized, "missing bearer token");
    }

    std::string_view path = request.path;
    if (!path.starts_with(kApiPrefix) || (path.size() > kApiPrefix.size() && path[kApiPrefix.size()] != '/')) {
      return error_response(errc::not_found, "no route for '" + request.path + "'");
    }
    path.remove_prefix(kApiPrefix.size());
    if (path.starts_with('/')) path.remove_prefix(1);
    if (path.ends_with('/')) path.remove_suffix(1);
    ResourceId id;
    try {
      if (!path.empty()) id = ResourceId::parse(path);
    } catch (const MalformedId& e) {
      return error_response(errc::not_found, e.what());
    }

    const auto kind = pipeline_.kind_of(id);
    if (!kind) return error_response(errc::not_found, "no resource '" + id.str() + "'");

    ActionRequest action{user, id, Action::Read, {}, std::nullopt, nullptr};
    const std::string body = request.body.empty() ? "{}" : request.body;
    if (request.method == "GET") {
      if (*kind != NodeKind::Variable) return browse(user, id);
      action.action = Action::Read;
    } else if (request.method == "PUT") {
      action.action = Action::Update;
      action.raw_payload = body;
    } else if (request.method == "POST") {
      if (*kind == NodeKind::Variable) {
        return error_response(errc::invalid_action, "POST is not valid on variable '" + id.str() + "'; use PUT");
      }
      action.action = *kind == NodeKind::Function ? Action::OnInvoke : Action::Create;
      action.raw_payload = body;
    } else if (request.method == "DELETE") {
      action.action = Action::Delete;
      if (!request.body.empty()) action.raw_payload = request.body;
    } else {
      return error_response(errc::invalid_action, "method " + request.method + " is not supported");
    }
    return from(pipeline_.dispatch(action));
  } catch (const std::exception& e) {
    return error_response(errc::internal, e.what());
  }
}

HttpResponse HttpAdapter::browse(const std::string& user, const ResourceId& id) const {
  auto result = pipeline_.browse(user, id);
  if (auto* error = std::get_if<ActionError>(&result)) return error_response(error->code, error->message);
  const auto& description = std::get<NodeDescription>(result);
  auto doc = to_json(description);
  doc["href"] = href(id);
  if (doc.contains("children")) {
    for (auto& child : doc["children"]) child["href"] = href(id.child(child["name"].get<std::string>()));
  }
  return {200, canonical_json(doc)};
}

struct HttpServer::Impl {
  Impl(const HttpAdapter& a, std::string h, std::uint16_t p) : adapter(a), host(std::move(h)), port(p) {}
  const HttpAdapter& adapter;
  std::string host;
  std::uint16_t port;
  httplib::Server server;
  std::thread thread;
};

HttpServer::HttpServer(const HttpAdapter& adapter, std::string host, std::uint16_t port)
    : impl_(std::make_unique<Impl>(adapter, std::move(host), port)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    HttpRequest request{req.method, req.path, {}, req.body};
    for (const auto& [key, value] : req.headers) request.headers.emplace(key, value);
    auto response = impl_->adapter.handle(request);
    res.status = response.status;
    res.set_content(response.body, "application/json");
  };
  auto& s = impl_->server;
  // Idle keep-alive connections hold a worker until this expires, which bounds stop().
  s.set_keep_alive_timeout(1);
  s.Get(".*", handler);
  s.Put(".*", handler);
  s.Post(".*", handler);
  s.Delete(".*", handler);
  s.Patch(".*", handler);
  s.Options(".*", handler);
}

HttpServer::~HttpServer() { stop(); }

std::uint16_t HttpServer::start() {
  auto& s = impl_->server;
  if (impl_->port == 0) {
    const int bound = s.bind_to_any_port(impl_->host);
    if (bound < 0) throw std::runtime_error("http: cannot bind " + impl_->host);
    impl_->port = static_cast<std::uint16_t>(bound);
  } else if (!s.bind_to_port(impl_->host, impl_->port)) {
    throw std::runtime_error("http: cannot bind " + impl_->host + ":" + std::to_string(impl_->port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  spdlog::info("http adapter listening on {}:{}", impl_->host, impl_->port);
  return impl_->port;
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace lsm
