#include <httplib.h>

#include "steerlm/serve/service.hpp"

namespace steerlm {

using nlohmann::json;

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;

  explicit Impl(Service& s) : service(s) {}

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  // Runs `fn` with the parsed body, mapping errors to status codes.
  template <typename Fn>
  void handle(const httplib::Request& req, httplib::Response& res, bool needs_body, Fn&& fn) {
    try {
      json body = json::object();
      if (needs_body && !req.body.empty()) {
        try {
          body = json::parse(req.body);
        } catch (const json::parse_error& e) {
          reply(res, 400, {{"error", std::string("invalid JSON: ") + e.what()}});
          return;
        }
      }
      reply(res, 200, fn(body));
    } catch (const ApiError& e) {
      reply(res, e.status(), e.body());
    } catch (const std::exception& e) {
      reply(res, 500, {{"error", e.what()}});
    }
  }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, PATCH, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, true, [&](const json& b) { return service.create_session(b); });
    });
    server.Post(R"(/sessions/([^/]+)/turns)", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, true, [&](const json& b) { return service.turn(req.matches[1], b); });
    });
    server.Patch(R"(/sessions/([^/]+)/config)", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, true, [&](const json& b) { return service.patch_config(req.matches[1], b); });
    });
    server.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, false, [&](const json&) { return service.session(req.matches[1]); });
    });
    server.Get("/attributes", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, false, [&](const json&) { return service.attributes(); });
    });
    server.Get("/healthz", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, false, [&](const json&) { return service.healthz(); });
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) reply(res, res.status, {{"error", "not found"}});
    });
  }
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) { impl_->routes(); }

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : impl_->server.bind_to_port(host, port) ? port : -1;
  if (bound < 0) throw std::runtime_error("serve: cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace steerlm
