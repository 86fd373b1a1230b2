// SPDX-License-Identifier: Apache-2.0
#include "latentrank/http_server.hpp"

#include <httplib.h>

#include <atomic>
#include <thread>

#include "latentrank/error.hpp"

namespace latentrank {

struct HttpServer::Impl {
  explicit Impl(ServiceOptions options) : service(std::move(options)) {}
  SessionService service;
  httplib::Server server;
  std::atomic<bool> stop_requested{false};
  std::atomic<bool> in_listen{false};
};

namespace {

void reply(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

// Empty bodies count as {}; anything unparsable is answered with 400.
bool parse_body(const httplib::Request& req, httplib::Response& res, nlohmann::json& out) {
  if (req.body.empty()) {
    out = nlohmann::json::object();
    return true;
  }
  try {
    out = nlohmann::json::parse(req.body);
    return true;
  } catch (const nlohmann::json::exception& e) {
    reply(res, {400, {{"code", "parse_error"}, {"message", e.what()}}});
    return false;
  }
}

bool flag(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return false;
  const auto v = req.get_param_value(name);
  return v == "1" || v == "true" || v.empty();
}

}  // namespace

HttpServer::HttpServer(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;

  // SO_REUSEADDR only: the library default (SO_REUSEPORT) lets a second
  // server bind a port that is already in use.
  srv.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });

  srv.Post("/sessions", [&svc](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    if (parse_body(req, res, body)) reply(res, svc.create_session(body));
  });
  srv.Get(R"(/sessions/([^/]+)/round)", [&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.get_round(req.matches[1], flag(req, "latents")));
  });
  srv.Post(R"(/sessions/([^/]+)/feedback)",
           [&svc](const httplib::Request& req, httplib::Response& res) {
             nlohmann::json body;
             if (parse_body(req, res, body)) reply(res, svc.submit_feedback(req.matches[1], body));
           });
  srv.Get(R"(/sessions/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.get_session(req.matches[1]));
  });

  srv.Post("/stores", [&svc](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    if (parse_body(req, res, body)) reply(res, svc.create_store(body));
  });
  srv.Get("/stores", [&svc](const httplib::Request&, httplib::Response& res) {
    reply(res, svc.list_stores());
  });
  srv.Get(R"(/stores/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.get_store(req.matches[1]));
  });
  srv.Post(R"(/stores/([^/]+)/select)", [&svc](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    if (parse_body(req, res, body)) reply(res, svc.select(req.matches[1], body));
  });
  srv.Post(R"(/stores/([^/]+)/generate)",
           [&svc](const httplib::Request& req, httplib::Response& res) {
             nlohmann::json body;
             if (parse_body(req, res, body)) reply(res, svc.generate(req.matches[1], body));
           });

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string msg = "unknown error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg = e.what();
    } catch (...) {
    }
    reply(res, {500, {{"code", "internal_error"}, {"message", msg}}});
  });
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty())
      reply(res, {res.status, {{"code", "not_found"}, {"message", "no such route"}}});
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host)
                        : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) fail(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() {
  impl_->in_listen = true;
  const bool ok = impl_->stop_requested || impl_->server.listen_after_bind();
  impl_->in_listen = false;
  if (!ok) fail(ErrorCode::Io, "server stopped with an error");
}

// A stop that lands between bind() and the accept loop would otherwise be lost.
void HttpServer::stop() {
  impl_->stop_requested = true;
  while (impl_->in_listen && !impl_->server.is_running()) std::this_thread::yield();
  if (impl_->server.is_running()) impl_->server.stop();
}

SessionService& HttpServer::service() noexcept { return impl_->service; }

}  // namespace latentrank
