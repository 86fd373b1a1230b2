// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "latentrank/session_service.hpp"

namespace latentrank {

// JSON-over-HTTP front end for SessionService.
//
//   POST /sessions                     GET  /stores
//   GET  /sessions/{id}/round          GET  /stores/{id}
//   POST /sessions/{id}/feedback       POST /stores
//   GET  /sessions/{id}                POST /stores/{id}/select
//                                      POST /stores/{id}/generate
class HttpServer {
 public:
  explicit HttpServer(ServiceOptions options);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds the socket; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  // Serves until stop(). Blocks.
  void listen();
  void stop();

  SessionService& service() noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace latentrank
