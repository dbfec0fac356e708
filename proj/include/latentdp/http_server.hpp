// Copyright 2026 The latentdp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// HTTP API over RunService.
//
//   POST /runs                      create a run from a (partial) config
//   GET  /runs/:id                  run manifest
//   POST /runs/:id/adjust           new OU parameters (partial)
//   POST /runs/:id/unlearn          {method, unlearning_rate, solver}
//   GET  /runs/:id/report           privacy, ACC and SSIM
//   GET  /runs/:id/images/:index    PNG, ?variant=original|transferred|perturbed
//
// Errors are JSON {code, message, stage}.

#include <memory>
#include <string>

// Eigen must come first: httplib pulls in <resolv.h>, whose _res macro
// collides with Eigen parameter names.
#include "latentdp/service.hpp"

#include <httplib.h>

namespace latentdp {

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kDimensionMismatch: return 400;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kFailedPrecondition: return 409;
    case ErrorCode::kNumerical:
    case ErrorCode::kNotConverged: return 422;
    case ErrorCode::kCorrupt:
    case ErrorCode::kInternal: return 500;
  }
  return 500;
}

inline ojson error_body(ErrorCode code, const std::string& message, const std::string& stage = "") {
  return {{"code", to_string(code)}, {"message", message}, {"stage", stage.empty() ? ojson(nullptr) : ojson(stage)}};
}

class HttpServer {
 public:
  explicit HttpServer(std::filesystem::path root) : service_(std::move(root)) { routes(); }

  RunService& service() { return service_; }
  httplib::Server& raw() { return server_; }

  // Binds to a free port when `port` is 0. Returns the bound port.
  int bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw InvalidArgument("cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  void listen_after_bind() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  bool running() const { return server_.is_running(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  static nlohmann::json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    try {
      return nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::parse_error& e) {
      throw InvalidArgument(std::string("request body is not valid JSON: ") + e.what());
    }
  }

  static void reply(httplib::Response& res, int status, const ojson& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <typename Handler>
  static httplib::Server::Handler guarded(Handler h) {
    return [h](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const StageError& e) {
        reply(res, http_status(e.code()), error_body(e.code(), e.what(), e.stage()));
      } catch (const Error& e) {
        reply(res, http_status(e.code()), error_body(e.code(), e.what()));
      } catch (const std::exception& e) {
        reply(res, 500, error_body(ErrorCode::kInternal, e.what()));
      }
    };
  }

  void routes() {
    server_.Post("/runs", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   reply(res, 201, service_.create(run_config_from_json(parse_body(req))));
                 }));
    server_.Get("/runs/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  reply(res, 200, service_.manifest(req.path_params.at("id")));
                }));
    server_.Get("/runs/:id/report", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  reply(res, 200, service_.report(req.path_params.at("id")));
                }));
    server_.Post("/runs/:id/adjust", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   reply(res, 200, service_.adjust(req.path_params.at("id"), parse_body(req)));
                 }));
    server_.Post("/runs/:id/unlearn", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   reply(res, 200, service_.unlearn(req.path_params.at("id"), parse_body(req)));
                 }));
    server_.Get("/runs/:id/images/:index", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string& text = req.path_params.at("index");
                  std::size_t index = 0;
                  std::size_t used = 0;
                  try {
                    index = std::stoul(text, &used);
                  } catch (const std::exception&) {
                    used = 0;
                  }
                  if (used == 0 || used != text.size()) throw InvalidArgument("image index must be a non-negative integer");
                  const std::string variant = req.has_param("variant") ? req.get_param_value("variant") : "original";
                  const std::string png =
                      service_.image_png(req.path_params.at("id"), index, image_variant_from_string(variant));
                  res.status = 200;
                  res.set_content(png, "image/png");
                }));
    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty() && res.status == 404) {
        res.set_content(error_body(ErrorCode::kNotFound, "no such endpoint").dump(), "application/json");
      }
    });
  }

  RunService service_;
  httplib::Server server_;
};

}  // namespace latentdp
