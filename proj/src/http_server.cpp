/*
 * hetsched
 * Copyright (c) The hetsched Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "hetsched/service.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose `_res` macro breaks Eigen headers.
#include <httplib.h>

#include "hetsched/error.hpp"

namespace hetsched {

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit Impl(Service& s) : service(s) {}

  void dispatch(const httplib::Request& req, httplib::Response& res) {
    ApiRequest api{req.method, req.path, {}, req.body};
    for (const auto& [k, v] : req.params) api.query.emplace(k, v);
    ApiResponse out = service.handle(api);
    res.status = out.status;
    if (out.file) {
      try {
        res.set_content(read_file(*out.file), "application/octet-stream");
      } catch (const std::exception& e) {
        ApiResponse err = error_response(500, errc_name(Errc::kIo), e.what());
        res.status = err.status;
        res.set_content(err.body.dump(), "application/json");
      }
      return;
    }
    res.set_content(out.body.dump(), "application/json");
  }
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) { impl_->dispatch(req, res); };
  impl_->server.Get(".*", handler);
  impl_->server.Post(".*", handler);
  impl_->server.Put(".*", handler);
  impl_->server.Delete(".*", handler);
  impl_->server.Patch(".*", handler);
  impl_->server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    ApiResponse err = error_response(res.status, "not-found", "no route for " + req.method + " " + req.path);
    res.set_content(err.body.dump(), "application/json");
  });
  if (service.config().ui_dir) impl_->server.set_mount_point("/ui", service.config().ui_dir->string());
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  impl_->port = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (impl_->port < 0) throw Error(Errc::kIo, "cannot bind " + host + ":" + std::to_string(port));
  return impl_->port;
}

void HttpServer::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void HttpServer::listen_blocking() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace hetsched
