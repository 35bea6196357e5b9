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

#include "mock_repository.hpp"

#include "hetsched/repo.hpp"

namespace hetsched::testing {

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"status", status}, {"message", message}});
}

}  // namespace

MockRepository::MockRepository(std::string token) : token_(std::move(token)) {
  server_.Get(R"(/api/records/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu_);
    ++get_requests_;
    if (fail_gets_ > 0) {
      --fail_gets_;
      return send_error(res, fail_status_, "injected failure");
    }
    auto it = records_.find(req.matches[1]);
    if (it == records_.end()) return send_error(res, 404, "record not found");
    send_json(res, 200, record_json(it->first, it->second));
  });

  server_.Get(R"(/api/records/([^/]+)/files/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    std::unique_lock lock(mu_);
    ++get_requests_;
    if (fail_gets_ > 0) {
      --fail_gets_;
      return send_error(res, fail_status_, "injected failure");
    }
    auto rec = records_.find(req.matches[1]);
    if (rec == records_.end()) return send_error(res, 404, "record not found");
    auto file = rec->second.files.find(req.matches[2]);
    if (file == rec->second.files.end()) return send_error(res, 404, "file not found");
    auto bytes = std::make_shared<std::string>(file->second);
    if (corrupt_ && !bytes->empty()) (*bytes)[0] = static_cast<char>((*bytes)[0] ^ 0x20);
    bool truncate = truncate_ > 0;
    if (truncate) --truncate_;
    lock.unlock();
    res.status = 200;
    res.set_content_provider(
        bytes->size(), "application/octet-stream",
        [bytes, truncate](std::size_t offset, std::size_t length, httplib::DataSink& sink) {
          std::size_t half = bytes->size() / 2;
          if (truncate && offset >= half) return false;  // drop the connection mid-stream
          std::size_t end = truncate ? std::min(offset + length, half) : offset + length;
          sink.write(bytes->data() + offset, end - offset);
          return true;
        });
  });

  server_.Post("/api/deposit/depositions", [this](const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req)) return send_error(res, 401, "missing or invalid access token");
    Json body;
    try {
      body = Json::parse(req.body.empty() ? "{}" : req.body);
    } catch (const std::exception&) {
      return send_error(res, 400, "body is not JSON");
    }
    std::lock_guard lock(mu_);
    Deposit d;
    d.id = std::to_string(next_deposit_++);
    d.metadata = body.value("metadata", Json::object());
    send_json(res, 201, deposit_json(d));
    deposits_[d.id] = std::move(d);
  });

  server_.Put(R"(/api/files/bucket-([^/]+)/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req)) return send_error(res, 401, "missing or invalid access token");
    std::lock_guard lock(mu_);
    auto it = deposits_.find(req.matches[1]);
    if (it == deposits_.end()) return send_error(res, 404, "bucket not found");
    if (it->second.published) return send_error(res, 400, "deposit already published");
    std::string name = req.matches[2];
    it->second.files[name] = req.body;
    send_json(res, 201, {{"key", name}, {"size", req.body.size()}, {"checksum", "md5:" + md5_hex(req.body)}});
  });

  server_.Post(R"(/api/deposit/depositions/([^/]+)/actions/publish)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 if (!authorized(req)) return send_error(res, 401, "missing or invalid access token");
                 std::lock_guard lock(mu_);
                 auto it = deposits_.find(req.matches[1]);
                 if (it == deposits_.end()) return send_error(res, 404, "deposit not found");
                 Deposit& d = it->second;
                 if (d.files.empty()) return send_error(res, 400, "deposit has no files");
                 if (!d.published) {
                   d.published = true;
                   records_[d.id] = {d.metadata.value("title", ""), d.files, false};
                 }
                 send_json(res, 202, deposit_json(d));
               });

  port_ = server_.bind_to_any_port("127.0.0.1");
  thread_ = std::thread([this] { server_.listen_after_bind(); });
  server_.wait_until_ready();
}

MockRepository::~MockRepository() {
  server_.stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockRepository::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

void MockRepository::add_record(const std::string& id, const std::string& title,
                                const std::map<std::string, std::string>& files) {
  std::lock_guard lock(mu_);
  records_[id] = {title, files, false};
}

void MockRepository::fail_next_gets(int count, int status) {
  std::lock_guard lock(mu_);
  fail_gets_ = count;
  fail_status_ = status;
}

void MockRepository::truncate_downloads(int count) {
  std::lock_guard lock(mu_);
  truncate_ = count;
}

void MockRepository::corrupt_downloads(bool on) {
  std::lock_guard lock(mu_);
  corrupt_ = on;
}

void MockRepository::break_record_body(const std::string& id) {
  std::lock_guard lock(mu_);
  records_[id].broken = true;
}

int MockRepository::get_requests() const {
  std::lock_guard lock(mu_);
  return get_requests_;
}

bool MockRepository::authorized(const httplib::Request& req) const {
  return req.get_header_value("Authorization") == "Bearer " + token_;
}

Json MockRepository::deposit_json(const Deposit& d) const {
  Json files = Json::array();
  for (const auto& [name, bytes] : d.files) files.push_back({{"key", name}, {"size", bytes.size()}});
  Json j{{"id", std::stoi(d.id)},
         {"submitted", d.published},
         {"state", d.published ? "done" : "unsubmitted"},
         {"metadata", d.metadata},
         {"files", files},
         {"links", {{"bucket", base_url() + "/api/files/bucket-" + d.id}}}};
  if (d.published) j["doi"] = "10.5072/mock." + d.id;
  return j;
}

Json MockRepository::record_json(const std::string& id, const Record& r) const {
  Json j{{"id", id}, {"metadata", {{"title", r.title}}}};
  if (r.broken) return j;
  Json files = Json::array();
  for (const auto& [name, bytes] : r.files) {
    files.push_back({{"key", name},
                     {"size", bytes.size()},
                     {"checksum", "md5:" + md5_hex(bytes)},
                     {"links", {{"self", base_url() + "/api/records/" + id + "/files/" + name}}}});
  }
  j["files"] = files;
  return j;
}

}  // namespace hetsched::testing
