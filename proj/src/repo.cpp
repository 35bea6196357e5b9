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

#include "hetsched/repo.hpp"

#include <algorithm>
#include <fstream>
#include <memory>
#include <random>
#include <regex>
#include <set>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>

#include "hetsched/error.hpp"

namespace hetsched {

namespace fs = std::filesystem;

namespace {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;    // starts with '/' or is empty
};

Url split_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/?#]+)(.*)$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw Error(Errc::kInvalidArgument, "not an absolute http(s) URL: " + url);
  std::string path = m[2];
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {m[1], path};
}

class Md5 {
 public:
  Md5() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_md5(), nullptr) != 1) {
      throw Error(Errc::kIo, "cannot initialise md5 digest");
    }
  }
  void update(const void* data, std::size_t len) { EVP_DigestUpdate(ctx_.get(), data, len); }
  std::string hex() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), digest, &len);
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += digits[digest[i] >> 4];
      out += digits[digest[i] & 15];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX*)> ctx_;
};

std::unique_ptr<httplib::Client> make_client(const std::string& origin, double timeout) {
  auto cli = std::make_unique<httplib::Client>(origin);
  auto secs = static_cast<time_t>(timeout);
  auto usecs = static_cast<time_t>((timeout - static_cast<double>(secs)) * 1e6);
  cli->set_connection_timeout(secs, usecs);
  cli->set_read_timeout(secs, usecs);
  cli->set_write_timeout(secs, usecs);
  cli->set_follow_location(true);
  return cli;
}

std::string server_message(const httplib::Response& res) {
  try {
    Json body = Json::parse(res.body);
    if (body.contains("message") && body["message"].is_string()) return body["message"].get<std::string>();
  } catch (const std::exception&) {
  }
  return res.body.substr(0, 200);
}

[[noreturn]] void throw_status(const httplib::Response& res, const std::string& what) {
  std::string msg = what + ": HTTP " + std::to_string(res.status) + " " + server_message(res);
  if (res.status == 401 || res.status == 403) throw Error(Errc::kAuth, msg);
  throw Error(Errc::kRepository, msg);
}

Json parse_body(const httplib::Response& res, const std::string& what) {
  try {
    return Json::parse(res.body);
  } catch (const std::exception& e) {
    throw Error(Errc::kProtocol, what + ": response is not JSON");
  }
}

std::string id_string(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

DepositHandle parse_deposit(const Json& j, const std::string& what) {
  try {
    DepositHandle h;
    h.deposit_id = id_string(j.at("id"));
    bool submitted = j.value("submitted", false) || j.value("state", "") == "done";
    h.state = submitted ? DepositState::kPublished : DepositState::kDraft;
    if (j.contains("doi") && j["doi"].is_string() && !j["doi"].get<std::string>().empty()) {
      h.doi = j["doi"].get<std::string>();
    }
    if (j.contains("links") && j["links"].contains("bucket")) h.bucket_url = j["links"]["bucket"].get<std::string>();
    for (const auto& f : j.value("files", Json::array())) {
      h.files.push_back(f.contains("key") ? f["key"].get<std::string>() : f.value("filename", ""));
    }
    if (h.state == DepositState::kPublished && !h.doi) throw Error(Errc::kProtocol, what + ": published without a DOI");
    if (h.state == DepositState::kDraft) h.doi.reset();
    return h;
  } catch (const Json::exception& e) {
    throw Error(Errc::kProtocol, what + ": malformed deposition: " + e.what());
  }
}

std::string auth_value(const RepositoryConfig& c) { return c.access_token ? "Bearer " + *c.access_token : ""; }

httplib::Headers auth_headers(const RepositoryConfig& c) {
  httplib::Headers h{{"Accept", "application/json"}};
  if (c.access_token) h.emplace("Authorization", auth_value(c));
  return h;
}

}  // namespace

void validate(const RepositoryConfig& config) { split_url(config.base_url); }

const RecordFile* RecordMetadata::find_file(std::string_view name) const {
  for (const auto& f : files) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

Json RecordMetadata::to_json() const {
  Json fs = Json::array();
  for (const auto& f : files) {
    fs.push_back({{"name", f.name}, {"size", f.size_bytes}, {"checksum", f.checksum}, {"download_url", f.download_url}});
  }
  return {{"record_id", record_id}, {"title", title}, {"files", fs}};
}

Json DepositHandle::to_json() const {
  return {{"deposit_id", deposit_id},
          {"state", state == DepositState::kPublished ? "published" : "draft"},
          {"doi", doi ? Json(*doi) : Json(nullptr)},
          {"bucket_url", bucket_url},
          {"files", files}};
}

std::string md5_hex(std::string_view bytes) {
  Md5 md5;
  md5.update(bytes.data(), bytes.size());
  return md5.hex();
}

std::string md5_file_hex(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot read " + path.string());
  Md5 md5;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) md5.update(buf, static_cast<std::size_t>(in.gcount()));
  return md5.hex();
}

RepositoryClient::RepositoryClient(RepositoryConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleep_(std::move(sleeper)) {
  validate(config_);
  if (!sleep_) sleep_ = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
}

RecordMetadata RepositoryClient::fetch_record(const std::string& record_id) const {
  Url base = split_url(config_.base_url);
  auto cli = make_client(base.origin, config_.timeout_seconds);
  const std::string what = "fetch record " + record_id;
  httplib::Result res;
  for (std::size_t attempt = 0;; ++attempt) {
    res = cli->Get(base.path + "/api/records/" + record_id, auth_headers(config_));
    bool retryable = !res || res->status >= 500;
    if (!retryable || attempt == config_.retry_backoff.size()) break;
    sleep_(config_.retry_backoff[attempt]);
  }
  if (!res) throw Error(Errc::kNetwork, what + ": " + httplib::to_string(res.error()));
  if (res->status == 404) throw Error(Errc::kRecordNotFound, "record " + record_id + " not found");
  if (res->status < 200 || res->status >= 300) throw_status(*res, what);

  Json body = parse_body(*res, what);
  if (!body.is_object() || !body.contains("files") || !body["files"].is_array()) {
    throw Error(Errc::kProtocol, what + ": response has no files array");
  }
  RecordMetadata rec;
  try {
    rec.record_id = body.contains("id") ? id_string(body["id"]) : record_id;
    if (body.contains("metadata")) rec.title = body["metadata"].value("title", "");
    std::set<std::string> names;
    for (const auto& f : body["files"]) {
      RecordFile rf;
      rf.name = f.contains("key") ? f.at("key").get<std::string>() : f.at("filename").get<std::string>();
      rf.size_bytes = f.value("size", std::uint64_t{0});
      rf.checksum = f.at("checksum").get<std::string>();
      rf.download_url = f.at("links").at("self").get<std::string>();
      if (rf.download_url.starts_with("/")) rf.download_url = base.origin + rf.download_url;
      if (!names.insert(rf.name).second) throw Error(Errc::kProtocol, what + ": duplicate file name " + rf.name);
      rec.files.push_back(std::move(rf));
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::kProtocol, what + ": malformed record: " + e.what());
  }
  return rec;
}

fs::path RepositoryClient::download_file(const RecordMetadata& record, const std::string& name,
                                         const fs::path& dest_dir) const {
  const RecordFile* file = record.find_file(name);
  if (file == nullptr) throw Error(Errc::kUnknownFile, "record " + record.record_id + " has no file '" + name + "'");
  if (!file->checksum.starts_with("md5:")) {
    throw Error(Errc::kProtocol, "file '" + name + "' has no md5 checksum (" + file->checksum + ")");
  }
  const std::string expected = file->checksum.substr(4);
  Url url = split_url(file->download_url);
  auto cli = make_client(url.origin, config_.timeout_seconds);
  fs::create_directories(dest_dir);
  const fs::path dest = dest_dir / name;

  std::random_device rd;
  const std::string what = "download " + name;
  for (std::size_t attempt = 0;; ++attempt) {
    fs::path tmp = dest_dir / ("." + name + ".part-" + std::to_string(rd()));
    Md5 md5;
    std::uint64_t received = 0;
    httplib::Result res;
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(Errc::kIo, "cannot write " + tmp.string());
      res = cli->Get(url.path, auth_headers(config_), [&](const char* data, std::size_t len) {
        out.write(data, static_cast<std::streamsize>(len));
        md5.update(data, len);
        received += len;
        return static_cast<bool>(out);
      });
    }
    bool ok = res && res->status >= 200 && res->status < 300 &&
              (file->size_bytes == 0 || received == file->size_bytes);
    if (!ok) {
      fs::remove(tmp);
      bool retryable = !res || res->status >= 500 || (res->status >= 200 && res->status < 300);
      if (retryable && attempt < config_.retry_backoff.size()) {
        sleep_(config_.retry_backoff[attempt]);
        continue;
      }
      if (!res) throw Error(Errc::kNetwork, what + ": " + httplib::to_string(res.error()));
      if (res->status >= 200 && res->status < 300) {
        throw Error(Errc::kNetwork, what + ": received " + std::to_string(received) + " of " +
                                        std::to_string(file->size_bytes) + " bytes");
      }
      if (res->status == 404) throw Error(Errc::kRecordNotFound, what + ": file not found on server");
      throw_status(*res, what);
    }
    std::string actual = md5.hex();
    if (actual != expected) {
      fs::remove(tmp);
      throw Error(Errc::kChecksumMismatch, what + ": md5 " + actual + " does not match " + expected);
    }
    fs::rename(tmp, dest);
    return dest;
  }
}

DepositHandle RepositoryClient::create_deposit(const Json& metadata) const {
  Url base = split_url(config_.base_url);
  auto cli = make_client(base.origin, config_.timeout_seconds);
  auto res = cli->Post(base.path + "/api/deposit/depositions", auth_headers(config_),
                       Json{{"metadata", metadata}}.dump(), "application/json");
  if (!res) throw Error(Errc::kNetwork, "create deposit: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) throw_status(*res, "create deposit");
  return parse_deposit(parse_body(*res, "create deposit"), "create deposit");
}

DepositHandle RepositoryClient::upload_file(const DepositHandle& handle, const fs::path& path) const {
  if (handle.bucket_url.empty()) throw Error(Errc::kInvalidArgument, "deposit has no bucket link");
  if (handle.state == DepositState::kPublished) {
    throw Error(Errc::kInvalidArgument, "deposit " + handle.deposit_id + " is already published");
  }
  std::string bytes = read_file(path);
  std::string name = path.filename().string();
  Url url = split_url(handle.bucket_url);
  auto cli = make_client(url.origin, config_.timeout_seconds);
  const std::string what = "upload " + name;
  auto res = cli->Put(url.path + "/" + name, auth_headers(config_), bytes, "application/octet-stream");
  if (!res) throw Error(Errc::kNetwork, what + ": " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) throw_status(*res, what);
  Json body = parse_body(*res, what);
  if (body.contains("checksum") && body["checksum"].is_string()) {
    std::string expected = "md5:" + md5_hex(bytes);
    if (body["checksum"].get<std::string>() != expected) {
      throw Error(Errc::kChecksumMismatch, what + ": server stored " + body["checksum"].get<std::string>() +
                                               ", expected " + expected);
    }
  }
  DepositHandle out = handle;
  if (std::find(out.files.begin(), out.files.end(), name) == out.files.end()) out.files.push_back(name);
  return out;
}

DepositHandle RepositoryClient::publish(const DepositHandle& handle) const {
  Url base = split_url(config_.base_url);
  auto cli = make_client(base.origin, config_.timeout_seconds);
  const std::string what = "publish deposit " + handle.deposit_id;
  auto res = cli->Post(base.path + "/api/deposit/depositions/" + handle.deposit_id + "/actions/publish",
                       auth_headers(config_), "", "application/json");
  if (!res) throw Error(Errc::kNetwork, what + ": " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) throw_status(*res, what);
  DepositHandle out = parse_deposit(parse_body(*res, what), what);
  if (out.state != DepositState::kPublished) throw Error(Errc::kProtocol, what + ": deposit not published");
  if (out.bucket_url.empty()) out.bucket_url = handle.bucket_url;
  if (out.files.empty()) out.files = handle.files;
  return out;
}

}  // namespace hetsched
