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

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetsched/util.hpp"

namespace hetsched {

struct RepositoryConfig {
  std::string name;
  std::string base_url;  // absolute http(s) URL
  std::optional<std::string> access_token;
  double timeout_seconds = 30.0;
  // Delays before each retry of an idempotent GET; the size is the retry count.
  std::vector<double> retry_backoff = {0.5, 1.0, 2.0};
};

// Throws kInvalidArgument unless base_url is an absolute http(s) URL.
void validate(const RepositoryConfig& config);

struct RecordFile {
  std::string name;
  std::uint64_t size_bytes = 0;
  std::string checksum;  // "md5:<hex>"
  std::string download_url;
};

struct RecordMetadata {
  std::string record_id;
  std::string title;
  std::vector<RecordFile> files;

  const RecordFile* find_file(std::string_view name) const;
  Json to_json() const;
};

enum class DepositState { kDraft, kPublished };

struct DepositHandle {
  std::string deposit_id;
  DepositState state = DepositState::kDraft;
  std::optional<std::string> doi;  // set iff published
  std::string bucket_url;
  std::vector<std::string> files;

  Json to_json() const;
};

std::string md5_hex(std::string_view bytes);
std::string md5_file_hex(const std::filesystem::path& path);

// Zenodo-style repository client. Stateless between calls.
class RepositoryClient {
 public:
  using Sleeper = std::function<void(double seconds)>;

  explicit RepositoryClient(RepositoryConfig config, Sleeper sleeper = {});

  // kRecordNotFound on 404, kRepository on other non-2xx, kProtocol on a
  // malformed body, kNetwork when the server cannot be reached.
  RecordMetadata fetch_record(const std::string& record_id) const;

  // Streams to a temporary sibling, verifies md5 and renames into
  // <dest_dir>/<name>. The destination is never left partial.
  std::filesystem::path download_file(const RecordMetadata& record, const std::string& name,
                                      const std::filesystem::path& dest_dir) const;

  // Write operations; kAuth on 401/403.
  DepositHandle create_deposit(const Json& metadata) const;
  DepositHandle upload_file(const DepositHandle& handle, const std::filesystem::path& path) const;
  DepositHandle publish(const DepositHandle& handle) const;

  const RepositoryConfig& config() const { return config_; }

 private:
  RepositoryConfig config_;
  Sleeper sleep_;
};

}  // namespace hetsched
