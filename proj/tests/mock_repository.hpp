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

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>

#include "hetsched/util.hpp"

namespace hetsched::testing {

// In-process Zenodo-style repository for offline tests. Records are public;
// write operations require `Bearer <token>`. Published deposits get the DOI
// "10.5072/mock.<id>" and become readable records.
class MockRepository {
 public:
  explicit MockRepository(std::string token = "mock-token");
  ~MockRepository();
  MockRepository(const MockRepository&) = delete;
  MockRepository& operator=(const MockRepository&) = delete;

  std::string base_url() const;
  const std::string& token() const { return token_; }

  void add_record(const std::string& id, const std::string& title, const std::map<std::string, std::string>& files);

  // Failure injection.
  void fail_next_gets(int count, int status = 503);  // next GETs answer with `status`
  void truncate_downloads(int count);                 // next downloads stop half way
  void corrupt_downloads(bool on);                    // flip a byte in every download
  void break_record_body(const std::string& id);      // record JSON without a files array

  int get_requests() const;

 private:
  struct Deposit {
    std::string id;
    bool published = false;
    Json metadata;
    std::map<std::string, std::string> files;
  };
  struct Record {
    std::string title;
    std::map<std::string, std::string> files;
    bool broken = false;
  };

  bool authorized(const httplib::Request& req) const;
  Json deposit_json(const Deposit& d) const;
  Json record_json(const std::string& id, const Record& r) const;

  std::string token_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mu_;
  std::map<std::string, Record> records_;
  std::map<std::string, Deposit> deposits_;
  int next_deposit_ = 1;
  int fail_gets_ = 0;
  int fail_status_ = 503;
  int truncate_ = 0;
  bool corrupt_ = false;
  int get_requests_ = 0;
};

}  // namespace hetsched::testing
