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

#include <fstream>

#include "doctest.h"
#include "hetsched/repo.hpp"
#include "mock_repository.hpp"
#include "test_util.hpp"

using namespace hetsched;
using namespace hetsched::testing;
namespace fs = std::filesystem;

namespace {

const std::string kReads = "ACGTACGTTTGACCA\nGGCATTACA\n";
const std::string kNotes = "sample notes";

RepositoryClient client(const MockRepository& repo, std::optional<std::string> token = {},
                        std::vector<double>* sleeps = nullptr) {
  RepositoryConfig c{"mock", repo.base_url(), std::move(token), 5.0, {0.5, 1.0, 2.0}};
  return RepositoryClient(c, [sleeps](double s) {
    if (sleeps != nullptr) sleeps->push_back(s);
  });
}

}  // namespace

TEST_CASE("md5 matches the RFC 1321 test vectors") {
  CHECK(md5_hex("") == "d41d8cd98f00b204e9800998ecf8427e");
  CHECK(md5_hex("abc") == "900150983cd24fb0d6963f7d28e17f72");
  CHECK(md5_hex("message digest") == "f96b697d7cb7938d525a2f31aaf161d0");
}

TEST_CASE("config validation") {
  CHECK_ERRC(validate(RepositoryConfig{"x", "ftp://host", {}}), Errc::kInvalidArgument);
  CHECK_ERRC(validate(RepositoryConfig{"x", "/relative", {}}), Errc::kInvalidArgument);
  validate(RepositoryConfig{"zenodo", "https://zenodo.org", {}});
}

TEST_CASE("fetch_record") {
  MockRepository repo;
  repo.add_record("7", "Reads", {{"reads.fa", kReads}, {"notes.txt", kNotes}});
  RecordMetadata rec = client(repo).fetch_record("7");
  CHECK(rec.title == "Reads");
  REQUIRE(rec.files.size() == 2);
  const RecordFile* f = rec.find_file("reads.fa");
  REQUIRE(f != nullptr);
  CHECK(f->size_bytes == kReads.size());
  CHECK(f->checksum == "md5:" + md5_hex(kReads));
  CHECK_ERRC(client(repo).fetch_record("404"), Errc::kRecordNotFound);
  repo.break_record_body("7");
  CHECK_ERRC(client(repo).fetch_record("7"), Errc::kProtocol);
}

TEST_CASE("GET retries with exponential backoff") {
  MockRepository repo;
  repo.add_record("1", "r", {{"a.txt", "a"}});
  std::vector<double> sleeps;
  repo.fail_next_gets(2);
  CHECK(client(repo, {}, &sleeps).fetch_record("1").files.size() == 1);
  CHECK(sleeps == std::vector<double>{0.5, 1.0});
  CHECK(repo.get_requests() == 3);

  sleeps.clear();
  repo.fail_next_gets(10);
  CHECK_ERRC(client(repo, {}, &sleeps).fetch_record("1"), Errc::kRepository);
  CHECK(sleeps == std::vector<double>{0.5, 1.0, 2.0});

  repo.fail_next_gets(1, 400);
  sleeps.clear();
  CHECK_ERRC(client(repo, {}, &sleeps).fetch_record("1"), Errc::kRepository);
  CHECK(sleeps.empty());
}

TEST_CASE("download verifies md5 and is atomic") {
  MockRepository repo;
  repo.add_record("7", "Reads", {{"reads.fa", kReads}});
  TempDir dir;
  RecordMetadata rec = client(repo).fetch_record("7");

  fs::path got = client(repo).download_file(rec, "reads.fa", dir.path());
  CHECK(got == dir / "reads.fa");
  CHECK(read_file(got) == kReads);

  CHECK_ERRC(client(repo).download_file(rec, "missing.fa", dir.path()), Errc::kUnknownFile);

  TempDir corrupt_dir;
  repo.corrupt_downloads(true);
  CHECK_ERRC(client(repo).download_file(rec, "reads.fa", corrupt_dir.path()), Errc::kChecksumMismatch);
  CHECK(fs::is_empty(corrupt_dir.path()));
  repo.corrupt_downloads(false);

  TempDir cut_dir;
  repo.truncate_downloads(100);
  CHECK_ERRC(client(repo).download_file(rec, "reads.fa", cut_dir.path()), Errc::kNetwork);
  CHECK(fs::is_empty(cut_dir.path()));

  // One interrupted transfer, then a clean retry.
  TempDir retry_dir;
  repo.truncate_downloads(1);
  std::vector<double> sleeps;
  CHECK(read_file(client(repo, {}, &sleeps).download_file(rec, "reads.fa", retry_dir.path())) == kReads);
  CHECK(sleeps.size() == 1);
}

TEST_CASE("deposit, upload and publish") {
  MockRepository repo;
  TempDir dir;
  std::ofstream(dir / "out.txt") << "result data";
  RepositoryClient c = client(repo, repo.token());

  DepositHandle h = c.create_deposit({{"title", "Outputs"}});
  CHECK(h.state == DepositState::kDraft);
  CHECK_FALSE(h.doi.has_value());
  CHECK_ERRC(c.publish(h), Errc::kRepository);  // nothing uploaded yet

  h = c.upload_file(h, dir / "out.txt");
  CHECK(h.files == std::vector<std::string>{"out.txt"});
  DepositHandle published = c.publish(h);
  CHECK(published.state == DepositState::kPublished);
  CHECK(published.doi == std::optional<std::string>("10.5072/mock.1"));
  CHECK(c.publish(h).doi == published.doi);

  RecordMetadata rec = c.fetch_record(published.deposit_id);
  CHECK(rec.title == "Outputs");
  CHECK(rec.files.at(0).checksum == "md5:" + md5_hex("result data"));

  RepositoryClient anonymous = client(repo);
  CHECK_ERRC(anonymous.create_deposit({{"title", "x"}}), Errc::kAuth);
  CHECK_ERRC(anonymous.upload_file(c.create_deposit({}), dir / "out.txt"), Errc::kAuth);
  CHECK_ERRC(client(repo, "wrong").create_deposit({}), Errc::kAuth);
}

TEST_CASE("unreachable server is a network error") {
  int port;
  {
    MockRepository repo;
    port = std::stoi(repo.base_url().substr(repo.base_url().rfind(':') + 1));
  }
  RepositoryConfig c{"gone", "http://127.0.0.1:" + std::to_string(port), {}, 1.0, {}};
  CHECK_ERRC(RepositoryClient(c).fetch_record("1"), Errc::kNetwork);
}
