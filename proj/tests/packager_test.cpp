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

#include <cstdlib>
#include <fstream>

#include "crate_fixture.hpp"
#include "doctest.h"
#include "hetsched/packager.hpp"
#include "test_util.hpp"

using namespace hetsched;
using namespace hetsched::testing;
namespace fs = std::filesystem;

TEST_CASE("build_crate graph contents") {
  TempDir dir;
  TaskRecord t = fixed_task(dir);
  ExperimentPackage pkg = build_crate(t, wordcount());
  // descriptor, root, action, software, input, parameters.json, output
  CHECK(pkg.graph.size() == 7);
  CHECK(pkg.payload.size() == 2);
  const Json& action = pkg.graph[2];
  CHECK(action["@type"] == "CreateAction");
  CHECK(action["instrument"]["@id"] == "#software-wordcount");
  CHECK(action["object"].size() == 2);
  CHECK(action["result"][0]["@id"] == "outputs/counts.txt");
  CHECK(action["startTime"] == "2023-11-14T22:13:30.000Z");
  CHECK(pkg.graph[3]["identifier"] == "registry.local/wordcount:2.1");
  Json params = Json::parse(pkg.parameters);
  CHECK(params["bindings"]["reads"]["path"] == "inputs/reads.txt");
  CHECK(params["bindings"]["mode"] == "fast");

  t.state = TaskState::kRunning;
  CHECK_ERRC(build_crate(t, wordcount()), Errc::kTaskNotComplete);
  t.state = TaskState::kComplete;
  fs::remove(dir / "data/reads.txt");
  CHECK_ERRC(build_crate(t, wordcount()), Errc::kMissingPayload);
}

TEST_CASE("a DOI becomes a CreativeWork cited by the root") {
  TempDir dir;
  ExperimentPackage pkg = build_crate(fixed_task(dir), wordcount(), {"10.5281/zenodo.123", "Ada Lovelace"});
  const Json* doi = nullptr;
  for (const auto& e : pkg.graph) {
    if (e.value("identifier", "") == "10.5281/zenodo.123") doi = &e;
  }
  REQUIRE(doi != nullptr);
  CHECK(pkg.graph[1]["citation"]["@id"] == (*doi)["@id"]);
  CHECK(pkg.graph[1]["author"]["@id"] == "#author");
  CHECK(pkg.graph.back()["@type"] == "Person");
}

TEST_CASE("write, re-read and validate") {
  TempDir dir;
  TempDir state;
  ExperimentPackage pkg = build_crate(fixed_task(dir), wordcount());
  fs::path crate = dir / "crate";
  std::vector<std::string> manifest = write_crate(pkg, crate, state.path());
  CHECK(manifest == std::vector<std::string>{"inputs/reads.txt", "outputs/counts.txt", "parameters.json",
                                             "ro-crate-metadata.json"});
  Json meta = Json::parse(read_file(crate / "ro-crate-metadata.json"));
  CHECK(meta["@context"] == "https://w3id.org/ro/crate/1.1/context");
  CHECK(read_file(crate / "inputs/reads.txt") == "hello world\n");
  CHECK(validate_crate(crate).ok());
  fs::path stored = state / ("crates/" + pkg.task_id);
  CHECK(validate_crate(stored).ok());
  CHECK(read_file(stored / "ro-crate-metadata.json") == read_file(crate / "ro-crate-metadata.json"));

  std::string first = read_file(crate / "ro-crate-metadata.json");
  write_crate(pkg, crate);
  CHECK(read_file(crate / "ro-crate-metadata.json") == first);

  fs::remove(crate / "outputs/counts.txt");
  CrateValidation v = validate_crate(crate);
  REQUIRE(v.failures.size() == 1);
  CHECK(v.failures[0].find("'outputs/counts.txt'") != std::string::npos);

  write(crate / "inputs/reads.txt", "changed");
  CHECK(validate_crate(crate).failures.size() == 2);
}

TEST_CASE("validation of broken crates") {
  TempDir dir;
  CrateValidation empty = validate_crate(dir.path());
  REQUIRE(empty.failures.size() == 1);
  CHECK(empty.failures[0].find("missing") != std::string::npos);

  write(dir / "ro-crate-metadata.json", R"({"@context": "x", "@graph": [{"@id": "./", "@type": "Dataset"}]})");
  CrateValidation v = validate_crate(dir.path());
  CHECK(v.failures.size() == 3);  // context, descriptor, action
}

TEST_CASE("payload removed between build and write") {
  TempDir dir;
  ExperimentPackage pkg = build_crate(fixed_task(dir), wordcount());
  fs::remove(dir / "work/outputs/counts.txt");
  CHECK_ERRC(write_crate(pkg, dir / "crate"), Errc::kMissingPayload);
}

TEST_CASE("metadata bytes match the golden file") {
  TempDir dir;
  ExperimentPackage pkg = build_crate(fixed_task(dir), wordcount(), {"10.5281/zenodo.123", {}});
  fs::path golden = fs::path(HETSCHED_TEST_DATA_DIR) / "crate_golden.json";
  if (std::getenv("HETSCHED_UPDATE_GOLDEN") != nullptr) write_file_atomic(golden, pkg.metadata_text());
  CHECK(pkg.metadata_text() == read_file(golden));
}
