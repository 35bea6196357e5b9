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
#include <optional>
#include <string>
#include <vector>

#include "hetsched/catalog.hpp"
#include "hetsched/tasks.hpp"

namespace hetsched {

inline constexpr const char* kCrateContext = "https://w3id.org/ro/crate/1.1/context";
inline constexpr const char* kCrateProfile = "https://w3id.org/ro/crate/1.1";
inline constexpr const char* kCrateMetadataFile = "ro-crate-metadata.json";

struct CrateOptions {
  std::optional<std::string> doi;     // publication to cite, e.g. 10.5281/zenodo.123
  std::optional<std::string> author;  // person name
};

struct CratePayload {
  std::filesystem::path source;  // file copied into the crate
  std::string dest;              // crate-relative path
  std::uint64_t size_bytes = 0;
};

struct ExperimentPackage {
  std::string task_id;
  Json graph = Json::array();  // flattened JSON-LD entities
  std::vector<CratePayload> payload;
  std::string parameters;  // contents of parameters.json

  // {"@context": ..., "@graph": graph}
  Json metadata() const;
  std::string metadata_text() const;  // 2-space indent, trailing newline
};

// Throws kTaskNotComplete unless the task is COMPLETE and kMissingPayload when
// an input or output file is absent.
ExperimentPackage build_crate(const TaskRecord& task, const ToolDescriptor& descriptor,
                              const CrateOptions& options = {});

// Writes the metadata, parameters.json and copies of the payload. When
// state_dir is given a second copy lands in <state_dir>/crates/<task_id>/.
// Returns the crate-relative paths written. Throws kMissingPayload when a
// payload file vanished since build_crate, kIo on write failure.
std::vector<std::string> write_crate(const ExperimentPackage& package, const std::filesystem::path& directory,
                                     const std::optional<std::filesystem::path>& state_dir = {});

struct CrateValidation {
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
  Json to_json() const;
};

CrateValidation validate_crate(const std::filesystem::path& directory);

}  // namespace hetsched
