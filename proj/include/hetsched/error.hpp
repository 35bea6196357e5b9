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

#include <stdexcept>
#include <string>
#include <string_view>

namespace hetsched {

// Error categories raised across the library. HTTP handlers and the CLI map
// these onto status codes and exit codes.
enum class Errc {
  kParse,
  kInvalidArgument,
  kDuplicateId,
  kUnknownReference,
  kNegativeCapacity,
  kDuplicateRank,
  kOverAllocation,
  kOverRelease,
  kUnknownClass,
  kUnsupportedVersion,
  kUnsupportedType,
  kMissingField,
  kMissingInput,
  kTypeMismatch,
  kUnresolvedSource,
  kCycle,
  kUnknownTool,
  kMissingUpstream,
  kMissingModel,
  kSpawnFailure,
  kMissingOutput,
  kGridTooLarge,
  kUnlabelable,
  kEmptyDataset,
  kTooFewSamples,
  kNonFiniteLoss,
  kDegenerateData,
  kFeatureMismatch,
  kIllegalTransition,
  kNotFound,
  kBadToken,
  kTaskNotComplete,
  kMissingPayload,
  kIo,
  kStorage,
  kRecordNotFound,
  kRepository,
  kProtocol,
  kChecksumMismatch,
  kNetwork,
  kUnknownFile,
  kAuth,
  kEmptyWindow,
  kUnknownTask,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Repository errors carry the HTTP status that produced them.
class RepositoryError : public Error {
 public:
  RepositoryError(Errc code, int status, const std::string& message)
      : Error(code, message), status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace hetsched
