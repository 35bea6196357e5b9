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
#include <mutex>
#include <random>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace hetsched {

// Insertion-ordered so mapping order from YAML and JSON documents (CWL
// declaration order) survives parsing.
using Json = nlohmann::ordered_json;

// Parses a YAML or JSON document into a JSON value. Plain YAML scalars are
// typed (null, bool, int, float, string); quoted scalars stay strings.
Json load_document(std::string_view text);

std::string read_file(const std::filesystem::path& path);

// Writes via a temporary sibling and rename so readers never see a torn file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Seconds since the Unix epoch, wall clock.
double now_seconds();

// RFC 3339 UTC with millisecond precision, e.g. 2024-01-02T03:04:05.678Z.
std::string format_rfc3339(double epoch_seconds);
double parse_rfc3339(std::string_view text);

// Shortest round-trip decimal for a double ("5", "0.1", "1e+30").
std::string format_number(double value);

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

// SplitMix64 generator. Output sequence is fixed by the seed on every platform.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();

  // Standard normal via the Box-Muller transform. Each call consumes two
  // outputs and returns the cosine branch; the sine branch is cached for
  // the following call.
  double normal();

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Lexicographically time-sortable 26-character identifiers (Crockford base32,
// 48-bit millisecond timestamp followed by 80 bits of entropy). Identifiers
// minted within the same millisecond increment the entropy part so ordering
// follows creation order.
class UlidGenerator {
 public:
  UlidGenerator();
  explicit UlidGenerator(std::uint64_t seed);

  std::string next(double epoch_seconds);

 private:
  std::mutex mu_;
  std::mt19937_64 rng_;
  std::uint64_t last_ms_ = 0;
  std::uint64_t hi_ = 0;  // upper 16 bits of entropy
  std::uint64_t lo_ = 0;  // lower 64 bits of entropy
};

}  // namespace hetsched
