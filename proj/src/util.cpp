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

#include "hetsched/util.hpp"

#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <numbers>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "hetsched/error.hpp"

namespace hetsched {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kParse: return "parse-error";
    case Errc::kInvalidArgument: return "invalid-argument";
    case Errc::kDuplicateId: return "duplicate-id";
    case Errc::kUnknownReference: return "unknown-reference";
    case Errc::kNegativeCapacity: return "negative-capacity";
    case Errc::kDuplicateRank: return "duplicate-cost-rank";
    case Errc::kOverAllocation: return "over-allocation";
    case Errc::kOverRelease: return "over-release";
    case Errc::kUnknownClass: return "unknown-class";
    case Errc::kUnsupportedVersion: return "unsupported-version";
    case Errc::kUnsupportedType: return "unsupported-type";
    case Errc::kMissingField: return "missing-field";
    case Errc::kMissingInput: return "missing-input";
    case Errc::kTypeMismatch: return "type-mismatch";
    case Errc::kUnresolvedSource: return "unresolved-source";
    case Errc::kCycle: return "cycle";
    case Errc::kUnknownTool: return "unknown-tool";
    case Errc::kMissingUpstream: return "missing-upstream";
    case Errc::kMissingModel: return "missing-model";
    case Errc::kSpawnFailure: return "spawn-failure";
    case Errc::kMissingOutput: return "missing-output";
    case Errc::kGridTooLarge: return "grid-too-large";
    case Errc::kUnlabelable: return "all-samples-unlabelable";
    case Errc::kEmptyDataset: return "empty-dataset";
    case Errc::kTooFewSamples: return "too-few-samples";
    case Errc::kNonFiniteLoss: return "non-finite-loss";
    case Errc::kDegenerateData: return "degenerate-data";
    case Errc::kFeatureMismatch: return "feature-dimension-mismatch";
    case Errc::kIllegalTransition: return "illegal-transition";
    case Errc::kNotFound: return "not-found";
    case Errc::kBadToken: return "bad-page-token";
    case Errc::kTaskNotComplete: return "task-not-complete";
    case Errc::kMissingPayload: return "missing-payload";
    case Errc::kIo: return "io-error";
    case Errc::kStorage: return "storage-failure";
    case Errc::kRecordNotFound: return "record-not-found";
    case Errc::kRepository: return "repository-error";
    case Errc::kProtocol: return "protocol-error";
    case Errc::kChecksumMismatch: return "checksum-mismatch";
    case Errc::kNetwork: return "network-error";
    case Errc::kUnknownFile: return "unknown-file";
    case Errc::kAuth: return "auth-error";
    case Errc::kEmptyWindow: return "empty-window";
    case Errc::kUnknownTask: return "unknown-task";
  }
  return "unknown";
}

namespace {

Json yaml_scalar_to_json(const YAML::Node& node) {
  const std::string& text = node.Scalar();
  if (node.Tag() == "!") return text;  // quoted
  if (text.empty() || text == "~" || text == "null" || text == "Null" || text == "NULL") {
    return nullptr;
  }
  if (text == "true" || text == "True" || text == "TRUE") return true;
  if (text == "false" || text == "False" || text == "FALSE") return false;

  std::int64_t as_int = 0;
  auto [iend, iec] = std::from_chars(text.data(), text.data() + text.size(), as_int);
  if (iec == std::errc() && iend == text.data() + text.size()) return as_int;

  double as_double = 0.0;
  const char* begin = text.data();
  if (!text.empty() && text.front() == '+') ++begin;
  auto [dend, dec] = std::from_chars(begin, text.data() + text.size(), as_double);
  if (dec == std::errc() && dend == text.data() + text.size()) return as_double;
  return text;
}

Json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      return yaml_scalar_to_json(node);
    case YAML::NodeType::Sequence: {
      Json out = Json::array();
      for (const auto& item : node) out.push_back(yaml_to_json(item));
      return out;
    }
    case YAML::NodeType::Map: {
      Json out = Json::object();
      for (const auto& kv : node) out[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return out;
    }
  }
  return nullptr;
}

}  // namespace

Json load_document(std::string_view text) {
  std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && (text[first] == '{' || text[first] == '[')) {
    try {
      return Json::parse(text);
    } catch (const Json::parse_error&) {
      // flow-style YAML also starts with a bracket; fall through
    }
  }
  try {
    return yaml_to_json(YAML::Load(std::string(text)));
  } catch (const YAML::Exception& e) {
    throw Error(Errc::kParse, std::string("malformed document: ") + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kIo, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(Errc::kIo, "short write to " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::kIo, "cannot rename " + tmp.string() + ": " + ec.message());
}

double now_seconds() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

std::string format_rfc3339(double epoch_seconds) {
  auto total_ms = static_cast<std::int64_t>(std::llround(epoch_seconds * 1000.0));
  std::time_t secs = static_cast<std::time_t>(total_ms / 1000);
  int millis = static_cast<int>(total_ms % 1000);
  if (millis < 0) {
    millis += 1000;
    secs -= 1;
  }
  std::tm tm{};
  gmtime_r(&secs, &tm);
  std::array<char, 32> buf{};
  std::size_t n = std::strftime(buf.data(), buf.size(), "%Y-%m-%dT%H:%M:%S", &tm);
  std::array<char, 8> frac{};
  std::snprintf(frac.data(), frac.size(), ".%03dZ", millis);
  return std::string(buf.data(), n) + frac.data();
}

double parse_rfc3339(std::string_view text) {
  std::tm tm{};
  std::string copy(text);
  const char* rest = strptime(copy.c_str(), "%Y-%m-%dT%H:%M:%S", &tm);
  if (rest == nullptr) throw Error(Errc::kParse, "bad timestamp: " + copy);
  double fraction = 0.0;
  if (*rest == '.') {
    char* end = nullptr;
    fraction = std::strtod(rest, &end);
    rest = end;
  }
  return static_cast<double>(timegm(&tm)) + fraction;
}

std::string format_number(double value) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), end);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double SplitMix64::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  double radius = std::sqrt(-2.0 * std::log(u1));
  double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

namespace {
constexpr std::string_view kCrockford = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";
}

UlidGenerator::UlidGenerator() : rng_(std::random_device{}()) {}

UlidGenerator::UlidGenerator(std::uint64_t seed) : rng_(seed) {}

std::string UlidGenerator::next(double epoch_seconds) {
  std::lock_guard lock(mu_);
  auto ms = static_cast<std::uint64_t>(std::max(0.0, epoch_seconds * 1000.0));
  if (ms <= last_ms_ && last_ms_ != 0) {
    ms = last_ms_;
    if (++lo_ == 0) ++hi_;
  } else {
    last_ms_ = ms;
    hi_ = rng_() & 0xffffULL;
    lo_ = rng_();
  }
  std::string out(26, '0');
  // 10 characters of timestamp (50 bits, top two always zero)
  for (int i = 9; i >= 0; --i) {
    out[i] = kCrockford[ms & 31];
    ms >>= 5;
  }
  // 16 characters of entropy (80 bits)
  std::uint64_t hi = hi_, lo = lo_;
  for (int i = 25; i >= 10; --i) {
    out[i] = kCrockford[lo & 31];
    lo = (lo >> 5) | ((hi & 31) << 59);
    hi >>= 5;
  }
  return out;
}

}  // namespace hetsched
