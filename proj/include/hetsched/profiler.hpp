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
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hetsched/catalog.hpp"
#include "hetsched/classifiers.hpp"
#include "hetsched/cluster.hpp"
#include "hetsched/executor.hpp"
#include "hetsched/jobspec.hpp"

namespace hetsched {

struct ProfilingRequest {
  std::string tool_id;
  std::map<std::string, std::vector<Json>> alternatives;
  std::size_t max_runs = 1000;
  std::uint64_t seed = 0;
};

ProfilingRequest profiling_request_from_json(const Json& j);
Json to_json(const ProfilingRequest& request);

// Cartesian product of the alternatives, first declared input varying
// slowest. Inputs without alternatives keep their default (or stay unbound
// when optional).
std::vector<Bindings> expand_grid(const ProfilingRequest& request, const ToolDescriptor& descriptor);

enum class FeatureKind { kNumeric, kOneHot };

struct Feature {
  std::string name;   // input id, or "input=value" for one-hot columns
  FeatureKind kind = FeatureKind::kNumeric;
  std::string input_id;
  std::string category;  // one-hot only

  bool operator==(const Feature&) const = default;
};

// Maps bindings to a fixed-length real vector. Self-contained: carries the
// input defaults so prediction needs no tool descriptor.
struct FeatureSchema {
  std::vector<Feature> features;
  std::map<std::string, Json> defaults;

  std::size_t size() const { return features.size(); }
  Json to_json() const;
  static FeatureSchema from_json(const Json& j);
  bool operator==(const FeatureSchema&) const = default;
};

// Numeric columns for int/float/boolean/File inputs, one-hot blocks for
// enum and string inputs over the values observed in the grid (sorted).
// Inputs never bound and without a default are left out.
FeatureSchema build_feature_schema(const ToolDescriptor& descriptor, const std::vector<Bindings>& grid);

// Unbound inputs fall back to the schema default, then to 0 / an all-zero
// block. Unseen categories produce an all-zero block.
std::vector<double> extract_features(const Bindings& bindings, const FeatureSchema& schema);

struct ProfileSample {
  std::string run_id;
  Bindings bindings;
  std::vector<double> features;
  RunResult consumption;
  bool failed = false;
  std::string error;  // runner error message, when the runner threw
  std::optional<std::string> label;
};

Json to_json(const ProfileSample& sample);
ProfileSample profile_sample_from_json(const Json& j);

constexpr double kDefaultHeadroom = 1.1;

// Demand used for labeling: headroom x (peak memory, one core, output bytes).
ResourceVector labeling_demand(const RunResult& consumption, double headroom = kDefaultHeadroom);

// Cheapest class (by cost_rank) whose capacity covers the labeling demand.
std::optional<std::string> cheapest_sufficient_class(const RunResult& consumption,
                                                     const std::vector<NodeClass>& classes,
                                                     double headroom = kDefaultHeadroom);

// Labels successful samples; failed samples are skipped and samples no class
// can hold are dropped with a warning. Throws kUnlabelable when nothing
// remains.
std::vector<ProfileSample> label_samples(const std::vector<ProfileSample>& samples,
                                         const std::vector<NodeClass>& classes,
                                         double headroom = kDefaultHeadroom,
                                         std::vector<std::string>* warnings = nullptr);

using SampleRunner =
    std::function<RunResult(const JobSpec& job, const std::string& run_id, std::uint64_t seed)>;
using ProgressCallback = std::function<void(std::size_t done, std::size_t total)>;

// One sample per binding, in grid order whatever the completion order. A
// non-zero exit status or a runner exception marks the sample failed.
std::vector<ProfileSample> collect_samples(const std::string& tool_id, const std::vector<Bindings>& grid,
                                           const FeatureSchema& schema, const SampleRunner& runner,
                                           std::uint64_t seed, std::size_t parallelism = 1,
                                           const ProgressCallback& progress = {});

constexpr std::size_t kMinTrainingSamples = 10;

struct ExecutionProfile {
  std::string tool_id;
  FeatureSchema schema;
  ml::Standardizer standardizer;
  ml::ModelConfig config;
  ml::ModelParams model;
  double cv_accuracy = 0.0;
  bool degenerate = false;
  double created_at = 0.0;
  std::size_t sample_count = 0;
  std::vector<ml::GridScore> grid_scores;

  std::string predict(const Bindings& bindings) const;

  Json to_json() const;
  // Validates schema / standardizer / model dimensions (kFeatureMismatch).
  static ExecutionProfile from_json(const Json& j);
};

ExecutionProfile train_profile(const std::string& tool_id, const FeatureSchema& schema,
                               const std::vector<ProfileSample>& labeled, std::uint64_t seed,
                               double created_at = 0.0);

struct ProfilingOptions {
  double headroom = kDefaultHeadroom;
  std::size_t parallelism = 1;
  ProgressCallback progress;
};

struct ProfilingOutcome {
  ExecutionProfile profile;
  std::vector<ProfileSample> samples;  // every run, failures included
  std::vector<std::string> warnings;
};

// expand_grid -> collect_samples -> label_samples -> train_profile.
ProfilingOutcome profile_tool(const ProfilingRequest& request, const ToolDescriptor& descriptor,
                              const std::vector<NodeClass>& classes, const SampleRunner& runner,
                              const ProfilingOptions& options = {});

// Profiles under <state_dir>/profiles/<tool>.json, samples alongside as
// <tool>.samples.jsonl. Without a state directory the store is memory-only.
class ProfileStore {
 public:
  ProfileStore() = default;
  explicit ProfileStore(std::filesystem::path state_dir);

  void save(const ExecutionProfile& profile, const std::vector<ProfileSample>& samples = {});
  // Samples collected ahead of training.
  void save_samples(const std::string& tool_id, const std::vector<ProfileSample>& samples);
  // Re-read from disk when the file changed since it was cached.
  std::optional<ExecutionProfile> find(const std::string& tool_id) const;
  std::vector<ProfileSample> samples(const std::string& tool_id) const;
  std::vector<std::string> tool_ids() const;

 private:
  std::optional<std::filesystem::path> dir_;
  std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();  // heap-held so the store stays movable
  mutable std::map<std::string, ExecutionProfile> cache_;
  mutable std::map<std::string, std::filesystem::file_time_type> cache_mtime_;
  std::map<std::string, std::vector<ProfileSample>> memory_samples_;
};

}  // namespace hetsched
