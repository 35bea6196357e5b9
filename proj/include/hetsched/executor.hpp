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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetsched/catalog.hpp"
#include "hetsched/jobspec.hpp"

namespace hetsched {

struct OutputFile {
  std::string id;
  std::string path;
  std::uint64_t size_bytes = 0;

  bool operator==(const OutputFile&) const = default;
};

struct RunResult {
  int exit_status = 0;
  double wall_seconds = 0.0;
  double cpu_seconds = 0.0;
  double peak_mem_mb = 0.0;
  std::vector<OutputFile> output_files;

  bool operator==(const RunResult&) const = default;
};

Json to_json(const RunResult& r);
RunResult run_result_from_json(const Json& j);

// a0 + sum(coeff[f] * feature[f]); features absent from the map count as 0.
struct AffineFunction {
  double intercept = 0.0;
  std::map<std::string, double> coeffs;

  double operator()(const std::map<std::string, double>& features) const;
};

struct ToolCostModel {
  AffineFunction peak_mem_mb;
  AffineFunction cpu_seconds;
  double noise_sigma = 0.0;
  double failure_rate = 0.0;
  std::map<std::string, std::uint64_t> output_bytes;  // placeholder size per output id
};

using CostModel = std::map<std::string, ToolCostModel>;

CostModel cost_model_from_json(const Json& doc);
CostModel load_cost_model(std::string_view text);
Json to_json(const CostModel& model);

// Raw per-input features seen by the cost model: numbers as-is, booleans
// 0/1, File sizes in MiB, strings and enum values as one-hot "id=value".
std::map<std::string, double> simulation_features(const Bindings& bindings);

// Seed of the per-task random stream: hash of (scenario seed, task id).
std::uint64_t task_stream_seed(std::uint64_t seed, std::string_view task_id);

struct SimulationContext {
  const ToolDescriptor* tool = nullptr;               // declared outputs, when known
  std::optional<std::filesystem::path> work_dir;      // materialize placeholders here
};

// Deterministic in (job, task_id, model, seed). The task's random stream
// yields, in order: a normal for memory noise, a normal for cpu noise, and a
// uniform for the failure draw.
RunResult run_simulated(const JobSpec& job, std::string_view task_id, const CostModel& model,
                        std::uint64_t seed, const SimulationContext& context = {});

// Spawns the tool's command in <work_dir>/<task_id>/outputs with File inputs
// staged under <work_dir>/<task_id>/inputs. Peak resident memory of the
// process group is sampled every 100 ms. Setting *cancel terminates the job.
RunResult run_local(const JobSpec& job, const ToolDescriptor& descriptor, std::string_view task_id,
                    const std::filesystem::path& work_dir,
                    const std::atomic<bool>* cancel = nullptr);

}  // namespace hetsched
