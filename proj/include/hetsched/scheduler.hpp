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
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hetsched/cluster.hpp"
#include "hetsched/executor.hpp"
#include "hetsched/jobspec.hpp"
#include "hetsched/profiler.hpp"

namespace hetsched {

struct QueueEntry {
  std::string task_id;
  JobSpec job;
  double submit_time = 0.0;
  std::optional<std::string> suggestion;
};

struct ScheduleDecision {
  std::string task_id;
  std::string node_id;
  double start_time = 0.0;
  ResourceVector demand;
};

struct SchedulerOptions {
  int jobs_per_node = 1;
};

// Capacity of the class divided by jobs_per_node, without accelerators.
ResourceVector default_request(const NodeClass& node_class, int jobs_per_node = 1);

// Demand of an entry when placed on a node of the given class: the declared
// request, else the default request of that class.
ResourceVector placement_demand(const QueueEntry& entry, const NodeClass& node_class,
                                const SchedulerOptions& options = {});

// Predicted class for the job, or none when no profile is stored for the tool.
std::optional<std::string> suggest_node_class(const JobSpec& job, const ProfileStore& profiles);

// FIFO-with-skip first fit. Scheduled entries are removed from the queue and
// their demand allocated on the chosen node.
std::vector<ScheduleDecision> schedule_tick(std::vector<QueueEntry>& queue, ClusterSpec& cluster, double now,
                                            const SchedulerOptions& options = {});

// Queue plus running allocations; the single owner of cluster state.
class Scheduler {
 public:
  explicit Scheduler(ClusterSpec cluster, SchedulerOptions options = {});

  // Throws kUnknownReference when the suggestion names no class.
  void enqueue(QueueEntry entry);
  std::vector<ScheduleDecision> tick(double now);
  // Releases the allocation of a running task. Returns false when unknown.
  bool finish(const std::string& task_id);
  // Drops a queued task. Returns false when it is not queued.
  bool dequeue(const std::string& task_id);

  const ClusterSpec& cluster() const { return cluster_; }
  const std::vector<QueueEntry>& queue() const { return queue_; }
  std::optional<std::string> node_of(const std::string& task_id) const;
  Json status() const;

 private:
  ClusterSpec cluster_;
  SchedulerOptions options_;
  std::vector<QueueEntry> queue_;
  std::map<std::string, ScheduleDecision> running_;
};

// ---- discrete-event simulation ----

struct Submission {
  double at_seconds = 0.0;
  std::string tool_id;
  Bindings bindings;
  std::optional<ResourceVector> request;
};

struct Scenario {
  ClusterSpec cluster;
  CostModel cost_models;
  std::vector<Submission> submissions;
  bool use_profiles = false;
  std::uint64_t seed = 0;
  SchedulerOptions options;
  double headroom = kDefaultHeadroom;
  std::map<std::string, ToolDescriptor> tools;
  std::map<std::string, ProfilingRequest> profiling;  // tool id -> profiling grid
};

// {cluster, cost_models, submissions: [{at_seconds, tool_id, bindings,
// request?, count?}], use_profiles, seed, jobs_per_node?, headroom?, tools?,
// profiling?}. `tools` maps ids to inline CWL documents or paths relative to
// base_dir.
Scenario scenario_from_json(const Json& doc, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

// Profiles every tool listed under `profiling` with the simulated runner.
ProfileStore train_scenario_profiles(const Scenario& scenario, std::vector<std::string>* warnings = nullptr);

struct TraceEvent {
  double time = 0.0;
  std::string kind;  // submit, start, complete, fail, unschedulable
  std::string task_id;
  std::string tool_id;
  std::optional<std::string> node_id;
  std::optional<std::string> node_class;
  std::optional<std::string> suggestion;
  std::optional<ResourceVector> demand;
  std::optional<int> exit_status;

  Json to_json() const;
  static TraceEvent from_json(const Json& j);
};

struct SimulatedTask {
  std::string task_id;
  std::string tool_id;
  double submit_time = 0.0;
  std::optional<double> start_time;
  std::optional<double> end_time;
  std::optional<std::string> node_id;
  std::optional<std::string> node_class;
  std::optional<std::string> suggestion;
  std::string tier;   // labeling-rule class of the measured consumption, "none" if nothing fits
  std::string state;  // COMPLETE, EXECUTOR_ERROR, SYSTEM_ERROR
  RunResult run;
};

struct SimulationReport {
  double makespan = 0.0;
  std::map<std::string, double> per_class_busy_seconds;
  std::map<std::pair<std::string, std::string>, double> per_class_busy_by_origin;  // (class, tier)
  double mean_wait_seconds = 0.0;
  double max_wait_seconds = 0.0;
  std::vector<TraceEvent> trace;
  std::vector<SimulatedTask> tasks;  // in task-id order

  Json to_json() const;  // summary without the trace
  std::string trace_jsonl() const;
};

// Events are ordered by (time, completion before submission, task id) and a
// schedule tick follows every event. Throws kUnknownTool for tools without a
// cost model.
SimulationReport run_simulation(const Scenario& scenario, const ProfileStore* profiles = nullptr);

}  // namespace hetsched
