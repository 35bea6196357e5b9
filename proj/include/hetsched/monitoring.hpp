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

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hetsched/cluster.hpp"
#include "hetsched/scheduler.hpp"
#include "hetsched/tasks.hpp"

namespace hetsched {

// One lifecycle transition. An event with state QUEUED introduces the task;
// every other event must follow the task state machine.
struct LifecycleEvent {
  double time = 0.0;
  std::string task_id;
  TaskState state = TaskState::kQueued;
  std::string tool_id;                    // QUEUED only
  std::optional<std::string> suggestion;  // QUEUED only
  std::optional<std::string> node_id;
  std::optional<std::string> node_class;
  std::optional<RunResult> consumption;

  Json to_json() const;
};

struct JobStatRecord {
  std::string task_id;
  std::string tool_id;
  double submit_time = 0.0;
  std::optional<double> start_time;
  std::optional<double> end_time;
  std::optional<double> wait_seconds;
  std::optional<double> run_seconds;
  std::optional<std::string> node_id;
  std::optional<std::string> node_class;
  std::optional<std::string> suggestion;
  bool suggestion_used = false;
  std::optional<RunResult> consumption;
  TaskState state = TaskState::kQueued;

  Json to_json() const;
};

struct JobFilter {
  std::optional<std::string> tool_id;
  std::optional<TaskState> state;
  std::optional<double> since;  // submit_time >= since
};

struct ClassLoad {
  std::size_t node_count = 0;
  double busy_seconds = 0.0;  // union of busy intervals per node, clipped to the window
  double job_seconds = 0.0;   // sum of clipped job intervals (exceeds busy when jobs share nodes)
  double utilization = 0.0;
};

struct QueueSample {
  double time = 0.0;
  std::size_t queued = 0;
  std::size_t running = 0;
};

struct LoadReport {
  double from = 0.0;
  double to = 0.0;
  std::map<std::string, ClassLoad> classes;
  std::vector<QueueSample> queue_length;
  std::map<std::string, std::size_t> terminal_counts;  // tasks ending inside the window

  Json to_json() const;
};

// Materialized views over an append-only lifecycle log.
class Monitor {
 public:
  explicit Monitor(ClusterSpec cluster);

  // Throws kUnknownTask for events on unseen tasks, kDuplicateId for a second
  // QUEUED event and kIllegalTransition for moves out of a frozen (terminal)
  // record or otherwise outside the state machine.
  void record_event(const LifecycleEvent& event);

  const std::vector<LifecycleEvent>& events() const { return events_; }
  std::optional<JobStatRecord> job(const std::string& task_id) const;

  // Ordered by (submit_time, task_id).
  std::vector<JobStatRecord> job_report(const JobFilter& filter = {}) const;

  // Tasks still running count as busy up to min(to, now). Throws kEmptyWindow
  // when to <= from.
  LoadReport cluster_load_report(double from, double to,
                                 double now = std::numeric_limits<double>::infinity()) const;

 private:
  ClusterSpec cluster_;
  std::vector<LifecycleEvent> events_;
  std::map<std::string, JobStatRecord> jobs_;
};

LifecycleEvent lifecycle_event_from_task_event(const TaskEvent& event);

// submit -> QUEUED, start -> INITIALIZING and RUNNING, complete -> COMPLETE,
// fail -> EXECUTOR_ERROR, unschedulable -> INITIALIZING and SYSTEM_ERROR.
// Consumption comes from the report's task list.
std::vector<LifecycleEvent> lifecycle_events_from_simulation(const SimulationReport& report);

}  // namespace hetsched
