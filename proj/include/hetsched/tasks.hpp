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
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetsched/executor.hpp"
#include "hetsched/jobspec.hpp"

namespace hetsched {

enum class TaskState { kQueued, kInitializing, kRunning, kComplete, kExecutorError, kSystemError, kCanceled };

std::string_view task_state_name(TaskState state);
std::optional<TaskState> parse_task_state(std::string_view name);
bool is_terminal(TaskState state);
bool is_legal_transition(TaskState from, TaskState to);

struct TaskLogs {
  std::optional<std::string> node_id;
  std::optional<std::string> node_class;
  std::optional<double> start_time;
  std::optional<double> end_time;
  std::optional<int> exit_status;
  std::optional<RunResult> consumption;
  std::optional<std::string> system_message;
};

struct TaskRecord {
  std::string id;
  TaskState state = TaskState::kQueued;
  double creation_time = 0.0;
  JobSpec job;
  std::optional<std::string> suggestion;
  TaskLogs logs;
  std::vector<OutputFile> outputs;
};

enum class TaskView { kMinimal, kFull };

Json to_json(const TaskRecord& task, TaskView view = TaskView::kFull);
TaskRecord task_record_from_json(const Json& j);

// Fields set alongside a transition; unset fields keep their value.
struct TransitionDetails {
  std::optional<std::string> node_id;
  std::optional<std::string> node_class;
  std::optional<int> exit_status;
  std::optional<RunResult> consumption;
  std::vector<OutputFile> outputs;
  std::optional<std::string> system_message;
};

// One line of tasks.log.
struct TaskEvent {
  std::uint64_t seq = 0;
  std::string kind;  // "create" or "transition"
  std::string task_id;
  double time = 0.0;
  std::optional<TaskState> from;
  TaskState to = TaskState::kQueued;
  TaskRecord record;  // state of the task after the event

  Json to_json() const;
  static TaskEvent from_json(const Json& j);
};

struct TaskPage {
  std::vector<TaskRecord> tasks;
  std::optional<std::string> next_page_token;
};

// Read-only view of a state directory: snapshot plus replayed log. A torn
// final line is ignored.
struct TaskLog {
  std::map<std::string, TaskRecord> tasks;
  std::vector<TaskEvent> events;
  std::uint64_t snapshot_seq = 0;
  std::uint64_t last_seq = 0;
  std::uintmax_t valid_bytes = 0;  // log prefix made of complete events
};

TaskLog read_task_log(const std::filesystem::path& state_dir);

// Task records persisted as an append-only JSON-lines event log with a
// periodic snapshot. Recovery loads the snapshot and replays newer events;
// tasks caught mid-run are moved to SYSTEM_ERROR.
class TaskStore {
 public:
  using Listener = std::function<void(const TaskEvent&)>;

  explicit TaskStore(std::optional<std::filesystem::path> state_dir = {}, std::size_t snapshot_every = 100,
                     std::optional<std::uint64_t> id_seed = {});

  TaskRecord create(JobSpec job, std::optional<std::string> suggestion, double now);

  // Throws kUnknownTask for unknown ids and kIllegalTransition for moves the
  // state machine forbids. start_time is set on entering RUNNING, end_time
  // on entering a terminal state.
  TaskRecord transition(const std::string& id, TaskState to, double now, const TransitionDetails& details = {});

  std::optional<TaskRecord> get(const std::string& id) const;

  // Ordered by id (= creation order). The token is the last id of the
  // previous page; malformed tokens throw kBadToken.
  TaskPage list(std::size_t page_size, const std::optional<std::string>& page_token = {},
                std::optional<TaskState> state = {}) const;

  std::vector<TaskEvent> events() const;  // every event since the log began
  void set_listener(Listener listener);
  void snapshot();
  // Ids moved to SYSTEM_ERROR during recovery.
  const std::vector<std::string>& recovered_failures() const { return recovered_failures_; }

 private:
  void append(TaskEvent event);
  void recover(double now);

  std::optional<std::filesystem::path> dir_;
  std::size_t snapshot_every_;
  mutable std::mutex mu_;
  UlidGenerator ids_;
  std::map<std::string, TaskRecord> tasks_;
  std::vector<TaskEvent> events_;
  std::uint64_t seq_ = 0;
  std::size_t since_snapshot_ = 0;
  Listener listener_;
  std::vector<std::string> recovered_failures_;
};

}  // namespace hetsched
