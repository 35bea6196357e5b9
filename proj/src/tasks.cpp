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

#include "hetsched/tasks.hpp"

#include <algorithm>
#include <fstream>

#include "hetsched/error.hpp"

namespace hetsched {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kStateNames[] = {"QUEUED",         "INITIALIZING", "RUNNING", "COMPLETE",
                                            "EXECUTOR_ERROR", "SYSTEM_ERROR", "CANCELED"};

constexpr std::string_view kCrockford = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";

bool is_ulid(std::string_view s) {
  return s.size() == 26 && std::all_of(s.begin(), s.end(), [](char c) { return kCrockford.find(c) != std::string_view::npos; });
}

// Millisecond timestamp encoded in the first 10 characters.
std::uint64_t ulid_ms(std::string_view id) {
  std::uint64_t ms = 0;
  for (std::size_t i = 0; i < 10; ++i) ms = ms * 32 + kCrockford.find(id[i]);
  return ms;
}

template <class T>
void put_optional(Json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <class T>
std::optional<T> get_optional(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

Json outputs_json(const std::vector<OutputFile>& outputs) {
  Json a = Json::array();
  for (const auto& o : outputs) a.push_back({{"id", o.id}, {"path", o.path}, {"size", o.size_bytes}});
  return a;
}

}  // namespace

std::string_view task_state_name(TaskState state) { return kStateNames[static_cast<int>(state)]; }

std::optional<TaskState> parse_task_state(std::string_view name) {
  for (int i = 0; i < 7; ++i) {
    if (kStateNames[i] == name) return static_cast<TaskState>(i);
  }
  return std::nullopt;
}

bool is_terminal(TaskState state) {
  return state == TaskState::kComplete || state == TaskState::kExecutorError || state == TaskState::kSystemError ||
         state == TaskState::kCanceled;
}

bool is_legal_transition(TaskState from, TaskState to) {
  using S = TaskState;
  switch (from) {
    case S::kQueued:
      return to == S::kInitializing || to == S::kCanceled;
    case S::kInitializing:
      return to == S::kRunning || to == S::kSystemError || to == S::kCanceled;
    case S::kRunning:
      return to == S::kComplete || to == S::kExecutorError || to == S::kSystemError || to == S::kCanceled;
    default:
      return false;
  }
}

Json to_json(const TaskRecord& task, TaskView view) {
  Json j{{"id", task.id}, {"state", task_state_name(task.state)}};
  if (view == TaskView::kMinimal) return j;
  j["creation_time"] = format_rfc3339(task.creation_time);
  j["creation_epoch"] = task.creation_time;
  j["job"] = to_json(task.job);
  j["suggestion"] = task.suggestion ? Json(*task.suggestion) : Json(nullptr);
  Json logs = Json::object();
  put_optional(logs, "node_id", task.logs.node_id);
  put_optional(logs, "node_class", task.logs.node_class);
  put_optional(logs, "start_time", task.logs.start_time);
  put_optional(logs, "end_time", task.logs.end_time);
  put_optional(logs, "exit_status", task.logs.exit_status);
  if (task.logs.consumption) logs["consumption"] = to_json(*task.logs.consumption);
  put_optional(logs, "system_message", task.logs.system_message);
  j["logs"] = logs;
  j["outputs"] = outputs_json(task.outputs);
  return j;
}

TaskRecord task_record_from_json(const Json& j) {
  TaskRecord t;
  try {
    t.id = j.at("id").get<std::string>();
    auto state = parse_task_state(j.at("state").get<std::string>());
    if (!state) throw Error(Errc::kParse, "unknown task state " + j.at("state").dump());
    t.state = *state;
    t.creation_time = j.value("creation_epoch", 0.0);
    t.job = jobspec_from_json(j.at("job"));
    t.suggestion = get_optional<std::string>(j, "suggestion");
    const Json& logs = j.at("logs");
    t.logs.node_id = get_optional<std::string>(logs, "node_id");
    t.logs.node_class = get_optional<std::string>(logs, "node_class");
    t.logs.start_time = get_optional<double>(logs, "start_time");
    t.logs.end_time = get_optional<double>(logs, "end_time");
    t.logs.exit_status = get_optional<int>(logs, "exit_status");
    if (logs.contains("consumption")) t.logs.consumption = run_result_from_json(logs.at("consumption"));
    t.logs.system_message = get_optional<std::string>(logs, "system_message");
    for (const auto& o : j.value("outputs", Json::array())) {
      t.outputs.push_back({o.at("id").get<std::string>(), o.at("path").get<std::string>(),
                           o.value("size", std::uint64_t{0})});
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::kParse, std::string("malformed task record: ") + e.what());
  }
  return t;
}

Json TaskEvent::to_json() const {
  Json j{{"seq", seq}, {"kind", kind}, {"task_id", task_id}, {"time", time}};
  if (from) j["from"] = task_state_name(*from);
  j["to"] = task_state_name(to);
  j["record"] = hetsched::to_json(record);
  return j;
}

TaskEvent TaskEvent::from_json(const Json& j) {
  TaskEvent e;
  try {
    e.seq = j.at("seq").get<std::uint64_t>();
    e.kind = j.at("kind").get<std::string>();
    e.task_id = j.at("task_id").get<std::string>();
    e.time = j.at("time").get<double>();
    if (j.contains("from")) e.from = parse_task_state(j.at("from").get<std::string>());
    auto to = parse_task_state(j.at("to").get<std::string>());
    if (!to) throw Error(Errc::kParse, "unknown task state in event");
    e.to = *to;
    e.record = task_record_from_json(j.at("record"));
  } catch (const Json::exception& ex) {
    throw Error(Errc::kParse, std::string("malformed task event: ") + ex.what());
  }
  return e;
}

TaskStore::TaskStore(std::optional<fs::path> state_dir, std::size_t snapshot_every, std::optional<std::uint64_t> id_seed)
    : dir_(std::move(state_dir)),
      snapshot_every_(std::max<std::size_t>(1, snapshot_every)),
      ids_(id_seed ? UlidGenerator(*id_seed) : UlidGenerator()) {
  if (dir_) {
    fs::create_directories(*dir_);
    recover(now_seconds());
  }
}

TaskLog read_task_log(const fs::path& state_dir) {
  TaskLog out;
  fs::path snap = state_dir / "tasks.snapshot.json";
  if (fs::exists(snap)) {
    Json doc = Json::parse(read_file(snap));
    out.snapshot_seq = doc.at("last_seq").get<std::uint64_t>();
    for (const auto& t : doc.at("tasks")) {
      TaskRecord r = task_record_from_json(t);
      out.tasks[r.id] = std::move(r);
    }
  }
  out.last_seq = out.snapshot_seq;
  std::ifstream in(state_dir / "tasks.log");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      out.valid_bytes += 1;
      continue;
    }
    if (in.eof()) break;  // no trailing newline: a crash mid-append
    TaskEvent e;
    try {
      e = TaskEvent::from_json(Json::parse(line));
    } catch (const std::exception&) {
      break;
    }
    out.valid_bytes += line.size() + 1;
    out.last_seq = std::max(out.last_seq, e.seq);
    if (e.seq > out.snapshot_seq) out.tasks[e.task_id] = e.record;
    out.events.push_back(std::move(e));
  }
  return out;
}

void TaskStore::recover(double now) {
  TaskLog log = read_task_log(*dir_);
  fs::path log_file = *dir_ / "tasks.log";
  std::error_code ec;
  auto size = fs::file_size(log_file, ec);
  if (!ec && size > log.valid_bytes) fs::resize_file(log_file, log.valid_bytes);  // drop a torn tail
  tasks_ = std::move(log.tasks);
  events_ = std::move(log.events);
  seq_ = log.last_seq;
  for (auto& [id, task] : tasks_) {
    if (task.state == TaskState::kInitializing || task.state == TaskState::kRunning) recovered_failures_.push_back(id);
  }
  for (const auto& id : recovered_failures_) {
    TransitionDetails d;
    d.system_message = "service restarted while the task was active";
    TaskRecord& t = tasks_.at(id);
    TaskState from = t.state;
    t.state = TaskState::kSystemError;
    t.logs.end_time = std::max(now, t.logs.start_time.value_or(now));
    t.logs.system_message = d.system_message;
    append({0, "transition", id, now, from, t.state, t});
  }
}

void TaskStore::append(TaskEvent event) {
  event.seq = ++seq_;
  if (dir_) {
    std::ofstream out(*dir_ / "tasks.log", std::ios::app);
    out << event.to_json().dump() << '\n';
    out.flush();
    if (!out) throw Error(Errc::kStorage, "cannot append to tasks.log");
  }
  events_.push_back(event);
  if (listener_) listener_(event);
  if (dir_ && ++since_snapshot_ >= snapshot_every_) {
    Json tasks = Json::array();
    for (const auto& [id, t] : tasks_) tasks.push_back(to_json(t));
    write_file_atomic(*dir_ / "tasks.snapshot.json", Json{{"last_seq", seq_}, {"tasks", tasks}}.dump() + "\n");
    since_snapshot_ = 0;
  }
}

void TaskStore::snapshot() {
  std::lock_guard lock(mu_);
  if (!dir_) return;
  Json tasks = Json::array();
  for (const auto& [id, t] : tasks_) tasks.push_back(to_json(t));
  write_file_atomic(*dir_ / "tasks.snapshot.json", Json{{"last_seq", seq_}, {"tasks", tasks}}.dump() + "\n");
  since_snapshot_ = 0;
}

TaskRecord TaskStore::create(JobSpec job, std::optional<std::string> suggestion, double now) {
  std::lock_guard lock(mu_);
  std::string id = ids_.next(now);
  if (!tasks_.empty() && id <= tasks_.rbegin()->first) {
    // Clock went backwards across a restart; continue after the newest id.
    id = ids_.next(static_cast<double>(ulid_ms(tasks_.rbegin()->first) + 1) / 1000.0);
  }
  TaskRecord t;
  t.id = id;
  t.creation_time = now;
  t.job = std::move(job);
  t.suggestion = std::move(suggestion);
  tasks_[id] = t;
  append({0, "create", id, now, std::nullopt, TaskState::kQueued, t});
  return t;
}

TaskRecord TaskStore::transition(const std::string& id, TaskState to, double now, const TransitionDetails& details) {
  std::lock_guard lock(mu_);
  auto it = tasks_.find(id);
  if (it == tasks_.end()) throw Error(Errc::kUnknownTask, "unknown task " + id);
  TaskRecord& t = it->second;
  if (!is_legal_transition(t.state, to)) {
    throw Error(Errc::kIllegalTransition, "task " + id + ": illegal transition " +
                                              std::string(task_state_name(t.state)) + " -> " +
                                              std::string(task_state_name(to)));
  }
  TaskState from = t.state;
  t.state = to;
  if (details.node_id) t.logs.node_id = details.node_id;
  if (details.node_class) t.logs.node_class = details.node_class;
  if (details.exit_status) t.logs.exit_status = details.exit_status;
  if (details.consumption) t.logs.consumption = details.consumption;
  if (details.system_message) t.logs.system_message = details.system_message;
  if (!details.outputs.empty()) t.outputs = details.outputs;
  if (to == TaskState::kRunning) t.logs.start_time = now;
  if (is_terminal(to)) t.logs.end_time = std::max(now, t.logs.start_time.value_or(now));
  append({0, "transition", id, now, from, to, t});
  return t;
}

std::optional<TaskRecord> TaskStore::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = tasks_.find(id);
  if (it == tasks_.end()) return std::nullopt;
  return it->second;
}

TaskPage TaskStore::list(std::size_t page_size, const std::optional<std::string>& page_token,
                         std::optional<TaskState> state) const {
  if (page_size == 0) throw Error(Errc::kInvalidArgument, "page_size must be positive");
  if (page_token && !is_ulid(*page_token)) throw Error(Errc::kBadToken, "malformed page token");
  std::lock_guard lock(mu_);
  TaskPage page;
  auto it = page_token ? tasks_.upper_bound(*page_token) : tasks_.begin();
  for (; it != tasks_.end(); ++it) {
    if (state && it->second.state != *state) continue;
    if (page.tasks.size() == page_size) {
      page.next_page_token = page.tasks.back().id;
      break;
    }
    page.tasks.push_back(it->second);
  }
  return page;
}

std::vector<TaskEvent> TaskStore::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

void TaskStore::set_listener(Listener listener) {
  std::lock_guard lock(mu_);
  listener_ = std::move(listener);
}

}  // namespace hetsched
