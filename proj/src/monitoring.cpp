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

#include "hetsched/monitoring.hpp"

#include <algorithm>

#include "hetsched/error.hpp"

namespace hetsched {

namespace {

template <class T>
void put(Json& j, const char* key, const std::optional<T>& v) {
  j[key] = v ? Json(*v) : Json(nullptr);
}

}  // namespace

Json LifecycleEvent::to_json() const {
  Json j{{"time", time}, {"task_id", task_id}, {"state", task_state_name(state)}};
  if (!tool_id.empty()) j["tool_id"] = tool_id;
  if (suggestion) j["suggestion"] = *suggestion;
  if (node_id) j["node_id"] = *node_id;
  if (node_class) j["node_class"] = *node_class;
  if (consumption) j["consumption"] = hetsched::to_json(*consumption);
  return j;
}

Json JobStatRecord::to_json() const {
  Json j{{"task_id", task_id}, {"tool_id", tool_id}, {"submit_time", submit_time}};
  put(j, "start_time", start_time);
  put(j, "end_time", end_time);
  put(j, "wait_seconds", wait_seconds);
  put(j, "run_seconds", run_seconds);
  put(j, "node_id", node_id);
  put(j, "node_class", node_class);
  put(j, "suggestion", suggestion);
  j["suggestion_used"] = suggestion_used;
  j["consumption"] = consumption ? hetsched::to_json(*consumption) : Json(nullptr);
  j["state"] = task_state_name(state);
  return j;
}

Json LoadReport::to_json() const {
  Json cls = Json::object();
  for (const auto& [name, c] : classes) {
    cls[name] = {{"node_count", c.node_count},
                 {"busy_seconds", c.busy_seconds},
                 {"job_seconds", c.job_seconds},
                 {"utilization", c.utilization}};
  }
  Json series = Json::array();
  for (const auto& s : queue_length) series.push_back({{"t", s.time}, {"queued", s.queued}, {"running", s.running}});
  return {{"window", {{"from", from}, {"to", to}}},
          {"classes", cls},
          {"queue_length", series},
          {"terminal_counts", terminal_counts}};
}

Monitor::Monitor(ClusterSpec cluster) : cluster_(std::move(cluster)) {}

void Monitor::record_event(const LifecycleEvent& e) {
  auto it = jobs_.find(e.task_id);
  if (e.state == TaskState::kQueued) {
    if (it != jobs_.end()) throw Error(Errc::kDuplicateId, "task " + e.task_id + " already recorded");
    JobStatRecord r;
    r.task_id = e.task_id;
    r.tool_id = e.tool_id;
    r.submit_time = e.time;
    r.suggestion = e.suggestion;
    jobs_.emplace(e.task_id, std::move(r));
    events_.push_back(e);
    return;
  }
  if (it == jobs_.end()) throw Error(Errc::kUnknownTask, "no submission recorded for task " + e.task_id);
  JobStatRecord& r = it->second;
  if (is_terminal(r.state)) {
    throw Error(Errc::kIllegalTransition, "task " + e.task_id + " is frozen in " + std::string(task_state_name(r.state)));
  }
  if (!is_legal_transition(r.state, e.state)) {
    throw Error(Errc::kIllegalTransition, "task " + e.task_id + ": " + std::string(task_state_name(r.state)) +
                                              " -> " + std::string(task_state_name(e.state)));
  }
  r.state = e.state;
  if (e.node_id) {
    r.node_id = e.node_id;
    if (!e.node_class) {
      for (const auto& n : cluster_.nodes()) {
        if (n.id == *e.node_id) r.node_class = n.class_name;
      }
    }
  }
  if (e.node_class) r.node_class = e.node_class;
  if (e.consumption) r.consumption = e.consumption;
  if (e.state == TaskState::kRunning) {
    r.start_time = e.time;
    r.wait_seconds = e.time - r.submit_time;
  }
  if (is_terminal(e.state)) {
    r.end_time = e.time;
    if (r.start_time) r.run_seconds = e.time - *r.start_time;
  }
  r.suggestion_used = r.suggestion && r.node_class && *r.suggestion == *r.node_class;
  events_.push_back(e);
}

std::optional<JobStatRecord> Monitor::job(const std::string& task_id) const {
  auto it = jobs_.find(task_id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

std::vector<JobStatRecord> Monitor::job_report(const JobFilter& filter) const {
  std::vector<JobStatRecord> out;
  for (const auto& [id, r] : jobs_) {
    if (filter.tool_id && r.tool_id != *filter.tool_id) continue;
    if (filter.state && r.state != *filter.state) continue;
    if (filter.since && r.submit_time < *filter.since) continue;
    out.push_back(r);
  }
  std::stable_sort(out.begin(), out.end(), [](const JobStatRecord& a, const JobStatRecord& b) {
    return a.submit_time != b.submit_time ? a.submit_time < b.submit_time : a.task_id < b.task_id;
  });
  return out;
}

LoadReport Monitor::cluster_load_report(double from, double to, double now) const {
  if (!(to > from)) throw Error(Errc::kEmptyWindow, "load window is empty");
  LoadReport rep;
  rep.from = from;
  rep.to = to;
  std::map<std::string, std::string> node_class;
  for (const auto& n : cluster_.nodes()) {
    node_class[n.id] = n.class_name;
    rep.classes[n.class_name].node_count++;
  }
  for (const auto& c : cluster_.classes()) rep.classes.try_emplace(c.name);

  std::map<std::string, std::vector<std::pair<double, double>>> intervals;
  const double open_end = std::min(to, now);
  for (const auto& [id, r] : jobs_) {
    if (!r.start_time || !r.node_id || !node_class.contains(*r.node_id)) continue;
    double a = std::max(from, *r.start_time);
    double b = std::min(to, r.end_time.value_or(open_end));
    if (b > a) intervals[*r.node_id].emplace_back(a, b);
  }
  for (auto& [node, spans] : intervals) {
    ClassLoad& c = rep.classes[node_class.at(node)];
    std::sort(spans.begin(), spans.end());
    double covered = 0.0;
    double cur_a = spans.front().first, cur_b = spans.front().second;
    for (const auto& [a, b] : spans) {
      c.job_seconds += b - a;
      if (a > cur_b) {
        covered += cur_b - cur_a;
        cur_a = a;
        cur_b = b;
      } else {
        cur_b = std::max(cur_b, b);
      }
    }
    covered += cur_b - cur_a;
    c.busy_seconds += covered;
  }
  for (auto& [name, c] : rep.classes) {
    if (c.node_count > 0) {
      c.utilization = std::clamp(c.busy_seconds / (static_cast<double>(c.node_count) * (to - from)), 0.0, 1.0);
    }
  }

  // Replay the log for the queue series; one sample at `from`, then one after
  // each distinct event time inside the window.
  std::map<std::string, TaskState> state;
  std::size_t queued = 0, running = 0;
  auto bump = [&](std::optional<TaskState> before, TaskState after) {
    auto active = [](TaskState s) { return s == TaskState::kInitializing || s == TaskState::kRunning; };
    if (before == TaskState::kQueued) --queued;
    if (before && active(*before)) --running;
    if (after == TaskState::kQueued) ++queued;
    if (active(after)) ++running;
  };
  std::vector<const LifecycleEvent*> ordered;
  for (const auto& e : events_) ordered.push_back(&e);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const LifecycleEvent* a, const LifecycleEvent* b) { return a->time < b->time; });
  std::size_t i = 0;
  for (; i < ordered.size() && ordered[i]->time <= from; ++i) {
    auto it = state.find(ordered[i]->task_id);
    bump(it == state.end() ? std::nullopt : std::optional(it->second), ordered[i]->state);
    state[ordered[i]->task_id] = ordered[i]->state;
  }
  rep.queue_length.push_back({from, queued, running});
  for (; i < ordered.size() && ordered[i]->time <= to; ++i) {
    const LifecycleEvent& e = *ordered[i];
    auto it = state.find(e.task_id);
    bump(it == state.end() ? std::nullopt : std::optional(it->second), e.state);
    state[e.task_id] = e.state;
    if (is_terminal(e.state)) rep.terminal_counts[std::string(task_state_name(e.state))]++;
    if (i + 1 == ordered.size() || ordered[i + 1]->time != e.time) {
      rep.queue_length.push_back({e.time, queued, running});
    }
  }
  return rep;
}

LifecycleEvent lifecycle_event_from_task_event(const TaskEvent& event) {
  LifecycleEvent e;
  e.time = event.time;
  e.task_id = event.task_id;
  e.state = event.to;
  if (event.kind == "create") {
    e.tool_id = event.record.job.tool_id;
    e.suggestion = event.record.suggestion;
    return e;
  }
  if (event.to == TaskState::kInitializing || event.to == TaskState::kRunning) {
    e.node_id = event.record.logs.node_id;
    e.node_class = event.record.logs.node_class;
  }
  if (is_terminal(event.to)) e.consumption = event.record.logs.consumption;
  return e;
}

std::vector<LifecycleEvent> lifecycle_events_from_simulation(const SimulationReport& report) {
  std::map<std::string, const SimulatedTask*> tasks;
  for (const auto& t : report.tasks) tasks[t.task_id] = &t;
  std::vector<LifecycleEvent> out;
  for (const auto& ev : report.trace) {
    LifecycleEvent e;
    e.time = ev.time;
    e.task_id = ev.task_id;
    if (ev.kind == "submit") {
      e.state = TaskState::kQueued;
      e.tool_id = ev.tool_id;
      e.suggestion = ev.suggestion;
      out.push_back(e);
    } else if (ev.kind == "start") {
      e.node_id = ev.node_id;
      e.node_class = ev.node_class;
      e.state = TaskState::kInitializing;
      out.push_back(e);
      e.state = TaskState::kRunning;
      out.push_back(e);
    } else if (ev.kind == "complete" || ev.kind == "fail" || ev.kind == "unschedulable") {
      e.state = ev.kind == "complete" ? TaskState::kComplete
                : ev.kind == "fail"   ? TaskState::kExecutorError
                                      : TaskState::kSystemError;
      if (ev.kind == "unschedulable") {
        // QUEUED cannot go straight to SYSTEM_ERROR; pass through INITIALIZING as the service does.
        LifecycleEvent init = e;
        init.state = TaskState::kInitializing;
        out.push_back(init);
      } else if (auto it = tasks.find(ev.task_id); it != tasks.end()) {
        e.consumption = it->second->run;
      }
      out.push_back(e);
    } else {
      throw Error(Errc::kParse, "unknown trace event kind " + ev.kind);
    }
  }
  return out;
}

}  // namespace hetsched
