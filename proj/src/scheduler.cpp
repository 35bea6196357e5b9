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

#include "hetsched/scheduler.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <tuple>

#include "hetsched/error.hpp"

namespace hetsched {

namespace fs = std::filesystem;

ResourceVector default_request(const NodeClass& node_class, int jobs_per_node) {
  if (jobs_per_node < 1) throw Error(Errc::kInvalidArgument, "jobs_per_node must be >= 1");
  const ResourceVector& cap = node_class.capacity;
  return ResourceVector{cap.cpu_cores / jobs_per_node, cap.memory_mb / jobs_per_node, cap.disk_mb / jobs_per_node,
                        {}};
}

ResourceVector placement_demand(const QueueEntry& entry, const NodeClass& node_class,
                                const SchedulerOptions& options) {
  if (entry.job.resource_request) return *entry.job.resource_request;
  return default_request(node_class, options.jobs_per_node);
}

std::optional<std::string> suggest_node_class(const JobSpec& job, const ProfileStore& profiles) {
  std::optional<ExecutionProfile> profile = profiles.find(job.tool_id);
  if (!profile) return std::nullopt;
  return profile->predict(job.bindings);
}

std::vector<ScheduleDecision> schedule_tick(std::vector<QueueEntry>& queue, ClusterSpec& cluster, double now,
                                            const SchedulerOptions& options) {
  std::vector<Node> nodes = cluster.nodes();
  std::vector<ScheduleDecision> decisions;
  std::vector<QueueEntry> waiting;
  for (auto& entry : queue) {
    bool placed = false;
    for (auto& node : nodes) {
      if (entry.suggestion && node.class_name != *entry.suggestion) continue;
      ResourceVector demand = placement_demand(entry, cluster.class_of(node), options);
      if (!fits(demand, node, cluster)) continue;
      node = allocate(node, demand, cluster);
      decisions.push_back({entry.task_id, node.id, now, demand});
      placed = true;
      break;
    }
    if (!placed) waiting.push_back(std::move(entry));
  }
  cluster.mutable_nodes() = std::move(nodes);
  queue = std::move(waiting);
  return decisions;
}

Scheduler::Scheduler(ClusterSpec cluster, SchedulerOptions options)
    : cluster_(std::move(cluster)), options_(options) {}

void Scheduler::enqueue(QueueEntry entry) {
  if (entry.suggestion && cluster_.find_class(*entry.suggestion) == nullptr) {
    throw Error(Errc::kUnknownReference, "suggested node class '" + *entry.suggestion + "' does not exist");
  }
  queue_.push_back(std::move(entry));
}

std::vector<ScheduleDecision> Scheduler::tick(double now) {
  std::vector<ScheduleDecision> decisions = schedule_tick(queue_, cluster_, now, options_);
  for (const auto& d : decisions) running_[d.task_id] = d;
  return decisions;
}

bool Scheduler::finish(const std::string& task_id) {
  auto it = running_.find(task_id);
  if (it == running_.end()) return false;
  Node& node = cluster_.node(it->second.node_id);
  node = release(node, it->second.demand);
  running_.erase(it);
  return true;
}

bool Scheduler::dequeue(const std::string& task_id) {
  auto it = std::find_if(queue_.begin(), queue_.end(), [&](const QueueEntry& e) { return e.task_id == task_id; });
  if (it == queue_.end()) return false;
  queue_.erase(it);
  return true;
}

std::optional<std::string> Scheduler::node_of(const std::string& task_id) const {
  auto it = running_.find(task_id);
  if (it == running_.end()) return std::nullopt;
  return it->second.node_id;
}

Json Scheduler::status() const {
  Json nodes = Json::array();
  for (const auto& n : cluster_.nodes()) {
    Json running = Json::array();
    for (const auto& [id, d] : running_) {
      if (d.node_id == n.id) running.push_back(id);
    }
    nodes.push_back({{"id", n.id},
                     {"class", n.class_name},
                     {"capacity", to_json(cluster_.class_of(n).capacity)},
                     {"allocated", to_json(n.allocated)},
                     {"running", running}});
  }
  Json queued = Json::array();
  for (const auto& e : queue_) queued.push_back(e.task_id);
  return {{"nodes", nodes}, {"queued", queued}};
}

// ---- scenario documents ----

namespace {

ToolDescriptor load_tool_entry(const std::string& id, const Json& entry, const fs::path& base_dir) {
  if (entry.is_string()) {
    return parse_tool(read_file(base_dir / entry.get<std::string>()), id);
  }
  return tool_from_json(entry, id);
}

}  // namespace

Scenario scenario_from_json(const Json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw Error(Errc::kParse, "scenario must be a mapping");
  Scenario s;
  try {
    s.cluster = cluster_spec_from_json(doc.at("cluster"));
    s.cost_models = cost_model_from_json(doc.at("cost_models"));
    s.use_profiles = doc.value("use_profiles", false);
    s.seed = doc.value("seed", std::uint64_t{0});
    s.options.jobs_per_node = doc.value("jobs_per_node", 1);
    s.headroom = doc.value("headroom", kDefaultHeadroom);
    if (doc.contains("tools")) {
      for (const auto& [id, entry] : doc.at("tools").items()) s.tools[id] = load_tool_entry(id, entry, base_dir);
    }
    if (doc.contains("profiling")) {
      for (const auto& [id, entry] : doc.at("profiling").items()) {
        Json req = entry;
        req["tool_id"] = id;
        s.profiling[id] = profiling_request_from_json(req);
      }
    }
    for (const auto& sub : doc.at("submissions")) {
      Submission base;
      base.at_seconds = sub.value("at_seconds", 0.0);
      base.tool_id = sub.at("tool_id").get<std::string>();
      if (sub.contains("bindings")) base.bindings = sub.at("bindings").get<Bindings>();
      if (sub.contains("request") && !sub.at("request").is_null()) {
        base.request = resource_vector_from_json(sub.at("request"));
      }
      int count = sub.value("count", 1);
      if (count < 1) throw Error(Errc::kInvalidArgument, "submission count must be >= 1");
      for (int i = 0; i < count; ++i) s.submissions.push_back(base);
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::kParse, std::string("malformed scenario: ") + e.what());
  }
  if (s.options.jobs_per_node < 1) throw Error(Errc::kInvalidArgument, "jobs_per_node must be >= 1");
  for (const auto& sub : s.submissions) {
    if (!s.cost_models.contains(sub.tool_id)) {
      throw Error(Errc::kUnknownTool, "scenario references unknown tool '" + sub.tool_id + "'");
    }
  }
  for (const auto& [id, req] : s.profiling) {
    if (!s.tools.contains(id)) throw Error(Errc::kUnknownTool, "profiling requested for undeclared tool '" + id + "'");
  }
  return s;
}

Scenario load_scenario(const fs::path& path) {
  return scenario_from_json(load_document(read_file(path)), path.parent_path());
}

ProfileStore train_scenario_profiles(const Scenario& scenario, std::vector<std::string>* warnings) {
  ProfileStore store;
  const CostModel& models = scenario.cost_models;
  SampleRunner runner = [&models](const JobSpec& job, const std::string& id, std::uint64_t seed) {
    return run_simulated(job, id, models, seed);
  };
  for (const auto& [id, request] : scenario.profiling) {
    ProfilingOptions options;
    options.headroom = scenario.headroom;
    ProfilingOutcome out = profile_tool(request, scenario.tools.at(id), scenario.cluster.classes(), runner, options);
    if (warnings != nullptr) warnings->insert(warnings->end(), out.warnings.begin(), out.warnings.end());
    store.save(out.profile, out.samples);
  }
  return store;
}

// ---- simulation ----

Json TraceEvent::to_json() const {
  Json j{{"t", time}, {"event", kind}, {"task_id", task_id}, {"tool_id", tool_id}};
  if (node_id) j["node_id"] = *node_id;
  if (node_class) j["node_class"] = *node_class;
  if (suggestion) j["suggestion"] = *suggestion;
  if (demand) j["demand"] = hetsched::to_json(*demand);
  if (exit_status) j["exit_status"] = *exit_status;
  return j;
}

TraceEvent TraceEvent::from_json(const Json& j) {
  TraceEvent e;
  try {
    e.time = j.at("t").get<double>();
    e.kind = j.at("event").get<std::string>();
    e.task_id = j.at("task_id").get<std::string>();
    e.tool_id = j.value("tool_id", "");
    if (j.contains("node_id")) e.node_id = j.at("node_id").get<std::string>();
    if (j.contains("node_class")) e.node_class = j.at("node_class").get<std::string>();
    if (j.contains("suggestion")) e.suggestion = j.at("suggestion").get<std::string>();
    if (j.contains("demand")) e.demand = resource_vector_from_json(j.at("demand"));
    if (j.contains("exit_status")) e.exit_status = j.at("exit_status").get<int>();
  } catch (const Json::exception& ex) {
    throw Error(Errc::kParse, std::string("malformed trace event: ") + ex.what());
  }
  return e;
}

Json SimulationReport::to_json() const {
  Json by_origin = Json::object();
  for (const auto& [key, seconds] : per_class_busy_by_origin) by_origin[key.first][key.second] = seconds;
  Json tasks_json = Json::array();
  for (const auto& t : tasks) {
    Json j{{"task_id", t.task_id}, {"tool_id", t.tool_id}, {"state", t.state}, {"submit_time", t.submit_time}};
    if (t.start_time) j["start_time"] = *t.start_time;
    if (t.end_time) j["end_time"] = *t.end_time;
    if (t.node_id) j["node_id"] = *t.node_id;
    if (t.node_class) j["node_class"] = *t.node_class;
    if (t.suggestion) j["suggestion"] = *t.suggestion;
    j["tier"] = t.tier;
    tasks_json.push_back(std::move(j));
  }
  return {{"makespan", makespan},
          {"per_class_busy_seconds", per_class_busy_seconds},
          {"per_class_busy_by_origin", by_origin},
          {"mean_wait_seconds", mean_wait_seconds},
          {"max_wait_seconds", max_wait_seconds},
          {"tasks", tasks_json}};
}

std::string SimulationReport::trace_jsonl() const {
  std::string out;
  for (const auto& e : trace) out += e.to_json().dump() + "\n";
  return out;
}

SimulationReport run_simulation(const Scenario& scenario, const ProfileStore* profiles) {
  for (const auto& sub : scenario.submissions) {
    if (!scenario.cost_models.contains(sub.tool_id)) {
      throw Error(Errc::kUnknownTool, "scenario references unknown tool '" + sub.tool_id + "'");
    }
  }

  std::vector<std::size_t> order(scenario.submissions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scenario.submissions[a].at_seconds < scenario.submissions[b].at_seconds;
  });

  SimulationReport report;
  std::map<std::string, SimulatedTask> tasks;
  std::map<std::string, const Submission*> by_id;
  // (time, kind, task id); kind 0 = completion, 1 = submission.
  std::set<std::tuple<double, int, std::string>> events;
  for (std::size_t n = 0; n < order.size(); ++n) {
    char id[32];
    std::snprintf(id, sizeof id, "sim-%06zu", n + 1);
    const Submission& sub = scenario.submissions[order[n]];
    by_id[id] = &sub;
    events.emplace(sub.at_seconds, 1, id);
  }

  Scheduler scheduler(scenario.cluster, scenario.options);
  double first_submit = order.empty() ? 0.0 : scenario.submissions[order.front()].at_seconds;
  double last_end = first_submit;
  double now = first_submit;

  while (!events.empty()) {
    auto [time, kind, task_id] = *events.begin();
    events.erase(events.begin());
    now = time;
    const Submission& sub = *by_id.at(task_id);

    if (kind == 1) {
      SimulatedTask t;
      t.task_id = task_id;
      t.tool_id = sub.tool_id;
      t.submit_time = time;
      QueueEntry entry{task_id, JobSpec{sub.tool_id, "", sub.bindings, sub.request, {}}, time, std::nullopt};
      if (scenario.use_profiles && profiles != nullptr) entry.suggestion = suggest_node_class(entry.job, *profiles);
      t.suggestion = entry.suggestion;
      report.trace.push_back({time, "submit", task_id, sub.tool_id, {}, {}, entry.suggestion, sub.request, {}});
      scheduler.enqueue(std::move(entry));
      tasks.emplace(task_id, std::move(t));
    } else {
      SimulatedTask& t = tasks.at(task_id);
      scheduler.finish(task_id);
      t.end_time = time;
      t.state = t.run.exit_status == 0 ? "COMPLETE" : "EXECUTOR_ERROR";
      last_end = std::max(last_end, time);
      report.trace.push_back({time, t.run.exit_status == 0 ? "complete" : "fail", task_id, t.tool_id, t.node_id,
                              t.node_class, {}, {}, t.run.exit_status});
    }

    for (const auto& d : scheduler.tick(now)) {
      SimulatedTask& t = tasks.at(d.task_id);
      const Submission& s = *by_id.at(d.task_id);
      JobSpec job{s.tool_id, "", s.bindings, s.request, {}};
      t.run = run_simulated(job, d.task_id, scenario.cost_models, scenario.seed);
      t.start_time = d.start_time;
      t.node_id = d.node_id;
      t.node_class = scenario.cluster.node(d.node_id).class_name;
      t.tier = cheapest_sufficient_class(t.run, scenario.cluster.classes(), scenario.headroom).value_or("none");
      report.trace.push_back(
          {d.start_time, "start", d.task_id, t.tool_id, t.node_id, t.node_class, t.suggestion, d.demand, {}});
      events.emplace(d.start_time + t.run.wall_seconds, 0, d.task_id);
    }
  }

  for (const auto& entry : scheduler.queue()) {
    SimulatedTask& t = tasks.at(entry.task_id);
    t.state = "SYSTEM_ERROR";
    report.trace.push_back({now, "unschedulable", t.task_id, t.tool_id, {}, {}, t.suggestion, {}, {}});
  }

  double wait_sum = 0.0;
  std::size_t started = 0;
  for (auto& [id, t] : tasks) {
    if (t.start_time) {
      double wait = *t.start_time - t.submit_time;
      wait_sum += wait;
      report.max_wait_seconds = std::max(report.max_wait_seconds, wait);
      ++started;
    }
    if (t.start_time && t.end_time) {
      double busy = *t.end_time - *t.start_time;
      report.per_class_busy_seconds[*t.node_class] += busy;
      report.per_class_busy_by_origin[{*t.node_class, t.tier}] += busy;
    }
    report.tasks.push_back(t);
  }
  for (const auto& c : scenario.cluster.classes()) report.per_class_busy_seconds.try_emplace(c.name, 0.0);
  report.mean_wait_seconds = started == 0 ? 0.0 : wait_sum / static_cast<double>(started);
  report.makespan = last_end - first_submit;
  return report;
}

}  // namespace hetsched
