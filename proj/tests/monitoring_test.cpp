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

#include "doctest.h"
#include "hetsched/monitoring.hpp"
#include "sim_fixtures.hpp"
#include "test_util.hpp"

using namespace hetsched;
using namespace hetsched::testing;

namespace {

ClusterSpec cluster() {
  return load_cluster_spec(R"(
classes:
  - {name: regular-memory, cost_rank: 1, capacity: {cpu_cores: 8, memory_mb: 4096, disk_mb: 100000}}
  - {name: large-memory, cost_rank: 2, capacity: {cpu_cores: 32, memory_mb: 32768, disk_mb: 500000}}
nodes:
  - {id: large-1, class: large-memory}
  - {id: regular-1, class: regular-memory}
  - {id: regular-2, class: regular-memory}
)");
}

LifecycleEvent ev(double t, const std::string& id, TaskState s, std::optional<std::string> node = {}) {
  LifecycleEvent e;
  e.time = t;
  e.task_id = id;
  e.state = s;
  e.node_id = std::move(node);
  if (s == TaskState::kQueued) e.tool_id = "tool";
  return e;
}

void run_job(Monitor& m, const std::string& id, double submit, double start, double end, const std::string& node,
             TaskState final_state = TaskState::kComplete) {
  m.record_event(ev(submit, id, TaskState::kQueued));
  m.record_event(ev(start, id, TaskState::kInitializing, node));
  m.record_event(ev(start, id, TaskState::kRunning));
  m.record_event(ev(end, id, final_state));
}

}  // namespace

TEST_CASE("record_event computes wait and run time and freezes terminal records") {
  Monitor m(cluster());
  LifecycleEvent q = ev(10, "t1", TaskState::kQueued);
  q.suggestion = "regular-memory";
  m.record_event(q);
  m.record_event(ev(12, "t1", TaskState::kInitializing, "regular-2"));
  m.record_event(ev(13.5, "t1", TaskState::kRunning));
  JobStatRecord r = *m.job("t1");
  CHECK(*r.wait_seconds == 3.5);
  CHECK(*r.node_class == "regular-memory");
  CHECK(r.suggestion_used);
  m.record_event(ev(20, "t1", TaskState::kComplete));
  CHECK(*m.job("t1")->run_seconds == 6.5);
  CHECK_ERRC(m.record_event(ev(21, "t1", TaskState::kCanceled)), Errc::kIllegalTransition);
  CHECK_ERRC(m.record_event(ev(21, "nope", TaskState::kRunning)), Errc::kUnknownTask);
  CHECK_ERRC(m.record_event(ev(21, "t1", TaskState::kQueued)), Errc::kDuplicateId);
  CHECK(m.events().size() == 4);
}

TEST_CASE("job_report filters and orders by submit time") {
  Monitor m(cluster());
  CHECK(m.job_report().empty());
  run_job(m, "b", 1, 2, 5, "regular-1");
  run_job(m, "a", 1, 3, 4, "regular-2");
  m.record_event(ev(0.5, "c", TaskState::kQueued));
  std::vector<JobStatRecord> all = m.job_report();
  REQUIRE(all.size() == 3);
  CHECK(all[0].task_id == "c");
  CHECK(all[1].task_id == "a");
  CHECK(m.job_report({.state = TaskState::kComplete}).size() == 2);
  CHECK(m.job_report({.since = 100}).empty());
  CHECK(m.job_report({.tool_id = "other"}).empty());
}

TEST_CASE("cluster_load_report clips intervals to the window") {
  Monitor m(cluster());
  LoadReport idle = m.cluster_load_report(0, 100);
  CHECK(idle.classes.at("large-memory").utilization == 0.0);
  CHECK(idle.classes.at("regular-memory").node_count == 2);
  CHECK_ERRC(m.cluster_load_report(5, 5), Errc::kEmptyWindow);

  run_job(m, "whole", 0, 0, 100, "large-1");
  run_job(m, "half", 0, 40, 80, "regular-1");  // window [60, 100] sees 20 of its 40 seconds
  LoadReport full = m.cluster_load_report(0, 100);
  CHECK(full.classes.at("large-memory").utilization == 1.0);
  LoadReport w = m.cluster_load_report(60, 100);
  CHECK(w.classes.at("regular-memory").busy_seconds == 20.0);
  CHECK(w.classes.at("regular-memory").utilization == 20.0 / (2 * 40.0));
  CHECK(w.terminal_counts.at("COMPLETE") == 2);
}

TEST_CASE("busy time is the union of overlapping jobs on a node") {
  Monitor m(cluster());
  run_job(m, "x", 0, 0, 60, "regular-1");
  run_job(m, "y", 0, 30, 90, "regular-1");
  LoadReport r = m.cluster_load_report(0, 100);
  CHECK(r.classes.at("regular-memory").busy_seconds == 90.0);
  CHECK(r.classes.at("regular-memory").job_seconds == 120.0);
  CHECK(r.classes.at("regular-memory").utilization <= 1.0);
}

TEST_CASE("running tasks count up to now") {
  Monitor m(cluster());
  m.record_event(ev(0, "r", TaskState::kQueued));
  m.record_event(ev(10, "r", TaskState::kInitializing, "large-1"));
  m.record_event(ev(10, "r", TaskState::kRunning));
  CHECK(m.cluster_load_report(0, 100, 30).classes.at("large-memory").busy_seconds == 20.0);
}

TEST_CASE("queue length series sampled at event points") {
  Monitor m(cluster());
  m.record_event(ev(0, "a", TaskState::kQueued));
  m.record_event(ev(0, "b", TaskState::kQueued));
  m.record_event(ev(1, "a", TaskState::kInitializing, "regular-1"));
  m.record_event(ev(1, "a", TaskState::kRunning));
  m.record_event(ev(4, "b", TaskState::kCanceled));
  m.record_event(ev(6, "a", TaskState::kExecutorError));
  LoadReport r = m.cluster_load_report(0, 10);
  REQUIRE(r.queue_length.size() == 4);
  CHECK(r.queue_length[0].queued == 2);
  CHECK(r.queue_length[1].time == 1.0);
  CHECK(r.queue_length[1].queued == 1);
  CHECK(r.queue_length[1].running == 1);
  CHECK(r.queue_length[2].queued == 0);
  CHECK(r.queue_length[3].running == 0);
  CHECK(r.terminal_counts.at("CANCELED") == 1);
  CHECK(r.terminal_counts.at("EXECUTOR_ERROR") == 1);
}

TEST_CASE("task store events feed the monitor") {
  TaskStore store({}, 100, 1);
  Monitor m(cluster());
  store.set_listener([&](const TaskEvent& e) { m.record_event(lifecycle_event_from_task_event(e)); });
  auto t = store.create(JobSpec{"tool", "", {}, {}, {}}, "large-memory", 5);
  store.transition(t.id, TaskState::kInitializing, 6, {.node_id = "large-1", .node_class = "large-memory"});
  store.transition(t.id, TaskState::kRunning, 7);
  store.transition(t.id, TaskState::kComplete, 9, {.exit_status = 0, .consumption = RunResult{0, 2, 1, 50, {}}});
  JobStatRecord r = *m.job(t.id);
  CHECK(*r.run_seconds == 2.0);
  CHECK(r.suggestion_used);
  CHECK(r.consumption->peak_mem_mb == 50.0);
}

TEST_CASE("property: job report reconciles with simulated busy seconds") {
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    RandomSimulation sim = random_simulation(seed, 80);
    SimulationReport report = run_simulation(sim.scenario, &sim.profiles);
    Monitor m(sim.scenario.cluster);
    for (const auto& e : lifecycle_events_from_simulation(report)) m.record_event(e);
    std::map<std::string, double> by_class;
    for (const auto& c : sim.scenario.cluster.classes()) by_class[c.name] = 0.0;
    std::vector<JobStatRecord> jobs = m.job_report();
    std::sort(jobs.begin(), jobs.end(), [](const auto& a, const auto& b) { return a.task_id < b.task_id; });
    for (const auto& j : jobs) {
      if (j.run_seconds) by_class[*j.node_class] += *j.run_seconds;
    }
    INFO("seed " << seed);
    CHECK(by_class == report.per_class_busy_seconds);
    CHECK(jobs.size() == report.tasks.size());
  }
}
