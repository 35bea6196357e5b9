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

#include <random>
#include <fstream>
#include <set>

#include "doctest.h"
#include "hetsched/tasks.hpp"
#include "test_util.hpp"

using namespace hetsched;
using namespace hetsched::testing;

namespace {

JobSpec job(int k = 1) { return JobSpec{"wordcount", "", {{"k", k}}, {}, {}}; }

constexpr TaskState kAll[] = {TaskState::kQueued,        TaskState::kInitializing, TaskState::kRunning,
                              TaskState::kComplete,      TaskState::kExecutorError, TaskState::kSystemError,
                              TaskState::kCanceled};

}  // namespace

TEST_CASE("state names round-trip") {
  for (TaskState s : kAll) CHECK(parse_task_state(task_state_name(s)) == s);
  CHECK_FALSE(parse_task_state("PAUSED").has_value());
}

TEST_CASE("legal transition table") {
  int legal = 0;
  for (TaskState a : kAll) {
    for (TaskState b : kAll) legal += is_legal_transition(a, b);
  }
  CHECK(legal == 9);
  CHECK(is_legal_transition(TaskState::kQueued, TaskState::kInitializing));
  CHECK_FALSE(is_legal_transition(TaskState::kQueued, TaskState::kRunning));
  CHECK_FALSE(is_legal_transition(TaskState::kCanceled, TaskState::kRunning));
  for (TaskState a : kAll) {
    if (is_terminal(a)) {
      for (TaskState b : kAll) CHECK_FALSE(is_legal_transition(a, b));
    }
  }
}

TEST_CASE("create, transition and view") {
  TaskStore store({}, 100, 1);
  TaskRecord t = store.create(job(), "regular-memory", 10.0);
  CHECK(t.id.size() == 26);
  CHECK(to_json(t, TaskView::kMinimal) == Json{{"id", t.id}, {"state", "QUEUED"}});

  store.transition(t.id, TaskState::kInitializing, 11.0, {.node_id = "n1", .node_class = "regular-memory"});
  store.transition(t.id, TaskState::kRunning, 12.0);
  RunResult r{0, 3.0, 2.0, 100.0, {{"out", "/tmp/x", 7}}};
  TaskRecord done = store.transition(t.id, TaskState::kComplete, 15.0,
                                     {.exit_status = 0, .consumption = r, .outputs = r.output_files});
  CHECK(*done.logs.start_time == 12.0);
  CHECK(*done.logs.end_time == 15.0);
  CHECK(*done.logs.node_id == "n1");
  CHECK(done.outputs.size() == 1);

  Json full = to_json(done);
  CHECK(full["logs"]["consumption"]["peak_mem_mb"] == 100.0);
  CHECK(full["suggestion"] == "regular-memory");
  CHECK(to_json(task_record_from_json(full)) == full);

  CHECK_ERRC(store.transition("01ARZ3NDEKTSV4RRFFQ69G5FAV", TaskState::kCanceled, 1), Errc::kUnknownTask);
  CHECK_ERRC(store.transition(t.id, TaskState::kRunning, 16), Errc::kIllegalTransition);
  CHECK(store.events().size() == 4);
}

TEST_CASE("property: transition fuzzing rejects every illegal move") {
  std::mt19937_64 rng(2024);
  TaskStore store({}, 100, 7);
  std::vector<std::string> ids;
  for (int i = 0; i < 40; ++i) ids.push_back(store.create(job(i), {}, i).id);
  int illegal = 0, rejected = 0, legal = 0, accepted = 0;
  for (int step = 0; step < 5000; ++step) {
    const std::string& id = ids[rng() % ids.size()];
    TaskState to = kAll[rng() % 7];
    TaskState from = store.get(id)->state;
    bool ok = is_legal_transition(from, to);
    (ok ? legal : illegal)++;
    try {
      store.transition(id, to, 100.0 + step);
      accepted++;
      CHECK(ok);
      CHECK(store.get(id)->state == to);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kIllegalTransition);
      CHECK_FALSE(ok);
      CHECK(store.get(id)->state == from);
      rejected++;
    }
  }
  CHECK(illegal > 1000);
  CHECK(rejected == illegal);
  CHECK(accepted == legal);
  for (const auto& e : store.events()) {
    if (e.from) CHECK(is_legal_transition(*e.from, e.to));
  }
}

TEST_CASE("pagination over 50 tasks is gap-free and duplicate-free") {
  TaskStore store({}, 100, 3);
  std::vector<std::string> created;
  // Several ids per millisecond exercise the monotonic increment.
  for (int i = 0; i < 50; ++i) created.push_back(store.create(job(i), {}, 1000.0 + (i / 7) * 0.001).id);
  CHECK(std::is_sorted(created.begin(), created.end()));

  for (std::size_t page_size : {1, 2, 7, 50, 64}) {
    std::vector<std::string> seen;
    std::optional<std::string> token;
    int pages = 0;
    do {
      TaskPage p = store.list(page_size, token);
      CHECK(p.tasks.size() <= page_size);
      for (const auto& t : p.tasks) seen.push_back(t.id);
      token = p.next_page_token;
      ++pages;
    } while (token);
    CHECK(seen == created);
    CHECK(pages == static_cast<int>((50 + page_size - 1) / page_size));
  }

  CHECK(store.list(10, {}, TaskState::kComplete).tasks.empty());
  CHECK_ERRC(store.list(10, std::string("not-a-token")), Errc::kBadToken);
  CHECK_ERRC(store.list(0), Errc::kInvalidArgument);
}

TEST_CASE("state filter pages") {
  TaskStore store({}, 100, 4);
  std::vector<std::string> ids;
  for (int i = 0; i < 3; ++i) ids.push_back(store.create(job(i), {}, i).id);
  store.transition(ids[1], TaskState::kCanceled, 5);
  TaskPage p = store.list(2, {}, TaskState::kQueued);
  REQUIRE(p.tasks.size() == 2);
  CHECK(p.tasks[1].id == ids[2]);
  CHECK_FALSE(p.next_page_token.has_value());
}

TEST_CASE("recovery replays the log and fails interrupted tasks") {
  TempDir dir;
  std::string queued, running, done;
  {
    TaskStore store(dir.path(), 3, 9);
    queued = store.create(job(1), {}, 1).id;
    running = store.create(job(2), "large-memory", 2).id;
    done = store.create(job(3), {}, 3).id;
    store.transition(running, TaskState::kInitializing, 4);
    store.transition(running, TaskState::kRunning, 5);
    store.transition(done, TaskState::kInitializing, 6);
    store.transition(done, TaskState::kRunning, 7);
    store.transition(done, TaskState::kComplete, 8, {.exit_status = 0});
    CHECK(std::filesystem::exists(dir / "tasks.snapshot.json"));
  }
  TaskStore again(dir.path(), 3, 10);
  CHECK(again.get(queued)->state == TaskState::kQueued);
  CHECK(again.get(done)->state == TaskState::kComplete);
  CHECK(*again.get(done)->logs.exit_status == 0);
  TaskRecord r = *again.get(running);
  CHECK(r.state == TaskState::kSystemError);
  CHECK(*r.suggestion == "large-memory");
  CHECK(*r.logs.start_time <= *r.logs.end_time);
  CHECK(again.recovered_failures() == std::vector<std::string>{running});

  std::string later = again.create(job(4), {}, 9).id;
  CHECK(later > done);
  TaskStore third(dir.path(), 3, 11);
  CHECK(third.list(10).tasks.size() == 4);
  CHECK(third.recovered_failures().empty());
  std::uint64_t prev = 0;
  for (const auto& e : third.events()) {
    CHECK(e.seq > prev);
    prev = e.seq;
  }
}

TEST_CASE("recovery tolerates a torn final log line") {
  TempDir dir;
  std::string id;
  {
    TaskStore store(dir.path(), 100, 1);
    id = store.create(job(), {}, 1).id;
  }
  {
    std::ofstream out(dir / "tasks.log", std::ios::app);
    out << "{\"seq\": 2, \"kind\": \"trans";
  }
  TaskStore again(dir.path());
  CHECK(again.get(id)->state == TaskState::kQueued);
  again.transition(id, TaskState::kCanceled, 2);
  TaskStore third(dir.path());
  CHECK(third.get(id)->state == TaskState::kCanceled);
}

TEST_CASE("listener sees every event") {
  TaskStore store;
  std::vector<std::string> kinds;
  store.set_listener([&](const TaskEvent& e) { kinds.push_back(e.kind); });
  auto t = store.create(job(), {}, 1);
  store.transition(t.id, TaskState::kCanceled, 2);
  CHECK(kinds == std::vector<std::string>{"create", "transition"});
}
