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

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "hetsched/catalog.hpp"
#include "hetsched/cluster.hpp"
#include "hetsched/error.hpp"
#include "hetsched/executor.hpp"
#include "hetsched/monitoring.hpp"
#include "hetsched/profiler.hpp"
#include "hetsched/scheduler.hpp"
#include "hetsched/tasks.hpp"
#include "hetsched/workflow.hpp"

namespace hetsched {

struct ServiceConfig {
  std::string name = "hetsched";
  std::optional<std::filesystem::path> state_dir;  // memory-only when absent
  std::filesystem::path work_dir;                  // task sandboxes; default <state_dir>/work
  std::optional<std::filesystem::path> data_dir;   // base for relative File paths in submissions
  ClusterSpec cluster;
  std::string runner = "simulated";  // "simulated" or "local"
  CostModel cost_models;             // simulated runner only
  double time_scale = 0.0;           // simulated wall seconds -> real seconds
  std::uint64_t seed = 0;
  SchedulerOptions scheduler;
  double headroom = kDefaultHeadroom;
  std::size_t snapshot_every = 100;
  std::optional<std::filesystem::path> ui_dir;  // static files under /ui/
  std::optional<std::uint64_t> id_seed;         // deterministic ids for tests
};

// Reads the service settings from a YAML/JSON document: {name?, state_dir?,
// work_dir?, data_dir?, cluster? (inline or path), runner?, cost_models (inline
// or path)?, time_scale?, seed?, jobs_per_node?, headroom?, ui_dir?}. Relative
// paths resolve against base_dir.
ServiceConfig service_config_from_json(const Json& doc, const std::filesystem::path& base_dir = {});

using Clock = std::function<double()>;

struct RunOutcome {
  std::optional<RunResult> result;
  std::optional<Errc> error;
  std::string message;
};

// Executes task payloads off the scheduler loop.
class TaskRunner {
 public:
  using Completion = std::function<void(RunOutcome)>;

  virtual ~TaskRunner() = default;
  // `done` fires once from a runner thread unless cancel() wins the race.
  virtual void start(const std::string& task_id, const JobSpec& job, const ToolDescriptor& tool,
                     Completion done) = 0;
  virtual void cancel(const std::string& task_id) = 0;
  // Stops every pending job; no completion fires afterwards.
  virtual void shutdown() = 0;
};

std::unique_ptr<TaskRunner> make_simulated_runner(CostModel models, std::uint64_t seed, double time_scale,
                                                  std::filesystem::path work_dir);
std::unique_ptr<TaskRunner> make_local_runner(std::filesystem::path work_dir);

// Sample runner for profiling grids matching the configured backend.
SampleRunner make_sample_runner(const ServiceConfig& config, const ToolDescriptor& tool);

// Single-threaded executor; `call` runs inline when already on the loop.
class EventLoop {
 public:
  EventLoop();
  ~EventLoop();
  EventLoop(const EventLoop&) = delete;
  EventLoop& operator=(const EventLoop&) = delete;

  // Dropped silently once stopped.
  void post(std::function<void()> fn);

  template <class F>
  std::invoke_result_t<F> call(F&& fn) {
    using R = std::invoke_result_t<F>;
    if (std::this_thread::get_id() == thread_.get_id()) return fn();
    auto task = std::make_shared<std::packaged_task<R()>>(std::forward<F>(fn));
    std::future<R> result = task->get_future();
    post([task] { (*task)(); });
    return result.get();
  }

  void stop();

 private:
  void run();

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> queue_;
  bool stopping_ = false;
  std::thread thread_;
};

// Workflow run; state aggregates the step tasks.
struct RunRecord {
  std::string id;
  std::string workflow_id;
  TaskState state = TaskState::kQueued;
  double creation_time = 0.0;
  Bindings bindings;
  Json workflow;                                 // the submitted document
  std::vector<std::string> step_order;           // topological
  std::map<std::string, std::string> step_tasks;  // step -> task id, once submitted
  std::map<std::string, TaskState> step_states;  // steps without a task: QUEUED or CANCELED
  Json outputs = Json::object();                 // workflow output id -> File value
  std::optional<std::string> message;

  Json to_json() const;
  static RunRecord from_json(const Json& j);
};

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  Json body = Json::object();
  std::optional<std::filesystem::path> file;  // served as bytes instead of body
};

int http_status(Errc code);
ApiResponse error_response(int status, std::string_view code, const std::string& message);

struct RouteInfo {
  const char* method;
  const char* path;
};

// Every route the service answers.
const std::vector<RouteInfo>& route_table();

// Task and workflow-run service. Every mutation runs on the event loop;
// reads return copies.
class Service {
 public:
  explicit Service(ServiceConfig config, Clock clock = now_seconds,
                   std::unique_ptr<TaskRunner> runner = nullptr);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Json service_info() const;

  // Body is a job spec. kUnknownTool for unknown tools, kTypeMismatch /
  // kMissingInput / kInvalidArgument for bad bindings.
  TaskRecord create_task(const Json& body);
  std::optional<TaskRecord> get_task(const std::string& id) const;
  TaskPage list_tasks(std::size_t page_size, const std::optional<std::string>& token,
                      std::optional<TaskState> state) const;
  // Idempotent on terminal tasks. kUnknownTask when absent.
  TaskRecord cancel_task(const std::string& id);

  // Body {workflow: document object or text, bindings}.
  RunRecord create_run(const Json& body);
  std::optional<RunRecord> get_run(const std::string& id) const;

  std::vector<JobStatRecord> job_report(const JobFilter& filter = {}) const;
  LoadReport load_report(std::optional<double> from, std::optional<double> to) const;

  // Writes <state_dir or work_dir>/crates/<task_id>.
  Json package_task(const std::string& id, const Json& body);
  // Synchronous profiling grid plus training; bypasses the scheduler.
  Json profile(const Json& body);

  ApiResponse handle(const ApiRequest& request);

  // Blocks until the task is terminal or the timeout passes.
  bool wait_terminal(const std::string& task_id, double timeout_seconds = 30.0) const;
  bool wait_run_terminal(const std::string& run_id, double timeout_seconds = 30.0) const;
  // Returns once every mutation queued before the call has been applied.
  void drain() const;

  Catalog& catalog() { return *catalog_; }
  ProfileStore& profiles() { return *profiles_; }
  const ServiceConfig& config() const { return config_; }
  Json scheduler_status() const;

 private:
  struct ActiveRun {
    RunRecord record;
    WorkflowDescriptor workflow;
    std::map<std::string, Json> completed_outputs;  // "step/out" -> File value
  };

  ToolDescriptor resolve_tool(const std::string& id, const std::string& version) const;
  JobSpec normalize_job(JobSpec job, const ToolDescriptor& tool) const;
  TaskRecord submit(JobSpec job, const ToolDescriptor& tool);  // loop only
  void tick();                                                 // loop only
  void on_finished(const std::string& task_id, const RunOutcome& outcome);
  void fail_unplaceable(const std::string& task_id, const std::string& message);
  bool placeable(const JobSpec& job, const std::optional<std::string>& suggestion) const;
  void advance_run(ActiveRun& run);
  void persist_run(const RunRecord& record);
  void recover();
  void notify();

  ServiceConfig config_;
  Clock clock_;
  std::unique_ptr<Catalog> catalog_;
  std::unique_ptr<ProfileStore> profiles_;
  std::unique_ptr<TaskStore> store_;
  Scheduler scheduler_;
  Monitor monitor_;
  std::unique_ptr<TaskRunner> runner_;
  UlidGenerator run_ids_;

  // Loop-owned state.
  std::map<std::string, ToolDescriptor> active_tools_;  // task id -> descriptor
  std::map<std::string, ActiveRun> runs_;
  std::map<std::string, std::string> task_runs_;  // task id -> run id

  mutable std::mutex state_mu_;  // guards monitor_ and run_snapshots_
  mutable std::condition_variable changed_;
  std::map<std::string, RunRecord> run_snapshots_;
  mutable EventLoop loop_;  // last: stops first on destruction
};

// httplib adapter; JSON 404 for unknown routes.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  void start();            // serves on a background thread
  void listen_blocking();  // serves on the calling thread
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hetsched
