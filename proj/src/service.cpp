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

#include "hetsched/service.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <sstream>

#include <unistd.h>

#include "hetsched/error.hpp"
#include "hetsched/packager.hpp"

#ifndef HETSCHED_VERSION
#define HETSCHED_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;

namespace hetsched {

// ---------------------------------------------------------------- config

namespace {

fs::path resolve_path(const std::string& p, const fs::path& base) {
  fs::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

ServiceConfig service_config_from_json(const Json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw Error(Errc::kParse, "service config must be a mapping");
  ServiceConfig c;
  try {
    c.name = doc.value("name", c.name);
    if (doc.contains("state_dir")) c.state_dir = resolve_path(doc.at("state_dir").get<std::string>(), base_dir);
    if (doc.contains("work_dir")) c.work_dir = resolve_path(doc.at("work_dir").get<std::string>(), base_dir);
    if (doc.contains("data_dir")) c.data_dir = resolve_path(doc.at("data_dir").get<std::string>(), base_dir);
    if (doc.contains("ui_dir")) c.ui_dir = resolve_path(doc.at("ui_dir").get<std::string>(), base_dir);
    if (doc.contains("cluster")) {
      const Json& cluster = doc.at("cluster");
      c.cluster = cluster.is_string()
                      ? load_cluster_spec(read_file(resolve_path(cluster.get<std::string>(), base_dir)))
                      : cluster_spec_from_json(cluster);
    }
    if (doc.contains("cost_models")) {
      const Json& cm = doc.at("cost_models");
      c.cost_models = cm.is_string() ? load_cost_model(read_file(resolve_path(cm.get<std::string>(), base_dir)))
                                     : cost_model_from_json(cm);
    }
    c.runner = doc.value("runner", c.runner);
    c.time_scale = doc.value("time_scale", c.time_scale);
    c.seed = doc.value("seed", c.seed);
    c.scheduler.jobs_per_node = doc.value("jobs_per_node", c.scheduler.jobs_per_node);
    c.headroom = doc.value("headroom", c.headroom);
    c.snapshot_every = doc.value("snapshot_every", c.snapshot_every);
  } catch (const Json::exception& e) {
    throw Error(Errc::kParse, std::string("malformed service config: ") + e.what());
  }
  if (c.runner != "simulated" && c.runner != "local") {
    throw Error(Errc::kInvalidArgument, "runner must be 'simulated' or 'local', got '" + c.runner + "'");
  }
  if (c.time_scale < 0.0) throw Error(Errc::kInvalidArgument, "time_scale must be >= 0");
  return c;
}

// ---------------------------------------------------------------- runners

namespace {

RunOutcome capture(const std::function<RunResult()>& fn) {
  RunOutcome out;
  try {
    out.result = fn();
  } catch (const Error& e) {
    out.error = e.code();
    out.message = e.what();
  } catch (const std::exception& e) {
    out.error = Errc::kIo;
    out.message = e.what();
  }
  return out;
}

// Results are computed on start; a timer thread releases each one after
// wall_seconds * time_scale of real time.
class SimulatedRunner final : public TaskRunner {
 public:
  SimulatedRunner(CostModel models, std::uint64_t seed, double time_scale, fs::path work_dir)
      : models_(std::move(models)), seed_(seed), scale_(time_scale), work_dir_(std::move(work_dir)) {
    thread_ = std::thread([this] { loop(); });
  }
  ~SimulatedRunner() override { shutdown(); }

  void start(const std::string& task_id, const JobSpec& job, const ToolDescriptor& tool, Completion done) override {
    RunOutcome out = capture([&] { return run_simulated(job, task_id, models_, seed_, {&tool, work_dir_}); });
    double delay = out.result ? out.result->wall_seconds * scale_ : 0.0;
    auto due = Steady::now() + std::chrono::duration_cast<Steady::duration>(std::chrono::duration<double>(delay));
    std::lock_guard lock(mu_);
    if (stopping_) return;
    pending_[task_id] = {due, std::move(done), std::move(out)};
    cv_.notify_all();
  }

  void cancel(const std::string& task_id) override {
    std::lock_guard lock(mu_);
    pending_.erase(task_id);
  }

  void shutdown() override {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
      pending_.clear();
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
  }

 private:
  using Steady = std::chrono::steady_clock;
  struct Pending {
    Steady::time_point due;
    Completion done;
    RunOutcome outcome;
  };

  void loop() {
    std::unique_lock lock(mu_);
    while (!stopping_) {
      auto next = pending_.end();
      for (auto it = pending_.begin(); it != pending_.end(); ++it) {
        if (next == pending_.end() || it->second.due < next->second.due) next = it;
      }
      if (next == pending_.end()) {
        cv_.wait(lock);
        continue;
      }
      if (next->second.due > Steady::now()) {
        cv_.wait_until(lock, next->second.due);
        continue;
      }
      Pending p = std::move(next->second);
      pending_.erase(next);
      lock.unlock();
      p.done(std::move(p.outcome));
      lock.lock();
    }
  }

  CostModel models_;
  std::uint64_t seed_;
  double scale_;
  fs::path work_dir_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, Pending> pending_;
  bool stopping_ = false;
  std::thread thread_;
};

class LocalRunner final : public TaskRunner {
 public:
  explicit LocalRunner(fs::path work_dir) : work_dir_(std::move(work_dir)) {}
  ~LocalRunner() override { shutdown(); }

  void start(const std::string& task_id, const JobSpec& job, const ToolDescriptor& tool, Completion done) override {
    std::lock_guard lock(mu_);
    if (stopping_) return;
    reap();
    auto slot = std::make_shared<Slot>();
    slot->thread = std::thread([this, slot, task_id, job, tool, done = std::move(done)] {
      RunOutcome out = capture([&] { return run_local(job, tool, task_id, work_dir_, &slot->cancel); });
      if (!slot->cancel.load()) done(std::move(out));
      slot->finished = true;
    });
    jobs_.emplace(task_id, slot);
  }

  void cancel(const std::string& task_id) override {
    std::lock_guard lock(mu_);
    auto range = jobs_.equal_range(task_id);
    for (auto it = range.first; it != range.second; ++it) it->second->cancel = true;
  }

  void shutdown() override {
    std::multimap<std::string, std::shared_ptr<Slot>> jobs;
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
      jobs.swap(jobs_);
    }
    for (auto& [id, slot] : jobs) {
      slot->cancel = true;
      if (slot->thread.joinable()) slot->thread.join();
    }
  }

 private:
  struct Slot {
    std::atomic<bool> cancel{false};
    std::atomic<bool> finished{false};
    std::thread thread;
  };

  void reap() {
    for (auto it = jobs_.begin(); it != jobs_.end();) {
      if (it->second->finished) {
        it->second->thread.join();
        it = jobs_.erase(it);
      } else {
        ++it;
      }
    }
  }

  fs::path work_dir_;
  std::mutex mu_;
  std::multimap<std::string, std::shared_ptr<Slot>> jobs_;
  bool stopping_ = false;
};

}  // namespace

std::unique_ptr<TaskRunner> make_simulated_runner(CostModel models, std::uint64_t seed, double time_scale,
                                                  fs::path work_dir) {
  return std::make_unique<SimulatedRunner>(std::move(models), seed, time_scale, std::move(work_dir));
}

std::unique_ptr<TaskRunner> make_local_runner(fs::path work_dir) {
  return std::make_unique<LocalRunner>(std::move(work_dir));
}

SampleRunner make_sample_runner(const ServiceConfig& config, const ToolDescriptor& tool) {
  if (config.runner == "local") {
    fs::path dir = config.work_dir / "profiling";
    return [tool, dir](const JobSpec& job, const std::string& run_id, std::uint64_t) {
      return run_local(job, tool, run_id, dir);
    };
  }
  CostModel models = config.cost_models;
  return [tool, models](const JobSpec& job, const std::string& run_id, std::uint64_t seed) {
    return run_simulated(job, run_id, models, seed, {&tool, std::nullopt});
  };
}

// ---------------------------------------------------------------- loop

EventLoop::EventLoop() { thread_ = std::thread([this] { run(); }); }

EventLoop::~EventLoop() { stop(); }

void EventLoop::post(std::function<void()> fn) {
  {
    std::lock_guard lock(mu_);
    if (stopping_) return;
    queue_.push_back(std::move(fn));
  }
  cv_.notify_one();
}

void EventLoop::stop() {
  {
    std::lock_guard lock(mu_);
    if (stopping_ && !thread_.joinable()) return;
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable() && std::this_thread::get_id() != thread_.get_id()) thread_.join();
}

void EventLoop::run() {
  for (;;) {
    std::function<void()> fn;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      fn = std::move(queue_.front());
      queue_.pop_front();
    }
    fn();
  }
}

// ---------------------------------------------------------------- runs

Json RunRecord::to_json() const {
  Json steps = Json::array();
  for (const auto& step : step_order) {
    Json s{{"step_id", step}};
    auto t = step_tasks.find(step);
    s["task_id"] = t == step_tasks.end() ? Json(nullptr) : Json(t->second);
    auto st = step_states.find(step);
    s["state"] = task_state_name(st == step_states.end() ? TaskState::kQueued : st->second);
    steps.push_back(std::move(s));
  }
  Json b = Json::object();
  for (const auto& [k, v] : bindings) b[k] = v;
  Json j{{"id", id},
         {"workflow_id", workflow_id},
         {"state", task_state_name(state)},
         {"creation_time", format_rfc3339(creation_time)},
         {"creation_epoch", creation_time},
         {"bindings", b},
         {"steps", steps},
         {"outputs", outputs},
         {"workflow", workflow}};
  if (message) j["message"] = *message;
  return j;
}

RunRecord RunRecord::from_json(const Json& j) {
  RunRecord r;
  r.id = j.at("id").get<std::string>();
  r.workflow_id = j.at("workflow_id").get<std::string>();
  r.state = parse_task_state(j.at("state").get<std::string>()).value();
  r.creation_time = j.at("creation_epoch").get<double>();
  for (const auto& [k, v] : j.at("bindings").items()) r.bindings[k] = v;
  for (const auto& s : j.at("steps")) {
    std::string step = s.at("step_id").get<std::string>();
    r.step_order.push_back(step);
    if (s.at("task_id").is_string()) r.step_tasks[step] = s.at("task_id").get<std::string>();
    r.step_states[step] = parse_task_state(s.at("state").get<std::string>()).value();
  }
  r.outputs = j.value("outputs", Json::object());
  r.workflow = j.at("workflow");
  if (j.contains("message")) r.message = j.at("message").get<std::string>();
  return r;
}

// ---------------------------------------------------------------- errors

int http_status(Errc code) {
  switch (code) {
    case Errc::kUnknownTool:
    case Errc::kUnknownTask:
    case Errc::kNotFound:
    case Errc::kRecordNotFound:
    case Errc::kUnknownFile:
      return 404;
    case Errc::kTaskNotComplete:
    case Errc::kIllegalTransition:
    case Errc::kMissingPayload:
      return 409;
    case Errc::kRepository:
    case Errc::kProtocol:
    case Errc::kNetwork:
    case Errc::kChecksumMismatch:
    case Errc::kAuth:
      return 502;
    case Errc::kIo:
    case Errc::kStorage:
    case Errc::kSpawnFailure:
    case Errc::kMissingOutput:
    case Errc::kMissingModel:
    case Errc::kOverAllocation:
    case Errc::kOverRelease:
    case Errc::kNonFiniteLoss:
      return 500;
    default:
      return 400;
  }
}

ApiResponse error_response(int status, std::string_view code, const std::string& message) {
  ApiResponse r;
  r.status = status;
  r.body = {{"error", {{"code", code}, {"message", message}}}};
  return r;
}

const std::vector<RouteInfo>& route_table() {
  static const std::vector<RouteInfo> routes = {
      {"GET", "/v1/service-info"},
      {"POST", "/v1/tasks"},
      {"GET", "/v1/tasks"},
      {"GET", "/v1/tasks/{id}"},
      {"POST", "/v1/tasks/{id}:cancel"},
      {"POST", "/v1/tasks/{id}:package"},
      {"GET", "/v1/tasks/{id}/crate/{path}"},
      {"POST", "/v1/runs"},
      {"GET", "/v1/runs/{id}"},
      {"GET", "/v1/reports/jobs"},
      {"GET", "/v1/reports/load"},
      {"GET", "/v1/tools"},
      {"POST", "/v1/tools"},
      {"GET", "/v1/tools/{id}"},
      {"GET", "/v1/tools/{id}/suggest"},
      {"POST", "/v1/profiles"},
      {"GET", "/v1/profiles/{tool_id}"},
  };
  return routes;
}

// ---------------------------------------------------------------- service

namespace {

fs::path default_work_dir(const ServiceConfig& c) {
  if (c.state_dir) return *c.state_dir / "work";
  return fs::temp_directory_path() / ("hetsched-work-" + std::to_string(::getpid()));
}

bool is_failure(TaskState s) { return s == TaskState::kExecutorError || s == TaskState::kSystemError; }

}  // namespace

Service::Service(ServiceConfig config, Clock clock, std::unique_ptr<TaskRunner> runner)
    : config_(std::move(config)),
      clock_(clock ? std::move(clock) : Clock(now_seconds)),
      catalog_(config_.state_dir ? std::make_unique<Catalog>(*config_.state_dir) : std::make_unique<Catalog>()),
      profiles_(config_.state_dir ? std::make_unique<ProfileStore>(*config_.state_dir)
                                  : std::make_unique<ProfileStore>()),
      store_(std::make_unique<TaskStore>(config_.state_dir, config_.snapshot_every, config_.id_seed)),
      scheduler_(config_.cluster, config_.scheduler),
      monitor_(config_.cluster),
      runner_(std::move(runner)),
      run_ids_(config_.id_seed ? UlidGenerator(*config_.id_seed ^ 0x9e3779b97f4a7c15ULL) : UlidGenerator()) {
  if (config_.work_dir.empty()) config_.work_dir = default_work_dir(config_);
  if (!runner_) {
    if (config_.runner == "local") {
      runner_ = make_local_runner(config_.work_dir);
    } else if (config_.runner == "simulated") {
      runner_ = make_simulated_runner(config_.cost_models, config_.seed, config_.time_scale, config_.work_dir);
    } else {
      throw Error(Errc::kInvalidArgument, "unknown runner '" + config_.runner + "'");
    }
  }
  for (const auto& e : store_->events()) {
    try {
      monitor_.record_event(lifecycle_event_from_task_event(e));
    } catch (const Error&) {
      // history written by an older layout; the task store stays authoritative
    }
  }
  store_->set_listener([this](const TaskEvent& e) {
    {
      std::lock_guard lock(state_mu_);
      try {
        monitor_.record_event(lifecycle_event_from_task_event(e));
      } catch (const Error&) {
      }
    }
    changed_.notify_all();
  });
  loop_.call([this] { recover(); });
}

Service::~Service() {
  runner_->shutdown();
  loop_.stop();
}

void Service::notify() { changed_.notify_all(); }

ToolDescriptor Service::resolve_tool(const std::string& id, const std::string& version) const {
  auto rec = catalog_->find(id, version);
  if (!rec) {
    catalog_->reload();
    rec = catalog_->find(id, version);
  }
  if (!rec) {
    throw Error(Errc::kUnknownTool, "unknown tool '" + id + (version.empty() ? "" : "@" + version) + "'");
  }
  return rec->descriptor;
}

JobSpec Service::normalize_job(JobSpec job, const ToolDescriptor& tool) const {
  Bindings checked = check_bindings(tool, job.bindings);
  for (auto& [id, value] : checked) {
    if (!is_file_value(value)) continue;
    fs::path p(file_path(value));
    if (p.is_relative() && config_.data_dir) p = *config_.data_dir / p;
    std::optional<std::uint64_t> size;
    if (value.contains("size")) {
      size = value.at("size").get<std::uint64_t>();
    } else {
      std::error_code ec;
      auto s = fs::file_size(p, ec);
      if (!ec) size = s;
    }
    value = make_file_value(p.string(), size);
  }
  job.bindings = std::move(checked);
  job.tool_id = tool.id;
  job.version = tool.version;
  return job;
}

bool Service::placeable(const JobSpec& job, const std::optional<std::string>& suggestion) const {
  QueueEntry entry{"", job, 0.0, suggestion};
  for (const auto& node : config_.cluster.nodes()) {
    if (suggestion && node.class_name != *suggestion) continue;
    ResourceVector demand = placement_demand(entry, config_.cluster.class_of(node), config_.scheduler);
    if (fits(demand, Node{node.id, node.class_name, {}}, config_.cluster)) return true;
  }
  return false;
}

void Service::fail_unplaceable(const std::string& task_id, const std::string& message) {
  double now = clock_();
  TransitionDetails details;
  details.system_message = message;
  store_->transition(task_id, TaskState::kInitializing, now);
  store_->transition(task_id, TaskState::kSystemError, now, details);
  active_tools_.erase(task_id);
}

TaskRecord Service::submit(JobSpec job, const ToolDescriptor& tool) {
  std::optional<std::string> suggestion = suggest_node_class(job, *profiles_);
  TaskRecord rec = store_->create(job, suggestion, clock_());
  active_tools_[rec.id] = tool;
  if (suggestion && config_.cluster.find_class(*suggestion) == nullptr) {
    fail_unplaceable(rec.id, "suggested class '" + *suggestion + "' is not part of the cluster");
  } else if (!placeable(job, suggestion)) {
    fail_unplaceable(rec.id, "no node can hold the job's resource demand");
  } else {
    scheduler_.enqueue({rec.id, job, rec.creation_time, suggestion});
    tick();
  }
  return rec;
}

void Service::tick() {
  double now = clock_();
  for (const auto& d : scheduler_.tick(now)) {
    TransitionDetails placed;
    placed.node_id = d.node_id;
    placed.node_class = config_.cluster.node(d.node_id).class_name;
    TaskRecord rec = store_->transition(d.task_id, TaskState::kInitializing, now, placed);
    store_->transition(d.task_id, TaskState::kRunning, now);
    std::string id = d.task_id;
    try {
      runner_->start(id, rec.job, active_tools_.at(id), [this, id](RunOutcome outcome) {
        loop_.post([this, id, outcome = std::move(outcome)] { on_finished(id, outcome); });
      });
    } catch (const std::exception& e) {
      on_finished(id, RunOutcome{std::nullopt, Errc::kSpawnFailure, e.what()});
    }
  }
}

void Service::on_finished(const std::string& task_id, const RunOutcome& outcome) {
  auto task = store_->get(task_id);
  if (!task || is_terminal(task->state)) return;  // canceled while the runner was busy
  scheduler_.finish(task_id);
  TransitionDetails details;
  TaskState to = TaskState::kComplete;
  if (outcome.error) {
    to = *outcome.error == Errc::kMissingOutput ? TaskState::kExecutorError : TaskState::kSystemError;
    details.system_message = outcome.message;
  } else {
    const RunResult& r = *outcome.result;
    details.exit_status = r.exit_status;
    details.consumption = r;
    if (r.exit_status != 0) {
      to = TaskState::kExecutorError;
    } else {
      details.outputs = r.output_files;
    }
  }
  store_->transition(task_id, to, clock_(), details);
  active_tools_.erase(task_id);
  if (auto it = task_runs_.find(task_id); it != task_runs_.end()) advance_run(runs_.at(it->second));
  tick();
}

TaskRecord Service::create_task(const Json& body) {
  JobSpec job = jobspec_from_json(body);
  ToolDescriptor tool = resolve_tool(job.tool_id, job.version);
  job = normalize_job(std::move(job), tool);
  return loop_.call([&] { return submit(job, tool); });
}

std::optional<TaskRecord> Service::get_task(const std::string& id) const { return store_->get(id); }

TaskPage Service::list_tasks(std::size_t page_size, const std::optional<std::string>& token,
                             std::optional<TaskState> state) const {
  return store_->list(page_size, token, state);
}

TaskRecord Service::cancel_task(const std::string& id) {
  return loop_.call([&] {
    auto task = store_->get(id);
    if (!task) throw Error(Errc::kUnknownTask, "unknown task '" + id + "'");
    if (is_terminal(task->state)) return *task;
    if (task->state == TaskState::kQueued) {
      scheduler_.dequeue(id);
    } else {
      runner_->cancel(id);
      scheduler_.finish(id);
    }
    active_tools_.erase(id);
    TransitionDetails details;
    details.system_message = "canceled by request";
    TaskRecord rec = store_->transition(id, TaskState::kCanceled, clock_(), details);
    if (auto it = task_runs_.find(id); it != task_runs_.end()) advance_run(runs_.at(it->second));
    tick();
    return rec;
  });
}

RunRecord Service::create_run(const Json& body) {
  if (!body.is_object() || !body.contains("workflow")) {
    throw Error(Errc::kInvalidArgument, "field 'workflow': required");
  }
  Json doc = body.at("workflow").is_string() ? load_document(body.at("workflow").get<std::string>())
                                             : body.at("workflow");
  WorkflowDescriptor wf = workflow_from_json(doc);

  Bindings bindings;
  const Json& raw = body.contains("bindings") ? body.at("bindings") : Json::object();
  if (!raw.is_object()) throw Error(Errc::kInvalidArgument, "field 'bindings': expected object");
  for (const auto& [k, v] : raw.items()) {
    auto param = std::find_if(wf.inputs.begin(), wf.inputs.end(), [&](const auto& p) { return p.id == k; });
    if (param == wf.inputs.end()) throw Error(Errc::kInvalidArgument, "binding '" + k + "': no such workflow input");
    bindings[k] = check_binding(*param, v);
  }
  for (const auto& p : wf.inputs) {
    if (!bindings.count(p.id) && p.required && !p.default_value) {
      throw Error(Errc::kMissingInput, "workflow input '" + p.id + "' is required");
    }
  }
  for (auto& [k, v] : bindings) {
    if (is_file_value(v) && config_.data_dir && fs::path(file_path(v)).is_relative()) {
      v = make_file_value((*config_.data_dir / file_path(v)).string(),
                          v.contains("size") ? std::optional<std::uint64_t>(v.at("size").get<std::uint64_t>())
                                             : std::nullopt);
    }
  }

  DagPlan dag = plan(wf, [this](const std::string& ref) -> std::optional<ToolDescriptor> {
    auto [id, version] = split_tool_ref(ref);
    try {
      return resolve_tool(id, version);
    } catch (const Error&) {
      return std::nullopt;
    }
  });

  return loop_.call([&] {
    for (const auto& [ref, tool] : wf.embedded_tools) {
      if (!catalog_->find(tool.id, tool.version)) catalog_->register_tool(tool, Visibility::kPrivate, clock_());
    }
    ActiveRun run;
    run.workflow = wf;
    RunRecord& rec = run.record;
    rec.creation_time = clock_();
    rec.id = run_ids_.next(rec.creation_time);
    rec.workflow_id = wf.id;
    rec.bindings = bindings;
    rec.workflow = doc;
    rec.step_order = dag.topo_order;
    for (const auto& s : rec.step_order) rec.step_states[s] = TaskState::kQueued;
    std::string id = rec.id;
    auto [it, inserted] = runs_.emplace(id, std::move(run));
    advance_run(it->second);
    return it->second.record;
  });
}

void Service::advance_run(ActiveRun& run) {
  RunRecord& rec = run.record;
  std::optional<TaskState> failure;
  bool canceled = false;

  auto refresh = [&](const std::string& step) {
    const std::string& task_id = rec.step_tasks.at(step);
    auto task = store_->get(task_id);
    if (!task) return;
    rec.step_states[step] = task->state;
    if (task->state == TaskState::kComplete) {
      for (const auto& out : task->outputs) {
        run.completed_outputs[step + "/" + out.id] = make_file_value(out.path, out.size_bytes);
      }
    }
    if (is_failure(task->state) && !failure) failure = task->state;
    if (task->state == TaskState::kCanceled) canceled = true;
  };

  for (const auto& step : rec.step_order) {
    if (rec.step_tasks.count(step)) {
      refresh(step);
      continue;
    }
    if (is_terminal(rec.state) || failure || canceled || rec.message) {
      rec.step_states[step] = TaskState::kCanceled;
      continue;
    }
    const WorkflowStep* s = run.workflow.find_step(step);
    bool ready = true;
    for (const auto& [in, source] : s->in) {
      auto slash = source.find('/');
      if (slash == std::string::npos) continue;
      auto st = rec.step_states.find(source.substr(0, slash));
      if (st == rec.step_states.end() || st->second != TaskState::kComplete) ready = false;
    }
    if (!ready) continue;
    try {
      JobSpec job = instantiate_step(*s, run.completed_outputs, run.workflow, rec.bindings);
      ToolDescriptor tool;
      if (auto e = run.workflow.embedded_tools.find(s->run); e != run.workflow.embedded_tools.end()) {
        tool = e->second;
      } else {
        tool = resolve_tool(job.tool_id, job.version);
      }
      job = normalize_job(std::move(job), tool);
      TaskRecord t = submit(job, tool);
      rec.step_tasks[step] = t.id;
      task_runs_[t.id] = rec.id;
      refresh(step);
    } catch (const Error& e) {
      rec.message = "step " + step + ": " + e.what();
      rec.step_states[step] = TaskState::kSystemError;
      if (!failure) failure = TaskState::kSystemError;
    }
  }

  if (!is_terminal(rec.state)) {
    bool all_complete = true;
    bool started = false;
    for (const auto& step : rec.step_order) {
      TaskState st = rec.step_states[step];
      if (st != TaskState::kComplete) all_complete = false;
      if (st != TaskState::kQueued) started = true;
    }
    if (failure) {
      rec.state = *failure;
    } else if (canceled) {
      rec.state = TaskState::kCanceled;
    } else if (all_complete) {
      rec.state = TaskState::kComplete;
      for (const auto& out : run.workflow.outputs) {
        if (auto it = run.completed_outputs.find(out.source); it != run.completed_outputs.end()) {
          rec.outputs[out.id] = it->second;
        }
      }
    } else {
      rec.state = started ? TaskState::kRunning : TaskState::kQueued;
    }
    if (is_terminal(rec.state)) {
      for (const auto& step : rec.step_order) {
        if (!rec.step_tasks.count(step) && rec.step_states[step] == TaskState::kQueued) {
          rec.step_states[step] = TaskState::kCanceled;
        }
      }
    }
  }
  persist_run(rec);
}

void Service::persist_run(const RunRecord& record) {
  if (config_.state_dir) {
    fs::create_directories(*config_.state_dir / "runs");
    write_file_atomic(*config_.state_dir / "runs" / (record.id + ".json"), record.to_json().dump(2) + "\n");
  }
  {
    std::lock_guard lock(state_mu_);
    run_snapshots_[record.id] = record;
  }
  notify();
}

std::optional<RunRecord> Service::get_run(const std::string& id) const {
  std::lock_guard lock(state_mu_);
  auto it = run_snapshots_.find(id);
  if (it == run_snapshots_.end()) return std::nullopt;
  return it->second;
}

void Service::recover() {
  std::optional<std::string> token;
  std::vector<TaskRecord> queued;
  do {
    TaskPage page = store_->list(500, token, TaskState::kQueued);
    queued.insert(queued.end(), page.tasks.begin(), page.tasks.end());
    token = page.next_page_token;
  } while (token);
  for (const auto& task : queued) {
    try {
      active_tools_[task.id] = resolve_tool(task.job.tool_id, task.job.version);
    } catch (const Error& e) {
      active_tools_[task.id] = {};
      fail_unplaceable(task.id, e.what());
      continue;
    }
    if (task.suggestion && config_.cluster.find_class(*task.suggestion) == nullptr) {
      fail_unplaceable(task.id, "suggested class '" + *task.suggestion + "' is not part of the cluster");
    } else if (!placeable(task.job, task.suggestion)) {
      fail_unplaceable(task.id, "no node can hold the job's resource demand");
    } else {
      scheduler_.enqueue({task.id, task.job, task.creation_time, task.suggestion});
    }
  }

  if (config_.state_dir && fs::is_directory(*config_.state_dir / "runs")) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(*config_.state_dir / "runs")) {
      if (entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      ActiveRun run;
      try {
        run.record = RunRecord::from_json(Json::parse(read_file(file)));
        run.workflow = workflow_from_json(run.record.workflow.is_string()
                                              ? load_document(run.record.workflow.get<std::string>())
                                              : run.record.workflow);
      } catch (const std::exception&) {
        continue;  // unreadable run document; tasks remain visible on their own
      }
      std::string id = run.record.id;
      for (const auto& [step, task] : run.record.step_tasks) task_runs_[task] = id;
      auto [it, inserted] = runs_.emplace(id, std::move(run));
      advance_run(it->second);
    }
  }
  tick();
}

std::vector<JobStatRecord> Service::job_report(const JobFilter& filter) const {
  std::lock_guard lock(state_mu_);
  return monitor_.job_report(filter);
}

LoadReport Service::load_report(std::optional<double> from, std::optional<double> to) const {
  double now = clock_();
  double hi = to.value_or(now);
  double lo = from.value_or(hi - 3600.0);
  std::lock_guard lock(state_mu_);
  return monitor_.cluster_load_report(lo, hi, now);
}

Json Service::scheduler_status() const {
  return loop_.call([this] { return scheduler_.status(); });
}

Json Service::service_info() const {
  Json endpoints = Json::array();
  for (const auto& r : route_table()) endpoints.push_back(std::string(r.method) + " " + r.path);
  if (config_.ui_dir) endpoints.push_back("GET /ui/");
  return {{"name", config_.name},
          {"version", HETSCHED_VERSION},
          {"api", {{"tes", "subset"}, {"wes", "subset"}}},
          {"task_states", {"QUEUED", "INITIALIZING", "RUNNING", "COMPLETE", "EXECUTOR_ERROR", "SYSTEM_ERROR",
                           "CANCELED"}},
          {"endpoints", endpoints},
          {"node_classes", config_.cluster.class_names()},
          {"runner", config_.runner}};
}

Json Service::package_task(const std::string& id, const Json& body) {
  auto task = store_->get(id);
  if (!task) throw Error(Errc::kUnknownTask, "unknown task '" + id + "'");
  CrateOptions options;
  if (body.is_object()) {
    if (body.contains("doi") && body.at("doi").is_string()) options.doi = body.at("doi").get<std::string>();
    if (body.contains("author") && body.at("author").is_string()) {
      options.author = body.at("author").get<std::string>();
    }
  }
  ToolDescriptor tool = resolve_tool(task->job.tool_id, task->job.version);
  ExperimentPackage pkg = build_crate(*task, tool, options);
  fs::path dir = (config_.state_dir ? *config_.state_dir : config_.work_dir) / "crates" / id;
  std::vector<std::string> files = write_crate(pkg, dir);
  return {{"task_id", id},
          {"directory", dir.string()},
          {"files", files},
          {"validation", validate_crate(dir).to_json()}};
}

Json Service::profile(const Json& body) {
  ProfilingRequest request = profiling_request_from_json(body);
  ToolDescriptor tool = resolve_tool(request.tool_id, body.value("version", ""));
  ProfilingOptions options;
  options.headroom = config_.headroom;
  options.parallelism = body.value("parallelism", std::size_t{1});
  ProfilingOutcome outcome =
      profile_tool(request, tool, config_.cluster.classes(), make_sample_runner(config_, tool), options);
  outcome.profile.created_at = clock_();
  profiles_->save(outcome.profile, outcome.samples);
  std::size_t failed = std::count_if(outcome.samples.begin(), outcome.samples.end(),
                                     [](const ProfileSample& s) { return s.failed; });
  return {{"tool_id", outcome.profile.tool_id},
          {"cv_accuracy", outcome.profile.cv_accuracy},
          {"degenerate", outcome.profile.degenerate},
          {"model", ml::family_name(outcome.profile.config.family)},
          {"hyperparams", outcome.profile.config.hyperparams()},
          {"sample_count", outcome.samples.size()},
          {"failed_samples", failed},
          {"warnings", outcome.warnings}};
}

bool Service::wait_terminal(const std::string& task_id, double timeout_seconds) const {
  std::unique_lock lock(state_mu_);
  return changed_.wait_for(lock, std::chrono::duration<double>(timeout_seconds), [&] {
    auto job = monitor_.job(task_id);
    return job && is_terminal(job->state);
  });
}

void Service::drain() const {
  loop_.call([] {});
}

bool Service::wait_run_terminal(const std::string& run_id, double timeout_seconds) const {
  std::unique_lock lock(state_mu_);
  return changed_.wait_for(lock, std::chrono::duration<double>(timeout_seconds), [&] {
    auto it = run_snapshots_.find(run_id);
    return it != run_snapshots_.end() && is_terminal(it->second.state);
  });
}

// ---------------------------------------------------------------- routing

namespace {

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  return parts;
}

std::optional<std::string> query(const ApiRequest& req, const std::string& key) {
  auto it = req.query.find(key);
  if (it == req.query.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

double parse_time(const std::string& text) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  return parse_rfc3339(text);
}

Json parse_body(const ApiRequest& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const Json::exception& e) {
    throw Error(Errc::kParse, std::string("request body is not JSON: ") + e.what());
  }
}

std::optional<TaskState> state_filter(const ApiRequest& req) {
  auto s = query(req, "state");
  if (!s) return std::nullopt;
  auto st = parse_task_state(*s);
  if (!st) throw Error(Errc::kInvalidArgument, "unknown state '" + *s + "'");
  return st;
}

ApiResponse ok(Json body) {
  ApiResponse r;
  r.body = std::move(body);
  return r;
}

}  // namespace

ApiResponse Service::handle(const ApiRequest& req) {
  try {
    std::vector<std::string> p = split_path(req.path);
    const std::string& m = req.method;
    auto not_found = [&] { return error_response(404, "not-found", "no route for " + m + " " + req.path); };
    if (p.size() < 2 || p[0] != "v1") return not_found();
    const std::string& res = p[1];

    if (res == "service-info" && p.size() == 2 && m == "GET") return ok(service_info());

    if (res == "tasks") {
      if (p.size() == 2 && m == "POST") return ok({{"id", create_task(parse_body(req)).id}});
      if (p.size() == 2 && m == "GET") {
        std::size_t size = 256;
        if (auto s = query(req, "page_size")) {
          try {
            size = std::stoul(*s);
          } catch (const std::exception&) {
            throw Error(Errc::kInvalidArgument, "page_size must be a positive integer");
          }
        }
        TaskView view = query(req, "view") == std::optional<std::string>("FULL") ? TaskView::kFull
                                                                                  : TaskView::kMinimal;
        TaskPage page = list_tasks(size, query(req, "page_token"), state_filter(req));
        Json tasks = Json::array();
        for (const auto& t : page.tasks) tasks.push_back(to_json(t, view));
        Json out{{"tasks", tasks}};
        if (page.next_page_token) out["next_page_token"] = *page.next_page_token;
        return ok(out);
      }
      if (p.size() == 3) {
        std::string id = p[2];
        std::string action;
        if (auto colon = id.find(':'); colon != std::string::npos) {
          action = id.substr(colon + 1);
          id = id.substr(0, colon);
        }
        if (action.empty() && m == "GET") {
          auto t = get_task(id);
          if (!t) throw Error(Errc::kUnknownTask, "unknown task '" + id + "'");
          auto v = query(req, "view").value_or("MINIMAL");
          if (v != "MINIMAL" && v != "FULL") throw Error(Errc::kInvalidArgument, "view must be MINIMAL or FULL");
          return ok(to_json(*t, v == "FULL" ? TaskView::kFull : TaskView::kMinimal));
        }
        if (action == "cancel" && m == "POST") {
          TaskRecord t = cancel_task(id);
          return ok({{"id", t.id}, {"state", task_state_name(t.state)}});
        }
        if (action == "package" && m == "POST") return ok(package_task(id, parse_body(req)));
      }
      if (p.size() >= 5 && p[3] == "crate" && m == "GET") {
        fs::path rel;
        for (std::size_t i = 4; i < p.size(); ++i) {
          if (p[i] == ".." || p[i] == ".") throw Error(Errc::kInvalidArgument, "invalid crate path");
          rel /= p[i];
        }
        fs::path file = (config_.state_dir ? *config_.state_dir : config_.work_dir) / "crates" / p[2] / rel;
        if (!fs::is_regular_file(file)) throw Error(Errc::kNotFound, "no crate file " + rel.string());
        ApiResponse r;
        r.file = file;
        return r;
      }
      return not_found();
    }

    if (res == "runs") {
      if (p.size() == 2 && m == "POST") return ok({{"id", create_run(parse_body(req)).id}});
      if (p.size() == 3 && m == "GET") {
        auto r = get_run(p[2]);
        if (!r) throw Error(Errc::kNotFound, "unknown run '" + p[2] + "'");
        return ok(r->to_json());
      }
      return not_found();
    }

    if (res == "reports" && p.size() == 3 && m == "GET") {
      if (p[2] == "jobs") {
        JobFilter filter;
        filter.tool_id = query(req, "tool_id");
        filter.state = state_filter(req);
        if (auto s = query(req, "since")) filter.since = parse_time(*s);
        Json jobs = Json::array();
        for (const auto& j : job_report(filter)) jobs.push_back(j.to_json());
        return ok({{"jobs", jobs}});
      }
      if (p[2] == "load") {
        std::optional<double> from, to;
        if (auto s = query(req, "from")) from = parse_time(*s);
        if (auto s = query(req, "to")) to = parse_time(*s);
        return ok(load_report(from, to).to_json());
      }
      return not_found();
    }

    if (res == "tools") {
      if (p.size() == 2 && m == "GET") {
        catalog_->reload();  // tools added offline by the CLI
        Json tools = Json::array();
        for (const auto& r : catalog_->list_tools(Visibility::kPublic)) tools.push_back(to_json(r));
        return ok({{"tools", tools}});
      }
      if (p.size() == 2 && m == "POST") {
        Json body = parse_body(req);
        ToolDescriptor tool = body.contains("document") && body.at("document").is_string()
                                  ? parse_tool(body.at("document").get<std::string>())
                                  : tool_from_json(body.contains("document") ? body.at("document") : body);
        Visibility vis = body.value("visibility", "public") == "private" ? Visibility::kPrivate
                                                                          : Visibility::kPublic;
        return ok(to_json(catalog_->register_tool(tool, vis, clock_())));
      }
      if (p.size() == 3 && m == "GET") {
        ToolDescriptor tool = resolve_tool(p[2], query(req, "version").value_or(""));
        auto rec = catalog_->find(tool.id, tool.version);
        Json out = to_json(*rec);
        out["form"] = to_json(render_form_schema(tool));
        return ok(out);
      }
      if (p.size() == 4 && p[3] == "suggest" && m == "GET") {
        ToolDescriptor tool = resolve_tool(p[2], query(req, "version").value_or(""));
        JobSpec job;
        job.tool_id = tool.id;
        if (auto b = query(req, "bindings")) {
          Json raw;
          try {
            raw = Json::parse(*b);
          } catch (const Json::exception&) {
            throw Error(Errc::kParse, "bindings must be a JSON object");
          }
          if (!raw.is_object()) throw Error(Errc::kInvalidArgument, "bindings must be a JSON object");
          for (const auto& [k, v] : raw.items()) job.bindings[k] = v;
        }
        auto profile = profiles_->find(tool.id);
        Json out{{"tool_id", tool.id}, {"suggestion", nullptr}, {"profile", nullptr}};
        if (profile) {
          out["suggestion"] = profile->predict(job.bindings);
          out["profile"] = {{"cv_accuracy", profile->cv_accuracy},
                            {"created_at", format_rfc3339(profile->created_at)},
                            {"sample_count", profile->sample_count}};
        }
        return ok(out);
      }
      return not_found();
    }

    if (res == "profiles") {
      if (p.size() == 2 && m == "POST") return ok(profile(parse_body(req)));
      if (p.size() == 3 && m == "GET") {
        auto profile = profiles_->find(p[2]);
        if (!profile) throw Error(Errc::kNotFound, "no profile stored for '" + p[2] + "'");
        return ok(profile->to_json());
      }
      return not_found();
    }
    return not_found();
  } catch (const Error& e) {
    return error_response(http_status(e.code()), errc_name(e.code()), e.what());
  } catch (const Json::exception& e) {
    return error_response(400, errc_name(Errc::kParse), e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

}  // namespace hetsched
