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

#include "hetsched/cli.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <pthread.h>

#include <CLI11.hpp>

#include "hetsched/catalog.hpp"
#include "hetsched/error.hpp"
#include "hetsched/monitoring.hpp"
#include "hetsched/packager.hpp"
#include "hetsched/profiler.hpp"
#include "hetsched/repo.hpp"
#include "hetsched/scheduler.hpp"
#include "hetsched/service.hpp"
#include "hetsched/tasks.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose `_res` macro breaks Eigen headers.
#include <httplib.h>

namespace fs = std::filesystem;

namespace hetsched::cli {

namespace {

constexpr const char* kDefaultApiUrl = "http://127.0.0.1:8080";

// Non-2xx answer from the service.
struct ApiFailure : std::runtime_error {
  ApiFailure(int s, std::string c, const std::string& m) : std::runtime_error(m), status(s), code(std::move(c)) {}
  int status;
  std::string code;
};

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

struct Context {
  bool json = false;
  std::string config_path;
  std::string state_dir_flag;
  std::string api_url_flag;
  std::string repo_token_flag;

  Json config = Json::object();
  fs::path config_base;
  std::ostream* out = nullptr;

  void load_config() {
    fs::path path = config_path;
    if (path.empty()) {
      if (!fs::exists("hetsched.yaml")) return;
      path = "hetsched.yaml";
    }
    if (!fs::exists(path)) throw Error(Errc::kInvalidArgument, "config file " + path.string() + " not found");
    config = load_document(read_file(path));
    if (config.is_null()) config = Json::object();
    if (!config.is_object()) throw Error(Errc::kParse, "config file must be a mapping");
    config_base = fs::absolute(path).parent_path();
  }

  fs::path config_path_value(const std::string& key) const {
    fs::path p = config.at(key).get<std::string>();
    return p.is_relative() ? config_base / p : p;
  }

  std::optional<fs::path> state_dir() const {
    if (!state_dir_flag.empty()) return fs::absolute(state_dir_flag);
    if (auto e = env("HETSCHED_STATE_DIR")) return fs::absolute(*e);
    if (config.contains("state_dir")) return config_path_value("state_dir");
    return std::nullopt;
  }

  fs::path require_state_dir() const {
    auto dir = state_dir();
    if (!dir) {
      throw Error(Errc::kInvalidArgument, "no state directory: pass --state-dir, set HETSCHED_STATE_DIR or "
                                          "add state_dir to hetsched.yaml");
    }
    return *dir;
  }

  std::string api_url() const {
    if (!api_url_flag.empty()) return api_url_flag;
    if (auto e = env("HETSCHED_API_URL")) return *e;
    if (config.contains("api_url")) return config.at("api_url").get<std::string>();
    return kDefaultApiUrl;
  }

  std::optional<std::string> repo_token() const {
    if (!repo_token_flag.empty()) return repo_token_flag;
    return env("HETSCHED_REPO_TOKEN");
  }

  // Service settings: the config document with state_dir resolved and
  // flag overrides applied on top.
  ServiceConfig service_config(const Json& overrides = Json::object()) const {
    Json doc = config;
    for (const auto& [k, v] : overrides.items()) doc[k] = v;
    if (auto dir = state_dir()) doc["state_dir"] = dir->string();
    return service_config_from_json(doc, config_base);
  }

  void emit(const Json& j, const std::string& text) const {
    if (json) {
      *out << j.dump(2) << "\n";
    } else {
      *out << text;
      if (!text.empty() && text.back() != '\n') *out << "\n";
    }
  }
};

// ---------------------------------------------------------------- helpers

Json api_call(const Context& ctx, const std::string& method, const std::string& path,
              const std::optional<Json>& body = std::nullopt) {
  std::string url = ctx.api_url();
  httplib::Client client(url);
  client.set_connection_timeout(5);
  client.set_read_timeout(600);
  httplib::Result res = method == "GET" ? client.Get(path)
                                        : client.Post(path, body ? body->dump() : "{}", "application/json");
  if (!res) throw Error(Errc::kNetwork, "cannot reach " + url + ": " + httplib::to_string(res.error()));
  Json j;
  try {
    j = res->body.empty() ? Json::object() : Json::parse(res->body);
  } catch (const Json::exception&) {
    throw Error(Errc::kProtocol, "service answered " + std::to_string(res->status) + " with a non-JSON body");
  }
  if (res->status >= 400) {
    std::string code = "http-" + std::to_string(res->status);
    std::string message = res->body;
    if (j.contains("error") && j.at("error").is_object()) {
      code = j.at("error").value("code", code);
      message = j.at("error").value("message", message);
    }
    throw ApiFailure(res->status, code, message);
  }
  return j;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) widths[i] = header[i].size();
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size() && i < widths.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  }
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    std::string l;
    for (std::size_t i = 0; i < cells.size(); ++i) l += (i + 1 < cells.size() ? pad(cells[i], widths[i] + 2) : cells[i]);
    while (!l.empty() && l.back() == ' ') l.pop_back();
    os << l << "\n";
  };
  line(header);
  for (const auto& row : rows) line(row);
  return os.str();
}

std::string fixed(double v, int digits = 1) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::pair<std::string, std::string> split_kv(const std::string& text, const char* what) {
  auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(Errc::kInvalidArgument, std::string(what) + " '" + text + "': expected key=value");
  }
  return {text.substr(0, eq), text.substr(eq + 1)};
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(text);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  if (!text.empty() && text.back() == ',') out.emplace_back();
  return out;
}

const InputParameter& input_of(const ToolDescriptor& tool, const std::string& id) {
  const InputParameter* p = tool.find_input(id);
  if (p == nullptr) throw Error(Errc::kInvalidArgument, "tool " + tool.id + " has no input '" + id + "'");
  return *p;
}

// Relative File paths are made absolute so a service with another working
// directory finds them.
Json absolutize(Json value) {
  if (is_file_value(value)) {
    fs::path p = file_path(value);
    if (p.is_relative()) value["path"] = fs::absolute(p).lexically_normal().string();
  }
  return value;
}

ToolDescriptor offline_tool(const fs::path& state_dir, const std::string& ref) {
  auto [id, version] = split_tool_ref(ref);
  Catalog catalog(state_dir);
  auto rec = catalog.find(id, version);
  if (!rec) throw Error(Errc::kUnknownTool, "unknown tool '" + ref + "'");
  return rec->descriptor;
}

Monitor offline_monitor(const Context& ctx, const TaskLog& log) {
  ClusterSpec cluster;
  if (ctx.config.contains("cluster")) cluster = ctx.service_config().cluster;
  Monitor monitor(cluster);
  for (const auto& e : log.events) {
    try {
      monitor.record_event(lifecycle_event_from_task_event(e));
    } catch (const Error&) {
    }
  }
  return monitor;
}

std::string task_summary(const Json& t) {
  std::ostringstream os;
  os << t.at("id").get<std::string>() << "  " << t.at("state").get<std::string>() << "\n";
  if (t.contains("job")) os << "tool: " << t["job"].value("tool_id", "") << "@" << t["job"].value("version", "") << "\n";
  if (t.contains("suggestion") && t.at("suggestion").is_string()) {
    os << "suggestion: " << t.at("suggestion").get<std::string>() << "\n";
  }
  if (t.contains("logs")) {
    const Json& logs = t.at("logs");
    if (logs.contains("node_id")) os << "node: " << logs.at("node_id").get<std::string>() << "\n";
    if (logs.contains("exit_status")) os << "exit status: " << logs.at("exit_status").dump() << "\n";
    if (logs.contains("system_message")) os << "message: " << logs.at("system_message").get<std::string>() << "\n";
  }
  if (t.contains("outputs")) {
    for (const auto& o : t.at("outputs")) os << "output " << o.value("id", "") << ": " << o.value("path", "") << "\n";
  }
  return os.str();
}

RepositoryConfig repository_config(const Context& ctx, const std::string& name, const std::string& base_url) {
  RepositoryConfig rc;
  Json repos = ctx.config.value("repositories", Json::object());
  if (!name.empty()) {
    if (!repos.contains(name)) throw Error(Errc::kInvalidArgument, "no repository '" + name + "' in the config");
    rc.name = name;
  } else if (!repos.empty()) {
    rc.name = repos.begin().key();
  } else {
    rc.name = "zenodo";
  }
  Json entry = repos.value(rc.name, Json::object());
  rc.base_url = !base_url.empty() ? base_url : entry.value("base_url", std::string("https://zenodo.org"));
  if (entry.contains("token")) rc.access_token = entry.at("token").get<std::string>();
  if (auto t = ctx.repo_token()) rc.access_token = *t;
  rc.timeout_seconds = entry.value("timeout_seconds", rc.timeout_seconds);
  validate(rc);
  return rc;
}

// ---------------------------------------------------------------- serve

int run_serve(const Context& ctx, const std::string& host, int port, const Json& overrides) {
  ServiceConfig config = ctx.service_config(overrides);
  if (config.cluster.nodes().empty()) {
    throw Error(Errc::kInvalidArgument, "serve needs a cluster: set 'cluster' in hetsched.yaml or pass --cluster");
  }
  // Block the signals before any thread starts so only the waiter receives them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Service service(config);
  HttpServer server(service);
  int bound = server.bind(host, port);
  ctx.emit(Json{{"url", "http://" + host + ":" + std::to_string(bound)}, {"state_dir", config.state_dir ? config.state_dir->string() : ""}},
           "listening on http://" + host + ":" + std::to_string(bound));
  ctx.out->flush();
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.listen_blocking();
  waiter.join();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Context ctx;
  ctx.out = &out;

  CLI::App app{"Heterogeneous-cluster job scheduler with execution profiles", "hetsched"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("--json", ctx.json, "Machine-readable output");
  app.add_option("--config", ctx.config_path, "Config file (default ./hetsched.yaml)");
  app.add_option("--state-dir", ctx.state_dir_flag, "State directory (HETSCHED_STATE_DIR)");
  app.add_option("--api-url", ctx.api_url_flag, "Service base URL (HETSCHED_API_URL)");
  app.add_option("--repo-token", ctx.repo_token_flag, "Repository access token (HETSCHED_REPO_TOKEN)");

  std::function<int()> action;

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::string host = "127.0.0.1", serve_cluster, serve_models, serve_runner, serve_ui;
  int port = 8080;
  double time_scale = -1.0;
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks a free one)");
  serve->add_option("--cluster", serve_cluster, "Cluster spec file");
  serve->add_option("--cost-models", serve_models, "Cost model file for the simulated runner");
  serve->add_option("--runner", serve_runner, "simulated or local");
  serve->add_option("--time-scale", time_scale, "Real seconds per simulated second");
  serve->add_option("--ui-dir", serve_ui, "Static files served under /ui/");
  serve->callback([&] {
    action = [&] {
      Json o = Json::object();
      if (!serve_cluster.empty()) o["cluster"] = fs::absolute(serve_cluster).string();
      if (!serve_models.empty()) o["cost_models"] = fs::absolute(serve_models).string();
      if (!serve_runner.empty()) o["runner"] = serve_runner;
      if (time_scale >= 0) o["time_scale"] = time_scale;
      if (!serve_ui.empty()) o["ui_dir"] = fs::absolute(serve_ui).string();
      return run_serve(ctx, host, port, o);
    };
  });

  // tool add | list
  auto* tool = app.add_subcommand("tool", "Manage the software catalog");
  tool->require_subcommand(1);
  auto* tool_add = tool->add_subcommand("add", "Register a CWL CommandLineTool");
  std::string tool_file;
  bool tool_private = false;
  tool_add->add_option("file", tool_file, "CWL document")->required();
  tool_add->add_flag("--private", tool_private, "Hide from the public listing");
  tool_add->callback([&] {
    action = [&] {
      Catalog catalog(ctx.require_state_dir());
      ToolDescriptor d = parse_tool(read_file(tool_file), fs::path(tool_file).stem().string());
      SoftwareRecord r = catalog.register_tool(d, tool_private ? Visibility::kPrivate : Visibility::kPublic);
      ctx.emit(to_json(r), "registered " + d.id + "@" + d.version);
      return kExitOk;
    };
  });
  auto* tool_list = tool->add_subcommand("list", "List registered tools");
  bool list_all = false;
  tool_list->add_flag("--all", list_all, "Include private tools");
  tool_list->callback([&] {
    action = [&] {
      Catalog catalog(ctx.require_state_dir());
      auto records = catalog.list_tools(list_all ? std::nullopt : std::optional<Visibility>(Visibility::kPublic));
      Json j = Json::array();
      std::vector<std::vector<std::string>> rows;
      for (const auto& r : records) {
        j.push_back(to_json(r));
        rows.push_back({r.descriptor.id, r.descriptor.version, std::to_string(r.descriptor.inputs.size()),
                        r.visibility == Visibility::kPublic ? "public" : "private", format_rfc3339(r.uploaded_at)});
      }
      ctx.emit(Json{{"tools", j}}, records.empty() ? "no tools registered"
                                                   : table({"ID", "VERSION", "INPUTS", "VISIBILITY", "UPLOADED"}, rows));
      return kExitOk;
    };
  });

  // submit
  auto* submit = app.add_subcommand("submit", "Submit a job to the service");
  std::string submit_tool, submit_version;
  std::vector<std::string> submit_inputs, submit_tags;
  double req_cpu = -1;
  std::int64_t req_mem = -1, req_disk = -1;
  submit->add_option("tool", submit_tool, "Tool id (id or id@version)")->required();
  submit->add_option("--input,-i", submit_inputs, "Input binding k=v; @path marks a file")->take_first();
  submit->add_option("--tag", submit_tags, "Tag k=v")->take_first();
  submit->add_option("--cpu", req_cpu, "Requested cores");
  submit->add_option("--mem-mb", req_mem, "Requested memory (MB)");
  submit->add_option("--disk-mb", req_disk, "Requested disk (MB)");
  submit->callback([&] {
    action = [&] {
      auto [id, version] = split_tool_ref(submit_tool);
      std::string path = "/v1/tools/" + id + (version.empty() ? "" : "?version=" + version);
      Json tool_doc = api_call(ctx, "GET", path);
      ToolDescriptor d = tool_from_json(tool_doc.at("descriptor"));
      Json bindings = Json::object();
      for (const auto& text : submit_inputs) {
        auto [k, v] = split_kv(text, "input");
        bindings[k] = absolutize(coerce_text_binding(input_of(d, k), v));
      }
      Json body{{"tool_id", d.id}, {"version", d.version}, {"bindings", bindings}};
      if (!submit_tags.empty()) {
        body["tags"] = Json::object();
        for (const auto& t : submit_tags) {
          auto [k, v] = split_kv(t, "tag");
          body["tags"][k] = v;
        }
      }
      if (req_cpu >= 0 || req_mem >= 0 || req_disk >= 0) {
        body["resource_request"] = {{"cpu_cores", std::max(0.0, req_cpu)},
                                    {"memory_mb", std::max<std::int64_t>(0, req_mem)},
                                    {"disk_mb", std::max<std::int64_t>(0, req_disk)}};
      }
      Json res = api_call(ctx, "POST", "/v1/tasks", body);
      ctx.emit(res, res.at("id").get<std::string>());
      return kExitOk;
    };
  });

  // status / cancel
  auto* status = app.add_subcommand("status", "Show a task");
  std::string status_task;
  status->add_option("task", status_task, "Task id")->required();
  status->callback([&] {
    action = [&] {
      Json t = api_call(ctx, "GET", "/v1/tasks/" + status_task + "?view=FULL");
      ctx.emit(t, task_summary(t));
      return kExitOk;
    };
  });
  auto* cancel = app.add_subcommand("cancel", "Cancel a task");
  std::string cancel_task;
  cancel->add_option("task", cancel_task, "Task id")->required();
  cancel->callback([&] {
    action = [&] {
      Json t = api_call(ctx, "POST", "/v1/tasks/" + cancel_task + ":cancel");
      ctx.emit(t, t.at("id").get<std::string>() + "  " + t.at("state").get<std::string>());
      return kExitOk;
    };
  });

  // profile grid | train
  auto* profile = app.add_subcommand("profile", "Collect profiling runs and train execution profiles");
  profile->require_subcommand(1);
  auto* grid = profile->add_subcommand("grid", "Run the tool over every combination of alternatives");
  std::string grid_tool;
  std::vector<std::string> grid_alts;
  std::size_t grid_max = 1000, grid_parallel = 1;
  std::uint64_t grid_seed = 0;
  grid->add_option("tool", grid_tool, "Tool id")->required();
  grid->add_option("--alt", grid_alts, "Alternatives k=v1,v2,...")->take_first();
  grid->add_option("--max-runs", grid_max, "Refuse grids larger than this");
  grid->add_option("--seed", grid_seed, "Seed for the runs");
  grid->add_option("--parallelism", grid_parallel, "Concurrent runs");
  grid->callback([&] {
    action = [&] {
      fs::path state = ctx.require_state_dir();
      ToolDescriptor d = offline_tool(state, grid_tool);
      ProfilingRequest request;
      request.tool_id = d.id;
      request.max_runs = grid_max;
      request.seed = grid_seed;
      for (const auto& text : grid_alts) {
        auto [k, list] = split_kv(text, "alternative");
        const InputParameter& param = input_of(d, k);
        for (const auto& v : split_list(list)) request.alternatives[k].push_back(absolutize(coerce_text_binding(param, v)));
      }
      std::vector<Bindings> bindings = expand_grid(request, d);
      FeatureSchema schema = build_feature_schema(d, bindings);
      ServiceConfig config = ctx.service_config();
      std::vector<ProfileSample> samples =
          collect_samples(d.id, bindings, schema, make_sample_runner(config, d), grid_seed, grid_parallel);
      ProfileStore(state).save_samples(d.id, samples);
      std::size_t failed = std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.failed; });
      ctx.emit(Json{{"tool_id", d.id}, {"runs", samples.size()}, {"failed", failed}},
               "collected " + std::to_string(samples.size()) + " runs for " + d.id + " (" + std::to_string(failed) +
                   " failed)");
      return kExitOk;
    };
  });
  auto* train = profile->add_subcommand("train", "Train an execution profile from collected runs");
  std::string train_tool;
  std::uint64_t train_seed = 0;
  train->add_option("tool", train_tool, "Tool id")->required();
  train->add_option("--seed", train_seed, "Seed for cross-validation folds");
  train->callback([&] {
    action = [&] {
      fs::path state = ctx.require_state_dir();
      ToolDescriptor d = offline_tool(state, train_tool);
      ServiceConfig config = ctx.service_config();
      if (config.cluster.classes().empty()) throw Error(Errc::kInvalidArgument, "training needs the cluster spec");
      ProfileStore store(state);
      std::vector<ProfileSample> samples = store.samples(d.id);
      if (samples.empty()) throw Error(Errc::kEmptyDataset, "no profiling runs for " + d.id + "; run 'profile grid'");
      std::vector<Bindings> bindings;
      for (const auto& s : samples) bindings.push_back(s.bindings);
      FeatureSchema schema = build_feature_schema(d, bindings);
      std::vector<std::string> warnings;
      auto labeled = label_samples(samples, config.cluster.classes(), config.headroom, &warnings);
      ExecutionProfile p = train_profile(d.id, schema, labeled, train_seed, now_seconds());
      store.save(p, samples);
      Json j{{"tool_id", d.id},
             {"cv_accuracy", p.cv_accuracy},
             {"model", ml::family_name(p.config.family)},
             {"hyperparams", p.config.hyperparams()},
             {"sample_count", p.sample_count},
             {"degenerate", p.degenerate},
             {"warnings", warnings}};
      std::string text = "trained " + d.id + ": " + std::string(ml::family_name(p.config.family)) + " " +
                         p.config.hyperparams().dump() + ", cv accuracy " + fixed(p.cv_accuracy, 3) + " over " +
                         std::to_string(p.sample_count) + " samples";
      for (const auto& w : warnings) text += "\nwarning: " + w;
      ctx.emit(j, text);
      return kExitOk;
    };
  });

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run a scenario through the cluster simulator");
  std::string scenario_path, trace_path;
  bool no_profiles = false;
  simulate->add_option("scenario", scenario_path, "Scenario YAML/JSON")->required();
  simulate->add_flag("--no-profiles", no_profiles, "Schedule without execution profiles");
  simulate->add_option("--trace", trace_path, "Write the event trace (JSON lines)");
  simulate->callback([&] {
    action = [&] {
      Scenario scenario = load_scenario(scenario_path);
      if (no_profiles) scenario.use_profiles = false;
      std::optional<ProfileStore> profiles;
      std::vector<std::string> warnings;
      if (scenario.use_profiles) {
        if (!scenario.profiling.empty()) {
          profiles = train_scenario_profiles(scenario, &warnings);
        } else if (auto dir = ctx.state_dir()) {
          profiles.emplace(*dir);
        }
      }
      SimulationReport report = run_simulation(scenario, profiles ? &*profiles : nullptr);
      if (!trace_path.empty()) {
        std::ofstream(trace_path, std::ios::binary) << report.trace_jsonl();
      }
      Json j = report.to_json();
      j.erase("tasks");
      j["use_profiles"] = scenario.use_profiles;
      j["task_count"] = report.tasks.size();
      j["warnings"] = warnings;
      std::ostringstream os;
      os << "profiles: " << (scenario.use_profiles ? "on" : "off") << "\n";
      os << "tasks: " << report.tasks.size() << "\n";
      os << "makespan: " << fixed(report.makespan, 3) << " s\n";
      os << "mean wait: " << fixed(report.mean_wait_seconds, 3) << " s, max wait: " << fixed(report.max_wait_seconds, 3)
         << " s\n";
      std::vector<std::vector<std::string>> rows;
      for (const auto& [key, seconds] : report.per_class_busy_by_origin) {
        rows.push_back({key.first, key.second, fixed(seconds, 3)});
      }
      for (const auto& [cls, seconds] : report.per_class_busy_seconds) rows.push_back({cls, "total", fixed(seconds, 3)});
      os << table({"CLASS", "JOB TIER", "BUSY SECONDS"}, rows);
      ctx.emit(j, os.str());
      return kExitOk;
    };
  });

  // package
  auto* package = app.add_subcommand("package", "Build an RO-crate for a completed task");
  std::string pkg_task, pkg_doi, pkg_author, pkg_out;
  package->add_option("task", pkg_task, "Task id")->required();
  package->add_option("--doi", pkg_doi, "Publication DOI to cite");
  package->add_option("--author", pkg_author, "Author name");
  package->add_option("--out", pkg_out, "Output directory (default <state_dir>/crates/<task>)");
  package->callback([&] {
    action = [&] {
      fs::path state = ctx.require_state_dir();
      TaskLog log = read_task_log(state);
      auto it = log.tasks.find(pkg_task);
      if (it == log.tasks.end()) throw Error(Errc::kUnknownTask, "unknown task '" + pkg_task + "'");
      const TaskRecord& task = it->second;
      ToolDescriptor d = offline_tool(state, task.job.tool_id + (task.job.version.empty() ? "" : "@" + task.job.version));
      CrateOptions options;
      if (!pkg_doi.empty()) options.doi = pkg_doi;
      if (!pkg_author.empty()) options.author = pkg_author;
      ExperimentPackage pkg = build_crate(task, d, options);
      fs::path dir = pkg_out.empty() ? state / "crates" / task.id : fs::absolute(pkg_out);
      std::vector<std::string> files =
          write_crate(pkg, dir, pkg_out.empty() ? std::nullopt : std::optional<fs::path>(state));
      CrateValidation v = validate_crate(dir);
      std::string text = "crate written to " + dir.string() + " (" + std::to_string(files.size()) + " files)";
      for (const auto& f : v.failures) text += "\ninvalid: " + f;
      ctx.emit(Json{{"task_id", task.id}, {"directory", dir.string()}, {"files", files}, {"validation", v.to_json()}},
               text);
      return v.ok() ? kExitOk : kExitSystem;
    };
  });

  // repo pull | push
  auto* repo = app.add_subcommand("repo", "Exchange data with a Zenodo-style repository");
  repo->require_subcommand(1);
  std::string repo_name, repo_url;
  auto* pull = repo->add_subcommand("pull", "Download files of a record");
  std::string pull_record, pull_dest;
  std::vector<std::string> pull_files;
  pull->add_option("record", pull_record, "Record id")->required();
  pull->add_option("--file", pull_files, "Only these files")->take_first();
  pull->add_option("--dest", pull_dest, "Destination directory (default data_dir or .)");
  pull->add_option("--repo", repo_name, "Repository name from the config");
  pull->add_option("--base-url", repo_url, "Repository base URL");
  pull->callback([&] {
    action = [&] {
      RepositoryClient client(repository_config(ctx, repo_name, repo_url));
      RecordMetadata rec = client.fetch_record(pull_record);
      fs::path dest = !pull_dest.empty()                 ? fs::path(pull_dest)
                      : ctx.config.contains("data_dir") ? ctx.config_path_value("data_dir")
                                                         : fs::current_path();
      fs::create_directories(dest);
      std::vector<std::string> names = pull_files;
      if (names.empty()) {
        for (const auto& f : rec.files) names.push_back(f.name);
      }
      Json paths = Json::array();
      std::string text;
      for (const auto& name : names) {
        fs::path p = client.download_file(rec, name, dest);
        paths.push_back(p.string());
        text += p.string() + "\n";
      }
      ctx.emit(Json{{"record", rec.to_json()}, {"files", paths}}, text);
      return kExitOk;
    };
  });
  auto* push = repo->add_subcommand("push", "Upload files as a new deposit");
  std::vector<std::string> push_files;
  std::string push_title, push_task;
  bool push_publish = false;
  push->add_option("files", push_files, "Files to upload");
  push->add_option("--task", push_task, "Upload the outputs of a task");
  push->add_option("--title", push_title, "Deposit title");
  push->add_flag("--publish", push_publish, "Publish after uploading");
  push->add_option("--repo", repo_name, "Repository name from the config");
  push->add_option("--base-url", repo_url, "Repository base URL");
  push->callback([&] {
    action = [&] {
      std::vector<fs::path> files(push_files.begin(), push_files.end());
      if (!push_task.empty()) {
        TaskLog log = read_task_log(ctx.require_state_dir());
        auto it = log.tasks.find(push_task);
        if (it == log.tasks.end()) throw Error(Errc::kUnknownTask, "unknown task '" + push_task + "'");
        for (const auto& o : it->second.outputs) files.emplace_back(o.path);
        if (push_title.empty()) push_title = "Outputs of task " + push_task;
      }
      if (files.empty()) throw Error(Errc::kInvalidArgument, "nothing to upload");
      for (const auto& f : files) {
        if (!fs::is_regular_file(f)) throw Error(Errc::kInvalidArgument, "not a file: " + f.string());
      }
      RepositoryClient client(repository_config(ctx, repo_name, repo_url));
      Json metadata{{"title", push_title.empty() ? "hetsched upload" : push_title}, {"upload_type", "dataset"}};
      DepositHandle h = client.create_deposit(metadata);
      for (const auto& f : files) h = client.upload_file(h, f);
      if (push_publish) h = client.publish(h);
      std::string text = "deposit " + h.deposit_id + ": " + std::to_string(h.files.size()) + " files";
      if (h.doi) text += ", DOI " + *h.doi;
      ctx.emit(h.to_json(), text);
      return kExitOk;
    };
  });

  // report jobs | load
  auto* report = app.add_subcommand("report", "Job statistics and cluster load");
  report->require_subcommand(1);
  auto* jobs = report->add_subcommand("jobs", "Per-job statistics");
  std::string jobs_tool, jobs_state, jobs_since;
  jobs->add_option("--tool", jobs_tool, "Only this tool");
  jobs->add_option("--state", jobs_state, "Only this state");
  jobs->add_option("--since", jobs_since, "Submitted at or after (epoch seconds or RFC 3339)");
  jobs->callback([&] {
    action = [&] {
      Json list = Json::array();
      if (auto state = ctx.state_dir()) {
        JobFilter filter;
        if (!jobs_tool.empty()) filter.tool_id = jobs_tool;
        if (!jobs_state.empty()) {
          filter.state = parse_task_state(jobs_state);
          if (!filter.state) throw Error(Errc::kInvalidArgument, "unknown state '" + jobs_state + "'");
        }
        if (!jobs_since.empty()) {
          filter.since = jobs_since.find('T') != std::string::npos ? parse_rfc3339(jobs_since) : std::stod(jobs_since);
        }
        Monitor monitor = offline_monitor(ctx, read_task_log(*state));
        for (const auto& r : monitor.job_report(filter)) list.push_back(r.to_json());
      } else {
        std::string q;
        auto add = [&](const char* k, const std::string& v) {
          if (!v.empty()) q += (q.empty() ? "?" : "&") + std::string(k) + "=" + httplib::detail::encode_query_param(v);
        };
        add("tool_id", jobs_tool);
        add("state", jobs_state);
        add("since", jobs_since);
        list = api_call(ctx, "GET", "/v1/reports/jobs" + q).at("jobs");
      }
      std::vector<std::vector<std::string>> rows;
      for (const auto& r : list) {
        auto num = [&](const char* k) { return r.contains(k) && r.at(k).is_number() ? fixed(r.at(k).get<double>()) : "-"; };
        auto str = [&](const char* k) { return r.contains(k) && r.at(k).is_string() ? r.at(k).get<std::string>() : "-"; };
        rows.push_back({str("task_id"), str("tool_id"), str("state"), str("node_class"), str("suggestion"),
                        num("wait_seconds"), num("run_seconds")});
      }
      ctx.emit(Json{{"jobs", list}},
               rows.empty() ? "no jobs" : table({"TASK", "TOOL", "STATE", "CLASS", "SUGGESTED", "WAIT S", "RUN S"}, rows));
      return kExitOk;
    };
  });
  auto* load = report->add_subcommand("load", "Cluster load over a window");
  std::string load_from, load_to;
  load->add_option("--from", load_from, "Window start (epoch seconds or RFC 3339)");
  load->add_option("--to", load_to, "Window end (epoch seconds or RFC 3339)");
  load->callback([&] {
    action = [&] {
      auto parse_time = [](const std::string& s) {
        return s.find('T') != std::string::npos ? parse_rfc3339(s) : std::stod(s);
      };
      Json j;
      if (auto state = ctx.state_dir()) {
        TaskLog log = read_task_log(*state);
        Monitor monitor = offline_monitor(ctx, log);
        // Offline default window: first to last recorded event.
        double first = log.events.empty() ? 0.0 : log.events.front().time;
        double last = first;
        for (const auto& e : log.events) {
          first = std::min(first, e.time);
          last = std::max(last, e.time);
        }
        double from = load_from.empty() ? first : parse_time(load_from);
        double to = load_to.empty() ? std::max(last, from + 1.0) : parse_time(load_to);
        j = monitor.cluster_load_report(from, to, std::max(last, from)).to_json();
      } else {
        std::string q;
        if (!load_from.empty()) q += "?from=" + httplib::detail::encode_query_param(load_from);
        if (!load_to.empty()) q += (q.empty() ? "?" : "&") + std::string("to=") + httplib::detail::encode_query_param(load_to);
        j = api_call(ctx, "GET", "/v1/reports/load" + q);
      }
      std::ostringstream os;
      const Json& w = j.at("window");
      auto when = [](const Json& t) { return t.is_number() ? format_rfc3339(t.get<double>()) : t.get<std::string>(); };
      os << "window: " << when(w.at("from")) << " to " << when(w.at("to")) << "\n";
      std::vector<std::vector<std::string>> rows;
      for (const auto& [cls, c] : j.at("classes").items()) {
        rows.push_back({cls, c.at("node_count").dump(), fixed(c.at("busy_seconds").get<double>()),
                        fixed(c.at("job_seconds").get<double>()), fixed(100.0 * c.at("utilization").get<double>()) + "%"});
      }
      os << table({"CLASS", "NODES", "BUSY S", "JOB S", "UTILIZATION"}, rows);
      if (!j.at("terminal_counts").empty()) os << "terminal: " << j.at("terminal_counts").dump() << "\n";
      ctx.emit(j, os.str());
      return kExitOk;
    };
  });

  auto fail = [&](int code, const std::string& errc, const std::string& message) {
    if (ctx.json) {
      out << Json{{"error", {{"code", errc}, {"message", message}}}}.dump(2) << "\n";
    }
    err << "error: " << message << "\n";
    return code;
  };

  // First positional argument names the command.
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config" || a == "--state-dir" || a == "--api-url" || a == "--repo-token") {
      ++i;
      continue;
    }
    if (a.rfind("-", 0) == 0) continue;
    if (app.get_subcommand_no_throw(a) == nullptr) {
      int code = fail(kExitUser, "usage", "unknown command '" + a + "'");
      err << app.help();
      return code;
    }
    break;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    int code = fail(kExitUser, "usage", e.what());
    err << app.help();
    return code;
  }

  try {
    ctx.load_config();
    if (!action) return fail(kExitUser, "usage", "no command given");
    return action();
  } catch (const ApiFailure& e) {
    return fail(e.status >= 500 ? kExitSystem : kExitUser, e.code, e.what());
  } catch (const Error& e) {
    return fail(http_status(e.code()) >= 500 ? kExitSystem : kExitUser, std::string(errc_name(e.code())), e.what());
  } catch (const Json::exception& e) {
    return fail(kExitUser, std::string(errc_name(Errc::kParse)), e.what());
  } catch (const std::invalid_argument& e) {
    return fail(kExitUser, std::string(errc_name(Errc::kInvalidArgument)), e.what());
  } catch (const std::exception& e) {
    return fail(kExitSystem, "internal", e.what());
  }
}

}  // namespace hetsched::cli
