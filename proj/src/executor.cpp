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

#include "hetsched/executor.hpp"

#include <fcntl.h>
#include <glob.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "hetsched/error.hpp"

namespace hetsched {

namespace fs = std::filesystem;

Json to_json(const RunResult& r) {
  Json outputs = Json::array();
  for (const auto& o : r.output_files) {
    outputs.push_back({{"id", o.id}, {"path", o.path}, {"size", o.size_bytes}});
  }
  return {{"exit_status", r.exit_status},
          {"wall_seconds", r.wall_seconds},
          {"cpu_seconds", r.cpu_seconds},
          {"peak_mem_mb", r.peak_mem_mb},
          {"output_files", outputs}};
}

RunResult run_result_from_json(const Json& j) {
  RunResult r;
  r.exit_status = j.value("exit_status", 0);
  r.wall_seconds = j.value("wall_seconds", 0.0);
  r.cpu_seconds = j.value("cpu_seconds", 0.0);
  r.peak_mem_mb = j.value("peak_mem_mb", 0.0);
  for (const auto& o : j.value("output_files", Json::array())) {
    r.output_files.push_back({o.at("id").get<std::string>(), o.at("path").get<std::string>(),
                              o.value("size", std::uint64_t{0})});
  }
  return r;
}

double AffineFunction::operator()(const std::map<std::string, double>& features) const {
  double value = intercept;
  for (const auto& [name, coeff] : coeffs) {
    if (auto it = features.find(name); it != features.end()) value += coeff * it->second;
  }
  return value;
}

namespace {

AffineFunction affine_from_json(const Json& j, const std::string& where) {
  AffineFunction f;
  if (j.is_number()) {
    f.intercept = j.get<double>();
    return f;
  }
  f.intercept = j.value("intercept", 0.0);
  const Json coeffs = j.value("coeffs", Json::object());
  for (const auto& [name, c] : coeffs.items()) {
    f.coeffs[name] = c.get<double>();
  }
  if (!std::isfinite(f.intercept) ||
      std::any_of(f.coeffs.begin(), f.coeffs.end(),
                  [](const auto& kv) { return !std::isfinite(kv.second); })) {
    throw Error(Errc::kParse, "non-finite coefficient in " + where);
  }
  return f;
}

Json affine_to_json(const AffineFunction& f) {
  return {{"intercept", f.intercept}, {"coeffs", f.coeffs}};
}

}  // namespace

CostModel cost_model_from_json(const Json& doc) {
  if (!doc.is_object()) throw Error(Errc::kParse, "cost model must be a mapping");
  CostModel model;
  try {
    for (const auto& [tool, spec] : doc.items()) {
      ToolCostModel m;
      m.peak_mem_mb = affine_from_json(spec.at("peak_mem_mb"), tool + ".peak_mem_mb");
      m.cpu_seconds = affine_from_json(spec.at("cpu_seconds"), tool + ".cpu_seconds");
      m.noise_sigma = spec.value("noise_sigma", 0.0);
      m.failure_rate = spec.value("failure_rate", 0.0);
      if (m.noise_sigma < 0.0) throw Error(Errc::kParse, tool + ": noise_sigma must be >= 0");
      if (m.failure_rate < 0.0 || m.failure_rate >= 1.0) {
        throw Error(Errc::kParse, tool + ": failure_rate must be in [0, 1)");
      }
      const Json output_bytes = spec.value("output_bytes", Json::object());
      for (const auto& [id, bytes] : output_bytes.items()) {
        m.output_bytes[id] = bytes.get<std::uint64_t>();
      }
      model[tool] = std::move(m);
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::kParse, std::string("malformed cost model: ") + e.what());
  }
  return model;
}

CostModel load_cost_model(std::string_view text) { return cost_model_from_json(load_document(text)); }

Json to_json(const CostModel& model) {
  Json out = Json::object();
  for (const auto& [tool, m] : model) {
    out[tool] = {{"peak_mem_mb", affine_to_json(m.peak_mem_mb)},
                 {"cpu_seconds", affine_to_json(m.cpu_seconds)},
                 {"noise_sigma", m.noise_sigma},
                 {"failure_rate", m.failure_rate},
                 {"output_bytes", m.output_bytes}};
  }
  return out;
}

std::map<std::string, double> simulation_features(const Bindings& bindings) {
  std::map<std::string, double> features;
  for (const auto& [id, value] : bindings) {
    if (value.is_boolean()) {
      features[id] = value.get<bool>() ? 1.0 : 0.0;
    } else if (value.is_number()) {
      features[id] = value.get<double>();
    } else if (is_file_value(value)) {
      features[id] = static_cast<double>(file_size_bytes(value)) / (1024.0 * 1024.0);
    } else if (value.is_string()) {
      features[id + "=" + value.get<std::string>()] = 1.0;
    }
  }
  return features;
}

std::uint64_t task_stream_seed(std::uint64_t seed, std::string_view task_id) {
  SplitMix64 mixer(seed ^ fnv1a64(task_id));
  return mixer.next();
}

namespace {

std::string placeholder_name(const std::string& output_id, const std::string& glob) {
  std::string name;
  bool substituted = false;
  for (char c : glob) {
    if (c == '*' && !substituted) {
      name += output_id;
      substituted = true;
    } else if (c != '*' && c != '?' && c != '[' && c != ']') {
      name += c;
    }
  }
  if (name.empty()) name = output_id + ".out";
  return name;
}

}  // namespace

RunResult run_simulated(const JobSpec& job, std::string_view task_id, const CostModel& model,
                        std::uint64_t seed, const SimulationContext& context) {
  auto it = model.find(job.tool_id);
  if (it == model.end()) {
    throw Error(Errc::kMissingModel, "no cost model entry for tool " + job.tool_id);
  }
  const ToolCostModel& m = it->second;
  auto features = simulation_features(job.bindings);

  SplitMix64 rng(task_stream_seed(seed, task_id));
  double g_mem = rng.normal();
  double g_cpu = rng.normal();
  double u_fail = rng.uniform();

  RunResult r;
  r.peak_mem_mb = std::max(0.0, m.peak_mem_mb(features) * (1.0 + m.noise_sigma * g_mem));
  r.cpu_seconds = std::max(0.0, m.cpu_seconds(features) * (1.0 + m.noise_sigma * g_cpu));
  r.wall_seconds = r.cpu_seconds;
  r.exit_status = u_fail < m.failure_rate ? 1 : 0;
  if (r.exit_status != 0) return r;

  std::vector<std::pair<std::string, std::string>> declared;  // id, file name
  if (context.tool != nullptr) {
    for (const auto& o : context.tool->outputs) declared.emplace_back(o.id, placeholder_name(o.id, o.glob));
  } else {
    for (const auto& [id, bytes] : m.output_bytes) declared.emplace_back(id, id + ".out");
  }
  for (const auto& [id, name] : declared) {
    std::uint64_t size = 0;
    if (auto b = m.output_bytes.find(id); b != m.output_bytes.end()) size = b->second;
    fs::path rel = fs::path(std::string(task_id)) / "outputs" / name;
    std::string path = rel.string();
    if (context.work_dir) {
      fs::path full = *context.work_dir / rel;
      fs::create_directories(full.parent_path());
      { std::ofstream touch(full, std::ios::binary | std::ios::trunc); }
      fs::resize_file(full, size);
      path = full.string();
    }
    r.output_files.push_back({id, path, size});
  }
  return r;
}

namespace {

long page_size_kb() { return sysconf(_SC_PAGESIZE) / 1024; }

// Resident set size in KiB summed over every process in the group.
long group_rss_kb(pid_t pgid) {
  long total = 0;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator("/proc", ec)) {
    const std::string name = entry.path().filename().string();
    if (name.empty() || !std::all_of(name.begin(), name.end(), ::isdigit)) continue;
    std::ifstream stat(entry.path() / "stat");
    std::string line;
    if (!std::getline(stat, line)) continue;
    // The command name may contain spaces; fields resume after the last ')'.
    auto close = line.rfind(')');
    if (close == std::string::npos) continue;
    std::istringstream rest(line.substr(close + 2));
    char state = 0;
    long ppid = 0, pgrp = 0;
    rest >> state >> ppid >> pgrp;
    if (pgrp != pgid) continue;
    std::ifstream statm(entry.path() / "statm");
    long size = 0, resident = 0;
    if (statm >> size >> resident) total += resident * page_size_kb();
  }
  return total;
}

std::string stage_input(const Json& value, const fs::path& inputs_dir, const std::string& input_id) {
  fs::path src = file_path(value);
  std::error_code ec;
  if (!fs::exists(src, ec)) return src.string();
  fs::create_directories(inputs_dir);
  fs::path dest = inputs_dir / src.filename();
  if (fs::exists(dest, ec)) dest = inputs_dir / (input_id + "-" + src.filename().string());
  fs::copy_file(src, dest, fs::copy_options::overwrite_existing, ec);
  if (ec) throw Error(Errc::kIo, "cannot stage input " + src.string() + ": " + ec.message());
  return fs::absolute(dest).string();
}

}  // namespace

RunResult run_local(const JobSpec& job, const ToolDescriptor& descriptor, std::string_view task_id,
                    const fs::path& work_dir, const std::atomic<bool>* cancel) {
  fs::path task_dir = work_dir / std::string(task_id);
  fs::path inputs_dir = task_dir / "inputs";
  fs::path outputs_dir = task_dir / "outputs";
  fs::create_directories(outputs_dir);

  Bindings staged = check_bindings(descriptor, job.bindings);
  for (auto& [id, value] : staged) {
    if (is_file_value(value)) value["path"] = stage_input(value, inputs_dir, id);
  }
  std::vector<std::string> argv = build_command(descriptor, staged);

  int report[2];
  if (pipe2(report, O_CLOEXEC) != 0) throw Error(Errc::kSpawnFailure, "pipe failed");

  auto start = std::chrono::steady_clock::now();
  pid_t pid = fork();
  if (pid < 0) {
    close(report[0]);
    close(report[1]);
    throw Error(Errc::kSpawnFailure, std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    setpgid(0, 0);
    if (chdir(outputs_dir.c_str()) != 0) {
      int err = errno;
      (void)!write(report[1], &err, sizeof err);
      _exit(127);
    }
    std::vector<char*> cargs;
    for (auto& a : argv) cargs.push_back(a.data());
    cargs.push_back(nullptr);
    execvp(cargs[0], cargs.data());
    int err = errno;
    (void)!write(report[1], &err, sizeof err);
    _exit(127);
  }
  setpgid(pid, pid);
  close(report[1]);
  int exec_errno = 0;
  ssize_t n = read(report[0], &exec_errno, sizeof exec_errno);
  close(report[0]);

  long peak_kb = 0;
  int status = 0;
  struct rusage usage {};
  bool signalled = false;
  auto last_sample = std::chrono::steady_clock::now() - std::chrono::milliseconds(100);
  auto kill_deadline = std::chrono::steady_clock::time_point::max();
  while (true) {
    pid_t done = wait4(pid, &status, WNOHANG, &usage);
    if (done == pid) break;
    auto now = std::chrono::steady_clock::now();
    if (now - last_sample >= std::chrono::milliseconds(100)) {
      peak_kb = std::max(peak_kb, group_rss_kb(pid));
      last_sample = now;
    }
    if (cancel != nullptr && cancel->load() && !signalled) {
      kill(-pid, SIGTERM);
      signalled = true;
      kill_deadline = now + std::chrono::seconds(1);
    }
    if (now > kill_deadline) kill(-pid, SIGKILL);
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  // Reap anything the tool left behind in its group.
  kill(-pid, SIGKILL);
  auto end = std::chrono::steady_clock::now();

  if (n == static_cast<ssize_t>(sizeof exec_errno)) {
    throw Error(Errc::kSpawnFailure, "cannot execute " + argv.front() + ": " +
                                         std::strerror(exec_errno));
  }

  RunResult r;
  r.exit_status = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  r.wall_seconds = std::chrono::duration<double>(end - start).count();
  r.cpu_seconds = static_cast<double>(usage.ru_utime.tv_sec + usage.ru_stime.tv_sec) +
                  static_cast<double>(usage.ru_utime.tv_usec + usage.ru_stime.tv_usec) * 1e-6;
  peak_kb = std::max(peak_kb, static_cast<long>(usage.ru_maxrss));
  r.peak_mem_mb = static_cast<double>(peak_kb) / 1024.0;

  if (r.exit_status != 0) return r;
  for (const auto& out : descriptor.outputs) {
    std::string pattern = (outputs_dir / out.glob).string();
    glob_t g{};
    int rc = glob(pattern.c_str(), 0, nullptr, &g);
    if (rc != 0 || g.gl_pathc == 0) {
      globfree(&g);
      throw Error(Errc::kMissingOutput, "output '" + out.id + "': glob " + out.glob +
                                            " matched nothing");
    }
    for (std::size_t i = 0; i < g.gl_pathc; ++i) {
      std::error_code ec;
      auto size = fs::file_size(g.gl_pathv[i], ec);
      r.output_files.push_back({out.id, g.gl_pathv[i], ec ? 0 : size});
    }
    globfree(&g);
  }
  return r;
}

}  // namespace hetsched
