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

#include <fstream>

#include "doctest.h"
#include "hetsched/executor.hpp"
#include "test_util.hpp"

using namespace hetsched;
using hetsched::testing::TempDir;

namespace {

CostModel linear_model(double sigma, double failure_rate = 0.0) {
  return load_cost_model(R"({"sim": {
      "peak_mem_mb": {"intercept": 100, "coeffs": {"file_mb": 2}},
      "cpu_seconds": {"intercept": 10, "coeffs": {"file_mb": 0.5}},
      "noise_sigma": )" + format_number(sigma) + R"(,
      "failure_rate": )" + format_number(failure_rate) + R"(,
      "output_bytes": {"result": 2048}}})");
}

JobSpec sim_job(double file_mb) {
  JobSpec job;
  job.tool_id = "sim";
  job.bindings["file_mb"] = file_mb;
  return job;
}

ToolDescriptor shell_tool(const std::string& script, const std::string& glob = "") {
  ToolDescriptor d;
  d.id = "sh";
  d.version = "1";
  d.base_command = {"/bin/sh", "-c", script};
  if (!glob.empty()) d.outputs.push_back({"result", glob});
  return d;
}

}  // namespace

TEST_CASE("SplitMix64 matches the reference output sequence") {
  SplitMix64 rng(1234567);
  CHECK(rng.next() == 6457827717110365317ULL);
  CHECK(rng.next() == 3203168211198807973ULL);
  CHECK(rng.next() == 9817491932198370423ULL);
}

TEST_CASE("run_simulated with zero noise evaluates the affine model exactly") {
  RunResult r = run_simulated(sim_job(50), "t1", linear_model(0.0), 7);
  CHECK(r.peak_mem_mb == 200.0);
  CHECK(r.cpu_seconds == 35.0);
  CHECK(r.wall_seconds == r.cpu_seconds);
  CHECK(r.exit_status == 0);
}

TEST_CASE("run_simulated is deterministic and reproduces the reference trace") {
  CostModel model = linear_model(0.1);
  RunResult a = run_simulated(sim_job(50), "task-1", model, 42);
  RunResult b = run_simulated(sim_job(50), "task-1", model, 42);
  CHECK(a == b);
  // Expected values from an independent SplitMix64 + Box-Muller script.
  CHECK(a.peak_mem_mb == doctest::Approx(180.54243109584976).epsilon(1e-12));
  CHECK(a.cpu_seconds == doctest::Approx(27.703130264899997).epsilon(1e-12));
  CHECK(run_simulated(sim_job(50), "task-2", model, 42).peak_mem_mb != a.peak_mem_mb);
  CHECK(run_simulated(sim_job(50), "task-1", model, 43).peak_mem_mb != a.peak_mem_mb);
}

TEST_CASE("metamorphic: doubling the input doubles a proportional peak") {
  CostModel model = load_cost_model(R"({"sim": {"peak_mem_mb": {"coeffs": {"reads": 2}},
      "cpu_seconds": 1}})");
  for (std::uint64_t mb : {1ULL, 17ULL, 500ULL}) {
    JobSpec small, big;
    small.tool_id = big.tool_id = "sim";
    small.bindings["reads"] = make_file_value("/x", mb * 1024 * 1024);
    big.bindings["reads"] = make_file_value("/x", 2 * mb * 1024 * 1024);
    double p1 = run_simulated(small, "t", model, 1).peak_mem_mb;
    double p2 = run_simulated(big, "t", model, 1).peak_mem_mb;
    CHECK(p1 == 2.0 * static_cast<double>(mb));
    CHECK(p2 == 2.0 * p1);
  }
}

TEST_CASE("run_simulated clamps at zero, fails at the configured rate, needs a model") {
  CostModel negative = load_cost_model(R"({"sim": {"peak_mem_mb": -50, "cpu_seconds": -1}})");
  RunResult r = run_simulated(sim_job(1), "t", negative, 1);
  CHECK(r.peak_mem_mb == 0.0);
  CHECK(r.cpu_seconds == 0.0);

  CostModel flaky = linear_model(0.0, 0.5);
  int failures = 0;
  for (int i = 0; i < 400; ++i) {
    if (run_simulated(sim_job(1), "t" + std::to_string(i), flaky, 3).exit_status != 0) ++failures;
  }
  CHECK(failures > 150);
  CHECK(failures < 250);

  JobSpec other;
  other.tool_id = "unknown";
  CHECK_ERRC(run_simulated(other, "t", flaky, 1), Errc::kMissingModel);
  CHECK_ERRC(load_cost_model(R"({"x": {"peak_mem_mb": 1, "cpu_seconds": 1, "failure_rate": 1.0}})"),
             Errc::kParse);
}

TEST_CASE("run_simulated materializes declared outputs") {
  TempDir dir;
  ToolDescriptor tool;
  tool.id = "sim";
  tool.outputs.push_back({"result", "*.bam"});
  SimulationContext ctx{&tool, dir.path()};
  RunResult r = run_simulated(sim_job(1), "task-9", linear_model(0.0), 1, ctx);
  REQUIRE(r.output_files.size() == 1);
  CHECK(r.output_files[0].path == (dir / "task-9/outputs/result.bam").string());
  CHECK(std::filesystem::file_size(r.output_files[0].path) == 2048);
}

TEST_CASE("run_local: exit status is data") {
  TempDir dir;
  ToolDescriptor t = shell_tool("true");
  RunResult ok = run_local(JobSpec{"sh", "", {}, {}, {}}, t, "ok", dir.path());
  CHECK(ok.exit_status == 0);
  CHECK(ok.output_files.empty());

  RunResult bad = run_local(JobSpec{"sh", "", {}, {}, {}}, shell_tool("false"), "bad", dir.path());
  CHECK(bad.exit_status == 1);
  CHECK(bad.wall_seconds >= 0.0);
}

TEST_CASE("run_local collects outputs by glob and reports missing ones") {
  TempDir dir;
  RunResult r = run_local(JobSpec{"sh", "", {}, {}, {}}, shell_tool("printf hello > a.out", "*.out"),
                          "produce", dir.path());
  REQUIRE(r.output_files.size() == 1);
  CHECK(r.output_files[0].size_bytes == 5);
  CHECK_ERRC(run_local(JobSpec{"sh", "", {}, {}, {}}, shell_tool("true", "*.out"), "none", dir.path()),
             Errc::kMissingOutput);
}

TEST_CASE("run_local stages File inputs and measures memory") {
  TempDir dir;
  {
    std::ofstream(dir / "input.txt") << "line1\nline2\n";
  }
  ToolDescriptor wc;
  wc.id = "wc";
  wc.base_command = {"/bin/sh", "-c", "wc -l < \"$0\" > count.txt"};
  InputParameter reads;
  reads.id = "reads";
  reads.type = ParamType::kFile;
  reads.binding = CommandBinding{1, {}};
  wc.inputs.push_back(reads);
  wc.outputs.push_back({"count", "count.txt"});

  JobSpec job{"wc", "", {{"reads", make_file_value((dir / "input.txt").string())}}, {}, {}};
  RunResult r = run_local(job, wc, "wc-1", dir / "work");
  CHECK(r.exit_status == 0);
  CHECK(std::filesystem::exists(dir / "work/wc-1/inputs/input.txt"));
  REQUIRE(r.output_files.size() == 1);
  CHECK(read_file(r.output_files[0].path).find('2') != std::string::npos);
  CHECK(r.peak_mem_mb > 0.0);
}

TEST_CASE("run_local reports spawn failures and honors cancellation") {
  TempDir dir;
  ToolDescriptor missing;
  missing.id = "missing";
  missing.base_command = {"/nonexistent/binary"};
  CHECK_ERRC(run_local(JobSpec{"missing", "", {}, {}, {}}, missing, "m", dir.path()),
             Errc::kSpawnFailure);

  std::atomic<bool> cancel{true};
  RunResult r = run_local(JobSpec{"sh", "", {}, {}, {}}, shell_tool("sleep 30"), "c", dir.path(), &cancel);
  CHECK(r.exit_status != 0);
  CHECK(r.wall_seconds < 10.0);
}
