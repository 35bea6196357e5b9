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

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hetsched/catalog.hpp"
#include "hetsched/jobspec.hpp"

namespace hetsched {

struct WorkflowOutput {
  std::string id;
  std::string source;  // "step_id/output_id"
};

struct WorkflowStep {
  std::string id;
  std::string run;                         // tool reference: "id" or "id@version"
  std::map<std::string, std::string> in;   // step input id -> source
  std::vector<std::string> out;
};

struct WorkflowDescriptor {
  std::string id;
  std::vector<InputParameter> inputs;
  std::vector<WorkflowOutput> outputs;
  std::vector<WorkflowStep> steps;
  // CommandLineTools given inline as `run:` objects, keyed by their reference.
  std::map<std::string, ToolDescriptor> embedded_tools;

  const WorkflowStep* find_step(std::string_view step_id) const;
};

WorkflowDescriptor parse_workflow(std::string_view text, std::string_view fallback_id = {});
WorkflowDescriptor workflow_from_json(const Json& doc, std::string_view fallback_id = {});

struct DagPlan {
  std::set<std::pair<std::string, std::string>> edges;  // (producer, consumer)
  std::vector<std::string> topo_order;

  Json to_json() const;
};

using ToolResolver = std::function<std::optional<ToolDescriptor>(const std::string& ref)>;

// Kahn's algorithm with the ready set drained in lexicographic step-id
// order. Throws kCycle naming one step on a cycle, kUnknownTool for an
// unresolvable reference.
DagPlan plan(const WorkflowDescriptor& workflow, const ToolResolver& resolver);

// Splits "id@version" into its parts; version is empty when absent.
std::pair<std::string, std::string> split_tool_ref(std::string_view ref);

// Upstream outputs are File values keyed "step/output".
JobSpec instantiate_step(const WorkflowStep& step, const std::map<std::string, Json>& completed_outputs,
                         const WorkflowDescriptor& workflow, const Bindings& workflow_bindings);

}  // namespace hetsched
