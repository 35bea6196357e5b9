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

#include "hetsched/workflow.hpp"

#include <algorithm>
#include <map>

#include "hetsched/error.hpp"

namespace hetsched {

namespace {

std::string strip_hash(std::string s) {
  if (!s.empty() && s.front() == '#') s.erase(0, 1);
  return s;
}

std::string normalize_ref(std::string ref) {
  ref = strip_hash(std::move(ref));
  if (ref.size() > 4 && ref.ends_with(".cwl")) ref.erase(ref.size() - 4);
  auto slash = ref.rfind('/');
  if (slash != std::string::npos) ref.erase(0, slash + 1);
  return ref;
}

std::vector<std::string> parse_sources(const Json& spec) {
  const Json& src = spec.is_object() ? spec.value("source", Json()) : spec;
  std::vector<std::string> out;
  if (src.is_string()) {
    out.push_back(strip_hash(src.get<std::string>()));
  } else if (src.is_array()) {
    for (const auto& s : src) out.push_back(strip_hash(s.get<std::string>()));
  }
  return out;
}

}  // namespace

const WorkflowStep* WorkflowDescriptor::find_step(std::string_view step_id) const {
  for (const auto& s : steps) {
    if (s.id == step_id) return &s;
  }
  return nullptr;
}

WorkflowDescriptor workflow_from_json(const Json& doc, std::string_view fallback_id) {
  if (!doc.is_object()) throw Error(Errc::kParse, "workflow document must be a mapping");
  if (doc.value("class", "") != "Workflow") {
    throw Error(Errc::kUnknownClass, "unsupported class '" + doc.value("class", "") +
                                         "', expected Workflow");
  }
  std::string version = doc.value("cwlVersion", "");
  if (version != "v1.0" && version != "v1.1" && version != "v1.2") {
    throw Error(Errc::kUnsupportedVersion, "unsupported cwlVersion '" + version + "'");
  }

  WorkflowDescriptor wf;
  try {
    wf.id = doc.contains("id") ? strip_hash(doc.at("id").get<std::string>())
                               : std::string(fallback_id);

    // Reuse the tool input grammar by wrapping the inputs in a synthetic tool.
    Json shim{{"class", "CommandLineTool"},
              {"cwlVersion", version},
              {"id", "workflow-inputs"},
              {"baseCommand", "true"},
              {"inputs", doc.value("inputs", Json::array())}};
    wf.inputs = tool_from_json(shim).inputs;

    std::set<std::string> step_ids;
    auto add_step = [&](const std::string& id, const Json& spec) {
      if (!step_ids.insert(id).second) throw Error(Errc::kDuplicateId, "duplicate step id " + id);
      WorkflowStep step;
      step.id = id;
      const Json& run = spec.at("run");
      if (run.is_string()) {
        step.run = normalize_ref(run.get<std::string>());
      } else {
        ToolDescriptor embedded = tool_from_json(run, id + "-tool");
        step.run = embedded.id;
        wf.embedded_tools[embedded.id] = embedded;
      }
      const Json& in = spec.value("in", Json::object());
      if (in.is_object()) {
        for (const auto& [key, value] : in.items()) {
          auto sources = parse_sources(value);
          if (sources.size() != 1) {
            throw Error(Errc::kUnsupportedType, "step " + id + " input " + key +
                                                    " must have exactly one source");
          }
          step.in[key] = sources.front();
        }
      } else if (in.is_array()) {
        for (const auto& item : in) {
          auto sources = parse_sources(item);
          if (sources.size() != 1) {
            throw Error(Errc::kUnsupportedType, "step " + id + " input must have one source");
          }
          step.in[strip_hash(item.at("id").get<std::string>())] = sources.front();
        }
      }
      for (const auto& o : spec.value("out", Json::array())) {
        step.out.push_back(strip_hash(o.is_object() ? o.at("id").get<std::string>()
                                                    : o.get<std::string>()));
      }
      wf.steps.push_back(std::move(step));
    };
    const Json& steps = doc.value("steps", Json::array());
    if (steps.is_array()) {
      for (const auto& s : steps) add_step(strip_hash(s.at("id").get<std::string>()), s);
    } else if (steps.is_object()) {
      for (const auto& [key, s] : steps.items()) add_step(key, s);
    }

    const Json& outputs = doc.value("outputs", Json::array());
    auto add_output = [&](const std::string& id, const Json& spec) {
      auto sources = parse_sources(spec.contains("outputSource") ? spec.at("outputSource")
                                                                 : spec.value("source", Json()));
      if (sources.size() != 1) throw Error(Errc::kUnresolvedSource, "output " + id + " has no source");
      wf.outputs.push_back({id, sources.front()});
    };
    if (outputs.is_array()) {
      for (const auto& o : outputs) add_output(strip_hash(o.at("id").get<std::string>()), o);
    } else if (outputs.is_object()) {
      for (const auto& [key, o] : outputs.items()) add_output(key, o);
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::kParse, std::string("malformed workflow document: ") + e.what());
  }

  auto resolves = [&](const std::string& source) {
    auto slash = source.find('/');
    if (slash == std::string::npos) {
      return std::any_of(wf.inputs.begin(), wf.inputs.end(),
                         [&](const InputParameter& p) { return p.id == source; });
    }
    const WorkflowStep* producer = wf.find_step(source.substr(0, slash));
    if (producer == nullptr) return false;
    std::string out = source.substr(slash + 1);
    return std::find(producer->out.begin(), producer->out.end(), out) != producer->out.end();
  };
  for (const auto& step : wf.steps) {
    for (const auto& [key, source] : step.in) {
      if (!resolves(source)) {
        throw Error(Errc::kUnresolvedSource,
                    "step " + step.id + " input " + key + ": unresolved source '" + source + "'");
      }
    }
  }
  for (const auto& o : wf.outputs) {
    if (!resolves(o.source) || o.source.find('/') == std::string::npos) {
      throw Error(Errc::kUnresolvedSource, "workflow output " + o.id + ": unresolved source '" +
                                               o.source + "'");
    }
  }
  return wf;
}

WorkflowDescriptor parse_workflow(std::string_view text, std::string_view fallback_id) {
  return workflow_from_json(load_document(text), fallback_id);
}

Json DagPlan::to_json() const {
  Json e = Json::array();
  for (const auto& [from, to] : edges) e.push_back(Json::array({from, to}));
  return {{"edges", e}, {"topo_order", topo_order}};
}

DagPlan plan(const WorkflowDescriptor& workflow, const ToolResolver& resolver) {
  DagPlan out;
  for (const auto& step : workflow.steps) {
    std::optional<ToolDescriptor> tool;
    if (auto it = workflow.embedded_tools.find(step.run); it != workflow.embedded_tools.end()) {
      tool = it->second;
    } else if (resolver) {
      tool = resolver(step.run);
    }
    if (!tool) {
      throw Error(Errc::kUnknownTool, "step " + step.id + ": unresolvable tool '" + step.run + "'");
    }
    for (const auto& o : step.out) {
      bool declared = std::any_of(tool->outputs.begin(), tool->outputs.end(),
                                  [&](const OutputParameter& p) { return p.id == o; });
      if (!declared) {
        throw Error(Errc::kUnresolvedSource,
                    "step " + step.id + ": tool " + tool->id + " has no output '" + o + "'");
      }
    }
    for (const auto& [source_key, source] : step.in) {
      auto slash = source.find('/');
      if (slash != std::string::npos) out.edges.emplace(source.substr(0, slash), step.id);
    }
  }

  std::map<std::string, int> indegree;
  std::map<std::string, std::vector<std::string>> successors;
  for (const auto& step : workflow.steps) indegree[step.id] = 0;
  for (const auto& [from, to] : out.edges) {
    ++indegree[to];
    successors[from].push_back(to);
  }
  std::set<std::string> ready;
  for (const auto& [id, deg] : indegree) {
    if (deg == 0) ready.insert(id);
  }
  while (!ready.empty()) {
    std::string next = *ready.begin();
    ready.erase(ready.begin());
    out.topo_order.push_back(next);
    for (const auto& succ : successors[next]) {
      if (--indegree[succ] == 0) ready.insert(succ);
    }
  }

  if (out.topo_order.size() != workflow.steps.size()) {
    // Walk predecessors inside the unprocessed remainder until a step repeats;
    // that step lies on a cycle.
    std::map<std::string, std::string> pred;
    for (const auto& [from, to] : out.edges) {
      if (indegree[from] > 0 && indegree[to] > 0 && !pred.contains(to)) pred[to] = from;
    }
    std::string cur;
    for (const auto& [id, deg] : indegree) {
      if (deg > 0) {
        cur = id;
        break;
      }
    }
    std::set<std::string> visited;
    while (visited.insert(cur).second) cur = pred.at(cur);
    throw Error(Errc::kCycle, "cycle detected involving step '" + cur + "'");
  }
  return out;
}

std::pair<std::string, std::string> split_tool_ref(std::string_view ref) {
  auto at = ref.find('@');
  if (at == std::string_view::npos) return {std::string(ref), {}};
  return {std::string(ref.substr(0, at)), std::string(ref.substr(at + 1))};
}

JobSpec instantiate_step(const WorkflowStep& step, const std::map<std::string, Json>& completed_outputs,
                         const WorkflowDescriptor& workflow, const Bindings& workflow_bindings) {
  JobSpec job;
  std::tie(job.tool_id, job.version) = split_tool_ref(step.run);
  job.tags["workflow_step"] = step.id;
  for (const auto& [input_id, source] : step.in) {
    if (source.find('/') != std::string::npos) {
      auto it = completed_outputs.find(source);
      if (it == completed_outputs.end()) {
        throw Error(Errc::kMissingUpstream,
                    "step " + step.id + ": upstream output '" + source + "' not available");
      }
      job.bindings[input_id] = it->second;
      continue;
    }
    if (auto it = workflow_bindings.find(source); it != workflow_bindings.end()) {
      job.bindings[input_id] = it->second;
      continue;
    }
    const InputParameter* param = nullptr;
    for (const auto& p : workflow.inputs) {
      if (p.id == source) param = &p;
    }
    if (param != nullptr && param->default_value) {
      job.bindings[input_id] = *param->default_value;
    } else if (param == nullptr || param->required) {
      throw Error(Errc::kMissingInput,
                  "step " + step.id + ": workflow input '" + source + "' is not bound");
    }
  }
  return job;
}

}  // namespace hetsched
