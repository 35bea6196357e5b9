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

#include "hetsched/jobspec.hpp"

#include "hetsched/error.hpp"

namespace hetsched {

Json to_json(const JobSpec& job) {
  Json bindings = Json::object();
  for (const auto& [k, v] : job.bindings) bindings[k] = v;
  Json out{{"tool_id", job.tool_id}, {"bindings", bindings}};
  if (!job.version.empty()) out["version"] = job.version;
  if (job.resource_request) out["resource_request"] = to_json(*job.resource_request);
  if (!job.tags.empty()) out["tags"] = job.tags;
  return out;
}

JobSpec jobspec_from_json(const Json& j) {
  if (!j.is_object()) throw Error(Errc::kInvalidArgument, "job spec must be an object");
  JobSpec job;
  try {
    if (!j.contains("tool_id") || !j.at("tool_id").is_string()) {
      throw Error(Errc::kInvalidArgument, "field 'tool_id': required string");
    }
    job.tool_id = j.at("tool_id").get<std::string>();
    if (j.contains("version") && !j.at("version").is_null()) {
      job.version = j.at("version").get<std::string>();
    }
    if (j.contains("bindings") && !j.at("bindings").is_null()) {
      if (!j.at("bindings").is_object()) {
        throw Error(Errc::kInvalidArgument, "field 'bindings': expected object");
      }
      for (const auto& [k, v] : j.at("bindings").items()) job.bindings[k] = v;
    }
    if (j.contains("resource_request") && !j.at("resource_request").is_null()) {
      job.resource_request = resource_vector_from_json(j.at("resource_request"));
    }
    if (j.contains("tags") && j.at("tags").is_object()) {
      for (const auto& [k, v] : j.at("tags").items()) {
        job.tags[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::kInvalidArgument, std::string("malformed job spec: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::kInvalidArgument) throw;
    throw Error(Errc::kInvalidArgument, e.what());
  }
  return job;
}

}  // namespace hetsched
