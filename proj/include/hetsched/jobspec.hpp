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

#include <map>
#include <optional>
#include <string>

#include "hetsched/catalog.hpp"
#include "hetsched/cluster.hpp"

namespace hetsched {

// A request to run one tool with concrete input values.
struct JobSpec {
  std::string tool_id;
  std::string version;  // empty = latest registered
  Bindings bindings;
  std::optional<ResourceVector> resource_request;
  std::map<std::string, std::string> tags;
};

Json to_json(const JobSpec& job);
// Structural parse only; type checking against the descriptor is separate.
JobSpec jobspec_from_json(const Json& j);

}  // namespace hetsched
