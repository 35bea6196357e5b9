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

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hetsched/util.hpp"

namespace hetsched {

// Capacity or demand along the four resource dimensions of a node.
struct ResourceVector {
  double cpu_cores = 0.0;
  std::int64_t memory_mb = 0;
  std::int64_t disk_mb = 0;
  std::set<std::string> accelerators;

  bool operator==(const ResourceVector&) const = default;
};

// Componentwise a <= b, with a.accelerators a subset of b.accelerators.
bool covers(const ResourceVector& capacity, const ResourceVector& demand);

ResourceVector operator+(const ResourceVector& a, const ResourceVector& b);
ResourceVector operator-(const ResourceVector& a, const ResourceVector& b);

Json to_json(const ResourceVector& v);
ResourceVector resource_vector_from_json(const Json& j);

struct NodeClass {
  std::string name;
  ResourceVector capacity;
  int cost_rank = 1;  // 1 = cheapest
};

struct Node {
  std::string id;
  std::string class_name;
  ResourceVector allocated;

  bool operator==(const Node&) const = default;
};

class ClusterSpec {
 public:
  ClusterSpec() = default;
  // Validates every invariant; throws Error on violation.
  ClusterSpec(std::vector<NodeClass> classes, std::vector<Node> nodes);

  const std::vector<NodeClass>& classes() const { return classes_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Node>& mutable_nodes() { return nodes_; }

  const NodeClass& node_class(std::string_view name) const;
  const NodeClass* find_class(std::string_view name) const;
  const NodeClass& class_of(const Node& node) const { return node_class(node.class_name); }
  Node& node(std::string_view id);
  const Node& node(std::string_view id) const;

  // Classes in ascending cost_rank.
  std::vector<NodeClass> classes_by_cost() const;
  std::vector<std::string> class_names() const;

  Json to_json() const;

 private:
  std::vector<NodeClass> classes_;
  std::vector<Node> nodes_;  // sorted by id
};

ClusterSpec load_cluster_spec(std::string_view text);
ClusterSpec cluster_spec_from_json(const Json& doc);

bool fits(const ResourceVector& demand, const Node& node, const ClusterSpec& cluster);

// Both throw Error(kOverAllocation / kOverRelease) and leave the input untouched.
Node allocate(const Node& node, const ResourceVector& demand, const ClusterSpec& cluster);
Node release(const Node& node, const ResourceVector& demand);

}  // namespace hetsched
