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

#include "hetsched/cluster.hpp"

#include <algorithm>
#include <cmath>

#include "hetsched/error.hpp"

namespace hetsched {

namespace {

// Tolerance for fractional cpu accounting; memory and disk are integral.
constexpr double kCpuEpsilon = 1e-9;

bool subset(const std::set<std::string>& a, const std::set<std::string>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

void check_non_negative(const ResourceVector& v, const std::string& where) {
  if (!(v.cpu_cores >= 0.0) || !std::isfinite(v.cpu_cores) || v.memory_mb < 0 || v.disk_mb < 0) {
    throw Error(Errc::kNegativeCapacity, "negative or non-finite resource in " + where);
  }
}

}  // namespace

bool covers(const ResourceVector& capacity, const ResourceVector& demand) {
  return demand.cpu_cores <= capacity.cpu_cores + kCpuEpsilon &&
         demand.memory_mb <= capacity.memory_mb && demand.disk_mb <= capacity.disk_mb &&
         subset(demand.accelerators, capacity.accelerators);
}

ResourceVector operator+(const ResourceVector& a, const ResourceVector& b) {
  ResourceVector out{a.cpu_cores + b.cpu_cores, a.memory_mb + b.memory_mb, a.disk_mb + b.disk_mb,
                     a.accelerators};
  out.accelerators.insert(b.accelerators.begin(), b.accelerators.end());
  return out;
}

ResourceVector operator-(const ResourceVector& a, const ResourceVector& b) {
  ResourceVector out{a.cpu_cores - b.cpu_cores, a.memory_mb - b.memory_mb, a.disk_mb - b.disk_mb,
                     {}};
  std::set_difference(a.accelerators.begin(), a.accelerators.end(), b.accelerators.begin(),
                      b.accelerators.end(),
                      std::inserter(out.accelerators, out.accelerators.end()));
  if (std::abs(out.cpu_cores) < kCpuEpsilon) out.cpu_cores = 0.0;
  return out;
}

Json to_json(const ResourceVector& v) {
  return Json{{"cpu_cores", v.cpu_cores},
              {"memory_mb", v.memory_mb},
              {"disk_mb", v.disk_mb},
              {"accelerators", Json(std::vector<std::string>(v.accelerators.begin(),
                                                              v.accelerators.end()))}};
}

ResourceVector resource_vector_from_json(const Json& j) {
  if (!j.is_object()) throw Error(Errc::kParse, "resource vector must be an object");
  ResourceVector v;
  try {
    v.cpu_cores = j.value("cpu_cores", 0.0);
    v.memory_mb = j.value("memory_mb", std::int64_t{0});
    v.disk_mb = j.value("disk_mb", std::int64_t{0});
    if (j.contains("accelerators")) {
      for (const auto& label : j.at("accelerators")) {
        if (!v.accelerators.insert(label.get<std::string>()).second) {
          throw Error(Errc::kDuplicateId, "duplicate accelerator label " + label.get<std::string>());
        }
      }
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::kParse, std::string("bad resource vector: ") + e.what());
  }
  return v;
}

ClusterSpec::ClusterSpec(std::vector<NodeClass> classes, std::vector<Node> nodes)
    : classes_(std::move(classes)), nodes_(std::move(nodes)) {
  std::set<std::string> class_names;
  std::set<int> ranks;
  for (const auto& c : classes_) {
    if (c.name.empty()) throw Error(Errc::kParse, "node class without a name");
    if (!class_names.insert(c.name).second) {
      throw Error(Errc::kDuplicateId, "duplicate node class " + c.name);
    }
    if (c.cost_rank < 1) throw Error(Errc::kParse, "cost_rank must be positive for " + c.name);
    if (!ranks.insert(c.cost_rank).second) {
      throw Error(Errc::kDuplicateRank, "duplicate cost_rank " + std::to_string(c.cost_rank));
    }
    check_non_negative(c.capacity, "class " + c.name);
  }
  std::set<std::string> node_ids;
  for (const auto& n : nodes_) {
    if (n.id.empty()) throw Error(Errc::kParse, "node without an id");
    if (!node_ids.insert(n.id).second) throw Error(Errc::kDuplicateId, "duplicate node id " + n.id);
    const NodeClass* cls = find_class(n.class_name);
    if (cls == nullptr) {
      throw Error(Errc::kUnknownReference,
                  "node " + n.id + " references unknown class " + n.class_name);
    }
    check_non_negative(n.allocated, "node " + n.id);
    if (!covers(cls->capacity, n.allocated)) {
      throw Error(Errc::kOverAllocation, "node " + n.id + " allocated beyond capacity");
    }
  }
  std::sort(nodes_.begin(), nodes_.end(),
            [](const Node& a, const Node& b) { return a.id < b.id; });
}

const NodeClass* ClusterSpec::find_class(std::string_view name) const {
  for (const auto& c : classes_) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

const NodeClass& ClusterSpec::node_class(std::string_view name) const {
  const NodeClass* c = find_class(name);
  if (c == nullptr) throw Error(Errc::kUnknownReference, "unknown node class " + std::string(name));
  return *c;
}

Node& ClusterSpec::node(std::string_view id) {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id,
                             [](const Node& n, std::string_view key) { return n.id < key; });
  if (it == nodes_.end() || it->id != id) {
    throw Error(Errc::kUnknownReference, "unknown node " + std::string(id));
  }
  return *it;
}

const Node& ClusterSpec::node(std::string_view id) const {
  return const_cast<ClusterSpec*>(this)->node(id);
}

std::vector<NodeClass> ClusterSpec::classes_by_cost() const {
  std::vector<NodeClass> out = classes_;
  std::sort(out.begin(), out.end(),
            [](const NodeClass& a, const NodeClass& b) { return a.cost_rank < b.cost_rank; });
  return out;
}

std::vector<std::string> ClusterSpec::class_names() const {
  std::vector<std::string> out;
  for (const auto& c : classes_) out.push_back(c.name);
  return out;
}

Json ClusterSpec::to_json() const {
  Json classes = Json::array();
  for (const auto& c : classes_) {
    classes.push_back(
        {{"name", c.name}, {"cost_rank", c.cost_rank}, {"capacity", hetsched::to_json(c.capacity)}});
  }
  Json nodes = Json::array();
  for (const auto& n : nodes_) nodes.push_back({{"id", n.id}, {"class", n.class_name}});
  return {{"classes", classes}, {"nodes", nodes}};
}

ClusterSpec cluster_spec_from_json(const Json& doc) {
  if (!doc.is_object()) throw Error(Errc::kParse, "cluster spec must be a mapping");
  std::vector<NodeClass> classes;
  std::vector<Node> nodes;
  try {
    for (const auto& c : doc.at("classes")) {
      NodeClass cls;
      cls.name = c.at("name").get<std::string>();
      cls.cost_rank = c.at("cost_rank").get<int>();
      cls.capacity = resource_vector_from_json(c.at("capacity"));
      classes.push_back(std::move(cls));
    }
    if (doc.contains("nodes") && !doc.at("nodes").is_null()) {
      for (const auto& n : doc.at("nodes")) {
        nodes.push_back(Node{n.at("id").get<std::string>(), n.at("class").get<std::string>(), {}});
      }
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::kParse, std::string("malformed cluster spec: ") + e.what());
  }
  return ClusterSpec(std::move(classes), std::move(nodes));
}

ClusterSpec load_cluster_spec(std::string_view text) {
  return cluster_spec_from_json(load_document(text));
}

bool fits(const ResourceVector& demand, const Node& node, const ClusterSpec& cluster) {
  const NodeClass& cls = cluster.class_of(node);
  // Accelerators are exclusive devices: the free set is capacity minus what
  // other jobs already hold.
  return covers(cls.capacity - node.allocated, demand) &&
         subset(demand.accelerators, cls.capacity.accelerators);
}

Node allocate(const Node& node, const ResourceVector& demand, const ClusterSpec& cluster) {
  if (!fits(demand, node, cluster)) {
    throw Error(Errc::kOverAllocation, "demand does not fit on node " + node.id);
  }
  Node out = node;
  out.allocated = node.allocated + demand;
  return out;
}

Node release(const Node& node, const ResourceVector& demand) {
  if (!covers(node.allocated, demand)) {
    throw Error(Errc::kOverRelease, "release exceeds allocation on node " + node.id);
  }
  Node out = node;
  out.allocated = node.allocated - demand;
  return out;
}

}  // namespace hetsched
