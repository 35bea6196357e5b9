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

#include "hetsched/packager.hpp"

#include <set>

#include "hetsched/error.hpp"

namespace hetsched {

namespace fs = std::filesystem;

namespace {

Json id_ref(const std::string& id) { return Json{{"@id", id}}; }

// Crate-relative destination, prefixed with the parameter id on a name clash.
std::string place(const std::string& dir, const std::string& param_id, const fs::path& source,
                  std::set<std::string>& taken) {
  std::string dest = dir + "/" + source.filename().string();
  if (!taken.insert(dest).second) {
    dest = dir + "/" + param_id + "_" + source.filename().string();
    taken.insert(dest);
  }
  return dest;
}

std::uint64_t payload_size(const fs::path& source, const std::string& what) {
  std::error_code ec;
  auto size = fs::file_size(source, ec);
  if (ec) throw Error(Errc::kMissingPayload, what + " file " + source.string() + " does not exist");
  return size;
}

}  // namespace

Json ExperimentPackage::metadata() const { return Json{{"@context", kCrateContext}, {"@graph", graph}}; }

std::string ExperimentPackage::metadata_text() const { return metadata().dump(2) + "\n"; }

ExperimentPackage build_crate(const TaskRecord& task, const ToolDescriptor& descriptor, const CrateOptions& options) {
  if (task.state != TaskState::kComplete) {
    throw Error(Errc::kTaskNotComplete, "task " + task.id + " is " + std::string(task_state_name(task.state)) +
                                            ", only COMPLETE tasks can be packaged");
  }
  ExperimentPackage pkg;
  pkg.task_id = task.id;
  std::set<std::string> taken;

  Json inputs = Json::array();
  Json input_refs = Json::array();
  Bindings parameters = task.job.bindings;
  for (auto& [id, value] : parameters) {
    if (!is_file_value(value)) continue;
    fs::path source = file_path(value);
    std::uint64_t size = payload_size(source, "input '" + id + "'");
    std::string dest = place("inputs", id, source, taken);
    pkg.payload.push_back({source, dest, size});
    inputs.push_back({{"@id", dest},
                      {"@type", "File"},
                      {"name", source.filename().string()},
                      {"description", "input " + id},
                      {"contentSize", std::to_string(size)}});
    input_refs.push_back(id_ref(dest));
    value = make_file_value(dest, size);
  }

  Json outputs = Json::array();
  Json output_refs = Json::array();
  for (const auto& o : task.outputs) {
    fs::path source = o.path;
    std::uint64_t size = payload_size(source, "output '" + o.id + "'");
    std::string dest = place("outputs", o.id, source, taken);
    pkg.payload.push_back({source, dest, size});
    outputs.push_back({{"@id", dest},
                       {"@type", "File"},
                       {"name", source.filename().string()},
                       {"description", "output " + o.id},
                       {"contentSize", std::to_string(size)}});
    output_refs.push_back(id_ref(dest));
  }

  Json params{{"tool_id", descriptor.id}, {"version", descriptor.version}, {"bindings", parameters}};
  if (task.job.resource_request) params["resource_request"] = to_json(*task.job.resource_request);
  pkg.parameters = params.dump(2) + "\n";
  input_refs.push_back(id_ref("parameters.json"));

  const std::string software_id = "#software-" + descriptor.id;
  const std::string action_id = "#run-" + task.id;
  std::optional<std::string> doi_id;
  if (options.doi) doi_id = "https://doi.org/" + *options.doi;

  Json parts = Json::array();
  for (const auto& f : inputs) parts.push_back(id_ref(f["@id"]));
  parts.push_back(id_ref("parameters.json"));
  for (const auto& f : outputs) parts.push_back(id_ref(f["@id"]));

  Json root{{"@id", "./"},
            {"@type", "Dataset"},
            {"name", "Execution of " + descriptor.id + " " + descriptor.version},
            {"description", "Experiment package for task " + task.id},
            {"datePublished", format_rfc3339(task.logs.end_time.value_or(task.creation_time))},
            {"hasPart", parts},
            {"mentions", id_ref(action_id)}};
  if (doi_id) root["citation"] = id_ref(*doi_id);
  if (options.author) root["author"] = id_ref("#author");

  Json action{{"@id", action_id},
              {"@type", "CreateAction"},
              {"name", "Run of " + descriptor.id + " as task " + task.id},
              {"instrument", id_ref(software_id)},
              {"object", input_refs},
              {"result", output_refs},
              {"actionStatus", id_ref("http://schema.org/CompletedActionStatus")}};
  if (task.logs.start_time) action["startTime"] = format_rfc3339(*task.logs.start_time);
  if (task.logs.end_time) action["endTime"] = format_rfc3339(*task.logs.end_time);
  if (options.author) action["agent"] = id_ref("#author");

  Json software{{"@id", software_id},
                {"@type", "SoftwareApplication"},
                {"name", descriptor.id},
                {"version", descriptor.version},
                {"identifier", descriptor.image_ref}};

  pkg.graph.push_back({{"@id", kCrateMetadataFile},
                       {"@type", "CreativeWork"},
                       {"conformsTo", id_ref(kCrateProfile)},
                       {"about", id_ref("./")}});
  pkg.graph.push_back(root);
  pkg.graph.push_back(action);
  pkg.graph.push_back(software);
  for (const auto& f : inputs) pkg.graph.push_back(f);
  pkg.graph.push_back({{"@id", "parameters.json"},
                       {"@type", "File"},
                       {"name", "parameters.json"},
                       {"description", "Tool configuration: input bindings of the run"},
                       {"encodingFormat", "application/json"},
                       {"contentSize", std::to_string(pkg.parameters.size())}});
  for (const auto& f : outputs) pkg.graph.push_back(f);
  if (doi_id) {
    pkg.graph.push_back({{"@id", *doi_id},
                         {"@type", "CreativeWork"},
                         {"identifier", *options.doi},
                         {"name", "Related publication"}});
  }
  if (options.author) pkg.graph.push_back({{"@id", "#author"}, {"@type", "Person"}, {"name", *options.author}});
  return pkg;
}

namespace {

std::vector<std::string> write_one(const ExperimentPackage& pkg, const fs::path& dir) {
  for (const auto& p : pkg.payload) {
    if (!fs::exists(p.source)) {
      throw Error(Errc::kMissingPayload, "payload file " + p.source.string() + " for " + p.dest + " is missing");
    }
  }
  std::vector<std::string> manifest;
  try {
    fs::create_directories(dir);
    for (const auto& p : pkg.payload) {
      fs::path target = dir / p.dest;
      fs::create_directories(target.parent_path());
      manifest.push_back(p.dest);
      if (fs::exists(target) && fs::equivalent(target, p.source)) continue;
      fs::copy_file(p.source, target, fs::copy_options::overwrite_existing);
    }
  } catch (const fs::filesystem_error& e) {
    throw Error(Errc::kIo, std::string("writing crate: ") + e.what());
  }
  write_file_atomic(dir / "parameters.json", pkg.parameters);
  manifest.push_back("parameters.json");
  write_file_atomic(dir / kCrateMetadataFile, pkg.metadata_text());
  manifest.push_back(kCrateMetadataFile);
  return manifest;
}

}  // namespace

std::vector<std::string> write_crate(const ExperimentPackage& package, const fs::path& directory,
                                     const std::optional<fs::path>& state_dir) {
  std::vector<std::string> manifest = write_one(package, directory);
  if (state_dir) {
    fs::path stored = *state_dir / "crates" / package.task_id;
    std::error_code ec;
    if (!fs::exists(stored) || !fs::equivalent(stored, directory, ec)) write_one(package, stored);
  }
  return manifest;
}

Json CrateValidation::to_json() const { return Json{{"valid", ok()}, {"failures", failures}}; }

CrateValidation validate_crate(const fs::path& directory) {
  CrateValidation v;
  fs::path meta = directory / kCrateMetadataFile;
  if (!fs::exists(meta)) {
    v.failures.push_back(std::string("metadata file ") + kCrateMetadataFile + " is missing");
    return v;
  }
  Json doc;
  try {
    doc = Json::parse(read_file(meta));
  } catch (const std::exception& e) {
    v.failures.push_back(std::string("metadata is not valid JSON: ") + e.what());
    return v;
  }
  if (doc.value("@context", Json()) != kCrateContext) v.failures.push_back("@context is not the RO-Crate 1.1 context");
  if (!doc.contains("@graph") || !doc["@graph"].is_array()) {
    v.failures.push_back("metadata has no @graph array");
    return v;
  }
  const Json& graph = doc["@graph"];

  std::map<std::string, const Json*> by_id;
  for (const auto& e : graph) {
    if (e.contains("@id") && e["@id"].is_string()) by_id[e["@id"].get<std::string>()] = &e;
  }
  auto has_type = [](const Json& e, std::string_view type) {
    if (!e.contains("@type")) return false;
    const Json& t = e["@type"];
    if (t.is_string()) return t.get<std::string>() == type;
    return t.is_array() && std::any_of(t.begin(), t.end(), [&](const Json& x) { return x == type; });
  };

  int roots = 0;
  for (const auto& e : graph) roots += e.value("@id", "") == "./" && has_type(e, "Dataset");
  if (roots != 1) v.failures.push_back("expected exactly one root Dataset './', found " + std::to_string(roots));

  auto desc = by_id.find(kCrateMetadataFile);
  if (desc == by_id.end()) {
    v.failures.push_back("metadata descriptor entity is missing");
  } else if (desc->second->value("conformsTo", Json()) != id_ref(kCrateProfile)) {
    v.failures.push_back("metadata descriptor does not conform to RO-Crate 1.1");
  }

  for (const auto& e : graph) {
    if (!has_type(e, "File")) continue;
    std::string id = e.value("@id", "");
    fs::path file = directory / id;
    std::error_code ec;
    auto size = fs::file_size(file, ec);
    if (ec) {
      v.failures.push_back("File entity '" + id + "' has no file in the crate");
      continue;
    }
    if (e.contains("contentSize") && e["contentSize"].get<std::string>() != std::to_string(size)) {
      v.failures.push_back("File entity '" + id + "' declares size " + e["contentSize"].get<std::string>() +
                           " but the file has " + std::to_string(size) + " bytes");
    }
  }

  bool action_ok = false;
  for (const auto& e : graph) {
    if (!has_type(e, "CreateAction")) continue;
    if (e.contains("instrument") && by_id.contains(e["instrument"].value("@id", ""))) action_ok = true;
  }
  if (!action_ok) v.failures.push_back("no CreateAction with a resolvable instrument");
  return v;
}

}  // namespace hetsched
