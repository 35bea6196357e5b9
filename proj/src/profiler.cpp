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

#include "hetsched/profiler.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "hetsched/error.hpp"

namespace hetsched {

namespace fs = std::filesystem;

ProfilingRequest profiling_request_from_json(const Json& j) {
  ProfilingRequest r;
  try {
    r.tool_id = j.at("tool_id").get<std::string>();
    for (const auto& [id, values] : j.at("alternatives").items()) {
      if (!values.is_array()) throw Error(Errc::kInvalidArgument, "alternatives for '" + id + "' must be a list");
      r.alternatives[id] = values.get<std::vector<Json>>();
    }
    r.max_runs = j.value("max_runs", r.max_runs);
    r.seed = j.value("seed", r.seed);
  } catch (const Json::exception& e) {
    throw Error(Errc::kInvalidArgument, std::string("malformed profiling request: ") + e.what());
  }
  if (r.max_runs == 0) throw Error(Errc::kInvalidArgument, "max_runs must be positive");
  return r;
}

Json to_json(const ProfilingRequest& request) {
  return {{"tool_id", request.tool_id},
          {"alternatives", request.alternatives},
          {"max_runs", request.max_runs},
          {"seed", request.seed}};
}

std::vector<Bindings> expand_grid(const ProfilingRequest& request, const ToolDescriptor& descriptor) {
  for (const auto& [id, values] : request.alternatives) {
    if (descriptor.find_input(id) == nullptr) {
      throw Error(Errc::kTypeMismatch, "tool '" + descriptor.id + "' has no input '" + id + "'");
    }
    if (values.empty()) throw Error(Errc::kInvalidArgument, "no alternatives given for '" + id + "'");
  }

  std::vector<std::pair<std::string, std::vector<Json>>> axes;
  std::size_t total = 1;
  for (const auto& param : descriptor.inputs) {
    auto it = request.alternatives.find(param.id);
    if (it == request.alternatives.end()) {
      if (param.required && !param.default_value) {
        throw Error(Errc::kMissingInput, "required input '" + param.id + "' has no alternatives");
      }
      continue;
    }
    std::vector<Json> checked;
    for (const auto& v : it->second) checked.push_back(check_binding(param, v));
    if (total > request.max_runs / checked.size() + 1) total = request.max_runs + 1;
    else total *= checked.size();
    axes.emplace_back(param.id, std::move(checked));
  }
  if (total > request.max_runs) {
    throw Error(Errc::kGridTooLarge, "profiling grid has more than " + std::to_string(request.max_runs) + " runs");
  }

  std::vector<Bindings> grid;
  grid.reserve(total);
  std::vector<std::size_t> pos(axes.size(), 0);
  for (std::size_t n = 0; n < total; ++n) {
    Bindings b;
    for (std::size_t a = 0; a < axes.size(); ++a) b[axes[a].first] = axes[a].second[pos[a]];
    grid.push_back(std::move(b));
    for (std::size_t a = axes.size(); a-- > 0;) {
      if (++pos[a] < axes[a].second.size()) break;
      pos[a] = 0;
    }
  }
  return grid;
}

namespace {

std::string_view kind_name(FeatureKind k) { return k == FeatureKind::kNumeric ? "numeric" : "one-hot"; }

std::string category_of(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

double numeric_feature(const Json& v) {
  if (is_file_value(v)) return static_cast<double>(file_size_bytes(v)) / (1024.0 * 1024.0);
  if (v.is_boolean()) return v.get<bool>() ? 1.0 : 0.0;
  if (v.is_number()) return v.get<double>();
  return 0.0;
}

}  // namespace

Json FeatureSchema::to_json() const {
  Json fs = Json::array();
  for (const auto& f : features) {
    Json e{{"name", f.name}, {"kind", kind_name(f.kind)}, {"input", f.input_id}};
    if (f.kind == FeatureKind::kOneHot) e["category"] = f.category;
    fs.push_back(std::move(e));
  }
  return {{"features", fs}, {"defaults", defaults}};
}

FeatureSchema FeatureSchema::from_json(const Json& j) {
  FeatureSchema s;
  for (const auto& e : j.at("features")) {
    Feature f;
    f.name = e.at("name").get<std::string>();
    f.input_id = e.at("input").get<std::string>();
    std::string kind = e.at("kind").get<std::string>();
    if (kind == "one-hot") {
      f.kind = FeatureKind::kOneHot;
      f.category = e.at("category").get<std::string>();
    } else if (kind != "numeric") {
      throw Error(Errc::kParse, "unknown feature kind " + kind);
    }
    s.features.push_back(std::move(f));
  }
  if (j.contains("defaults")) s.defaults = j.at("defaults").get<std::map<std::string, Json>>();
  return s;
}

FeatureSchema build_feature_schema(const ToolDescriptor& descriptor, const std::vector<Bindings>& grid) {
  FeatureSchema schema;
  for (const auto& param : descriptor.inputs) {
    std::vector<Json> seen;
    for (const auto& b : grid) {
      if (auto it = b.find(param.id); it != b.end()) seen.push_back(it->second);
    }
    if (param.default_value) {
      schema.defaults[param.id] = *param.default_value;
      seen.push_back(*param.default_value);
    }
    if (seen.empty()) continue;

    if (param.type == ParamType::kEnum || param.type == ParamType::kString) {
      std::set<std::string> vocabulary;
      for (const auto& v : seen) vocabulary.insert(category_of(v));
      for (const auto& c : vocabulary) {
        schema.features.push_back({param.id + "=" + c, FeatureKind::kOneHot, param.id, c});
      }
    } else {
      schema.features.push_back({param.id, FeatureKind::kNumeric, param.id, {}});
    }
  }
  return schema;
}

std::vector<double> extract_features(const Bindings& bindings, const FeatureSchema& schema) {
  std::vector<double> out;
  out.reserve(schema.size());
  for (const auto& f : schema.features) {
    const Json* value = nullptr;
    if (auto it = bindings.find(f.input_id); it != bindings.end()) {
      value = &it->second;
    } else if (auto d = schema.defaults.find(f.input_id); d != schema.defaults.end()) {
      value = &d->second;
    }
    if (value == nullptr || value->is_null()) {
      out.push_back(0.0);
    } else if (f.kind == FeatureKind::kNumeric) {
      out.push_back(numeric_feature(*value));
    } else {
      out.push_back(category_of(*value) == f.category ? 1.0 : 0.0);
    }
  }
  return out;
}

Json to_json(const ProfileSample& s) {
  Json j{{"run_id", s.run_id},
         {"bindings", s.bindings},
         {"features", s.features},
         {"consumption", to_json(s.consumption)},
         {"failed", s.failed}};
  if (!s.error.empty()) j["error"] = s.error;
  j["label"] = s.label ? Json(*s.label) : Json(nullptr);
  return j;
}

ProfileSample profile_sample_from_json(const Json& j) {
  ProfileSample s;
  try {
    s.run_id = j.value("run_id", "");
    s.bindings = j.at("bindings").get<Bindings>();
    s.features = j.at("features").get<std::vector<double>>();
    s.consumption = run_result_from_json(j.at("consumption"));
    s.failed = j.value("failed", false);
    s.error = j.value("error", "");
    if (j.contains("label") && j.at("label").is_string()) s.label = j.at("label").get<std::string>();
  } catch (const Json::exception& e) {
    throw Error(Errc::kParse, std::string("malformed profile sample: ") + e.what());
  }
  return s;
}

ResourceVector labeling_demand(const RunResult& consumption, double headroom) {
  std::uint64_t out_bytes = 0;
  for (const auto& f : consumption.output_files) out_bytes += f.size_bytes;
  ResourceVector d;
  d.cpu_cores = headroom;
  d.memory_mb = static_cast<std::int64_t>(std::ceil(headroom * consumption.peak_mem_mb));
  d.disk_mb = static_cast<std::int64_t>(std::ceil(headroom * static_cast<double>(out_bytes) / (1024.0 * 1024.0)));
  return d;
}

std::optional<std::string> cheapest_sufficient_class(const RunResult& consumption,
                                                     const std::vector<NodeClass>& classes,
                                                     double headroom) {
  if (headroom < 1.0) throw Error(Errc::kInvalidArgument, "headroom must be >= 1");
  std::vector<const NodeClass*> ordered;
  for (const auto& c : classes) ordered.push_back(&c);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const NodeClass* a, const NodeClass* b) { return a->cost_rank < b->cost_rank; });
  ResourceVector demand = labeling_demand(consumption, headroom);
  for (const NodeClass* c : ordered) {
    if (covers(c->capacity, demand)) return c->name;
  }
  return std::nullopt;
}

std::vector<ProfileSample> label_samples(const std::vector<ProfileSample>& samples,
                                         const std::vector<NodeClass>& classes, double headroom,
                                         std::vector<std::string>* warnings) {
  std::vector<ProfileSample> out;
  for (const auto& s : samples) {
    if (s.failed) continue;
    auto label = cheapest_sufficient_class(s.consumption, classes, headroom);
    if (!label) {
      if (warnings != nullptr) {
        warnings->push_back("sample " + s.run_id + " dropped: peak " + format_number(s.consumption.peak_mem_mb) +
                            " MB exceeds every node class");
      }
      continue;
    }
    ProfileSample labeled = s;
    labeled.label = *label;
    out.push_back(std::move(labeled));
  }
  if (out.empty()) throw Error(Errc::kUnlabelable, "no sample fits any node class");
  return out;
}

std::vector<ProfileSample> collect_samples(const std::string& tool_id, const std::vector<Bindings>& grid,
                                           const FeatureSchema& schema, const SampleRunner& runner,
                                           std::uint64_t seed, std::size_t parallelism,
                                           const ProgressCallback& progress) {
  if (!runner) throw Error(Errc::kInvalidArgument, "no runner available for profiling");
  if (grid.empty()) throw Error(Errc::kEmptyDataset, "profiling grid is empty");

  std::vector<ProfileSample> samples(grid.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mu;

  auto work = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      ProfileSample& s = samples[i];
      char id[32];
      std::snprintf(id, sizeof id, "%06zu", i + 1);
      s.run_id = "profile-" + tool_id + "-" + id;
      s.bindings = grid[i];
      s.features = extract_features(grid[i], schema);
      JobSpec job;
      job.tool_id = tool_id;
      job.bindings = grid[i];
      job.tags["purpose"] = "profiling";
      try {
        s.consumption = runner(job, s.run_id, seed);
        s.failed = s.consumption.exit_status != 0;
      } catch (const std::exception& e) {
        s.failed = true;
        s.error = e.what();
      }
      std::size_t n = ++done;
      if (progress) {
        std::lock_guard lock(progress_mu);
        progress(n, grid.size());
      }
    }
  };

  std::size_t threads = std::clamp<std::size_t>(parallelism, 1, grid.size());
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  return samples;
}

namespace {

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void check_dimensions(const ExecutionProfile& p) {
  const auto d = static_cast<Eigen::Index>(p.schema.size());
  if (p.standardizer.mean.size() != d || p.standardizer.stddev.size() != d) {
    throw Error(Errc::kFeatureMismatch, "profile for '" + p.tool_id + "': standardizer length differs from schema");
  }
  std::size_t model_dim = ml::input_dimension(p.model);
  bool exact = std::holds_alternative<ml::LogRegModel>(p.model) || std::holds_alternative<ml::KnnModel>(p.model);
  if (exact ? model_dim != p.schema.size() : model_dim > p.schema.size()) {
    throw Error(Errc::kFeatureMismatch, "profile for '" + p.tool_id + "': model expects " +
                                            std::to_string(model_dim) + " features, schema has " +
                                            std::to_string(p.schema.size()));
  }
}

}  // namespace

std::string ExecutionProfile::predict(const Bindings& bindings) const {
  std::vector<double> x = extract_features(bindings, schema);
  if (static_cast<Eigen::Index>(x.size()) != standardizer.mean.size()) {
    throw Error(Errc::kFeatureMismatch, "feature vector length differs from the profile");
  }
  return ml::predict(model, standardizer.apply(to_vector(x)));
}

Json ExecutionProfile::to_json() const {
  Json scores = Json::array();
  for (const auto& s : grid_scores) {
    scores.push_back({{"family", ml::family_name(s.config.family)},
                      {"index", s.config.index},
                      {"hyperparams", s.config.hyperparams()},
                      {"mean_accuracy", s.mean_accuracy}});
  }
  return {{"tool_id", tool_id},
          {"feature_schema", schema.to_json()},
          {"standardizer", standardizer.to_json()},
          {"model", ml::model_to_json(model, config)},
          {"cv_accuracy", cv_accuracy},
          {"degenerate", degenerate},
          {"created_at", format_rfc3339(created_at)},
          {"sample_count", sample_count},
          {"grid_scores", scores}};
}

ExecutionProfile ExecutionProfile::from_json(const Json& j) {
  ExecutionProfile p;
  try {
    p.tool_id = j.at("tool_id").get<std::string>();
    p.schema = FeatureSchema::from_json(j.at("feature_schema"));
    p.standardizer = ml::Standardizer::from_json(j.at("standardizer"));
    p.config = ml::config_from_json(j.at("model"));
    p.model = ml::model_from_json(j.at("model"));
    p.cv_accuracy = j.at("cv_accuracy").get<double>();
    p.degenerate = j.value("degenerate", false);
    p.created_at = parse_rfc3339(j.at("created_at").get<std::string>());
    p.sample_count = j.value("sample_count", std::size_t{0});
    for (const auto& s : j.value("grid_scores", Json::array())) {
      p.grid_scores.push_back({ml::config_from_json(s), s.at("mean_accuracy").get<double>()});
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::kParse, std::string("malformed execution profile: ") + e.what());
  }
  if (p.cv_accuracy < 0.0 || p.cv_accuracy > 1.0) throw Error(Errc::kParse, "cv_accuracy outside [0, 1]");
  check_dimensions(p);
  return p;
}

ExecutionProfile train_profile(const std::string& tool_id, const FeatureSchema& schema,
                               const std::vector<ProfileSample>& labeled, std::uint64_t seed,
                               double created_at) {
  std::vector<const ProfileSample*> usable;
  for (const auto& s : labeled) {
    if (!s.failed && s.label) usable.push_back(&s);
  }
  if (usable.size() < kMinTrainingSamples) {
    throw Error(Errc::kTooFewSamples, "training needs at least " + std::to_string(kMinTrainingSamples) +
                                          " labeled samples, got " + std::to_string(usable.size()));
  }

  ml::Dataset data;
  data.X.resize(static_cast<Eigen::Index>(usable.size()), static_cast<Eigen::Index>(schema.size()));
  for (std::size_t i = 0; i < usable.size(); ++i) {
    if (usable[i]->features.size() != schema.size()) {
      throw Error(Errc::kFeatureMismatch, "sample " + usable[i]->run_id + " has " +
                                              std::to_string(usable[i]->features.size()) + " features, schema has " +
                                              std::to_string(schema.size()));
    }
    data.X.row(static_cast<Eigen::Index>(i)) = to_vector(usable[i]->features).transpose();
    data.y.push_back(*usable[i]->label);
  }

  ExecutionProfile p;
  p.tool_id = tool_id;
  p.schema = schema;
  p.created_at = created_at;
  p.sample_count = usable.size();
  p.standardizer = ml::Standardizer::fit(data.X);

  std::vector<std::string> labels = ml::label_set(data.y);
  if (labels.size() == 1) {
    p.config = ml::ModelConfig{ml::Family::kConstant, 0, ml::kUnlimitedDepth, 0.0, 1};
    p.model = ml::ConstantModel{labels.front()};
    p.cv_accuracy = 1.0;
    p.degenerate = true;
    return p;
  }

  ml::GridResult grid = ml::grid_search(data, seed, 5);
  p.config = grid.best;
  p.cv_accuracy = grid.best_accuracy;
  p.grid_scores = grid.scores;
  ml::Dataset scaled = data;
  scaled.X = p.standardizer.apply(data.X);
  p.model = ml::fit_model(grid.best, scaled);
  return p;
}

ProfilingOutcome profile_tool(const ProfilingRequest& request, const ToolDescriptor& descriptor,
                              const std::vector<NodeClass>& classes, const SampleRunner& runner,
                              const ProfilingOptions& options) {
  std::vector<Bindings> grid = expand_grid(request, descriptor);
  FeatureSchema schema = build_feature_schema(descriptor, grid);
  ProfilingOutcome out;
  std::vector<ProfileSample> collected =
      collect_samples(descriptor.id, grid, schema, runner, request.seed, options.parallelism, options.progress);
  std::vector<ProfileSample> labeled = label_samples(collected, classes, options.headroom, &out.warnings);
  // Keep the full run record with labels filled in where assigned.
  std::map<std::string, std::string> labels;
  for (const auto& s : labeled) labels[s.run_id] = *s.label;
  for (auto& s : collected) {
    if (auto it = labels.find(s.run_id); it != labels.end()) s.label = it->second;
  }
  out.profile = train_profile(descriptor.id, schema, labeled, request.seed, now_seconds());
  out.samples = std::move(collected);
  return out;
}

ProfileStore::ProfileStore(fs::path state_dir) : dir_(std::move(state_dir)) {
  fs::create_directories(*dir_ / "profiles");
}

void ProfileStore::save(const ExecutionProfile& profile, const std::vector<ProfileSample>& samples) {
  save_samples(profile.tool_id, samples);
  std::lock_guard lock(*mu_);
  if (dir_) {
    fs::path file = *dir_ / "profiles" / (profile.tool_id + ".json");
    write_file_atomic(file, profile.to_json().dump(2) + "\n");
    cache_mtime_[profile.tool_id] = fs::last_write_time(file);
  }
  cache_.insert_or_assign(profile.tool_id, profile);
}

void ProfileStore::save_samples(const std::string& tool_id, const std::vector<ProfileSample>& samples) {
  std::lock_guard lock(*mu_);
  if (!dir_) {
    memory_samples_[tool_id] = samples;
    return;
  }
  std::string lines;
  for (const auto& s : samples) lines += to_json(s).dump() + "\n";
  write_file_atomic(*dir_ / "profiles" / (tool_id + ".samples.jsonl"), lines);
}

std::optional<ExecutionProfile> ProfileStore::find(const std::string& tool_id) const {
  std::lock_guard lock(*mu_);
  auto cached = cache_.find(tool_id);
  if (!dir_) return cached == cache_.end() ? std::nullopt : std::optional(cached->second);
  fs::path file = *dir_ / "profiles" / (tool_id + ".json");
  std::error_code ec;
  auto mtime = fs::last_write_time(file, ec);
  if (ec) return std::nullopt;
  if (cached != cache_.end() && cache_mtime_[tool_id] == mtime) return cached->second;
  ExecutionProfile p = ExecutionProfile::from_json(load_document(read_file(file)));
  cache_.insert_or_assign(tool_id, p);
  cache_mtime_[tool_id] = mtime;
  return p;
}

std::vector<ProfileSample> ProfileStore::samples(const std::string& tool_id) const {
  std::lock_guard lock(*mu_);
  if (!dir_) {
    auto it = memory_samples_.find(tool_id);
    return it == memory_samples_.end() ? std::vector<ProfileSample>{} : it->second;
  }
  std::vector<ProfileSample> out;
  std::ifstream in(*dir_ / "profiles" / (tool_id + ".samples.jsonl"));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(profile_sample_from_json(Json::parse(line)));
  }
  return out;
}

std::vector<std::string> ProfileStore::tool_ids() const {
  std::lock_guard lock(*mu_);
  std::set<std::string> ids;
  if (!dir_) {
    for (const auto& [id, p] : cache_) ids.insert(id);
  } else {
    for (const auto& entry : fs::directory_iterator(*dir_ / "profiles")) {
      std::string name = entry.path().filename().string();
      if (name.ends_with(".json")) ids.insert(name.substr(0, name.size() - 5));
    }
  }
  return {ids.begin(), ids.end()};
}

}  // namespace hetsched
