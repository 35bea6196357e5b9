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

#include "hetsched/catalog.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <mutex>
#include <set>

#include "hetsched/error.hpp"

namespace hetsched {

namespace fs = std::filesystem;

std::string_view param_type_name(ParamType type) {
  switch (type) {
    case ParamType::kInt: return "int";
    case ParamType::kFloat: return "float";
    case ParamType::kString: return "string";
    case ParamType::kBoolean: return "boolean";
    case ParamType::kFile: return "File";
    case ParamType::kEnum: return "enum";
  }
  return "?";
}

std::string_view widget_name(Widget widget) {
  switch (widget) {
    case Widget::kNumber: return "number";
    case Widget::kText: return "text";
    case Widget::kCheckbox: return "checkbox";
    case Widget::kFilePicker: return "file-picker";
    case Widget::kSelect: return "select";
  }
  return "?";
}

const InputParameter* ToolDescriptor::find_input(std::string_view input_id) const {
  for (const auto& in : inputs) {
    if (in.id == input_id) return &in;
  }
  return nullptr;
}

Json make_file_value(const std::string& path, std::optional<std::uint64_t> size_bytes) {
  Json v{{"class", "File"}, {"path", path}};
  if (size_bytes) v["size"] = *size_bytes;
  return v;
}

bool is_file_value(const Json& value) {
  return value.is_object() && value.value("class", "") == "File" && value.contains("path") &&
         value.at("path").is_string();
}

std::string file_path(const Json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (!is_file_value(value)) throw Error(Errc::kTypeMismatch, "not a File value");
  return value.at("path").get<std::string>();
}

std::uint64_t file_size_bytes(const Json& value) {
  if (value.is_object() && value.contains("size") && value.at("size").is_number()) {
    return value.at("size").get<std::uint64_t>();
  }
  std::error_code ec;
  auto size = fs::file_size(file_path(value), ec);
  return ec ? 0 : size;
}

namespace {

std::string strip_fragment(std::string s) {
  if (!s.empty() && s.front() == '#') s.erase(0, 1);
  auto slash = s.rfind('/');
  if (slash != std::string::npos) s.erase(0, slash + 1);
  return s;
}

struct ParsedType {
  ParamType type;
  bool optional = false;
  std::vector<std::string> symbols;
};

ParsedType parse_type(const Json& t, const std::string& input_id) {
  ParsedType out{ParamType::kString, false, {}};
  if (t.is_array()) {
    // ["null", T]
    std::vector<Json> non_null;
    for (const auto& item : t) {
      if (item.is_string() && item.get<std::string>() == "null") {
        out.optional = true;
      } else {
        non_null.push_back(item);
      }
    }
    if (non_null.size() != 1) {
      throw Error(Errc::kUnsupportedType, "unsupported union type for input " + input_id);
    }
    ParsedType inner = parse_type(non_null.front(), input_id);
    inner.optional = inner.optional || out.optional;
    return inner;
  }
  if (t.is_object()) {
    if (t.value("type", "") != "enum") {
      throw Error(Errc::kUnsupportedType, "unsupported complex type for input " + input_id);
    }
    out.type = ParamType::kEnum;
    std::set<std::string> seen;
    for (const auto& s : t.value("symbols", Json::array())) {
      std::string sym = strip_fragment(s.get<std::string>());
      if (!seen.insert(sym).second) {
        throw Error(Errc::kDuplicateId, "duplicate enum symbol " + sym + " in input " + input_id);
      }
      out.symbols.push_back(sym);
    }
    if (out.symbols.empty()) throw Error(Errc::kUnsupportedType, "empty enum for input " + input_id);
    return out;
  }
  if (!t.is_string()) throw Error(Errc::kUnsupportedType, "missing type for input " + input_id);
  std::string name = t.get<std::string>();
  if (!name.empty() && name.back() == '?') {
    out.optional = true;
    name.pop_back();
  }
  if (name == "int" || name == "long") {
    out.type = ParamType::kInt;
  } else if (name == "float" || name == "double") {
    out.type = ParamType::kFloat;
  } else if (name == "string") {
    out.type = ParamType::kString;
  } else if (name == "boolean") {
    out.type = ParamType::kBoolean;
  } else if (name == "File") {
    out.type = ParamType::kFile;
  } else {
    throw Error(Errc::kUnsupportedType, "unsupported type '" + name + "' for input " + input_id);
  }
  return out;
}

// CWL allows both `inputs: [{id: x, ...}]` and `inputs: {x: {...} | "type"}`.
std::vector<std::pair<std::string, Json>> normalize_fields(const Json& section,
                                                           const std::string& what) {
  std::vector<std::pair<std::string, Json>> out;
  if (section.is_null()) return out;
  if (section.is_array()) {
    for (const auto& item : section) {
      if (!item.is_object() || !item.contains("id")) {
        throw Error(Errc::kMissingField, what + " entry without id");
      }
      out.emplace_back(strip_fragment(item.at("id").get<std::string>()), item);
    }
  } else if (section.is_object()) {
    for (const auto& [key, value] : section.items()) {
      if (value.is_string() || value.is_array()) {
        out.emplace_back(key, Json{{"type", value}});
      } else {
        out.emplace_back(key, value);
      }
    }
  } else {
    throw Error(Errc::kParse, what + " must be a list or mapping");
  }
  return out;
}

std::string find_docker_image(const Json& doc) {
  for (const char* section : {"requirements", "hints"}) {
    if (!doc.contains(section)) continue;
    const Json& reqs = doc.at(section);
    if (reqs.is_array()) {
      for (const auto& r : reqs) {
        if (r.value("class", "") == "DockerRequirement") return r.value("dockerPull", "");
      }
    } else if (reqs.is_object() && reqs.contains("DockerRequirement")) {
      return reqs.at("DockerRequirement").value("dockerPull", "");
    }
  }
  return {};
}

void check_cwl_header(const Json& doc, std::string_view expected_class) {
  if (!doc.is_object()) throw Error(Errc::kParse, "CWL document must be a mapping");
  if (!doc.contains("class")) throw Error(Errc::kMissingField, "document has no class");
  std::string cls = doc.at("class").get<std::string>();
  if (cls != expected_class) {
    throw Error(Errc::kUnknownClass, "unsupported class '" + cls + "', expected " +
                                         std::string(expected_class));
  }
  if (!doc.contains("cwlVersion")) throw Error(Errc::kMissingField, "document has no cwlVersion");
  std::string version = doc.at("cwlVersion").get<std::string>();
  if (version != "v1.0" && version != "v1.1" && version != "v1.2") {
    throw Error(Errc::kUnsupportedVersion, "unsupported cwlVersion " + version);
  }
}

}  // namespace

Json check_binding(const InputParameter& param, const Json& value) {
  auto mismatch = [&](std::string_view expected) {
    return Error(Errc::kTypeMismatch, "input '" + param.id + "': expected " +
                                          std::string(expected) + ", got " + value.dump());
  };
  switch (param.type) {
    case ParamType::kInt:
      if (value.is_number_integer()) return value;
      if (value.is_number_float()) {
        double d = value.get<double>();
        if (std::floor(d) == d && std::isfinite(d)) return static_cast<std::int64_t>(d);
      }
      throw mismatch("int");
    case ParamType::kFloat:
      if (value.is_number()) return value.get<double>();
      throw mismatch("float");
    case ParamType::kString:
      if (value.is_string()) return value;
      throw mismatch("string");
    case ParamType::kBoolean:
      if (value.is_boolean()) return value;
      throw mismatch("boolean");
    case ParamType::kFile:
      if (value.is_string()) return make_file_value(value.get<std::string>());
      if (is_file_value(value)) return value;
      throw mismatch("File");
    case ParamType::kEnum:
      if (value.is_string() &&
          std::find(param.symbols.begin(), param.symbols.end(), value.get<std::string>()) !=
              param.symbols.end()) {
        return value;
      }
      throw mismatch("one of the enum symbols");
  }
  return value;
}

Json coerce_text_binding(const InputParameter& param, std::string_view text) {
  std::string s(text);
  switch (param.type) {
    case ParamType::kInt: {
      std::int64_t v = 0;
      auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || end != s.data() + s.size()) {
        throw Error(Errc::kTypeMismatch, "input '" + param.id + "': expected int, got '" + s + "'");
      }
      return v;
    }
    case ParamType::kFloat: {
      char* end = nullptr;
      double v = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size()) {
        throw Error(Errc::kTypeMismatch,
                    "input '" + param.id + "': expected float, got '" + s + "'");
      }
      return v;
    }
    case ParamType::kBoolean:
      if (s == "true" || s == "1" || s == "yes") return true;
      if (s == "false" || s == "0" || s == "no") return false;
      throw Error(Errc::kTypeMismatch,
                  "input '" + param.id + "': expected boolean, got '" + s + "'");
    case ParamType::kFile:
      if (!s.empty() && s.front() == '@') s.erase(0, 1);
      return make_file_value(s);
    case ParamType::kString:
    case ParamType::kEnum:
      return check_binding(param, Json(s));
  }
  return s;
}

ToolDescriptor tool_from_json(const Json& doc, std::string_view fallback_id) {
  check_cwl_header(doc, "CommandLineTool");
  ToolDescriptor d;
  try {
    d.id = doc.contains("id") ? strip_fragment(doc.at("id").get<std::string>())
                              : std::string(fallback_id);
    if (d.id.empty()) throw Error(Errc::kMissingField, "tool has no id");
    d.version = doc.contains("version") ? doc.at("version").is_string()
                                              ? doc.at("version").get<std::string>()
                                              : doc.at("version").dump()
                                        : "latest";
    d.image_ref = find_docker_image(doc);

    if (!doc.contains("baseCommand")) throw Error(Errc::kMissingField, "missing baseCommand");
    const Json& base = doc.at("baseCommand");
    if (base.is_string()) {
      d.base_command.push_back(base.get<std::string>());
    } else if (base.is_array()) {
      for (const auto& part : base) d.base_command.push_back(part.get<std::string>());
    }
    if (d.base_command.empty()) throw Error(Errc::kMissingField, "empty baseCommand");

    std::set<std::string> seen;
    for (auto& [id, spec] : normalize_fields(doc.value("inputs", Json()), "input")) {
      if (!seen.insert(id).second) throw Error(Errc::kDuplicateId, "duplicate input id " + id);
      InputParameter p;
      p.id = id;
      ParsedType t = parse_type(spec.contains("type") ? spec.at("type") : Json(), id);
      p.type = t.type;
      p.symbols = t.symbols;
      p.required = !t.optional;
      p.label = spec.value("label", "");
      if (spec.contains("default") && !spec.at("default").is_null()) {
        p.default_value = check_binding(p, spec.at("default"));
      }
      if (spec.contains("inputBinding") && spec.at("inputBinding").is_object()) {
        const Json& b = spec.at("inputBinding");
        CommandBinding cb;
        cb.position = b.value("position", 0);
        if (b.contains("prefix")) cb.prefix = b.at("prefix").get<std::string>();
        p.binding = cb;
      }
      d.inputs.push_back(std::move(p));
    }

    seen.clear();
    for (auto& [id, spec] : normalize_fields(doc.value("outputs", Json()), "output")) {
      if (!seen.insert(id).second) throw Error(Errc::kDuplicateId, "duplicate output id " + id);
      std::string type = spec.value("type", "File");
      if (type != "File") throw Error(Errc::kUnsupportedType, "unsupported output type " + type);
      if (!spec.contains("outputBinding") || !spec.at("outputBinding").contains("glob")) {
        throw Error(Errc::kMissingField, "output " + id + " has no outputBinding.glob");
      }
      d.outputs.push_back({id, spec.at("outputBinding").at("glob").get<std::string>()});
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::kParse, std::string("malformed tool document: ") + e.what());
  }
  return d;
}

ToolDescriptor parse_tool(std::string_view text, std::string_view fallback_id) {
  return tool_from_json(load_document(text), fallback_id);
}

Json serialize_tool(const ToolDescriptor& d) {
  Json inputs = Json::array();
  for (const auto& p : d.inputs) {
    Json type;
    if (p.type == ParamType::kEnum) {
      type = Json{{"type", "enum"}, {"symbols", p.symbols}};
    } else {
      type = std::string(param_type_name(p.type));
    }
    if (!p.required) type = Json::array({"null", type});
    Json entry{{"id", p.id}, {"type", type}};
    if (!p.label.empty()) entry["label"] = p.label;
    if (p.default_value) entry["default"] = *p.default_value;
    if (p.binding) {
      Json b{{"position", p.binding->position}};
      if (p.binding->prefix) b["prefix"] = *p.binding->prefix;
      entry["inputBinding"] = b;
    }
    inputs.push_back(entry);
  }
  Json outputs = Json::array();
  for (const auto& o : d.outputs) {
    outputs.push_back({{"id", o.id}, {"type", "File"}, {"outputBinding", {{"glob", o.glob}}}});
  }
  Json doc{{"cwlVersion", "v1.2"},  {"class", "CommandLineTool"}, {"id", d.id},
           {"version", d.version},  {"baseCommand", d.base_command},
           {"inputs", inputs},      {"outputs", outputs}};
  if (!d.image_ref.empty()) {
    doc["hints"] = Json::array({{{"class", "DockerRequirement"}, {"dockerPull", d.image_ref}}});
  }
  return doc;
}

Bindings check_bindings(const ToolDescriptor& descriptor, const Bindings& bindings) {
  Bindings out;
  for (const auto& [id, value] : bindings) {
    const InputParameter* p = descriptor.find_input(id);
    if (p == nullptr) {
      throw Error(Errc::kTypeMismatch, "unknown input '" + id + "' for tool " + descriptor.id);
    }
    if (value.is_null() && !p->required) continue;
    out[id] = check_binding(*p, value);
  }
  for (const auto& p : descriptor.inputs) {
    if (p.required && !out.contains(p.id) && !p.default_value) {
      throw Error(Errc::kMissingInput, "missing required input '" + p.id + "'");
    }
  }
  return out;
}

namespace {

std::string render_value(const InputParameter& param, const Json& value) {
  switch (param.type) {
    case ParamType::kInt: return std::to_string(value.get<std::int64_t>());
    case ParamType::kFloat: return format_number(value.get<double>());
    case ParamType::kFile: return file_path(value);
    default: return value.get<std::string>();
  }
}

}  // namespace

std::vector<std::string> build_command(const ToolDescriptor& descriptor, const Bindings& bindings) {
  Bindings checked = check_bindings(descriptor, bindings);
  struct Arg {
    int position;
    std::size_t decl_index;
    std::vector<std::string> tokens;
  };
  std::vector<Arg> args;
  for (std::size_t i = 0; i < descriptor.inputs.size(); ++i) {
    const InputParameter& p = descriptor.inputs[i];
    if (!p.binding) continue;
    std::optional<Json> value;
    if (auto it = checked.find(p.id); it != checked.end()) {
      value = it->second;
    } else if (p.default_value) {
      value = *p.default_value;
    }
    if (!value) continue;
    Arg arg{p.binding->position, i, {}};
    if (p.type == ParamType::kBoolean) {
      if (!value->get<bool>()) continue;
      if (p.binding->prefix) arg.tokens.push_back(*p.binding->prefix);
    } else {
      if (p.binding->prefix) arg.tokens.push_back(*p.binding->prefix);
      arg.tokens.push_back(render_value(p, *value));
    }
    if (!arg.tokens.empty()) args.push_back(std::move(arg));
  }
  std::stable_sort(args.begin(), args.end(), [](const Arg& a, const Arg& b) {
    return std::tie(a.position, a.decl_index) < std::tie(b.position, b.decl_index);
  });
  std::vector<std::string> argv = descriptor.base_command;
  for (auto& arg : args) argv.insert(argv.end(), arg.tokens.begin(), arg.tokens.end());
  return argv;
}

FormSchema render_form_schema(const ToolDescriptor& descriptor) {
  FormSchema form;
  for (const auto& p : descriptor.inputs) {
    FormField f;
    f.field_id = p.id;
    f.label = p.label.empty() ? p.id : p.label;
    f.required = p.required && !p.default_value;
    f.default_value = p.default_value;
    switch (p.type) {
      case ParamType::kInt:
      case ParamType::kFloat: f.widget = Widget::kNumber; break;
      case ParamType::kString: f.widget = Widget::kText; break;
      case ParamType::kBoolean: f.widget = Widget::kCheckbox; break;
      case ParamType::kFile: f.widget = Widget::kFilePicker; break;
      case ParamType::kEnum:
        f.widget = Widget::kSelect;
        f.options = p.symbols;
        break;
    }
    form.push_back(std::move(f));
  }
  return form;
}

Json to_json(const FormSchema& form) {
  Json out = Json::array();
  for (const auto& f : form) {
    Json field{{"field_id", f.field_id},
               {"label", f.label},
               {"widget", std::string(widget_name(f.widget))},
               {"required", f.required}};
    if (f.widget == Widget::kSelect) field["options"] = f.options;
    if (f.default_value) field["default"] = *f.default_value;
    out.push_back(field);
  }
  return out;
}

Json to_json(const SoftwareRecord& record) {
  return {{"descriptor", serialize_tool(record.descriptor)},
          {"uploaded_at", format_rfc3339(record.uploaded_at)},
          {"visibility", record.visibility == Visibility::kPublic ? "public" : "private"}};
}

namespace {

std::string record_key(std::string_view id, std::string_view version) {
  return std::string(id) + "@" + std::string(version);
}

SoftwareRecord record_from_json(const Json& j) {
  SoftwareRecord r;
  r.descriptor = tool_from_json(j.at("descriptor"));
  r.uploaded_at = parse_rfc3339(j.at("uploaded_at").get<std::string>());
  r.visibility = j.value("visibility", "public") == "private" ? Visibility::kPrivate
                                                               : Visibility::kPublic;
  return r;
}

}  // namespace

Catalog::Catalog(fs::path state_dir) : dir_(std::move(state_dir) / "tools") { load(); }

void Catalog::load() {
  std::error_code ec;
  if (!fs::is_directory(*dir_, ec)) return;
  for (const auto& entry : fs::directory_iterator(*dir_)) {
    if (entry.path().extension() != ".json") continue;
    try {
      SoftwareRecord r = record_from_json(Json::parse(read_file(entry.path())));
      records_[record_key(r.descriptor.id, r.descriptor.version)] = std::move(r);
    } catch (const std::exception& e) {
      throw Error(Errc::kStorage, "corrupt catalog entry " + entry.path().string() + ": " + e.what());
    }
  }
}

void Catalog::reload() {
  if (!dir_) return;
  std::unique_lock lock(mu_);
  load();
}

SoftwareRecord Catalog::register_tool(const ToolDescriptor& descriptor, Visibility visibility,
                                      std::optional<double> uploaded_at) {
  SoftwareRecord record{descriptor, uploaded_at.value_or(now_seconds()), visibility};
  std::string key = record_key(descriptor.id, descriptor.version);
  std::unique_lock lock(mu_);
  if (dir_) {
    try {
      write_file_atomic(*dir_ / (key + ".json"), to_json(record).dump(2) + "\n");
    } catch (const Error& e) {
      throw Error(Errc::kStorage, e.what());
    }
  }
  records_[key] = record;
  return record;
}

std::vector<SoftwareRecord> Catalog::list_tools(std::optional<Visibility> filter) const {
  std::shared_lock lock(mu_);
  std::vector<SoftwareRecord> out;
  for (const auto& [key, r] : records_) {
    if (!filter || r.visibility == *filter) out.push_back(r);
  }
  return out;
}

std::optional<SoftwareRecord> Catalog::find(std::string_view id, std::string_view version) const {
  std::shared_lock lock(mu_);
  if (!version.empty() && version != "latest") {
    auto it = records_.find(record_key(id, version));
    if (it == records_.end()) return std::nullopt;
    return it->second;
  }
  const SoftwareRecord* best = nullptr;
  for (const auto& [key, r] : records_) {
    if (r.descriptor.id != id) continue;
    if (best == nullptr || r.uploaded_at > best->uploaded_at ||
        (r.uploaded_at == best->uploaded_at && r.descriptor.version > best->descriptor.version)) {
      best = &r;
    }
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

}  // namespace hetsched
