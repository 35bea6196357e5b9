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

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "hetsched/util.hpp"

namespace hetsched {

enum class ParamType { kInt, kFloat, kString, kBoolean, kFile, kEnum };

std::string_view param_type_name(ParamType type);

struct CommandBinding {
  int position = 0;
  std::optional<std::string> prefix;

  bool operator==(const CommandBinding&) const = default;
};

struct InputParameter {
  std::string id;
  ParamType type = ParamType::kString;
  std::vector<std::string> symbols;  // enum only
  bool required = true;
  std::optional<Json> default_value;
  std::optional<CommandBinding> binding;
  std::string label;

  bool operator==(const InputParameter&) const = default;
};

struct OutputParameter {
  std::string id;
  std::string glob;

  bool operator==(const OutputParameter&) const = default;
};

struct ToolDescriptor {
  std::string id;
  std::string version;
  std::string image_ref;
  std::vector<std::string> base_command;
  std::vector<InputParameter> inputs;
  std::vector<OutputParameter> outputs;

  const InputParameter* find_input(std::string_view input_id) const;

  bool operator==(const ToolDescriptor&) const = default;
};

// Input values keyed by input id. File values are objects
// {"class": "File", "path": ..., "size": bytes?}.
using Bindings = std::map<std::string, Json>;

Json make_file_value(const std::string& path, std::optional<std::uint64_t> size_bytes = {});
bool is_file_value(const Json& value);
std::string file_path(const Json& value);
// Declared size when present, otherwise the size on disk (0 if missing).
std::uint64_t file_size_bytes(const Json& value);

// Accepts a CommandLineTool document in YAML or JSON. When the document has
// no `id`, fallback_id is used.
ToolDescriptor parse_tool(std::string_view text, std::string_view fallback_id = {});
ToolDescriptor tool_from_json(const Json& doc, std::string_view fallback_id = {});
Json serialize_tool(const ToolDescriptor& descriptor);

// Type-checks one value against its parameter and returns the normalized
// value (File paths become File objects). Throws kTypeMismatch.
Json check_binding(const InputParameter& param, const Json& value);

// Converts a command-line string ("5", "true", "@data.txt") to a typed value.
Json coerce_text_binding(const InputParameter& param, std::string_view text);

// Full bindings check: unknown ids, required inputs, types. Returns the
// normalized bindings.
Bindings check_bindings(const ToolDescriptor& descriptor, const Bindings& bindings);

std::vector<std::string> build_command(const ToolDescriptor& descriptor, const Bindings& bindings);

enum class Widget { kNumber, kText, kCheckbox, kFilePicker, kSelect };

std::string_view widget_name(Widget widget);

struct FormField {
  std::string field_id;
  std::string label;
  Widget widget = Widget::kText;
  std::vector<std::string> options;
  bool required = false;
  std::optional<Json> default_value;
};

using FormSchema = std::vector<FormField>;

FormSchema render_form_schema(const ToolDescriptor& descriptor);
Json to_json(const FormSchema& form);

enum class Visibility { kPublic, kPrivate };

struct SoftwareRecord {
  ToolDescriptor descriptor;
  double uploaded_at = 0.0;
  Visibility visibility = Visibility::kPublic;
};

Json to_json(const SoftwareRecord& record);

// Tool metadata store. Persists one document per tool version under
// <state_dir>/tools/<id>@<version>.json when a state directory is given.
class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::filesystem::path state_dir);

  SoftwareRecord register_tool(const ToolDescriptor& descriptor,
                               Visibility visibility = Visibility::kPublic,
                               std::optional<double> uploaded_at = {});

  std::vector<SoftwareRecord> list_tools(std::optional<Visibility> filter = {}) const;

  // Latest upload for the id when version is empty.
  std::optional<SoftwareRecord> find(std::string_view id, std::string_view version = {}) const;

  // Picks up entries written by other processes.
  void reload();

 private:
  void load();

  std::optional<std::filesystem::path> dir_;
  mutable std::shared_mutex mu_;
  std::map<std::string, SoftwareRecord> records_;  // key id@version
};

}  // namespace hetsched
