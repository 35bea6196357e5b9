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

#include <ostream>
#include <string>
#include <vector>

namespace hetsched::cli {

constexpr int kExitOk = 0;
constexpr int kExitUser = 1;
constexpr int kExitSystem = 2;

// Runs one command line (without the program name). Settings come from
// flags, then HETSCHED_STATE_DIR / HETSCHED_API_URL / HETSCHED_REPO_TOKEN,
// then hetsched.yaml (--config, else ./hetsched.yaml when present).
// Returns 0 on success, 1 on user errors and 2 on system errors.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hetsched::cli
