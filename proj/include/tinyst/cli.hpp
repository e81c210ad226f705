/* tinyst - desk-scale end-to-end speech translation toolkit.
 * Copyright (C) 2026 tinyst contributors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace tinyst::cli {

// Exit codes: 0 success, 1 config error, 2 data error, 3 numerical
// failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

nlohmann::json load_config(const std::string& path);

// Applies one "dotted.path=value" override; the value is parsed as
// JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

// Reference text for every config key, shown by --help.
std::string config_reference();

// Dispatches one command. Throws the tinyst error types; main maps
// them to exit codes.
void run_command(const std::string& command, nlohmann::json config,
                 const std::string& config_path);

int run_cli(int argc, char** argv);

}  // namespace tinyst::cli
