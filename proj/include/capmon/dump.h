// Copyright 2026 The capmon Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Final-state dump written by "capmon run --dump". JSON with the machine
// config, the script's name bindings, the full operation log and a summary
// of domains, regions and cores. The config and log are enough to rebuild
// the state (see replay.h).

#ifndef CAPMON_DUMP_H_
#define CAPMON_DUMP_H_

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "capmon/machine.h"
#include "capmon/op_log.h"
#include "capmon/scenario.h"

namespace capmon {

std::string DumpState(const System& system, const ScenarioRunner* names);

struct LoadedDump {
  MachineConfig config;
  std::vector<LogEntry> log;
  std::map<std::string, std::string> domain_names;  // script name -> tdN
};

Result<LoadedDump> LoadDump(std::string_view json_text);

}  // namespace capmon

#endif  // CAPMON_DUMP_H_
