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

// Rebuilds a system from its configuration and operation log by issuing
// every accepted entry again, in step mode. Rejected entries are skipped.
// Each re-issued operation must produce the logged result (the same new
// domain, region or channel name), otherwise replay stops with MalformedLog.

#ifndef CAPMON_REPLAY_H_
#define CAPMON_REPLAY_H_

#include <vector>

#include "capmon/machine.h"
#include "capmon/op_log.h"

namespace capmon {

Status ReplayEntry(System& system, const LogEntry& entry);

Result<System> ReplayLog(const MachineConfig& config,
                         const std::vector<LogEntry>& log);

}  // namespace capmon

#endif  // CAPMON_REPLAY_H_
