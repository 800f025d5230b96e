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

// Operation log / trace format. One event per line:
//
//   <step> <core> <op> key=value ... -> <result>
//
// Objects are named by engine-global ids (td3, r7, ch1). Rejected operations
// carry "error=<Name>" as result. The same format is written by the CLI
// trace and consumed by the oracle and the log replayer.

#ifndef CAPMON_OP_LOG_H_
#define CAPMON_OP_LOG_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "capmon/base.h"

namespace capmon {

struct LogEntry {
  uint64_t step = 0;
  CoreId core = 0;
  std::string op;
  std::vector<std::pair<std::string, std::string>> args;
  std::string result = "ok";

  std::optional<std::string_view> Arg(std::string_view key) const;
  LogEntry& Add(std::string key, std::string value) {
    args.emplace_back(std::move(key), std::move(value));
    return *this;
  }
  bool failed() const { return result.starts_with("error="); }
};

std::string FormatLogEntry(const LogEntry& entry);
Result<LogEntry> ParseLogEntry(std::string_view line);
// Blank lines and lines starting with '#' are skipped.
Result<std::vector<LogEntry>> ParseLog(std::string_view text);

std::string DomainName(DomainId id);
std::string RegionName(RegionId id);
std::string ChannelName(ChannelId id);
std::optional<DomainId> ParseDomainName(std::string_view name);
std::optional<RegionId> ParseRegionName(std::string_view name);
std::optional<ChannelId> ParseChannelName(std::string_view name);

std::string Hex(uint64_t value);
// Decimal, or hexadecimal with 0x prefix, or binary with 0b prefix.
std::optional<uint64_t> ParseNumber(std::string_view text);

}  // namespace capmon

#endif  // CAPMON_OP_LOG_H_
