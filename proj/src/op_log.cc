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

#include "capmon/op_log.h"

#include <charconv>
#include <cstdio>
#include <sstream>
#include <string>

namespace capmon {
namespace {

template <typename IdT>
std::optional<IdT> ParsePrefixed(std::string_view name,
                                 std::string_view prefix) {
  if (!name.starts_with(prefix)) return std::nullopt;
  name.remove_prefix(prefix.size());
  if (name.empty()) return std::nullopt;
  uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(),
                                   value);
  if (ec != std::errc() || ptr != name.data() + name.size()) {
    return std::nullopt;
  }
  return IdT{value};
}

std::vector<std::string_view> SplitWords(std::string_view line) {
  std::vector<std::string_view> words;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) words.push_back(line.substr(start, i - start));
  }
  return words;
}

}  // namespace

std::optional<std::string_view> LogEntry::Arg(std::string_view key) const {
  for (const auto& [k, v] : args) {
    if (k == key) return std::string_view(v);
  }
  return std::nullopt;
}

std::string FormatLogEntry(const LogEntry& entry) {
  std::string out = std::to_string(entry.step) + " " +
                    std::to_string(entry.core) + " " + entry.op;
  for (const auto& [k, v] : entry.args) {
    out += " " + k + "=" + v;
  }
  out += " -> " + entry.result;
  return out;
}

Result<LogEntry> ParseLogEntry(std::string_view line) {
  std::vector<std::string_view> words = SplitWords(line);
  if (words.size() < 5 || words[words.size() - 2] != "->") {
    return MakeError(ErrorCode::kParseError, std::string(line));
  }
  LogEntry entry;
  auto step = ParseNumber(words[0]);
  auto core = ParseNumber(words[1]);
  if (!step || !core) {
    return MakeError(ErrorCode::kParseError, std::string(line));
  }
  entry.step = *step;
  entry.core = static_cast<CoreId>(*core);
  entry.op = std::string(words[2]);
  for (size_t i = 3; i + 2 < words.size(); ++i) {
    size_t eq = words[i].find('=');
    if (eq == std::string_view::npos) {
      return MakeError(ErrorCode::kParseError, std::string(words[i]));
    }
    entry.args.emplace_back(std::string(words[i].substr(0, eq)),
                            std::string(words[i].substr(eq + 1)));
  }
  entry.result = std::string(words.back());
  return entry;
}

Result<std::vector<LogEntry>> ParseLog(std::string_view text) {
  std::vector<LogEntry> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    CAPMON_ASSIGN_OR_RETURN(LogEntry entry, ParseLogEntry(line));
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::string DomainName(DomainId id) { return "td" + std::to_string(id.value); }
std::string RegionName(RegionId id) { return "r" + std::to_string(id.value); }
std::string ChannelName(ChannelId id) {
  return "ch" + std::to_string(id.value);
}

std::optional<DomainId> ParseDomainName(std::string_view name) {
  return ParsePrefixed<DomainId>(name, "td");
}
std::optional<RegionId> ParseRegionName(std::string_view name) {
  return ParsePrefixed<RegionId>(name, "r");
}
std::optional<ChannelId> ParseChannelName(std::string_view name) {
  return ParsePrefixed<ChannelId>(name, "ch");
}

std::string Hex(uint64_t value) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "0x%llx",
                static_cast<unsigned long long>(value));
  return buf;
}

std::optional<uint64_t> ParseNumber(std::string_view text) {
  int base = 10;
  if (text.starts_with("0x") || text.starts_with("0X")) {
    base = 16;
    text.remove_prefix(2);
  } else if (text.starts_with("0b") || text.starts_with("0B")) {
    base = 2;
    text.remove_prefix(2);
  }
  if (text.empty()) return std::nullopt;
  uint64_t value = 0;
  auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value, base);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    return std::nullopt;
  }
  return value;
}

}  // namespace capmon
