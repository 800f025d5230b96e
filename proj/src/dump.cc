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

#include "capmon/dump.h"

#include <nlohmann/json.hpp>

namespace capmon {

using nlohmann::json;

std::string DumpState(const System& system, const ScenarioRunner* names) {
  const Engine& engine = *system.engine;
  json out;
  out["config"] = system.config.ToText();
  out["attestation_key"] = ToHex(system.key->public_key());
  out["pcr"] = ToHex(system.measurement.pcr);
  out["state_digest"] = ToHex(engine.StateDigest());

  json bindings = json::object();
  if (names != nullptr) {
    for (const auto& [n, id] : names->domain_names()) bindings[n] = DomainName(id);
    for (const auto& [n, id] : names->region_names()) bindings[n] = RegionName(id);
    for (const auto& [n, id] : names->channel_names()) bindings[n] = ChannelName(id);
  }
  out["names"] = bindings;

  json domains = json::array();
  for (const auto& [id, d] : engine.domains()) {
    json j;
    j["name"] = DomainName(id);
    j["state"] = std::string(ToString(d.state));
    j["parent"] = d.parent ? json(DomainName(*d.parent)) : json(nullptr);
    if (d.is_device) j["device"] = d.device_name;
    j["cores"] = BinaryString(d.policies.cores, static_cast<int>(engine.core_count()));
    j["mon_api"] = BinaryString(d.policies.mon_api, kNumApiCalls);
    j["receive"] = d.policies.receive_after_seal;
    json owned = json::array();
    for (const auto& cap : d.owned) {
      if (cap) owned.push_back(cap->Name());
    }
    j["owned"] = owned;
    j["view"] = ToString(engine.DomainView(id));
    domains.push_back(j);
  }
  out["domains"] = domains;

  json regions = json::array();
  for (const auto& [id, r] : engine.regions().nodes()) {
    json j;
    j["name"] = RegionName(id);
    j["owner"] = DomainName(r.owner);
    j["kind"] = std::string(ToString(r.kind));
    j["status"] = std::string(ToString(r.status));
    j["range"] = ToString(r.initial_range);
    j["rights"] = r.rights.ToString();
    j["attributes"] = r.attributes.FlagString();
    j["parent"] = r.parent ? json(RegionName(*r.parent)) : json(nullptr);
    auto view = engine.regions().View(id);
    j["view"] = view.ok() ? ToString(*view) : "";
    regions.push_back(j);
  }
  out["regions"] = regions;

  json cores = json::array();
  for (CoreId c = 0; c < engine.core_count(); ++c) {
    const CoreState& cs = engine.core(c);
    json j;
    j["core"] = c;
    j["current"] = DomainName(cs.current);
    j["payload"] = cs.payload.ToString();
    json chain = json::array();
    for (DomainId d : cs.return_chain) chain.push_back(DomainName(d));
    j["return_chain"] = chain;
    cores.push_back(j);
  }
  out["cores"] = cores;

  json log = json::array();
  for (const LogEntry& e : engine.log()) log.push_back(FormatLogEntry(e));
  out["log"] = log;
  return out.dump(2) + "\n";
}

Result<LoadedDump> LoadDump(std::string_view json_text) {
  json in = json::parse(json_text, nullptr, /*allow_exceptions=*/false);
  if (in.is_discarded() || !in.is_object()) {
    return MakeError(ErrorCode::kParseError, "dump is not a JSON object");
  }
  if (!in.contains("config") || !in["config"].is_string() || !in.contains("log") ||
      !in["log"].is_array()) {
    return MakeError(ErrorCode::kParseError, "dump lacks config or log");
  }
  LoadedDump dump;
  CAPMON_ASSIGN_OR_RETURN(dump.config,
                          MachineConfig::Parse(in["config"].get<std::string>()));
  for (const auto& line : in["log"]) {
    if (!line.is_string()) return MakeError(ErrorCode::kParseError, "log line");
    CAPMON_ASSIGN_OR_RETURN(LogEntry e, ParseLogEntry(line.get<std::string>()));
    dump.log.push_back(std::move(e));
  }
  if (in.contains("names") && in["names"].is_object()) {
    for (const auto& [k, v] : in["names"].items()) {
      if (v.is_string() && v.get<std::string>().starts_with("td")) {
        dump.domain_names[k] = v.get<std::string>();
      }
    }
  }
  return dump;
}

}  // namespace capmon
