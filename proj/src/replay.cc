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

#include "capmon/replay.h"

#include <algorithm>
#include <string>

namespace capmon {
namespace {

Error Diverged(const LogEntry& e, const std::string& what) {
  return MakeError(ErrorCode::kMalformedLog, FormatLogEntry(e) + ": " + what);
}

Result<std::string_view> Need(const LogEntry& e, std::string_view key) {
  auto v = e.Arg(key);
  if (!v) return Diverged(e, "missing " + std::string(key));
  return *v;
}

Result<uint64_t> Number(const LogEntry& e, std::string_view key) {
  CAPMON_ASSIGN_OR_RETURN(std::string_view v, Need(e, key));
  auto n = ParseNumber(v);
  if (!n) return Diverged(e, "bad " + std::string(key));
  return *n;
}

Result<DomainId> DomainArg(const LogEntry& e, std::string_view key) {
  CAPMON_ASSIGN_OR_RETURN(std::string_view v, Need(e, key));
  auto id = ParseDomainName(v);
  if (!id) return Diverged(e, "bad domain " + std::string(v));
  return *id;
}

// Handle of the object called `name` ("r3", "td2", "ch1") in `owner`'s table.
Result<Handle> HandleOf(const Engine& engine, const LogEntry& e, DomainId owner,
                        std::string_view name) {
  std::optional<Capability> want;
  if (auto r = ParseRegionName(name)) {
    want = Capability::ForRegion(*r);
  } else if (auto d = ParseDomainName(name)) {
    want = Capability::ForDomain(*d);
  }
  const DomainNode* node = engine.FindDomain(owner);
  if (node != nullptr) {
    auto ch = ParseChannelName(name);
    for (Handle h = 0; h < node->owned.size(); ++h) {
      const auto& cap = node->owned[h];
      if (!cap) continue;
      if (want && *cap == *want) return h;
      if (ch && cap->kind == Capability::Kind::kChannel && cap->channel == *ch) {
        return h;
      }
    }
  }
  return Diverged(e, DomainName(owner) + " holds no " + std::string(name));
}

Status ExpectResult(const LogEntry& e, const std::string& got) {
  if (got != e.result) return Diverged(e, "replay produced " + got);
  return OkStatus();
}

template <typename T>
Status Check(const LogEntry& e, const Result<T>& r) {
  if (!r.ok()) return Diverged(e, "replay failed: " + r.error().ToString());
  return OkStatus();
}

Status Check(const LogEntry& e, const Status& s) {
  if (!s.ok()) return Diverged(e, "replay failed: " + s.error().ToString());
  return OkStatus();
}

}  // namespace

Status ReplayEntry(System& system, const LogEntry& e) {
  if (e.failed()) return OkStatus();
  Engine& engine = *system.engine;
  engine.set_trace_context(e.step, e.core);
  const std::string& op = e.op;
  if (op == "boot" || op == "device") return OkStatus();
  if (op == "write" || op == "poke") {
    CAPMON_ASSIGN_OR_RETURN(uint64_t addr, Number(e, "addr"));
    CAPMON_ASSIGN_OR_RETURN(uint64_t len, Number(e, "len"));
    CAPMON_ASSIGN_OR_RETURN(uint64_t byte, Number(e, "byte"));
    if (addr + len > system.config.memory) return Diverged(e, "out of memory");
    for (uint64_t a = addr; a < addr + len; ++a) {
      system.machine->PokeByte(a, static_cast<uint8_t>(byte));
    }
    engine.AppendLog(e);
    return OkStatus();
  }
  if (op == "irq") {
    CAPMON_ASSIGN_OR_RETURN(uint64_t core, Number(e, "core"));
    CAPMON_ASSIGN_OR_RETURN(uint64_t vector, Number(e, "vector"));
    auto r = engine.RouteInterrupt(static_cast<CoreId>(core), static_cast<int>(vector));
    CAPMON_RETURN_IF_ERROR(Check(e, r));
    return ExpectResult(e, DomainName(*r));
  }

  CAPMON_ASSIGN_OR_RETURN(DomainId caller, DomainArg(e, "caller"));
  auto handle = [&](std::string_view key) -> Result<Handle> {
    CAPMON_ASSIGN_OR_RETURN(std::string_view name, Need(e, key));
    return HandleOf(engine, e, caller, name);
  };
  // Destination of send/getchan: the channel when one was used.
  auto target = [&](std::string_view key) -> Result<Handle> {
    if (auto via = e.Arg("via")) return HandleOf(engine, e, caller, *via);
    return handle(key);
  };
  auto named = [&](auto r, auto name_of) -> Status {
    CAPMON_RETURN_IF_ERROR(Check(e, r));
    auto cap = engine.ResolveHandle(caller, *r);
    if (!cap) return Diverged(e, "no capability after replay");
    return ExpectResult(e, name_of(*cap));
  };

  if (op == "attest") {
    engine.AppendLog(e);
    return OkStatus();
  }
  if (op == "create") {
    return named(engine.Create(caller),
                 [](const Capability& c) { return DomainName(c.domain); });
  }
  if (op == "set_reg") {
    CAPMON_ASSIGN_OR_RETURN(Handle h, handle("target"));
    CAPMON_ASSIGN_OR_RETURN(uint64_t core, Number(e, "core"));
    CAPMON_ASSIGN_OR_RETURN(uint64_t index, Number(e, "index"));
    CAPMON_ASSIGN_OR_RETURN(uint64_t value, Number(e, "value"));
    return Check(e, engine.SetRegister(caller, h, static_cast<CoreId>(core),
                                       static_cast<int>(index), value));
  }
  if (op == "set_policy") {
    CAPMON_ASSIGN_OR_RETURN(Handle h, handle("target"));
    CAPMON_ASSIGN_OR_RETURN(std::string_view field, Need(e, "field"));
    CAPMON_ASSIGN_OR_RETURN(uint64_t value, Number(e, "value"));
    PolicyField pf;
    if (field == "cores") {
      pf = PolicyField::Cores();
    } else if (field == "mon_api") {
      pf = PolicyField::MonApi();
    } else if (field == "user_calls") {
      pf = PolicyField::UserCalls();
    } else if (field == "receive") {
      pf = PolicyField::ReceiveAfterSeal();
    } else if (field == "irq") {
      CAPMON_ASSIGN_OR_RETURN(uint64_t vector, Number(e, "vector"));
      pf = PolicyField::Interrupt(static_cast<int>(vector));
    } else {
      return Diverged(e, "unknown field");
    }
    return Check(e, engine.SetPolicy(caller, h, pf, value));
  }
  if (op == "seal") {
    CAPMON_ASSIGN_OR_RETURN(Handle h, handle("target"));
    return Check(e, engine.Seal(caller, h));
  }
  if (op == "send") {
    CAPMON_ASSIGN_OR_RETURN(Handle cap, handle("cap"));
    CAPMON_ASSIGN_OR_RETURN(Handle dest, target("dest"));
    CAPMON_ASSIGN_OR_RETURN(std::string_view attr_text, Need(e, "attrs"));
    auto attrs = AttributeRequest::Parse(attr_text);
    if (!attrs) return Diverged(e, "bad attrs");
    return Check(e, engine.Send(caller, cap, dest, *attrs));
  }
  if (op == "getchan") {
    CAPMON_ASSIGN_OR_RETURN(Handle source, target("source"));
    return named(engine.GetChan(caller, source),
                 [](const Capability& c) { return ChannelName(c.channel); });
  }
  if (op == "selfchan") {
    return named(engine.SelfChannel(caller),
                 [](const Capability& c) { return ChannelName(c.channel); });
  }
  if (op == "alias" || op == "carve") {
    CAPMON_ASSIGN_OR_RETURN(Handle parent, handle("parent"));
    CAPMON_ASSIGN_OR_RETURN(uint64_t start, Number(e, "start"));
    CAPMON_ASSIGN_OR_RETURN(uint64_t end, Number(e, "end"));
    CAPMON_ASSIGN_OR_RETURN(std::string_view rights_text, Need(e, "rights"));
    auto rights = AccessRights::Parse(rights_text);
    if (!rights) return Diverged(e, "bad rights");
    PhysRange sub{start, end};
    auto r = op == "alias" ? engine.Alias(caller, parent, sub, *rights)
                           : engine.Carve(caller, parent, sub, *rights);
    return named(std::move(r),
                 [](const Capability& c) { return RegionName(c.region); });
  }
  if (op == "revoke_region") {
    CAPMON_ASSIGN_OR_RETURN(Handle parent, handle("parent"));
    CAPMON_ASSIGN_OR_RETURN(std::string_view child_name, Need(e, "child"));
    auto child = ParseRegionName(child_name);
    auto cap = engine.ResolveHandle(caller, parent);
    if (!child || !cap) return Diverged(e, "bad child");
    const RegionNode* p = engine.regions().Find(cap->region);
    if (p == nullptr) return Diverged(e, "parent gone");
    auto it = std::find(p->children.begin(), p->children.end(), *child);
    if (it == p->children.end()) return Diverged(e, "not a child");
    return Check(e, engine.RevokeRegion(caller, parent,
                                        static_cast<size_t>(it - p->children.begin())));
  }
  if (op == "revoke_domain") {
    CAPMON_ASSIGN_OR_RETURN(Handle h, handle("target"));
    return Check(e, engine.RevokeDomain(caller, h));
  }
  if (op == "switch") {
    CAPMON_ASSIGN_OR_RETURN(uint64_t core, Number(e, "core"));
    CAPMON_ASSIGN_OR_RETURN(std::string_view t, Need(e, "target"));
    std::optional<Handle> h;
    if (t != "none") {
      CAPMON_ASSIGN_OR_RETURN(h, HandleOf(engine, e, caller, t));
    }
    CAPMON_RETURN_IF_ERROR(Check(e, engine.Switch(caller, static_cast<CoreId>(core), h)));
    return ExpectResult(e, DomainName(engine.core(static_cast<CoreId>(core)).current));
  }
  return Diverged(e, "unknown op");
}

Result<System> ReplayLog(const MachineConfig& config,
                         const std::vector<LogEntry>& log) {
  CAPMON_ASSIGN_OR_RETURN(System system, Boot(config, Mode::kStep));
  // Boot already issued the entries that set up td0 and the devices.
  const std::vector<LogEntry>& boot = system.engine->log();
  size_t skip = boot.size();
  if (log.size() < skip) {
    return MakeError(ErrorCode::kMalformedLog, "log shorter than boot");
  }
  for (size_t i = 0; i < skip; ++i) {
    if (FormatLogEntry(log[i]) != FormatLogEntry(boot[i])) {
      return MakeError(ErrorCode::kMalformedLog,
                       "boot entries differ: " + FormatLogEntry(log[i]));
    }
  }
  for (size_t i = skip; i < log.size(); ++i) {
    CAPMON_RETURN_IF_ERROR(ReplayEntry(system, log[i]));
  }
  return system;
}

}  // namespace capmon
