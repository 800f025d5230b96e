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

#include "capmon/scenario.h"

#include <algorithm>
#include <cctype>
#include <functional>
#include <set>
#include <sstream>
#include <utility>

#include "capmon/oracle.h"

namespace capmon {
namespace {

std::vector<std::string> Split(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

Error ScriptError(const Statement& st, const std::string& what) {
  return MakeError(ErrorCode::kParseError,
                   "line " + std::to_string(st.line) + ": " + what);
}

// Minimum word count per command, including the command itself.
const std::map<std::string, size_t, std::less<>>& MinWords() {
  static const auto* m = new std::map<std::string, size_t, std::less<>>{
      {"let", 4},     {"create", 2},    {"set", 4},       {"seal", 2},
      {"alias", 7},   {"carve", 7},     {"send", 4},      {"revoke", 2},
      {"getchan", 4}, {"selfchan", 2},  {"switch", 3},    {"attest", 2},
      {"enumerate", 1}, {"write-mem", 5}, {"read-mem", 4}, {"poke", 4},
      {"irq", 3},     {"device-irq", 2}, {"step", 2},     {"expect", 2},
  };
  return *m;
}

const std::map<std::string, size_t, std::less<>>& ExpectMinWords() {
  static const auto* m = new std::map<std::string, size_t, std::less<>>{
      {"error", 3},   {"view", 5},          {"domview", 5}, {"current", 4},
      {"payload", 4}, {"state", 4},         {"owner", 4},   {"mem", 5},
      {"access", 6},  {"confidential", 5},  {"encapsulated", 6},
      {"verify", 4},  {"text", 5},          {"oracle", 2},
  };
  return *m;
}

std::optional<bool> ParseBool(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  return std::nullopt;
}

}  // namespace

Result<std::vector<Statement>> ParseScenario(std::string_view text) {
  std::vector<Statement> out;
  int line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view raw = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (size_t hash = raw.find('#'); hash != std::string_view::npos) {
      raw = raw.substr(0, hash);
    }
    Statement st;
    st.line = line_no;
    st.words = Split(raw);
    if (st.words.empty()) continue;
    st.text = std::string(raw);
    while (!st.text.empty() && std::isspace(static_cast<unsigned char>(st.text.back()))) {
      st.text.pop_back();
    }
    size_t n = st.words.size();
    if (n >= 3 && st.words[n - 2] == "by" && st.words[0] != "expect") {
      st.by = st.words[n - 1];
      st.words.resize(n - 2);
    }
    const std::string& cmd = st.words[0];
    auto it = MinWords().find(cmd);
    if (it == MinWords().end()) {
      return ScriptError(st, "unknown command '" + cmd + "'");
    }
    if (st.words.size() < it->second) {
      return ScriptError(st, "too few arguments for " + cmd);
    }
    if (cmd == "expect") {
      auto e = ExpectMinWords().find(st.words[1]);
      if (e == ExpectMinWords().end()) {
        return ScriptError(st, "unknown expectation '" + st.words[1] + "'");
      }
      if (st.words.size() < e->second) {
        return ScriptError(st, "too few arguments for expect " + st.words[1]);
      }
    }
    if ((cmd == "let" || cmd == "alias" || cmd == "carve" || cmd == "getchan") &&
        st.words[2] != "=") {
      return ScriptError(st, "expected '=' after " + st.words[1]);
    }
    if (cmd == "send" && st.words[2] != "to") {
      return ScriptError(st, "expected 'to' after " + st.words[1]);
    }
    out.push_back(std::move(st));
    if (nl == text.size()) break;
  }
  return out;
}

ScenarioRunner::ScenarioRunner(System& system, ScenarioOptions options)
    : sys_(system), options_(options) {
  domains_["td0"] = sys_.td0();
  regions_["r0"] = sys_.engine->root_region();
  for (const auto& dev : sys_.config.devices) {
    if (auto id = sys_.Device(dev.name)) domains_[dev.name] = *id;
  }
}

std::optional<DomainId> ScenarioRunner::FindDomainName(
    std::string_view name) const {
  auto it = domains_.find(std::string(name));
  if (it != domains_.end()) return it->second;
  return std::nullopt;
}

Result<uint64_t> ScenarioRunner::Value(std::string_view text) const {
  uint64_t total = 0;
  size_t pos = 0;
  while (true) {
    size_t plus = text.find('+', pos);
    std::string part(text.substr(pos, plus == std::string_view::npos
                                          ? std::string_view::npos
                                          : plus - pos));
    if (auto it = lets_.find(part); it != lets_.end()) {
      total += it->second;
    } else if (auto n = ParseNumber(part)) {
      total += *n;
    } else {
      return MakeError(ErrorCode::kParseError, "bad value '" + part + "'");
    }
    if (plus == std::string_view::npos) break;
    pos = plus + 1;
  }
  return total;
}

Result<DomainId> ScenarioRunner::Domain(std::string_view name) const {
  if (auto id = FindDomainName(name)) return *id;
  return MakeError(ErrorCode::kParseError,
                   "unknown domain '" + std::string(name) + "'");
}

Result<DomainId> ScenarioRunner::Caller(const Statement& st) const {
  return st.by ? Domain(*st.by) : sys_.td0();
}

Result<Handle> ScenarioRunner::HandleFor(DomainId owner, std::string_view name,
                                         bool domain_via_channel) const {
  const DomainNode* node = sys_.engine->FindDomain(owner);
  std::function<bool(const Capability&)> match;
  std::string key(name);
  if (auto r = regions_.find(key); r != regions_.end()) {
    RegionId id = r->second;
    match = [id](const Capability& c) {
      return c.kind == Capability::Kind::kRegion && c.region == id;
    };
  } else if (auto c = channels_.find(key); c != channels_.end()) {
    ChannelId id = c->second;
    match = [id](const Capability& cap) {
      return cap.kind == Capability::Kind::kChannel && cap.channel == id;
    };
  } else if (auto d = FindDomainName(name)) {
    DomainId id = *d;
    match = [id](const Capability& c) {
      return c.kind == Capability::Kind::kDomain && c.domain == id;
    };
  } else {
    return MakeError(ErrorCode::kParseError,
                     "unknown name '" + std::string(name) + "'");
  }
  // An unresolvable name becomes a handle the engine will reject.
  Handle missing = 0xdead;
  if (node == nullptr) return missing;
  for (Handle h = 0; h < node->owned.size(); ++h) {
    if (node->owned[h] && match(*node->owned[h])) return h;
  }
  if (domain_via_channel) {
    if (auto d = FindDomainName(name)) {
      for (Handle h = 0; h < node->owned.size(); ++h) {
        const auto& cap = node->owned[h];
        if (cap && cap->kind == Capability::Kind::kChannel && cap->domain == *d) {
          return h;
        }
      }
    }
  }
  return missing;
}

Result<EffectiveView> ScenarioRunner::ParseSegments(
    const std::vector<std::string>& words, size_t from) const {
  EffectiveView view;
  if (from < words.size() && words[from] == "none") return view;
  std::vector<std::string> seg;
  auto flush = [&]() -> Status {
    if (seg.empty()) return OkStatus();
    if (seg.size() != 4) {
      return MakeError(ErrorCode::kParseError, "segment needs 4 words");
    }
    ViewSegment s;
    if (seg[0] == "exclusive") {
      s.status = RegionStatus::kExclusive;
    } else if (seg[0] == "aliased") {
      s.status = RegionStatus::kAliased;
    } else {
      return MakeError(ErrorCode::kParseError, "bad status " + seg[0]);
    }
    CAPMON_ASSIGN_OR_RETURN(s.range.start, Value(seg[1]));
    CAPMON_ASSIGN_OR_RETURN(s.range.end, Value(seg[2]));
    auto rights = AccessRights::Parse(seg[3]);
    if (!rights) return MakeError(ErrorCode::kParseError, "bad rights " + seg[3]);
    s.rights = *rights;
    view.push_back(s);
    seg.clear();
    return OkStatus();
  };
  for (size_t i = from; i < words.size(); ++i) {
    std::string w = words[i];
    bool end = !w.empty() && w.back() == ';';
    if (end) w.pop_back();
    if (!w.empty()) seg.push_back(w);
    if (end) CAPMON_RETURN_IF_ERROR(flush());
  }
  CAPMON_RETURN_IF_ERROR(flush());
  return NormalizeView(view);
}

Result<AttestationReport> ScenarioRunner::AttestByName(
    std::string_view subject, std::string_view by,
    std::optional<std::vector<uint8_t>> nonce) {
  CAPMON_ASSIGN_OR_RETURN(DomainId caller, Domain(by));
  std::optional<Handle> handle;
  if (subject != "self") {
    CAPMON_ASSIGN_OR_RETURN(handle, HandleFor(caller, subject, true));
  }
  return Attest(*sys_.engine, *sys_.key, sys_.measurement, caller, handle,
                std::move(nonce));
}

ScenarioResult ScenarioRunner::Run(const std::vector<Statement>& script) {
  ScenarioResult result;
  auto fail = [&](int code, const std::string& message) {
    result.exit_code = std::max(result.exit_code, code);
    result.messages.push_back(message);
    if (options_.echo) *options_.echo << "  FAIL " << message << "\n";
  };
  for (size_t i = 0; i < script.size(); ++i) {
    const Statement& st = script[i];
    if (options_.echo) *options_.echo << st.line << ": " << st.text << "\n";
    if (st.words[0] == "expect" && st.words[1] == "error") {
      fail(1, "line " + std::to_string(st.line) +
                  ": expect error without a failing statement");
      continue;
    }
    bool touches_memory = st.words[0] == "write-mem" || st.words[0] == "read-mem" ||
                          (st.words[0] == "expect" && st.words[1] == "access");
    if (touches_memory && options_.pause_cores) options_.pause_cores();
    Outcome out = Execute(st);
    if (touches_memory && options_.resume_cores) options_.resume_cores();
    std::string where = "line " + std::to_string(st.line) + ": ";
    switch (out.kind) {
      case Outcome::kOk:
        break;
      case Outcome::kScriptError:
        fail(2, where + out.message);
        return result;
      case Outcome::kExpectFailed:
        fail(1, where + out.message);
        break;
      case Outcome::kOpError: {
        if (options_.echo) *options_.echo << "  -> " << out.message << "\n";
        const Statement* next = i + 1 < script.size() ? &script[i + 1] : nullptr;
        if (next == nullptr || next->words[0] != "expect" ||
            next->words[1] != "error") {
          fail(1, where + "unexpected " + out.message);
          break;
        }
        ++i;
        auto want = ErrorFromName(next->words[2]);
        if (!want) {
          fail(2, "line " + std::to_string(next->line) + ": unknown error " +
                      next->words[2]);
          return result;
        }
        if (!out.code || *out.code != *want) {
          fail(1, "line " + std::to_string(next->line) + ": expected " +
                      next->words[2] + ", got " + out.message);
        }
        break;
      }
    }
  }
  return result;
}

ScenarioRunner::Outcome ScenarioRunner::Execute(const Statement& st) {
  Engine& engine = *sys_.engine;
  Machine& machine = *sys_.machine;
  const auto& w = st.words;
  const std::string& cmd = w[0];
  auto script_error = [](const Error& e) {
    return Outcome{Outcome::kScriptError, e.detail.empty() ? e.ToString() : e.detail,
                   std::nullopt};
  };
  auto op = [](const Status& s) {
    if (s.ok()) return Outcome{};
    return Outcome{Outcome::kOpError, s.error().ToString(), s.code()};
  };
#define SCRIPT_TRY(lhs, expr)                        \
  auto CAPMON_CONCAT_(tmp_, __LINE__) = (expr);      \
  if (!CAPMON_CONCAT_(tmp_, __LINE__).ok())          \
    return script_error(CAPMON_CONCAT_(tmp_, __LINE__).error()); \
  lhs = std::move(CAPMON_CONCAT_(tmp_, __LINE__)).value()

  engine.set_trace_context(machine.step(), 0);
  if (cmd == "expect") return Expect(st);
  if (cmd == "let") {
    SCRIPT_TRY(uint64_t v, Value(w[3]));
    lets_[w[1]] = v;
    return {};
  }
  if (cmd == "poke") {
    SCRIPT_TRY(uint64_t addr, Value(w[1]));
    SCRIPT_TRY(uint64_t len, Value(w[2]));
    SCRIPT_TRY(uint64_t byte, Value(w[3]));
    if (addr + len > sys_.config.memory) {
      return script_error(MakeError(ErrorCode::kParseError, "poke out of memory"));
    }
    for (uint64_t a = addr; a < addr + len; ++a) {
      machine.PokeByte(a, static_cast<uint8_t>(byte));
    }
    LogEntry e = engine.NewLogEntry("poke", engine.td0());
    e.Add("addr", Hex(addr)).Add("len", std::to_string(len)).Add("byte", Hex(byte & 0xff));
    engine.AppendLog(std::move(e));
    return {};
  }
  if (cmd == "step") {
    SCRIPT_TRY(uint64_t n, Value(w[1]));
    machine.Step(n);
    return {};
  }
  if (cmd == "irq") {
    SCRIPT_TRY(uint64_t core, Value(w[1]));
    SCRIPT_TRY(uint64_t vector, Value(w[2]));
    auto r = engine.RouteInterrupt(static_cast<CoreId>(core), static_cast<int>(vector));
    if (!r.ok()) return op(r.error());
    if (options_.echo) *options_.echo << "  -> handled by " << DomainName(*r) << "\n";
    return {};
  }
  if (cmd == "device-irq") {
    if (w.size() >= 4 && w[2] == "at") {
      SCRIPT_TRY(uint64_t at, Value(w[3]));
      return op(machine.RaiseDeviceInterrupt(w[1], at));
    }
    auto r = machine.DeliverDeviceInterrupt(w[1]);
    return op(r.ok() ? OkStatus() : Status(r.error()));
  }
  if (cmd == "write-mem" || cmd == "read-mem") {
    SCRIPT_TRY(uint64_t core, Value(w[1]));
    SCRIPT_TRY(uint64_t addr, Value(w[2]));
    SCRIPT_TRY(uint64_t len, Value(w[3]));
    if (core >= engine.core_count()) {
      return script_error(MakeError(ErrorCode::kParseError, "no such core"));
    }
    CoreId c = static_cast<CoreId>(core);
    engine.set_trace_context(machine.step(), c);
    if (cmd == "read-mem") {
      auto r = machine.Read(c, addr, len);
      if (!r.ok()) return op(r.error());
      if (options_.echo) *options_.echo << "  -> " << ToHex(*r) << "\n";
      return {};
    }
    if (w.size() < 5) {
      return script_error(MakeError(ErrorCode::kParseError, "write-mem needs a byte"));
    }
    SCRIPT_TRY(uint64_t byte, Value(w[4]));
    std::vector<uint8_t> data(len, static_cast<uint8_t>(byte));
    DomainId writer = engine.core(c).current;
    Status s = machine.Write(c, addr, data);
    if (s.ok()) {
      LogEntry e = engine.NewLogEntry("write", writer);
      e.Add("core", std::to_string(c))
          .Add("addr", Hex(addr))
          .Add("len", std::to_string(len))
          .Add("byte", Hex(byte & 0xff));
      engine.AppendLog(std::move(e));
    }
    return op(s);
  }
  if (cmd == "switch") {
    SCRIPT_TRY(uint64_t core, Value(w[1]));
    if (core >= engine.core_count()) {
      return script_error(MakeError(ErrorCode::kParseError, "no such core"));
    }
    CoreId c = static_cast<CoreId>(core);
    DomainId caller = engine.core(c).current;
    if (st.by) {
      SCRIPT_TRY(caller, Domain(*st.by));
    }
    std::optional<Handle> target;
    if (w[2] != "return") {
      SCRIPT_TRY(target, HandleFor(caller, w[2]));
    }
    engine.set_trace_context(machine.step(), c);
    return op(engine.Switch(caller, c, target));
  }

  SCRIPT_TRY(DomainId caller, Caller(st));
  if (cmd == "create") {
    if (domains_.count(w[1])) {
      return script_error(MakeError(ErrorCode::kParseError, w[1] + " already bound"));
    }
    auto r = engine.Create(caller);
    if (!r.ok()) return op(r.error());
    domains_[w[1]] = engine.ResolveHandle(caller, *r)->domain;
    return {};
  }
  if (cmd == "seal") {
    SCRIPT_TRY(Handle h, HandleFor(caller, w[1]));
    return op(engine.Seal(caller, h));
  }
  if (cmd == "set") {
    SCRIPT_TRY(Handle h, HandleFor(caller, w[1]));
    const std::string& field = w[2];
    if (field == "reg") {
      if (w.size() < 6) {
        return script_error(MakeError(ErrorCode::kParseError, "set reg CORE INDEX VALUE"));
      }
      SCRIPT_TRY(uint64_t core, Value(w[3]));
      SCRIPT_TRY(uint64_t index, Value(w[4]));
      SCRIPT_TRY(uint64_t value, Value(w[5]));
      return op(engine.SetRegister(caller, h, static_cast<CoreId>(core),
                                   static_cast<int>(index), value));
    }
    if (field == "irq") {
      if (w.size() < 5) {
        return script_error(MakeError(ErrorCode::kParseError, "set irq RANGE VISIBILITY"));
      }
      std::string range = w[3];
      size_t dash = range.find('-');
      SCRIPT_TRY(uint64_t first, Value(range.substr(0, dash)));
      uint64_t last = first;
      if (dash != std::string::npos) {
        SCRIPT_TRY(last, Value(range.substr(dash + 1)));
      }
      InterruptPolicy p;
      if (w[4] == "deliver") {
        p.visibility = InterruptVisibility::kDeliver;
      } else if (w[4] == "report") {
        p.visibility = InterruptVisibility::kReport;
      } else if (w[4] == "notreport") {
        p.visibility = InterruptVisibility::kNotReport;
      } else {
        return script_error(MakeError(ErrorCode::kParseError, "bad visibility " + w[4]));
      }
      if (w.size() >= 6) {
        SCRIPT_TRY(uint64_t regs, Value(w[5]));
        p.readable_regs = static_cast<uint32_t>(regs);
      }
      for (uint64_t v = first; v <= last; ++v) {
        Status s = engine.SetPolicy(caller, h, PolicyField::Interrupt(static_cast<int>(v)),
                                    p.Encode());
        if (!s.ok()) return op(s);
      }
      return {};
    }
    PolicyField pf;
    if (field == "cores") {
      pf = PolicyField::Cores();
    } else if (field == "mon_api") {
      pf = PolicyField::MonApi();
    } else if (field == "receive") {
      pf = PolicyField::ReceiveAfterSeal();
    } else if (field == "user") {
      pf = PolicyField::UserCalls();
    } else {
      return script_error(MakeError(ErrorCode::kParseError, "unknown field " + field));
    }
    SCRIPT_TRY(uint64_t value, Value(w[3]));
    return op(engine.SetPolicy(caller, h, pf, value));
  }
  if (cmd == "alias" || cmd == "carve") {
    if (regions_.count(w[1])) {
      return script_error(MakeError(ErrorCode::kParseError, w[1] + " already bound"));
    }
    SCRIPT_TRY(Handle parent, HandleFor(caller, w[3]));
    SCRIPT_TRY(uint64_t start, Value(w[4]));
    SCRIPT_TRY(uint64_t end, Value(w[5]));
    auto rights = AccessRights::Parse(w[6]);
    if (!rights) {
      return script_error(MakeError(ErrorCode::kParseError, "bad rights " + w[6]));
    }
    PhysRange sub{start, end};
    auto r = cmd == "alias" ? engine.Alias(caller, parent, sub, *rights)
                            : engine.Carve(caller, parent, sub, *rights);
    if (!r.ok()) return op(r.error());
    regions_[w[1]] = engine.ResolveHandle(caller, *r)->region;
    return {};
  }
  if (cmd == "send") {
    SCRIPT_TRY(Handle cap, HandleFor(caller, w[1]));
    SCRIPT_TRY(Handle dest, HandleFor(caller, w[3], true));
    AttributeRequest attrs;
    if (w.size() >= 5) {
      auto a = AttributeRequest::Parse(w[4]);
      if (!a) return script_error(MakeError(ErrorCode::kParseError, "bad attributes " + w[4]));
      attrs = *a;
    }
    return op(engine.Send(caller, cap, dest, attrs));
  }
  if (cmd == "revoke") {
    if (w.size() >= 3) {
      auto rid = regions_.find(w[1]);
      auto cid = regions_.find(w[2]);
      if (rid == regions_.end() || cid == regions_.end()) {
        return script_error(MakeError(ErrorCode::kParseError, "revoke needs two regions"));
      }
      SCRIPT_TRY(Handle parent, HandleFor(caller, w[1]));
      size_t index = 0;
      if (const RegionNode* p = engine.regions().Find(rid->second)) {
        auto it = std::find(p->children.begin(), p->children.end(), cid->second);
        index = static_cast<size_t>(it - p->children.begin());
      }
      return op(engine.RevokeRegion(caller, parent, index));
    }
    SCRIPT_TRY(Handle h, HandleFor(caller, w[1]));
    return op(engine.RevokeDomain(caller, h));
  }
  if (cmd == "getchan" || cmd == "selfchan") {
    if (channels_.count(w[1])) {
      return script_error(MakeError(ErrorCode::kParseError, w[1] + " already bound"));
    }
    Result<Handle> r = MakeError(ErrorCode::kInvalidArgument);
    if (cmd == "getchan") {
      SCRIPT_TRY(Handle source, HandleFor(caller, w[3], true));
      r = engine.GetChan(caller, source);
    } else {
      r = engine.SelfChannel(caller);
    }
    if (!r.ok()) return op(r.error());
    channels_[w[1]] = engine.ResolveHandle(caller, *r)->channel;
    return {};
  }
  if (cmd == "attest") {
    std::optional<std::vector<uint8_t>> nonce;
    std::string name = "last";
    for (size_t k = 2; k + 1 < w.size(); k += 2) {
      if (w[k] == "nonce") {
        nonce = FromHex(w[k + 1]);
        if (!nonce) return script_error(MakeError(ErrorCode::kParseError, "bad nonce"));
      } else if (w[k] == "as") {
        name = w[k + 1];
      } else {
        return script_error(MakeError(ErrorCode::kParseError, "bad attest option " + w[k]));
      }
    }
    std::optional<Handle> subject;
    if (w[1] != "self") {
      SCRIPT_TRY(subject, HandleFor(caller, w[1], true));
    }
    auto r = Attest(engine, *sys_.key, sys_.measurement, caller, subject, nonce);
    if (!r.ok()) return op(r.error());
    if (options_.echo) *options_.echo << RenderText(*r);
    reports_[name] = *r;
    return {};
  }
  if (cmd == "enumerate") {
    uint64_t cursor = 0;
    while (true) {
      auto r = engine.Enumerate(caller, cursor);
      if (!r.ok()) return op(r.error());
      if (!r->info) break;
      const CapabilityInfo& info = *r->info;
      if (options_.echo) {
        *options_.echo << "  h" << info.handle << " ";
        if (info.kind == Capability::Kind::kRegion) {
          *options_.echo << ToString(info.status) << " " << ToString(info.range)
                         << " " << info.rights.ToString() << " "
                         << info.attributes.FlagString() << " children "
                         << info.children.size() << "\n";
        } else {
          *options_.echo << (info.kind == Capability::Kind::kDomain ? "domain " : "channel ")
                         << ToString(info.domain_state) << "\n";
        }
      }
      cursor = r->next_cursor;
    }
    return {};
  }
  return script_error(MakeError(ErrorCode::kParseError, "unhandled command " + cmd));
#undef SCRIPT_TRY
}

ScenarioRunner::Outcome ScenarioRunner::Expect(const Statement& st) {
  Engine& engine = *sys_.engine;
  Machine& machine = *sys_.machine;
  const auto& w = st.words;
  const std::string& what = w[1];
  auto script_error = [](const Error& e) {
    return Outcome{Outcome::kScriptError, e.detail.empty() ? e.ToString() : e.detail,
                   std::nullopt};
  };
  auto check = [](bool ok, std::string message) {
    if (ok) return Outcome{};
    return Outcome{Outcome::kExpectFailed, std::move(message), std::nullopt};
  };
#define SCRIPT_TRY(lhs, expr)                        \
  auto CAPMON_CONCAT_(tmp_, __LINE__) = (expr);      \
  if (!CAPMON_CONCAT_(tmp_, __LINE__).ok())          \
    return script_error(CAPMON_CONCAT_(tmp_, __LINE__).error()); \
  lhs = std::move(CAPMON_CONCAT_(tmp_, __LINE__)).value()

  auto report = [&](const std::string& name) -> Result<const AttestationReport*> {
    auto it = reports_.find(name);
    if (it == reports_.end()) {
      return MakeError(ErrorCode::kParseError, "no report named " + name);
    }
    return &it->second;
  };

  if (what == "view" || what == "domview") {
    if (w[3] != "=") return script_error(MakeError(ErrorCode::kParseError, "expected '='"));
    SCRIPT_TRY(EffectiveView want, ParseSegments(w, 4));
    EffectiveView got;
    if (what == "view") {
      auto it = regions_.find(w[2]);
      if (it == regions_.end()) {
        return script_error(MakeError(ErrorCode::kParseError, "unknown region " + w[2]));
      }
      auto v = engine.regions().View(it->second);
      if (v.ok()) got = *v;
    } else {
      SCRIPT_TRY(DomainId d, Domain(w[2]));
      got = engine.DomainView(d);
    }
    return check(got == want, "view of " + w[2] + " is " + ToString(got) +
                                  ", expected " + ToString(want));
  }
  if (what == "current") {
    SCRIPT_TRY(uint64_t core, Value(w[2]));
    SCRIPT_TRY(DomainId d, Domain(w[3]));
    if (core >= engine.core_count()) {
      return script_error(MakeError(ErrorCode::kParseError, "no such core"));
    }
    DomainId got = engine.core(static_cast<CoreId>(core)).current;
    return check(got == d, "core " + w[2] + " runs " + DomainName(got));
  }
  if (what == "payload") {
    SCRIPT_TRY(uint64_t core, Value(w[2]));
    if (core >= engine.core_count()) {
      return script_error(MakeError(ErrorCode::kParseError, "no such core"));
    }
    Payload want;
    if (w[3] == "none") {
      want.kind = Payload::Kind::kNone;
    } else if (w[3] == "returned") {
      want.kind = Payload::Kind::kReturned;
    } else if (w[3] == "interrupt" && w.size() >= 5) {
      want.kind = Payload::Kind::kInterrupt;
      SCRIPT_TRY(want.value, Value(w[4]));
    } else if (w[3] == "revoked" && w.size() >= 5) {
      want.kind = Payload::Kind::kRevokedChild;
      SCRIPT_TRY(DomainId d, Domain(w[4]));
      want.value = d.value;
    } else {
      return script_error(MakeError(ErrorCode::kParseError, "bad payload"));
    }
    Payload got = engine.core(static_cast<CoreId>(core)).payload;
    if (want.kind == Payload::Kind::kReturned) want.value = got.value;
    return check(got == want, "payload is " + got.ToString());
  }
  if (what == "state") {
    SCRIPT_TRY(DomainId d, Domain(w[2]));
    const DomainNode* node = engine.FindDomain(d);
    std::string got = node ? std::string(ToString(node->state)) : "missing";
    return check(got == w[3], w[2] + " is " + got);
  }
  if (what == "owner") {
    auto it = regions_.find(w[2]);
    if (it == regions_.end()) {
      return script_error(MakeError(ErrorCode::kParseError, "unknown region " + w[2]));
    }
    SCRIPT_TRY(DomainId d, Domain(w[3]));
    const RegionNode* node = engine.regions().Find(it->second);
    if (node == nullptr) return check(false, w[2] + " no longer exists");
    return check(node->owner == d, w[2] + " is owned by " + DomainName(node->owner));
  }
  if (what == "mem") {
    SCRIPT_TRY(uint64_t addr, Value(w[2]));
    SCRIPT_TRY(uint64_t len, Value(w[3]));
    SCRIPT_TRY(uint64_t byte, Value(w[4]));
    if (addr + len > sys_.config.memory) {
      return script_error(MakeError(ErrorCode::kParseError, "out of memory"));
    }
    for (uint64_t a = addr; a < addr + len; ++a) {
      if (machine.PeekByte(a) != static_cast<uint8_t>(byte)) {
        return check(false, "byte at " + Hex(a) + " is " + Hex(machine.PeekByte(a)));
      }
    }
    return {};
  }
  if (what == "access") {
    SCRIPT_TRY(uint64_t core, Value(w[2]));
    SCRIPT_TRY(uint64_t addr, Value(w[3]));
    AccessKind kind;
    if (w[4] == "R") {
      kind = AccessKind::kRead;
    } else if (w[4] == "W") {
      kind = AccessKind::kWrite;
    } else if (w[4] == "X") {
      kind = AccessKind::kExecute;
    } else {
      return script_error(MakeError(ErrorCode::kParseError, "bad access kind"));
    }
    if (core >= engine.core_count() || (w[5] != "allow" && w[5] != "deny")) {
      return script_error(MakeError(ErrorCode::kParseError, "bad access check"));
    }
    bool allowed = machine.Access(static_cast<CoreId>(core), addr, kind);
    return check(allowed == (w[5] == "allow"),
                 std::string(w[4]) + " at " + Hex(addr) + " was " +
                     (allowed ? "allowed" : "denied"));
  }
  if (what == "confidential" || what == "encapsulated") {
    SCRIPT_TRY(const AttestationReport* rep, report(w[2]));
    bool conf = what == "confidential";
    size_t verdict_at = conf ? 4 : 5;
    auto want = ParseBool(w[verdict_at]);
    if (!want) return script_error(MakeError(ErrorCode::kParseError, "expected true|false"));
    auto v = conf ? IsConfidential(*rep, w[3]) : IsEncapsulated(*rep, w[3], w[4]);
    if (!v.ok()) return check(false, v.error().ToString());
    if (v->holds != *want) {
      return check(false, what + " evaluated to " + (v->holds ? "true" : "false") +
                              "\n" + v->ToString());
    }
    for (size_t k = verdict_at + 1; k < w.size(); ++k) {
      size_t eq = w[k].find('=');
      auto clause_want = eq == std::string::npos ? std::nullopt
                                                 : ParseBool(w[k].substr(eq + 1));
      if (!clause_want) {
        return script_error(MakeError(ErrorCode::kParseError, "bad clause " + w[k]));
      }
      std::string name = w[k].substr(0, eq);
      auto it = std::find_if(v->clauses.begin(), v->clauses.end(),
                             [&](const Clause& c) { return c.name == name; });
      if (it == v->clauses.end()) {
        return script_error(MakeError(ErrorCode::kParseError, "unknown clause " + name));
      }
      if (it->holds != *clause_want) {
        return check(false, "clause " + name + " " +
                                (it->holds ? "holds" : "is violated") + ": " + it->detail);
      }
    }
    return {};
  }
  if (what == "verify") {
    SCRIPT_TRY(const AttestationReport* rep, report(w[2]));
    Status s = VerifyReport(Serialize(*rep), sys_.key->public_key(),
                            sys_.measurement.pcr, rep->header.nonce);
    bool want = w[3] == "accept";
    return check(s.ok() == want, s.ok() ? "report accepted" : s.error().ToString());
  }
  if (what == "text") {
    SCRIPT_TRY(const AttestationReport* rep, report(w[2]));
    if (w[3] != "contains") {
      return script_error(MakeError(ErrorCode::kParseError, "expected 'contains'"));
    }
    size_t at = st.text.find(" contains ");
    std::string needle = st.text.substr(at + 10);
    while (!needle.empty() && needle.front() == ' ') needle.erase(0, 1);
    std::string text = RenderText(*rep);
    return check(text.find(needle) != std::string::npos,
                 "report text lacks '" + needle + "'");
  }
  if (what == "oracle") {
    auto oracle = Oracle::Replay(engine.log());
    if (!oracle.ok()) return check(false, oracle.error().ToString());
    std::vector<std::string> diffs = oracle->Diff(engine);
    std::string joined;
    for (const auto& d : diffs) joined += "\n  " + d;
    return check(diffs.empty(), "oracle disagrees:" + joined);
  }
  return script_error(MakeError(ErrorCode::kParseError, "unhandled expectation " + what));
#undef SCRIPT_TRY
}

}  // namespace capmon
