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

#include "capmon/engine.h"

#include <algorithm>
#include <cassert>
#include <string>
#include <utility>
#include <vector>

namespace capmon {
namespace {

uint64_t CoreMask(uint32_t count) {
  return count >= 64 ? ~uint64_t{0} : (uint64_t{1} << count) - 1;
}

Digest HashRegisters(const std::vector<RegisterFile>& files) {
  Sha256Builder builder;
  for (const RegisterFile& file : files) {
    for (uint64_t reg : file) builder.UpdateU64(reg);
  }
  return builder.Finish();
}

std::string PolicyFieldName(PolicyField::Kind kind) {
  switch (kind) {
    case PolicyField::Kind::kCores:
      return "cores";
    case PolicyField::Kind::kMonApi:
      return "mon_api";
    case PolicyField::Kind::kUserCalls:
      return "user_calls";
    case PolicyField::Kind::kReceiveAfterSeal:
      return "receive";
    case PolicyField::Kind::kInterrupt:
      return "irq";
  }
  return "?";
}

}  // namespace

std::string Update::ToString() const {
  switch (kind) {
    case Kind::kAccessChanged:
      return "access_changed " + DomainName(domain);
    case Kind::kDomainRevoked:
      return "domain_revoked " + DomainName(domain);
    case Kind::kInterruptRouted:
      return "interrupt_routed vector=" + std::to_string(vector) + " " +
             DomainName(domain);
  }
  return "?";
}

std::string Payload::ToString() const {
  switch (kind) {
    case Kind::kNone:
      return "none";
    case Kind::kReturned:
      return "returned";
    case Kind::kInterrupt:
      return "interrupt " + std::to_string(value);
    case Kind::kRevokedChild:
      return "revoked " + DomainName(DomainId{value});
  }
  return "?";
}

std::string Capability::Name() const {
  switch (kind) {
    case Kind::kRegion:
      return RegionName(region);
    case Kind::kDomain:
      return DomainName(domain);
    case Kind::kChannel:
      return ChannelName(channel);
  }
  return "?";
}

std::string_view ToString(DomainState state) {
  switch (state) {
    case DomainState::kUnsealed:
      return "unsealed";
    case DomainState::kSealed:
      return "sealed";
    case DomainState::kRevoked:
      return "revoked";
  }
  return "?";
}

std::string AttributeRequest::ToString() const {
  if (empty()) return "-";
  RegionAttributes attrs;
  if (hash) attrs.hash = Digest{};
  attrs.clean = clean;
  attrs.vital = vital;
  return attrs.FlagString();
}

std::optional<AttributeRequest> AttributeRequest::Parse(std::string_view text) {
  AttributeRequest req;
  if (text == "-" || text.empty()) return req;
  while (!text.empty()) {
    size_t bar = text.find('|');
    std::string_view flag = text.substr(0, bar);
    if (flag == "HASH") {
      req.hash = true;
    } else if (flag == "CLEAN") {
      req.clean = true;
    } else if (flag == "VITAL") {
      req.vital = true;
    } else {
      return std::nullopt;
    }
    if (bar == std::string_view::npos) break;
    text.remove_prefix(bar + 1);
  }
  return req;
}

Engine::Engine(Platform& platform, EngineConfig config)
    : platform_(platform), config_(std::move(config)) {
  const uint32_t ncores = config_.core_count;
  cores_.resize(ncores);

  DomainNode td0;
  td0.id = DomainId{next_domain_++};
  td0.state = DomainState::kSealed;
  td0.policies.cores = CoreMask(ncores);
  td0.policies.mon_api = kAllApiCalls;
  td0.policies.user_calls = true;
  td0.policies.receive_after_seal = true;
  for (InterruptPolicy& p : td0.policies.interrupts) {
    p.visibility = InterruptVisibility::kDeliver;
  }
  td0.registers.assign(ncores, RegisterFile{});
  td0.context = td0.registers;
  td0.register_hash = HashRegisters(td0.registers);
  td0_ = td0.id;
  domains_.emplace(td0_, std::move(td0));
  ++live_domains_;

  RegionId root = regions_.CreateRoot(td0_, config_.root);
  Insert(domains_.at(td0_), Capability::ForRegion(root));
  for (CoreId c = 0; c < ncores; ++c) {
    cores_[c].id = c;
    cores_[c].current = td0_;
  }

  LogEntry boot = BeginLog("boot", td0_);
  boot.Add("root", RegionName(root))
      .Add("start", Hex(config_.root.start))
      .Add("end", Hex(config_.root.end))
      .Add("cores", std::to_string(ncores));
  FinishLog(std::move(boot), OkStatus());

  // One I/O domain per device: MMIO carved from the root, DMA windows
  // aliased from it, and a channel handed to td0.
  for (const DeviceSpec& spec : config_.devices) {
    DomainNode dev;
    dev.id = DomainId{next_domain_++};
    dev.state = DomainState::kSealed;
    dev.parent = td0_;
    dev.is_device = true;
    dev.device_name = spec.name;
    dev.device_vector = spec.vector;
    dev.registers.assign(ncores, RegisterFile{});
    dev.context = dev.registers;
    dev.register_hash = HashRegisters(dev.registers);
    DomainId dev_id = dev.id;
    domains_.emplace(dev_id, std::move(dev));
    domains_.at(td0_).children.push_back(dev_id);
    ++live_domains_;

    LogEntry created = BeginLog("device", td0_);
    created.Add("name", spec.name).Add("vector", std::to_string(spec.vector));
    created.result = DomainName(dev_id);
    FinishLog(std::move(created), OkStatus());

    auto give = [&](Result<RegionId> derived, const char* op,
                    const PhysRange& range) {
      assert(derived.ok());
      RegionId id = *derived;
      LogEntry derive = BeginLog(op, td0_);
      derive.Add("parent", RegionName(root))
          .Add("start", Hex(range.start))
          .Add("end", Hex(range.end))
          .Add("rights", "RW_");
      derive.result = RegionName(id);
      FinishLog(std::move(derive), OkStatus());
      regions_.SetOwner(id, dev_id);
      Insert(domains_.at(dev_id), Capability::ForRegion(id));
      LogEntry send = BeginLog("send", td0_);
      send.Add("cap", RegionName(id))
          .Add("dest", DomainName(dev_id))
          .Add("attrs", "-");
      FinishLog(std::move(send), OkStatus());
    };
    const AccessRights rw(AccessRights::kRead | AccessRights::kWrite);
    give(regions_.Carve(td0_, root, spec.mmio, rw), "carve", spec.mmio);
    for (const PhysRange& dma : spec.dma) {
      give(regions_.Alias(td0_, root, dma, rw), "alias", dma);
    }

    ChannelId ch{next_channel_++};
    domains_.at(dev_id).channels.push_back(ch);
    Insert(domains_.at(td0_), Capability::ForChannel(ch, dev_id));
    LogEntry chan = BeginLog("getchan", td0_);
    chan.Add("source", DomainName(dev_id));
    chan.result = ChannelName(ch);
    FinishLog(std::move(chan), OkStatus());
  }
}

// ---------------------------------------------------------------------------
// Helpers.

const DomainNode* Engine::FindDomain(DomainId id) const {
  auto it = domains_.find(id);
  return it == domains_.end() ? nullptr : &it->second;
}

DomainNode* Engine::MutableDomain(DomainId id) {
  auto it = domains_.find(id);
  return it == domains_.end() ? nullptr : &it->second;
}

Status Engine::CheckCaller(DomainId caller, ApiCall call) const {
  const DomainNode* d = FindDomain(caller);
  if (d == nullptr) return MakeError(ErrorCode::kUnknownDomain);
  if (!d->live()) return MakeError(ErrorCode::kDomainRevoked);
  if (d->state != DomainState::kSealed) {
    return MakeError(ErrorCode::kNotSealed, "caller cannot execute");
  }
  if (!d->policies.Allows(call)) {
    return MakeError(ErrorCode::kPolicyDenied, std::string(ToString(call)));
  }
  return OkStatus();
}

Result<Capability> Engine::Lookup(const DomainNode& owner,
                                  Handle handle) const {
  if (handle >= owner.owned.size() || !owner.owned[handle]) {
    return MakeError(ErrorCode::kNotOwner, "h" + std::to_string(handle));
  }
  return *owner.owned[handle];
}

Result<DomainNode*> Engine::ChildFromHandle(DomainNode& caller,
                                            Handle handle) {
  CAPMON_ASSIGN_OR_RETURN(Capability cap, Lookup(caller, handle));
  if (cap.kind == Capability::Kind::kChannel) {
    return MakeError(ErrorCode::kChannelRestricted);
  }
  if (cap.kind != Capability::Kind::kDomain) {
    return MakeError(ErrorCode::kWrongKind);
  }
  DomainNode* child = MutableDomain(cap.domain);
  assert(child != nullptr && child->live());
  return child;
}

Result<DomainNode*> Engine::TargetFromHandle(DomainNode& caller,
                                             Handle handle) {
  CAPMON_ASSIGN_OR_RETURN(Capability cap, Lookup(caller, handle));
  if (cap.kind == Capability::Kind::kRegion) {
    return MakeError(ErrorCode::kWrongKind);
  }
  DomainNode* target = MutableDomain(cap.domain);
  if (target == nullptr || !target->live()) {
    return MakeError(ErrorCode::kDomainRevoked, DomainName(cap.domain));
  }
  return target;
}

Handle Engine::Insert(DomainNode& owner, const Capability& cap) {
  for (Handle h = 0; h < owner.owned.size(); ++h) {
    if (!owner.owned[h]) {
      owner.owned[h] = cap;
      return h;
    }
  }
  owner.owned.push_back(cap);
  return static_cast<Handle>(owner.owned.size() - 1);
}

void Engine::RemoveCapability(DomainNode& owner, const Capability& cap) {
  for (auto& slot : owner.owned) {
    if (slot && *slot == cap) {
      slot.reset();
      return;
    }
  }
}

std::optional<Capability> Engine::ResolveHandle(DomainId owner,
                                                Handle handle) const {
  const DomainNode* d = FindDomain(owner);
  if (d == nullptr || handle >= d->owned.size()) return std::nullopt;
  return d->owned[handle];
}

std::optional<Handle> Engine::FindHandle(DomainId owner,
                                         const Capability& cap) const {
  const DomainNode* d = FindDomain(owner);
  if (d == nullptr) return std::nullopt;
  for (Handle h = 0; h < d->owned.size(); ++h) {
    const auto& slot = d->owned[h];
    if (!slot || slot->kind != cap.kind) continue;
    switch (cap.kind) {
      case Capability::Kind::kRegion:
        if (slot->region == cap.region) return h;
        break;
      case Capability::Kind::kDomain:
        if (slot->domain == cap.domain) return h;
        break;
      case Capability::Kind::kChannel:
        if (slot->channel == cap.channel) return h;
        break;
    }
  }
  return std::nullopt;
}

std::string Engine::HandleName(const DomainNode& owner, Handle handle) const {
  if (handle < owner.owned.size() && owner.owned[handle]) {
    return owner.owned[handle]->Name();
  }
  return "h" + std::to_string(handle);
}

LogEntry Engine::BeginLog(std::string op, DomainId caller) const {
  LogEntry entry;
  entry.step = trace_step_;
  entry.core = trace_core_;
  entry.op = std::move(op);
  entry.Add("caller", DomainName(caller));
  return entry;
}

void Engine::FinishLog(LogEntry entry, const Status& status) {
  if (!logging_) return;
  if (!status.ok()) entry.result = "error=" + std::string(ErrorName(status.code()));
  log_.push_back(std::move(entry));
}

void Engine::FinishLog(LogEntry entry, const Error& error) {
  FinishLog(std::move(entry), Status(error));
}

void Engine::AppendLog(LogEntry entry) {
  if (logging_) log_.push_back(std::move(entry));
}

EffectiveView Engine::RegionViewOrEmpty(RegionId id) const {
  auto view = regions_.View(id);
  return view.ok() ? std::move(view).value() : EffectiveView{};
}

EffectiveView Engine::DomainView(DomainId id) const {
  const DomainNode* d = FindDomain(id);
  if (d == nullptr || !d->live()) return {};
  std::vector<EffectiveView> views;
  for (const auto& slot : d->owned) {
    if (slot && slot->kind == Capability::Kind::kRegion) {
      views.push_back(RegionViewOrEmpty(slot->region));
    }
  }
  return UnionViews(views);
}

bool Engine::RangeMapped(const PhysRange& range,
                         std::optional<RegionId> exclude) const {
  for (const auto& [id, node] : regions_.nodes()) {
    if (exclude && id == *exclude) continue;
    if (!node.initial_range.Overlaps(range)) continue;
    for (const ViewSegment& seg : RegionViewOrEmpty(id)) {
      if (seg.range.Overlaps(range)) return true;
    }
  }
  return false;
}

void Engine::Commit(Changes& changes, const std::function<void()>& publish) {
  std::vector<CoreCommit> commits;
  for (const CoreState& cs : cores_) {
    std::vector<Update> updates;
    if (auto it = changes.explicit_updates.find(cs.id);
        it != changes.explicit_updates.end()) {
      updates = it->second;
    }
    if (changes.access_changed.count(cs.current)) {
      Update u{Update::Kind::kAccessChanged, cs.current, 0};
      if (std::find(updates.begin(), updates.end(), u) == updates.end()) {
        updates.push_back(u);
      }
    }
    if (updates.empty()) continue;
    commits.push_back({cs.id, std::move(updates), cs.current,
                       DomainView(cs.current)});
  }
  platform_.Commit(std::move(commits), [&] {
    if (publish) publish();
    ++version_;
  });
}

void Engine::Enter(CoreState& core, DomainId domain, Payload payload) {
  core.current = domain;
  core.payload = payload;
  if (payload.kind == Payload::Kind::kNone) return;
  DomainNode* d = MutableDomain(domain);
  RegisterFile& regs = d->context.at(core.id);
  regs[0] = 0;
  regs[1] = static_cast<uint64_t>(payload.kind);
  regs[2] = payload.value;
}

// ---------------------------------------------------------------------------
// Domain lifecycle and configuration.

Result<Handle> Engine::Create(DomainId caller) {
  ScopedLock lock(*this);
  LogEntry entry = BeginLog("create", caller);
  if (Status st = CheckCaller(caller, ApiCall::kCreate); !st.ok()) {
    FinishLog(std::move(entry), st);
    return st.error();
  }
  if (live_domains_ >= config_.max_domains) {
    Error err = MakeError(ErrorCode::kOutOfMetadata);
    FinishLog(std::move(entry), err);
    return err;
  }
  DomainNode child;
  child.id = DomainId{next_domain_++};
  child.parent = caller;
  child.registers.assign(config_.core_count, RegisterFile{});
  child.context = child.registers;
  DomainId id = child.id;
  domains_.emplace(id, std::move(child));
  ++live_domains_;
  DomainNode& parent = domains_.at(caller);
  parent.children.push_back(id);
  Handle h = Insert(parent, Capability::ForDomain(id));

  entry.result = DomainName(id);
  FinishLog(std::move(entry), OkStatus());
  Changes changes;
  Commit(changes);
  return h;
}

Status Engine::SetRegister(DomainId caller, Handle child_handle, CoreId core,
                           int index, uint64_t value) {
  ScopedLock lock(*this);
  LogEntry entry = BeginLog("set_reg", caller);
  auto fail = [&](Error err) -> Status {
    FinishLog(std::move(entry), err);
    return err;
  };
  if (Status st = CheckCaller(caller, ApiCall::kSetGet); !st.ok()) {
    return fail(st.error());
  }
  DomainNode& me = domains_.at(caller);
  entry.Add("target", HandleName(me, child_handle))
      .Add("core", std::to_string(core))
      .Add("index", std::to_string(index))
      .Add("value", Hex(value));
  auto child = ChildFromHandle(me, child_handle);
  if (!child.ok()) return fail(child.error());
  if ((*child)->state != DomainState::kUnsealed) {
    return fail(MakeError(ErrorCode::kSealed));
  }
  if (core >= config_.core_count || index < 0 || index >= kNumRegisters) {
    return fail(MakeError(ErrorCode::kInvalidArgument, "register"));
  }
  (*child)->registers[core][index] = value;
  FinishLog(std::move(entry), OkStatus());
  Changes changes;
  Commit(changes);
  return OkStatus();
}

Result<uint64_t> Engine::GetRegister(DomainId caller, Handle child_handle,
                                     CoreId core, int index) {
  ScopedLock lock(*this);
  CAPMON_RETURN_IF_ERROR(CheckCaller(caller, ApiCall::kSetGet));
  DomainNode& me = domains_.at(caller);
  CAPMON_ASSIGN_OR_RETURN(DomainNode * child, ChildFromHandle(me, child_handle));
  if (core >= config_.core_count || index < 0 || index >= kNumRegisters) {
    return MakeError(ErrorCode::kInvalidArgument, "register");
  }
  if (child->state == DomainState::kUnsealed) {
    return child->registers[core][index];
  }
  // After seal only the domain currently handling or observing an interrupt
  // of this child may read it, and only the registers its policy exposes.
  const CoreState& cs = cores_[core];
  if (cs.current != caller || cs.suspended.empty() ||
      cs.suspended.front().domain != child->id) {
    return MakeError(ErrorCode::kRegisterHidden, "not observing this child");
  }
  int vector = cs.suspended.front().vector;
  uint32_t readable = child->policies.interrupts[vector].readable_regs;
  if (((readable >> index) & 1) == 0) {
    return MakeError(ErrorCode::kRegisterHidden,
                     "register " + std::to_string(index));
  }
  return child->context[core][index];
}

Status Engine::SetPolicy(DomainId caller, Handle child_handle,
                         PolicyField field, uint64_t value) {
  ScopedLock lock(*this);
  LogEntry entry = BeginLog("set_policy", caller);
  auto fail = [&](Error err) -> Status {
    FinishLog(std::move(entry), err);
    return err;
  };
  if (Status st = CheckCaller(caller, ApiCall::kSetGet); !st.ok()) {
    return fail(st.error());
  }
  DomainNode& me = domains_.at(caller);
  entry.Add("target", HandleName(me, child_handle))
      .Add("field", PolicyFieldName(field.kind));
  if (field.kind == PolicyField::Kind::kInterrupt) {
    entry.Add("vector", std::to_string(field.vector));
  }
  entry.Add("value", Hex(value));
  auto child_or = ChildFromHandle(me, child_handle);
  if (!child_or.ok()) return fail(child_or.error());
  DomainNode& child = **child_or;
  if (child.state != DomainState::kUnsealed) {
    return fail(MakeError(ErrorCode::kSealed));
  }
  const Policies& mine = me.policies;
  Policies& theirs = child.policies;
  auto escalation = [&](const char* what) {
    return fail(MakeError(ErrorCode::kPolicyEscalation, what));
  };
  switch (field.kind) {
    case PolicyField::Kind::kCores:
      if (value & ~mine.cores) return escalation("cores");
      theirs.cores = value;
      break;
    case PolicyField::Kind::kMonApi:
      if (value > kAllApiCalls) {
        return fail(MakeError(ErrorCode::kInvalidArgument, "mon_api"));
      }
      if (value & ~uint64_t{mine.mon_api}) return escalation("mon_api");
      theirs.mon_api = static_cast<uint16_t>(value);
      break;
    case PolicyField::Kind::kUserCalls:
    case PolicyField::Kind::kReceiveAfterSeal: {
      if (value > 1) {
        return fail(MakeError(ErrorCode::kInvalidArgument, "flag"));
      }
      bool user = field.kind == PolicyField::Kind::kUserCalls;
      bool have = user ? mine.user_calls : mine.receive_after_seal;
      if (value && !have) return escalation(user ? "user_calls" : "receive");
      (user ? theirs.user_calls : theirs.receive_after_seal) = value != 0;
      break;
    }
    case PolicyField::Kind::kInterrupt: {
      if (field.vector < 0 || field.vector >= kNumVectors) {
        return fail(MakeError(ErrorCode::kInvalidArgument, "vector"));
      }
      InterruptPolicy policy = InterruptPolicy::Decode(value);
      if ((value & 0xff) > static_cast<uint64_t>(InterruptVisibility::kDeliver) ||
          (value >> 8) > kAllRegisters) {
        return fail(MakeError(ErrorCode::kInvalidArgument, "interrupt policy"));
      }
      if (policy.visibility == InterruptVisibility::kDeliver &&
          caller != td0_ &&
          mine.interrupts[field.vector].visibility !=
              InterruptVisibility::kDeliver) {
        return escalation("deliver");
      }
      theirs.interrupts[field.vector] = policy;
      break;
    }
  }
  FinishLog(std::move(entry), OkStatus());
  Changes changes;
  Commit(changes);
  return OkStatus();
}

Result<uint64_t> Engine::GetPolicy(DomainId caller, Handle child_handle,
                                   PolicyField field) {
  ScopedLock lock(*this);
  CAPMON_RETURN_IF_ERROR(CheckCaller(caller, ApiCall::kSetGet));
  DomainNode& me = domains_.at(caller);
  CAPMON_ASSIGN_OR_RETURN(DomainNode * child, ChildFromHandle(me, child_handle));
  const Policies& p = child->policies;
  switch (field.kind) {
    case PolicyField::Kind::kCores:
      return p.cores;
    case PolicyField::Kind::kMonApi:
      return uint64_t{p.mon_api};
    case PolicyField::Kind::kUserCalls:
      return uint64_t{p.user_calls};
    case PolicyField::Kind::kReceiveAfterSeal:
      return uint64_t{p.receive_after_seal};
    case PolicyField::Kind::kInterrupt:
      if (field.vector < 0 || field.vector >= kNumVectors) {
        return MakeError(ErrorCode::kInvalidArgument, "vector");
      }
      return p.interrupts[field.vector].Encode();
  }
  return MakeError(ErrorCode::kInvalidArgument);
}

Status Engine::Seal(DomainId caller, Handle child_handle) {
  ScopedLock lock(*this);
  LogEntry entry = BeginLog("seal", caller);
  auto fail = [&](Error err) -> Status {
    FinishLog(std::move(entry), err);
    return err;
  };
  if (Status st = CheckCaller(caller, ApiCall::kSeal); !st.ok()) {
    return fail(st.error());
  }
  DomainNode& me = domains_.at(caller);
  entry.Add("target", HandleName(me, child_handle));
  auto child_or = ChildFromHandle(me, child_handle);
  if (!child_or.ok()) return fail(child_or.error());
  DomainNode& child = **child_or;
  if (child.state != DomainState::kUnsealed) {
    return fail(MakeError(ErrorCode::kAlreadySealed));
  }
  if (caller != td0_) {
    for (int v = 0; v < kNumVectors; ++v) {
      if (child.policies.interrupts[v].visibility ==
              InterruptVisibility::kDeliver &&
          me.policies.interrupts[v].visibility !=
              InterruptVisibility::kDeliver) {
        return fail(MakeError(ErrorCode::kUndeliverableVector,
                              std::to_string(v)));
      }
    }
  }
  child.register_hash = HashRegisters(child.registers);
  child.context = child.registers;
  child.state = DomainState::kSealed;
  FinishLog(std::move(entry), OkStatus());
  Changes changes;
  Commit(changes);
  return OkStatus();
}

// ---------------------------------------------------------------------------
// Capability transfer and channels.

Status Engine::Send(DomainId caller, Handle cap_handle, Handle dest_handle,
                    AttributeRequest attributes) {
  ScopedLock lock(*this);
  LogEntry entry = BeginLog("send", caller);
  auto fail = [&](Error err) -> Status {
    FinishLog(std::move(entry), err);
    return err;
  };
  if (Status st = CheckCaller(caller, ApiCall::kSend); !st.ok()) {
    return fail(st.error());
  }
  DomainNode& me = domains_.at(caller);
  entry.Add("cap", HandleName(me, cap_handle));
  std::string dest_name = "h" + std::to_string(dest_handle);
  std::optional<std::string> via;
  if (auto dest_cap = ResolveHandle(caller, dest_handle);
      dest_cap && dest_cap->kind != Capability::Kind::kRegion) {
    dest_name = DomainName(dest_cap->domain);
    if (dest_cap->kind == Capability::Kind::kChannel) via = dest_cap->Name();
  }
  entry.Add("dest", dest_name);
  if (via) entry.Add("via", *via);
  entry.Add("attrs", attributes.ToString());

  auto cap_or = Lookup(me, cap_handle);
  if (!cap_or.ok()) return fail(cap_or.error());
  Capability cap = *cap_or;
  if (cap.kind == Capability::Kind::kDomain) {
    return fail(MakeError(ErrorCode::kUntransferableTd));
  }
  // The root has no parent to fall back to on revocation.
  if (cap.kind == Capability::Kind::kRegion && cap.region == regions_.root()) {
    return fail(MakeError(ErrorCode::kRootPinned));
  }
  auto dest_or = TargetFromHandle(me, dest_handle);
  if (!dest_or.ok()) return fail(dest_or.error());
  DomainNode& dest = **dest_or;
  if (dest.state == DomainState::kSealed && !dest.policies.receive_after_seal) {
    return fail(MakeError(ErrorCode::kReceiveDenied));
  }
  if (!attributes.empty() && dest.state != DomainState::kUnsealed) {
    return fail(MakeError(ErrorCode::kAttributesOnSealed));
  }
  if (!attributes.empty() && cap.kind != Capability::Kind::kRegion) {
    return fail(MakeError(ErrorCode::kInvalidArgument, "attributes on channel"));
  }

  Changes changes;
  std::function<void()> publish;
  if (cap.kind == Capability::Kind::kRegion) {
    const RegionNode* node = regions_.Find(cap.region);
    assert(node != nullptr);
    if (attributes.hash) {
      if (node->status != RegionStatus::kExclusive) {
        return fail(MakeError(ErrorCode::kHashOnAliased));
      }
      // The sender's access is dropped before hashing; nobody else may map it.
      if (RangeMapped(node->initial_range, cap.region)) {
        return fail(MakeError(ErrorCode::kStillAccessible,
                              ToString(node->initial_range)));
      }
    }
    RegionAttributes attrs;
    attrs.clean = attributes.clean;
    attrs.vital = attributes.vital;
    regions_.SetOwner(cap.region, dest.id);
    regions_.SetAttributes(cap.region, attrs);
    if (attributes.hash) {
      RegionId id = cap.region;
      PhysRange range = node->initial_range;
      publish = [this, id, range, attrs]() mutable {
        attrs.hash = platform_.HashRange(range);
        regions_.SetAttributes(id, attrs);
      };
    }
    changes.access_changed.insert(caller);
    changes.access_changed.insert(dest.id);
  }
  me.owned[cap_handle].reset();
  Insert(dest, cap);
  FinishLog(std::move(entry), OkStatus());
  Commit(changes, publish);
  return OkStatus();
}

Result<Handle> Engine::GetChan(DomainId caller, Handle source) {
  ScopedLock lock(*this);
  LogEntry entry = BeginLog("getchan", caller);
  if (Status st = CheckCaller(caller, ApiCall::kGetChan); !st.ok()) {
    FinishLog(std::move(entry), st);
    return st.error();
  }
  DomainNode& me = domains_.at(caller);
  std::string source_name = "h" + std::to_string(source);
  std::optional<std::string> via;
  if (auto cap = ResolveHandle(caller, source);
      cap && cap->kind != Capability::Kind::kRegion) {
    source_name = DomainName(cap->domain);
    if (cap->kind == Capability::Kind::kChannel) via = cap->Name();
  }
  entry.Add("source", source_name);
  if (via) entry.Add("via", *via);
  auto target = TargetFromHandle(me, source);
  if (!target.ok()) {
    FinishLog(std::move(entry), target.error());
    return target.error();
  }
  ChannelId ch{next_channel_++};
  (*target)->channels.push_back(ch);
  Handle h = Insert(me, Capability::ForChannel(ch, (*target)->id));
  entry.result = ChannelName(ch);
  FinishLog(std::move(entry), OkStatus());
  Changes changes;
  Commit(changes);
  return h;
}

Result<Handle> Engine::SelfChannel(DomainId caller) {
  ScopedLock lock(*this);
  LogEntry entry = BeginLog("selfchan", caller);
  if (Status st = CheckCaller(caller, ApiCall::kGetChan); !st.ok()) {
    FinishLog(std::move(entry), st);
    return st.error();
  }
  DomainNode& me = domains_.at(caller);
  ChannelId ch{next_channel_++};
  me.channels.push_back(ch);
  Handle h = Insert(me, Capability::ForChannel(ch, caller));
  entry.result = ChannelName(ch);
  FinishLog(std::move(entry), OkStatus());
  Changes changes;
  Commit(changes);
  return h;
}

Result<EnumerateResult> Engine::Enumerate(DomainId caller, uint64_t cursor) {
  ScopedLock lock(*this);
  CAPMON_RETURN_IF_ERROR(CheckCaller(caller, ApiCall::kEnumerate));
  const DomainNode& me = domains_.at(caller);
  if (cursor > me.owned.size()) return MakeError(ErrorCode::kBadCursor);
  for (uint64_t i = cursor; i < me.owned.size(); ++i) {
    if (!me.owned[i]) continue;
    const Capability& cap = *me.owned[i];
    CapabilityInfo info;
    info.handle = static_cast<Handle>(i);
    info.kind = cap.kind;
    if (cap.kind == Capability::Kind::kRegion) {
      const RegionNode& node = *regions_.Find(cap.region);
      info.status = node.status;
      info.range = node.initial_range;
      info.rights = node.rights;
      info.attributes = node.attributes;
      for (RegionId kid : node.children) {
        const RegionNode& k = *regions_.Find(kid);
        info.children.push_back({k.kind, k.initial_range, k.rights});
      }
    } else {
      info.domain_state = FindDomain(cap.domain)->state;
    }
    return EnumerateResult{std::move(info), i + 1};
  }
  return EnumerateResult{std::nullopt, me.owned.size()};
}

Result<DomainId> Engine::ResolveAttestSubject(DomainId caller,
                                              std::optional<Handle> subject) {
  ScopedLock lock(*this);
  CAPMON_RETURN_IF_ERROR(CheckCaller(caller, ApiCall::kAttest));
  if (!subject) return caller;
  DomainNode& me = domains_.at(caller);
  CAPMON_ASSIGN_OR_RETURN(DomainNode * target, TargetFromHandle(me, *subject));
  return target->id;
}

// ---------------------------------------------------------------------------
// Region derivation and revocation.

Result<Handle> Engine::Derive(DomainId caller, Handle region, PhysRange sub,
                              AccessRights rights, DerivationKind kind) {
  ScopedLock lock(*this);
  const bool carve = kind == DerivationKind::kCarve;
  LogEntry entry = BeginLog(carve ? "carve" : "alias", caller);
  auto fail = [&](Error err) -> Result<Handle> {
    FinishLog(std::move(entry), err);
    return err;
  };
  if (Status st = CheckCaller(caller, carve ? ApiCall::kCarve : ApiCall::kAlias);
      !st.ok()) {
    return fail(st.error());
  }
  DomainNode& me = domains_.at(caller);
  entry.Add("parent", HandleName(me, region))
      .Add("start", Hex(sub.start))
      .Add("end", Hex(sub.end))
      .Add("rights", rights.ToString());
  auto cap = Lookup(me, region);
  if (!cap.ok()) return fail(cap.error());
  if (cap->kind != Capability::Kind::kRegion) {
    return fail(MakeError(ErrorCode::kWrongKind));
  }
  auto derived = carve ? regions_.Carve(caller, cap->region, sub, rights)
                       : regions_.Alias(caller, cap->region, sub, rights);
  if (!derived.ok()) return fail(derived.error());
  Handle h = Insert(me, Capability::ForRegion(*derived));
  entry.result = RegionName(*derived);
  FinishLog(std::move(entry), OkStatus());
  Changes changes;
  changes.access_changed.insert(caller);
  Commit(changes);
  return h;
}

Result<Handle> Engine::Alias(DomainId caller, Handle region, PhysRange sub,
                             AccessRights rights) {
  return Derive(caller, region, sub, rights, DerivationKind::kAlias);
}

Result<Handle> Engine::Carve(DomainId caller, Handle region, PhysRange sub,
                             AccessRights rights) {
  return Derive(caller, region, sub, rights, DerivationKind::kCarve);
}

void Engine::DestroyRegion(RegionId id, Teardown& teardown) {
  const RegionNode* node = regions_.Find(id);
  if (node == nullptr) return;
  if (node->parent) {
    teardown.access_changed.insert(regions_.Find(*node->parent)->owner);
  }
  for (RegionNode& dead : regions_.DestroySubtree(id)) {
    DomainNode* owner = MutableDomain(dead.owner);
    if (owner == nullptr) continue;
    RemoveCapability(*owner, Capability::ForRegion(dead.id));
    if (dead.attributes.clean) teardown.clean.push_back(dead.initial_range);
    if (owner->live()) {
      teardown.access_changed.insert(owner->id);
      if (dead.attributes.vital) teardown.pending_domains.push_back(owner->id);
    }
  }
}

void Engine::RevokeDomainTree(DomainId id, Teardown& teardown) {
  DomainNode* root = MutableDomain(id);
  if (root == nullptr || !root->live() || id == td0_) return;

  std::vector<DomainId> subtree;
  std::vector<DomainId> stack = {id};
  while (!stack.empty()) {
    DomainId cur = stack.back();
    stack.pop_back();
    subtree.push_back(cur);
    const DomainNode& node = domains_.at(cur);
    for (auto it = node.children.rbegin(); it != node.children.rend(); ++it) {
      stack.push_back(*it);
    }
  }

  if (root->parent) {
    DomainNode& parent = domains_.at(*root->parent);
    auto& siblings = parent.children;
    siblings.erase(std::remove(siblings.begin(), siblings.end(), id),
                   siblings.end());
    RemoveCapability(parent, Capability::ForDomain(id));
  }
  for (DomainId d : subtree) {
    domains_.at(d).state = DomainState::kRevoked;
    teardown.revoked.insert(d);
    --live_domains_;
  }
  for (DomainId d : subtree) {
    DomainNode& node = domains_.at(d);
    std::vector<std::optional<Capability>> owned = std::move(node.owned);
    node.owned.clear();
    node.children.clear();
    for (const auto& slot : owned) {
      if (slot && slot->kind == Capability::Kind::kRegion) {
        DestroyRegion(slot->region, teardown);
      }
    }
  }
}

void Engine::RunTeardown(Teardown& teardown) {
  while (!teardown.pending_domains.empty()) {
    DomainId next = teardown.pending_domains.back();
    teardown.pending_domains.pop_back();
    RevokeDomainTree(next, teardown);
  }
  for (DomainId d : teardown.revoked) teardown.access_changed.erase(d);
}

void Engine::ApplyForcedTransfers(const Teardown& teardown, Changes& changes) {
  if (teardown.revoked.empty()) return;
  for (CoreState& cs : cores_) {
    std::vector<DomainId> path = cs.return_chain;
    path.push_back(cs.current);
    auto first = std::find_if(path.begin(), path.end(), [&](DomainId d) {
      return teardown.revoked.count(d) != 0;
    });
    if (first != path.end()) {
      size_t i = static_cast<size_t>(first - path.begin());
      assert(i > 0);
      DomainId revoked_top = path[i];
      cs.return_chain.resize(i - 1);
      cs.suspended.clear();
      cs.quantum_left = 0;
      Enter(cs, path[i - 1],
            Payload{Payload::Kind::kRevokedChild, revoked_top.value});
      changes.explicit_updates[cs.id].push_back(
          Update{Update::Kind::kDomainRevoked, revoked_top, 0});
      continue;
    }
    auto dead = std::find_if(
        cs.suspended.begin(), cs.suspended.end(),
        [&](const SuspendedFrame& f) { return teardown.revoked.count(f.domain); });
    cs.suspended.erase(dead, cs.suspended.end());
  }
}

Status Engine::RevokeRegion(DomainId caller, Handle parent,
                            size_t child_index) {
  ScopedLock lock(*this);
  LogEntry entry = BeginLog("revoke_region", caller);
  auto fail = [&](Error err) -> Status {
    FinishLog(std::move(entry), err);
    return err;
  };
  if (Status st = CheckCaller(caller, ApiCall::kRevoke); !st.ok()) {
    return fail(st.error());
  }
  DomainNode& me = domains_.at(caller);
  entry.Add("parent", HandleName(me, parent));
  auto cap = Lookup(me, parent);
  if (!cap.ok()) return fail(cap.error());
  if (cap->kind != Capability::Kind::kRegion) {
    return fail(MakeError(ErrorCode::kWrongKind));
  }
  const RegionNode* node = regions_.Find(cap->region);
  if (child_index >= node->children.size()) {
    entry.Add("child", "#" + std::to_string(child_index));
    return fail(MakeError(ErrorCode::kNotAChild));
  }
  RegionId child = node->children[child_index];
  entry.Add("child", RegionName(child));

  Teardown teardown;
  DestroyRegion(child, teardown);
  RunTeardown(teardown);
  Changes changes;
  ApplyForcedTransfers(teardown, changes);
  changes.access_changed = teardown.access_changed;
  FinishLog(std::move(entry), OkStatus());
  Commit(changes, [this, &teardown] {
    for (const PhysRange& range : teardown.clean) platform_.ZeroRange(range);
  });
  return OkStatus();
}

Status Engine::RevokeDomain(DomainId caller, Handle child_handle) {
  ScopedLock lock(*this);
  LogEntry entry = BeginLog("revoke_domain", caller);
  auto fail = [&](Error err) -> Status {
    FinishLog(std::move(entry), err);
    return err;
  };
  if (Status st = CheckCaller(caller, ApiCall::kRevoke); !st.ok()) {
    return fail(st.error());
  }
  DomainNode& me = domains_.at(caller);
  entry.Add("target", HandleName(me, child_handle));
  auto child = ChildFromHandle(me, child_handle);
  if (!child.ok()) return fail(child.error());

  Teardown teardown;
  teardown.pending_domains.push_back((*child)->id);
  RunTeardown(teardown);
  Changes changes;
  ApplyForcedTransfers(teardown, changes);
  changes.access_changed = teardown.access_changed;
  FinishLog(std::move(entry), OkStatus());
  Commit(changes, [this, &teardown] {
    for (const PhysRange& range : teardown.clean) platform_.ZeroRange(range);
  });
  return OkStatus();
}

Result<Digest> Engine::RegionDigest(const PhysRange& range) {
  ScopedLock lock(*this);
  if (!range.IsValid()) return MakeError(ErrorCode::kBadRange, ToString(range));
  if (!platform_.InMemoryBounds(range)) {
    return MakeError(ErrorCode::kOutOfMemoryBounds, ToString(range));
  }
  if (RangeMapped(range, std::nullopt)) {
    return MakeError(ErrorCode::kStillAccessible, ToString(range));
  }
  return platform_.HashRange(range);
}

// ---------------------------------------------------------------------------
// Control transfer.

Status Engine::Switch(DomainId caller, CoreId core,
                      std::optional<Handle> target) {
  ScopedLock lock(*this);
  LogEntry entry = BeginLog("switch", caller);
  auto fail = [&](Error err) -> Status {
    FinishLog(std::move(entry), err);
    return err;
  };
  entry.core = core;
  entry.Add("core", std::to_string(core));
  if (Status st = CheckCaller(caller, ApiCall::kSwitch); !st.ok()) {
    return fail(st.error());
  }
  DomainNode& me = domains_.at(caller);
  entry.Add("target", target ? HandleName(me, *target) : "none");
  if (core >= config_.core_count) {
    return fail(MakeError(ErrorCode::kInvalidArgument, "core"));
  }
  CoreState& cs = cores_[core];
  if (cs.current != caller) return fail(MakeError(ErrorCode::kNotRunning));

  if (target) {
    auto child_or = ChildFromHandle(me, *target);
    if (!child_or.ok()) return fail(child_or.error());
    DomainNode& child = **child_or;
    if (child.state != DomainState::kSealed) {
      return fail(MakeError(ErrorCode::kNotSealed));
    }
    if (((child.policies.cores >> core) & 1) == 0) {
      return fail(MakeError(ErrorCode::kCoreNotAllowed));
    }
    cs.return_chain.push_back(caller);
    if (!cs.suspended.empty() && cs.suspended.front().domain == child.id) {
      // Walk the interrupted path back down: NotReport domains are skipped,
      // the first Report domain observes, the preempted domain resumes.
      bool stopped = false;
      while (!cs.suspended.empty() && !stopped) {
        SuspendedFrame frame = cs.suspended.front();
        cs.suspended.erase(cs.suspended.begin());
        switch (frame.role) {
          case SuspendedFrame::Role::kSkip:
            cs.return_chain.push_back(frame.domain);
            break;
          case SuspendedFrame::Role::kObserve:
            Enter(cs, frame.domain,
                  Payload{Payload::Kind::kInterrupt,
                          static_cast<uint64_t>(frame.vector)});
            stopped = true;
            break;
          case SuspendedFrame::Role::kResume:
            Enter(cs, frame.domain, Payload{});
            stopped = true;
            break;
        }
      }
      if (!stopped) {
        // The tail of the path was revoked meanwhile.
        DomainId last = cs.return_chain.back();
        cs.return_chain.pop_back();
        Enter(cs, last, Payload{Payload::Kind::kRevokedChild, 0});
      }
    } else {
      cs.suspended.clear();
      Enter(cs, child.id, Payload{});
    }
    cs.quantum_left = config_.switch_quantum;
  } else {
    if (cs.return_chain.empty()) return fail(MakeError(ErrorCode::kNoParent));
    DomainId back = cs.return_chain.back();
    cs.return_chain.pop_back();
    cs.suspended.clear();
    cs.quantum_left = 0;
    Enter(cs, back, Payload{Payload::Kind::kReturned, caller.value});
  }
  entry.result = DomainName(cs.current);
  FinishLog(std::move(entry), OkStatus());
  Changes changes;
  changes.explicit_updates[core].push_back(
      Update{Update::Kind::kAccessChanged, cs.current, 0});
  Commit(changes);
  return OkStatus();
}

DomainId Engine::RouteLocked(CoreId core, int vector, Changes& changes) {
  CoreState& cs = cores_[core];
  auto policy = [&](DomainId d) {
    return domains_.at(d).policies.interrupts[vector].visibility;
  };
  if (policy(cs.current) == InterruptVisibility::kDeliver) {
    cs.payload = Payload{Payload::Kind::kInterrupt,
                         static_cast<uint64_t>(vector)};
    changes.explicit_updates[core].push_back(
        Update{Update::Kind::kInterruptRouted, cs.current, vector});
    return cs.current;
  }
  std::vector<DomainId> path = cs.return_chain;
  path.push_back(cs.current);
  size_t handler = path.size() - 1;
  while (handler > 0) {
    --handler;
    if (policy(path[handler]) == InterruptVisibility::kDeliver) break;
  }
  // td0 delivers every vector and always sits at the root of the path.
  assert(policy(path[handler]) == InterruptVisibility::kDeliver);

  std::vector<SuspendedFrame> frames;
  for (size_t j = handler + 1; j < path.size(); ++j) {
    SuspendedFrame::Role role = SuspendedFrame::Role::kSkip;
    if (j + 1 == path.size()) {
      role = SuspendedFrame::Role::kResume;
    } else if (policy(path[j]) == InterruptVisibility::kReport) {
      role = SuspendedFrame::Role::kObserve;
    }
    frames.push_back({path[j], vector, role});
  }
  frames.insert(frames.end(), cs.suspended.begin(), cs.suspended.end());
  cs.suspended = std::move(frames);
  cs.return_chain.resize(handler);
  cs.quantum_left = 0;
  Enter(cs, path[handler],
        Payload{Payload::Kind::kInterrupt, static_cast<uint64_t>(vector)});
  changes.explicit_updates[core].push_back(
      Update{Update::Kind::kInterruptRouted, path[handler], vector});
  return path[handler];
}

Result<DomainId> Engine::RouteInterrupt(CoreId core, int vector) {
  ScopedLock lock(*this);
  if (core >= config_.core_count) {
    return MakeError(ErrorCode::kInvalidArgument, "core");
  }
  if (vector < 0 || vector >= kNumVectors) {
    return MakeError(ErrorCode::kInvalidArgument, "vector");
  }
  LogEntry entry = BeginLog("irq", cores_[core].current);
  entry.core = core;
  entry.Add("core", std::to_string(core)).Add("vector", std::to_string(vector));
  Changes changes;
  DomainId handler = RouteLocked(core, vector, changes);
  entry.result = DomainName(handler);
  FinishLog(std::move(entry), OkStatus());
  Commit(changes);
  return handler;
}

void Engine::Tick(CoreId core) {
  {
    ScopedLock lock(*this);
    CoreState& cs = cores_.at(core);
    if (cs.quantum_left == 0 || --cs.quantum_left != 0) return;
  }
  (void)RouteInterrupt(core, kTimerVector);
}

// ---------------------------------------------------------------------------

Digest Engine::StateDigest() const {
  Sha256Builder b;
  b.UpdateU64(next_domain_).UpdateU64(next_channel_).UpdateU64(
      regions_.next_id());
  for (const auto& [id, d] : domains_) {
    b.UpdateU64(id.value).UpdateU64(static_cast<uint64_t>(d.state));
    b.UpdateU64(d.parent ? d.parent->value + 1 : 0);
    b.UpdateU64(d.children.size());
    for (DomainId c : d.children) b.UpdateU64(c.value);
    b.UpdateU64(d.channels.size());
    for (ChannelId c : d.channels) b.UpdateU64(c.value);
    b.UpdateU64(d.policies.cores).UpdateU64(d.policies.mon_api);
    b.UpdateU64(d.policies.user_calls).UpdateU64(d.policies.receive_after_seal);
    // Sparse: (index, value) for every non-zero entry, then a terminator.
    for (int v = 0; v < kNumVectors; ++v) {
      uint64_t p = d.policies.interrupts[v].Encode();
      if (p != 0) b.UpdateU64(v).UpdateU64(p);
    }
    b.UpdateU64(~uint64_t{0});
    for (const auto* files : {&d.registers, &d.context}) {
      for (size_t c = 0; c < files->size(); ++c) {
        for (int i = 0; i < kNumRegisters; ++i) {
          uint64_t r = (*files)[c][i];
          if (r != 0) b.UpdateU64(c * kNumRegisters + i).UpdateU64(r);
        }
      }
      b.UpdateU64(~uint64_t{0});
    }
    b.UpdateU64(d.owned.size());
    for (const auto& slot : d.owned) {
      if (!slot) {
        b.UpdateU64(~uint64_t{0});
        continue;
      }
      b.UpdateU64(static_cast<uint64_t>(slot->kind));
      b.UpdateU64(slot->region.value).UpdateU64(slot->domain.value);
      b.UpdateU64(slot->channel.value);
    }
    b.UpdateU64(d.register_hash.has_value());
    if (d.register_hash) b.Update(*d.register_hash);
  }
  for (const auto& [id, n] : regions_.nodes()) {
    b.UpdateU64(id.value).UpdateU64(n.owner.value);
    b.UpdateU64(n.initial_range.start).UpdateU64(n.initial_range.end);
    b.UpdateU64(n.rights.bits()).UpdateU64(static_cast<uint64_t>(n.status));
    b.UpdateU64(static_cast<uint64_t>(n.kind));
    b.UpdateU64(n.parent ? n.parent->value + 1 : 0);
    b.UpdateU64(n.attributes.clean).UpdateU64(n.attributes.vital);
    b.UpdateU64(n.attributes.hash.has_value());
    if (n.attributes.hash) b.Update(*n.attributes.hash);
    b.UpdateU64(n.children.size());
    for (RegionId c : n.children) b.UpdateU64(c.value);
  }
  for (const CoreState& cs : cores_) {
    b.UpdateU64(cs.current.value);
    b.UpdateU64(cs.return_chain.size());
    for (DomainId d : cs.return_chain) b.UpdateU64(d.value);
    b.UpdateU64(cs.suspended.size());
    for (const SuspendedFrame& f : cs.suspended) {
      b.UpdateU64(f.domain.value).UpdateU64(f.vector).UpdateU64(
          static_cast<uint64_t>(f.role));
    }
    b.UpdateU64(static_cast<uint64_t>(cs.payload.kind)).UpdateU64(
        cs.payload.value);
    b.UpdateU64(cs.quantum_left);
  }
  return b.Finish();
}

}  // namespace capmon
