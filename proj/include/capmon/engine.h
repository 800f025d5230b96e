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

// The capability engine: trust domains, their capability tables, the monitor
// API, call-return switching, interrupt routing and cascading revocation.
//
// All public operations are serialized through Platform::LockEngine(). State
// changes are pushed to affected cores through Platform::Commit().

#ifndef CAPMON_ENGINE_H_
#define CAPMON_ENGINE_H_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "capmon/base.h"
#include "capmon/crypto.h"
#include "capmon/op_log.h"
#include "capmon/platform.h"
#include "capmon/policies.h"
#include "capmon/region_tree.h"

namespace capmon {

// Domain-local capability index, analogous to a file descriptor.
using Handle = uint32_t;

struct Capability {
  enum class Kind : uint8_t { kRegion = 0, kDomain = 1, kChannel = 2 };
  Kind kind = Kind::kRegion;
  RegionId region;    // kRegion
  DomainId domain;    // kDomain and kChannel
  ChannelId channel;  // kChannel

  static Capability ForRegion(RegionId id) {
    return {Kind::kRegion, id, {}, {}};
  }
  static Capability ForDomain(DomainId id) {
    return {Kind::kDomain, {}, id, {}};
  }
  static Capability ForChannel(ChannelId ch, DomainId target) {
    return {Kind::kChannel, {}, target, ch};
  }
  // Global name of the referenced object ("r3", "td2", "ch1").
  std::string Name() const;
  bool operator==(const Capability&) const = default;
};

enum class DomainState : uint8_t { kUnsealed = 0, kSealed = 1, kRevoked = 2 };
std::string_view ToString(DomainState state);

struct DomainNode {
  DomainId id;
  DomainState state = DomainState::kUnsealed;
  std::optional<DomainId> parent;
  std::vector<DomainId> children;    // live Td children, creation order
  std::vector<ChannelId> channels;   // weak references minted to this domain
  Policies policies;
  std::vector<RegisterFile> registers;  // initial content, one per core
  std::vector<RegisterFile> context;    // saved execution state, one per core
  std::vector<std::optional<Capability>> owned;
  std::optional<Digest> register_hash;  // fixed at seal
  bool is_device = false;
  std::string device_name;
  int device_vector = -1;

  bool live() const { return state != DomainState::kRevoked; }
};

// One domain of an interrupted path waiting below the current domain.
struct SuspendedFrame {
  enum class Role : uint8_t { kSkip = 0, kObserve = 1, kResume = 2 };
  DomainId domain;
  int vector = 0;
  Role role = Role::kSkip;
  bool operator==(const SuspendedFrame&) const = default;
};

struct CoreState {
  CoreId id = 0;
  DomainId current;
  // Callers waiting for `current` to switch back, root first. Together with
  // `current` this is always a root-ward path in the domain tree.
  std::vector<DomainId> return_chain;
  // Path preempted by an interrupt handled by `current`, nearest first.
  std::vector<SuspendedFrame> suspended;
  Payload payload;  // delivered to `current` when it last gained control
  uint64_t quantum_left = 0;
};

struct AttributeRequest {
  bool hash = false;
  bool clean = false;
  bool vital = false;

  bool empty() const { return !hash && !clean && !vital; }
  // "-" when empty.
  std::string ToString() const;
  // Accepts "-", or any '|'-separated subset of HASH, CLEAN, VITAL.
  static std::optional<AttributeRequest> Parse(std::string_view text);
};

struct ChildInfo {
  DerivationKind kind;
  PhysRange range;
  AccessRights rights;
};

struct CapabilityInfo {
  Handle handle = 0;
  Capability::Kind kind = Capability::Kind::kRegion;
  // Regions.
  RegionStatus status = RegionStatus::kExclusive;
  PhysRange range;
  AccessRights rights;
  RegionAttributes attributes;
  std::vector<ChildInfo> children;
  // Domains and channels; an inert channel reports kRevoked.
  DomainState domain_state = DomainState::kUnsealed;
};

struct EnumerateResult {
  std::optional<CapabilityInfo> info;  // nullopt at end of iteration
  uint64_t next_cursor = 0;
};

struct DeviceSpec {
  std::string name;
  PhysRange mmio;
  int vector = 0;
  std::vector<PhysRange> dma;  // aliased from the root region
};

struct EngineConfig {
  uint32_t core_count = 1;
  PhysRange root;
  std::vector<DeviceSpec> devices;
  uint32_t max_domains = 1024;
  uint64_t switch_quantum = 0;  // simulated steps, 0 disables
};

class Engine {
 public:
  Engine(Platform& platform, EngineConfig config);
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  DomainId td0() const { return td0_; }
  RegionId root_region() const { return regions_.root(); }
  const EngineConfig& config() const { return config_; }

  // Monitor API. `caller` is the domain issuing the call.
  Result<Handle> Create(DomainId caller);
  Status SetRegister(DomainId caller, Handle child, CoreId core, int index,
                     uint64_t value);
  Result<uint64_t> GetRegister(DomainId caller, Handle child, CoreId core,
                               int index);
  Status SetPolicy(DomainId caller, Handle child, PolicyField field,
                   uint64_t value);
  Result<uint64_t> GetPolicy(DomainId caller, Handle child, PolicyField field);
  Status Send(DomainId caller, Handle cap, Handle dest,
              AttributeRequest attributes = {});
  Status Seal(DomainId caller, Handle child);
  // `target` absent returns to the caller's parent.
  Status Switch(DomainId caller, CoreId core, std::optional<Handle> target);
  Result<Handle> GetChan(DomainId caller, Handle source);
  // Channel to the caller itself (extension; gated by GETCHAN).
  Result<Handle> SelfChannel(DomainId caller);
  Status RevokeDomain(DomainId caller, Handle child);
  Result<EnumerateResult> Enumerate(DomainId caller, uint64_t cursor);
  Result<Handle> Alias(DomainId caller, Handle region, PhysRange sub,
                       AccessRights rights);
  Result<Handle> Carve(DomainId caller, Handle region, PhysRange sub,
                       AccessRights rights);
  // `child_index` is the position in the parent's children list, in the
  // order reported by Enumerate.
  Status RevokeRegion(DomainId caller, Handle parent, size_t child_index);

  // Gate and subject resolution for ATTEST. `subject` absent means the
  // caller itself. Does not log.
  Result<DomainId> ResolveAttestSubject(DomainId caller,
                                        std::optional<Handle> subject);

  // Platform-originated events.
  Result<DomainId> RouteInterrupt(CoreId core, int vector);
  // Advances the switch quantum on `core`; on expiry routes kTimerVector.
  void Tick(CoreId core);
  Result<Digest> RegionDigest(const PhysRange& range);

  // Introspection. Not locked: call only when no other core is issuing
  // operations, or under a ScopedLock.
  const DomainNode* FindDomain(DomainId id) const;
  const std::map<DomainId, DomainNode>& domains() const { return domains_; }
  const RegionTree& regions() const { return regions_; }
  const CoreState& core(CoreId id) const { return cores_.at(id); }
  uint32_t core_count() const { return config_.core_count; }
  EffectiveView DomainView(DomainId id) const;
  std::optional<Capability> ResolveHandle(DomainId owner, Handle handle) const;
  std::optional<Handle> FindHandle(DomainId owner, const Capability& cap) const;
  // Hash over every piece of engine state that operations may change.
  Digest StateDigest() const;
  uint64_t version() const { return version_; }

  const std::vector<LogEntry>& log() const { return log_; }
  void AppendLog(LogEntry entry);
  // Entry stamped with the current trace context.
  LogEntry NewLogEntry(std::string op, DomainId caller) const {
    return BeginLog(std::move(op), caller);
  }
  void set_logging(bool enabled) { logging_ = enabled; }
  void set_trace_context(uint64_t step, CoreId core) {
    trace_step_ = step;
    trace_core_ = core;
  }

  class ScopedLock {
   public:
    explicit ScopedLock(const Engine& engine) : platform_(engine.platform_) {
      platform_.LockEngine();
    }
    ~ScopedLock() { platform_.UnlockEngine(); }
    ScopedLock(const ScopedLock&) = delete;
    ScopedLock& operator=(const ScopedLock&) = delete;

   private:
    Platform& platform_;
  };

 private:
  struct Teardown {
    std::vector<PhysRange> clean;
    std::set<DomainId> access_changed;
    std::set<DomainId> revoked;
    std::vector<DomainId> pending_domains;
  };

  // Pending per-core updates for the current operation.
  struct Changes {
    std::set<DomainId> access_changed;
    std::map<CoreId, std::vector<Update>> explicit_updates;
  };

  Status CheckCaller(DomainId caller, ApiCall call) const;
  DomainNode* MutableDomain(DomainId id);
  Result<Capability> Lookup(const DomainNode& owner, Handle handle) const;
  Result<DomainNode*> ChildFromHandle(DomainNode& caller, Handle handle);
  Result<DomainNode*> TargetFromHandle(DomainNode& caller, Handle handle);
  Handle Insert(DomainNode& owner, const Capability& cap);
  void RemoveCapability(DomainNode& owner, const Capability& cap);

  Result<Handle> Derive(DomainId caller, Handle region, PhysRange sub,
                        AccessRights rights, DerivationKind kind);
  void DestroyRegion(RegionId id, Teardown& teardown);
  void RevokeDomainTree(DomainId id, Teardown& teardown);
  void RunTeardown(Teardown& teardown);
  void ApplyForcedTransfers(const Teardown& teardown, Changes& changes);
  bool RangeMapped(const PhysRange& range,
                   std::optional<RegionId> exclude) const;

  void Enter(CoreState& core, DomainId domain, Payload payload);
  DomainId RouteLocked(CoreId core, int vector, Changes& changes);
  void Commit(Changes& changes, const std::function<void()>& publish = {});

  EffectiveView RegionViewOrEmpty(RegionId id) const;
  std::string HandleName(const DomainNode& owner, Handle handle) const;
  LogEntry BeginLog(std::string op, DomainId caller) const;
  void FinishLog(LogEntry entry, const Status& status);
  void FinishLog(LogEntry entry, const Error& error);

  Platform& platform_;
  EngineConfig config_;
  RegionTree regions_;
  std::map<DomainId, DomainNode> domains_;
  std::vector<CoreState> cores_;
  DomainId td0_;
  uint64_t next_domain_ = 0;
  uint64_t next_channel_ = 0;
  uint64_t live_domains_ = 0;
  uint64_t version_ = 0;

  std::vector<LogEntry> log_;
  bool logging_ = true;
  uint64_t trace_step_ = 0;
  CoreId trace_core_ = 0;
};

}  // namespace capmon

#endif  // CAPMON_ENGINE_H_
