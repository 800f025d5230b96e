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

#include "capmon/fuzz.h"

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "capmon/oracle.h"

namespace capmon {
namespace {

class Fuzzer {
 public:
  Fuzzer(System& sys, uint64_t seed) : sys_(sys), engine_(*sys.engine), rng_(seed) {}

  // Performs one random operation. Returns its name and outcome.
  std::pair<std::string, Status> Step() {
    uint64_t roll = Uniform(100);
    if (roll < 40) return Derive();
    if (roll < 60) return Send();
    if (roll < 75) return Revoke();
    if (roll < 90) return Lifecycle();
    return Control();
  }

 private:
  uint64_t Uniform(uint64_t n) {
    return std::uniform_int_distribution<uint64_t>(0, n - 1)(rng_);
  }
  bool Chance(int percent) { return Uniform(100) < static_cast<uint64_t>(percent); }

  template <typename T>
  const T& Pick(const std::vector<T>& v) {
    return v[Uniform(v.size())];
  }

  // Mostly a domain allowed to make `call`, sometimes anyone (to hit the
  // gates).
  DomainId Caller(ApiCall call) {
    std::vector<DomainId> all;
    std::vector<DomainId> able;
    for (const auto& [id, d] : engine_.domains()) {
      all.push_back(id);
      if (d.live() && d.state == DomainState::kSealed && d.policies.Allows(call)) {
        able.push_back(id);
      }
    }
    if (Chance(3) || able.empty()) return Pick(all);
    // Keep td0 busy so the tree keeps growing.
    if (Chance(25)) return engine_.td0();
    return Pick(able);
  }

  std::vector<Handle> Handles(DomainId owner,
                              std::optional<Capability::Kind> kind) {
    std::vector<Handle> out;
    const DomainNode* d = engine_.FindDomain(owner);
    if (d == nullptr) return out;
    for (Handle h = 0; h < d->owned.size(); ++h) {
      if (d->owned[h] && (!kind || d->owned[h]->kind == *kind)) out.push_back(h);
    }
    return out;
  }

  Handle AnyHandle(DomainId owner, Capability::Kind kind,
                   bool unsealed_only = false) {
    std::vector<Handle> hs = Handles(owner, kind);
    if (unsealed_only) {
      std::vector<Handle> open;
      for (Handle h : hs) {
        auto cap = engine_.ResolveHandle(owner, h);
        if (engine_.FindDomain(cap->domain)->state == DomainState::kUnsealed) {
          open.push_back(h);
        }
      }
      if (!open.empty() && Chance(85)) hs = open;
    }
    if (hs.empty() || Chance(3)) return static_cast<Handle>(Uniform(8));
    return Pick(hs);
  }

  PhysRange RandomSubRange(DomainId owner, Handle region) {
    auto cap = engine_.ResolveHandle(owner, region);
    PhysRange base{sys_.config.RootRange()};
    if (cap && cap->kind == Capability::Kind::kRegion) {
      base = engine_.regions().Find(cap->region)->initial_range;
    }
    if (Chance(5)) {
      // Arbitrary, possibly misaligned or outside.
      uint64_t s = Uniform(base.end + 4 * kPageSize);
      return {s, s + Uniform(4 * kPageSize) + 1};
    }
    uint64_t pages = base.size() / kPageSize;
    uint64_t first = Uniform(pages);
    uint64_t count = 1 + Uniform(std::min<uint64_t>(pages - first, 4));
    return {base.start + first * kPageSize,
            base.start + (first + count) * kPageSize};
  }

  // Usually a non-empty subset of the region's rights.
  AccessRights RandomRights(DomainId owner, Handle region) {
    uint8_t bits = static_cast<uint8_t>(1 + Uniform(7));
    auto cap = engine_.ResolveHandle(owner, region);
    if (cap && cap->kind == Capability::Kind::kRegion && Chance(85)) {
      uint8_t have = engine_.regions().Find(cap->region)->rights.bits();
      bits &= have;
      if (bits == 0) bits = have;
    }
    return AccessRights(Chance(97) ? bits : 0);
  }

  std::pair<std::string, Status> Derive() {
    bool alias = Chance(50);
    DomainId caller = Caller(alias ? ApiCall::kAlias : ApiCall::kCarve);
    Handle region = AnyHandle(caller, Capability::Kind::kRegion);
    PhysRange sub = RandomSubRange(caller, region);
    AccessRights rights = RandomRights(caller, region);
    if (alias) {
      auto r = engine_.Alias(caller, region, sub, rights);
      return {"alias", r.ok() ? OkStatus() : Status(r.error())};
    }
    auto r = engine_.Carve(caller, region, sub, rights);
    return {"carve", r.ok() ? OkStatus() : Status(r.error())};
  }

  std::pair<std::string, Status> Send() {
    DomainId caller = Caller(ApiCall::kSend);
    std::vector<Handle> all = Handles(caller, std::nullopt);
    std::vector<Handle> regions = Handles(caller, Capability::Kind::kRegion);
    Handle cap = !regions.empty() && Chance(85) ? Pick(regions)
                 : all.empty()                  ? 0
                                                : Pick(all);
    std::vector<Handle> dests;
    for (Handle h : Handles(caller, std::nullopt)) {
      auto c = engine_.ResolveHandle(caller, h);
      if (c->kind == Capability::Kind::kRegion) continue;
      const DomainNode* d = engine_.FindDomain(c->domain);
      if (d->live() || Chance(10)) dests.push_back(h);
    }
    Handle dest = dests.empty() || Chance(3) ? static_cast<Handle>(Uniform(8))
                                             : Pick(dests);
    AttributeRequest attrs;
    if (Chance(40)) {
      attrs.clean = Chance(50);
      attrs.vital = Chance(40);
      attrs.hash = Chance(25);
    }
    return {"send", engine_.Send(caller, cap, dest, attrs)};
  }

  std::pair<std::string, Status> Revoke() {
    DomainId caller = Caller(ApiCall::kRevoke);
    if (Chance(70)) {
      Handle region = AnyHandle(caller, Capability::Kind::kRegion);
      size_t index = 0;
      auto cap = engine_.ResolveHandle(caller, region);
      if (cap && cap->kind == Capability::Kind::kRegion) {
        size_t n = engine_.regions().Find(cap->region)->children.size();
        index = Uniform(n + 1);
      }
      return {"revoke_region", engine_.RevokeRegion(caller, region, index)};
    }
    return {"revoke_domain",
            engine_.RevokeDomain(caller, AnyHandle(caller, Capability::Kind::kDomain))};
  }

  std::pair<std::string, Status> Lifecycle() {
    uint64_t roll = Uniform(100);
    ApiCall gate = roll < 25   ? ApiCall::kCreate
                   : roll < 60 ? ApiCall::kSetGet
                   : roll < 85 ? ApiCall::kSeal
                               : ApiCall::kGetChan;
    DomainId caller = Caller(gate);
    if (roll < 25) {
      auto r = engine_.Create(caller);
      return {"create", r.ok() ? OkStatus() : Status(r.error())};
    }
    Handle child = AnyHandle(caller, Capability::Kind::kDomain, roll < 85);
    if (roll < 60) {
      const DomainNode* me = engine_.FindDomain(caller);
      uint64_t value = 0;
      PolicyField field;
      switch (Uniform(4)) {
        case 0:
          field = PolicyField::MonApi();
          value = Chance(70) ? kAllApiCalls : Uniform(kAllApiCalls + 1);
          break;
        case 1:
          field = PolicyField::Cores();
          value = Chance(70) && me ? me->policies.cores : Uniform(16);
          break;
        case 2:
          field = PolicyField::ReceiveAfterSeal();
          value = Chance(80) ? 1 : 0;
          break;
        default:
          field = PolicyField::Interrupt(static_cast<int>(Uniform(40)));
          value = Uniform(3) | (Chance(20) ? Uniform(4) << 8 : 0);
          break;
      }
      return {"set_policy", engine_.SetPolicy(caller, child, field, value)};
    }
    if (roll < 85) return {"seal", engine_.Seal(caller, child)};
    std::vector<Handle> targets = Handles(caller, Capability::Kind::kDomain);
    Handle source = targets.empty() ? 0 : Pick(targets);
    auto r = engine_.GetChan(caller, source);
    return {"getchan", r.ok() ? OkStatus() : Status(r.error())};
  }

  std::pair<std::string, Status> Control() {
    CoreId core = static_cast<CoreId>(Uniform(engine_.core_count()));
    DomainId current = engine_.core(core).current;
    if (Chance(40)) {
      int vector = Chance(50) ? static_cast<int>(Uniform(40))
                              : static_cast<int>(Uniform(kNumVectors));
      auto r = engine_.RouteInterrupt(core, vector);
      return {"irq", r.ok() ? OkStatus() : Status(r.error())};
    }
    std::optional<Handle> target;
    const CoreState& cs = engine_.core(core);
    if (!cs.suspended.empty() && Chance(50)) {
      target = engine_.FindHandle(current,
                                  Capability::ForDomain(cs.suspended.front().domain));
    } else if (Chance(70)) {
      target = AnyHandle(current, Capability::Kind::kDomain);
    }
    return {"switch", engine_.Switch(current, core, target)};
  }

  System& sys_;
  Engine& engine_;
  std::mt19937_64 rng_;
};

}  // namespace

MachineConfig FuzzMachineConfig(uint64_t seed) {
  MachineConfig config;
  config.memory = 65 * kPageSize;
  config.cores = 4;
  config.monitor_reserved = {64 * kPageSize, 65 * kPageSize};
  config.seed = seed;
  config.max_domains = 40;
  return config;
}

FuzzResult RunFuzz(const FuzzOptions& options) {
  FuzzResult result;
  auto booted = Boot(FuzzMachineConfig(options.seed));
  if (!booted.ok()) {
    result.failures.push_back(booted.error().ToString());
    return result;
  }
  System& sys = *booted;
  Engine& engine = *sys.engine;
  Fuzzer fuzzer(sys, options.seed);
  Oracle oracle;
  size_t applied = 0;
  auto catch_up = [&]() -> Status {
    const auto& log = engine.log();
    for (; applied < log.size(); ++applied) {
      CAPMON_RETURN_IF_ERROR(oracle.Apply(log[applied]));
    }
    return OkStatus();
  };
  auto fail = [&](uint64_t i, const std::string& what) {
    result.failures.push_back("seed " + std::to_string(options.seed) + " op " +
                              std::to_string(i) + ": " + what);
  };
  if (Status st = catch_up(); !st.ok()) {
    fail(0, st.error().ToString());
    return result;
  }

  for (uint64_t i = 0; i < options.operations; ++i) {
    engine.set_trace_context(i + 1, 0);
    Digest before = engine.StateDigest();
    auto [name, status] = fuzzer.Step();
    ++result.operations;
    ++result.per_op[name];
    if (status.ok()) {
      ++result.accepted;
    } else {
      ++result.rejected;
      ++result.per_error[name + " " + std::string(ErrorName(status.code()))];
      if (engine.StateDigest() != before) {
        fail(i, name + " rejected with " + status.error().ToString() +
                    " but changed state");
      }
    }
    if (Status st = catch_up(); !st.ok()) fail(i, st.error().ToString());
    if (options.check_every_op || i + 1 == options.operations) {
      ++result.oracle_checks;
      for (const std::string& d : oracle.Diff(engine)) fail(i, name + ": " + d);
    }
    if (options.stop_on_failure && !result.failures.empty()) break;
  }
  return result;
}

}  // namespace capmon
