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

#include "capmon/abi.h"

#include <optional>
#include <vector>

namespace capmon {
namespace {

std::optional<Handle> OptionalHandle(uint64_t value) {
  if (value == kNoHandle) return std::nullopt;
  return static_cast<Handle>(value);
}

Result<PolicyField> FieldFrom(uint64_t kind, uint64_t vector) {
  if (kind > static_cast<uint64_t>(PolicyField::Kind::kInterrupt)) {
    return MakeError(ErrorCode::kInvalidArgument, "policy field");
  }
  return PolicyField{static_cast<PolicyField::Kind>(kind),
                     static_cast<int>(vector)};
}

uint64_t Pack(const CapabilityInfo& info) {
  uint64_t attrs = (info.attributes.hash ? 1 : 0) |
                   (info.attributes.clean ? 2 : 0) |
                   (info.attributes.vital ? 4 : 0);
  uint64_t status = info.kind == Capability::Kind::kRegion
                        ? static_cast<uint64_t>(info.status)
                        : static_cast<uint64_t>(info.domain_state);
  return uint64_t{info.handle} | static_cast<uint64_t>(info.kind) << 32 |
         status << 40 | uint64_t{info.rights.bits()} << 48 | attrs << 56;
}

uint64_t LoadLe(const std::vector<uint8_t>& bytes, uint64_t offset) {
  uint64_t v = 0;
  for (uint64_t i = 0; i < 8 && offset + i < bytes.size(); ++i) {
    v |= uint64_t{bytes[offset + i]} << (8 * i);
  }
  return v;
}

}  // namespace

ApiCall GateOf(AbiCall call) {
  switch (call) {
    case AbiCall::kCreate:
      return ApiCall::kCreate;
    case AbiCall::kSet:
    case AbiCall::kGet:
      return ApiCall::kSetGet;
    case AbiCall::kSend:
      return ApiCall::kSend;
    case AbiCall::kSeal:
      return ApiCall::kSeal;
    case AbiCall::kAttest:
      return ApiCall::kAttest;
    case AbiCall::kEnumerate:
      return ApiCall::kEnumerate;
    case AbiCall::kSwitch:
      return ApiCall::kSwitch;
    case AbiCall::kAlias:
      return ApiCall::kAlias;
    case AbiCall::kCarve:
      return ApiCall::kCarve;
    case AbiCall::kRevoke:
      return ApiCall::kRevoke;
    case AbiCall::kGetChan:
      return ApiCall::kGetChan;
  }
  return ApiCall::kCreate;
}

RegisterFile MonitorCall(System& system, DomainId caller, CoreId core,
                         const RegisterFile& regs, bool user_mode) {
  Engine& engine = *system.engine;
  RegisterFile out = regs;
  auto fail = [&](const Error& e) {
    out[0] = static_cast<uint64_t>(e.code);
    return out;
  };
  auto done = [&](uint64_t r1 = 0, uint64_t r2 = 0, uint64_t r3 = 0,
                  uint64_t r4 = 0) {
    out[0] = 0;
    out[1] = r1;
    out[2] = r2;
    out[3] = r3;
    out[4] = r4;
    return out;
  };
  auto status = [&](const Status& st) { return st.ok() ? done() : fail(st.error()); };

  if (regs[0] >= kNumAbiCalls) {
    return fail(MakeError(ErrorCode::kInvalidArgument, "call"));
  }
  if (user_mode) {
    const DomainNode* d = engine.FindDomain(caller);
    if (d == nullptr || !d->policies.user_calls) {
      return fail(MakeError(ErrorCode::kPolicyDenied, "user calls"));
    }
  }
  const auto call = static_cast<AbiCall>(regs[0]);
  const auto h = [&](int i) { return static_cast<Handle>(regs[i]); };

  switch (call) {
    case AbiCall::kCreate: {
      auto r = engine.Create(caller);
      return r.ok() ? done(*r) : fail(r.error());
    }
    case AbiCall::kSet: {
      if (regs[2] == 0) {
        return status(engine.SetRegister(caller, h(1),
                                         static_cast<CoreId>(regs[3]),
                                         static_cast<int>(regs[4]), regs[5]));
      }
      auto field = FieldFrom(regs[3], regs[4]);
      if (!field.ok()) return fail(field.error());
      return status(engine.SetPolicy(caller, h(1), *field, regs[5]));
    }
    case AbiCall::kGet: {
      Result<uint64_t> r = MakeError(ErrorCode::kInvalidArgument);
      if (regs[2] == 0) {
        r = engine.GetRegister(caller, h(1), static_cast<CoreId>(regs[3]),
                               static_cast<int>(regs[4]));
      } else {
        auto field = FieldFrom(regs[3], regs[4]);
        r = field.ok() ? engine.GetPolicy(caller, h(1), *field)
                       : Result<uint64_t>(field.error());
      }
      return r.ok() ? done(*r) : fail(r.error());
    }
    case AbiCall::kSend: {
      if (regs[3] > 7) {
        return fail(MakeError(ErrorCode::kInvalidArgument, "attributes"));
      }
      AttributeRequest attrs{(regs[3] & 1) != 0, (regs[3] & 2) != 0,
                             (regs[3] & 4) != 0};
      return status(engine.Send(caller, h(1), h(2), attrs));
    }
    case AbiCall::kSeal:
      return status(engine.Seal(caller, h(1)));
    case AbiCall::kAttest: {
      std::optional<std::vector<uint8_t>> nonce;
      if (regs[3] != 0) {
        nonce.emplace(8);
        for (int i = 0; i < 8; ++i) (*nonce)[i] = regs[3] >> (8 * i);
      }
      auto report = Attest(engine, *system.key, system.measurement, caller,
                           OptionalHandle(regs[1]), nonce);
      if (!report.ok()) return fail(report.error());
      std::vector<uint8_t> bytes = Serialize(*report);
      uint64_t offset = regs[2];
      if (offset > bytes.size()) {
        return fail(MakeError(ErrorCode::kInvalidArgument, "offset"));
      }
      return done(bytes.size(), LoadLe(bytes, offset), LoadLe(bytes, offset + 8));
    }
    case AbiCall::kEnumerate: {
      auto r = engine.Enumerate(caller, regs[1]);
      if (!r.ok()) return fail(r.error());
      if (!r->info) return done(kNoHandle);
      return done(r->next_cursor, Pack(*r->info), r->info->range.start,
                  r->info->range.end);
    }
    case AbiCall::kSwitch: {
      Status st = engine.Switch(caller, core, OptionalHandle(regs[1]));
      if (!st.ok()) return fail(st.error());
      // The caller's registers are saved as they were.
      out[0] = 0;
      return out;
    }
    case AbiCall::kAlias:
    case AbiCall::kCarve: {
      auto rights = AccessRights(static_cast<uint8_t>(regs[4]));
      if (regs[4] > AccessRights::kAll) {
        return fail(MakeError(ErrorCode::kInvalidArgument, "rights"));
      }
      PhysRange range{regs[2], regs[3]};
      auto r = call == AbiCall::kAlias
                   ? engine.Alias(caller, h(1), range, rights)
                   : engine.Carve(caller, h(1), range, rights);
      return r.ok() ? done(*r) : fail(r.error());
    }
    case AbiCall::kRevoke: {
      auto cap = engine.ResolveHandle(caller, h(1));
      if (cap && cap->kind == Capability::Kind::kRegion) {
        return status(engine.RevokeRegion(caller, h(1), regs[2]));
      }
      return status(engine.RevokeDomain(caller, h(1)));
    }
    case AbiCall::kGetChan: {
      auto r = regs[1] == kNoHandle ? engine.SelfChannel(caller)
                                    : engine.GetChan(caller, h(1));
      return r.ok() ? done(*r) : fail(r.error());
    }
  }
  return fail(MakeError(ErrorCode::kInvalidArgument, "call"));
}

}  // namespace capmon
