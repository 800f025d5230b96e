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

// Register-level monitor call interface.
//
// The call number is in r0 and arguments in r1..r6. On return r0 holds 0 or
// the error code, and r1..r4 hold results. A handle argument of kNoHandle
// selects "self" (ATTEST, GETCHAN) or "parent" (SWITCH).
//
//   CREATE    0                                   -> r1 handle
//   SET       1  r1 child r2 what r3 a r4 b r5 value
//   GET       2  r1 child r2 what r3 a r4 b       -> r1 value
//               what=0: register, a=core b=index
//               what=1: policy,   a=field b=vector
//   SEND      3  r1 cap r2 dest r3 attrs (1 HASH, 2 CLEAN, 4 VITAL)
//   SEAL      4  r1 child
//   ATTEST    5  r1 subject r2 offset r3 nonce(0 = none)
//                                                 -> r1 length, r2 r3 bytes
//   ENUMERATE 6  r1 cursor                        -> r1 next (kNoHandle: end)
//                r2 handle | kind<<32 | status<<40 | rights<<48 | attrs<<56
//                r3 start r4 end
//   SWITCH    7  r1 child
//   ALIAS     8  r1 region r2 start r3 end r4 rights -> r1 handle
//   CARVE     9  r1 region r2 start r3 end r4 rights -> r1 handle
//   REVOKE   10  r1 handle r2 child index (regions only)
//   GETCHAN  11  r1 source                        -> r1 handle

#ifndef CAPMON_ABI_H_
#define CAPMON_ABI_H_

#include <cstdint>

#include "capmon/machine.h"
#include "capmon/policies.h"

namespace capmon {

enum class AbiCall : uint64_t {
  kCreate = 0,
  kSet = 1,
  kGet = 2,
  kSend = 3,
  kSeal = 4,
  kAttest = 5,
  kEnumerate = 6,
  kSwitch = 7,
  kAlias = 8,
  kCarve = 9,
  kRevoke = 10,
  kGetChan = 11,
};

inline constexpr int kNumAbiCalls = 12;
inline constexpr uint64_t kNoHandle = ~uint64_t{0};
inline constexpr uint64_t kAttestChunk = 16;

// The policy bit gating each call.
ApiCall GateOf(AbiCall call);

// Executes one monitor call issued by `caller` on `core`. `user_mode` marks
// calls from user space, refused unless the caller allows user calls.
RegisterFile MonitorCall(System& system, DomainId caller, CoreId core,
                         const RegisterFile& regs, bool user_mode = false);

}  // namespace capmon

#endif  // CAPMON_ABI_H_
