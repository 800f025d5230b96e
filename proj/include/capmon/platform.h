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

// The interface a backend supplies to the capability engine.

#ifndef CAPMON_PLATFORM_H_
#define CAPMON_PLATFORM_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "capmon/base.h"
#include "capmon/crypto.h"
#include "capmon/region_tree.h"

namespace capmon {

// Per-core state-change notice.
struct Update {
  enum class Kind : uint8_t {
    kAccessChanged = 0,
    kDomainRevoked = 1,
    kInterruptRouted = 2,
  };
  Kind kind = Kind::kAccessChanged;
  DomainId domain;
  int vector = 0;  // kInterruptRouted only

  std::string ToString() const;
  bool operator==(const Update&) const = default;
};

// Value returned to a domain when it regains control on a core. Carried in
// registers 1 and 2 of the resumed domain.
struct Payload {
  enum class Kind : uint8_t {
    kNone = 0,
    kReturned = 1,
    kInterrupt = 2,
    kRevokedChild = 3,
  };
  Kind kind = Kind::kNone;
  uint64_t value = 0;

  std::string ToString() const;
  bool operator==(const Payload&) const = default;
};

// What an affected core must apply once it is released from the second
// barrier.
struct CoreCommit {
  CoreId core = 0;
  std::vector<Update> updates;
  DomainId current;
  EffectiveView view;  // current domain's view after the operation
};

class Platform {
 public:
  virtual ~Platform() = default;

  // Monitor-side memory primitives. Only invoked while no domain maps the
  // range.
  virtual void ZeroRange(const PhysRange& range) = 0;
  virtual Digest HashRange(const PhysRange& range) = 0;
  virtual bool InMemoryBounds(const PhysRange& range) const = 0;

  // Two-barrier commit. Cores listed in `commits` are preempted and parked;
  // once all have arrived, `publish` runs, then the cores are released and
  // consume their updates before this call returns. Called exactly once per
  // state-changing engine operation, possibly with no commits.
  virtual void Commit(std::vector<CoreCommit> commits,
                      const std::function<void()>& publish) = 0;

  // Serialization of engine operations.
  virtual void LockEngine() = 0;
  virtual void UnlockEngine() = 0;
};

}  // namespace capmon

#endif  // CAPMON_PLATFORM_H_
