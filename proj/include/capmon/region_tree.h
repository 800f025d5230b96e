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

// Memory-region capabilities arranged as a derivation tree.
//
// Every region is derived from its parent either by alias (the parent keeps
// access, the shared sub-range is reported as aliased) or by carve (the parent
// loses access to the sub-range). A node's effective view is computed from its
// own record and its direct children only; nothing above or below them is
// consulted.

#ifndef CAPMON_REGION_TREE_H_
#define CAPMON_REGION_TREE_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "capmon/base.h"
#include "capmon/crypto.h"

namespace capmon {

// Half-open physical range [start, end).
struct PhysRange {
  uint64_t start = 0;
  uint64_t end = 0;

  // Validates non-emptiness and page alignment.
  static Result<PhysRange> Make(uint64_t start, uint64_t end);

  uint64_t size() const { return end - start; }
  bool Contains(uint64_t addr) const { return addr >= start && addr < end; }
  bool Covers(const PhysRange& other) const {
    return other.start >= start && other.end <= end;
  }
  bool Overlaps(const PhysRange& other) const {
    return other.start < end && start < other.end;
  }
  bool IsValid() const {
    return start < end && start % kPageSize == 0 && end % kPageSize == 0;
  }
  auto operator<=>(const PhysRange&) const = default;
};

std::string ToString(const PhysRange& range);

class AccessRights {
 public:
  static constexpr uint8_t kRead = 1;
  static constexpr uint8_t kWrite = 2;
  static constexpr uint8_t kExecute = 4;
  static constexpr uint8_t kAll = kRead | kWrite | kExecute;

  constexpr AccessRights() = default;
  constexpr explicit AccessRights(uint8_t bits) : bits_(bits & kAll) {}
  static constexpr AccessRights All() { return AccessRights(kAll); }

  // Accepts "RWX", "RW_", "R", "rw" etc.
  static std::optional<AccessRights> Parse(std::string_view text);

  constexpr uint8_t bits() const { return bits_; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr bool Includes(AccessRights other) const {
    return (other.bits_ & ~bits_) == 0;
  }
  constexpr bool Allows(uint8_t required) const {
    return (bits_ & required) == required;
  }
  constexpr AccessRights operator|(AccessRights o) const {
    return AccessRights(bits_ | o.bits_);
  }
  // "RWX" with '_' for missing rights.
  std::string ToString() const;

  auto operator<=>(const AccessRights&) const = default;

 private:
  uint8_t bits_ = 0;
};

enum class RegionStatus : uint8_t { kExclusive = 0, kAliased = 1 };
enum class DerivationKind : uint8_t { kRoot = 0, kAlias = 1, kCarve = 2 };

std::string_view ToString(RegionStatus status);
std::string_view ToString(DerivationKind kind);

// Attributes bound to a region by the send that transferred it.
struct RegionAttributes {
  std::optional<Digest> hash;
  bool clean = false;
  bool vital = false;

  bool empty() const { return !hash && !clean && !vital; }
  // "HASH|CLEAN|VITAL" subset, empty string when none.
  std::string FlagString() const;
  bool operator==(const RegionAttributes&) const = default;
};

struct RegionNode {
  RegionId id;
  DomainId owner;
  PhysRange initial_range;
  AccessRights rights;
  RegionStatus status = RegionStatus::kExclusive;
  RegionAttributes attributes;
  DerivationKind kind = DerivationKind::kRoot;
  std::optional<RegionId> parent;
  std::vector<RegionId> children;
};

struct ViewSegment {
  PhysRange range;
  AccessRights rights;
  RegionStatus status;
  bool operator==(const ViewSegment&) const = default;
};

// Sorted, disjoint, maximally merged segments.
using EffectiveView = std::vector<ViewSegment>;

std::string ToString(const EffectiveView& view);

// Merges adjacent segments that agree on rights and status.
EffectiveView NormalizeView(EffectiveView view);

// True when every byte of `range` lies inside some segment of `view`.
bool ViewCovers(const EffectiveView& view, const PhysRange& range);
// Segment containing `addr`, if any.
const ViewSegment* ViewLookup(const EffectiveView& view, uint64_t addr);

// Union of several views: rights are or-ed, a byte is exclusive when any
// contributing view holds it exclusively.
EffectiveView UnionViews(const std::vector<EffectiveView>& views);

class RegionTree {
 public:
  RegionTree() = default;

  // Creates the single root node. Must be called exactly once.
  RegionId CreateRoot(DomainId owner, PhysRange range,
                      AccessRights rights = AccessRights::All());

  Result<RegionId> Alias(DomainId caller, RegionId parent, PhysRange sub,
                         AccessRights rights);
  Result<RegionId> Carve(DomainId caller, RegionId parent, PhysRange sub,
                         AccessRights rights);

  // Destroys `child` and its subtree. Returns the destroyed nodes in
  // bottom-up order (every node precedes its parent).
  Result<std::vector<RegionNode>> Revoke(DomainId caller, RegionId parent,
                                         RegionId child);

  // Same as Revoke without the ownership check. Used when the owner itself is
  // being torn down. Returns an empty list for unknown ids.
  std::vector<RegionNode> DestroySubtree(RegionId node);

  Result<EffectiveView> View(RegionId node) const;

  const RegionNode* Find(RegionId id) const;
  void SetOwner(RegionId id, DomainId owner);
  void SetAttributes(RegionId id, RegionAttributes attributes);

  RegionId root() const { return root_; }
  const std::map<RegionId, RegionNode>& nodes() const { return nodes_; }
  uint64_t next_id() const { return next_id_; }

 private:
  Result<RegionId> Derive(DomainId caller, RegionId parent, PhysRange sub,
                          AccessRights rights, DerivationKind kind);
  EffectiveView ComputeView(const RegionNode& node) const;

  std::map<RegionId, RegionNode> nodes_;
  RegionId root_;
  uint64_t next_id_ = 0;
};

}  // namespace capmon

#endif  // CAPMON_REGION_TREE_H_
