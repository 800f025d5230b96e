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

#include "capmon/region_tree.h"

#include <algorithm>
#include <cassert>
#include <cctype>
#include <cstdio>
#include <string>
#include <vector>

namespace capmon {

Result<PhysRange> PhysRange::Make(uint64_t start, uint64_t end) {
  PhysRange range{start, end};
  if (!range.IsValid()) {
    return MakeError(ErrorCode::kBadRange, ToString(range));
  }
  return range;
}

std::string ToString(const PhysRange& range) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "[0x%llx,0x%llx)",
                static_cast<unsigned long long>(range.start),
                static_cast<unsigned long long>(range.end));
  return buf;
}

std::optional<AccessRights> AccessRights::Parse(std::string_view text) {
  uint8_t bits = 0;
  for (char c : text) {
    switch (std::toupper(static_cast<unsigned char>(c))) {
      case 'R':
        bits |= kRead;
        break;
      case 'W':
        bits |= kWrite;
        break;
      case 'X':
        bits |= kExecute;
        break;
      case '_':
      case '-':
        break;
      default:
        return std::nullopt;
    }
  }
  return AccessRights(bits);
}

std::string AccessRights::ToString() const {
  std::string out = "___";
  if (bits_ & kRead) out[0] = 'R';
  if (bits_ & kWrite) out[1] = 'W';
  if (bits_ & kExecute) out[2] = 'X';
  return out;
}

std::string_view ToString(RegionStatus status) {
  return status == RegionStatus::kExclusive ? "exclusive" : "aliased";
}

std::string_view ToString(DerivationKind kind) {
  switch (kind) {
    case DerivationKind::kRoot:
      return "root";
    case DerivationKind::kAlias:
      return "alias";
    case DerivationKind::kCarve:
      return "carve";
  }
  return "?";
}

std::string RegionAttributes::FlagString() const {
  std::string out;
  auto add = [&out](const char* flag) {
    if (!out.empty()) out += '|';
    out += flag;
  };
  if (hash) add("HASH");
  if (clean) add("CLEAN");
  if (vital) add("VITAL");
  return out;
}

std::string ToString(const EffectiveView& view) {
  std::string out;
  for (const ViewSegment& seg : view) {
    if (!out.empty()) out += ", ";
    out += std::string(ToString(seg.status)) + " " + ToString(seg.range) +
           " " + seg.rights.ToString();
  }
  return out.empty() ? "(empty)" : out;
}

EffectiveView NormalizeView(EffectiveView view) {
  std::sort(view.begin(), view.end(),
            [](const ViewSegment& a, const ViewSegment& b) {
              return a.range.start < b.range.start;
            });
  EffectiveView out;
  for (const ViewSegment& seg : view) {
    if (seg.range.start >= seg.range.end) continue;
    if (!out.empty() && out.back().range.end == seg.range.start &&
        out.back().rights == seg.rights && out.back().status == seg.status) {
      out.back().range.end = seg.range.end;
    } else {
      out.push_back(seg);
    }
  }
  return out;
}

bool ViewCovers(const EffectiveView& view, const PhysRange& range) {
  uint64_t cursor = range.start;
  for (const ViewSegment& seg : view) {
    if (seg.range.end <= cursor) continue;
    if (seg.range.start > cursor) return false;
    cursor = seg.range.end;
    if (cursor >= range.end) return true;
  }
  return cursor >= range.end;
}

const ViewSegment* ViewLookup(const EffectiveView& view, uint64_t addr) {
  auto it = std::upper_bound(
      view.begin(), view.end(), addr,
      [](uint64_t a, const ViewSegment& s) { return a < s.range.start; });
  if (it == view.begin()) return nullptr;
  --it;
  return it->range.Contains(addr) ? &*it : nullptr;
}

EffectiveView UnionViews(const std::vector<EffectiveView>& views) {
  std::vector<uint64_t> points;
  std::vector<const ViewSegment*> segments;
  for (const EffectiveView& view : views) {
    for (const ViewSegment& seg : view) {
      points.push_back(seg.range.start);
      points.push_back(seg.range.end);
      segments.push_back(&seg);
    }
  }
  if (segments.empty()) return {};
  if (views.size() == 1) return views.front();
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
  std::sort(segments.begin(), segments.end(),
            [](const ViewSegment* a, const ViewSegment* b) {
              return a->range.start < b->range.start;
            });
  EffectiveView out;
  for (size_t i = 0; i + 1 < points.size(); ++i) {
    PhysRange piece{points[i], points[i + 1]};
    bool any = false;
    uint8_t rights = 0;
    bool exclusive = false;
    for (const ViewSegment* seg : segments) {
      if (seg->range.start >= piece.end) break;
      if (!seg->range.Covers(piece)) continue;
      any = true;
      rights |= seg->rights.bits();
      exclusive |= seg->status == RegionStatus::kExclusive;
    }
    if (any) {
      out.push_back({piece, AccessRights(rights),
                     exclusive ? RegionStatus::kExclusive
                               : RegionStatus::kAliased});
    }
  }
  return NormalizeView(std::move(out));
}

RegionId RegionTree::CreateRoot(DomainId owner, PhysRange range,
                                AccessRights rights) {
  assert(nodes_.empty());
  RegionNode node;
  node.id = RegionId{next_id_++};
  node.owner = owner;
  node.initial_range = range;
  node.rights = rights;
  node.status = RegionStatus::kExclusive;
  node.kind = DerivationKind::kRoot;
  root_ = node.id;
  nodes_.emplace(node.id, std::move(node));
  return root_;
}

const RegionNode* RegionTree::Find(RegionId id) const {
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

void RegionTree::SetOwner(RegionId id, DomainId owner) {
  nodes_.at(id).owner = owner;
}

void RegionTree::SetAttributes(RegionId id, RegionAttributes attributes) {
  nodes_.at(id).attributes = std::move(attributes);
}

EffectiveView RegionTree::ComputeView(const RegionNode& node) const {
  const PhysRange& base = node.initial_range;
  std::vector<uint64_t> points = {base.start, base.end};
  std::vector<const RegionNode*> kids;
  kids.reserve(node.children.size());
  for (RegionId id : node.children) {
    const RegionNode& kid = nodes_.at(id);
    kids.push_back(&kid);
    points.push_back(std::clamp(kid.initial_range.start, base.start, base.end));
    points.push_back(std::clamp(kid.initial_range.end, base.start, base.end));
  }
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());

  EffectiveView view;
  for (size_t i = 0; i + 1 < points.size(); ++i) {
    PhysRange piece{points[i], points[i + 1]};
    bool carved = false;
    bool aliased = false;
    for (const RegionNode* kid : kids) {
      if (!kid->initial_range.Covers(piece)) continue;
      if (kid->kind == DerivationKind::kCarve) carved = true;
      if (kid->kind == DerivationKind::kAlias) aliased = true;
    }
    if (carved) continue;
    view.push_back({piece, node.rights,
                    aliased ? RegionStatus::kAliased : node.status});
  }
  return NormalizeView(std::move(view));
}

Result<EffectiveView> RegionTree::View(RegionId id) const {
  const RegionNode* node = Find(id);
  if (node == nullptr) return MakeError(ErrorCode::kUnknownRegion);
  return ComputeView(*node);
}

Result<RegionId> RegionTree::Derive(DomainId caller, RegionId parent_id,
                                    PhysRange sub, AccessRights rights,
                                    DerivationKind kind) {
  auto it = nodes_.find(parent_id);
  if (it == nodes_.end()) return MakeError(ErrorCode::kUnknownRegion);
  const RegionNode& parent = it->second;
  if (parent.owner != caller) return MakeError(ErrorCode::kNotOwner);
  if (!sub.IsValid()) return MakeError(ErrorCode::kBadRange, ToString(sub));
  if (rights.empty()) return MakeError(ErrorCode::kEmptyRights);
  if (!parent.rights.Includes(rights)) {
    return MakeError(ErrorCode::kRightsEscalation,
                     rights.ToString() + " > " + parent.rights.ToString());
  }

  if (kind == DerivationKind::kCarve) {
    for (RegionId kid_id : parent.children) {
      const RegionNode& kid = nodes_.at(kid_id);
      if (!kid.initial_range.Overlaps(sub)) continue;
      return MakeError(kid.kind == DerivationKind::kCarve
                           ? ErrorCode::kOverlapsCarve
                           : ErrorCode::kOverlapsAlias,
                       ToString(kid.initial_range));
    }
  }

  EffectiveView view = ComputeView(parent);
  if (!ViewCovers(view, sub)) {
    return MakeError(ErrorCode::kOutOfRange, ToString(sub));
  }

  RegionStatus status = RegionStatus::kAliased;
  if (kind == DerivationKind::kCarve) {
    // Exclusive only if every byte of the sub-range is exclusive in the parent.
    status = RegionStatus::kExclusive;
    for (const ViewSegment& seg : view) {
      if (seg.range.Overlaps(sub) && seg.status != RegionStatus::kExclusive) {
        status = RegionStatus::kAliased;
      }
    }
  }

  RegionNode node;
  node.id = RegionId{next_id_++};
  node.owner = caller;
  node.initial_range = sub;
  node.rights = rights;
  node.status = status;
  node.kind = kind;
  node.parent = parent_id;
  it->second.children.push_back(node.id);
  RegionId id = node.id;
  nodes_.emplace(id, std::move(node));
  return id;
}

Result<RegionId> RegionTree::Alias(DomainId caller, RegionId parent,
                                   PhysRange sub, AccessRights rights) {
  return Derive(caller, parent, sub, rights, DerivationKind::kAlias);
}

Result<RegionId> RegionTree::Carve(DomainId caller, RegionId parent,
                                   PhysRange sub, AccessRights rights) {
  return Derive(caller, parent, sub, rights, DerivationKind::kCarve);
}

Result<std::vector<RegionNode>> RegionTree::Revoke(DomainId caller,
                                                   RegionId parent,
                                                   RegionId child) {
  const RegionNode* p = Find(parent);
  if (p == nullptr) return MakeError(ErrorCode::kUnknownRegion);
  if (p->owner != caller) return MakeError(ErrorCode::kNotOwner);
  if (std::find(p->children.begin(), p->children.end(), child) ==
      p->children.end()) {
    return MakeError(ErrorCode::kNotAChild);
  }
  return DestroySubtree(child);
}

std::vector<RegionNode> RegionTree::DestroySubtree(RegionId id) {
  std::vector<RegionNode> destroyed;
  auto it = nodes_.find(id);
  if (it == nodes_.end() || id == root_) return destroyed;

  // Post-order walk with an explicit stack; subtrees may be deep.
  std::vector<std::pair<RegionId, size_t>> stack = {{id, 0}};
  std::vector<RegionId> order;
  while (!stack.empty()) {
    auto& [cur, next_child] = stack.back();
    const RegionNode& node = nodes_.at(cur);
    if (next_child < node.children.size()) {
      RegionId kid = node.children[next_child++];
      stack.push_back({kid, 0});
    } else {
      order.push_back(cur);
      stack.pop_back();
    }
  }

  RegionId parent = *it->second.parent;
  auto& siblings = nodes_.at(parent).children;
  siblings.erase(std::find(siblings.begin(), siblings.end(), id));

  destroyed.reserve(order.size());
  for (RegionId dead : order) {
    auto node = nodes_.extract(dead);
    destroyed.push_back(std::move(node.mapped()));
  }
  return destroyed;
}

}  // namespace capmon
