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

#include "capmon/oracle.h"

#include <algorithm>
#include <string>
#include <utility>

#include "capmon/engine.h"

namespace capmon {
namespace {

constexpr uint64_t kPage = 4096;

Error Malformed(const LogEntry& entry, const std::string& what) {
  return MakeError(ErrorCode::kMalformedLog,
                   what + " in '" + FormatLogEntry(entry) + "'");
}

Result<uint64_t> NumberArg(const LogEntry& e, std::string_view key) {
  auto v = e.Arg(key);
  if (!v) return Malformed(e, "missing " + std::string(key));
  auto n = ParseNumber(*v);
  if (!n) return Malformed(e, "bad " + std::string(key));
  return *n;
}

Result<uint64_t> DomainArg(const LogEntry& e, std::string_view key) {
  auto v = e.Arg(key);
  if (!v) return Malformed(e, "missing " + std::string(key));
  auto id = ParseDomainName(*v);
  if (!id) return Malformed(e, "bad domain " + std::string(*v));
  return id->value;
}

Result<uint64_t> RegionArg(const LogEntry& e, std::string_view key) {
  auto v = e.Arg(key);
  if (!v) return Malformed(e, "missing " + std::string(key));
  auto id = ParseRegionName(*v);
  if (!id) return Malformed(e, "bad region " + std::string(*v));
  return id->value;
}

uint8_t ParseRights(std::string_view text) {
  uint8_t bits = 0;
  for (char c : text) {
    if (c == 'R' || c == 'r') bits |= 1;
    if (c == 'W' || c == 'w') bits |= 2;
    if (c == 'X' || c == 'x') bits |= 4;
  }
  return bits;
}

std::string Describe(const std::optional<PageAccess>& a) {
  if (!a) return "none";
  std::string r;
  r += (a->rights & 1) ? 'R' : '_';
  r += (a->rights & 2) ? 'W' : '_';
  r += (a->rights & 4) ? 'X' : '_';
  return r + (a->exclusive ? "/X" : "/S");
}

}  // namespace

uint64_t HandlerOf(const TreeSnapshot& tree, uint64_t running, int vector) {
  uint64_t cur = running;
  while (true) {
    const TreeSnapshot::Node& node = tree.domains.at(cur);
    if (node.visibility[vector] == 2 || !node.parent) return cur;
    cur = *node.parent;
  }
}

std::vector<uint64_t> ReportPath(const TreeSnapshot& tree, uint64_t running,
                                 int vector) {
  uint64_t handler = HandlerOf(tree, running, vector);
  std::vector<uint64_t> out;
  if (handler == running) return out;
  uint64_t cur = *tree.domains.at(running).parent;
  while (cur != handler) {
    const TreeSnapshot::Node& node = tree.domains.at(cur);
    if (node.visibility[vector] == 1) out.push_back(cur);
    cur = *node.parent;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

Result<Oracle> Oracle::Replay(const std::vector<LogEntry>& log) {
  Oracle oracle;
  for (const LogEntry& e : log) CAPMON_RETURN_IF_ERROR(oracle.Apply(e));
  return oracle;
}

Status Oracle::NewDomain(uint64_t id, uint64_t parent) {
  if (tree_.domains.count(id)) {
    return MakeError(ErrorCode::kMalformedLog, "domain reused");
  }
  live_domains_.insert(id);
  domain_children_[parent].push_back(id);
  tree_.domains[id].parent = parent;
  return OkStatus();
}

Status Oracle::Boot(const LogEntry& e) {
  CAPMON_ASSIGN_OR_RETURN(td0_, DomainArg(e, "caller"));
  CAPMON_ASSIGN_OR_RETURN(uint64_t root, RegionArg(e, "root"));
  CAPMON_ASSIGN_OR_RETURN(root_start_, NumberArg(e, "start"));
  CAPMON_ASSIGN_OR_RETURN(root_end_, NumberArg(e, "end"));
  Region r;
  r.owner = td0_;
  r.start = root_start_;
  r.end = root_end_;
  r.rights = 7;
  regions_[root] = r;
  for (uint64_t p = r.start; p < r.end; p += kPage) pages_[p][root] = {};
  live_domains_.insert(td0_);
  tree_.domains[td0_].visibility.fill(2);
  booted_ = true;
  return OkStatus();
}

Status Oracle::Derive(const LogEntry& e, bool carve) {
  CAPMON_ASSIGN_OR_RETURN(uint64_t caller, DomainArg(e, "caller"));
  CAPMON_ASSIGN_OR_RETURN(uint64_t parent, RegionArg(e, "parent"));
  CAPMON_ASSIGN_OR_RETURN(uint64_t start, NumberArg(e, "start"));
  CAPMON_ASSIGN_OR_RETURN(uint64_t end, NumberArg(e, "end"));
  auto rights = e.Arg("rights");
  auto id = ParseRegionName(e.result);
  if (!rights || !id) return Malformed(e, "derive result");
  auto pit = regions_.find(parent);
  if (pit == regions_.end()) return Malformed(e, "unknown parent");

  Region r;
  r.owner = caller;
  r.parent = parent;
  r.carve = carve;
  r.start = start;
  r.end = end;
  r.rights = ParseRights(*rights);
  // A carve stays exclusive only if the parent held every page exclusively.
  r.exclusive = carve;
  for (uint64_t p = start; p < end && r.exclusive; p += kPage) {
    const Holding& h = pages_[p][parent];
    r.exclusive = pit->second.exclusive && h.aliased == 0 && h.carved == 0;
  }
  for (uint64_t p = start; p < end; p += kPage) {
    Holding& h = pages_[p][parent];
    (carve ? h.carved : h.aliased) += 1;
    pages_[p][id->value] = {};
  }
  pit->second.children.push_back(id->value);
  regions_[id->value] = r;
  return OkStatus();
}

void Oracle::DestroyRegion(uint64_t id, std::vector<uint64_t>& doomed) {
  auto it = regions_.find(id);
  if (it == regions_.end()) return;
  for (uint64_t kid : std::vector<uint64_t>(it->second.children)) {
    DestroyRegion(kid, doomed);
  }
  const Region r = it->second;
  for (uint64_t p = r.start; p < r.end; p += kPage) {
    pages_[p].erase(id);
    if (r.parent) {
      Holding& h = pages_[p][*r.parent];
      (r.carve ? h.carved : h.aliased) -= 1;
    }
  }
  if (r.parent) {
    auto& siblings = regions_[*r.parent].children;
    siblings.erase(std::remove(siblings.begin(), siblings.end(), id),
                   siblings.end());
  }
  if (r.clean) cleaned_.emplace_back(r.start, r.end);
  if (r.vital && live_domains_.count(r.owner) && r.owner != td0_) {
    doomed.push_back(r.owner);
  }
  regions_.erase(it);
}

void Oracle::RevokeDomain(uint64_t id, std::vector<uint64_t>& doomed) {
  if (!live_domains_.count(id) || id == td0_) return;
  std::vector<uint64_t> subtree;
  std::vector<uint64_t> stack = {id};
  while (!stack.empty()) {
    uint64_t d = stack.back();
    stack.pop_back();
    if (!live_domains_.count(d)) continue;
    subtree.push_back(d);
    for (uint64_t c : domain_children_[d]) stack.push_back(c);
  }
  for (uint64_t d : subtree) live_domains_.erase(d);
  for (uint64_t d : subtree) {
    std::vector<uint64_t> owned;
    for (const auto& [rid, r] : regions_) {
      if (r.owner == d) owned.push_back(rid);
    }
    for (uint64_t rid : owned) DestroyRegion(rid, doomed);
  }
}

void Oracle::Cascade(std::vector<uint64_t> doomed) {
  while (!doomed.empty()) {
    uint64_t d = doomed.back();
    doomed.pop_back();
    RevokeDomain(d, doomed);
  }
}

Status Oracle::Apply(const LogEntry& e) {
  if (e.failed()) return OkStatus();
  if (e.op == "boot") return Boot(e);
  if (!booted_) return Malformed(e, "entry before boot");

  if (e.op == "create" || e.op == "device") {
    CAPMON_ASSIGN_OR_RETURN(uint64_t caller, DomainArg(e, "caller"));
    auto id = ParseDomainName(e.result);
    if (!id) return Malformed(e, "create result");
    return NewDomain(id->value, caller);
  }
  if (e.op == "alias") return Derive(e, false);
  if (e.op == "carve") return Derive(e, true);
  if (e.op == "send") {
    auto cap = e.Arg("cap");
    if (!cap) return Malformed(e, "missing cap");
    auto rid = ParseRegionName(*cap);
    if (!rid) return OkStatus();  // channels carry no memory
    CAPMON_ASSIGN_OR_RETURN(uint64_t dest, DomainArg(e, "dest"));
    auto it = regions_.find(rid->value);
    if (it == regions_.end()) return Malformed(e, "unknown region");
    std::string_view attrs = e.Arg("attrs").value_or("-");
    it->second.owner = dest;
    it->second.clean = attrs.find("CLEAN") != std::string_view::npos;
    it->second.vital = attrs.find("VITAL") != std::string_view::npos;
    return OkStatus();
  }
  if (e.op == "revoke_region") {
    CAPMON_ASSIGN_OR_RETURN(uint64_t child, RegionArg(e, "child"));
    if (!regions_.count(child)) return Malformed(e, "unknown region");
    std::vector<uint64_t> doomed;
    DestroyRegion(child, doomed);
    Cascade(std::move(doomed));
    return OkStatus();
  }
  if (e.op == "revoke_domain") {
    CAPMON_ASSIGN_OR_RETURN(uint64_t target, DomainArg(e, "target"));
    Cascade({target});
    return OkStatus();
  }
  if (e.op == "set_policy") {
    if (e.Arg("field") != "irq") return OkStatus();
    CAPMON_ASSIGN_OR_RETURN(uint64_t target, DomainArg(e, "target"));
    CAPMON_ASSIGN_OR_RETURN(uint64_t vector, NumberArg(e, "vector"));
    CAPMON_ASSIGN_OR_RETURN(uint64_t value, NumberArg(e, "value"));
    if (vector >= 256) return Malformed(e, "vector");
    tree_.domains[target].visibility[vector] = value & 0xff;
    return OkStatus();
  }
  // Everything else leaves memory and the domain tree alone.
  return OkStatus();
}

std::optional<PageAccess> Oracle::Lookup(uint64_t domain,
                                         uint64_t page_address) const {
  auto it = pages_.find(page_address - page_address % kPage);
  if (it == pages_.end()) return std::nullopt;
  std::optional<PageAccess> out;
  for (const auto& [rid, h] : it->second) {
    const Region& r = regions_.at(rid);
    if (r.owner != domain || h.carved > 0) continue;
    if (!out) out = PageAccess{};
    out->rights |= r.rights;
    out->exclusive |= r.exclusive && h.aliased == 0;
  }
  return out;
}

std::map<uint64_t, PageAccess> Oracle::AddressMap(uint64_t domain) const {
  std::map<uint64_t, PageAccess> out;
  if (!live_domains_.count(domain)) return out;
  for (const auto& [page, holders] : pages_) {
    if (auto a = Lookup(domain, page)) out[page] = *a;
  }
  return out;
}

bool Oracle::DomainLive(uint64_t domain) const {
  return live_domains_.count(domain) != 0;
}

std::vector<uint64_t> Oracle::LiveDomains() const {
  return {live_domains_.begin(), live_domains_.end()};
}

std::vector<uint64_t> Oracle::LiveRegions() const {
  std::vector<uint64_t> out;
  for (const auto& [id, r] : regions_) out.push_back(id);
  return out;
}

std::optional<uint64_t> Oracle::RegionOwner(uint64_t region) const {
  auto it = regions_.find(region);
  if (it == regions_.end()) return std::nullopt;
  return it->second.owner;
}

std::vector<std::string> Oracle::Diff(const Engine& engine) const {
  std::vector<std::string> out;
  std::set<uint64_t> engine_live;
  for (const auto& [id, d] : engine.domains()) {
    if (d.live()) engine_live.insert(id.value);
  }
  for (uint64_t d : engine_live) {
    if (!live_domains_.count(d)) out.push_back("td" + std::to_string(d) + " live in engine only");
  }
  for (uint64_t d : live_domains_) {
    if (!engine_live.count(d)) out.push_back("td" + std::to_string(d) + " live in oracle only");
  }

  for (uint64_t d : live_domains_) {
    std::map<uint64_t, PageAccess> expected = AddressMap(d);
    std::map<uint64_t, PageAccess> actual;
    for (const ViewSegment& seg : engine.DomainView(DomainId{d})) {
      for (uint64_t p = seg.range.start; p < seg.range.end; p += kPage) {
        actual[p] = {seg.rights.bits(),
                     seg.status == RegionStatus::kExclusive};
      }
    }
    auto report = [&](uint64_t page, std::optional<PageAccess> want,
                      std::optional<PageAccess> got) {
      out.push_back("td" + std::to_string(d) + " page " + Hex(page) +
                    ": oracle " + Describe(want) + ", engine " + Describe(got));
    };
    for (const auto& [page, want] : expected) {
      auto it = actual.find(page);
      if (it == actual.end()) {
        report(page, want, std::nullopt);
      } else if (!(it->second == want)) {
        report(page, want, it->second);
      }
    }
    for (const auto& [page, got] : actual) {
      if (!expected.count(page)) report(page, std::nullopt, got);
    }
  }

  const auto& nodes = engine.regions().nodes();
  for (const auto& [id, node] : nodes) {
    auto it = regions_.find(id.value);
    std::string name = "r" + std::to_string(id.value);
    if (it == regions_.end()) {
      out.push_back(name + " exists in engine only");
      continue;
    }
    const Region& r = it->second;
    if (r.owner != node.owner.value) out.push_back(name + " owner differs");
    if (r.start != node.initial_range.start || r.end != node.initial_range.end) {
      out.push_back(name + " range differs");
    }
    if (r.exclusive != (node.status == RegionStatus::kExclusive)) {
      out.push_back(name + " status differs");
    }
    if (r.rights != node.rights.bits()) out.push_back(name + " rights differ");
  }
  for (const auto& [id, r] : regions_) {
    if (!nodes.count(RegionId{id})) {
      out.push_back("r" + std::to_string(id) + " exists in oracle only");
    }
  }
  return out;
}

}  // namespace capmon
