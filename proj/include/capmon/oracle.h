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

// Reference model rebuilt from the operation log alone. Keeps, for every
// page, the regions covering it together with how many live alias and carve
// children of each region cover that page. Shares no code with the region
// tree.

#ifndef CAPMON_ORACLE_H_
#define CAPMON_ORACLE_H_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "capmon/base.h"
#include "capmon/op_log.h"

namespace capmon {

class Engine;

struct PageAccess {
  uint8_t rights = 0;  // R=1 W=2 X=4
  bool exclusive = false;
  bool operator==(const PageAccess&) const = default;
};

// Domain tree with interrupt visibility, enough to route interrupts.
struct TreeSnapshot {
  struct Node {
    std::optional<uint64_t> parent;
    std::array<uint8_t, 256> visibility{};  // 0 NotReport, 1 Report, 2 Deliver
  };
  std::map<uint64_t, Node> domains;
};

// Nearest domain delivering `vector`, scanning from `running` toward the
// root.
uint64_t HandlerOf(const TreeSnapshot& tree, uint64_t running, int vector);
// Domains strictly between the handler and `running` that report `vector`,
// root to leaf.
std::vector<uint64_t> ReportPath(const TreeSnapshot& tree, uint64_t running,
                                 int vector);

class Oracle {
 public:
  // Applies one accepted entry. Rejected entries are ignored.
  Status Apply(const LogEntry& entry);
  static Result<Oracle> Replay(const std::vector<LogEntry>& log);

  // Access of `domain` to the page at `page_address`, if any.
  std::optional<PageAccess> Lookup(uint64_t domain, uint64_t page_address) const;
  // Page address -> access for every page the domain reaches.
  std::map<uint64_t, PageAccess> AddressMap(uint64_t domain) const;

  bool DomainLive(uint64_t domain) const;
  std::vector<uint64_t> LiveDomains() const;
  std::vector<uint64_t> LiveRegions() const;
  std::optional<uint64_t> RegionOwner(uint64_t region) const;
  // Ranges whose content was zeroed by revocations so far.
  const std::vector<std::pair<uint64_t, uint64_t>>& cleaned() const {
    return cleaned_;
  }
  const TreeSnapshot& tree() const { return tree_; }
  uint64_t root_start() const { return root_start_; }
  uint64_t root_end() const { return root_end_; }

  // Differences between the engine and the model, one line each. Empty when
  // they agree on every domain, page and region.
  std::vector<std::string> Diff(const Engine& engine) const;

 private:
  struct Region {
    uint64_t owner = 0;
    std::optional<uint64_t> parent;
    bool carve = false;
    uint64_t start = 0;
    uint64_t end = 0;
    uint8_t rights = 0;
    bool exclusive = true;
    bool clean = false;
    bool vital = false;
    std::vector<uint64_t> children;
  };
  struct Holding {
    int carved = 0;   // live carve children covering the page
    int aliased = 0;  // live alias children covering the page
  };

  Status Boot(const LogEntry& entry);
  Status Derive(const LogEntry& entry, bool carve);
  void DestroyRegion(uint64_t id, std::vector<uint64_t>& doomed_domains);
  void RevokeDomain(uint64_t id, std::vector<uint64_t>& doomed_domains);
  void Cascade(std::vector<uint64_t> doomed_domains);
  Status NewDomain(uint64_t id, uint64_t parent);

  bool booted_ = false;
  uint64_t td0_ = 0;
  uint64_t root_start_ = 0;
  uint64_t root_end_ = 0;
  std::map<uint64_t, Region> regions_;
  std::map<uint64_t, std::map<uint64_t, Holding>> pages_;  // page -> region
  std::set<uint64_t> live_domains_;
  std::map<uint64_t, std::vector<uint64_t>> domain_children_;
  TreeSnapshot tree_;
  std::vector<std::pair<uint64_t, uint64_t>> cleaned_;
};

}  // namespace capmon

#endif  // CAPMON_ORACLE_H_
