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

#include "capmon/attestation.h"

#include <algorithm>
#include <cstring>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>

#include "capmon/op_log.h"

namespace capmon {
namespace {

constexpr char kMagic[4] = {'C', 'M', 'A', 'R'};
constexpr uint32_t kFormatVersion = 1;

constexpr uint8_t kHasNonce = 1;
constexpr uint8_t kHasVerifierKey = 2;
constexpr uint8_t kHasDomainKey = 4;

constexpr uint8_t kAttrClean = 1;
constexpr uint8_t kAttrVital = 2;
constexpr uint8_t kAttrHash = 4;

class Writer {
 public:
  void U8(uint8_t v) { out_.push_back(v); }
  void U16(uint16_t v) { Le(v, 2); }
  void U32(uint32_t v) { Le(v, 4); }
  void U64(uint64_t v) { Le(v, 8); }
  void Raw(std::span<const uint8_t> bytes) {
    out_.insert(out_.end(), bytes.begin(), bytes.end());
  }
  void Bytes(std::span<const uint8_t> bytes) {
    U32(static_cast<uint32_t>(bytes.size()));
    Raw(bytes);
  }
  void Str(std::string_view s) {
    Bytes({reinterpret_cast<const uint8_t*>(s.data()), s.size()});
  }
  std::vector<uint8_t> Take() { return std::move(out_); }

 private:
  void Le(uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  std::vector<uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> in) : in_(in) {}

  bool ok() const { return ok_; }
  bool done() const { return pos_ == in_.size(); }
  size_t pos() const { return pos_; }

  uint8_t U8() { return static_cast<uint8_t>(Le(1)); }
  uint16_t U16() { return static_cast<uint16_t>(Le(2)); }
  uint32_t U32() { return static_cast<uint32_t>(Le(4)); }
  uint64_t U64() { return Le(8); }
  template <size_t N>
  std::array<uint8_t, N> Fixed() {
    std::array<uint8_t, N> out{};
    if (!Need(N)) return out;
    std::memcpy(out.data(), in_.data() + pos_, N);
    pos_ += N;
    return out;
  }
  std::vector<uint8_t> Bytes() {
    uint32_t n = U32();
    if (!Need(n)) return {};
    std::vector<uint8_t> out(in_.begin() + pos_, in_.begin() + pos_ + n);
    pos_ += n;
    return out;
  }
  std::string Str() {
    std::vector<uint8_t> b = Bytes();
    return std::string(b.begin(), b.end());
  }
  // Guards list lengths against absurd values from corrupted input.
  uint32_t Count() {
    uint32_t n = U32();
    if (n > in_.size()) ok_ = false;
    return ok_ ? n : 0;
  }

 private:
  bool Need(size_t n) {
    if (!ok_ || in_.size() - pos_ < n) ok_ = false;
    return ok_;
  }
  uint64_t Le(int n) {
    if (!Need(n)) return 0;
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += n;
    return v;
  }
  std::span<const uint8_t> in_;
  size_t pos_ = 0;
  bool ok_ = true;
};

void WriteRange(Writer& w, const PhysRange& r) {
  w.U64(r.start);
  w.U64(r.end);
}

PhysRange ReadRange(Reader& r) {
  PhysRange out;
  out.start = r.U64();
  out.end = r.U64();
  return out;
}

std::vector<InterruptRange> GroupInterrupts(const Policies& policies) {
  std::vector<InterruptRange> out;
  for (int v = 0; v < kNumVectors; ++v) {
    const InterruptPolicy& p = policies.interrupts[v];
    if (!out.empty() && out.back().policy == p) {
      out.back().last = v;
    } else {
      out.push_back({v, v, p});
    }
  }
  return out;
}

Digest RegisterHash(const DomainNode& d) {
  if (d.register_hash) return *d.register_hash;
  Sha256Builder b;
  for (const RegisterFile& f : d.registers) {
    for (uint64_t r : f) b.UpdateU64(r);
  }
  return b.Finish();
}

// Fresh-name allocation over capability tables.
class Namer {
 public:
  explicit Namer(const Engine& engine) : engine_(engine) {}

  std::string Region(RegionId id) {
    auto [it, inserted] = regions_.try_emplace(id, "");
    if (inserted) it->second = "r" + std::to_string(next_region_++);
    return it->second;
  }
  std::string Domain(DomainId id) {
    auto [it, inserted] = domains_.try_emplace(id, "");
    if (inserted) it->second = "td" + std::to_string(next_domain_++);
    return it->second;
  }
  std::string Channel(ChannelId id) {
    auto [it, inserted] = channels_.try_emplace(id, "");
    if (inserted) it->second = "ch" + std::to_string(next_channel_++);
    return it->second;
  }
  std::string Cap(const Capability& cap) {
    switch (cap.kind) {
      case Capability::Kind::kRegion:
        return Region(cap.region);
      case Capability::Kind::kDomain:
        return Domain(cap.domain);
      case Capability::Kind::kChannel:
        return Channel(cap.channel);
    }
    return "?";
  }

  // Names every capability of `owner` and the direct children of its
  // regions, in table order.
  void Walk(DomainId owner) {
    const DomainNode* d = engine_.FindDomain(owner);
    if (d == nullptr) return;
    for (const auto& slot : d->owned) {
      if (!slot) continue;
      Cap(*slot);
      if (slot->kind != Capability::Kind::kRegion) continue;
      const RegionNode* node = engine_.regions().Find(slot->region);
      for (RegionId kid : node->children) Region(kid);
    }
  }

 private:
  const Engine& engine_;
  std::map<RegionId, std::string> regions_;
  std::map<DomainId, std::string> domains_;
  std::map<ChannelId, std::string> channels_;
  uint64_t next_region_ = 0;
  uint64_t next_domain_ = 0;
  uint64_t next_channel_ = 0;
};

RegionDescriptor DescribeRegion(const Engine& engine, Namer& namer,
                                RegionId id, bool with_children) {
  const RegionNode& node = *engine.regions().Find(id);
  RegionDescriptor desc;
  desc.name = namer.Region(id);
  desc.status = node.status;
  desc.range = node.initial_range;
  desc.rights = node.rights;
  desc.clean = node.attributes.clean;
  desc.vital = node.attributes.vital;
  desc.hash = node.attributes.hash;
  if (with_children) {
    for (RegionId kid : node.children) {
      const RegionNode& k = *engine.regions().Find(kid);
      desc.children.push_back(
          {k.kind, k.initial_range, namer.Region(kid), k.rights});
    }
  }
  return desc;
}

DomainDescriptor DescribeDomain(const DomainNode& d, Namer& namer,
                                bool include_domains) {
  DomainDescriptor desc;
  desc.name = namer.Domain(d.id);
  desc.register_hash = RegisterHash(d);
  desc.cores = d.policies.cores;
  desc.mon_api = d.policies.mon_api;
  desc.user_calls = d.policies.user_calls;
  desc.receive = d.policies.receive_after_seal;
  desc.interrupts = GroupInterrupts(d.policies);
  for (const auto& slot : d.owned) {
    if (!slot) continue;
    if (slot->kind == Capability::Kind::kDomain && !include_domains) continue;
    desc.members.push_back(namer.Cap(*slot));
  }
  return desc;
}

std::string Pad(size_t n) { return std::string(n, ' '); }

std::string InterruptLine(const InterruptRange& r) {
  std::string vectors = std::to_string(r.first);
  if (r.last != r.first) vectors += "-" + std::to_string(r.last);
  return vectors + " -> {" + std::string(ToString(r.policy.visibility)) +
         ", registers: " + BinaryString(r.policy.readable_regs) + "}";
}

std::string_view ChildKindName(DerivationKind kind) {
  return kind == DerivationKind::kCarve ? "carve" : "alias";
}

// Sorted union of ranges.
std::vector<PhysRange> MergeRanges(std::vector<PhysRange> ranges) {
  std::sort(ranges.begin(), ranges.end());
  std::vector<PhysRange> out;
  for (const PhysRange& r : ranges) {
    if (!out.empty() && r.start <= out.back().end) {
      out.back().end = std::max(out.back().end, r.end);
    } else {
      out.push_back(r);
    }
  }
  return out;
}

bool CoveredBy(const std::vector<PhysRange>& merged, const PhysRange& r) {
  return std::any_of(merged.begin(), merged.end(),
                     [&](const PhysRange& m) { return m.Covers(r); });
}

}  // namespace

// ---------------------------------------------------------------------------
// Boot measurement.

BootMeasurement FoldEvents(std::vector<BootEvent> events) {
  BootMeasurement m;
  m.events = std::move(events);
  for (const BootEvent& e : m.events) {
    m.pcr = Sha256Builder().Update(m.pcr).Update(e.digest).Finish();
  }
  return m;
}

std::string_view MonitorIdentity() { return "capmon monitor 1"; }

BootMeasurement MeasureBoot(std::string_view config_bytes,
                            std::string_view monitor_identity,
                            const PublicKey& attestation_key) {
  return FoldEvents({
      {"boot-info", Sha256(config_bytes)},
      {"monitor", Sha256(monitor_identity)},
      {"attestation-key", Sha256(attestation_key)},
  });
}

// ---------------------------------------------------------------------------
// Construction.

const DomainDescriptor* AttestationReport::FindDomain(
    std::string_view name) const {
  for (const DomainDescriptor& d : domains) {
    if (d.name == name) return &d;
  }
  return nullptr;
}

const RegionDescriptor* AttestationReport::FindRegion(
    std::string_view name) const {
  for (const RegionDescriptor& r : regions) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

AttestationReport BuildReport(const Engine& engine, DomainId requester,
                              DomainId subject, ReportHeader header) {
  AttestationReport report;
  report.header = std::move(header);
  Namer namer(engine);
  if (requester != subject) {
    namer.Domain(requester);
    namer.Walk(requester);
  }
  namer.Domain(subject);
  namer.Walk(subject);

  const DomainNode& s = *engine.FindDomain(subject);
  report.domains.push_back(DescribeDomain(s, namer, true));
  for (const auto& slot : s.owned) {
    if (slot && slot->kind == Capability::Kind::kRegion) {
      report.regions.push_back(
          DescribeRegion(engine, namer, slot->region, true));
    }
  }
  for (const auto& slot : s.owned) {
    if (!slot || slot->kind != Capability::Kind::kDomain) continue;
    const DomainNode& child = *engine.FindDomain(slot->domain);
    // Direct children are shown without their own Td children.
    report.domains.push_back(DescribeDomain(child, namer, false));
    for (const auto& cslot : child.owned) {
      if (cslot && cslot->kind == Capability::Kind::kRegion) {
        report.regions.push_back(
            DescribeRegion(engine, namer, cslot->region, false));
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Canonical encoding.

std::vector<uint8_t> SerializeUnsigned(const AttestationReport& report) {
  Writer w;
  w.Raw({reinterpret_cast<const uint8_t*>(kMagic), 4});
  w.U32(kFormatVersion);
  const ReportHeader& h = report.header;
  w.Str(h.hash_name);
  w.Str(h.signature_scheme);
  w.U32(h.core_count);
  w.Raw(h.monitor_measurement);
  uint8_t flags = (h.nonce ? kHasNonce : 0) |
                  (h.verifier_key ? kHasVerifierKey : 0) |
                  (h.domain_key ? kHasDomainKey : 0);
  w.U8(flags);
  if (h.nonce) w.Bytes(*h.nonce);
  if (h.verifier_key) w.Raw(*h.verifier_key);
  if (h.domain_key) w.Raw(*h.domain_key);

  w.U32(static_cast<uint32_t>(report.domains.size()));
  for (const DomainDescriptor& d : report.domains) {
    w.Str(d.name);
    w.Raw(d.register_hash);
    w.U64(d.cores);
    w.U16(d.mon_api);
    w.U8(d.user_calls);
    w.U8(d.receive);
    w.U32(static_cast<uint32_t>(d.interrupts.size()));
    for (const InterruptRange& r : d.interrupts) {
      w.U16(static_cast<uint16_t>(r.first));
      w.U16(static_cast<uint16_t>(r.last));
      w.U8(static_cast<uint8_t>(r.policy.visibility));
      w.U32(r.policy.readable_regs);
    }
    w.U32(static_cast<uint32_t>(d.members.size()));
    for (const std::string& m : d.members) w.Str(m);
  }
  w.U32(static_cast<uint32_t>(report.regions.size()));
  for (const RegionDescriptor& r : report.regions) {
    w.Str(r.name);
    w.U8(static_cast<uint8_t>(r.status));
    WriteRange(w, r.range);
    w.U8(r.rights.bits());
    w.U8((r.clean ? kAttrClean : 0) | (r.vital ? kAttrVital : 0) |
         (r.hash ? kAttrHash : 0));
    if (r.hash) w.Raw(*r.hash);
    w.U32(static_cast<uint32_t>(r.children.size()));
    for (const RegionChildLine& c : r.children) {
      w.U8(static_cast<uint8_t>(c.kind));
      WriteRange(w, c.range);
      w.Str(c.name);
      w.U8(c.rights.bits());
    }
  }
  return w.Take();
}

std::vector<uint8_t> Serialize(const AttestationReport& report) {
  std::vector<uint8_t> out = SerializeUnsigned(report);
  out.insert(out.end(), report.signature.begin(), report.signature.end());
  return out;
}

Result<AttestationReport> ParseReport(std::span<const uint8_t> bytes) {
  auto bad = [](std::string what) {
    return MakeError(ErrorCode::kParseError, "report: " + what);
  };
  Reader r(bytes);
  auto magic = r.Fixed<4>();
  if (!r.ok() || std::memcmp(magic.data(), kMagic, 4) != 0) {
    return bad("magic");
  }
  if (r.U32() != kFormatVersion) return bad("version");
  AttestationReport report;
  ReportHeader& h = report.header;
  h.hash_name = r.Str();
  h.signature_scheme = r.Str();
  h.core_count = r.U32();
  h.monitor_measurement = r.Fixed<32>();
  uint8_t flags = r.U8();
  if (flags & ~(kHasNonce | kHasVerifierKey | kHasDomainKey)) {
    return bad("header flags");
  }
  if (flags & kHasNonce) h.nonce = r.Bytes();
  if (flags & kHasVerifierKey) h.verifier_key = r.Fixed<32>();
  if (flags & kHasDomainKey) h.domain_key = r.Fixed<32>();

  uint32_t ndomains = r.Count();
  for (uint32_t i = 0; i < ndomains && r.ok(); ++i) {
    DomainDescriptor d;
    d.name = r.Str();
    d.register_hash = r.Fixed<32>();
    d.cores = r.U64();
    d.mon_api = r.U16();
    d.user_calls = r.U8() != 0;
    d.receive = r.U8() != 0;
    uint32_t nirq = r.Count();
    for (uint32_t j = 0; j < nirq && r.ok(); ++j) {
      InterruptRange ir;
      ir.first = r.U16();
      ir.last = r.U16();
      uint8_t vis = r.U8();
      if (vis > static_cast<uint8_t>(InterruptVisibility::kDeliver)) {
        return bad("visibility");
      }
      ir.policy.visibility = static_cast<InterruptVisibility>(vis);
      ir.policy.readable_regs = r.U32();
      d.interrupts.push_back(ir);
    }
    uint32_t nmembers = r.Count();
    for (uint32_t j = 0; j < nmembers && r.ok(); ++j) {
      d.members.push_back(r.Str());
    }
    report.domains.push_back(std::move(d));
  }
  uint32_t nregions = r.Count();
  for (uint32_t i = 0; i < nregions && r.ok(); ++i) {
    RegionDescriptor d;
    d.name = r.Str();
    uint8_t status = r.U8();
    if (status > 1) return bad("status");
    d.status = static_cast<RegionStatus>(status);
    d.range = ReadRange(r);
    d.rights = AccessRights(r.U8());
    uint8_t attrs = r.U8();
    d.clean = attrs & kAttrClean;
    d.vital = attrs & kAttrVital;
    if (attrs & kAttrHash) d.hash = r.Fixed<32>();
    uint32_t nchildren = r.Count();
    for (uint32_t j = 0; j < nchildren && r.ok(); ++j) {
      RegionChildLine c;
      uint8_t kind = r.U8();
      if (kind != static_cast<uint8_t>(DerivationKind::kAlias) &&
          kind != static_cast<uint8_t>(DerivationKind::kCarve)) {
        return bad("child kind");
      }
      c.kind = static_cast<DerivationKind>(kind);
      c.range = ReadRange(r);
      c.name = r.Str();
      c.rights = AccessRights(r.U8());
      d.children.push_back(std::move(c));
    }
    report.regions.push_back(std::move(d));
  }
  report.signature = r.Fixed<64>();
  if (!r.ok()) return bad("truncated");
  if (!r.done()) return bad("trailing bytes");
  return report;
}

void SignReport(AttestationReport& report, const SigningKey& key) {
  report.signature = key.Sign(SerializeUnsigned(report));
}

Result<AttestationReport> Attest(Engine& engine, const SigningKey& key,
                                 const BootMeasurement& boot, DomainId caller,
                                 std::optional<Handle> subject,
                                 std::optional<std::vector<uint8_t>> nonce,
                                 std::optional<RemoteAttestation> remote) {
  LogEntry entry = engine.NewLogEntry("attest", caller);
  auto resolved = engine.ResolveAttestSubject(caller, subject);
  if (!resolved.ok()) {
    entry.Add("subject", "-");
    entry.result = "error=" + std::string(ErrorName(resolved.code()));
    engine.AppendLog(std::move(entry));
    return resolved.error();
  }
  entry.Add("subject", DomainName(*resolved));
  engine.AppendLog(std::move(entry));

  ReportHeader header;
  header.core_count = engine.core_count();
  header.monitor_measurement = boot.pcr;
  header.nonce = std::move(nonce);
  if (remote) {
    header.nonce = remote->nonce;
    header.verifier_key = remote->verifier_key;
    header.domain_key = remote->domain_key;
  }
  Engine::ScopedLock lock(engine);
  AttestationReport report =
      BuildReport(engine, caller, *resolved, std::move(header));
  SignReport(report, key);
  return report;
}

Status VerifyReport(std::span<const uint8_t> bytes, const PublicKey& key,
                    const Digest& expected_pcr,
                    std::optional<std::vector<uint8_t>> expected_nonce) {
  CAPMON_ASSIGN_OR_RETURN(AttestationReport report, ParseReport(bytes));
  std::span<const uint8_t> body = bytes.first(bytes.size() - 64);
  if (!VerifySignature(key, body, report.signature)) {
    return MakeError(ErrorCode::kBadSignature);
  }
  if (report.header.monitor_measurement != expected_pcr) {
    return MakeError(ErrorCode::kMeasurementMismatch);
  }
  if (expected_nonce && report.header.nonce != expected_nonce) {
    return MakeError(ErrorCode::kNonceMismatch);
  }
  return OkStatus();
}

// ---------------------------------------------------------------------------
// Text projection.

std::string RenderText(const AttestationReport& report) {
  std::ostringstream out;
  const ReportHeader& h = report.header;
  out << "hash: " << h.hash_name << "\n";
  out << "signature.scheme: " << h.signature_scheme << "\n";
  out << "monitor: " << ToHex(h.monitor_measurement) << "\n";
  if (h.nonce) out << "nonce: " << ToHex(*h.nonce) << "\n";
  if (h.verifier_key) out << "verifier.key: " << ToHex(*h.verifier_key) << "\n";
  if (h.domain_key) out << "domain.key: " << ToHex(*h.domain_key) << "\n";

  for (const DomainDescriptor& d : report.domains) {
    std::string members;
    for (const std::string& m : d.members) {
      if (!members.empty()) members += ", ";
      members += m;
    }
    std::string pad = Pad(d.name.size() + 3) + "|";
    out << d.name << " = domain {" << members << "}\n";
    out << pad << "registers.HASH: " << ToHex(d.register_hash) << "\n";
    out << pad << "cores: " << BinaryString(d.cores, h.core_count) << "\n";
    out << pad << "mon.api: " << BinaryString(d.mon_api, kNumApiCalls)
        << (d.receive ? " | RECEIVE" : " | !RECEIVE")
        << (d.user_calls ? " | USER" : "") << "\n";
    out << pad << "interrupts: {\n";
    for (const InterruptRange& r : d.interrupts) {
      out << pad << " " << InterruptLine(r) << ",\n";
    }
    out << pad << " }\n";
  }
  for (const RegionDescriptor& r : report.regions) {
    std::string pad = Pad(r.name.size() + 3) + "|";
    out << r.name << " = " << ToString(r.status) << " " << Hex(r.range.start)
        << " " << Hex(r.range.end) << " with " << r.rights.ToString();
    RegionAttributes attrs;
    attrs.clean = r.clean;
    attrs.vital = r.vital;
    attrs.hash = r.hash;
    if (!attrs.empty()) out << ", " << attrs.FlagString();
    out << "\n";
    if (r.hash) out << pad << "HASH: " << ToHex(*r.hash) << "\n";
    for (const RegionChildLine& c : r.children) {
      out << pad << ChildKindName(c.kind) << " at " << Hex(c.range.start)
          << " " << Hex(c.range.end) << " for " << c.name << " with "
          << c.rights.ToString() << "\n";
    }
  }
  out << "signature: " << ToHex(report.signature) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Predicates.

std::string Verdict::ToString() const {
  std::string out = holds ? "holds\n" : "violated\n";
  for (const Clause& c : clauses) {
    out += std::string(c.holds ? "  ok   " : "  FAIL ") + c.name;
    if (!c.detail.empty()) out += ": " + c.detail;
    out += "\n";
  }
  return out;
}

Result<Verdict> IsConfidential(const AttestationReport& report,
                               std::string_view subject) {
  const DomainDescriptor* d = report.FindDomain(subject);
  if (d == nullptr) {
    return MakeError(ErrorCode::kUnknownSubject, std::string(subject));
  }
  // Sharing with the subject's own children is fine; they are described by
  // the same report.
  std::set<std::string> owned;
  for (const DomainDescriptor& dd : report.domains) {
    owned.insert(dd.members.begin(), dd.members.end());
  }
  std::vector<std::string> exclusive;
  std::vector<std::string> shared;  // exclusive regions aliased to others
  std::vector<std::string> unclean;
  std::vector<std::string> vital;
  for (const std::string& m : d->members) {
    const RegionDescriptor* r = report.FindRegion(m);
    if (r == nullptr) continue;
    if (r->vital) vital.push_back(m);
    if (r->status != RegionStatus::kExclusive) continue;
    exclusive.push_back(m);
    if (!r->clean) unclean.push_back(m);
    for (const RegionChildLine& line : r->children) {
      if (line.kind == DerivationKind::kAlias && !owned.count(line.name)) {
        shared.push_back(m + "->" + line.name);
      }
    }
  }
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const std::string& x : v) s += (s.empty() ? "" : ",") + x;
    return s;
  };

  Verdict v;
  v.clauses.push_back({"exclusive-memory", !exclusive.empty() && shared.empty(),
                       exclusive.empty()  ? "no exclusive region"
                       : !shared.empty() ? "aliased to others " + join(shared)
                                         : "exclusive " + join(exclusive)});
  v.clauses.push_back({"clean-on-revoke", !exclusive.empty() && unclean.empty(),
                       unclean.empty()
                           ? (exclusive.empty() ? "nothing to clean"
                                                : "all exclusive regions CLEAN")
                           : "revocation may leak " + join(unclean)});
  std::string leaks;
  for (const InterruptRange& r : d->interrupts) {
    if (r.policy.visibility != InterruptVisibility::kDeliver &&
        r.policy.readable_regs != 0) {
      if (!leaks.empty()) leaks += ",";
      leaks += std::to_string(r.first);
      if (r.last != r.first) leaks += "-" + std::to_string(r.last);
    }
  }
  v.clauses.push_back({"interrupt-registers", leaks.empty(),
                       leaks.empty() ? "no registers exposed on routed vectors"
                                     : "registers exposed on vectors " + leaks});
  v.clauses.push_back({"vital (informational)", true,
                       vital.empty() ? "none" : join(vital)});
  v.holds = v.clauses[0].holds && v.clauses[1].holds && v.clauses[2].holds;
  return v;
}

Result<Verdict> IsEncapsulated(const AttestationReport& report,
                               std::string_view child,
                               std::string_view parent) {
  const DomainDescriptor* c = report.FindDomain(child);
  if (c == nullptr) {
    return MakeError(ErrorCode::kUnknownSubject, std::string(child));
  }
  const DomainDescriptor* p = report.FindDomain(parent);
  if (p == nullptr) {
    return MakeError(ErrorCode::kUnknownSubject, std::string(parent));
  }

  // Lineage is given by naming: a child region must appear as a derivation
  // line of one of the parent's exclusive regions.
  std::vector<PhysRange> exclusive;
  std::map<std::string, PhysRange> derived;
  for (const std::string& m : p->members) {
    const RegionDescriptor* r = report.FindRegion(m);
    if (r == nullptr || r->status != RegionStatus::kExclusive) continue;
    exclusive.push_back(r->range);
    for (const RegionChildLine& line : r->children) {
      derived.emplace(line.name, line.range);
    }
  }
  std::vector<PhysRange> merged = MergeRanges(exclusive);
  std::string outside;
  int regions = 0;
  for (const std::string& m : c->members) {
    if (!m.starts_with("r")) continue;
    ++regions;
    auto it = derived.find(m);
    if (it == derived.end() || !CoveredBy(merged, it->second)) {
      if (!outside.empty()) outside += ",";
      outside += m;
    }
  }

  Verdict v;
  v.clauses.push_back(
      {"regions-within-parent-exclusive", outside.empty(),
       outside.empty() ? std::to_string(regions) +
                             " region(s) derived from parent exclusive memory"
                       : "not derived from parent exclusive memory: " + outside});
  bool no_send = (c->mon_api & ApiBit(ApiCall::kSend)) == 0;
  v.clauses.push_back({"no-send", no_send, no_send ? "SEND clear" : "SEND set"});
  v.clauses.push_back(
      {"no-receive", !c->receive, c->receive ? "RECEIVE" : "!RECEIVE"});
  v.holds = v.clauses[0].holds && v.clauses[1].holds && v.clauses[2].holds;
  return v;
}

}  // namespace capmon
