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

// Attestation reports: construction from engine state, canonical binary
// encoding, signing, verification, the human-readable projection, the
// confidentiality and encapsulation predicates, and the boot measurement.
//
// Names inside a report are fresh. They are handed out from 0 per kind while
// walking the requester's capability table, then the subject's, so they never
// expose engine-global ids.

#ifndef CAPMON_ATTESTATION_H_
#define CAPMON_ATTESTATION_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "capmon/base.h"
#include "capmon/crypto.h"
#include "capmon/engine.h"
#include "capmon/policies.h"
#include "capmon/region_tree.h"

namespace capmon {

struct BootEvent {
  std::string description;
  Digest digest{};
};

struct BootMeasurement {
  Digest pcr{};
  std::vector<BootEvent> events;
};

// Folds events into a PCR starting from 32 zero bytes.
BootMeasurement FoldEvents(std::vector<BootEvent> events);
// Events: boot-info (machine config bytes), monitor identity, public key.
BootMeasurement MeasureBoot(std::string_view config_bytes,
                            std::string_view monitor_identity,
                            const PublicKey& attestation_key);
std::string_view MonitorIdentity();

struct InterruptRange {
  int first = 0;
  int last = 0;  // inclusive
  InterruptPolicy policy;
  bool operator==(const InterruptRange&) const = default;
};

struct RegionChildLine {
  DerivationKind kind = DerivationKind::kAlias;
  PhysRange range;
  std::string name;
  AccessRights rights;
  bool operator==(const RegionChildLine&) const = default;
};

struct RegionDescriptor {
  std::string name;
  RegionStatus status = RegionStatus::kExclusive;
  PhysRange range;
  AccessRights rights;
  bool clean = false;
  bool vital = false;
  std::optional<Digest> hash;
  std::vector<RegionChildLine> children;
  bool operator==(const RegionDescriptor&) const = default;
};

struct DomainDescriptor {
  std::string name;
  Digest register_hash{};
  uint64_t cores = 0;
  uint16_t mon_api = 0;
  bool user_calls = false;
  bool receive = false;
  std::vector<InterruptRange> interrupts;
  // Owned capabilities in table order ("r1", "td2", "ch0").
  std::vector<std::string> members;
  bool operator==(const DomainDescriptor&) const = default;
};

struct ReportHeader {
  std::string hash_name{kHashName};
  std::string signature_scheme{kSignatureScheme};
  uint32_t core_count = 1;
  Digest monitor_measurement{};
  std::optional<std::vector<uint8_t>> nonce;
  std::optional<PublicKey> verifier_key;
  std::optional<PublicKey> domain_key;
  bool operator==(const ReportHeader&) const = default;
};

struct AttestationReport {
  ReportHeader header;
  // Subject first, then its direct Td children.
  std::vector<DomainDescriptor> domains;
  // Subject regions first, then those of the nested children.
  std::vector<RegionDescriptor> regions;
  Signature signature{};

  const DomainDescriptor* FindDomain(std::string_view name) const;
  const RegionDescriptor* FindRegion(std::string_view name) const;
  bool operator==(const AttestationReport&) const = default;
};

struct RemoteAttestation {
  PublicKey verifier_key{};
  std::vector<uint8_t> nonce;
  std::optional<PublicKey> domain_key;
};

// Describes `subject` as seen through `requester`'s capability table. Does
// not check permissions; see Attest. Caller must hold the engine quiescent.
AttestationReport BuildReport(const Engine& engine, DomainId requester,
                              DomainId subject, ReportHeader header);

// Canonical encoding of everything but the signature.
std::vector<uint8_t> SerializeUnsigned(const AttestationReport& report);
// Canonical encoding including the trailing signature.
std::vector<uint8_t> Serialize(const AttestationReport& report);
Result<AttestationReport> ParseReport(std::span<const uint8_t> bytes);

void SignReport(AttestationReport& report, const SigningKey& key);

// Monitor call ATTEST: gate check, subject resolution, build and sign.
Result<AttestationReport> Attest(
    Engine& engine, const SigningKey& key, const BootMeasurement& boot,
    DomainId caller, std::optional<Handle> subject,
    std::optional<std::vector<uint8_t>> nonce = std::nullopt,
    std::optional<RemoteAttestation> remote = std::nullopt);

// Checks the signature, the monitor measurement and, when given, the nonce.
Status VerifyReport(std::span<const uint8_t> bytes, const PublicKey& key,
                    const Digest& expected_pcr,
                    std::optional<std::vector<uint8_t>> expected_nonce =
                        std::nullopt);

// Fig.-style text projection.
std::string RenderText(const AttestationReport& report);

struct Clause {
  std::string name;
  bool holds = false;
  std::string detail;
};

struct Verdict {
  bool holds = false;
  std::vector<Clause> clauses;
  std::string ToString() const;
};

Result<Verdict> IsConfidential(const AttestationReport& report,
                               std::string_view subject);
Result<Verdict> IsEncapsulated(const AttestationReport& report,
                               std::string_view child,
                               std::string_view parent);

}  // namespace capmon

#endif  // CAPMON_ATTESTATION_H_
