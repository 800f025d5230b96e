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

#include <sodium.h>

#include <string>
#include <vector>

#include "capmon/machine.h"
#include "gtest/gtest.h"
#include "test_support.h"

namespace capmon {
namespace {

using testing::BootOrDie;
using testing::Child;
using testing::MakeChild;
using testing::Pages;
using testing::RootHandle;

MachineConfig FigConfig() {
  MachineConfig config;
  config.memory = 0x6000;
  config.cores = 2;
  config.monitor_reserved = {0x5000, 0x6000};
  config.seed = 7;
  return config;
}

Handle FindRegionHandle(const Engine& e, DomainId owner, PhysRange range) {
  for (Handle h = 0; h < e.FindDomain(owner)->owned.size(); ++h) {
    auto cap = e.ResolveHandle(owner, h);
    if (cap && cap->kind == Capability::Kind::kRegion &&
        e.regions().Find(cap->region)->initial_range == range) {
      return h;
    }
  }
  ADD_FAILURE() << "no region " << ToString(range);
  return 0;
}

struct Built {
  Child td1;
  Child td2;
};

// td0 gives td1 an alias of page 1 and a carve of pages 2..5; td1 gives td2
// an alias of page 3 and a carve of page 4.
Built BuildPair(System& sys, uint16_t td2_api = 0b00001110000,
                AttributeRequest r2_attrs = {true, true, true}) {
  Engine& e = *sys.engine;
  DomainId td0 = e.td0();
  for (uint64_t a = 0x2000; a < 0x5000; ++a) sys.machine->PokeByte(a, 0x5a);
  Built b;
  b.td1 = MakeChild(e, td0, kAllApiCalls, 0b11, true, false);
  auto r1 = e.Alias(td0, RootHandle(e), Pages(1, 2), AccessRights(3));
  auto r2 = e.Carve(td0, RootHandle(e), Pages(2, 5), AccessRights::All());
  EXPECT_TRUE(e.Send(td0, *r1, b.td1.handle).ok());
  EXPECT_TRUE(e.Send(td0, *r2, b.td1.handle, r2_attrs).ok());
  EXPECT_TRUE(e.Seal(td0, b.td1.handle).ok());
  DomainId td1 = b.td1.id;
  b.td2 = MakeChild(e, td1, td2_api, 0b01, false, false);
  Handle r2h = FindRegionHandle(e, td1, Pages(2, 5));
  auto r3 = e.Alias(td1, r2h, Pages(3, 4), AccessRights(3));
  auto r4 = e.Carve(td1, r2h, Pages(4, 5), AccessRights::All());
  EXPECT_TRUE(e.Send(td1, *r3, b.td2.handle).ok());
  EXPECT_TRUE(e.Send(td1, *r4, b.td2.handle).ok());
  EXPECT_TRUE(e.Seal(td1, b.td2.handle).ok());
  return b;
}

Digest IndependentSha256(const std::vector<uint8_t>& bytes) {
  Digest d;
  crypto_hash_sha256(d.data(), bytes.data(), bytes.size());
  return d;
}

std::vector<uint8_t> Bytes(std::string_view s) { return {s.begin(), s.end()}; }

TEST(AttestationTest, BootMeasurementMatchesIndependentFold) {
  System sys = BootOrDie(FigConfig());
  ASSERT_EQ(sodium_init() >= 0, true);
  std::vector<Digest> events = {
      IndependentSha256(Bytes(sys.config.ToText())),
      IndependentSha256(Bytes(MonitorIdentity())),
      IndependentSha256({sys.key->public_key().begin(), sys.key->public_key().end()}),
  };
  Digest pcr{};
  for (const Digest& ev : events) {
    std::vector<uint8_t> buf(pcr.begin(), pcr.end());
    buf.insert(buf.end(), ev.begin(), ev.end());
    pcr = IndependentSha256(buf);
  }
  EXPECT_EQ(sys.measurement.pcr, pcr);
  ASSERT_EQ(sys.measurement.events.size(), 3u);
  // The key is a pure function of the seed.
  EXPECT_EQ(DeriveKey(7).public_key(), sys.key->public_key());
  EXPECT_NE(DeriveKey(8).public_key(), sys.key->public_key());
}

TEST(AttestationTest, RoundTripAndVerify) {
  System sys = BootOrDie(FigConfig());
  Built b = BuildPair(sys);
  std::vector<uint8_t> nonce = {1, 2, 3};
  auto report = Attest(*sys.engine, *sys.key, sys.measurement, sys.td0(),
                       b.td1.handle, nonce);
  ASSERT_TRUE(report.ok()) << report.error().ToString();
  std::vector<uint8_t> bytes = Serialize(*report);
  auto parsed = ParseReport(bytes);
  ASSERT_TRUE(parsed.ok());
  EXPECT_EQ(*parsed, *report);
  EXPECT_EQ(Serialize(*parsed), bytes);

  const PublicKey& key = sys.key->public_key();
  const Digest& pcr = sys.measurement.pcr;
  EXPECT_TRUE(VerifyReport(bytes, key, pcr, nonce).ok());
  EXPECT_TRUE(VerifyReport(bytes, key, pcr).ok());
  EXPECT_EQ(VerifyReport(bytes, key, pcr, std::vector<uint8_t>{9}).code(),
            ErrorCode::kNonceMismatch);
  Digest wrong_pcr = pcr;
  wrong_pcr[0] ^= 1;
  EXPECT_EQ(VerifyReport(bytes, key, wrong_pcr).code(),
            ErrorCode::kMeasurementMismatch);
  EXPECT_EQ(VerifyReport(bytes, DeriveKey(8).public_key(), pcr).code(),
            ErrorCode::kBadSignature);

  // Flipping any byte of the signature, or of a region address, is caught.
  std::vector<uint8_t> tampered = bytes;
  tampered.back() ^= 0x80;
  EXPECT_EQ(VerifyReport(tampered, key, pcr).code(), ErrorCode::kBadSignature);
  AttestationReport edited = *report;
  edited.regions[0].range.end += 0x1000;
  std::vector<uint8_t> forged = Serialize(edited);
  EXPECT_EQ(VerifyReport(forged, key, pcr).code(), ErrorCode::kBadSignature);

  std::vector<uint8_t> truncated(bytes.begin(), bytes.begin() + bytes.size() / 2);
  EXPECT_EQ(VerifyReport(truncated, key, pcr).code(), ErrorCode::kParseError);
  EXPECT_EQ(ParseReport(std::vector<uint8_t>{}).code(), ErrorCode::kParseError);
}

TEST(AttestationTest, ContentMatchesEngineState) {
  System sys = BootOrDie(FigConfig());
  Built b = BuildPair(sys);
  auto report = Attest(*sys.engine, *sys.key, sys.measurement, sys.td0(),
                       b.td1.handle);
  ASSERT_TRUE(report.ok());
  ASSERT_EQ(report->domains.size(), 2u);
  const DomainDescriptor& d1 = report->domains[0];
  const DomainDescriptor& d2 = report->domains[1];
  EXPECT_EQ(d1.name, "td1");
  EXPECT_EQ(d2.name, "td2");
  EXPECT_EQ(d1.members, (std::vector<std::string>{"r1", "r2", "td2"}));
  EXPECT_EQ(d2.members, (std::vector<std::string>{"r3", "r4"}));
  EXPECT_EQ(d1.cores, 0b11u);
  EXPECT_EQ(d2.cores, 0b01u);
  EXPECT_EQ(d1.mon_api, kAllApiCalls);
  EXPECT_TRUE(d1.receive);
  EXPECT_FALSE(d2.receive);
  EXPECT_EQ(d1.register_hash, *sys.engine->FindDomain(b.td1.id)->register_hash);

  const RegionDescriptor* r2 = report->FindRegion("r2");
  ASSERT_NE(r2, nullptr);
  EXPECT_EQ(r2->status, RegionStatus::kExclusive);
  EXPECT_EQ(r2->range, Pages(2, 5));
  EXPECT_TRUE(r2->clean && r2->vital && r2->hash.has_value());
  // The hash covers the initial content, all 0x5a.
  std::vector<uint8_t> content(0x3000, 0x5a);
  EXPECT_EQ(*r2->hash, IndependentSha256(content));
  ASSERT_EQ(r2->children.size(), 2u);
  EXPECT_EQ(r2->children[0],
            (RegionChildLine{DerivationKind::kAlias, Pages(3, 4), "r3",
                             AccessRights(3)}));
  EXPECT_EQ(r2->children[1],
            (RegionChildLine{DerivationKind::kCarve, Pages(4, 5), "r4",
                             AccessRights::All()}));
  EXPECT_EQ(report->FindRegion("r1")->status, RegionStatus::kAliased);
}

TEST(AttestationTest, NamesAreFreshAndReportIsStable) {
  System plain = BootOrDie(FigConfig());
  Built b1 = BuildPair(plain);
  auto first = Attest(*plain.engine, *plain.key, plain.measurement, plain.td0(),
                      b1.td1.handle);

  // Burn global ids before building the same configuration.
  System noisy = BootOrDie(FigConfig());
  Engine& e = *noisy.engine;
  for (int i = 0; i < 3; ++i) {
    auto h = e.Create(e.td0());
    ASSERT_TRUE(e.RevokeDomain(e.td0(), *h).ok());
    auto r = e.Alias(e.td0(), RootHandle(e), Pages(0, 1), AccessRights(1));
    ASSERT_TRUE(e.RevokeRegion(e.td0(), RootHandle(e), 0).ok());
    (void)r;
  }
  ASSERT_TRUE(e.SelfChannel(e.td0()).ok());
  Built b2 = BuildPair(noisy);
  EXPECT_NE(b1.td1.id, b2.td1.id);
  auto second = Attest(e, *noisy.key, noisy.measurement, e.td0(), b2.td1.handle);
  ASSERT_TRUE(first.ok() && second.ok());
  EXPECT_EQ(RenderText(*first), RenderText(*second));

  // Attesting again gives the same bytes.
  auto again = Attest(*plain.engine, *plain.key, plain.measurement, plain.td0(),
                      b1.td1.handle);
  EXPECT_EQ(Serialize(*first), Serialize(*again));
}

TEST(AttestationTest, OnlyDirectChildrenAreDescribed) {
  System sys = BootOrDie(FigConfig());
  Engine& e = *sys.engine;
  Built b = BuildPair(sys, 0b00001110000 | ApiBit(ApiCall::kCreate) |
                               ApiBit(ApiCall::kSetGet));
  // td2 is sealed without SEAL, so it can create but not seal a child.
  ASSERT_TRUE(e.Create(b.td2.id).ok());
  auto report = Attest(e, *sys.key, sys.measurement, sys.td0(), b.td1.handle);
  ASSERT_TRUE(report.ok());
  EXPECT_EQ(report->domains.size(), 2u);
  // td2 is listed without its own Td children.
  EXPECT_EQ(report->FindDomain("td2")->members,
            (std::vector<std::string>{"r3", "r4"}));
  EXPECT_EQ(report->FindDomain("td3"), nullptr);
}

TEST(AttestationTest, GateAndSubjects) {
  System sys = BootOrDie(FigConfig());
  Engine& e = *sys.engine;
  Child quiet = MakeChild(e, e.td0(), 0, 1);
  EXPECT_EQ(Attest(e, *sys.key, sys.measurement, quiet.id, std::nullopt).code(),
            ErrorCode::kPolicyDenied);
  EXPECT_EQ(Attest(e, *sys.key, sys.measurement, e.td0(), 42).code(),
            ErrorCode::kNotOwner);
  EXPECT_EQ(Attest(e, *sys.key, sys.measurement, e.td0(), RootHandle(e)).code(),
            ErrorCode::kWrongKind);
  auto self = Attest(e, *sys.key, sys.measurement, e.td0(), std::nullopt);
  ASSERT_TRUE(self.ok());
  EXPECT_EQ(self->domains[0].name, "td0");
}

TEST(AttestationTest, TextProjection) {
  System sys = BootOrDie(FigConfig());
  Built b = BuildPair(sys);
  auto report = Attest(*sys.engine, *sys.key, sys.measurement, sys.td0(),
                       b.td1.handle);
  ASSERT_TRUE(report.ok());
  std::string text = RenderText(*report);
  for (const char* line : {
           "td1 = domain {r1, r2, td2}",
           "|cores: 0b11",
           "|mon.api: 0b11111111111 | RECEIVE",
           "td2 = domain {r3, r4}",
           "|cores: 0b01",
           "|mon.api: 0b00001110000 | !RECEIVE",
           "r1 = aliased 0x1000 0x2000 with RW_",
           "r2 = exclusive 0x2000 0x5000 with RWX, HASH|CLEAN|VITAL",
           "|alias at 0x3000 0x4000 for r3 with RW_",
           "|carve at 0x4000 0x5000 for r4 with RWX",
       }) {
    EXPECT_NE(text.find(line), std::string::npos) << line << "\n" << text;
  }
}

std::vector<bool> Clauses(const Verdict& v) {
  std::vector<bool> out;
  for (const Clause& c : v.clauses) out.push_back(c.holds);
  return out;
}

TEST(AttestationTest, Predicates) {
  System sys = BootOrDie(FigConfig());
  Built b = BuildPair(sys);
  auto report = Attest(*sys.engine, *sys.key, sys.measurement, sys.td0(),
                       b.td1.handle);
  ASSERT_TRUE(report.ok());
  auto conf = IsConfidential(*report, "td1");
  ASSERT_TRUE(conf.ok());
  EXPECT_TRUE(conf->holds) << conf->ToString();
  // td2 has an exclusive region, but it is not CLEAN.
  auto conf2 = IsConfidential(*report, "td2");
  EXPECT_EQ(Clauses(*conf2), (std::vector<bool>{true, false, true, true}));
  auto enc = IsEncapsulated(*report, "td2", "td1");
  ASSERT_TRUE(enc.ok());
  EXPECT_TRUE(enc->holds) << enc->ToString();
  // td1's regions do not come from td2.
  EXPECT_FALSE(IsEncapsulated(*report, "td1", "td2")->holds);
  EXPECT_EQ(IsConfidential(*report, "td9").code(), ErrorCode::kUnknownSubject);

  // Granting SEND breaks encapsulation and nothing else.
  System other = BootOrDie(FigConfig());
  Built sender = BuildPair(other, 0b00001110100);
  auto r = Attest(*other.engine, *other.key, other.measurement, other.td0(),
                  sender.td1.handle);
  EXPECT_EQ(Clauses(*IsEncapsulated(*r, "td2", "td1")),
            (std::vector<bool>{true, false, true}));

  // Without CLEAN on r2, td1 is no longer confidential.
  System unclean = BootOrDie(FigConfig());
  Built u = BuildPair(unclean, 0b00001110000, {true, false, true});
  auto ru = Attest(*unclean.engine, *unclean.key, unclean.measurement,
                   unclean.td0(), u.td1.handle);
  EXPECT_EQ(Clauses(*IsConfidential(*ru, "td1")),
            (std::vector<bool>{true, false, true, true}));
}

}  // namespace
}  // namespace capmon
