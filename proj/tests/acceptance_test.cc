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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "capmon/attestation.h"
#include "capmon/engine.h"
#include "capmon/fuzz.h"
#include "capmon/machine.h"
#include "capmon/oracle.h"
#include "capmon/replay.h"
#include "capmon/scenario.h"

namespace capmon {
namespace {

constexpr uint64_t kPage = kPageSize;

struct Outcome {
  bool pass = true;
  std::string detail;
  void Fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

std::string ReadSource(const std::string& rel) {
  std::string path = std::string(CAPMON_SOURCE_DIR) + "/" + rel;
  FILE* f = std::fopen(path.c_str(), "rb");
  if (f == nullptr) return {};
  std::string out;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, n);
  std::fclose(f);
  return out;
}

MachineConfig FigConfig() {
  MachineConfig config;
  config.memory = 0x6000;
  config.cores = 2;
  config.monitor_reserved = {0x5000, 0x6000};
  config.seed = 7;
  return config;
}

PhysRange Pages(uint64_t first, uint64_t last) { return {first * kPage, last * kPage}; }

Handle RootHandle(const Engine& e) {
  return *e.FindHandle(e.td0(), Capability::ForRegion(e.root_region()));
}

std::string OracleDiff(const Engine& e) {
  auto oracle = Oracle::Replay(e.log());
  if (!oracle.ok()) return oracle.error().ToString();
  auto diff = oracle->Diff(e);
  return diff.empty() ? "" : diff.front() + " (" + std::to_string(diff.size()) + " lines)";
}

// A script run that keeps the system alive.
struct ScriptRun {
  std::unique_ptr<System> sys;
  std::unique_ptr<ScenarioRunner> runner;
  ScenarioResult result;
  std::string error;
};

ScriptRun RunScript(const std::string& config_path, const std::string& script_path) {
  ScriptRun r;
  auto config = MachineConfig::Parse(ReadSource(config_path));
  if (!config.ok()) {
    r.error = config.error().ToString();
    return r;
  }
  auto sys = Boot(*config);
  if (!sys.ok()) {
    r.error = sys.error().ToString();
    return r;
  }
  r.sys = std::make_unique<System>(std::move(sys).value());
  auto script = ParseScenario(ReadSource(script_path));
  if (!script.ok()) {
    r.error = script.error().ToString();
    return r;
  }
  r.runner = std::make_unique<ScenarioRunner>(*r.sys);
  r.result = r.runner->Run(*script);
  if (r.result.exit_code != 0) {
    r.error = script_path + " exit " + std::to_string(r.result.exit_code) +
              (r.result.messages.empty() ? "" : ": " + r.result.messages.front());
  }
  return r;
}

// ---------------------------------------------------------------------------
// 1. Region derivation example.

Outcome Criterion1() {
  Outcome out;
  auto start = std::chrono::steady_clock::now();
  auto sys = Boot(FigConfig());
  Engine& e = *sys->engine;
  DomainId td0 = e.td0();
  const uint64_t a0 = 0x0000, a1 = 0x1000, a2 = 0x2000, a3 = 0x3000, a4 = 0x4000,
                 a5 = 0x5000;
  Handle r0 = RootHandle(e);
  auto r1 = e.Alias(td0, r0, {a1, a2}, AccessRights(3));
  auto r2 = e.Carve(td0, r0, {a2, a5}, AccessRights::All());
  if (!r1.ok() || !r2.ok()) {
    out.Fail("derivation from r0 failed");
    return out;
  }
  auto r3 = e.Alias(td0, *r2, {a3, a4}, AccessRights(3));
  auto r4 = e.Carve(td0, *r2, {a4, a5}, AccessRights::All());
  if (!r3.ok() || !r4.ok()) {
    out.Fail("derivation from r2 failed");
    return out;
  }
  auto view = [&](Handle h) {
    return *e.regions().View(e.ResolveHandle(td0, h)->region);
  };
  const AccessRights rwx = AccessRights::All();
  const EffectiveView want_r0 = {{{a0, a1}, rwx, RegionStatus::kExclusive},
                                 {{a1, a2}, rwx, RegionStatus::kAliased}};
  const EffectiveView want_r2 = {{{a2, a3}, rwx, RegionStatus::kExclusive},
                                 {{a3, a4}, rwx, RegionStatus::kAliased}};
  if (view(r0) != want_r0) out.Fail("r0 view " + ToString(view(r0)));
  if (view(*r2) != want_r2) out.Fail("r2 view " + ToString(view(*r2)));
  if (view(*r4) != EffectiveView{{{a4, a5}, rwx, RegionStatus::kExclusive}}) {
    out.Fail("r4 view " + ToString(view(*r4)));
  }
  if (std::string d = OracleDiff(e); !d.empty()) out.Fail("oracle: " + d);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (secs >= 1.0) out.Fail("took " + std::to_string(secs) + " s");
  if (out.pass) {
    out.detail = "r0 = " + ToString(view(r0)) + ", r2 = " + ToString(view(*r2)) +
                 ", oracle agrees, " + std::to_string(static_cast<int>(secs * 1000)) +
                 " ms";
  }
  return out;
}

// ---------------------------------------------------------------------------
// 2. Attestation text of the nested example.

Outcome Criterion2() {
  Outcome out;
  std::vector<std::vector<uint8_t>> bytes;
  std::vector<std::string> texts;
  for (int run = 0; run < 3; ++run) {
    ScriptRun r = RunScript("scenarios/fig.cfg", "scenarios/fig5.tyscn");
    if (!r.error.empty()) {
      out.Fail(r.error);
      return out;
    }
    const AttestationReport& report = r.runner->reports().at("fig5");
    bytes.push_back(Serialize(report));
    texts.push_back(RenderText(report));
    if (!VerifyReport(bytes.back(), r.sys->key->public_key(), r.sys->measurement.pcr).ok()) {
      out.Fail("report does not verify");
    }
  }
  const std::string& text = texts[0];
  int found = 0;
  for (const char* line : {
           "|cores: 0b11\n",
           "|cores: 0b01\n",
           "|mon.api: 0b11111111111 | RECEIVE\n",
           "|mon.api: 0b00001110000 | !RECEIVE\n",
           "r2 = exclusive 0x2000 0x5000 with RWX, HASH|CLEAN|VITAL\n",
           "|alias at 0x3000 0x4000 for r3 with RW_\n",
           "|carve at 0x4000 0x5000 for r4 with RWX\n",
       }) {
    if (text.find(line) == std::string::npos) {
      out.Fail(std::string("missing line: ") + line);
    } else {
      ++found;
    }
  }
  for (size_t i = 1; i < bytes.size(); ++i) {
    if (bytes[i] != bytes[0] || texts[i] != texts[0]) out.Fail("report differs between runs");
  }
  std::string golden = ReadSource("tests/golden/fig5_td1.txt");
  if (golden != text) out.Fail("text differs from tests/golden/fig5_td1.txt");
  if (out.pass) {
    out.detail = std::to_string(found) + " required lines present, " +
                 std::to_string(bytes[0].size()) +
                 " report bytes identical over 3 runs and to the golden text";
  }
  return out;
}

// ---------------------------------------------------------------------------
// 3. Revocation cascade.

Outcome Criterion3() {
  Outcome out;
  ScriptRun r = RunScript("scenarios/fig.cfg", "scenarios/fig5.tyscn");
  if (!r.error.empty()) {
    out.Fail(r.error);
    return out;
  }
  Engine& e = *r.sys->engine;
  Machine& m = *r.sys->machine;
  const auto& regions = r.runner->region_names();
  const auto& domains = r.runner->domain_names();
  RegionId r2 = regions.at("r2"), r3 = regions.at("r3"), r4 = regions.at("r4");
  DomainId td1 = domains.at("td1"), td2 = domains.at("td2");
  for (uint64_t a = 0x2000; a < 0x5000; ++a) m.PokeByte(a, static_cast<uint8_t>(a | 1));

  const auto& kids = e.regions().Find(e.root_region())->children;
  size_t index = std::find(kids.begin(), kids.end(), r2) - kids.begin();
  Status st = e.RevokeRegion(e.td0(), RootHandle(e), index);
  if (!st.ok()) {
    out.Fail("revoke_region(r0, r2): " + st.error().ToString());
    return out;
  }
  for (RegionId id : {r2, r3, r4}) {
    if (e.regions().Find(id) != nullptr) out.Fail(RegionName(id) + " survived");
  }
  EffectiveView r0 = *e.regions().View(e.root_region());
  if (!ViewCovers(r0, {0x2000, 0x5000}) ||
      ViewLookup(r0, 0x2000)->status != RegionStatus::kExclusive) {
    out.Fail("r0 did not regain [a2,a5): " + ToString(r0));
  }
  for (uint64_t a = 0x2000; a < 0x5000; ++a) {
    if (m.PeekByte(a) != 0) {
      out.Fail("byte " + Hex(a) + " not zeroed");
      break;
    }
  }
  if (e.FindDomain(td1)->live()) out.Fail("td1 still live");
  if (e.FindDomain(td2)->live()) out.Fail("td2 still live");
  if (std::string d = OracleDiff(e); !d.empty()) out.Fail("oracle: " + d);
  if (out.pass) {
    out.detail = "r2, r3, r4 destroyed; r0 = " + ToString(r0) +
                 "; [a2,a5) zero; td1 and td2 revoked; oracle agrees";
  }
  return out;
}

// ---------------------------------------------------------------------------
// 4. Randomized differential run.

Outcome Criterion4() {
  Outcome out;
  auto start = std::chrono::steady_clock::now();
  uint64_t ops = 0, accepted = 0, checks = 0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    FuzzOptions options;
    options.seed = seed;
    options.operations = 5000;
    FuzzResult r = RunFuzz(options);
    ops += r.operations;
    accepted += r.accepted;
    checks += r.oracle_checks;
    if (!r.ok()) out.Fail(r.failures.front());
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (ops < 100000) out.Fail("only " + std::to_string(ops) + " operations");
  if (secs >= 300) out.Fail("took " + std::to_string(secs) + " s");
  if (out.pass) {
    out.detail = std::to_string(ops) + " operations over 20 seeds (" +
                 std::to_string(accepted) + " accepted), " + std::to_string(checks) +
                 " oracle comparisons, rejected operations left the digest unchanged, " +
                 std::to_string(static_cast<int>(secs)) + " s";
  }
  return out;
}

// ---------------------------------------------------------------------------
// 5. Interrupt routing on random trees.

constexpr int kTestVectors = 6;  // vectors 40..45

Outcome Criterion5() {
  Outcome out;
  std::mt19937_64 rng(2024);
  auto uniform = [&](uint64_t n) { return std::uniform_int_distribution<uint64_t>(0, n - 1)(rng); };
  int observed_total = 0;
  for (int trial = 0; trial < 1000 && out.pass; ++trial) {
    MachineConfig config;
    config.memory = 9 * kPage;
    config.cores = 1;
    config.monitor_reserved = {8 * kPage, 9 * kPage};
    config.seed = trial;
    auto booted = Boot(config);
    Engine& e = *booted->engine;
    DomainId td0 = e.td0();
    std::vector<DomainId> nodes = {td0};
    std::map<DomainId, DomainId> parent;
    int n = 1 + static_cast<int>(uniform(8));
    for (int i = 0; i < n; ++i) {
      DomainId p = nodes[uniform(nodes.size())];
      auto h = e.Create(p);
      DomainId c = e.ResolveHandle(p, *h)->domain;
      (void)e.SetPolicy(p, *h, PolicyField::Cores(), 1);
      (void)e.SetPolicy(p, *h, PolicyField::MonApi(), kAllApiCalls);
      for (int v = 40; v < 40 + kTestVectors; ++v) {
        uint64_t vis = uniform(3);
        bool parent_delivers =
            p == td0 || e.FindDomain(p)->policies.interrupts[v].visibility ==
                            InterruptVisibility::kDeliver;
        if (vis == 2 && !parent_delivers) vis = uniform(2);
        InterruptPolicy policy{static_cast<InterruptVisibility>(vis),
                               static_cast<uint32_t>(uniform(4))};
        (void)e.SetPolicy(p, *h, PolicyField::Interrupt(v), policy.Encode());
      }
      if (!e.Seal(p, *h).ok()) {
        out.Fail("seal failed in trial " + std::to_string(trial));
        break;
      }
      nodes.push_back(c);
      parent[c] = p;
    }
    // Run down to a random domain.
    DomainId running = nodes[uniform(nodes.size())];
    std::vector<DomainId> path;
    for (DomainId d = running; d != td0; d = parent[d]) path.push_back(d);
    std::reverse(path.begin(), path.end());
    DomainId cur = td0;
    for (DomainId d : path) {
      Status st = e.Switch(cur, 0, e.FindHandle(cur, Capability::ForDomain(d)));
      if (!st.ok()) out.Fail("switch: " + st.error().ToString());
      cur = d;
    }
    int vector = 40 + static_cast<int>(uniform(kTestVectors));

    auto oracle = Oracle::Replay(e.log());
    if (!oracle.ok()) {
      out.Fail(oracle.error().ToString());
      break;
    }
    uint64_t want_handler = HandlerOf(oracle->tree(), running.value, vector);
    std::vector<uint64_t> want_path = ReportPath(oracle->tree(), running.value, vector);

    auto handler = e.RouteInterrupt(0, vector);
    if (!handler.ok() || handler->value != want_handler) {
      out.Fail("trial " + std::to_string(trial) + ": handler " +
               (handler.ok() ? DomainName(*handler) : "error") + ", oracle td" +
               std::to_string(want_handler));
      break;
    }
    // Walk back down, recording every domain that observes the interrupt.
    std::vector<uint64_t> observed;
    int guard = 0;
    while (e.core(0).current != running && ++guard < 32) {
      DomainId now = e.core(0).current;
      if (e.core(0).suspended.empty()) break;
      DomainId next = e.core(0).suspended.front().domain;
      Status st = e.Switch(now, 0, e.FindHandle(now, Capability::ForDomain(next)));
      if (!st.ok()) {
        out.Fail("return switch: " + st.error().ToString());
        break;
      }
      const Payload& p = e.core(0).payload;
      if (e.core(0).current != running) {
        if (p != Payload{Payload::Kind::kInterrupt, static_cast<uint64_t>(vector)}) {
          out.Fail("observer entered with " + p.ToString());
        }
        observed.push_back(e.core(0).current.value);
      } else if (p != Payload{}) {
        out.Fail("resumed domain entered with " + p.ToString());
      }
    }
    if (e.core(0).current != running) out.Fail("did not resume the interrupted domain");
    if (observed != want_path) {
      out.Fail("trial " + std::to_string(trial) + ": observers differ from ReportPath");
    }
    observed_total += static_cast<int>(observed.size());
  }
  if (out.pass) {
    out.detail = "1000 trees: handler equals HandlerOf in every case, " +
                 std::to_string(observed_total) +
                 " observations all on the Report path in root-to-leaf order";
  }
  return out;
}

// ---------------------------------------------------------------------------
// 6. Concurrent stress.

Outcome Criterion6() {
  Outcome out;
  MachineConfig config = FuzzMachineConfig(99);
  auto booted = Boot(config, Mode::kConcurrent);
  System& sys = *booted;
  Engine& e = *sys.engine;
  Machine& m = *sys.machine;
  DomainId td0 = e.td0();

  // Two children; child A runs on core 1 with some memory of its own.
  std::vector<Handle> children;
  for (int i = 0; i < 2; ++i) {
    auto h = e.Create(td0);
    (void)e.SetPolicy(td0, *h, PolicyField::Cores(), 0b1111);
    (void)e.SetPolicy(td0, *h, PolicyField::ReceiveAfterSeal(), 1);
    (void)e.Seal(td0, *h);
    children.push_back(*h);
  }
  auto mem = e.Carve(td0, RootHandle(e), Pages(8, 12), AccessRights::All());
  (void)e.Send(td0, *mem, children[0]);
  (void)e.Switch(td0, 1, children[0]);

  // Views of every live domain, per published version.
  std::mutex snap_mu;
  std::map<uint64_t, std::map<uint64_t, EffectiveView>> snapshots;
  auto snapshot = [&] {
    std::map<uint64_t, EffectiveView> views;
    for (const auto& [id, d] : e.domains()) {
      if (d.live()) views[id.value] = e.DomainView(id);
    }
    std::lock_guard<std::mutex> lock(snap_mu);
    snapshots[e.version()] = std::move(views);
  };
  {
    Engine::ScopedLock lock(e);
    snapshot();
  }
  m.set_publish_observer(snapshot);
  m.clear_logs();

  std::atomic<int> workers_left{2};
  std::atomic<uint64_t> ops_ok{0}, ops_failed{0};
  std::vector<std::thread> threads;
  for (CoreId core = 0; core < 4; ++core) {
    threads.emplace_back([&, core] {
      Machine::CoreScope scope(m, core);
      std::mt19937_64 rng(1000 + core);
      auto uniform = [&](uint64_t n) {
        return std::uniform_int_distribution<uint64_t>(0, n - 1)(rng);
      };
      const bool worker = core >= 2;
      for (int i = 0;; ++i) {
        uint64_t addr = uniform(64) * kPage + uniform(kPage);
        AccessKind kind = uniform(2) ? AccessKind::kRead : AccessKind::kWrite;
        (void)m.Access(core, addr, kind);
        if (!worker) {
          if (workers_left.load() == 0 || i >= 40000) break;
          if (i % 64 == 0) std::this_thread::yield();
          continue;
        }
        if (i % 8 != 0) continue;
        if (i / 8 >= 400) break;
        Status st;
        if (uniform(2)) {
          uint64_t page = 16 + uniform(40);
          auto r = e.Carve(td0, RootHandle(e), Pages(page, page + 1), AccessRights::All());
          st = r.ok() ? e.Send(td0, *r, children[uniform(2)]) : Status(r.error());
        } else {
          size_t kids = 0;
          {
            Engine::ScopedLock lock(e);
            kids = e.regions().Find(e.root_region())->children.size();
          }
          st = e.RevokeRegion(td0, RootHandle(e), uniform(kids + 1));
        }
        (st.ok() ? ops_ok : ops_failed)++;
      }
      if (worker) --workers_left;
    });
  }
  for (std::thread& t : threads) t.join();
  m.set_publish_observer({});

  uint64_t checked = 0, windows = 0;
  for (const AccessRecord& rec : m.access_log()) {
    if (rec.version_before != rec.version_after) {
      ++windows;
      continue;
    }
    auto vit = snapshots.find(rec.version_before);
    if (vit == snapshots.end()) {
      out.Fail("no snapshot for version " + std::to_string(rec.version_before));
      break;
    }
    auto dit = vit->second.find(rec.domain.value);
    const ViewSegment* seg =
        dit == vit->second.end() ? nullptr : ViewLookup(dit->second, rec.address);
    bool allowed = seg != nullptr && seg->rights.Allows(static_cast<uint8_t>(rec.kind));
    if (rec.allowed && !allowed) {
      out.Fail("interposed access: " + rec.ToString() + " at version " +
               std::to_string(rec.version_before));
      break;
    }
    ++checked;
  }
  // Step-mode serialization of the same log.
  auto replayed = ReplayLog(config, e.log());
  if (!replayed.ok()) {
    out.Fail("replay: " + replayed.error().ToString());
  } else if (replayed->engine->StateDigest() != e.StateDigest()) {
    out.Fail("replayed state differs");
  }
  if (std::string d = OracleDiff(e); !d.empty()) out.Fail("oracle: " + d);
  if (ops_ok.load() < 50) out.Fail("too few operations accepted");
  if (out.pass) {
    out.detail = std::to_string(ops_ok.load() + ops_failed.load()) +
                 " concurrent operations (" + std::to_string(ops_ok.load()) +
                 " accepted) from 2 cores while 4 cores probed; " +
                 std::to_string(checked) + " accesses checked against " +
                 std::to_string(snapshots.size()) + " published versions, " +
                 std::to_string(windows) +
                 " straddled a publish; step-mode replay reaches the same digest";
  }
  return out;
}

// ---------------------------------------------------------------------------
// 7. Predicates on the inference pipeline and its mutants.

struct PipelineClauses {
  std::vector<std::pair<std::string, bool>> clauses;
  bool confidential = false;
  bool encapsulated = false;
  bool verified = false;
};

std::optional<PipelineClauses> Evaluate(const std::string& script, Outcome& out) {
  ScriptRun r = RunScript("scenarios/llm.cfg", script);
  if (!r.error.empty()) {
    out.Fail(r.error);
    return std::nullopt;
  }
  const auto& reports = r.runner->reports();
  const AttestationReport& enclave = reports.at("enclave");
  const AttestationReport& cvm = reports.at("cvm");
  PipelineClauses pc;
  const PublicKey& key = r.sys->key->public_key();
  const Digest& pcr = r.sys->measurement.pcr;
  std::vector<uint8_t> nonce = *FromHex("6d6f64656c2d6f776e6572");
  pc.verified = VerifyReport(Serialize(enclave), key, pcr, nonce).ok() &&
                VerifyReport(Serialize(cvm), key, pcr).ok();
  // The enclave attests itself, so it is the report's td0.
  auto conf = IsConfidential(enclave, "td0");
  auto enc = IsEncapsulated(cvm, "td2", "td1");
  if (!conf.ok() || !enc.ok()) {
    out.Fail("predicate evaluation failed");
    return std::nullopt;
  }
  pc.confidential = conf->holds;
  pc.encapsulated = enc->holds;
  for (const Clause& c : conf->clauses) pc.clauses.push_back({c.name, c.holds});
  for (const Clause& c : enc->clauses) pc.clauses.push_back({c.name, c.holds});
  return pc;
}

Outcome Criterion7() {
  Outcome out;
  auto base = Evaluate("scenarios/llm.tyscn", out);
  if (!base) return out;
  if (!base->verified) out.Fail("reports do not verify");
  if (!base->confidential) out.Fail("is_confidential(td2) false");
  if (!base->encapsulated) out.Fail("is_encapsulated(td2, td1) false");
  struct Mutant {
    const char* script;
    const char* clause;
  };
  std::string flips;
  for (Mutant mu : {Mutant{"scenarios/llm_send_bit.tyscn", "no-send"},
                    Mutant{"scenarios/llm_no_clean.tyscn", "clean-on-revoke"},
                    Mutant{"scenarios/llm_alias_td0.tyscn", "exclusive-memory"}}) {
    auto m = Evaluate(mu.script, out);
    if (!m) return out;
    std::vector<std::string> changed;
    for (size_t i = 0; i < m->clauses.size(); ++i) {
      if (m->clauses[i].second != base->clauses[i].second) {
        changed.push_back(m->clauses[i].first);
      }
    }
    if (changed != std::vector<std::string>{mu.clause}) {
      std::string got;
      for (const auto& c : changed) got += (got.empty() ? "" : ",") + c;
      out.Fail(std::string(mu.script) + " flipped {" + got + "}, expected " + mu.clause);
    }
    flips += std::string(flips.empty() ? "" : ", ") + mu.clause;
  }
  if (out.pass) {
    out.detail = "reports verify, is_confidential(td2) and is_encapsulated(td2, td1) "
                 "hold; mutants flip exactly: " + flips;
  }
  return out;
}

// ---------------------------------------------------------------------------
// 8. API gates.

Outcome Criterion8() {
  Outcome out;
  int succeeded = 0, attempts = 0;
  for (int gate = 0; gate < kNumApiCalls; ++gate) {
    for (int call = 0; call < kNumApiCalls; ++call) {
      auto booted = Boot(FigConfig());
      System& sys = *booted;
      Engine& e = *sys.engine;
      DomainId td0 = e.td0();
      uint16_t api = kAllApiCalls & ~(1u << gate);
      auto dh = e.Create(td0);
      DomainId d = e.ResolveHandle(td0, *dh)->domain;
      (void)e.SetPolicy(td0, *dh, PolicyField::Cores(), 1);
      (void)e.SetPolicy(td0, *dh, PolicyField::MonApi(), api);
      (void)e.SetPolicy(td0, *dh, PolicyField::ReceiveAfterSeal(), 1);
      auto mem = e.Carve(td0, RootHandle(e), Pages(1, 5), AccessRights::All());
      (void)e.Send(td0, *mem, *dh);
      // A sealed receiver reachable through a channel.
      auto eh = e.Create(td0);
      (void)e.SetPolicy(td0, *eh, PolicyField::ReceiveAfterSeal(), 1);
      (void)e.Seal(td0, *eh);
      auto ch = e.GetChan(td0, *eh);
      (void)e.Send(td0, *ch, *dh);
      (void)e.Seal(td0, *dh);
      (void)e.Switch(td0, 0, *dh);
      Handle region = *e.FindHandle(d, Capability::ForRegion(e.ResolveHandle(d, 0)->region));
      Handle chan = 1;
      std::optional<Handle> child;
      if (gate != static_cast<int>(ApiCall::kCreate)) child = *e.Create(d);
      if (gate != static_cast<int>(ApiCall::kCarve)) {
        (void)e.Carve(d, region, Pages(1, 2), AccessRights(1));
      } else {
        (void)e.Alias(d, region, Pages(1, 2), AccessRights(1));
      }
      Handle none = 99;

      Digest before = e.StateDigest();
      Status st;
      switch (static_cast<ApiCall>(call)) {
        case ApiCall::kCreate: {
          auto r = e.Create(d);
          st = r.ok() ? OkStatus() : Status(r.error());
          break;
        }
        case ApiCall::kSetGet:
          st = e.SetPolicy(d, child.value_or(none), PolicyField::Cores(), 1);
          break;
        case ApiCall::kSend:
          st = e.Send(d, region, chan);
          break;
        case ApiCall::kSeal:
          st = e.Seal(d, child.value_or(none));
          break;
        case ApiCall::kAttest: {
          auto r = Attest(e, *sys.key, sys.measurement, d, std::nullopt);
          st = r.ok() ? OkStatus() : Status(r.error());
          break;
        }
        case ApiCall::kEnumerate: {
          auto r = e.Enumerate(d, 0);
          st = r.ok() ? OkStatus() : Status(r.error());
          break;
        }
        case ApiCall::kSwitch:
          st = e.Switch(d, 0, std::nullopt);
          break;
        case ApiCall::kAlias: {
          auto r = e.Alias(d, region, Pages(3, 4), AccessRights(1));
          st = r.ok() ? OkStatus() : Status(r.error());
          break;
        }
        case ApiCall::kCarve: {
          auto r = e.Carve(d, region, Pages(4, 5), AccessRights(1));
          st = r.ok() ? OkStatus() : Status(r.error());
          break;
        }
        case ApiCall::kRevoke:
          st = e.RevokeRegion(d, region, 0);
          break;
        case ApiCall::kGetChan: {
          auto r = e.SelfChannel(d);
          st = r.ok() ? OkStatus() : Status(r.error());
          break;
        }
      }
      ++attempts;
      std::string name(ToString(static_cast<ApiCall>(call)));
      std::string gate_name(ToString(static_cast<ApiCall>(gate)));
      if (call == gate) {
        if (st.ok() || st.code() != ErrorCode::kPolicyDenied) {
          out.Fail(name + " not denied with its bit clear");
        }
        if (e.StateDigest() != before) out.Fail(name + " changed state when denied");
      } else if (!st.ok()) {
        // Only calls that need a child may fail when CREATE is missing.
        bool needs_child = call == static_cast<int>(ApiCall::kSetGet) ||
                           call == static_cast<int>(ApiCall::kSeal);
        if (st.code() == ErrorCode::kPolicyDenied ||
            !(gate == static_cast<int>(ApiCall::kCreate) && needs_child)) {
          out.Fail(name + " failed with " + gate_name + " clear: " + st.error().ToString());
        }
      } else {
        ++succeeded;
      }
    }
  }
  if (out.pass) {
    out.detail = "11 gates x 11 calls: each call denied only by its own bit with the "
                 "digest unchanged; " + std::to_string(succeeded) + " of " +
                 std::to_string(attempts - 11) +
                 " other calls succeeded (the rest need a child, which CREATE gates)";
  }
  return out;
}

// ---------------------------------------------------------------------------
// 9. Monotonicity.

Outcome Criterion9() {
  Outcome out;
  std::mt19937_64 rng(77);
  auto uniform = [&](uint64_t n) { return std::uniform_int_distribution<uint64_t>(0, n - 1)(rng); };
  int escalating = 0, plain = 0;
  MachineConfig config = FuzzMachineConfig(5);
  for (int round = 0; round < 100 && out.pass; ++round) {
    auto booted = Boot(config);
    Engine& e = *booted->engine;
    DomainId td0 = e.td0();
    // A sealed middle domain with random limits.
    uint64_t cores = 1 + uniform(15);
    uint16_t api = static_cast<uint16_t>(uniform(kAllApiCalls + 1)) |
                   ApiBit(ApiCall::kSetGet) | ApiBit(ApiCall::kCreate) |
                   ApiBit(ApiCall::kAlias) | ApiBit(ApiCall::kCarve) |
                   ApiBit(ApiCall::kRevoke);
    bool receive = uniform(2), user = uniform(2);
    uint8_t rights = static_cast<uint8_t>(1 + uniform(7));
    std::vector<bool> delivers(16);
    auto mh = e.Create(td0);
    DomainId mid = e.ResolveHandle(td0, *mh)->domain;
    (void)e.SetPolicy(td0, *mh, PolicyField::Cores(), cores);
    (void)e.SetPolicy(td0, *mh, PolicyField::MonApi(), api);
    (void)e.SetPolicy(td0, *mh, PolicyField::ReceiveAfterSeal(), receive);
    (void)e.SetPolicy(td0, *mh, PolicyField::UserCalls(), user);
    for (int v = 0; v < 16; ++v) {
      delivers[v] = uniform(2);
      (void)e.SetPolicy(td0, *mh, PolicyField::Interrupt(v),
                        delivers[v] ? static_cast<uint64_t>(InterruptVisibility::kDeliver) : 0);
    }
    auto mem = e.Carve(td0, RootHandle(e), Pages(8, 16), AccessRights(rights));
    (void)e.Send(td0, *mem, *mh);
    (void)e.Seal(td0, *mh);
    Handle region = *e.FindHandle(mid, Capability::ForRegion(e.ResolveHandle(mid, 0)->region));
    Handle child = *e.Create(mid);

    for (int i = 0; i < 100; ++i) {
      bool expect_escalation = false;
      Status st;
      std::string what;
      switch (uniform(6)) {
        case 0: {
          uint64_t v = uniform(16);
          expect_escalation = (v & ~cores) != 0;
          st = e.SetPolicy(mid, child, PolicyField::Cores(), v);
          what = "cores " + std::to_string(v);
          break;
        }
        case 1: {
          uint64_t v = uniform(kAllApiCalls + 1);
          expect_escalation = (v & ~uint64_t{api}) != 0;
          st = e.SetPolicy(mid, child, PolicyField::MonApi(), v);
          what = "mon_api " + BinaryString(v, kNumApiCalls);
          break;
        }
        case 2: {
          uint64_t v = uniform(2);
          bool is_user = uniform(2);
          expect_escalation = v && !(is_user ? user : receive);
          st = e.SetPolicy(mid, child,
                           is_user ? PolicyField::UserCalls() : PolicyField::ReceiveAfterSeal(), v);
          what = is_user ? "user_calls" : "receive";
          break;
        }
        case 3: {
          int v = static_cast<int>(uniform(16));
          uint64_t vis = uniform(3);
          expect_escalation = vis == 2 && !delivers[v];
          st = e.SetPolicy(mid, child, PolicyField::Interrupt(v), vis);
          what = "irq " + std::to_string(v);
          break;
        }
        default: {
          uint8_t r = static_cast<uint8_t>(1 + uniform(7));
          expect_escalation = (r & ~rights) != 0;
          uint64_t page = 8 + uniform(8);
          bool carve = uniform(2);
          auto h = carve ? e.Carve(mid, region, Pages(page, page + 1), AccessRights(r))
                         : e.Alias(mid, region, Pages(page, page + 1), AccessRights(r));
          st = h.ok() ? OkStatus() : Status(h.error());
          if (h.ok()) (void)e.RevokeRegion(mid, region, 0);
          what = std::string(carve ? "carve " : "alias ") + AccessRights(r).ToString();
          break;
        }
      }
      if (expect_escalation) {
        ++escalating;
        if (st.ok() || (st.code() != ErrorCode::kPolicyEscalation &&
                        st.code() != ErrorCode::kRightsEscalation)) {
          out.Fail("escalating " + what + " not rejected");
        }
      } else {
        ++plain;
        if (!st.ok()) out.Fail("non-escalating " + what + " rejected: " + st.error().ToString());
      }
    }
  }
  if (out.pass) {
    out.detail = std::to_string(escalating + plain) + " attempts: " +
                 std::to_string(escalating) + " escalations all rejected, " +
                 std::to_string(plain) + " others all accepted";
  }
  return out;
}

}  // namespace
}  // namespace capmon

int main(int argc, char** argv) {
  using capmon::Outcome;
  struct Entry {
    const char* name;
    std::function<Outcome()> run;
  };
  const Entry criteria[] = {
      {"region derivation example", capmon::Criterion1},
      {"attestation text of nested domains", capmon::Criterion2},
      {"revocation cascade", capmon::Criterion3},
      {"randomized differential run", capmon::Criterion4},
      {"interrupt routing", capmon::Criterion5},
      {"concurrent atomicity", capmon::Criterion6},
      {"predicates and mutants", capmon::Criterion7},
      {"API gates", capmon::Criterion8},
      {"monotonicity", capmon::Criterion9},
  };
  int failed = 0;
  int n = 0;
  int skipped = 0;
  for (const Entry& c : criteria) {
    ++n;
    // Optional arguments select criteria by number.
    bool selected = argc == 1;
    for (int i = 1; i < argc; ++i) selected |= std::atoi(argv[i]) == n;
    if (!selected) {
      ++skipped;
      continue;
    }
    Outcome o = c.run();
    std::printf("criterion %d (%s): %s: %s\n", n, c.name, o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d of %d criteria passed\n", n - skipped - failed, n - skipped);
  return failed == 0 ? 0 : 1;
}
