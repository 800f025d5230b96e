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

// Scenario scripts. One statement per line, '#' starts a comment.
//
//   let NAME = VALUE
//   create TD [by D]
//   set TD cores|mon_api|receive|user VALUE [by D]
//   set TD irq V[-W] deliver|report|notreport [REGS] [by D]
//   set TD reg CORE INDEX VALUE [by D]
//   seal TD [by D]
//   alias R = PARENT START END RIGHTS [by D]
//   carve R = PARENT START END RIGHTS [by D]
//   send CAP to TD|CH [HASH|CLEAN|VITAL] [by D]
//   revoke PARENT CHILD [by D]          region revocation
//   revoke TD [by D]                    domain revocation
//   getchan CH = TD [by D]
//   selfchan CH [by D]
//   switch CORE TD|return
//   attest TD|self [by D] [nonce HEX] [as NAME]
//   enumerate [by D]
//   write-mem CORE ADDR LEN BYTE
//   read-mem CORE ADDR LEN
//   poke ADDR LEN BYTE                  unchecked, before anything runs
//   irq CORE VECTOR
//   device-irq DEV [at STEP]
//   step N
//   expect error NAME
//   expect view R = SEGMENTS | none     SEGMENTS: "exclusive A B RWX; ..."
//   expect domview TD = SEGMENTS | none
//   expect current CORE TD
//   expect payload CORE none|returned|interrupt V|revoked TD
//   expect state TD unsealed|sealed|revoked
//   expect owner R TD
//   expect mem ADDR LEN BYTE
//   expect access CORE ADDR R|W|X allow|deny
//   expect confidential REPORT SUBJECT true|false [CLAUSE=true|false ...]
//   expect encapsulated REPORT CHILD PARENT true|false [CLAUSE=...]
//   expect verify REPORT accept|reject
//   expect text REPORT contains TEXT...
//   expect oracle
//
// Values are numbers (decimal, 0x, 0b) or names bound with let, optionally
// with "+N". A statement that fails must be followed by "expect error".

#ifndef CAPMON_SCENARIO_H_
#define CAPMON_SCENARIO_H_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "capmon/attestation.h"
#include "capmon/machine.h"

namespace capmon {

struct Statement {
  int line = 0;
  std::string text;
  std::vector<std::string> words;  // without the trailing "by D"
  std::optional<std::string> by;
};

// Syntax check only; names are resolved when the statement runs.
Result<std::vector<Statement>> ParseScenario(std::string_view text);

struct ScenarioOptions {
  std::ostream* echo = nullptr;  // statement-by-statement progress
  // Bracket statements that touch memory through a core (write-mem,
  // read-mem, expect access), so that threads driving cores can step aside.
  std::function<void()> pause_cores;
  std::function<void()> resume_cores;
};

struct ScenarioResult {
  // 0 all expectations hold, 1 an expectation failed, 2 script error.
  int exit_code = 0;
  std::vector<std::string> messages;
};

class ScenarioRunner {
 public:
  ScenarioRunner(System& system, ScenarioOptions options = {});

  ScenarioResult Run(const std::vector<Statement>& script);

  // Script name bindings.
  const std::map<std::string, DomainId>& domain_names() const { return domains_; }
  const std::map<std::string, RegionId>& region_names() const { return regions_; }
  const std::map<std::string, ChannelId>& channel_names() const {
    return channels_;
  }
  const std::map<std::string, AttestationReport>& reports() const {
    return reports_;
  }
  std::optional<DomainId> FindDomainName(std::string_view name) const;

  // Builds and signs a report of `subject` requested by `by`.
  Result<AttestationReport> AttestByName(std::string_view subject,
                                         std::string_view by,
                                         std::optional<std::vector<uint8_t>> nonce);

 private:
  // Outcome of one statement: ok, an engine/machine error (to be matched by
  // "expect error"), a failed expectation, or a script error.
  struct Outcome {
    enum Kind { kOk, kOpError, kExpectFailed, kScriptError } kind = kOk;
    std::string message;
    std::optional<ErrorCode> code;
  };

  Outcome Execute(const Statement& st);
  Outcome Expect(const Statement& st);

  Result<uint64_t> Value(std::string_view text) const;
  Result<DomainId> Domain(std::string_view name) const;
  Result<DomainId> Caller(const Statement& st) const;
  // Handle in `owner`'s table for the named object.
  Result<Handle> HandleFor(DomainId owner, std::string_view name,
                           bool domain_via_channel = false) const;
  Result<EffectiveView> ParseSegments(const std::vector<std::string>& words,
                                      size_t from) const;

  System& sys_;
  ScenarioOptions options_;
  std::map<std::string, uint64_t> lets_;
  std::map<std::string, DomainId> domains_;
  std::map<std::string, RegionId> regions_;
  std::map<std::string, ChannelId> channels_;
  std::map<std::string, AttestationReport> reports_;
};

}  // namespace capmon

#endif  // CAPMON_SCENARIO_H_
