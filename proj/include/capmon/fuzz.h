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

// Randomized differential testing of the engine against the oracle.
//
// Operation mix: 40% derivations, 20% sends, 15% revocations, 15% domain
// lifecycle, 10% switches and interrupts.

#ifndef CAPMON_FUZZ_H_
#define CAPMON_FUZZ_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "capmon/machine.h"

namespace capmon {

struct FuzzOptions {
  uint64_t seed = 1;
  uint64_t operations = 5000;
  // Compare with the oracle after every operation, not only at the end.
  bool check_every_op = true;
  // Stop at the first failure.
  bool stop_on_failure = true;
};

struct FuzzResult {
  uint64_t operations = 0;
  uint64_t accepted = 0;
  uint64_t rejected = 0;
  uint64_t oracle_checks = 0;
  std::map<std::string, uint64_t> per_op;
  std::map<std::string, uint64_t> per_error;
  std::vector<std::string> failures;  // each prefixed with seed and op index

  bool ok() const { return failures.empty(); }
};

// Machine used by the fuzzer: 64 pages of RAM, 4 cores.
MachineConfig FuzzMachineConfig(uint64_t seed);

FuzzResult RunFuzz(const FuzzOptions& options);

}  // namespace capmon

#endif  // CAPMON_FUZZ_H_
