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

#include "capmon/fuzz.h"

#include "gtest/gtest.h"

namespace capmon {
namespace {

TEST(FuzzTest, ShortRunsAgreeWithOracle) {
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    FuzzOptions options;
    options.seed = seed;
    options.operations = 2000;
    FuzzResult r = RunFuzz(options);
    for (const auto& f : r.failures) ADD_FAILURE() << f;
    EXPECT_GT(r.accepted, 200u);
    for (const auto& [op, n] : r.per_error) {
      std::printf("seed %llu %s %llu\n", (unsigned long long)seed, op.c_str(),
                  (unsigned long long)n);
    }
    std::printf("accepted %llu rejected %llu\n",
                (unsigned long long)r.accepted, (unsigned long long)r.rejected);
  }
}

}  // namespace
}  // namespace capmon
