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

#ifndef CAPMON_POLICIES_H_
#define CAPMON_POLICIES_H_

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace capmon {

// Monitor calls, in bitmap order (bit 0 is CREATE).
enum class ApiCall : uint8_t {
  kCreate = 0,
  kSetGet = 1,
  kSend = 2,
  kSeal = 3,
  kAttest = 4,
  kEnumerate = 5,
  kSwitch = 6,
  kAlias = 7,
  kCarve = 8,
  kRevoke = 9,
  kGetChan = 10,
};

inline constexpr int kNumApiCalls = 11;
inline constexpr uint16_t kAllApiCalls = (1u << kNumApiCalls) - 1;

constexpr uint16_t ApiBit(ApiCall call) {
  return static_cast<uint16_t>(1u << static_cast<uint8_t>(call));
}

std::string_view ToString(ApiCall call);

inline constexpr int kNumVectors = 256;
// Synthetic vectors raised by the simulator.
inline constexpr int kFaultVector = 14;
inline constexpr int kTimerVector = 32;

// Zero is the "nothing granted" encoding so freshly created domains start
// with NotReport everywhere.
enum class InterruptVisibility : uint8_t {
  kNotReport = 0,
  kReport = 1,
  kDeliver = 2,
};

std::string_view ToString(InterruptVisibility visibility);

// 16 general purpose registers, program counter, status word.
inline constexpr int kNumRegisters = 18;
inline constexpr int kPcRegister = 16;
inline constexpr int kStatusRegister = 17;
inline constexpr uint32_t kAllRegisters = (1u << kNumRegisters) - 1;

using RegisterFile = std::array<uint64_t, kNumRegisters>;

struct InterruptPolicy {
  InterruptVisibility visibility = InterruptVisibility::kNotReport;
  uint32_t readable_regs = 0;

  // ABI encoding: visibility in bits 0..7, readable registers from bit 8.
  uint64_t Encode() const {
    return static_cast<uint64_t>(visibility) |
           static_cast<uint64_t>(readable_regs) << 8;
  }
  static InterruptPolicy Decode(uint64_t value) {
    return {static_cast<InterruptVisibility>(value & 0xff),
            static_cast<uint32_t>(value >> 8)};
  }
  bool operator==(const InterruptPolicy&) const = default;
};

struct Policies {
  uint64_t cores = 0;
  uint16_t mon_api = 0;
  bool user_calls = false;
  bool receive_after_seal = false;
  std::array<InterruptPolicy, kNumVectors> interrupts{};

  bool Allows(ApiCall call) const { return (mon_api & ApiBit(call)) != 0; }
  bool operator==(const Policies&) const = default;
};

// Selector for policy set/get.
struct PolicyField {
  enum class Kind : uint8_t {
    kCores = 0,
    kMonApi = 1,
    kUserCalls = 2,
    kReceiveAfterSeal = 3,
    kInterrupt = 4,
  };
  Kind kind = Kind::kCores;
  int vector = 0;  // kInterrupt only

  static PolicyField Cores() { return {Kind::kCores, 0}; }
  static PolicyField MonApi() { return {Kind::kMonApi, 0}; }
  static PolicyField UserCalls() { return {Kind::kUserCalls, 0}; }
  static PolicyField ReceiveAfterSeal() { return {Kind::kReceiveAfterSeal, 0}; }
  static PolicyField Interrupt(int v) { return {Kind::kInterrupt, v}; }
};

// "0b" followed by exactly `width` binary digits, most significant first.
std::string BinaryString(uint64_t value, int width);
// "0b" followed by the shortest binary rendering (at least one digit).
std::string BinaryString(uint64_t value);

}  // namespace capmon

#endif  // CAPMON_POLICIES_H_
