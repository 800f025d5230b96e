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

#include "capmon/policies.h"

#include <string>

namespace capmon {

std::string_view ToString(ApiCall call) {
  switch (call) {
    case ApiCall::kCreate:
      return "CREATE";
    case ApiCall::kSetGet:
      return "SET/GET";
    case ApiCall::kSend:
      return "SEND";
    case ApiCall::kSeal:
      return "SEAL";
    case ApiCall::kAttest:
      return "ATTEST";
    case ApiCall::kEnumerate:
      return "ENUMERATE";
    case ApiCall::kSwitch:
      return "SWITCH";
    case ApiCall::kAlias:
      return "ALIAS";
    case ApiCall::kCarve:
      return "CARVE";
    case ApiCall::kRevoke:
      return "REVOKE";
    case ApiCall::kGetChan:
      return "GETCHAN";
  }
  return "?";
}

std::string_view ToString(InterruptVisibility visibility) {
  switch (visibility) {
    case InterruptVisibility::kDeliver:
      return "Deliver";
    case InterruptVisibility::kReport:
      return "Report";
    case InterruptVisibility::kNotReport:
      return "Not report";
  }
  return "?";
}

std::string BinaryString(uint64_t value, int width) {
  std::string out = "0b";
  for (int bit = width - 1; bit >= 0; --bit) {
    out.push_back(((value >> bit) & 1) ? '1' : '0');
  }
  return out;
}

std::string BinaryString(uint64_t value) {
  int width = 1;
  while (width < 64 && (value >> width) != 0) ++width;
  return BinaryString(value, width);
}

}  // namespace capmon
