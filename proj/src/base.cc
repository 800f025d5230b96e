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

#include "capmon/base.h"

#include <array>
#include <string>
#include <string_view>
#include <utility>

namespace capmon {
namespace {

constexpr std::array<std::pair<ErrorCode, std::string_view>, 43> kNames = {{
    {ErrorCode::kNotOwner, "NotOwner"},
    {ErrorCode::kOutOfRange, "OutOfRange"},
    {ErrorCode::kRightsEscalation, "RightsEscalation"},
    {ErrorCode::kOverlapsCarve, "OverlapsCarve"},
    {ErrorCode::kOverlapsAlias, "OverlapsAlias"},
    {ErrorCode::kNotAChild, "NotAChild"},
    {ErrorCode::kUnknownRegion, "UnknownRegion"},
    {ErrorCode::kStillAccessible, "StillAccessible"},
    {ErrorCode::kOutOfMemoryBounds, "OutOfMemoryBounds"},
    {ErrorCode::kBadRange, "BadRange"},
    {ErrorCode::kEmptyRights, "EmptyRights"},
    {ErrorCode::kPolicyDenied, "PolicyDenied"},
    {ErrorCode::kOutOfMetadata, "OutOfMetadata"},
    {ErrorCode::kSealed, "Sealed"},
    {ErrorCode::kPolicyEscalation, "PolicyEscalation"},
    {ErrorCode::kRegisterHidden, "RegisterHidden"},
    {ErrorCode::kUntransferableTd, "UntransferableTd"},
    {ErrorCode::kReceiveDenied, "ReceiveDenied"},
    {ErrorCode::kAttributesOnSealed, "AttributesOnSealed"},
    {ErrorCode::kHashOnAliased, "HashOnAliased"},
    {ErrorCode::kAlreadySealed, "AlreadySealed"},
    {ErrorCode::kUndeliverableVector, "UndeliverableVector"},
    {ErrorCode::kCoreNotAllowed, "CoreNotAllowed"},
    {ErrorCode::kNotSealed, "NotSealed"},
    {ErrorCode::kNoParent, "NoParent"},
    {ErrorCode::kDomainRevoked, "DomainRevoked"},
    {ErrorCode::kBadCursor, "BadCursor"},
    {ErrorCode::kBadHandle, "BadHandle"},
    {ErrorCode::kWrongKind, "WrongKind"},
    {ErrorCode::kChannelRestricted, "ChannelRestricted"},
    {ErrorCode::kUnknownDomain, "UnknownDomain"},
    {ErrorCode::kNotRunning, "NotRunning"},
    {ErrorCode::kInvalidArgument, "InvalidArgument"},
    {ErrorCode::kRootPinned, "RootPinned"},
    {ErrorCode::kBadConfig, "BadConfig"},
    {ErrorCode::kUnknownDevice, "UnknownDevice"},
    {ErrorCode::kAccessDenied, "AccessDenied"},
    {ErrorCode::kBadSignature, "BadSignature"},
    {ErrorCode::kMeasurementMismatch, "MeasurementMismatch"},
    {ErrorCode::kNonceMismatch, "NonceMismatch"},
    {ErrorCode::kUnknownSubject, "UnknownSubject"},
    {ErrorCode::kParseError, "ParseError"},
    {ErrorCode::kMalformedLog, "MalformedLog"},
}};

}  // namespace

std::string_view ErrorName(ErrorCode code) {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "Unknown";
}

std::optional<ErrorCode> ErrorFromName(std::string_view name) {
  for (const auto& [c, n] : kNames) {
    if (n == name) return c;
  }
  return std::nullopt;
}

std::string Error::ToString() const {
  std::string out(ErrorName(code));
  if (!detail.empty()) {
    out += ": ";
    out += detail;
  }
  return out;
}

}  // namespace capmon
