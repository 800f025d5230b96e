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

#ifndef CAPMON_BASE_H_
#define CAPMON_BASE_H_

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace capmon {

// Every physical range handled by the monitor is aligned to this granule.
inline constexpr uint64_t kPageSize = 4096;

using CoreId = uint32_t;
inline constexpr int kMaxCores = 64;

// Engine-global identifiers. They are monotone counters and never reused.
template <typename Tag>
struct Id {
  uint64_t value = 0;
  auto operator<=>(const Id&) const = default;
};

using DomainId = Id<struct DomainTag>;
using RegionId = Id<struct RegionTag>;
using ChannelId = Id<struct ChannelTag>;

enum class ErrorCode {
  // Region capabilities.
  kNotOwner = 1,
  kOutOfRange,
  kRightsEscalation,
  kOverlapsCarve,
  kOverlapsAlias,
  kNotAChild,
  kUnknownRegion,
  kStillAccessible,
  kOutOfMemoryBounds,
  kBadRange,
  kEmptyRights,
  // Domains and the monitor API.
  kPolicyDenied,
  kOutOfMetadata,
  kSealed,
  kPolicyEscalation,
  kRegisterHidden,
  kUntransferableTd,
  kReceiveDenied,
  kAttributesOnSealed,
  kHashOnAliased,
  kAlreadySealed,
  kUndeliverableVector,
  kCoreNotAllowed,
  kNotSealed,
  kNoParent,
  kDomainRevoked,
  kBadCursor,
  kBadHandle,
  kWrongKind,
  kChannelRestricted,
  kUnknownDomain,
  kNotRunning,
  kInvalidArgument,
  kRootPinned,
  // Platform.
  kBadConfig,
  kUnknownDevice,
  kAccessDenied,
  // Attestation.
  kBadSignature,
  kMeasurementMismatch,
  kNonceMismatch,
  kUnknownSubject,
  kParseError,
  // Oracle.
  kMalformedLog,
};

std::string_view ErrorName(ErrorCode code);
std::optional<ErrorCode> ErrorFromName(std::string_view name);

struct Error {
  ErrorCode code;
  std::string detail;

  std::string ToString() const;
};

inline Error MakeError(ErrorCode code, std::string detail = {}) {
  return Error{code, std::move(detail)};
}

// Value-or-error return type used across the engine.
template <typename T>
class [[nodiscard]] Result {
 public:
  Result(T value) : data_(std::move(value)) {}  // NOLINT: implicit by design.
  Result(Error error) : data_(std::move(error)) {}  // NOLINT

  bool ok() const { return data_.index() == 0; }
  explicit operator bool() const { return ok(); }

  T& value() & { return std::get<0>(data_); }
  const T& value() const& { return std::get<0>(data_); }
  T&& value() && { return std::get<0>(std::move(data_)); }
  T& operator*() & { return value(); }
  const T& operator*() const& { return value(); }
  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }

  const Error& error() const { return std::get<1>(data_); }
  ErrorCode code() const { return error().code; }

 private:
  std::variant<T, Error> data_;
};

class [[nodiscard]] Status {
 public:
  Status() = default;
  Status(Error error) : error_(std::move(error)) {}  // NOLINT

  bool ok() const { return !error_.has_value(); }
  explicit operator bool() const { return ok(); }
  const Error& error() const { return *error_; }
  ErrorCode code() const { return error_->code; }

 private:
  std::optional<Error> error_;
};

inline Status OkStatus() { return Status(); }

}  // namespace capmon

#define CAPMON_CONCAT_INNER_(a, b) a##b
#define CAPMON_CONCAT_(a, b) CAPMON_CONCAT_INNER_(a, b)

#define CAPMON_RETURN_IF_ERROR(expr)              \
  do {                                            \
    auto capmon_status_ = (expr);                 \
    if (!capmon_status_.ok()) {                   \
      return capmon_status_.error();              \
    }                                             \
  } while (0)

#define CAPMON_ASSIGN_OR_RETURN_IMPL_(tmp, lhs, expr) \
  auto tmp = (expr);                                  \
  if (!tmp.ok()) return tmp.error();                  \
  lhs = std::move(tmp).value()

#define CAPMON_ASSIGN_OR_RETURN(lhs, expr) \
  CAPMON_ASSIGN_OR_RETURN_IMPL_(           \
      CAPMON_CONCAT_(capmon_result_, __LINE__), lhs, expr)

#endif  // CAPMON_BASE_H_
