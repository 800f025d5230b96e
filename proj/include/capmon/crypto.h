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

// Thin wrappers over libsodium: SHA-256 digests and Ed25519 signatures.

#ifndef CAPMON_CRYPTO_H_
#define CAPMON_CRYPTO_H_

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace capmon {

inline constexpr std::string_view kHashName = "sha256";
inline constexpr std::string_view kSignatureScheme = "ed25519";

using Digest = std::array<uint8_t, 32>;
using PublicKey = std::array<uint8_t, 32>;
using Signature = std::array<uint8_t, 64>;

Digest Sha256(std::span<const uint8_t> data);
Digest Sha256(std::string_view data);

class Sha256Builder {
 public:
  Sha256Builder();
  Sha256Builder& Update(std::span<const uint8_t> data);
  Sha256Builder& Update(std::string_view data);
  Sha256Builder& UpdateU64(uint64_t value);  // little-endian
  Digest Finish();

 private:
  void Flush();

  alignas(64) std::array<uint8_t, 128> state_;
  // Small updates are batched before reaching the hash function.
  std::array<uint8_t, 512> pending_;
  size_t pending_size_ = 0;
};

// Deterministic signing key; the same seed always yields the same key pair.
class SigningKey {
 public:
  static SigningKey FromSeed(const std::array<uint8_t, 32>& seed);

  const PublicKey& public_key() const { return public_key_; }
  Signature Sign(std::span<const uint8_t> message) const;

 private:
  std::array<uint8_t, 64> secret_{};
  PublicKey public_key_{};
};

bool VerifySignature(const PublicKey& key, std::span<const uint8_t> message,
                     std::span<const uint8_t> signature);

std::string ToHex(std::span<const uint8_t> bytes);
std::optional<std::vector<uint8_t>> FromHex(std::string_view hex);

template <size_t N>
std::optional<std::array<uint8_t, N>> FixedFromHex(std::string_view hex) {
  auto bytes = FromHex(hex);
  if (!bytes || bytes->size() != N) return std::nullopt;
  std::array<uint8_t, N> out;
  std::copy(bytes->begin(), bytes->end(), out.begin());
  return out;
}

}  // namespace capmon

#endif  // CAPMON_CRYPTO_H_
