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

#include "capmon/crypto.h"

#include <sodium.h>

#include <cstdlib>
#include <cstring>

namespace capmon {
namespace {

static_assert(sizeof(crypto_hash_sha256_state) <= 128);

void EnsureSodium() {
  static const bool initialized = [] {
    if (sodium_init() < 0) std::abort();
    return true;
  }();
  (void)initialized;
}

crypto_hash_sha256_state* AsState(std::array<uint8_t, 128>& raw) {
  return reinterpret_cast<crypto_hash_sha256_state*>(raw.data());
}

}  // namespace

Digest Sha256(std::span<const uint8_t> data) {
  EnsureSodium();
  Digest out;
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

Digest Sha256(std::string_view data) {
  return Sha256(std::span<const uint8_t>(
      reinterpret_cast<const uint8_t*>(data.data()), data.size()));
}

Sha256Builder::Sha256Builder() {
  EnsureSodium();
  crypto_hash_sha256_init(AsState(state_));
}

Sha256Builder& Sha256Builder::Update(std::span<const uint8_t> data) {
  if (pending_size_ + data.size() > pending_.size()) Flush();
  if (data.size() > pending_.size()) {
    crypto_hash_sha256_update(AsState(state_), data.data(), data.size());
    return *this;
  }
  std::copy(data.begin(), data.end(), pending_.begin() + pending_size_);
  pending_size_ += data.size();
  return *this;
}

Sha256Builder& Sha256Builder::Update(std::string_view data) {
  return Update(std::span<const uint8_t>(
      reinterpret_cast<const uint8_t*>(data.data()), data.size()));
}

Sha256Builder& Sha256Builder::UpdateU64(uint64_t value) {
  std::array<uint8_t, 8> le;
  for (int i = 0; i < 8; ++i) le[i] = static_cast<uint8_t>(value >> (8 * i));
  return Update(le);
}

void Sha256Builder::Flush() {
  if (pending_size_ == 0) return;
  crypto_hash_sha256_update(AsState(state_), pending_.data(), pending_size_);
  pending_size_ = 0;
}

Digest Sha256Builder::Finish() {
  Flush();
  Digest out;
  crypto_hash_sha256_final(AsState(state_), out.data());
  return out;
}

SigningKey SigningKey::FromSeed(const std::array<uint8_t, 32>& seed) {
  EnsureSodium();
  SigningKey key;
  crypto_sign_ed25519_seed_keypair(key.public_key_.data(), key.secret_.data(),
                                   seed.data());
  return key;
}

Signature SigningKey::Sign(std::span<const uint8_t> message) const {
  Signature sig;
  crypto_sign_ed25519_detached(sig.data(), nullptr, message.data(),
                               message.size(), secret_.data());
  return sig;
}

bool VerifySignature(const PublicKey& key, std::span<const uint8_t> message,
                     std::span<const uint8_t> signature) {
  EnsureSodium();
  if (signature.size() != crypto_sign_ed25519_BYTES) return false;
  return crypto_sign_ed25519_verify_detached(signature.data(), message.data(),
                                             message.size(), key.data()) == 0;
}

std::string ToHex(std::span<const uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

std::optional<std::vector<uint8_t>> FromHex(std::string_view hex) {
  if (hex.starts_with("0x")) hex.remove_prefix(2);
  if (hex.size() % 2 != 0) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::vector<uint8_t> out;
  out.reserve(hex.size() / 2);
  for (size_t i = 0; i < hex.size(); i += 2) {
    int hi = nibble(hex[i]);
    int lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<uint8_t>(hi << 4 | lo));
  }
  return out;
}

}  // namespace capmon
