#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "roadguard/sha512.hpp"

namespace roadguard {

/// HMAC-SHA-512 (RFC 2104) over an arbitrary key and message.
inline std::array<std::uint8_t, Sha512::kDigestSize> hmac_sha512(
    std::span<const std::uint8_t> key, std::span<const std::uint8_t> message) {
  std::array<std::uint8_t, Sha512::kBlockSize> block_key{};
  if (key.size() > Sha512::kBlockSize) {
    const auto hashed = Sha512::digest(key);
    std::memcpy(block_key.data(), hashed.data(), hashed.size());
  } else {
    std::memcpy(block_key.data(), key.data(), key.size());
  }

  std::array<std::uint8_t, Sha512::kBlockSize> ipad, opad;
  for (std::size_t i = 0; i < Sha512::kBlockSize; ++i) {
    ipad[i] = block_key[i] ^ 0x36;
    opad[i] = block_key[i] ^ 0x5c;
  }

  Sha512 inner;
  inner.update(ipad).update(message);
  const auto inner_digest = inner.finalize();

  Sha512 outer;
  outer.update(opad).update(inner_digest);
  return outer.finalize();
}

/// Constant-time byte comparison; length mismatch returns false immediately
/// (lengths are public here).
inline bool constant_time_equal(std::span<const std::uint8_t> a,
                                std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) return false;
  volatile std::uint8_t acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc = acc | (a[i] ^ b[i]);
  return acc == 0;
}

}  // namespace roadguard
