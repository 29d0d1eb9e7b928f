#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "roadguard/errors.hpp"
#include "roadguard/geo.hpp"
#include "roadguard/hmac.hpp"

namespace roadguard {

inline constexpr std::size_t kAuthTagSize = 64;
inline constexpr std::size_t kVehicleKeySize = 32;

// Wire layout (big-endian, fixed width):
//   vehicle_id  u64   8 bytes
//   lat         f64   8
//   lon         f64   8
//   bearing     f64   8
//   timestamp   i64   8 (milliseconds since Unix epoch)
//   flags       u8    1 (bit 0: auth tag present)
//   auth_tag          64 (only when flags bit 0 set)
// Total: 41 bytes unauthenticated, 105 authenticated.
inline constexpr std::size_t kPacketSizeUnsigned = 41;
inline constexpr std::size_t kPacketSizeSigned = kPacketSizeUnsigned + kAuthTagSize;

using AuthTag = std::array<std::uint8_t, kAuthTagSize>;

/// Per-vehicle GPS report: position, bearing and send time, optionally
/// carrying an HMAC-SHA-512 tag over the other fields.
struct LocationPacket {
  std::uint64_t vehicle_id = 0;
  double lat = 0.0;      // degrees
  double lon = 0.0;      // degrees
  double bearing = 0.0;  // degrees, [0, 360)
  std::int64_t timestamp_ms = 0;
  std::optional<AuthTag> auth_tag;

  friend bool operator==(const LocationPacket&, const LocationPacket&) = default;
};

inline void validate_packet_fields(const LocationPacket& p) {
  if (!is_valid_lat_lon({p.lat, p.lon}))
    throw ValidationError("packet lat/lon out of range");
  if (!std::isfinite(p.bearing) || p.bearing < 0.0 || p.bearing >= 360.0)
    throw ValidationError("packet bearing out of [0, 360)");
}

namespace detail {

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (i * 8)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | in[off + i];
  return v;
}

inline std::vector<std::uint8_t> serialize_impl(const LocationPacket& p, bool with_tag) {
  std::vector<std::uint8_t> out;
  out.reserve(with_tag ? kPacketSizeSigned : kPacketSizeUnsigned);
  put_u64(out, p.vehicle_id);
  put_f64(out, p.lat);
  put_f64(out, p.lon);
  put_f64(out, p.bearing);
  put_u64(out, static_cast<std::uint64_t>(p.timestamp_ms));
  out.push_back(with_tag ? 0x01 : 0x00);
  if (with_tag) out.insert(out.end(), p.auth_tag->begin(), p.auth_tag->end());
  return out;
}

}  // namespace detail

/// Canonical bytes of all fields except the tag; the message that is MACed.
inline std::vector<std::uint8_t> canonical_bytes(const LocationPacket& p) {
  return detail::serialize_impl(p, false);
}

/// Canonical wire serialization. Throws ValidationError on out-of-range fields.
inline std::vector<std::uint8_t> serialize(const LocationPacket& p) {
  validate_packet_fields(p);
  return detail::serialize_impl(p, p.auth_tag.has_value());
}

/// Inverse of serialize. `validate` is disabled only by the attack harness,
/// which forwards deliberately broken field values.
inline LocationPacket deserialize(std::span<const std::uint8_t> bytes, bool validate = true) {
  if (bytes.size() != kPacketSizeUnsigned && bytes.size() != kPacketSizeSigned)
    throw ParseError("packet has invalid length " + std::to_string(bytes.size()));

  LocationPacket p;
  p.vehicle_id = detail::get_u64(bytes, 0);
  p.lat = std::bit_cast<double>(detail::get_u64(bytes, 8));
  p.lon = std::bit_cast<double>(detail::get_u64(bytes, 16));
  p.bearing = std::bit_cast<double>(detail::get_u64(bytes, 24));
  p.timestamp_ms = static_cast<std::int64_t>(detail::get_u64(bytes, 32));

  const std::uint8_t flags = bytes[40];
  if (flags != 0x00 && flags != 0x01) throw ParseError("packet has unknown flags byte");
  const bool has_tag = flags == 0x01;
  if (has_tag != (bytes.size() == kPacketSizeSigned))
    throw ParseError("packet flags disagree with length");
  if (has_tag) {
    AuthTag tag;
    std::memcpy(tag.data(), bytes.data() + kPacketSizeUnsigned, kAuthTagSize);
    p.auth_tag = tag;
  }
  if (validate) validate_packet_fields(p);
  return p;
}

/// Secret shared between one vehicle and the backend.
struct VehicleKey {
  std::uint64_t vehicle_id = 0;
  std::array<std::uint8_t, kVehicleKeySize> key{};
};

/// Signs the packet: tag = HMAC-SHA-512(key, canonical bytes sans tag).
inline LocationPacket sign(const LocationPacket& p, const VehicleKey& k) {
  if (p.auth_tag.has_value()) throw ValidationError("packet is already signed");
  if (k.vehicle_id != p.vehicle_id)
    throw ValidationError("key/vehicle mismatch when signing");
  validate_packet_fields(p);
  LocationPacket signed_packet = p;
  signed_packet.auth_tag = hmac_sha512(k.key, canonical_bytes(p));
  return signed_packet;
}

/// True iff the tag matches; comparison is constant-time. A missing tag is a
/// caller error, not a failed verification.
inline bool verify(const LocationPacket& p, const VehicleKey& k) {
  if (!p.auth_tag.has_value()) throw ValidationError("packet has no auth tag");
  if (k.vehicle_id != p.vehicle_id) return false;
  LocationPacket unsigned_copy = p;
  unsigned_copy.auth_tag.reset();
  const auto expected = hmac_sha512(k.key, canonical_bytes(unsigned_copy));
  return constant_time_equal(expected, *p.auth_tag);
}

/// Backend-side key table. Keys are derived deterministically from the fleet
/// seed with an HMAC-based KDF at initialization and never leave the process.
class VehicleKeyStore {
 public:
  VehicleKeyStore() = default;

  void assign(std::uint64_t vehicle_id, std::uint64_t fleet_seed) {
    std::vector<std::uint8_t> seed_bytes(8), msg;
    for (int i = 7; i >= 0; --i) seed_bytes[7 - i] = static_cast<std::uint8_t>(fleet_seed >> (i * 8));
    const char* label = "vehicle-key";
    msg.assign(label, label + 11);
    for (int i = 7; i >= 0; --i) msg.push_back(static_cast<std::uint8_t>(vehicle_id >> (i * 8)));
    const auto digest = hmac_sha512(seed_bytes, msg);
    VehicleKey k;
    k.vehicle_id = vehicle_id;
    std::memcpy(k.key.data(), digest.data(), kVehicleKeySize);
    keys_[vehicle_id] = k;
  }

  bool contains(std::uint64_t vehicle_id) const { return keys_.count(vehicle_id) > 0; }

  const VehicleKey& get(std::uint64_t vehicle_id) const {
    auto it = keys_.find(vehicle_id);
    if (it == keys_.end())
      throw ValidationError("no key for vehicle " + std::to_string(vehicle_id));
    return it->second;
  }

  std::size_t size() const { return keys_.size(); }

 private:
  std::map<std::uint64_t, VehicleKey> keys_;
};

/// Debug rendering for logs and reports; never includes key material.
inline nlohmann::ordered_json packet_to_json(const LocationPacket& p) {
  nlohmann::ordered_json j;
  j["vehicle_id"] = p.vehicle_id;
  j["lat"] = p.lat;
  j["lon"] = p.lon;
  j["bearing"] = p.bearing;
  j["timestamp_ms"] = p.timestamp_ms;
  if (p.auth_tag) {
    std::ostringstream hex;
    for (auto b : *p.auth_tag) {
      static const char* digits = "0123456789abcdef";
      hex << digits[b >> 4] << digits[b & 0xf];
    }
    j["auth_tag"] = hex.str();
  } else {
    j["auth_tag"] = nullptr;
  }
  return j;
}

}  // namespace roadguard
