#include <gtest/gtest.h>

#include <string>

#include "roadguard/packet.hpp"
#include "roadguard/rng.hpp"

namespace {

using namespace roadguard;

std::string hex(std::span<const std::uint8_t> data) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (auto b : data) {
    out += digits[b >> 4];
    out += digits[b & 0xf];
  }
  return out;
}

LocationPacket example1_packet() {
  // Vehicle 10010 at (1.302, 84.24), bearing 30, 2024-05-09 11:05:24 UTC.
  return {10010, 1.302, 84.24, 30.0, 1715252724000, std::nullopt};
}

LocationPacket random_packet(SplitMix64& rng, std::uint64_t id) {
  LocationPacket p;
  p.vehicle_id = id;
  p.lat = rng.next_double(-90.0, 90.0);
  p.lon = rng.next_double(-180.0, 180.0);
  p.bearing = rng.next_double(0.0, 360.0);
  p.timestamp_ms = static_cast<std::int64_t>(rng.next_below(1'900'000'000'000ULL));
  return p;
}

VehicleKey key_for(std::uint64_t id, std::uint64_t seed = 99) {
  VehicleKeyStore store;
  store.assign(id, seed);
  return store.get(id);
}

TEST(Packet, WireLayoutGolden) {
  // Byte-exact layout pinned against an independently computed encoding
  // (big-endian u64 | f64 | f64 | f64 | i64 | flags).
  const auto bytes = serialize(example1_packet());
  EXPECT_EQ(bytes.size(), kPacketSizeUnsigned);
  EXPECT_EQ(hex(bytes),
            "000000000000271a3ff4d4fdf3b645a240550f5c28f5c28f403e000000000000"
            "0000018f5d07812000");
}

TEST(Packet, Example1RoundTrip) {
  const auto p = example1_packet();
  EXPECT_EQ(deserialize(serialize(p)), p);
}

TEST(Packet, RoundTripRandomized) {
  SplitMix64 rng(2024);
  for (int i = 0; i < 10000; ++i) {
    const auto p = random_packet(rng, rng.next_u64());
    const auto bytes = serialize(p);
    EXPECT_LE(bytes.size(), 120u);
    EXPECT_EQ(deserialize(bytes), p);
  }
}

TEST(Packet, SizeBounds) {
  SplitMix64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    auto p = random_packet(rng, i);
    const auto unsigned_size = serialize(p).size();
    EXPECT_LE(unsigned_size, 120u);
    const auto signed_p = sign(p, key_for(i));
    const auto bytes = serialize(signed_p);
    EXPECT_GT(bytes.size(), unsigned_size);
    EXPECT_LE(bytes.size(), 250u);
    EXPECT_LE(bytes.size(), 350u);
  }
}

TEST(Packet, FieldValidation) {
  auto p = example1_packet();
  p.lat = 91.0;
  EXPECT_THROW(serialize(p), ValidationError);
  p = example1_packet();
  p.bearing = 360.0;
  EXPECT_THROW(serialize(p), ValidationError);
  p = example1_packet();
  p.lon = -181.0;
  EXPECT_THROW(serialize(p), ValidationError);
}

TEST(Packet, DeserializeRejectsBadLengthAndFlags) {
  auto bytes = serialize(example1_packet());
  bytes.pop_back();
  EXPECT_THROW(deserialize(bytes), ParseError);

  bytes = serialize(example1_packet());
  bytes[40] = 0x02;
  EXPECT_THROW(deserialize(bytes), ParseError);

  // Flags claim a tag but none follows.
  bytes[40] = 0x01;
  EXPECT_THROW(deserialize(bytes), ParseError);
}

TEST(Packet, SignVerifyRoundTrip) {
  const auto k = key_for(10010);
  const auto signed_p = sign(example1_packet(), k);
  ASSERT_TRUE(signed_p.auth_tag.has_value());
  EXPECT_TRUE(verify(signed_p, k));
  EXPECT_EQ(serialize(signed_p).size(), kPacketSizeSigned);

  // Signing is deterministic.
  EXPECT_EQ(sign(example1_packet(), k), signed_p);
}

TEST(Packet, VerifyDetectsTamperedField) {
  const auto k = key_for(10010);
  auto signed_p = sign(example1_packet(), k);
  signed_p.lon = 80.24;  // the Example-1 alteration
  EXPECT_FALSE(verify(signed_p, k));
}

TEST(Packet, AnySingleBitFlipBreaksVerification) {
  const auto k = key_for(10010);
  const auto signed_bytes = serialize(sign(example1_packet(), k));
  for (std::size_t byte = 0; byte < signed_bytes.size(); ++byte) {
    for (int bit = 0; bit < 8; ++bit) {
      auto mutated = signed_bytes;
      mutated[byte] ^= static_cast<std::uint8_t>(1u << bit);
      bool ok = false;
      try {
        ok = verify(deserialize(mutated, /*validate=*/false), k);
      } catch (const ParseError&) {
        // Structural damage (flags byte) is also a failure to verify.
      } catch (const ValidationError&) {
      }
      EXPECT_FALSE(ok) << "flip at byte " << byte << " bit " << bit;
    }
  }
}

TEST(Packet, VerifyWithWrongKeyFails) {
  const auto ka = key_for(10010, 99);
  const auto kb_store_key = key_for(10010, 77);
  const auto signed_p = sign(example1_packet(), ka);
  EXPECT_FALSE(verify(signed_p, kb_store_key));
}

TEST(Packet, SignRejectsMismatchedKeyOrDoubleSign) {
  const auto k = key_for(4242);
  EXPECT_THROW(sign(example1_packet(), k), ValidationError);  // id mismatch
  const auto good = key_for(10010);
  const auto once = sign(example1_packet(), good);
  EXPECT_THROW(sign(once, good), ValidationError);
}

TEST(Packet, VerifyWithoutTagIsAnErrorNotFalse) {
  EXPECT_THROW(verify(example1_packet(), key_for(10010)), ValidationError);
}

TEST(Packet, TruncatedTagIsAnError) {
  const auto k = key_for(10010);
  auto bytes = serialize(sign(example1_packet(), k));
  bytes.pop_back();  // 63-byte tag
  EXPECT_THROW(deserialize(bytes), ParseError);
}

// Arbitrary bytes of wire length either parse or throw; they never crash and
// never round-trip into different bytes.
TEST(Packet, DeserializeIsTotalOnRandomBytes) {
  SplitMix64 rng(404);
  for (int i = 0; i < 5000; ++i) {
    const std::size_t len = rng.next_bool(0.5) ? kPacketSizeUnsigned : kPacketSizeSigned;
    std::vector<std::uint8_t> bytes(len);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.next_below(256));
    try {
      const auto p = deserialize(bytes);
      EXPECT_EQ(serialize(p), bytes);
    } catch (const ParseError&) {
    } catch (const ValidationError&) {
    }
  }
}

TEST(KeyStore, DeterministicDerivationPerVehicle) {
  VehicleKeyStore a, b;
  a.assign(1, 42);
  a.assign(2, 42);
  b.assign(1, 42);
  EXPECT_EQ(a.get(1).key, b.get(1).key);
  EXPECT_NE(a.get(1).key, a.get(2).key);
  EXPECT_FALSE(a.contains(3));
  EXPECT_THROW(a.get(3), ValidationError);
}

TEST(Packet, JsonDebugRendering) {
  const auto j = packet_to_json(example1_packet());
  EXPECT_EQ(j["vehicle_id"], 10010);
  EXPECT_TRUE(j["auth_tag"].is_null());
  const auto signed_j = packet_to_json(sign(example1_packet(), key_for(10010)));
  EXPECT_EQ(signed_j["auth_tag"].get<std::string>().size(), 128u);
}

}  // namespace
