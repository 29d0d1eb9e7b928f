#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "roadguard/errors.hpp"
#include "roadguard/packet.hpp"

namespace roadguard {

enum class PacketField { VehicleId, Lat, Lon, Bearing, Timestamp };

inline const char* to_string(PacketField f) {
  switch (f) {
    case PacketField::VehicleId: return "vehicle_id";
    case PacketField::Lat: return "lat";
    case PacketField::Lon: return "lon";
    case PacketField::Bearing: return "bearing";
    case PacketField::Timestamp: return "timestamp";
  }
  return "?";
}

inline PacketField packet_field_from_string(const std::string& s) {
  if (s == "vehicle_id") return PacketField::VehicleId;
  if (s == "lat") return PacketField::Lat;
  if (s == "lon") return PacketField::Lon;
  if (s == "bearing") return PacketField::Bearing;
  if (s == "timestamp") return PacketField::Timestamp;
  throw ConfigError("unknown packet field '" + s + "'");
}

struct CoordinateOffset {
  double d_lat = 0.0;
  double d_lon = 0.0;
};

struct BitFlip {
  PacketField field = PacketField::Lon;
  int bit_index = 0;  // 0 = most significant bit of the big-endian field
};

struct Replay {
  std::int64_t delay_ms = 0;
};

using AttackStrategy = std::variant<CoordinateOffset, BitFlip, Replay>;

/// One configured attack: who, when, and how the eavesdropped packets are
/// altered before being resent to the backend.
struct AttackScenario {
  std::uint64_t target_vehicle = 0;
  std::int64_t start_time_ms = 0;
  std::optional<std::int64_t> duration_ms;  // nullopt: single shot
  AttackStrategy strategy;
};

inline AttackScenario scenario_from_json(const nlohmann::json& j) {
  AttackScenario sc;
  if (!j.contains("target") || !j["target"].is_number_unsigned())
    throw ConfigError("scenario: missing unsigned 'target'");
  sc.target_vehicle = j["target"].get<std::uint64_t>();
  sc.start_time_ms = j.value("start_time_ms", std::int64_t{0});
  if (j.contains("duration_ms") && !j["duration_ms"].is_null())
    sc.duration_ms = j["duration_ms"].get<std::int64_t>();

  const std::string kind = j.value("strategy", "");
  const auto params = j.value("params", nlohmann::json::object());
  if (kind == "coordinate_offset") {
    const CoordinateOffset off{params.value("d_lat", 0.0), params.value("d_lon", 0.0)};
    if (!std::isfinite(off.d_lat) || !std::isfinite(off.d_lon))
      throw ConfigError("scenario: coordinate offsets must be finite");
    sc.strategy = off;
  } else if (kind == "bit_flip") {
    BitFlip bf;
    bf.field = packet_field_from_string(params.value("field", "lon"));
    bf.bit_index = params.value("bit_index", 0);
    if (bf.bit_index < 0 || bf.bit_index >= 64)
      throw ConfigError("scenario: bit_index out of [0, 64)");
    sc.strategy = bf;
  } else if (kind == "replay") {
    sc.strategy = Replay{params.value("delay_ms", std::int64_t{0})};
  } else {
    throw ConfigError("scenario: unknown strategy '" + kind + "'");
  }
  return sc;
}

inline nlohmann::ordered_json scenario_to_json(const AttackScenario& sc) {
  nlohmann::ordered_json j;
  j["target"] = sc.target_vehicle;
  if (std::holds_alternative<CoordinateOffset>(sc.strategy)) {
    const auto& s = std::get<CoordinateOffset>(sc.strategy);
    j["strategy"] = "coordinate_offset";
    j["params"] = {{"d_lat", s.d_lat}, {"d_lon", s.d_lon}};
  } else if (std::holds_alternative<BitFlip>(sc.strategy)) {
    const auto& s = std::get<BitFlip>(sc.strategy);
    j["strategy"] = "bit_flip";
    j["params"] = {{"field", to_string(s.field)}, {"bit_index", s.bit_index}};
  } else {
    j["strategy"] = "replay";
    j["params"] = {{"delay_ms", std::get<Replay>(sc.strategy).delay_ms}};
  }
  j["start_time_ms"] = sc.start_time_ms;
  j["duration_ms"] = sc.duration_ms.has_value() ? nlohmann::ordered_json(*sc.duration_ms)
                                                : nlohmann::ordered_json(nullptr);
  return j;
}

/// Packet-level attacker on the vehicle->server path: perfect eavesdropping
/// on the target's ordered stream, substitution of in-window packets, and
/// delayed replay. It holds no vehicle key, so it can never re-sign what it
/// alters.
class Attacker {
 public:
  explicit Attacker(AttackScenario scenario) : scenario_(std::move(scenario)) {}

  /// Phase 1: record an observed target packet, returning the running
  /// inter-transmission estimate (median of observed gaps), if any.
  std::optional<std::int64_t> observe(const LocationPacket& p) {
    if (p.vehicle_id != scenario_.target_vehicle) return interval_estimate_ms();
    if (last_ts_.has_value()) gaps_.push_back(p.timestamp_ms - *last_ts_);
    last_ts_ = p.timestamp_ms;
    return interval_estimate_ms();
  }

  std::optional<std::int64_t> interval_estimate_ms() const {
    if (gaps_.empty()) return std::nullopt;
    auto sorted = gaps_;
    std::sort(sorted.begin(), sorted.end());
    return sorted[(sorted.size() - 1) / 2];  // lower median
  }

  /// Phase 2: the packets that actually reach the server in place of p.
  std::vector<LocationPacket> intercept(const LocationPacket& p, std::int64_t now_ms) {
    observe(p);
    if (p.vehicle_id != scenario_.target_vehicle || !active(now_ms)) return {p};

    if (const auto* off = std::get_if<CoordinateOffset>(&scenario_.strategy)) {
      LocationPacket altered = p;
      altered.lat += off->d_lat;
      altered.lon += off->d_lon;
      altered.auth_tag.reset();  // cannot re-sign
      fired_ = true;
      return {altered};
    }
    if (const auto* flip = std::get_if<BitFlip>(&scenario_.strategy)) {
      LocationPacket stripped = p;
      stripped.auth_tag.reset();
      auto bytes = canonical_bytes(stripped);
      const std::size_t field_offset = 8 * static_cast<std::size_t>(flip->field);
      bytes[field_offset + flip->bit_index / 8] ^=
          static_cast<std::uint8_t>(0x80u >> (flip->bit_index % 8));
      fired_ = true;
      // The altered value may be arbitrary garbage; parse it leniently and
      // let the backend judge it.
      return {deserialize(bytes, /*validate=*/false)};
    }
    const auto& rp = std::get<Replay>(scenario_.strategy);
    LocationPacket copy = p;
    copy.timestamp_ms += rp.delay_ms;
    replay_queue_.push_back({now_ms + rp.delay_ms, copy});
    fired_ = true;
    return {p};
  }

  /// Queued replay copies whose emission time has arrived.
  std::vector<LocationPacket> drain_due(std::int64_t now_ms) {
    std::vector<LocationPacket> due;
    auto it = replay_queue_.begin();
    while (it != replay_queue_.end()) {
      if (it->first <= now_ms) {
        due.push_back(it->second);
        it = replay_queue_.erase(it);
      } else {
        ++it;
      }
    }
    return due;
  }

  const AttackScenario& scenario() const { return scenario_; }

 private:
  bool active(std::int64_t now_ms) const {
    if (now_ms < scenario_.start_time_ms) return false;
    if (scenario_.duration_ms.has_value())
      return now_ms < scenario_.start_time_ms + *scenario_.duration_ms;
    return !fired_;  // single shot
  }

  AttackScenario scenario_;
  bool fired_ = false;
  std::optional<std::int64_t> last_ts_;
  std::vector<std::int64_t> gaps_;
  std::vector<std::pair<std::int64_t, LocationPacket>> replay_queue_;
};

}  // namespace roadguard
