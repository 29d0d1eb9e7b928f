#pragma once

#include <cstdint>
#include <cstdio>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "roadguard/errors.hpp"
#include "roadguard/geo.hpp"
#include "roadguard/packet.hpp"
#include "roadguard/roadmap.hpp"

namespace roadguard {

struct DetectorConfig {
  // Number of transmissions that must carry a valid HMAC after a flag.
  int t_auth = 10;
  // A junction 'matches' a reported point only within this distance; an
  // unbounded search would accept absurdly distant junctions.
  double junction_radius_m = 30.0;
};

/// Backend-side record of the last validated report for one vehicle.
struct VehicleState {
  GeoPoint prv;                     // previous validated location
  std::optional<std::string> road;  // r_prv; nullopt means "at a junction"
  std::int64_t t_prv = 0;           // ms
  int auth_remaining = 0;           // transmissions still requiring a tag
};

// None marks outcomes where no position check ran (replay and auth flags).
enum class PosCase { None, Seed, SameRoad, AdjacentRoads, FromJunction, ToJunction, Invalid };

inline const char* to_string(PosCase c) {
  switch (c) {
    case PosCase::None: return "";
    case PosCase::Seed: return "seed";
    case PosCase::SameRoad: return "same_road";
    case PosCase::AdjacentRoads: return "adjacent_roads";
    case PosCase::FromJunction: return "from_junction";
    case PosCase::ToJunction: return "to_junction";
    case PosCase::Invalid: return "invalid";
  }
  return "?";
}

struct CheckPosResult {
  bool valid = false;
  double d = 0.0;  // validated travel distance, meters (valid only)
  std::optional<std::string> matched_road;  // nullopt = at a junction
  PosCase case_used = PosCase::Invalid;
  std::optional<std::string> via_junction;  // junction involved, when any
};

namespace detail {

struct JunctionMatch {
  const Junction* junction = nullptr;
  double dist = std::numeric_limits<double>::infinity();
};

// Nearest junction to p among the endpoints of `road`, within the radius.
inline JunctionMatch nearest_road_junction(const RoadGraph& g, const Road& road,
                                           const GeoPoint& p, double radius_m) {
  JunctionMatch best;
  for (const std::string* side : {&road.from_junction, &road.to_junction}) {
    if (side->empty()) continue;
    const Junction& jn = g.junctions.at(*side);
    const double d = haversine_m(jn.loc, p);
    if (d <= radius_m && d < best.dist) best = {&jn, d};
  }
  return best;
}

}  // namespace detail

/// The four-case position validator. Matches the current report against the
/// previous validated state through the road graph and returns either the
/// travel distance implied by the match or an Invalid verdict.
inline CheckPosResult check_pos(const RoadGraph& g, const VehicleState& state,
                                const GeoPoint& cur, const DetectorConfig& cfg = {}) {
  const auto l = candidate_roads(g, cur);

  if (!l.empty()) {
    // Pick the candidate whose sampled point matches the report best;
    // candidate order is sorted by id, so ties resolve to the lowest id.
    const Road* r_cur = nullptr;
    std::size_t m1_idx = 0;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& id : l) {
      const Road& road = g.roads.at(id);
      const auto [idx, dist] = nearest_sample(road, cur);
      if (dist < best) {
        best = dist;
        r_cur = &road;
        m1_idx = idx;
      }
    }
    const GeoPoint m1 = r_cur->samples[m1_idx].pt;

    if (state.road.has_value()) {
      const Road& r_prv = g.roads.at(*state.road);
      const auto [m2_idx, m2_dist] = nearest_sample(r_prv, state.prv);
      const GeoPoint m2 = r_prv.samples[m2_idx].pt;

      if (r_cur->id == r_prv.id) {
        // Case 1: same road; distance between the two matched samples.
        return {true, haversine_m(m1, m2), r_cur->id, PosCase::SameRoad, {}};
      }
      // Case 2: different roads; valid only if they share a junction.
      if (const std::string* jid = g.junction_of(r_cur->id, r_prv.id)) {
        const GeoPoint jloc = g.junctions.at(*jid).loc;
        const double d = haversine_m(m2, jloc) + haversine_m(m1, jloc);
        return {true, d, r_cur->id, PosCase::AdjacentRoads, *jid};
      }
      return {};
    }

    // Case 3: previous report was at a junction, current is on a road. The
    // junction must touch the current road and lie near the previous report.
    const auto jm = detail::nearest_road_junction(g, *r_cur, state.prv, cfg.junction_radius_m);
    if (jm.junction != nullptr) {
      return {true, haversine_m(m1, jm.junction->loc), r_cur->id, PosCase::FromJunction,
              jm.junction->id};
    }
    return {};
  }

  // No candidate road contains the current report.
  if (state.road.has_value()) {
    // Case 4: current report is at a junction adjacent to the previous road.
    const Road& r_prv = g.roads.at(*state.road);
    const auto [m1p_idx, m1p_dist] = nearest_sample(r_prv, state.prv);
    const auto jm = detail::nearest_road_junction(g, r_prv, cur, cfg.junction_radius_m);
    if (jm.junction != nullptr) {
      return {true, haversine_m(r_prv.samples[m1p_idx].pt, jm.junction->loc), std::nullopt,
              PosCase::ToJunction, jm.junction->id};
    }
    return {};
  }

  // Two junction-only reports in a row: acceptable only while lingering near
  // some junction, in which case the raw displacement is the distance.
  const Junction* nearest = nullptr;
  double nearest_d = std::numeric_limits<double>::infinity();
  for (const auto& [id, jn] : g.junctions) {
    const double d = haversine_m(jn.loc, cur);
    if (d < nearest_d) {
      nearest_d = d;
      nearest = &jn;
    }
  }
  if (nearest != nullptr && nearest_d <= cfg.junction_radius_m) {
    return {true, haversine_m(state.prv, cur), std::nullopt, PosCase::ToJunction, nearest->id};
  }
  return {};
}

/// Max_dist: the highest allowable speed among the roads involved in the
/// matched case, times the inter-transmission interval.
inline double max_dist(const RoadGraph& g, const CheckPosResult& result,
                       const VehicleState& state, double dt_s) {
  double sp = 0.0;
  switch (result.case_used) {
    case PosCase::SameRoad:
      sp = g.roads.at(*result.matched_road).max_speed_mps;
      break;
    case PosCase::AdjacentRoads:
      sp = std::max(g.roads.at(*result.matched_road).max_speed_mps,
                    g.roads.at(*state.road).max_speed_mps);
      break;
    case PosCase::FromJunction:
      sp = g.roads.at(*result.matched_road).max_speed_mps;
      break;
    case PosCase::ToJunction:
      if (state.road.has_value()) {
        sp = g.roads.at(*state.road).max_speed_mps;
      } else {
        // Junction-to-junction lingering: no concrete road, use the fastest
        // road meeting the matched junction.
        for (const auto& rid : g.adjacency.at(*result.via_junction))
          sp = std::max(sp, g.roads.at(rid).max_speed_mps);
      }
      break;
    default:
      throw ValidationError("max_dist requires a valid CheckPos result");
  }
  return sp * dt_s;
}

enum class FlagReason { None, EExceeds, InvalidLocation, Replay, AuthFailure };

inline const char* to_string(FlagReason r) {
  switch (r) {
    case FlagReason::None: return "";
    case FlagReason::EExceeds: return "e_exceeds";
    case FlagReason::InvalidLocation: return "invalid_location";
    case FlagReason::Replay: return "replay";
    case FlagReason::AuthFailure: return "auth_failure";
  }
  return "?";
}

/// One row of the outcome stream.
struct DetectionOutcome {
  std::uint64_t vehicle_id = 0;
  std::int64_t timestamp_ms = 0;
  PosCase case_used = PosCase::None;
  std::optional<double> d;         // meters
  std::optional<double> max_dist;  // meters
  std::optional<double> e;         // d / max_dist; absent when not computable
  bool flagged = false;
  FlagReason reason = FlagReason::None;
  int auth_remaining = 0;  // after this packet
};

struct AlertEvent {
  std::uint64_t vehicle_id = 0;
  std::int64_t timestamp_ms = 0;
};

/// Online attack detection (per-packet validation) and prevention (HMAC
/// window management). Packets of one vehicle must be processed in order by
/// one caller at a time; different vehicles may be processed concurrently.
class Detector {
 public:
  Detector(const RoadGraph& graph, const VehicleKeyStore& keys, DetectorConfig cfg = {})
      : graph_(graph), keys_(keys), cfg_(cfg) {}

  DetectionOutcome process_packet(const LocationPacket& p) {
    if (!keys_.contains(p.vehicle_id))
      throw ValidationError("packet from unknown vehicle " + std::to_string(p.vehicle_id));

    const GeoPoint cur{p.lat, p.lon};
    auto [state, is_new] = lookup_or_create(p.vehicle_id);

    DetectionOutcome out;
    out.vehicle_id = p.vehicle_id;
    out.timestamp_ms = p.timestamp_ms;

    if (is_new) {
      // First transmission seeds the state table; no detection possible yet.
      seed_state(*state, p, cur);
      out.case_used = PosCase::Seed;
      out.auth_remaining = state->auth_remaining;
      return out;
    }

    // Prevention window: while armed, only packets with a valid tag count.
    // A tag on an unarmed packet is still checked; a bad one is tampering.
    if (state->auth_remaining > 0) {
      if (!p.auth_tag.has_value() || !verify(p, keys_.get(p.vehicle_id)))
        return flag(out, *state, FlagReason::AuthFailure);
      state->auth_remaining -= 1;
    } else if (p.auth_tag.has_value() && !verify(p, keys_.get(p.vehicle_id))) {
      return flag(out, *state, FlagReason::AuthFailure);
    }

    // Replay: timestamps must be strictly increasing per vehicle.
    if (p.timestamp_ms <= state->t_prv) return flag(out, *state, FlagReason::Replay);

    const CheckPosResult res = check_pos(graph_, *state, cur, cfg_);
    out.case_used = res.case_used;
    if (!res.valid) return flag(out, *state, FlagReason::InvalidLocation);

    const double dt_s = static_cast<double>(p.timestamp_ms - state->t_prv) / 1000.0;
    out.d = res.d;
    out.max_dist = max_dist(graph_, res, *state, dt_s);
    out.e = res.d / *out.max_dist;
    if (*out.e > 1.0) return flag(out, *state, FlagReason::EExceeds);

    // Accepted: the packet becomes the new reference point.
    state->prv = cur;
    state->road = res.matched_road;
    state->t_prv = p.timestamp_ms;
    out.auth_remaining = state->auth_remaining;
    return out;
  }

  /// Alert the vehicle and (re)arm its authentication window.
  void attack_prevent(VehicleState& state, std::uint64_t vehicle_id, std::int64_t timestamp_ms) {
    state.auth_remaining = cfg_.t_auth;
    std::lock_guard lock(alerts_mutex_);
    alerts_.push_back({vehicle_id, timestamp_ms});
  }

  const std::vector<AlertEvent>& alerts() const { return alerts_; }

  const VehicleState* state_of(std::uint64_t vehicle_id) const {
    std::lock_guard lock(table_mutex_);
    auto it = states_.find(vehicle_id);
    return it == states_.end() ? nullptr : &it->second;
  }

  const DetectorConfig& config() const { return cfg_; }

 private:
  std::pair<VehicleState*, bool> lookup_or_create(std::uint64_t vehicle_id) {
    std::lock_guard lock(table_mutex_);
    auto [it, inserted] = states_.try_emplace(vehicle_id);
    return {&it->second, inserted};
  }

  void seed_state(VehicleState& state, const LocationPacket& p, const GeoPoint& cur) {
    state.prv = cur;
    state.road.reset();
    const auto l = candidate_roads(graph_, cur);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& id : l) {
      const auto [idx, dist] = nearest_sample(graph_.roads.at(id), cur);
      if (dist < best) {
        best = dist;
        state.road = id;
      }
    }
    state.t_prv = p.timestamp_ms;
    state.auth_remaining = 0;
  }

  DetectionOutcome flag(DetectionOutcome out, VehicleState& state, FlagReason reason) {
    // Flagged packets never update prv/t_prv: a spoofed position must not
    // become the reference for future checks.
    out.flagged = true;
    out.reason = reason;
    attack_prevent(state, out.vehicle_id, out.timestamp_ms);
    out.auth_remaining = state.auth_remaining;
    return out;
  }

  const RoadGraph& graph_;
  const VehicleKeyStore& keys_;
  DetectorConfig cfg_;
  mutable std::mutex table_mutex_;
  std::mutex alerts_mutex_;
  std::unordered_map<std::uint64_t, VehicleState> states_;
  std::vector<AlertEvent> alerts_;
};

// ---- Outcome stream rendering (CSV and JSON lines) ----

inline std::string outcome_csv_header() {
  return "vehicle_id,timestamp_ms,case_used,d,max_dist,e_value,flagged,reason,auth_remaining";
}

namespace detail {

inline std::string fixed6(const std::optional<double>& v) {
  if (!v.has_value()) return {};
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

}  // namespace detail

inline std::string outcome_csv_row(const DetectionOutcome& o) {
  std::string row;
  row += std::to_string(o.vehicle_id);
  row += ',';
  row += std::to_string(o.timestamp_ms);
  row += ',';
  row += to_string(o.case_used);
  row += ',';
  row += detail::fixed6(o.d);
  row += ',';
  row += detail::fixed6(o.max_dist);
  row += ',';
  row += detail::fixed6(o.e);
  row += ',';
  row += o.flagged ? "true" : "false";
  row += ',';
  row += to_string(o.reason);
  row += ',';
  row += std::to_string(o.auth_remaining);
  return row;
}

inline nlohmann::ordered_json outcome_to_json(const DetectionOutcome& o) {
  nlohmann::ordered_json j;
  j["vehicle_id"] = o.vehicle_id;
  j["timestamp_ms"] = o.timestamp_ms;
  j["case_used"] = to_string(o.case_used);
  j["d"] = o.d.has_value() ? nlohmann::ordered_json(*o.d) : nlohmann::ordered_json(nullptr);
  j["max_dist"] =
      o.max_dist.has_value() ? nlohmann::ordered_json(*o.max_dist) : nlohmann::ordered_json(nullptr);
  j["e_value"] = o.e.has_value() ? nlohmann::ordered_json(*o.e) : nlohmann::ordered_json(nullptr);
  j["flagged"] = o.flagged;
  j["reason"] = to_string(o.reason);
  j["auth_remaining"] = o.auth_remaining;
  return j;
}

}  // namespace roadguard
