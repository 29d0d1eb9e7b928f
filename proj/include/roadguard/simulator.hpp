#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "roadguard/attacker.hpp"
#include "roadguard/detector.hpp"
#include "roadguard/errors.hpp"
#include "roadguard/packet.hpp"
#include "roadguard/rng.hpp"
#include "roadguard/roadmap.hpp"

namespace roadguard {

// A vehicle this close to a junction reports the junction vicinity instead of
// its on-road position, which is what exercises the junction cases.
inline constexpr double kJunctionReportRadiusM = 2.0;

struct SimConfig {
  std::string map_path;
  int trips = 10;
  int duration_cap_s = 600;
  std::uint64_t seed = 1;
  double speed_factor = 0.6;
  double drop_probability = 0.0;
  int t_auth = 10;
  std::vector<AttackScenario> scenarios;
};

inline SimConfig config_from_json(const nlohmann::json& j, const std::string& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  SimConfig cfg;
  if (!j.contains("map") || !j["map"].is_string())
    throw ConfigError("config: missing string field 'map'");
  cfg.map_path = j["map"].get<std::string>();
  if (!base_dir.empty() && !cfg.map_path.empty() && cfg.map_path.front() != '/')
    cfg.map_path = base_dir + "/" + cfg.map_path;

  cfg.trips = j.value("trips", 10);
  cfg.duration_cap_s = j.value("duration_s", 600);
  cfg.seed = j.value("seed", std::uint64_t{1});
  cfg.speed_factor = j.value("speed_factor", 0.6);
  cfg.drop_probability = j.value("drop_probability", 0.0);
  cfg.t_auth = j.value("t_auth", 10);
  if (cfg.trips < 0 || cfg.duration_cap_s < 0) throw ConfigError("config: negative trips/duration");
  if (cfg.speed_factor <= 0.0 || cfg.speed_factor > 1.0)
    throw ConfigError("config: speed_factor must be in (0, 1]");
  if (cfg.drop_probability < 0.0 || cfg.drop_probability >= 1.0)
    throw ConfigError("config: drop_probability must be in [0, 1)");
  if (cfg.t_auth < 0) throw ConfigError("config: t_auth must be >= 0");
  for (const auto& js : j.value("scenarios", nlohmann::json::array()))
    cfg.scenarios.push_back(scenario_from_json(js));
  return cfg;
}

struct TripPoint {
  GeoPoint true_pos;
  GeoPoint fix;  // position the OBU reports (may be a junction-vicinity fix)
  double bearing_deg = 0.0;
  std::size_t route_index = 0;
};

struct Trip {
  std::uint64_t vehicle_id = 0;
  std::int64_t start_time_ms = 0;
  std::vector<std::string> route;   // traversal order; consecutive entries share a junction
  std::vector<double> speeds_mps;   // speed used during tick k -> k+1
  std::vector<TripPoint> track;     // duration_s + 1 fixes unless truncated
  bool truncated = false;           // walk hit a dead end before the duration
};

namespace detail {

struct WalkState {
  const Road* road = nullptr;
  bool forward = true;  // traversal direction relative to the polyline
  double s = 0.0;       // arc position within the road
  std::size_t route_index = 0;
};

// The junction ahead of the walker, if the road has one on that side.
inline const std::string* junction_ahead(const WalkState& w) {
  const std::string& id = w.forward ? w.road->to_junction : w.road->from_junction;
  return id.empty() ? nullptr : &id;
}

// Seeded junction-vicinity fix: a diagonal offset that falls outside every
// candidate box (so CheckPos sees a junction-only report) while staying well
// inside the detector's junction radius. Comes back empty when the map's
// geometry leaves no such gap at this junction.
inline std::optional<GeoPoint> vicinity_fix(const RoadGraph& g, const Junction& jn,
                                            SplitMix64& rng) {
  const double north_m = rng.next_double(12.0, 14.0);
  const double east_m = rng.next_double(12.0, 14.0);
  static constexpr int kSigns[4][2] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  const std::size_t first = rng.next_below(4);
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& sign = kSigns[(first + k) % 4];
    const GeoPoint fix = offset_by_meters(jn.loc, sign[0] * north_m, sign[1] * east_m);
    if (candidate_roads(g, fix).empty()) return fix;
  }
  return std::nullopt;
}

}  // namespace detail

/// Seeded random trip: a road-by-road walk through shared junctions with
/// per-second kinematics bounded by each road's allowable speed.
inline Trip generate_trip(const RoadGraph& g, std::uint64_t seed, int duration_s,
                          double speed_factor) {
  if (g.roads.empty()) throw ValidationError("cannot generate a trip on an empty graph");
  SplitMix64 rng(seed);
  Trip trip;

  std::vector<const Road*> roads;
  roads.reserve(g.roads.size());
  for (const auto& [id, r] : g.roads) roads.push_back(&r);

  detail::WalkState w;
  w.road = roads[rng.next_below(roads.size())];
  w.forward = rng.next_bool(0.5);
  const double arc = w.road->arc_length_m();
  w.s = arc > 25.0 ? rng.next_double(10.0, arc - 10.0) : arc / 2.0;
  trip.route.push_back(w.road->id);

  // One vicinity offset per junction passage: consecutive fixes inside the
  // 2 m zone must agree, or lingering would look like a jump.
  std::string vicinity_junction;
  GeoPoint vicinity_point;

  std::optional<std::pair<const Road*, const std::string*>> pending_turn;

  const auto emit = [&]() {
    TripPoint tp;
    tp.true_pos = point_along(*w.road, w.s);
    double b = bearing_along(*w.road, w.s);
    if (!w.forward) b = std::fmod(b + 180.0, 360.0);
    tp.bearing_deg = b;
    tp.route_index = w.route_index;
    tp.fix = tp.true_pos;

    const std::string* near_jid = nullptr;
    double near_d = kJunctionReportRadiusM;
    for (const std::string* side : {&w.road->from_junction, &w.road->to_junction}) {
      if (side->empty()) continue;
      const double d = haversine_m(g.junctions.at(*side).loc, tp.true_pos);
      if (d <= near_d) {
        near_d = d;
        near_jid = side;
      }
    }
    if (near_jid != nullptr) {
      if (*near_jid != vicinity_junction) {
        vicinity_junction = *near_jid;
        vicinity_point =
            detail::vicinity_fix(g, g.junctions.at(*near_jid), rng).value_or(tp.true_pos);
      }
      tp.fix = vicinity_point;
    } else {
      vicinity_junction.clear();
    }
    trip.track.push_back(tp);
  };

  emit();
  for (int tick = 0; tick < duration_s; ++tick) {
    const double sp_cur = w.road->max_speed_mps;
    // One relative speed per tick; it also scales the slower road when a
    // turn happens mid-tick, so the vehicle never enters a road flat out.
    const double rel = std::min(speed_factor * (1.0 + rng.next_double(-0.1, 0.1)), 1.0);
    double v = rel * sp_cur;

    double remaining = w.forward ? w.road->arc_length_m() - w.s : w.s;
    if (v > remaining && !pending_turn.has_value()) {
      const std::string* jid = detail::junction_ahead(w);
      if (jid == nullptr) {
        // Dead end: the walk cannot continue, the trip ends early.
        w.s = w.forward ? w.road->arc_length_m() : 0.0;
        trip.speeds_mps.push_back(std::min(v, remaining));
        emit();
        trip.truncated = true;
        break;
      }
      std::vector<const Road*> choices;
      for (const auto& rid : g.adjacency.at(*jid))
        if (rid != w.road->id) choices.push_back(&g.roads.at(rid));
      const Road* next =
          choices.empty() ? w.road : choices[rng.next_below(choices.size())];
      pending_turn = {next, jid};
    }
    if (pending_turn.has_value()) v = std::min(v, rel * pending_turn->first->max_speed_mps);

    trip.speeds_mps.push_back(v);
    while (v > 0.0) {
      remaining = w.forward ? w.road->arc_length_m() - w.s : w.s;
      if (v <= remaining) {
        w.s += w.forward ? v : -v;
        break;
      }
      if (!pending_turn.has_value()) {
        // Mid-tick arrival at a junction that was not anticipated (multiple
        // crossings in one tick); choose the continuation now.
        const std::string* jid = detail::junction_ahead(w);
        if (jid == nullptr) {
          w.s = w.forward ? w.road->arc_length_m() : 0.0;
          trip.truncated = true;
          v = 0.0;
          break;
        }
        std::vector<const Road*> choices;
        for (const auto& rid : g.adjacency.at(*jid))
          if (rid != w.road->id) choices.push_back(&g.roads.at(rid));
        pending_turn = {choices.empty() ? w.road : choices[rng.next_below(choices.size())], jid};
      }
      const auto [next, jid] = *pending_turn;
      pending_turn.reset();
      v -= remaining;
      const bool enter_forward = next->from_junction == *jid;
      if (next->id != w.road->id) {
        trip.route.push_back(next->id);
        ++w.route_index;
      }
      w.road = next;
      w.forward = enter_forward;
      w.s = enter_forward ? 0.0 : next->arc_length_m();
    }
    emit();
    if (trip.truncated) break;
  }
  return trip;
}

/// Builds the configured fleet: one trip per vehicle, ids 1..N, durations
/// seeded up to the cap (the first trip always runs the full duration).
inline std::vector<Trip> build_trips(const RoadGraph& g, const SimConfig& cfg) {
  std::vector<Trip> trips;
  for (int i = 0; i < cfg.trips; ++i) {
    const std::uint64_t trip_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
    int duration = cfg.duration_cap_s;
    if (i > 0 && cfg.duration_cap_s > 60) {
      SplitMix64 dur_rng(derive_seed(cfg.seed, 50000 + static_cast<std::uint64_t>(i)));
      duration = 60 + static_cast<int>(dur_rng.next_below(
                          static_cast<std::uint64_t>(cfg.duration_cap_s - 60 + 1)));
    }
    Trip t = generate_trip(g, trip_seed, duration, cfg.speed_factor);
    t.vehicle_id = static_cast<std::uint64_t>(i + 1);
    t.start_time_ms = 0;
    trips.push_back(std::move(t));
  }
  return trips;
}

struct TripStats {
  std::uint64_t vehicle_id = 0;
  int packets = 0;
  double max_e = 0.0;
  bool truncated = false;
};

struct ScenarioReport {
  AttackScenario scenario;
  std::optional<std::int64_t> interval_estimate_ms;
  std::int64_t first_injection_ms = -1;
  std::int64_t first_flag_ms = -1;
  // Target packets from the first injected one to the first flagged one,
  // inclusive; 1 means the very first spoofed packet was flagged.
  int detection_latency_packets = -1;
};

struct RunReport {
  std::vector<DetectionOutcome> outcomes;
  std::vector<TripStats> trip_stats;
  std::map<std::string, int> case_counts;
  std::vector<ScenarioReport> scenario_reports;
  int total_packets = 0;
  int flagged = 0;
  int false_positives = 0;
  int alerts = 0;
  int rejected = 0;  // packets refused at the door (unknown vehicle id)
};

/// Per-second event loop: emit -> intercept -> detect -> aggregate.
inline RunReport run_experiment(const RoadGraph& g, const std::vector<Trip>& trips,
                                const std::vector<AttackScenario>& scenarios,
                                const SimConfig& cfg) {
  std::map<std::uint64_t, const Trip*> by_vehicle;
  for (const auto& t : trips) {
    if (!by_vehicle.emplace(t.vehicle_id, &t).second)
      throw ConfigError("duplicate vehicle id " + std::to_string(t.vehicle_id) + " in trips");
  }
  for (const auto& sc : scenarios) {
    auto it = by_vehicle.find(sc.target_vehicle);
    if (it == by_vehicle.end())
      throw ConfigError("scenario targets unknown vehicle " +
                        std::to_string(sc.target_vehicle));
    const Trip& target = *it->second;
    const std::int64_t trip_end =
        target.start_time_ms + static_cast<std::int64_t>(target.track.size() - 1) * 1000;
    if (sc.start_time_ms < target.start_time_ms || sc.start_time_ms > trip_end)
      throw ConfigError("scenario for vehicle " + std::to_string(sc.target_vehicle) +
                        " starts outside its target's trip window");
  }

  VehicleKeyStore keys;
  for (const auto& [vid, _] : by_vehicle) keys.assign(vid, cfg.seed);
  Detector detector(g, keys, DetectorConfig{cfg.t_auth});

  std::vector<Attacker> attackers;
  attackers.reserve(scenarios.size());
  for (const auto& sc : scenarios) attackers.emplace_back(sc);

  struct VehicleSide {
    int sign_counter = 0;  // transmissions the vehicle will still sign
    SplitMix64 drop_rng{0};
  };
  std::map<std::uint64_t, VehicleSide> obu;
  for (const auto& [vid, _] : by_vehicle)
    obu[vid].drop_rng = SplitMix64(derive_seed(cfg.seed, 100000 + vid));

  struct LatencyTrack {
    bool injected = false;
    bool flagged = false;
    int packets_since_injection = 0;
  };
  std::vector<LatencyTrack> latency(scenarios.size());

  RunReport report;
  for (const auto& t : trips)
    report.trip_stats.push_back({t.vehicle_id, 0, 0.0, t.truncated});
  auto stats_of = [&](std::uint64_t vid) -> TripStats& {
    for (auto& ts : report.trip_stats)
      if (ts.vehicle_id == vid) return ts;
    throw ValidationError("no trip stats for vehicle");
  };

  const auto deliver = [&](const LocationPacket& pkt, bool touched) {
    if (!keys.contains(pkt.vehicle_id)) {
      // A mangled vehicle id does not belong to the fleet; the packet is
      // refused without touching any state.
      ++report.rejected;
      return;
    }
    const auto out = detector.process_packet(pkt);
    report.outcomes.push_back(out);
    ++report.total_packets;
    if (out.case_used != PosCase::None) ++report.case_counts[to_string(out.case_used)];
    auto& stats = stats_of(pkt.vehicle_id);
    ++stats.packets;
    if (out.e.has_value()) stats.max_e = std::max(stats.max_e, *out.e);
    if (out.flagged) {
      ++report.flagged;
      if (!touched) ++report.false_positives;
      obu[pkt.vehicle_id].sign_counter = cfg.t_auth;  // alert reaches the OBU
    }
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
      if (scenarios[s].target_vehicle != pkt.vehicle_id) continue;
      auto& lt = latency[s];
      if (!lt.injected || lt.flagged) continue;
      ++lt.packets_since_injection;
      if (out.flagged) {
        lt.flagged = true;
        auto& sr = report.scenario_reports[s];
        sr.first_flag_ms = pkt.timestamp_ms;
        sr.detection_latency_packets = lt.packets_since_injection;
      }
    }
  };

  report.scenario_reports.resize(scenarios.size());
  for (std::size_t s = 0; s < scenarios.size(); ++s)
    report.scenario_reports[s].scenario = scenarios[s];

  std::int64_t horizon_ms = 0;
  for (const auto& t : trips)
    horizon_ms = std::max(horizon_ms,
                          t.start_time_ms + static_cast<std::int64_t>(t.track.size() - 1) * 1000);
  // Allow queued replays to fire for a minute past the last trip.
  const std::int64_t drain_horizon_ms = horizon_ms + 60'000;

  for (std::int64_t now = 0; now <= drain_horizon_ms; now += 1000) {
    if (now <= horizon_ms) {
      for (const auto& [vid, trip] : by_vehicle) {
        const std::int64_t rel = now - trip->start_time_ms;
        if (rel < 0 || rel % 1000 != 0) continue;
        const std::size_t idx = static_cast<std::size_t>(rel / 1000);
        if (idx >= trip->track.size()) continue;

        auto& side = obu[vid];
        if (cfg.drop_probability > 0.0 && side.drop_rng.next_bool(cfg.drop_probability)) {
          if (side.sign_counter > 0) --side.sign_counter;  // the OBU did transmit
          continue;
        }

        const TripPoint& tp = trip->track[idx];
        LocationPacket pkt{vid, tp.fix.lat, tp.fix.lon, tp.bearing_deg, now, std::nullopt};
        if (side.sign_counter > 0) {
          pkt = sign(pkt, keys.get(vid));
          --side.sign_counter;
        }

        std::vector<LocationPacket> in_flight{pkt};
        std::vector<bool> touched{false};
        for (std::size_t s = 0; s < attackers.size(); ++s) {
          std::vector<LocationPacket> next;
          std::vector<bool> next_touched;
          for (std::size_t i = 0; i < in_flight.size(); ++i) {
            for (const auto& outp : attackers[s].intercept(in_flight[i], now)) {
              const bool altered = !(outp == in_flight[i]);
              if (altered && !latency[s].injected) {
                latency[s].injected = true;
                report.scenario_reports[s].first_injection_ms = now;
              }
              next.push_back(outp);
              next_touched.push_back(touched[i] || altered);
            }
          }
          in_flight = std::move(next);
          touched = std::move(next_touched);
        }
        for (std::size_t i = 0; i < in_flight.size(); ++i) deliver(in_flight[i], touched[i]);
      }
    }
    // Replayed copies fire after the genuine traffic of the tick.
    for (std::size_t s = 0; s < attackers.size(); ++s) {
      for (const auto& replayed : attackers[s].drain_due(now)) {
        if (!latency[s].injected) {
          latency[s].injected = true;
          report.scenario_reports[s].first_injection_ms = now;
        }
        deliver(replayed, true);
      }
    }
  }

  for (std::size_t s = 0; s < scenarios.size(); ++s)
    report.scenario_reports[s].interval_estimate_ms = attackers[s].interval_estimate_ms();
  report.alerts = static_cast<int>(detector.alerts().size());
  return report;
}

// ---- Report rendering ----

inline void write_outcomes_csv(const RunReport& report, std::ostream& os) {
  os << outcome_csv_header() << '\n';
  for (const auto& o : report.outcomes) os << outcome_csv_row(o) << '\n';
}

inline void write_outcomes_jsonl(const RunReport& report, std::ostream& os) {
  for (const auto& o : report.outcomes) os << outcome_to_json(o).dump() << '\n';
}

inline nlohmann::ordered_json report_summary_json(const RunReport& report, const SimConfig& cfg) {
  nlohmann::ordered_json j;
  j["config"] = {{"map", cfg.map_path},
                 {"trips", cfg.trips},
                 {"duration_s", cfg.duration_cap_s},
                 {"seed", cfg.seed},
                 {"speed_factor", cfg.speed_factor},
                 {"drop_probability", cfg.drop_probability},
                 {"t_auth", cfg.t_auth}};
  j["totals"] = {{"packets", report.total_packets},
                 {"flagged", report.flagged},
                 {"false_positives", report.false_positives},
                 {"alerts", report.alerts},
                 {"rejected", report.rejected}};
  j["case_counts"] = report.case_counts;

  auto trips = nlohmann::ordered_json::array();
  for (const auto& ts : report.trip_stats)
    trips.push_back({{"vehicle_id", ts.vehicle_id},
                     {"packets", ts.packets},
                     {"max_e", ts.max_e},
                     {"truncated", ts.truncated}});
  j["trips"] = std::move(trips);

  auto scenarios = nlohmann::ordered_json::array();
  for (const auto& sr : report.scenario_reports) {
    nlohmann::ordered_json js;
    js["scenario"] = scenario_to_json(sr.scenario);
    js["interval_estimate_ms"] = sr.interval_estimate_ms.has_value()
                                     ? nlohmann::ordered_json(*sr.interval_estimate_ms)
                                     : nlohmann::ordered_json(nullptr);
    js["first_injection_ms"] = sr.first_injection_ms;
    js["first_flag_ms"] = sr.first_flag_ms;
    js["detection_latency_packets"] = sr.detection_latency_packets;
    scenarios.push_back(std::move(js));
  }
  j["scenarios"] = std::move(scenarios);
  return j;
}

}  // namespace roadguard
