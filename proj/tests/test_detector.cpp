#include <gtest/gtest.h>

#include <cmath>
#include <thread>

#include "roadguard/detector.hpp"
#include "roadguard/rng.hpp"
#include "test_maps.hpp"

namespace {

using namespace roadguard;
using testfix::MapBuilder;

LocationPacket make_packet(std::uint64_t id, GeoPoint p, std::int64_t ts_ms) {
  return {id, p.lat, p.lon, 0.0, ts_ms, std::nullopt};
}

// Diagonal offset that leaves the corner fixture's road boxes: both axis
// components exceed the 0.0001 deg candidate margin (~11.1 m).
GeoPoint junction_vicinity(const GeoPoint& j, double north_m = 13.0, double east_m = 13.0) {
  return offset_by_meters(j, north_m, east_m);
}

class CheckPosCorner : public ::testing::Test {
 protected:
  CheckPosCorner() : graph_(testfix::two_road_corner().build()) {}
  RoadGraph graph_;
  DetectorConfig cfg_;
};

TEST_F(CheckPosCorner, Case1SameRoadDistanceBetweenSamples) {
  const auto& road = graph_.roads.at("A");
  VehicleState st{road.samples[10].pt, "A", 0, 0};
  const auto res = check_pos(graph_, st, road.samples[23].pt, cfg_);
  ASSERT_TRUE(res.valid);
  EXPECT_EQ(res.case_used, PosCase::SameRoad);
  EXPECT_EQ(res.matched_road, "A");
  EXPECT_NEAR(res.d, 13.0, 0.1);
  // Oracle: brute-force scan for both matched samples, then one haversine.
  EXPECT_NEAR(res.d, haversine_m(road.samples[10].pt, road.samples[23].pt), 1e-9);
}

TEST_F(CheckPosCorner, Case2AdjacentRoadsSumThroughJunction) {
  const auto& a = graph_.roads.at("A");
  const auto& b = graph_.roads.at("B");
  const GeoPoint j1 = graph_.junctions.at("J1").loc;
  const GeoPoint prv = point_along(a, 95.0);  // 5 m from J1
  const GeoPoint cur = point_along(b, 7.0);   // 7 m past J1

  VehicleState st{prv, "A", 0, 0};
  const auto res = check_pos(graph_, st, cur, cfg_);
  ASSERT_TRUE(res.valid);
  EXPECT_EQ(res.case_used, PosCase::AdjacentRoads);
  EXPECT_EQ(res.matched_road, "B");
  EXPECT_EQ(res.via_junction, "J1");
  EXPECT_NEAR(res.d, 12.0, 0.1);

  // Independent oracle on the fixture: distances of the nearest samples
  // through the shared junction.
  const auto [m2, d2] = nearest_sample(a, prv);
  const auto [m1, d1] = nearest_sample(b, cur);
  EXPECT_NEAR(res.d, haversine_m(a.samples[m2].pt, j1) + haversine_m(b.samples[m1].pt, j1), 1e-9);
}

TEST_F(CheckPosCorner, Case3FromJunction) {
  const GeoPoint j1 = graph_.junctions.at("J1").loc;
  VehicleState st{junction_vicinity(j1), std::nullopt, 0, 0};
  const GeoPoint cur = point_along(graph_.roads.at("B"), 7.0);
  const auto res = check_pos(graph_, st, cur, cfg_);
  ASSERT_TRUE(res.valid);
  EXPECT_EQ(res.case_used, PosCase::FromJunction);
  EXPECT_EQ(res.matched_road, "B");
  EXPECT_EQ(res.via_junction, "J1");
  EXPECT_NEAR(res.d, 7.0, 0.6);
}

TEST_F(CheckPosCorner, Case4ToJunction) {
  const auto& a = graph_.roads.at("A");
  const GeoPoint j1 = graph_.junctions.at("J1").loc;
  VehicleState st{point_along(a, 95.0), "A", 0, 0};
  const GeoPoint cur = junction_vicinity(j1);  // off every road box
  ASSERT_TRUE(candidate_roads(graph_, cur).empty());

  const auto res = check_pos(graph_, st, cur, cfg_);
  ASSERT_TRUE(res.valid);
  EXPECT_EQ(res.case_used, PosCase::ToJunction);
  EXPECT_FALSE(res.matched_road.has_value());
  EXPECT_EQ(res.via_junction, "J1");
  EXPECT_NEAR(res.d, 5.0, 0.6);
}

TEST_F(CheckPosCorner, JunctionBeyondRadiusIsInvalid) {
  // Case 3 with the previous "junction" fix 40+ m away from any junction.
  const GeoPoint j1 = graph_.junctions.at("J1").loc;
  VehicleState st{offset_by_meters(j1, 30.0, 30.0), std::nullopt, 0, 0};
  const auto res = check_pos(graph_, st, point_along(graph_.roads.at("B"), 7.0), cfg_);
  EXPECT_FALSE(res.valid);
  EXPECT_EQ(res.case_used, PosCase::Invalid);
}

TEST_F(CheckPosCorner, OffMapIsInvalid) {
  VehicleState st{point_along(graph_.roads.at("A"), 50.0), "A", 0, 0};
  const auto res = check_pos(graph_, st, offset_by_meters(st.prv, 10000.0, 10000.0), cfg_);
  EXPECT_FALSE(res.valid);
}

TEST_F(CheckPosCorner, NonAdjacentRoadsAreInvalid) {
  // Roads A and C do not share a junction in this extended fixture.
  MapBuilder mb = testfix::two_road_corner();
  const GeoPoint j2 = graph_.junctions.at("J2").loc;
  const GeoPoint j3 = testfix::east_of(j2, 90.0);
  const GeoPoint j4 = testfix::east_of(j3, 70.0);
  mb.junction("J3", j3).junction("J4", j4);
  mb.road("C", "J3", "J4", {j3, j4}, 13.9);
  const auto g = mb.build();

  VehicleState st{point_along(g.roads.at("A"), 50.0), "A", 0, 0};
  const auto res = check_pos(g, st, point_along(g.roads.at("C"), 35.0), DetectorConfig{});
  EXPECT_FALSE(res.valid);
  EXPECT_EQ(res.case_used, PosCase::Invalid);
}

TEST_F(CheckPosCorner, BothAtJunctionLingering) {
  const GeoPoint j1 = graph_.junctions.at("J1").loc;
  const GeoPoint first = junction_vicinity(j1, 13.0, 13.0);
  const GeoPoint second = junction_vicinity(j1, 12.0, 14.5);
  VehicleState st{first, std::nullopt, 0, 0};
  ASSERT_TRUE(candidate_roads(graph_, second).empty());

  const auto res = check_pos(graph_, st, second, cfg_);
  ASSERT_TRUE(res.valid);
  EXPECT_EQ(res.case_used, PosCase::ToJunction);
  EXPECT_NEAR(res.d, haversine_m(first, second), 1e-9);

  // Far junction-only fixes do not match anything.
  VehicleState far{offset_by_meters(j1, 500.0, 500.0), std::nullopt, 0, 0};
  EXPECT_FALSE(check_pos(graph_, far, offset_by_meters(j1, 520.0, 520.0), cfg_).valid);
}

TEST(MaxDist, SpeedChoicePerCase) {
  MapBuilder mb = testfix::two_road_corner();
  mb.doc()["roads"][1]["max_speed_mps"] = 25.0;  // B faster than A
  const auto g = mb.build();

  VehicleState on_a{point_along(g.roads.at("A"), 95.0), "A", 0, 0};

  // Same road, sp = 13.9, dt = 1 s.
  auto res = check_pos(g, on_a, point_along(g.roads.at("A"), 90.0));
  ASSERT_TRUE(res.valid);
  EXPECT_NEAR(max_dist(g, res, on_a, 1.0), 13.9, 1e-9);

  // dt scales linearly: a 10 m/s road over 2 s allows 20 m.
  MapBuilder slow = testfix::two_road_corner();
  slow.doc()["roads"][0]["max_speed_mps"] = 10.0;
  const auto gs = slow.build();
  VehicleState st10{point_along(gs.roads.at("A"), 40.0), "A", 0, 0};
  auto res10 = check_pos(gs, st10, point_along(gs.roads.at("A"), 50.0));
  ASSERT_TRUE(res10.valid);
  EXPECT_NEAR(max_dist(gs, res10, st10, 2.0), 20.0, 1e-9);

  // Adjacent roads: the faster of the two wins.
  res = check_pos(g, on_a, point_along(g.roads.at("B"), 7.0));
  ASSERT_EQ(res.case_used, PosCase::AdjacentRoads);
  EXPECT_NEAR(max_dist(g, res, on_a, 1.0), 25.0, 1e-9);

  // From-junction: only the concrete (current) road is involved.
  VehicleState at_j{junction_vicinity(g.junctions.at("J1").loc), std::nullopt, 0, 0};
  res = check_pos(g, at_j, point_along(g.roads.at("B"), 7.0));
  ASSERT_EQ(res.case_used, PosCase::FromJunction);
  EXPECT_NEAR(max_dist(g, res, at_j, 1.0), 25.0, 1e-9);

  // To-junction: only the previous road is involved.
  res = check_pos(g, on_a, junction_vicinity(g.junctions.at("J1").loc));
  ASSERT_EQ(res.case_used, PosCase::ToJunction);
  EXPECT_NEAR(max_dist(g, res, on_a, 1.0), 13.9, 1e-9);
}

class DetectorFlow : public ::testing::Test {
 protected:
  DetectorFlow() : graph_(testfix::two_road_corner().build()) {
    keys_.assign(kVid, 42);
    detector_ = std::make_unique<Detector>(graph_, keys_, DetectorConfig{});
  }

  LocationPacket at(double s_along_a, std::int64_t ts) {
    return make_packet(kVid, point_along(graph_.roads.at("A"), s_along_a), ts);
  }

  LocationPacket signed_at(double s_along_a, std::int64_t ts) {
    return sign(at(s_along_a, ts), keys_.get(kVid));
  }

  static constexpr std::uint64_t kVid = 7;
  RoadGraph graph_;
  VehicleKeyStore keys_;
  std::unique_ptr<Detector> detector_;
};

TEST_F(DetectorFlow, UnknownVehicleIsAnError) {
  EXPECT_THROW(detector_->process_packet(make_packet(999, {1.3, 103.8}, 0)), ValidationError);
}

TEST_F(DetectorFlow, FirstPacketSeedsWithoutDetection) {
  const auto out = detector_->process_packet(at(30.0, 1000));
  EXPECT_EQ(out.case_used, PosCase::Seed);
  EXPECT_FALSE(out.flagged);
  EXPECT_FALSE(out.e.has_value());
  const auto* st = detector_->state_of(kVid);
  ASSERT_NE(st, nullptr);
  EXPECT_EQ(st->road, "A");
  EXPECT_EQ(st->t_prv, 1000);
}

TEST_F(DetectorFlow, GenuineMotionYieldsSmallE) {
  detector_->process_packet(at(30.0, 1000));
  const auto out = detector_->process_packet(at(39.0, 2000));  // 9 m in 1 s, sp 13.9
  ASSERT_TRUE(out.e.has_value());
  EXPECT_FALSE(out.flagged);
  EXPECT_EQ(out.case_used, PosCase::SameRoad);
  EXPECT_NEAR(*out.e, 9.0 / 13.9, 0.08);
  EXPECT_NEAR(*out.max_dist, 13.9, 1e-9);
}

TEST_F(DetectorFlow, Example1SpoofFlagsAndArmsWindow) {
  detector_->process_packet(at(30.0, 1000));
  auto spoof = at(39.0, 2000);
  spoof.lon -= 4.0;  // the Example-1 style longitude alteration, ~445 km
  const auto out = detector_->process_packet(spoof);
  EXPECT_TRUE(out.flagged);
  EXPECT_EQ(out.reason, FlagReason::InvalidLocation);
  EXPECT_EQ(out.auth_remaining, 10);
  ASSERT_EQ(detector_->alerts().size(), 1u);
  EXPECT_EQ(detector_->alerts()[0].vehicle_id, kVid);
}

TEST_F(DetectorFlow, FlaggedPacketNeverUpdatesState) {
  detector_->process_packet(at(30.0, 1000));
  const auto before = *detector_->state_of(kVid);
  auto spoof = at(39.0, 2000);
  spoof.lon -= 4.0;
  detector_->process_packet(spoof);
  const auto after = *detector_->state_of(kVid);
  EXPECT_EQ(before.prv, after.prv);
  EXPECT_EQ(before.road, after.road);
  EXPECT_EQ(before.t_prv, after.t_prv);
  EXPECT_EQ(after.auth_remaining, 10);  // only the window was armed
}

TEST_F(DetectorFlow, ReplayedTimestampFlags) {
  detector_->process_packet(at(30.0, 1000));
  detector_->process_packet(at(35.0, 2000));
  const auto out = detector_->process_packet(at(36.0, 2000));  // not increasing
  EXPECT_TRUE(out.flagged);
  EXPECT_EQ(out.reason, FlagReason::Replay);
  // The flag armed the window, so a replayed packet must now be signed to
  // even reach the replay rule.
  const auto older = detector_->process_packet(signed_at(36.0, 1500));
  EXPECT_EQ(older.reason, FlagReason::Replay);
}

TEST_F(DetectorFlow, AuthWindowLifecycle) {
  detector_->process_packet(at(10.0, 0));
  auto spoof = at(15.0, 1000);
  spoof.lat += 0.01;
  ASSERT_TRUE(detector_->process_packet(spoof).flagged);
  ASSERT_EQ(detector_->state_of(kVid)->auth_remaining, 10);

  // Exactly 10 verified packets close the window (5 m/s motion).
  for (int k = 1; k <= 10; ++k) {
    const auto out = detector_->process_packet(signed_at(10.0 + 5.0 * k, k * 1000 + 1000));
    EXPECT_FALSE(out.flagged) << k;
    EXPECT_EQ(out.auth_remaining, 10 - k);
  }
  // The 11th packet may be unsigned again.
  const auto out = detector_->process_packet(at(70.0, 12000));
  EXPECT_FALSE(out.flagged);
  EXPECT_EQ(out.auth_remaining, 0);
}

TEST_F(DetectorFlow, UnsignedPacketInsideWindowFlagsAndRearms) {
  detector_->process_packet(at(10.0, 0));
  auto spoof = at(15.0, 1000);
  spoof.lat += 0.01;
  detector_->process_packet(spoof);

  detector_->process_packet(signed_at(15.0, 2000));
  detector_->process_packet(signed_at(20.0, 3000));
  ASSERT_EQ(detector_->state_of(kVid)->auth_remaining, 8);

  const auto out = detector_->process_packet(at(25.0, 4000));  // unsigned inside window
  EXPECT_TRUE(out.flagged);
  EXPECT_EQ(out.reason, FlagReason::AuthFailure);
  EXPECT_EQ(out.auth_remaining, 10);  // re-armed
  // And the unsigned packet did not move the reference point.
  EXPECT_EQ(detector_->state_of(kVid)->t_prv, 3000);
}

TEST_F(DetectorFlow, TamperedTagInsideWindowFlags) {
  detector_->process_packet(at(10.0, 0));
  auto spoof = at(15.0, 1000);
  spoof.lat += 0.01;
  detector_->process_packet(spoof);

  auto tampered = signed_at(15.0, 2000);
  (*tampered.auth_tag)[0] ^= 0x01;
  const auto out = detector_->process_packet(tampered);
  EXPECT_TRUE(out.flagged);
  EXPECT_EQ(out.reason, FlagReason::AuthFailure);
}

TEST_F(DetectorFlow, BadTagOutsideWindowIsTampering) {
  detector_->process_packet(at(10.0, 0));

  // A valid unsolicited tag is accepted; no window is open to decrement.
  const auto ok = detector_->process_packet(signed_at(15.0, 1000));
  EXPECT_FALSE(ok.flagged);
  EXPECT_EQ(ok.auth_remaining, 0);

  auto p = signed_at(20.0, 2000);
  (*p.auth_tag)[0] ^= 0x01;
  const auto out = detector_->process_packet(p);
  EXPECT_TRUE(out.flagged);
  EXPECT_EQ(out.reason, FlagReason::AuthFailure);
  EXPECT_EQ(out.auth_remaining, 10);

  // The window opened by the tamper flag then consumes valid tags normally.
  const auto next = detector_->process_packet(signed_at(20.0, 3000));
  EXPECT_FALSE(next.flagged);
  EXPECT_EQ(next.auth_remaining, 9);
}

TEST_F(DetectorFlow, EExceedsOnSameRoadJump) {
  detector_->process_packet(at(10.0, 0));
  const auto out = detector_->process_packet(at(40.0, 1000));  // 30 m in 1 s on a 13.9 road
  EXPECT_TRUE(out.flagged);
  EXPECT_EQ(out.reason, FlagReason::EExceeds);
  ASSERT_TRUE(out.e.has_value());
  EXPECT_GT(*out.e, 1.0);
  EXPECT_EQ(out.case_used, PosCase::SameRoad);
}

// Sensitivity property: a packet whose displacement from the previous
// validated position exceeds sp*·dt + 2 m, while still lying on some road,
// is always flagged (sp* = fastest road involved in the matched case).
TEST(DetectorProperty, SensitivityToDisplacedPackets) {
  const auto g = load_roadmap(testfix::grid_map_path());
  VehicleKeyStore keys;
  keys.assign(1, 7);
  SplitMix64 rng(555);

  std::vector<std::string> road_ids;
  for (const auto& [id, r] : g.roads) road_ids.push_back(id);

  int flagged_checked = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const Road& r1 = g.roads.at(road_ids[rng.next_below(road_ids.size())]);
    const Road& r2 = g.roads.at(road_ids[rng.next_below(road_ids.size())]);
    const GeoPoint prv = point_along(r1, rng.next_double(2.0, r1.length_m - 2.0));
    const GeoPoint spoof = point_along(r2, rng.next_double(2.0, r2.length_m - 2.0));

    VehicleState st{prv, r1.id, 0, 0};
    const auto res = check_pos(g, st, spoof, DetectorConfig{});
    if (!res.valid) continue;  // invalid always flags; nothing more to check

    double sp = 0.0;
    if (res.matched_road) sp = g.roads.at(*res.matched_road).max_speed_mps;
    sp = std::max(sp, r1.max_speed_mps);
    const double dt = 1.0;
    if (haversine_m(prv, spoof) <= sp * dt + 2.0) continue;

    const double md = max_dist(g, res, st, dt);
    EXPECT_GT(res.d / md, 1.0) << "undetected jump of " << haversine_m(prv, spoof) << " m";
    ++flagged_checked;
  }
  EXPECT_GT(flagged_checked, 100);
}

// Different vehicles may be processed from different threads; outcomes must
// equal a sequential run.
TEST(DetectorConcurrency, PerVehicleStreamsAreIndependent) {
  const auto g = load_roadmap(testfix::grid_map_path());
  VehicleKeyStore keys;
  keys.assign(1, 7);
  keys.assign(2, 7);

  const auto& road_a = g.roads.at("H00");
  const auto& road_b = g.roads.at("H40");
  auto run_vehicle = [&](Detector& d, std::uint64_t vid, const Road& road,
                         std::vector<DetectionOutcome>& out) {
    for (int k = 0; k < 100; ++k)
      out.push_back(d.process_packet(make_packet(vid, point_along(road, 5.0 + k), k * 1000)));
  };

  Detector seq(g, keys, {});
  std::vector<DetectionOutcome> seq1, seq2;
  run_vehicle(seq, 1, road_a, seq1);
  run_vehicle(seq, 2, road_b, seq2);

  Detector par(g, keys, {});
  std::vector<DetectionOutcome> par1, par2;
  std::thread t1([&] { run_vehicle(par, 1, road_a, par1); });
  std::thread t2([&] { run_vehicle(par, 2, road_b, par2); });
  t1.join();
  t2.join();

  ASSERT_EQ(seq1.size(), par1.size());
  for (std::size_t i = 0; i < seq1.size(); ++i) {
    EXPECT_EQ(seq1[i].flagged, par1[i].flagged);
    EXPECT_EQ(seq1[i].e, par1[i].e);
    EXPECT_EQ(seq2[i].flagged, par2[i].flagged);
    EXPECT_EQ(seq2[i].e, par2[i].e);
  }
}

TEST(OutcomeRendering, CsvAndJsonRows) {
  DetectionOutcome o;
  o.vehicle_id = 3;
  o.timestamp_ms = 12000;
  o.case_used = PosCase::SameRoad;
  o.d = 9.25;
  o.max_dist = 13.9;
  o.e = 9.25 / 13.9;
  o.auth_remaining = 2;
  EXPECT_EQ(outcome_csv_row(o), "3,12000,same_road,9.250000,13.900000,0.665468,false,,2");

  DetectionOutcome inv;
  inv.vehicle_id = 4;
  inv.timestamp_ms = 5000;
  inv.case_used = PosCase::Invalid;
  inv.flagged = true;
  inv.reason = FlagReason::InvalidLocation;
  inv.auth_remaining = 10;
  EXPECT_EQ(outcome_csv_row(inv), "4,5000,invalid,,,,true,invalid_location,10");

  const auto j = outcome_to_json(inv);
  EXPECT_TRUE(j["e_value"].is_null());
  EXPECT_EQ(j["reason"], "invalid_location");

  // No position check runs for replay/auth flags; the case column is empty.
  DetectionOutcome rep;
  rep.vehicle_id = 4;
  rep.timestamp_ms = 65000;
  rep.flagged = true;
  rep.reason = FlagReason::Replay;
  rep.auth_remaining = 10;
  EXPECT_EQ(outcome_csv_row(rep), "4,65000,,,,,true,replay,10");
}

}  // namespace
